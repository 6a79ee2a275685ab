//! Deterministic exploration/exploitation block schedule shared by both agents.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kind of the current block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Explore,
    Exploit,
}

/// The exploration constant as a function of time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleRepr", into = "ScheduleRepr")]
pub enum ExplorationSchedule {
    Constant(f64),
    /// `ceil(ln(1 + t))`.
    Log,
    /// `ceil(t^0.1)`.
    Power,
}

impl ExplorationSchedule {
    pub fn at(&self, t: u64) -> f64 {
        match *self {
            Self::Constant(l) => l,
            Self::Log => (1.0 + t as f64).ln().ceil(),
            Self::Power => (t as f64).powf(0.1).ceil(),
        }
    }

    pub fn constant(&self) -> Option<f64> {
        match *self {
            Self::Constant(l) => Some(l),
            _ => None,
        }
    }
}

impl fmt::Display for ExplorationSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(l) => write!(f, "{l}"),
            Self::Log => f.write_str("log"),
            Self::Power => f.write_str("power"),
        }
    }
}

impl FromStr for ExplorationSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "log" => Ok(Self::Log),
            "power" => Ok(Self::Power),
            other => {
                let l: f64 = other
                    .parse()
                    .map_err(|_| Error::InvalidParameter(format!("exploration schedule {other:?} is not a number, log or power")))?;
                if !(l > 0.0 && l.is_finite()) {
                    return Err(Error::InvalidParameter(format!("exploration constant must be positive, got {l}")));
                }
                Ok(Self::Constant(l))
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ScheduleRepr {
    Number(f64),
    Name(String),
}

impl TryFrom<ScheduleRepr> for ExplorationSchedule {
    type Error = Error;

    fn try_from(r: ScheduleRepr) -> Result<Self> {
        match r {
            ScheduleRepr::Number(l) => l.to_string().parse(),
            ScheduleRepr::Name(s) => s.parse(),
        }
    }
}

impl From<ExplorationSchedule> for ScheduleRepr {
    fn from(s: ExplorationSchedule) -> Self {
        match s {
            ExplorationSchedule::Constant(l) => Self::Number(l),
            other => Self::Name(other.to_string()),
        }
    }
}

/// Block growth parameters: exploitation block `l` lasts `a b^(l-1)` slots,
/// exploration block `l` holds each plan entry for `c^(l-1)` slots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockParams {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub schedule: ExplorationSchedule,
}

impl BlockParams {
    pub fn validate(&self) -> Result<()> {
        if self.a < 2 || self.b < 2 || self.c < 2 {
            return Err(Error::InvalidParameter(format!(
                "block parameters must be at least 2, got a={} b={} c={}",
                self.a, self.b, self.c
            )));
        }
        Ok(())
    }
}

/// One user's block state machine. Schedules of different users never depend
/// on rewards, so users built from the same parameters stay in lockstep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockScheduler {
    params: BlockParams,
    plan_len: u64,
    phase: Phase,
    at_boundary: bool,
    l_o: u32,
    l_i: u32,
    x_o: u64,
    eta: u64,
    len: u64,
    hold: u64,
}

/// The fields that must agree across users at every slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyncKey {
    pub phase: Phase,
    pub l_o: u32,
    pub l_i: u32,
    pub eta: u64,
}

impl BlockScheduler {
    pub fn new(params: BlockParams, plan_len: usize) -> Result<Self> {
        params.validate()?;
        if plan_len == 0 {
            return Err(Error::InvalidParameter("exploration plan is empty".into()));
        }
        Ok(Self {
            params,
            plan_len: plan_len as u64,
            phase: Phase::Explore,
            at_boundary: true,
            l_o: 0,
            l_i: 0,
            x_o: 0,
            eta: 0,
            len: 0,
            hold: 0,
        })
    }

    pub fn params(&self) -> &BlockParams {
        &self.params
    }

    pub fn at_boundary(&self) -> bool {
        self.at_boundary
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Completed plus current exploration blocks.
    pub fn exploration_blocks(&self) -> u32 {
        self.l_o
    }

    /// Completed plus current exploitation blocks.
    pub fn exploitation_blocks(&self) -> u32 {
        self.l_i
    }

    /// `sum c^(l-1)` over completed exploration blocks: how many times each
    /// plan slot has been observed.
    pub fn explored(&self) -> u64 {
        self.x_o
    }

    /// Slot index within the current block.
    pub fn eta(&self) -> u64 {
        self.eta
    }

    pub fn block_len(&self) -> u64 {
        self.len
    }

    /// Plan position of the current exploration slot.
    pub fn plan_position(&self) -> usize {
        (self.eta / self.hold) as usize
    }

    pub fn sync_key(&self) -> SyncKey {
        SyncKey {
            phase: self.phase,
            l_o: self.l_o,
            l_i: self.l_i,
            eta: self.eta,
        }
    }

    /// Starts the block beginning at slot `t` (1-based). The first block always
    /// explores; later blocks exploit iff `X_O >= L(t) ln t`.
    pub fn decide_phase(&mut self, t: u64) -> Result<Phase> {
        if !self.at_boundary {
            return Err(Error::Schedule(format!(
                "decide_phase called mid-block at t={t} (slot {} of {})",
                self.eta, self.len
            )));
        }
        let threshold = self.params.schedule.at(t) * (t as f64).ln();
        let exploit = self.x_o > 0 && self.x_o as f64 >= threshold;
        if exploit {
            self.l_i += 1;
            self.phase = Phase::Exploit;
            self.len = self.params.a.saturating_mul(pow(self.params.b, self.l_i - 1));
            self.hold = 1;
        } else {
            self.l_o += 1;
            self.phase = Phase::Explore;
            self.hold = pow(self.params.c, self.l_o - 1);
            self.len = self.plan_len.saturating_mul(self.hold);
        }
        self.eta = 0;
        self.at_boundary = false;
        Ok(self.phase)
    }

    /// Ends the current slot.
    pub fn advance(&mut self) -> Result<()> {
        if self.at_boundary {
            return Err(Error::Schedule("advance called before the block started".into()));
        }
        self.eta += 1;
        if self.eta == self.len {
            if self.phase == Phase::Explore {
                self.x_o += self.hold;
            }
            self.at_boundary = true;
        }
        Ok(())
    }
}

fn pow(base: u64, exp: u32) -> u64 {
    base.checked_pow(exp).unwrap_or(u64::MAX)
}
