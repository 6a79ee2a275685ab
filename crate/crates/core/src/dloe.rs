//! Decentralized learning with occupancy estimation for user-independent rewards.
//!
//! Each user explores along its plan sequence, keeps sample means of every
//! resource-usage pair, and at each exploitation block computes the optimal
//! allocation from its own estimates. Users then settle by randomizing away
//! from resources that are more congested than the estimated optimum allows.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::allocation::{optimal_symmetric, AllocationCount};
use crate::error::{Error, Result};
use crate::estimator::EstimatorBank;
use crate::markov::sample_categorical;
use crate::plan::ExplorationPlan;
use crate::schedule::{BlockParams, BlockScheduler, Phase};

/// Which slots feed the estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdatePolicy {
    #[default]
    AllBlocks,
    ExplorationOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DloeConfig {
    pub blocks: BlockParams,
    #[serde(default)]
    pub update: UpdatePolicy,
}

/// Something an agent did that the cost ledger or trace cares about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EventKind {
    ExplorationStart { block: u32 },
    ExploitationStart { block: u32 },
    Computation,
    Communication,
    Setup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentEvent {
    pub t: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// The estimated optimum and the resources it uses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExploitTarget {
    pub n_hat: AllocationCount,
    pub support: Vec<usize>,
}

impl ExploitTarget {
    pub fn new(n_hat: AllocationCount) -> Self {
        let support = n_hat.support();
        Self { n_hat, support }
    }

    pub fn contains(&self, k: usize) -> bool {
        self.n_hat.counts()[k] > 0
    }
}

/// Draws resource `k` with probability `n_hat[k] / M`.
pub fn settle_draw<R: Rng + ?Sized>(n_hat: &AllocationCount, rng: &mut R) -> usize {
    let users = n_hat.users() as f64;
    let weights: Vec<f64> = n_hat.counts().iter().map(|&n| n as f64 / users).collect();
    sample_categorical(&weights, rng)
}

/// One exploitation slot: stay unless the last slot showed the current
/// resource outside the target or more crowded than the target allows.
pub fn exploit_choice<R: Rng + ?Sized>(
    current: Option<usize>,
    last_congestion: Option<usize>,
    target: &ExploitTarget,
    rng: &mut R,
) -> usize {
    match current {
        Some(k) if target.contains(k) && last_congestion.is_none_or(|n| n <= target.n_hat.counts()[k]) => k,
        _ => settle_draw(&target.n_hat, rng),
    }
}

/// One user's state machine.
#[derive(Debug, Clone)]
pub struct DloeAgent {
    id: usize,
    users: usize,
    config: DloeConfig,
    plan: Arc<ExplorationPlan>,
    scheduler: BlockScheduler,
    estimates: EstimatorBank<f64>,
    target: Option<ExploitTarget>,
    current: Option<usize>,
    last_congestion: Option<usize>,
    events: Vec<AgentEvent>,
}

impl DloeAgent {
    pub fn new(id: usize, config: DloeConfig, plan: Arc<ExplorationPlan>) -> Result<Self> {
        let users = plan.users();
        if id >= users {
            return Err(Error::InvalidParameter(format!("user {id} outside plan with {users} users")));
        }
        Ok(Self {
            id,
            users,
            config,
            scheduler: BlockScheduler::new(config.blocks, plan.len())?,
            estimates: EstimatorBank::new(plan.resources, users),
            plan,
            target: None,
            current: None,
            last_congestion: None,
            events: Vec::new(),
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn scheduler(&self) -> &BlockScheduler {
        &self.scheduler
    }

    pub fn estimates(&self) -> &EstimatorBank<f64> {
        &self.estimates
    }

    pub fn target(&self) -> Option<&ExploitTarget> {
        self.target.as_ref()
    }

    pub fn events(&self) -> &[AgentEvent] {
        &self.events
    }

    pub fn take_events(&mut self) -> Vec<AgentEvent> {
        std::mem::take(&mut self.events)
    }

    /// Resource chosen for slot `t` (1-based).
    pub fn act<R: Rng + ?Sized>(&mut self, t: u64, rng: &mut R) -> Result<usize> {
        let starting = self.scheduler.at_boundary();
        if starting {
            match self.scheduler.decide_phase(t)? {
                Phase::Explore => self.events.push(AgentEvent {
                    t,
                    kind: EventKind::ExplorationStart {
                        block: self.scheduler.exploration_blocks(),
                    },
                }),
                Phase::Exploit => {
                    self.events.push(AgentEvent {
                        t,
                        kind: EventKind::ExploitationStart {
                            block: self.scheduler.exploitation_blocks(),
                        },
                    });
                    self.refresh_target(t)?;
                }
            }
        }
        let choice = match self.scheduler.phase() {
            Phase::Explore => self.plan.resource(self.id, self.scheduler.plan_position()),
            Phase::Exploit => {
                let target = self.target.as_ref().expect("target set at block start");
                let congestion = if starting { None } else { self.last_congestion };
                exploit_choice(self.current, congestion, target, rng)
            }
        };
        self.current = Some(choice);
        Ok(choice)
    }

    /// Recomputes the estimated optimum from the sample means.
    pub fn refresh_target(&mut self, t: u64) -> Result<&ExploitTarget> {
        let report = optimal_symmetric(&self.estimates.to_table())?;
        self.events.push(AgentEvent {
            t,
            kind: EventKind::Computation,
        });
        self.target = Some(ExploitTarget::new(report.preferred().clone()));
        Ok(self.target.as_ref().expect("just set"))
    }

    /// Feedback for the slot just played.
    pub fn observe(&mut self, reward: f64, congestion: usize) -> Result<()> {
        let k = self
            .current
            .ok_or_else(|| Error::Protocol("observe called before act".into()))?;
        if congestion == 0 || congestion > self.users {
            return Err(Error::CongestionOutOfRange {
                n: congestion,
                max: self.users,
            });
        }
        let learn = match self.config.update {
            UpdatePolicy::AllBlocks => true,
            UpdatePolicy::ExplorationOnly => self.scheduler.phase() == Phase::Explore,
        };
        if learn {
            self.estimates.observe(k, congestion, reward)?;
        } else if !(0.0..=1.0).contains(&reward) {
            return Err(Error::RewardOutOfRange(reward));
        }
        self.last_congestion = Some(congestion);
        self.scheduler.advance()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::build_full_plan;
    use crate::schedule::ExplorationSchedule;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn config(l: f64) -> DloeConfig {
        DloeConfig {
            blocks: BlockParams {
                a: 2,
                b: 2,
                c: 2,
                schedule: ExplorationSchedule::Constant(l),
            },
            update: UpdatePolicy::AllBlocks,
        }
    }

    #[test]
    fn first_exploration_block_follows_plan() {
        let plan = Arc::new(build_full_plan(2, 2).unwrap());
        let mut agent = DloeAgent::new(0, config(1.0), plan).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut seen = vec![];
        for t in 1..=4 {
            seen.push(agent.act(t, &mut rng).unwrap() + 1);
            agent.observe(0.5, 1).unwrap();
        }
        assert_eq!(seen, vec![1, 1, 2, 2]);
    }

    #[test]
    fn exploitation_keeps_uncrowded_resource() {
        let target = ExploitTarget::new(AllocationCount::new(vec![0, 2, 1], 3).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert_eq!(exploit_choice(Some(1), Some(2), &target, &mut rng), 1);
        }
    }

    #[test]
    fn over_congestion_redraws_by_target_weights() {
        let target = ExploitTarget::new(AllocationCount::new(vec![0, 2, 1], 3).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..draws {
            counts[exploit_choice(Some(2), Some(2), &target, &mut rng)] += 1;
        }
        assert_eq!(counts[0], 0);
        assert!((counts[1] as f64 / draws as f64 - 2.0 / 3.0).abs() < 0.005);
        assert!((counts[2] as f64 / draws as f64 - 1.0 / 3.0).abs() < 0.005);
    }

    #[test]
    fn single_resource_target() {
        let plan = Arc::new(build_full_plan(3, 1).unwrap());
        let mut agent = DloeAgent::new(0, config(1.0), plan).unwrap();
        agent.estimates.observe(0, 3, 0.4).unwrap();
        assert_eq!(agent.refresh_target(1).unwrap().n_hat.counts(), &[3]);
    }

    #[test]
    fn uncovered_pair_fails_target() {
        let plan = Arc::new(build_full_plan(2, 2).unwrap());
        let mut agent = DloeAgent::new(0, config(1.0), plan).unwrap();
        assert!(matches!(agent.refresh_target(1), Err(Error::MissingEntry { .. })));
    }

    #[test]
    fn observe_validates() {
        let plan = Arc::new(build_full_plan(2, 2).unwrap());
        let mut agent = DloeAgent::new(0, config(1.0), plan).unwrap();
        assert!(agent.observe(0.5, 1).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        agent.act(1, &mut rng).unwrap();
        assert!(agent.observe(0.5, 3).is_err());
        assert!(agent.observe(1.5, 1).is_err());
    }
}
