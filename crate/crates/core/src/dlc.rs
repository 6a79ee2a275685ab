//! Decentralized learning with communication for user-specific rewards.
//!
//! Users explore as in [`crate::dloe`] but learn only from exploration slots,
//! where the plan fixes the congestion. At each exploitation block every user
//! broadcasts its sample means; a rotating leader computes the optimal
//! assignment from the merged table and sends each user its resource.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::allocation::{optimal_assignment, Assignment, UserMeanTable};
use crate::dloe::{AgentEvent, EventKind};
use crate::error::{Error, Result};
use crate::estimator::EstimatorBank;
use crate::plan::ExplorationPlan;
use crate::schedule::{BlockParams, BlockScheduler, Phase};

/// Version tag carried by every message.
pub const MESSAGE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DlcConfig {
    pub blocks: BlockParams,
}

/// Wire messages. Floats travel as shortest round-trip decimals, so the
/// merged table is bit-identical at every receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Message {
    /// One user's sample means, `means[k * M + n - 1]`, `None` if unvisited.
    Estimates {
        version: u32,
        from: usize,
        block: u32,
        resources: usize,
        means: Vec<Option<f64>>,
    },
    Assignment {
        version: u32,
        from: usize,
        to: usize,
        block: u32,
        resource: usize,
    },
}

/// Reliable ordered mailbox between the users.
#[derive(Debug, Clone, Default)]
pub struct CommChannel {
    inboxes: Vec<VecDeque<String>>,
    sent: u64,
}

impl CommChannel {
    pub fn new(users: usize) -> Self {
        Self {
            inboxes: vec![VecDeque::new(); users],
            sent: 0,
        }
    }

    pub fn send(&mut self, to: usize, message: &Message) -> Result<()> {
        let wire = serde_json::to_string(message)?;
        self.inboxes
            .get_mut(to)
            .ok_or_else(|| Error::Protocol(format!("no user {to}")))?
            .push_back(wire);
        self.sent += 1;
        Ok(())
    }

    pub fn broadcast(&mut self, message: &Message) -> Result<()> {
        for to in 0..self.inboxes.len() {
            self.send(to, message)?;
        }
        Ok(())
    }

    pub fn receive(&mut self, user: usize) -> Result<Vec<Message>> {
        let inbox = self
            .inboxes
            .get_mut(user)
            .ok_or_else(|| Error::Protocol(format!("no user {user}")))?;
        inbox.drain(..).map(|w| Ok(serde_json::from_str(&w)?)).collect()
    }

    /// Raw messages delivered so far.
    pub fn sent(&self) -> u64 {
        self.sent
    }
}

/// Leader of exploitation block `block` (1-based): users take turns from user 0.
pub fn leader(block: u32, users: usize) -> usize {
    (block as usize - 1) % users
}

/// One user's state machine.
#[derive(Debug, Clone)]
pub struct DlcAgent {
    id: usize,
    users: usize,
    plan: Arc<ExplorationPlan>,
    scheduler: BlockScheduler,
    estimates: EstimatorBank<f64>,
    merged: Option<UserMeanTable<f64>>,
    assigned: Option<usize>,
    current: Option<usize>,
    events: Vec<AgentEvent>,
}

impl DlcAgent {
    pub fn new(id: usize, config: DlcConfig, plan: Arc<ExplorationPlan>) -> Result<Self> {
        let users = plan.users();
        if id >= users {
            return Err(Error::InvalidParameter(format!("user {id} outside plan with {users} users")));
        }
        Ok(Self {
            id,
            users,
            scheduler: BlockScheduler::new(config.blocks, plan.len())?,
            estimates: EstimatorBank::new(plan.resources, users),
            plan,
            merged: None,
            assigned: None,
            current: None,
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

    /// The table merged at the last exchange.
    pub fn merged(&self) -> Option<&UserMeanTable<f64>> {
        self.merged.as_ref()
    }

    pub fn assigned(&self) -> Option<usize> {
        self.assigned
    }

    pub fn events(&self) -> &[AgentEvent] {
        &self.events
    }

    pub fn take_events(&mut self) -> Vec<AgentEvent> {
        std::mem::take(&mut self.events)
    }

    /// Starts a block if slot `t` begins one and returns its phase.
    pub fn begin_slot(&mut self, t: u64) -> Result<Option<Phase>> {
        if !self.scheduler.at_boundary() {
            return Ok(None);
        }
        let phase = self.scheduler.decide_phase(t)?;
        let kind = match phase {
            Phase::Explore => EventKind::ExplorationStart {
                block: self.scheduler.exploration_blocks(),
            },
            Phase::Exploit => {
                self.assigned = None;
                EventKind::ExploitationStart {
                    block: self.scheduler.exploitation_blocks(),
                }
            }
        };
        self.events.push(AgentEvent { t, kind });
        Ok(Some(phase))
    }

    fn estimate_message(&self) -> Message {
        let resources = self.plan.resources;
        let mut means = Vec::with_capacity(resources * self.users);
        for k in 0..resources {
            for n in 1..=self.users {
                means.push(self.estimates.mean(k, n));
            }
        }
        Message::Estimates {
            version: MESSAGE_VERSION,
            from: self.id,
            block: self.scheduler.exploitation_blocks(),
            resources,
            means,
        }
    }

    fn merge(&mut self, messages: &[Message]) -> Result<()> {
        let resources = self.plan.resources;
        let block = self.scheduler.exploitation_blocks();
        let mut table = UserMeanTable::empty(self.users, resources);
        let mut seen = vec![false; self.users];
        for m in messages {
            let Message::Estimates {
                version,
                from,
                block: b,
                resources: r,
                means,
            } = m
            else {
                return Err(Error::Protocol("expected an estimate message".into()));
            };
            if *version != MESSAGE_VERSION || *b != block || *r != resources || means.len() != resources * self.users {
                return Err(Error::Protocol(format!("malformed estimates from user {from}")));
            }
            if *from >= self.users || std::mem::replace(&mut seen[*from], true) {
                return Err(Error::Protocol(format!("unexpected sender {from}")));
            }
            for k in 0..resources {
                for n in 1..=self.users {
                    if let Some(v) = means[k * self.users + n - 1] {
                        table.set(*from, k, n, v)?;
                    }
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Protocol("estimates missing from some users".into()));
        }
        self.merged = Some(table);
        Ok(())
    }

    /// Resource for slot `t`.
    pub fn act_dlc(&mut self) -> Result<usize> {
        let choice = match self.scheduler.phase() {
            Phase::Explore => self.plan.resource(self.id, self.scheduler.plan_position()),
            Phase::Exploit => self
                .assigned
                .ok_or_else(|| Error::Protocol(format!("user {} has no assignment", self.id)))?,
        };
        self.current = Some(choice);
        Ok(choice)
    }

    /// Feedback for the slot just played. Only exploration slots are learned
    /// from, with the congestion the plan prescribes.
    pub fn observe_dlc(&mut self, reward: f64) -> Result<()> {
        let k = self
            .current
            .ok_or_else(|| Error::Protocol("observe called before act".into()))?;
        if self.scheduler.phase() == Phase::Explore {
            let z = self.scheduler.plan_position();
            self.estimates.observe(k, self.plan.congestion_at(self.id, z), reward)?;
        } else if !(0.0..=1.0).contains(&reward) {
            return Err(Error::RewardOutOfRange(reward));
        }
        self.scheduler.advance()
    }

    /// Plan congestion of the current exploration slot.
    pub fn planned_congestion(&self) -> Option<usize> {
        (self.scheduler.phase() == Phase::Explore)
            .then(|| self.plan.congestion_at(self.id, self.scheduler.plan_position()))
    }
}

/// Exchange at the start of an exploitation block: every user broadcasts its
/// estimates, the leader computes the optimal assignment and sends each user
/// its resource. Returns the assignment.
pub fn exchange_and_assign(agents: &mut [DlcAgent], channel: &mut CommChannel, t: u64) -> Result<Assignment> {
    let users = agents.len();
    let first = agents
        .first()
        .ok_or_else(|| Error::Protocol("no agents".into()))?
        .scheduler
        .sync_key();
    if first.phase != Phase::Exploit || first.eta != 0 {
        return Err(Error::Desync {
            t,
            detail: "exchange outside an exploitation boundary".into(),
        });
    }
    if let Some(a) = agents.iter().find(|a| a.scheduler.sync_key() != first) {
        return Err(Error::Desync {
            t,
            detail: format!("user {} is not at the exchange boundary", a.id),
        });
    }
    let block = first.l_i;
    for agent in agents.iter_mut() {
        channel.broadcast(&agent.estimate_message())?;
        agent.events.push(AgentEvent {
            t,
            kind: EventKind::Communication,
        });
    }
    for agent in agents.iter_mut() {
        let inbox = channel.receive(agent.id)?;
        agent.merge(&inbox)?;
    }
    let lead = leader(block, users);
    let assignment = {
        let agent = &mut agents[lead];
        let report = optimal_assignment(agent.merged.as_ref().expect("merged above"))?;
        agent.events.push(AgentEvent {
            t,
            kind: EventKind::Computation,
        });
        report.preferred().clone()
    };
    for (to, &resource) in assignment.choices().iter().enumerate() {
        channel.send(
            to,
            &Message::Assignment {
                version: MESSAGE_VERSION,
                from: lead,
                to,
                block,
                resource,
            },
        )?;
    }
    for agent in agents.iter_mut() {
        for m in channel.receive(agent.id)? {
            match m {
                Message::Assignment { to, block: b, resource, .. } if to == agent.id && b == block => {
                    agent.assigned = Some(resource);
                }
                other => return Err(Error::Protocol(format!("unexpected message {other:?}"))),
            }
        }
    }
    Ok(assignment)
}
