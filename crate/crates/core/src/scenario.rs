//! Scenario description: users, resources and the TOML file format.
//!
//! ```toml
//! name = "two-chains"
//! users = 2
//!
//! [[resources]]
//! kind = "markov"
//! transition = [[0.9, 0.1], [0.1, 0.9]]
//! table = [[0.2, 0.1], [0.8, 0.4]]   # table[state][n - 1]
//!
//! [[resources]]
//! kind = "iid"
//! distribution = { type = "uniform", low = 0.0, high = 1.0 }
//! rates = [0.9, 0.5]                 # r(s, n) = s * rates[n - 1]
//! ```
//!
//! User-specific rewards use `user_table` or `user_rates`, indexed by user
//! first. Spectrum-access channels use `kind = "osa"` with `theta`, `h_hat`,
//! `h_tilde` and `power`, plus a global `[osa]` table holding `noise`, `gamma`
//! and `normalize`.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::allocation::{MeanTable, UserMeanTable};
use crate::error::{Error, Result};
use crate::markov::{transient_constant, MarkovBoundParams, MarkovChain};
use crate::rewards::{osa_rate, IidDistribution, OsaParams, Resource, RewardFunction, Rewards, State, StateProcess};

/// Horizon used when estimating the transient constant of a chain.
pub const TRANSIENT_HORIZON: usize = 10_000;

/// Spectrum-access metadata kept for reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OsaInfo {
    pub params: OsaParams<f64>,
    /// Probability that each channel is free of its primary user.
    pub theta: Vec<f64>,
    /// Divisor applied to raw rates; 1 when not normalized.
    pub scale: f64,
}

/// A validated multi-user resource-sharing environment.
#[derive(Debug, Clone)]
pub struct Scenario {
    name: String,
    users: usize,
    resources: Vec<Resource>,
    osa: Option<OsaInfo>,
    c_p: Option<f64>,
}

impl Scenario {
    pub fn new(name: impl Into<String>, users: usize, resources: Vec<Resource>) -> Result<Self> {
        if users == 0 || resources.is_empty() {
            return Err(Error::Scenario("need at least one user and one resource".into()));
        }
        if let Some(k) = resources.iter().position(|r| r.users() != users) {
            return Err(Error::Scenario(format!(
                "resource {} defines rewards for {} users, expected {users}",
                k + 1,
                resources[k].users()
            )));
        }
        Ok(Self {
            name: name.into(),
            users,
            resources,
            osa: None,
            c_p: None,
        })
    }

    /// Builds a spectrum-access scenario: channel `k` is free with probability
    /// `theta[k]` and then pays `rate(k, n) / R_max`, else pays nothing.
    pub fn osa(name: impl Into<String>, users: usize, params: OsaParams<f64>, theta: Vec<f64>, normalize: bool) -> Result<Self> {
        if theta.len() != params.channels() {
            return Err(Error::DimensionMismatch {
                expected: params.channels(),
                found: theta.len(),
            });
        }
        let scale = if normalize { params.max_rate()? } else { 1.0 };
        let mut resources = Vec::with_capacity(theta.len());
        for (k, &p) in theta.iter().enumerate() {
            let rates = (1..=users)
                .map(|n| osa_rate(&params, k, n).map(|r| r / scale))
                .collect::<Result<Vec<_>>>()?;
            resources.push(Resource::new(
                StateProcess::Iid(IidDistribution::Bernoulli { p }),
                Rewards::Shared(RewardFunction::Scaled(rates)),
                users,
            )?);
        }
        let mut scenario = Self::new(name, users, resources)?;
        scenario.osa = Some(OsaInfo { params, theta, scale });
        Ok(scenario)
    }

    /// Three users sharing three channels with the reference simulation parameters.
    pub fn reference_osa() -> Self {
        let params = OsaParams {
            h_hat: vec![5.0, 10.0, 15.0],
            h_tilde: vec![1.0, 1.2, 3.0],
            power: vec![1.0; 3],
            noise: 1.0,
            gamma: 1.0,
        };
        Self::osa("reference-osa", 3, params, vec![1.0 / 8.0, 1.0 / 3.0, 1.0 / 5.0], true)
            .expect("reference parameters are valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text)?;
        file.build()
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Scenario(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn resource_count(&self) -> usize {
        self.resources.len()
    }

    pub fn resources(&self) -> &[Resource] {
        &self.resources
    }

    pub fn osa_info(&self) -> Option<&OsaInfo> {
        self.osa.as_ref()
    }

    /// Divisor applied to raw rewards (1 unless normalized spectrum-access rates).
    pub fn reward_scale(&self) -> f64 {
        self.osa.as_ref().map_or(1.0, |o| o.scale)
    }

    pub fn is_user_specific(&self) -> bool {
        self.resources.iter().any(Resource::is_user_specific)
    }

    pub fn is_markov(&self) -> bool {
        self.resources.iter().any(Resource::is_markov)
    }

    /// Overrides the transient constant used in Markovian bounds.
    pub fn with_transient_constant(mut self, c_p: f64) -> Self {
        self.c_p = Some(c_p);
        self
    }

    /// Exact `mu_{k,n}`; fails for user-specific rewards.
    pub fn mean_table(&self) -> Result<MeanTable<f64>> {
        if self.is_user_specific() {
            return Err(Error::Scenario("rewards are user-specific; use the per-user table".into()));
        }
        let mut table = MeanTable::empty(self.resources.len(), self.users);
        for (k, r) in self.resources.iter().enumerate() {
            for n in 1..=self.users {
                table.set(k, n, r.mean_reward(0, n)?)?;
            }
        }
        Ok(table)
    }

    /// Exact `mu^i_{k,n}` for every user.
    pub fn user_mean_table(&self) -> Result<UserMeanTable<f64>> {
        let mut table = UserMeanTable::empty(self.users, self.resources.len());
        for i in 0..self.users {
            for (k, r) in self.resources.iter().enumerate() {
                for n in 1..=self.users {
                    table.set(i, k, n, r.mean_reward(i, n)?)?;
                }
            }
        }
        Ok(table)
    }

    pub fn initial_states<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<State> {
        self.resources.iter().map(|r| r.process().initial_state(rng)).collect()
    }

    pub fn step_states<R: Rng + ?Sized>(&self, states: &mut [State], rng: &mut R) -> Result<()> {
        for (r, s) in self.resources.iter().zip(states.iter_mut()) {
            *s = r.sample_step(*s, rng)?;
        }
        Ok(())
    }

    pub fn reward(&self, k: usize, user: usize, state: State, n: usize) -> Result<f64> {
        self.resources[k].reward(user, state, n)
    }

    /// Constants of the Markovian bounds over the Markov resources, `None`
    /// when every resource is i.i.d. The transient constant is the configured
    /// value or, by default, estimated by exact propagation over
    /// [`TRANSIENT_HORIZON`] steps.
    pub fn markov_bound_params(&self) -> Result<Option<MarkovBoundParams<f64>>> {
        let chains: Vec<(&Resource, &MarkovChain<f64>, &Vec<f64>)> = self
            .resources
            .iter()
            .filter_map(|r| match r.process() {
                StateProcess::Markov { chain, labels } => Some((r, chain, labels)),
                StateProcess::Iid(_) => None,
            })
            .collect();
        if chains.is_empty() {
            return Ok(None);
        }
        let mut params = MarkovBoundParams {
            s_max: 0,
            pi_min: 1.0,
            r_sigma_max: 0.0,
            r_sigma_min: f64::INFINITY,
            upsilon_min: 1.0,
            c_p: 0.0,
        };
        for (resource, chain, labels) in chains {
            params.s_max = params.s_max.max(chain.len());
            params.pi_min = chain.stationary().iter().fold(params.pi_min, |a, &p| a.min(p));
            params.upsilon_min = params.upsilon_min.min(chain.eigenvalue_gap());
            for user in 0..self.users {
                for n in 1..=self.users {
                    let sum = resource.reward_sum(user, n)?;
                    params.r_sigma_max = params.r_sigma_max.max(sum);
                    params.r_sigma_min = params.r_sigma_min.min(sum);
                    if self.c_p.is_none() {
                        let f = resource.function(user);
                        let column = labels
                            .iter()
                            .enumerate()
                            .map(|(s, &v)| f.eval(State::discrete(s, v), n))
                            .collect::<Result<Vec<_>>>()?;
                        params.c_p = params.c_p.max(transient_constant(chain, &column, TRANSIENT_HORIZON)?);
                    }
                }
            }
        }
        if let Some(c_p) = self.c_p {
            params.c_p = c_p;
        }
        Ok(Some(params))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: Option<String>,
    users: usize,
    osa: Option<OsaGlobal>,
    c_p: Option<f64>,
    resources: Vec<ResourceSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OsaGlobal {
    #[serde(default = "one")]
    noise: f64,
    #[serde(default = "one")]
    gamma: f64,
    #[serde(default = "yes")]
    normalize: bool,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum ResourceSpec {
    Osa {
        theta: f64,
        h_hat: f64,
        h_tilde: f64,
        #[serde(default = "one")]
        power: f64,
    },
    Iid {
        distribution: IidDistribution,
        #[serde(flatten)]
        rewards: RewardSpec,
    },
    Markov {
        transition: Vec<Vec<f64>>,
        initial: Option<Vec<f64>>,
        labels: Option<Vec<f64>>,
        #[serde(flatten)]
        rewards: RewardSpec,
    },
}

#[derive(Debug, Deserialize)]
struct RewardSpec {
    table: Option<Vec<Vec<f64>>>,
    rates: Option<Vec<f64>>,
    user_table: Option<Vec<Vec<Vec<f64>>>>,
    user_rates: Option<Vec<Vec<f64>>>,
}

impl RewardSpec {
    fn build(self, k: usize) -> Result<Rewards> {
        match (self.table, self.rates, self.user_table, self.user_rates) {
            (Some(t), None, None, None) => Ok(Rewards::Shared(RewardFunction::Table(t))),
            (None, Some(r), None, None) => Ok(Rewards::Shared(RewardFunction::Scaled(r))),
            (None, None, Some(t), None) => Ok(Rewards::PerUser(t.into_iter().map(RewardFunction::Table).collect())),
            (None, None, None, Some(r)) => Ok(Rewards::PerUser(r.into_iter().map(RewardFunction::Scaled).collect())),
            _ => Err(Error::Scenario(format!(
                "resource {} needs exactly one of table, rates, user_table, user_rates",
                k + 1
            ))),
        }
    }
}

impl ScenarioFile {
    fn build(self) -> Result<Scenario> {
        let name = self.name.unwrap_or_else(|| "scenario".into());
        let osa_count = self.resources.iter().filter(|r| matches!(r, ResourceSpec::Osa { .. })).count();
        let mut scenario = if osa_count > 0 {
            if osa_count != self.resources.len() {
                return Err(Error::Scenario("osa channels cannot be mixed with other resource kinds".into()));
            }
            let global = self.osa.unwrap_or(OsaGlobal {
                noise: 1.0,
                gamma: 1.0,
                normalize: true,
            });
            let mut params = OsaParams {
                h_hat: vec![],
                h_tilde: vec![],
                power: vec![],
                noise: global.noise,
                gamma: global.gamma,
            };
            let mut theta = Vec::new();
            for spec in self.resources {
                if let ResourceSpec::Osa { theta: th, h_hat, h_tilde, power } = spec {
                    params.h_hat.push(h_hat);
                    params.h_tilde.push(h_tilde);
                    params.power.push(power);
                    theta.push(th);
                }
            }
            Scenario::osa(name, self.users, params, theta, global.normalize)?
        } else {
            if self.osa.is_some() {
                return Err(Error::Scenario("[osa] section given without osa channels".into()));
            }
            let mut resources = Vec::with_capacity(self.resources.len());
            for (k, spec) in self.resources.into_iter().enumerate() {
                let resource = match spec {
                    ResourceSpec::Iid { distribution, rewards } => {
                        Resource::new(StateProcess::Iid(distribution), rewards.build(k)?, self.users)?
                    }
                    ResourceSpec::Markov {
                        transition,
                        initial,
                        labels,
                        rewards,
                    } => {
                        let chain = MarkovChain::new(transition, initial)?;
                        Resource::new(StateProcess::markov(chain, labels)?, rewards.build(k)?, self.users)?
                    }
                    ResourceSpec::Osa { .. } => unreachable!("handled above"),
                };
                resources.push(resource);
            }
            Scenario::new(name, self.users, resources)?
        };
        if let Some(c_p) = self.c_p {
            if !(c_p >= 0.0) {
                return Err(Error::Scenario(format!("c_p must be nonnegative, got {c_p}")));
            }
            scenario = scenario.with_transient_constant(c_p);
        }
        Ok(scenario)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_means_fold_in_occupancy() {
        let s = Scenario::reference_osa();
        let table = s.mean_table().unwrap();
        let scale = 16f64.ln();
        let mu22 = (1.0 / 3.0) * (1.0 + 10.0 / 2.2f64).ln() / scale;
        assert!((table.get(1, 2).unwrap() - mu22).abs() < 1e-15);
        assert_eq!(s.reward_scale(), scale);
    }

    #[test]
    fn toml_round_trip_matches_builder() {
        let text = r#"
            name = "reference"
            users = 3
            [osa]
            noise = 1.0
            gamma = 1.0
            [[resources]]
            kind = "osa"
            theta = 0.125
            h_hat = 5.0
            h_tilde = 1.0
            [[resources]]
            kind = "osa"
            theta = 0.3333333333333333
            h_hat = 10.0
            h_tilde = 1.2
            [[resources]]
            kind = "osa"
            theta = 0.2
            h_hat = 15.0
            h_tilde = 3.0
        "#;
        let parsed = Scenario::from_toml_str(text).unwrap();
        let built = Scenario::reference_osa();
        assert_eq!(parsed.mean_table().unwrap(), built.mean_table().unwrap());
    }

    #[test]
    fn user_specific_markov_file() {
        let text = r#"
            users = 2
            c_p = 3.5
            [[resources]]
            kind = "markov"
            transition = [[0.6, 0.4], [0.4, 0.6]]
            user_table = [[[0.2, 0.1], [0.6, 0.1]], [[0.1, 0.05], [0.2, 0.05]]]
            [[resources]]
            kind = "markov"
            transition = [[0.6, 0.4], [0.4, 0.6]]
            user_table = [[[0.1, 0.05], [0.2, 0.05]], [[0.2, 0.1], [0.6, 0.1]]]
        "#;
        let s = Scenario::from_toml_str(text).unwrap();
        assert!(s.is_user_specific() && s.is_markov());
        assert!(s.mean_table().is_err());
        let t = s.user_mean_table().unwrap();
        assert!((t.get(0, 0, 1).unwrap() - 0.4).abs() < 1e-12);
        let p = s.markov_bound_params().unwrap().unwrap();
        assert_eq!(p.c_p, 3.5);
        assert_eq!(p.s_max, 2);
        assert!((p.upsilon_min - 0.96).abs() < 1e-12);
        assert!((p.r_sigma_max - 0.8).abs() < 1e-12);
        assert!((p.r_sigma_min - 0.1).abs() < 1e-12);
    }

    #[test]
    fn malformed_files_rejected() {
        assert!(Scenario::from_toml_str("users = 1\nresources = []").is_err());
        let two_kinds = r#"
            users = 1
            [[resources]]
            kind = "iid"
            distribution = { type = "bernoulli", p = 0.5 }
            rates = [1.0]
            table = [[1.0], [1.0]]
        "#;
        assert!(Scenario::from_toml_str(two_kinds).is_err());
        let wrong_len = r#"
            users = 2
            [[resources]]
            kind = "iid"
            distribution = { type = "bernoulli", p = 0.5 }
            rates = [1.0]
        "#;
        assert!(Scenario::from_toml_str(wrong_len).is_err());
    }
}
