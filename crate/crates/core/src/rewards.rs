//! Resource state processes, reward functions and exact mean rewards.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::{sample_categorical, MarkovChain};
use crate::scalar::Scalar;

/// State of one resource at one step. `id` indexes a finite state space and is
/// [`State::CONTINUOUS`] for continuous i.i.d. states; `value` lies in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    pub id: u32,
    pub value: f64,
}

impl State {
    pub const CONTINUOUS: u32 = u32::MAX;

    pub fn discrete(id: usize, value: f64) -> Self {
        Self { id: id as u32, value }
    }

    pub fn index(&self) -> Option<usize> {
        (self.id != Self::CONTINUOUS).then_some(self.id as usize)
    }
}

/// Distribution of an i.i.d. state process on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum IidDistribution {
    /// State 1 with probability `p`, else 0.
    Bernoulli { p: f64 },
    Discrete { values: Vec<f64>, probs: Vec<f64> },
    Uniform { low: f64, high: f64 },
    /// CDF `1 - (1 - x^a)^b`.
    Kumaraswamy { a: f64, b: f64 },
}

impl IidDistribution {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        match self {
            Self::Bernoulli { p } if !unit(*p) => Err(bad(format!("bernoulli p {p} outside [0,1]"))),
            Self::Discrete { values, probs } => {
                if values.is_empty() || values.len() != probs.len() {
                    return Err(bad("discrete distribution needs matching nonempty values and probs".into()));
                }
                if !values.iter().all(|&v| unit(v)) || !probs.iter().all(|&p| p >= 0.0) {
                    return Err(bad("discrete values must lie in [0,1], probs be nonnegative".into()));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(bad(format!("discrete probs sum to {total}")));
                }
                Ok(())
            }
            Self::Uniform { low, high } if !(unit(*low) && unit(*high) && low < high) => {
                Err(bad(format!("uniform bounds [{low}, {high}] invalid")))
            }
            Self::Kumaraswamy { a, b } if !(*a > 0.0 && *b > 0.0) => {
                Err(bad("kumaraswamy shape parameters must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    /// Finite support as `(values, probabilities)`, `None` for continuous laws.
    pub fn support(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            Self::Bernoulli { p } => Some((vec![0.0, 1.0], vec![1.0 - p, *p])),
            Self::Discrete { values, probs } => Some((values.clone(), probs.clone())),
            _ => None,
        }
    }

    /// Inverse CDF of a continuous law.
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            Self::Uniform { low, high } => low + (high - low) * u,
            Self::Kumaraswamy { a, b } => (1.0 - (1.0 - u).powf(1.0 / b)).powf(1.0 / a),
            Self::Bernoulli { p } => f64::from(u > 1.0 - p),
            Self::Discrete { values, probs } => {
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                *values.last().expect("validated nonempty")
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> State {
        match self.support() {
            Some((values, probs)) => {
                let i = sample_categorical(&probs, rng);
                State::discrete(i, values[i])
            }
            None => State {
                id: State::CONTINUOUS,
                value: self.quantile(rng.gen::<f64>()),
            },
        }
    }
}

/// How a resource's state evolves.
#[derive(Debug, Clone)]
pub enum StateProcess {
    Iid(IidDistribution),
    Markov { chain: MarkovChain<f64>, labels: Vec<f64> },
}

impl StateProcess {
    pub fn markov(chain: MarkovChain<f64>, labels: Option<Vec<f64>>) -> Result<Self> {
        let n = chain.len();
        let labels = match labels {
            Some(l) if l.len() != n => return Err(Error::DimensionMismatch { expected: n, found: l.len() }),
            Some(l) => l,
            None if n == 1 => vec![1.0],
            None => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
        };
        Ok(Self::Markov { chain, labels })
    }

    pub fn chain(&self) -> Option<&MarkovChain<f64>> {
        match self {
            Self::Markov { chain, .. } => Some(chain),
            Self::Iid(_) => None,
        }
    }

    /// Number of states, `None` for continuous i.i.d. laws.
    pub fn state_count(&self) -> Option<usize> {
        match self {
            Self::Iid(d) => d.support().map(|(v, _)| v.len()),
            Self::Markov { chain, .. } => Some(chain.len()),
        }
    }

    pub fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> State {
        match self {
            Self::Iid(d) => d.sample(rng),
            Self::Markov { chain, labels } => {
                let s = chain.sample_initial(rng);
                State::discrete(s, labels[s])
            }
        }
    }

    /// Next state: a fresh draw for i.i.d. laws, one transition for chains.
    pub fn sample_step<R: Rng + ?Sized>(&self, current: State, rng: &mut R) -> Result<State> {
        match self {
            Self::Iid(d) => Ok(d.sample(rng)),
            Self::Markov { chain, labels } => {
                let from = current.index().ok_or(Error::InvalidState {
                    state: current.id as usize,
                    states: chain.len(),
                })?;
                let to = chain.step(from, rng)?;
                Ok(State::discrete(to, labels[to]))
            }
        }
    }

    /// Weight of each discrete state under the long-run law: `F` for i.i.d.,
    /// the stationary distribution for chains.
    pub fn stationary_weights(&self) -> Option<Vec<f64>> {
        match self {
            Self::Iid(d) => d.support().map(|(_, p)| p),
            Self::Markov { chain, .. } => Some(chain.stationary().to_vec()),
        }
    }

    fn state_values(&self) -> Option<Vec<f64>> {
        match self {
            Self::Iid(d) => d.support().map(|(v, _)| v),
            Self::Markov { labels, .. } => Some(labels.clone()),
        }
    }
}

/// Reward `r(s, n)` of one user on one resource.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardFunction {
    /// `table[state][n - 1]` over a finite state space.
    Table(Vec<Vec<f64>>),
    /// `r(s, n) = s * rates[n - 1]`.
    Scaled(Vec<f64>),
}

impl RewardFunction {
    fn validate(&self, users: usize, states: Option<usize>) -> Result<()> {
        let in_unit = |v: &f64| (0.0..=1.0).contains(v);
        match self {
            Self::Table(rows) => {
                let Some(states) = states else {
                    return Err(bad("reward tables need a finite state space".into()));
                };
                if rows.len() != states {
                    return Err(Error::DimensionMismatch { expected: states, found: rows.len() });
                }
                for row in rows {
                    if row.len() != users {
                        return Err(Error::DimensionMismatch { expected: users, found: row.len() });
                    }
                    if let Some(v) = row.iter().find(|v| !in_unit(v)) {
                        return Err(Error::RewardOutOfRange(*v));
                    }
                }
            }
            Self::Scaled(rates) => {
                if rates.len() != users {
                    return Err(Error::DimensionMismatch { expected: users, found: rates.len() });
                }
                if let Some(v) = rates.iter().find(|v| !in_unit(v)) {
                    return Err(Error::RewardOutOfRange(*v));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, state: State, n: usize) -> Result<f64> {
        let max = match self {
            Self::Table(rows) => rows.first().map_or(0, Vec::len),
            Self::Scaled(rates) => rates.len(),
        };
        if n == 0 || n > max {
            return Err(Error::CongestionOutOfRange { n, max });
        }
        match self {
            Self::Table(rows) => {
                let s = state
                    .index()
                    .filter(|&s| s < rows.len())
                    .ok_or(Error::InvalidState { state: state.id as usize, states: rows.len() })?;
                Ok(rows[s][n - 1])
            }
            Self::Scaled(rates) => Ok(state.value * rates[n - 1]),
        }
    }
}

/// Reward functions shared by all users or given per user.
#[derive(Debug, Clone, PartialEq)]
pub enum Rewards {
    Shared(RewardFunction),
    PerUser(Vec<RewardFunction>),
}

/// One resource: its state process and reward functions.
#[derive(Debug, Clone)]
pub struct Resource {
    process: StateProcess,
    rewards: Rewards,
}

impl Resource {
    pub fn new(process: StateProcess, rewards: Rewards, users: usize) -> Result<Self> {
        if let StateProcess::Iid(d) = &process {
            d.validate()?;
        }
        let states = process.state_count();
        match &rewards {
            Rewards::Shared(f) => f.validate(users, states)?,
            Rewards::PerUser(fs) => {
                if fs.len() != users {
                    return Err(Error::DimensionMismatch { expected: users, found: fs.len() });
                }
                for f in fs {
                    f.validate(users, states)?;
                }
            }
        }
        Ok(Self { process, rewards })
    }

    pub fn process(&self) -> &StateProcess {
        &self.process
    }

    pub fn rewards(&self) -> &Rewards {
        &self.rewards
    }

    pub fn is_user_specific(&self) -> bool {
        matches!(self.rewards, Rewards::PerUser(_))
    }

    pub fn is_markov(&self) -> bool {
        matches!(self.process, StateProcess::Markov { .. })
    }

    pub fn function(&self, user: usize) -> &RewardFunction {
        match &self.rewards {
            Rewards::Shared(f) => f,
            Rewards::PerUser(fs) => &fs[user],
        }
    }

    pub fn users(&self) -> usize {
        match self.function(0) {
            RewardFunction::Table(rows) => rows.first().map_or(0, Vec::len),
            RewardFunction::Scaled(rates) => rates.len(),
        }
    }

    pub fn reward(&self, user: usize, state: State, n: usize) -> Result<f64> {
        self.function(user).eval(state, n)
    }

    pub fn sample_step<R: Rng + ?Sized>(&self, current: State, rng: &mut R) -> Result<State> {
        self.process.sample_step(current, rng)
    }

    /// `mu_{k,n}` for `user`: exact for finite state spaces, adaptive quadrature
    /// of `r(F^{-1}(u), n)` over `u` in `[0, 1]` otherwise.
    pub fn mean_reward(&self, user: usize, n: usize) -> Result<f64> {
        let users = self.users();
        if n == 0 || n > users {
            return Err(Error::CongestionOutOfRange { n, max: users });
        }
        let f = self.function(user);
        match (self.process.stationary_weights(), self.process.state_values()) {
            (Some(weights), Some(values)) => {
                let mut total = 0.0;
                for (s, (&w, &v)) in weights.iter().zip(&values).enumerate() {
                    total += w * f.eval(State::discrete(s, v), n)?;
                }
                Ok(total)
            }
            _ => {
                let StateProcess::Iid(d) = &self.process else { unreachable!() };
                let RewardFunction::Scaled(rates) = f else {
                    return Err(bad("continuous states need a scaled reward".into()));
                };
                Ok(rates[n - 1] * integrate(|u| d.quantile(u), 0.0, 1.0, 1e-9))
            }
        }
    }

    /// `sum_s r(s, n)` over a finite state space.
    pub fn reward_sum(&self, user: usize, n: usize) -> Result<f64> {
        let values = self
            .process
            .state_values()
            .ok_or_else(|| bad("reward sums need a finite state space".into()))?;
        let f = self.function(user);
        values
            .iter()
            .enumerate()
            .map(|(s, &v)| f.eval(State::discrete(s, v), n))
            .sum()
    }
}

fn bad(msg: String) -> Error {
    Error::Scenario(msg)
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
            + rec(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(&f, a, fa, b, fb);
    rec(&f, a, fa, b, fb, m, fm, whole, tol, 50)
}

/// Channel and noise parameters of the spectrum-access rate model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OsaParams<T> {
    pub h_hat: Vec<T>,
    pub h_tilde: Vec<T>,
    pub power: Vec<T>,
    pub noise: T,
    pub gamma: T,
}

impl<T: Scalar> OsaParams<T> {
    pub fn channels(&self) -> usize {
        self.h_hat.len()
    }

    pub fn rate(&self, k: usize, n: usize) -> Result<T> {
        osa_rate(self, k, n)
    }

    /// `max_k rate(k, 1)`, the normalization constant.
    pub fn max_rate(&self) -> Result<T> {
        (0..self.channels()).try_fold(T::zero(), |acc, k| Ok(acc.max(self.rate(k, 1)?)))
    }
}

/// `ln(1 + gamma h_hat P / (N_o + (n - 1) h_tilde P))`.
pub fn osa_rate<T: Scalar>(params: &OsaParams<T>, k: usize, n: usize) -> Result<T> {
    if n == 0 {
        return Err(Error::CongestionOutOfRange { n, max: usize::MAX });
    }
    if params.noise.is_nan() || params.noise <= T::zero() {
        return Err(Error::InvalidParameter(format!("noise power must be positive, got {}", params.noise)));
    }
    let len = params.h_hat.len();
    if params.h_tilde.len() != len || params.power.len() != len {
        return Err(Error::DimensionMismatch {
            expected: len,
            found: params.h_tilde.len().min(params.power.len()),
        });
    }
    if k >= len {
        return Err(Error::InvalidParameter(format!("channel {k} out of range")));
    }
    let p = params.power[k];
    let interference = params.noise + T::of_usize(n - 1) * params.h_tilde[k] * p;
    Ok((T::one() + params.gamma * params.h_hat[k] * p / interference).ln())
}
