//! Theory constants: the exploration constant `L`, settling probabilities and
//! the worst-case hitting bound of the exploitation randomization.

use crate::error::{Error, Result};
use crate::markov::MarkovBoundParams;
use crate::scalar::Scalar;

/// `pi^2 / 6 = sum_t 1/t^2`.
pub const BETA: f64 = std::f64::consts::PI * std::f64::consts::PI / 6.0;

/// Reward model selecting which exploration threshold applies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelKind<'a, T> {
    Iid,
    Markov(&'a MarkovBoundParams<T>),
}

/// `50 S_max^2 r_sigma_max^2 / ((3 - 2 sqrt 2) upsilon_min)`.
pub fn markov_threshold<T: Scalar>(params: &MarkovBoundParams<T>) -> T {
    let s = T::of_usize(params.s_max);
    let denom = (T::of(3.0) - T::of(2.0) * T::of(2.0).sqrt()) * params.upsilon_min;
    T::of(50.0) * s * s * params.r_sigma_max * params.r_sigma_max / denom
}

/// Exploration constant for accuracy `epsilon`: `1/epsilon^2` for i.i.d.
/// rewards, the larger of that and [`markov_threshold`] for Markovian ones.
pub fn exploration_constant<T: Scalar>(epsilon: T, kind: ModelKind<'_, T>) -> Result<u64> {
    exploration_constant_scaled(epsilon, T::one(), kind)
}

/// As [`exploration_constant`] with the i.i.d. term `multiplier / epsilon^2`.
///
/// The i.i.d. term is rounded to the nearest integer, so `1/0.0811^2 = 152.04`
/// gives 152. The Markov term is rounded up. An infinite `epsilon` (every
/// allocation optimal) gives 1.
pub fn exploration_constant_scaled<T: Scalar>(epsilon: T, multiplier: T, kind: ModelKind<'_, T>) -> Result<u64> {
    if epsilon.is_nan() || epsilon <= T::zero() {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    if multiplier.is_nan() || multiplier <= T::zero() {
        return Err(Error::InvalidParameter(format!("multiplier must be positive, got {multiplier}")));
    }
    let iid = (multiplier / (epsilon * epsilon)).round().max(T::one());
    let bound = match kind {
        ModelKind::Iid => iid,
        ModelKind::Markov(params) => {
            params.validate()?;
            iid.max(markov_threshold(params).ceil())
        }
    };
    bound
        .to_u64()
        .ok_or_else(|| Error::InvalidParameter(format!("exploration constant {bound} overflows")))
}

fn factorial<T: Scalar>(n: usize) -> T {
    (1..=n).fold(T::one(), |acc, k| acc * T::of_usize(k))
}

/// Probability that one round of randomization settles the users onto `n_star`
/// when `m[k]` users already sit on resource `k` and the rest draw resource `k`
/// with probability `n_star[k] / M`.
pub fn settle_probability<T: Scalar>(m: &[usize], n_star: &[usize]) -> Result<T> {
    if m.len() != n_star.len() {
        return Err(Error::DimensionMismatch {
            expected: n_star.len(),
            found: m.len(),
        });
    }
    if let Some(k) = (0..m.len()).find(|&k| m[k] > n_star[k]) {
        return Err(Error::InvalidParameter(format!(
            "settled count {} exceeds optimal count {} on resource {k}",
            m[k], n_star[k]
        )));
    }
    let users: usize = n_star.iter().sum();
    if users == 0 {
        return Err(Error::InvalidParameter("optimal allocation has no users".into()));
    }
    let settled: usize = m.iter().sum();
    let total = T::of_usize(users);
    let mut p = factorial::<T>(users - settled);
    for (&mk, &nk) in m.iter().zip(n_star) {
        let missing = nk - mk;
        p = p / factorial::<T>(missing) * (T::of_usize(nk) / total).powi(missing as i32);
    }
    Ok(p)
}

/// `1 / min_m P(m)` over the lattice `0 <= m_k <= n_star_k`.
pub fn worst_case_hitting_bound<T: Scalar>(n_star: &[usize]) -> Result<T> {
    let mut m = vec![0usize; n_star.len()];
    let mut worst = T::one();
    loop {
        worst = worst.min(settle_probability(&m, n_star)?);
        let mut k = 0;
        loop {
            if k == m.len() {
                return Ok(T::one() / worst);
            }
            if m[k] < n_star[k] {
                m[k] += 1;
                break;
            }
            m[k] = 0;
            k += 1;
        }
    }
}
