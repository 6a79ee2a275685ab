//! Finite Markov chains: validation, stationary distribution, multiplicative
//! symmetrization and the eigenvalue gap that drives the deviation bound for
//! Markovian rewards.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::scalar::Scalar;

/// Irreducible, aperiodic chain whose multiplicative symmetrization is also irreducible.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain<T> {
    transition: Matrix<T>,
    initial: Vec<T>,
    stationary: Vec<T>,
}

impl<T: Scalar> MarkovChain<T> {
    /// Validates `transition` and builds the chain. When `initial` is `None`
    /// the chain starts from its stationary distribution.
    pub fn new(transition: Vec<Vec<T>>, initial: Option<Vec<T>>) -> Result<Self> {
        validate_stochastic(&transition)?;
        if !is_irreducible(&transition) {
            return Err(Error::Reducible("transition digraph is not strongly connected".into()));
        }
        let period = period(&transition);
        if period != 1 {
            return Err(Error::Periodic(period));
        }
        let stationary = stationary_distribution(&transition)?;
        let symmetrized = multiplicative_symmetrization(&transition, &stationary)?;
        if !is_irreducible(&symmetrized) {
            return Err(Error::Reducible("multiplicative symmetrization".into()));
        }
        let initial = match initial {
            Some(q) => {
                validate_distribution(&q, transition.len())?;
                q
            }
            None => stationary.clone(),
        };
        Ok(Self {
            transition,
            initial,
            stationary,
        })
    }

    pub fn len(&self) -> usize {
        self.transition.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transition.is_empty()
    }

    pub fn transition(&self) -> &[Vec<T>] {
        &self.transition
    }

    pub fn initial(&self) -> &[T] {
        &self.initial
    }

    pub fn stationary(&self) -> &[T] {
        &self.stationary
    }

    pub fn symmetrization(&self) -> Matrix<T> {
        multiplicative_symmetrization(&self.transition, &self.stationary)
            .expect("validated at construction")
    }

    pub fn eigenvalue_gap(&self) -> T {
        eigenvalue_gap(&self.symmetrization()).expect("validated at construction")
    }

    /// Draws the next state from row `state`.
    pub fn step<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> Result<usize> {
        let row = self.transition.get(state).ok_or(Error::InvalidState {
            state,
            states: self.len(),
        })?;
        Ok(sample_categorical(row, rng))
    }

    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_categorical(&self.initial, rng)
    }
}

pub(crate) fn sample_categorical<T: Scalar, R: Rng + ?Sized>(weights: &[T], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w.to_f64_lossy();
        if u < acc {
            return i;
        }
    }
    // Round-off leaves `acc` a hair below one; fall back to the last positive weight.
    weights
        .iter()
        .rposition(|w| *w > T::zero())
        .unwrap_or(weights.len() - 1)
}

fn validate_distribution<T: Scalar>(q: &[T], n: usize) -> Result<()> {
    if q.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: q.len(),
        });
    }
    if q.iter().any(|&x| x < T::zero() || !x.is_finite()) {
        return Err(Error::InvalidParameter("distribution has a negative entry".into()));
    }
    let total: T = q.iter().copied().sum();
    if (total - T::one()).abs() > T::ROW_SUM_TOLERANCE * T::of_usize(n.max(1)) {
        return Err(Error::InvalidParameter(format!(
            "distribution sums to {total}, not 1"
        )));
    }
    Ok(())
}

/// Checks that `p` is square with nonnegative rows summing to one.
pub fn validate_stochastic<T: Scalar>(p: &[Vec<T>]) -> Result<()> {
    let n = p.len();
    if n == 0 {
        return Err(Error::InvalidTransition("empty matrix".into()));
    }
    for (i, row) in p.iter().enumerate() {
        if row.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: row.len(),
            });
        }
        if row.iter().any(|&x| x < T::zero() || !x.is_finite()) {
            return Err(Error::InvalidTransition(format!("row {i} has a negative entry")));
        }
        let sum: T = row.iter().copied().sum();
        if (sum - T::one()).abs() > T::ROW_SUM_TOLERANCE {
            return Err(Error::InvalidTransition(format!("row {i} sums to {sum}")));
        }
    }
    Ok(())
}

fn reachable<T: Scalar>(p: &[Vec<T>], start: usize, forward: bool) -> Vec<bool> {
    let n = p.len();
    let mut seen = vec![false; n];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(u) = stack.pop() {
        for v in 0..n {
            let w = if forward { p[u][v] } else { p[v][u] };
            if w > T::zero() && !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen
}

/// Strong connectivity of the digraph of positive entries.
pub fn is_irreducible<T: Scalar>(p: &[Vec<T>]) -> bool {
    if p.is_empty() {
        return false;
    }
    reachable(p, 0, true).iter().all(|&x| x) && reachable(p, 0, false).iter().all(|&x| x)
}

/// Period of an irreducible chain: gcd over edges `u -> v` of `level(u) + 1 - level(v)`,
/// where levels are BFS distances from state 0.
pub fn period<T: Scalar>(p: &[Vec<T>]) -> usize {
    let n = p.len();
    let mut level = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::from([0usize]);
    level[0] = 0;
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if p[u][v] > T::zero() && level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut g = 0usize;
    for u in 0..n {
        for v in 0..n {
            if p[u][v] > T::zero() && level[u] != usize::MAX && level[v] != usize::MAX {
                let d = (level[u] + 1).abs_diff(level[v]);
                g = gcd(g, d);
            }
        }
    }
    g
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Solves `pi P = pi`, `sum(pi) = 1` directly.
pub fn stationary_distribution<T: Scalar>(p: &[Vec<T>]) -> Result<Vec<T>> {
    validate_stochastic(p)?;
    if !is_irreducible(p) {
        return Err(Error::Reducible("transition digraph is not strongly connected".into()));
    }
    let n = p.len();
    // Rows of the system are the balance equations (P^T - I) pi = 0 with the
    // last one replaced by normalization.
    let mut a: Matrix<T> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| p[j][i] - if i == j { T::one() } else { T::zero() })
                .collect()
        })
        .collect();
    a[n - 1] = vec![T::one(); n];
    let mut rhs = vec![T::zero(); n];
    rhs[n - 1] = T::one();
    let pi = linalg::solve(a, rhs)
        .ok_or_else(|| Error::Reducible("singular balance equations".into()))?;
    if pi.iter().any(|&x| x <= T::zero()) {
        return Err(Error::Reducible("stationary distribution has a zero entry".into()));
    }
    Ok(pi)
}

/// Adjoint of `p` on `l2(pi)`: `p'_{xy} = pi_y p_{yx} / pi_x`.
pub fn adjoint<T: Scalar>(p: &[Vec<T>], pi: &[T]) -> Result<Matrix<T>> {
    let n = p.len();
    if pi.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: pi.len(),
        });
    }
    Ok((0..n)
        .map(|x| (0..n).map(|y| pi[y] * p[y][x] / pi[x]).collect())
        .collect())
}

/// `P' P`, self-adjoint on `l2(pi)`.
pub fn multiplicative_symmetrization<T: Scalar>(p: &[Vec<T>], pi: &[T]) -> Result<Matrix<T>> {
    let adj = adjoint(p, pi)?;
    Ok(linalg::matmul(&adj, &p.to_vec()))
}

/// One minus the second-largest eigenvalue of a self-adjoint stochastic matrix.
pub fn eigenvalue_gap<T: Scalar>(p_dot: &[Vec<T>]) -> Result<T> {
    validate_stochastic(p_dot).map_err(|e| match e {
        Error::InvalidTransition(m) => Error::InvalidTransition(format!("symmetrization: {m}")),
        other => other,
    })?;
    if !is_irreducible(p_dot) {
        return Err(Error::Reducible("multiplicative symmetrization".into()));
    }
    let n = p_dot.len();
    if n == 1 {
        return Ok(T::one());
    }
    let pi = stationary_distribution(p_dot)?;
    let root: Vec<T> = pi.iter().map(|x| x.sqrt()).collect();
    let sym: Matrix<T> = (0..n)
        .map(|x| (0..n).map(|y| root[x] * p_dot[x][y] / root[y]).collect())
        .collect();
    let tol = T::of(1e-9).max(T::TIE_TOLERANCE);
    for x in 0..n {
        for y in x + 1..n {
            if (sym[x][y] - sym[y][x]).abs() > tol {
                return Err(Error::InvalidTransition(
                    "matrix is not self-adjoint on l2(pi)".into(),
                ));
            }
        }
    }
    let eig = linalg::symmetric_eigenvalues(sym);
    Ok(T::one() - eig[1])
}

/// `V_q = ||(q_x / pi_x)||_2`, the initial-distribution factor of the deviation bound.
pub fn initial_factor<T: Scalar>(q: &[T], pi: &[T]) -> T {
    q.iter()
        .zip(pi)
        .map(|(&qx, &px)| (qx / px) * (qx / px))
        .sum::<T>()
        .sqrt()
}

/// `V_q exp(-T gamma^2 upsilon / 28)`.
pub fn lezaud_bound<T: Scalar>(q: &[T], pi: &[T], upsilon: T, horizon: usize, gamma: T) -> T {
    initial_factor(q, pi) * (-(T::of_usize(horizon) * gamma * gamma * upsilon) / T::of(28.0)).exp()
}

/// Largest transient deviation `|sum_{t<=T} E r(X_t) - T mu|` over initial
/// states and horizons `T <= horizon`, computed by exact distribution propagation.
pub fn transient_constant<T: Scalar>(chain: &MarkovChain<T>, rewards: &[T], horizon: usize) -> Result<T> {
    let n = chain.len();
    if rewards.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: rewards.len(),
        });
    }
    let mu: T = chain.stationary().iter().zip(rewards).map(|(&p, &r)| p * r).sum();
    let mut worst = T::zero();
    for start in 0..n {
        let mut dist = vec![T::zero(); n];
        dist[start] = T::one();
        let mut acc = T::zero();
        for _ in 0..horizon {
            acc = acc + dist.iter().zip(rewards).map(|(&d, &r)| d * r).sum::<T>() - mu;
            worst = worst.max(acc.abs());
            let mut next = vec![T::zero(); n];
            for (x, &dx) in dist.iter().enumerate() {
                if dx == T::zero() {
                    continue;
                }
                for (y, &pxy) in chain.transition()[x].iter().enumerate() {
                    next[y] = next[y] + dx * pxy;
                }
            }
            dist = next;
        }
    }
    Ok(worst)
}

/// Constants of the Markovian exploration threshold and regret bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkovBoundParams<T> {
    /// Largest state-space size over resources.
    pub s_max: usize,
    /// Smallest stationary probability over resources and states.
    pub pi_min: T,
    /// Largest `sum_s r_k(s, n)` over `(k, n)`.
    pub r_sigma_max: T,
    /// Smallest `sum_s r_k(s, n)` over `(k, n)`.
    pub r_sigma_min: T,
    /// Smallest eigenvalue gap over resources.
    pub upsilon_min: T,
    /// Transient constant, the maximum over resources.
    pub c_p: T,
}

impl<T: Scalar> MarkovBoundParams<T> {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: T| x > T::zero() && x <= T::one();
        if self.s_max < 1 {
            return Err(Error::InvalidParameter("S_max must be at least 1".into()));
        }
        if !unit(self.pi_min) {
            return Err(Error::InvalidParameter(format!("pi_min {} outside (0,1]", self.pi_min)));
        }
        if !unit(self.upsilon_min) {
            return Err(Error::InvalidParameter(format!(
                "upsilon_min {} outside (0,1]",
                self.upsilon_min
            )));
        }
        if self.r_sigma_min <= T::zero() || self.r_sigma_max < self.r_sigma_min {
            return Err(Error::InvalidParameter("reward-sum bounds must satisfy 0 < min <= max".into()));
        }
        if self.c_p < T::zero() {
            return Err(Error::InvalidParameter("C_P must be nonnegative".into()));
        }
        Ok(())
    }

    /// `(1/log 2 + sqrt(2L) / (10 r_sigma_min)) S_max / pi_min`, the factor that
    /// replaces one in the Markovian regret terms.
    pub fn deviation_factor(&self, exploration_constant: T) -> T {
        let two = T::of(2.0);
        (T::one() / two.ln() + (two * exploration_constant).sqrt() / (T::of(10.0) * self.r_sigma_min))
            * T::of_usize(self.s_max)
            / self.pi_min
    }
}
