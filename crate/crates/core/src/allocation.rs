//! Allocations of users to resources, their values under a mean-reward table,
//! and exhaustive search for the optimal allocation with its suboptimality gap.
//!
//! Resources and users are 0-based throughout; congestion levels are 1-based
//! (`n` users on a resource, `1 <= n <= M`).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Number of users on each resource; the counts sum to the number of users.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AllocationCount(Vec<usize>);

impl AllocationCount {
    /// Builds a count vector; `users` must equal the sum of `counts`.
    pub fn new(counts: Vec<usize>, users: usize) -> Result<Self> {
        let total: usize = counts.iter().sum();
        if total != users {
            return Err(Error::InvalidParameter(format!(
                "allocation {counts:?} places {total} users, expected {users}"
            )));
        }
        Ok(Self(counts))
    }

    /// Congestion vector induced by an assignment.
    pub fn from_assignment(assignment: &Assignment, resources: usize) -> Self {
        let mut counts = vec![0; resources];
        for &k in assignment.choices() {
            counts[k] += 1;
        }
        Self(counts)
    }

    pub fn counts(&self) -> &[usize] {
        &self.0
    }

    pub fn users(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn resources(&self) -> usize {
        self.0.len()
    }

    /// Resources used by at least one user.
    pub fn support(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&k| self.0[k] > 0).collect()
    }
}

impl fmt::Display for AllocationCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(usize::to_string).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Resource chosen by each user.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assignment(Vec<usize>);

impl Assignment {
    pub fn new(choices: Vec<usize>, resources: usize) -> Result<Self> {
        if let Some(&bad) = choices.iter().find(|&&k| k >= resources) {
            return Err(Error::InvalidParameter(format!(
                "resource {bad} out of range for {resources} resources"
            )));
        }
        Ok(Self(choices))
    }

    pub fn choices(&self) -> &[usize] {
        &self.0
    }

    pub fn users(&self) -> usize {
        self.0.len()
    }

    /// Number of users sharing each user's resource.
    pub fn congestion_of_users(&self, resources: usize) -> Vec<usize> {
        let counts = AllocationCount::from_assignment(self, resources);
        self.0.iter().map(|&k| counts.counts()[k]).collect()
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|k| (k + 1).to_string()).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

/// Desk-scale guards on the exhaustive searches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchLimits {
    pub max_users: usize,
    pub max_resources: usize,
    pub max_assignments: u128,
}

impl Default for SearchLimits {
    fn default() -> Self {
        Self {
            max_users: 8,
            max_resources: 8,
            max_assignments: 10_000_000,
        }
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

/// Every allocation of `users` users to `resources` resources, in descending
/// lexicographic order of the count vector.
pub fn enumerate_allocations(users: usize, resources: usize) -> Result<Vec<AllocationCount>> {
    enumerate_allocations_with(users, resources, SearchLimits::default())
}

pub fn enumerate_allocations_with(
    users: usize,
    resources: usize,
    limits: SearchLimits,
) -> Result<Vec<AllocationCount>> {
    if users == 0 || resources == 0 {
        return Err(Error::InvalidParameter("need at least one user and one resource".into()));
    }
    if users > limits.max_users || resources > limits.max_resources {
        return Err(Error::SearchTooLarge {
            what: "allocation set",
            size: binomial((users + resources - 1) as u128, (resources - 1) as u128),
            limit: binomial(
                (limits.max_users + limits.max_resources - 1) as u128,
                (limits.max_resources - 1) as u128,
            ),
        });
    }
    fn rec(remaining: usize, slots: usize, prefix: &mut Vec<usize>, out: &mut Vec<AllocationCount>) {
        if slots == 1 {
            prefix.push(remaining);
            out.push(AllocationCount(prefix.clone()));
            prefix.pop();
            return;
        }
        for n in (0..=remaining).rev() {
            prefix.push(n);
            rec(remaining - n, slots - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(users, resources, &mut Vec::with_capacity(resources), &mut out);
    Ok(out)
}

/// Mean reward `mu_{k,n}` of each resource-usage pair under user-independent rewards.
/// Entries may be absent for pairs that no allocation uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanTable<T> {
    resources: usize,
    users: usize,
    values: Vec<Option<T>>,
}

impl<T: Scalar> MeanTable<T> {
    pub fn empty(resources: usize, users: usize) -> Self {
        Self {
            resources,
            users,
            values: vec![None; resources * users],
        }
    }

    /// Builds a complete table from rows `rows[k][n - 1]`.
    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let resources = rows.len();
        let users = rows.first().map_or(0, Vec::len);
        let mut table = Self::empty(resources, users);
        for (k, row) in rows.into_iter().enumerate() {
            if row.len() != users {
                return Err(Error::DimensionMismatch {
                    expected: users,
                    found: row.len(),
                });
            }
            for (i, v) in row.into_iter().enumerate() {
                table.set(k, i + 1, v)?;
            }
        }
        Ok(table)
    }

    pub fn resources(&self) -> usize {
        self.resources
    }

    pub fn users(&self) -> usize {
        self.users
    }

    fn index(&self, k: usize, n: usize) -> Result<usize> {
        if k >= self.resources {
            return Err(Error::InvalidParameter(format!("resource {k} out of range")));
        }
        if n == 0 || n > self.users {
            return Err(Error::CongestionOutOfRange { n, max: self.users });
        }
        Ok(k * self.users + n - 1)
    }

    pub fn set(&mut self, k: usize, n: usize, value: T) -> Result<()> {
        let i = self.index(k, n)?;
        self.values[i] = Some(value);
        Ok(())
    }

    pub fn get(&self, k: usize, n: usize) -> Option<T> {
        self.index(k, n).ok().and_then(|i| self.values[i])
    }

    pub fn require(&self, k: usize, n: usize) -> Result<T> {
        self.get(k, n).ok_or(Error::MissingEntry { resource: k, n })
    }

    /// Largest absolute difference between matching entries.
    pub fn max_deviation(&self, other: &Self) -> Result<T> {
        if self.resources != other.resources || self.users != other.users {
            return Err(Error::DimensionMismatch {
                expected: self.values.len(),
                found: other.values.len(),
            });
        }
        let mut worst = T::zero();
        for (a, b) in self.values.iter().zip(&other.values) {
            match (a, b) {
                (Some(x), Some(y)) => worst = worst.max((*x - *y).abs()),
                (None, None) => {}
                _ => return Err(Error::InvalidParameter("tables cover different pairs".into())),
            }
        }
        Ok(worst)
    }
}

/// Mean reward `mu^i_{k,n}` for user-specific rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserMeanTable<T> {
    users: usize,
    resources: usize,
    values: Vec<Option<T>>,
}

impl<T: Scalar> UserMeanTable<T> {
    pub fn empty(users: usize, resources: usize) -> Self {
        Self {
            users,
            resources,
            values: vec![None; users * resources * users],
        }
    }

    /// Lifts a user-independent table to identical users.
    pub fn identical(table: &MeanTable<T>) -> Self {
        let mut out = Self::empty(table.users(), table.resources());
        for i in 0..table.users() {
            out.set_user(i, table);
        }
        out
    }

    /// Stacks per-user tables, which must share dimensions.
    pub fn from_users(tables: &[MeanTable<T>]) -> Result<Self> {
        let users = tables.len();
        let resources = tables.first().map_or(0, MeanTable::resources);
        let mut out = Self::empty(users, resources);
        for (i, t) in tables.iter().enumerate() {
            if t.users() != users || t.resources() != resources {
                return Err(Error::DimensionMismatch {
                    expected: users * resources,
                    found: t.users() * t.resources(),
                });
            }
            out.set_user(i, t);
        }
        Ok(out)
    }

    fn set_user(&mut self, i: usize, table: &MeanTable<T>) {
        let stride = self.resources * self.users;
        self.values[i * stride..(i + 1) * stride].copy_from_slice(&table.values);
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn resources(&self) -> usize {
        self.resources
    }

    /// The table of user `i`.
    pub fn user(&self, i: usize) -> MeanTable<T> {
        let stride = self.resources * self.users;
        MeanTable {
            resources: self.resources,
            users: self.users,
            values: self.values[i * stride..(i + 1) * stride].to_vec(),
        }
    }

    fn index(&self, i: usize, k: usize, n: usize) -> Result<usize> {
        if i >= self.users || k >= self.resources {
            return Err(Error::InvalidParameter(format!("user {i} / resource {k} out of range")));
        }
        if n == 0 || n > self.users {
            return Err(Error::CongestionOutOfRange { n, max: self.users });
        }
        Ok((i * self.resources + k) * self.users + n - 1)
    }

    pub fn set(&mut self, i: usize, k: usize, n: usize, value: T) -> Result<()> {
        let idx = self.index(i, k, n)?;
        self.values[idx] = Some(value);
        Ok(())
    }

    pub fn get(&self, i: usize, k: usize, n: usize) -> Option<T> {
        self.index(i, k, n).ok().and_then(|idx| self.values[idx])
    }

    pub fn require(&self, i: usize, k: usize, n: usize) -> Result<T> {
        self.get(i, k, n).ok_or(Error::MissingEntry { resource: k, n })
    }

    pub fn max_deviation(&self, other: &Self) -> Result<T> {
        if self.resources != other.resources || self.users != other.users {
            return Err(Error::DimensionMismatch {
                expected: self.values.len(),
                found: other.values.len(),
            });
        }
        let mut worst = T::zero();
        for (a, b) in self.values.iter().zip(&other.values) {
            match (a, b) {
                (Some(x), Some(y)) => worst = worst.max((*x - *y).abs()),
                (None, None) => {}
                _ => return Err(Error::InvalidParameter("tables cover different pairs".into())),
            }
        }
        Ok(worst)
    }

    /// Flattened values in `(user, resource, congestion)` order; absent entries are NaN.
    pub fn flatten(&self) -> Vec<T> {
        self.values.iter().map(|v| v.unwrap_or_else(T::nan)).collect()
    }

    pub fn from_flat(users: usize, resources: usize, flat: &[T]) -> Result<Self> {
        if flat.len() != users * resources * users {
            return Err(Error::DimensionMismatch {
                expected: users * resources * users,
                found: flat.len(),
            });
        }
        Ok(Self {
            users,
            resources,
            values: flat.iter().map(|&v| if v.is_nan() { None } else { Some(v) }).collect(),
        })
    }
}

/// `v(n) = sum_k n_k mu_{k, n_k}` over resources with `n_k > 0`.
pub fn value<T: Scalar>(allocation: &AllocationCount, table: &MeanTable<T>) -> Result<T> {
    if allocation.resources() != table.resources() {
        return Err(Error::DimensionMismatch {
            expected: table.resources(),
            found: allocation.resources(),
        });
    }
    let mut total = T::zero();
    for (k, &n) in allocation.counts().iter().enumerate() {
        if n > 0 {
            total = total + T::of_usize(n) * table.require(k, n)?;
        }
    }
    Ok(total)
}

/// `sum_i mu^i_{alpha_i, n_{alpha_i}(alpha)}`.
pub fn assignment_value<T: Scalar>(assignment: &Assignment, table: &UserMeanTable<T>) -> Result<T> {
    let congestion = assignment.congestion_of_users(table.resources());
    let mut total = T::zero();
    for (i, (&k, &n)) in assignment.choices().iter().zip(&congestion).enumerate() {
        total = total + table.require(i, k, n)?;
    }
    Ok(total)
}

/// Optimal value, every maximizer, and the minimum suboptimality gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport<T, A> {
    pub users: usize,
    pub v_star: T,
    /// Maximizers in ascending lexicographic order; `best[0]` is the tie-break choice.
    pub best: Vec<A>,
    /// `+inf` when every candidate is optimal.
    pub delta_min: T,
    /// `delta_min / (2M)`.
    pub epsilon: T,
    /// Largest suboptimality gap over all candidates.
    pub delta_max: T,
}

impl<T: Scalar, A> GapReport<T, A> {
    pub fn preferred(&self) -> &A {
        &self.best[0]
    }

    pub fn is_unique(&self) -> bool {
        self.best.len() == 1
    }
}

fn gap_report<T: Scalar, A: Ord>(users: usize, scored: Vec<(A, T)>) -> GapReport<T, A> {
    let v_star = scored
        .iter()
        .map(|(_, v)| *v)
        .fold(T::neg_infinity(), T::max);
    let mut best = Vec::new();
    let mut delta_min = T::infinity();
    let mut delta_max = T::zero();
    for (a, v) in scored {
        let gap = v_star - v;
        delta_max = delta_max.max(gap);
        if gap <= T::TIE_TOLERANCE {
            best.push(a);
        } else {
            delta_min = delta_min.min(gap);
        }
    }
    best.sort();
    GapReport {
        users,
        v_star,
        best,
        delta_min,
        epsilon: delta_min / (T::of(2.0) * T::of_usize(users)),
        delta_max,
    }
}

/// Exhaustive search over count allocations for user-independent rewards.
pub fn optimal_symmetric<T: Scalar>(table: &MeanTable<T>) -> Result<GapReport<T, AllocationCount>> {
    let candidates = enumerate_allocations(table.users(), table.resources())?;
    let scored = candidates
        .into_iter()
        .map(|n| value(&n, table).map(|v| (n, v)))
        .collect::<Result<Vec<_>>>()?;
    Ok(gap_report(table.users(), scored))
}

/// Iterator over all `K^M` assignments, user 0 most significant.
pub fn assignments(users: usize, resources: usize) -> impl Iterator<Item = Assignment> {
    let total = (resources as u128).pow(users as u32);
    (0..total).map(move |mut index| {
        let mut choices = vec![0; users];
        for slot in choices.iter_mut().rev() {
            *slot = (index % resources as u128) as usize;
            index /= resources as u128;
        }
        Assignment(choices)
    })
}

/// Exhaustive search over assignments for user-specific rewards.
pub fn optimal_assignment<T: Scalar>(table: &UserMeanTable<T>) -> Result<GapReport<T, Assignment>> {
    optimal_assignment_with(table, SearchLimits::default())
}

pub fn optimal_assignment_with<T: Scalar>(
    table: &UserMeanTable<T>,
    limits: SearchLimits,
) -> Result<GapReport<T, Assignment>> {
    let (users, resources) = (table.users(), table.resources());
    if users == 0 || resources == 0 {
        return Err(Error::InvalidParameter("need at least one user and one resource".into()));
    }
    let size = (resources as u128).checked_pow(users as u32).unwrap_or(u128::MAX);
    if size > limits.max_assignments {
        return Err(Error::SearchTooLarge {
            what: "assignment set",
            size,
            limit: limits.max_assignments,
        });
    }
    let scored = assignments(users, resources)
        .map(|a| assignment_value(&a, table).map(|v| (a, v)))
        .collect::<Result<Vec<_>>>()?;
    Ok(gap_report(users, scored))
}

/// True iff every estimate is within `delta_min / (2M)` of the truth, the
/// radius inside which the estimated and true maximizer sets coincide.
pub fn stability_check<T: Scalar>(estimates: &MeanTable<T>, truth: &MeanTable<T>, delta_min: T) -> Result<bool> {
    let radius = delta_min / (T::of(2.0) * T::of_usize(truth.users()));
    Ok(estimates.max_deviation(truth)? < radius)
}

/// User-specific counterpart of [`stability_check`].
pub fn stability_check_users<T: Scalar>(
    estimates: &UserMeanTable<T>,
    truth: &UserMeanTable<T>,
    delta_min: T,
) -> Result<bool> {
    let radius = delta_min / (T::of(2.0) * T::of_usize(truth.users()));
    Ok(estimates.max_deviation(truth)? < radius)
}
