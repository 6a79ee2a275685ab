//! Joint exploration sequences under which every user observes every
//! reachable resource-usage pair at least once per traversal.

use serde::{Deserialize, Serialize};

use crate::allocation::assignments;
use crate::error::{Error, Result};

/// Largest `K^M` accepted by [`build_full_plan`].
pub const FULL_PLAN_LIMIT: u128 = 1_000_000;

/// Per-user resource sequences of a common length `N'`, with the congestion
/// each user meets in each slot. Resources are 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplorationPlan {
    pub resources: usize,
    pub sequences: Vec<Vec<usize>>,
    pub congestion: Vec<Vec<usize>>,
}

/// Which construction to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanKind {
    #[default]
    Full,
    Compact,
}

impl ExplorationPlan {
    /// Builds a plan from joint sequences, deriving the congestion schedule.
    pub fn from_sequences(sequences: Vec<Vec<usize>>, resources: usize) -> Result<Self> {
        let congestion = derive_congestion(&sequences, resources)?;
        Ok(Self {
            resources,
            sequences,
            congestion,
        })
    }

    pub fn build(kind: PlanKind, users: usize, resources: usize) -> Result<Self> {
        match kind {
            PlanKind::Full => build_full_plan(users, resources),
            PlanKind::Compact => build_compact_plan(users, resources),
        }
    }

    pub fn users(&self) -> usize {
        self.sequences.len()
    }

    /// `N'`, the number of slots in one traversal.
    pub fn len(&self) -> usize {
        self.sequences.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn resource(&self, user: usize, z: usize) -> usize {
        self.sequences[user][z]
    }

    pub fn congestion_at(&self, user: usize, z: usize) -> usize {
        self.congestion[user][z]
    }
}

fn derive_congestion(sequences: &[Vec<usize>], resources: usize) -> Result<Vec<Vec<usize>>> {
    let len = sequences.first().map_or(0, Vec::len);
    if sequences.is_empty() || len == 0 {
        return Err(Error::InconsistentPlan("plan has no users or no slots".into()));
    }
    if sequences.iter().any(|s| s.len() != len) {
        return Err(Error::InconsistentPlan("sequences differ in length".into()));
    }
    if sequences.iter().flatten().any(|&k| k >= resources) {
        return Err(Error::InconsistentPlan(format!("resource outside 0..{resources}")));
    }
    let mut congestion = vec![vec![0; len]; sequences.len()];
    let mut counts = vec![0usize; resources];
    for z in 0..len {
        counts.iter_mut().for_each(|c| *c = 0);
        for s in sequences {
            counts[s[z]] += 1;
        }
        for (i, s) in sequences.iter().enumerate() {
            congestion[i][z] = counts[s[z]];
        }
    }
    Ok(congestion)
}

/// Every assignment in lexicographic order, user 0 most significant: `N' = K^M`.
pub fn build_full_plan(users: usize, resources: usize) -> Result<ExplorationPlan> {
    if users == 0 || resources == 0 {
        return Err(Error::InvalidParameter("need at least one user and one resource".into()));
    }
    let size = (resources as u128).checked_pow(users as u32).unwrap_or(u128::MAX);
    if size > FULL_PLAN_LIMIT {
        return Err(Error::SearchTooLarge {
            what: "full exploration plan (use the compact plan)",
            size,
            limit: FULL_PLAN_LIMIT,
        });
    }
    let mut sequences = vec![Vec::with_capacity(size as usize); users];
    for a in assignments(users, resources) {
        for (seq, &k) in sequences.iter_mut().zip(a.choices()) {
            seq.push(k);
        }
    }
    ExplorationPlan::from_sequences(sequences, resources)
}

/// `M K` slots: in block `j`, slot `k` puts users `0..j` on resource `k` and
/// spreads the others round-robin over the remaining resources. The result is
/// verified and replaced by the full plan when it misses a pair.
pub fn build_compact_plan(users: usize, resources: usize) -> Result<ExplorationPlan> {
    if users == 0 || resources == 0 {
        return Err(Error::InvalidParameter("need at least one user and one resource".into()));
    }
    let sequences = if resources == 1 {
        vec![vec![0; users]; users]
    } else {
        let mut sequences = vec![Vec::with_capacity(users * resources); users];
        for j in 1..=users {
            for k in 0..resources {
                for (i, seq) in sequences.iter_mut().enumerate() {
                    let choice = if i < j {
                        k
                    } else {
                        let step = (i - j) % (resources - 1);
                        (k + 1 + step) % resources
                    };
                    seq.push(choice);
                }
            }
        }
        sequences
    };
    let plan = ExplorationPlan::from_sequences(sequences, resources)?;
    match verify_coverage(&plan) {
        Ok(_) => Ok(plan),
        Err(Error::Uncovered(_)) => build_full_plan(users, resources),
        Err(e) => Err(e),
    }
}

/// Pairs `(k, n)` attainable under some joint assignment.
pub fn is_reachable(users: usize, resources: usize, n: usize) -> bool {
    (1..=users).contains(&n) && (resources >= 2 || n == users)
}

/// Visit counts `visits[user][k][n - 1]` over one traversal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coverage {
    pub visits: Vec<Vec<Vec<usize>>>,
}

impl Coverage {
    /// Smallest count over reachable pairs.
    pub fn min_reachable(&self) -> usize {
        let users = self.visits.len();
        let resources = self.visits.first().map_or(0, Vec::len);
        let mut min = usize::MAX;
        for per_user in &self.visits {
            for row in per_user {
                for (idx, &v) in row.iter().enumerate() {
                    if is_reachable(users, resources, idx + 1) {
                        min = min.min(v);
                    }
                }
            }
        }
        min
    }
}

/// Recomputes congestion from the joint sequences, then counts visits. Fails
/// with [`Error::Uncovered`] listing 1-based `(user, resource, n)` triples.
pub fn verify_coverage(plan: &ExplorationPlan) -> Result<Coverage> {
    let derived = derive_congestion(&plan.sequences, plan.resources)?;
    if derived != plan.congestion {
        return Err(Error::InconsistentPlan("stored congestion disagrees with the joint sequences".into()));
    }
    let (users, resources) = (plan.users(), plan.resources);
    let mut visits = vec![vec![vec![0; users]; resources]; users];
    for i in 0..users {
        for z in 0..plan.len() {
            visits[i][plan.sequences[i][z]][plan.congestion[i][z] - 1] += 1;
        }
    }
    let mut missing = Vec::new();
    for (i, per_user) in visits.iter().enumerate() {
        for (k, row) in per_user.iter().enumerate() {
            for (idx, &v) in row.iter().enumerate() {
                if v == 0 && is_reachable(users, resources, idx + 1) {
                    missing.push((i + 1, k + 1, idx + 1));
                }
            }
        }
    }
    if missing.is_empty() {
        Ok(Coverage { visits })
    } else {
        Err(Error::Uncovered(missing))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_plan_two_by_two() {
        let plan = build_full_plan(2, 2).unwrap();
        assert_eq!(plan.sequences, vec![vec![0, 0, 1, 1], vec![0, 1, 0, 1]]);
        assert_eq!(plan.congestion, vec![vec![2, 1, 1, 2], vec![2, 1, 1, 2]]);
        assert_eq!(verify_coverage(&plan).unwrap().min_reachable(), 1);
    }

    #[test]
    fn full_plan_single_user() {
        assert_eq!(build_full_plan(1, 2).unwrap().sequences, vec![vec![0, 1]]);
    }

    #[test]
    fn full_plan_guard() {
        assert!(matches!(build_full_plan(7, 8), Err(Error::SearchTooLarge { .. })));
    }

    #[test]
    fn compact_plan_shapes() {
        let p = build_compact_plan(2, 2).unwrap();
        assert_eq!(p.len(), 4);
        let p = build_compact_plan(2, 3).unwrap();
        assert_eq!(p.len(), 6);
        let single = build_compact_plan(3, 1).unwrap();
        assert_eq!(single.sequences, vec![vec![0; 3]; 3]);
        assert_eq!(single.congestion, vec![vec![3; 3]; 3]);
    }

    #[test]
    fn compact_plan_falls_back_when_no_short_cover_exists() {
        // Each user needs three congestion-2 visits and every slot of three
        // users on three resources supplies an even number of them, so no
        // nine-slot plan covers; the construction must fall back.
        let p = build_compact_plan(3, 3).unwrap();
        assert_eq!(p, build_full_plan(3, 3).unwrap());
        // With two resources, being alone on each resource and all three
        // together on each needs at least eight slots.
        let p = build_compact_plan(3, 2).unwrap();
        assert_eq!(p, build_full_plan(3, 2).unwrap());
    }

    #[test]
    fn missing_slot_is_reported() {
        let mut plan = build_full_plan(2, 2).unwrap();
        for seq in plan.sequences.iter_mut() {
            seq.remove(0);
        }
        let plan = ExplorationPlan::from_sequences(plan.sequences, 2).unwrap();
        match verify_coverage(&plan) {
            Err(Error::Uncovered(missing)) => assert_eq!(missing, vec![(1, 1, 2), (2, 1, 2)]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tampered_congestion_is_inconsistent() {
        let mut plan = build_full_plan(2, 2).unwrap();
        plan.congestion[0][0] = 1;
        assert!(matches!(verify_coverage(&plan), Err(Error::InconsistentPlan(_))));
    }
}
