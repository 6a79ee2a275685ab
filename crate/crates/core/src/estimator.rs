//! Running sample means of resource-usage pair rewards.

use serde::{Deserialize, Serialize};

use crate::allocation::MeanTable;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Counts `N_{k,n}` and sample means `mu_hat_{k,n}` of one user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorBank<T> {
    resources: usize,
    users: usize,
    counts: Vec<u64>,
    means: Vec<T>,
}

impl<T: Scalar> EstimatorBank<T> {
    pub fn new(resources: usize, users: usize) -> Self {
        Self {
            resources,
            users,
            counts: vec![0; resources * users],
            means: vec![T::zero(); resources * users],
        }
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

    /// Folds one reward into the running mean of `(k, n)`.
    pub fn observe(&mut self, k: usize, n: usize, reward: T) -> Result<()> {
        if !(reward >= T::zero() && reward <= T::one()) {
            return Err(Error::RewardOutOfRange(reward.to_f64_lossy()));
        }
        let i = self.index(k, n)?;
        self.counts[i] += 1;
        let count = T::from_u64(self.counts[i]).expect("count representable");
        self.means[i] = self.means[i] + (reward - self.means[i]) / count;
        Ok(())
    }

    pub fn count(&self, k: usize, n: usize) -> u64 {
        self.index(k, n).map_or(0, |i| self.counts[i])
    }

    pub fn mean(&self, k: usize, n: usize) -> Option<T> {
        let i = self.index(k, n).ok()?;
        (self.counts[i] > 0).then_some(self.means[i])
    }

    /// Sample means as a table; unvisited pairs are absent.
    pub fn to_table(&self) -> MeanTable<T> {
        let mut table = MeanTable::empty(self.resources, self.users);
        for k in 0..self.resources {
            for n in 1..=self.users {
                if let Some(m) = self.mean(k, n) {
                    table.set(k, n, m).expect("indices in range");
                }
            }
        }
        table
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn running_mean_examples() {
        let mut bank = EstimatorBank::<f64>::new(2, 2);
        bank.observe(0, 1, 0.7).unwrap();
        assert_eq!((bank.mean(0, 1), bank.count(0, 1)), (Some(0.7), 1));
        bank.observe(1, 2, 0.2).unwrap();
        bank.observe(1, 2, 0.8).unwrap();
        assert_eq!((bank.mean(1, 2), bank.count(1, 2)), (Some(0.5), 2));
        assert_eq!(bank.mean(0, 2), None);
        assert!(bank.observe(0, 3, 0.1).is_err());
        assert!(bank.observe(0, 1, 1.5).is_err());
    }
}
