//! Constants report for a scenario: mean table, optimum and gaps, exploration
//! thresholds, the hitting bound and the chains' eigenvalue gaps.

use std::fmt::{self, Write as _};

use anyhow::Result;
use resshare::allocation::{optimal_assignment, optimal_symmetric};
use resshare::constants::{exploration_constant, exploration_constant_scaled, markov_threshold, worst_case_hitting_bound, ModelKind};
use resshare::markov::MarkovBoundParams;
use resshare::Scenario;
use serde::{Deserialize, Serialize};

/// Exploration constants implied by one accuracy value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonRow {
    pub source: String,
    pub epsilon: f64,
    /// `1/eps^2`, rounded.
    pub l_iid: u64,
    /// `4/eps^2`, rounded.
    pub l_iid_4x: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub scenario: String,
    pub users: usize,
    pub resources: usize,
    pub user_specific: bool,
    /// `means[user][k][n - 1]`; a single entry for user-independent rewards.
    pub means: Vec<Vec<Vec<f64>>>,
    pub reward_scale: f64,
    pub v_star: f64,
    /// Maximizers, as count vectors or 1-based assignments.
    pub best: Vec<String>,
    pub unique: bool,
    pub delta_min: f64,
    pub delta_max: f64,
    /// `delta_min / (2M)`.
    pub epsilon: f64,
    /// `delta_min / 2`.
    pub half_gap: f64,
    pub epsilons: Vec<EpsilonRow>,
    /// Worst-case expected settling rounds; absent for user-specific rewards.
    pub o_b: Option<f64>,
    /// Eigenvalue gap of each Markov resource's symmetrized chain.
    pub eigen_gaps: Vec<Option<f64>>,
    pub markov: Option<MarkovBoundParams<f64>>,
    pub markov_threshold: Option<f64>,
    /// Exploration constant with the Markov threshold folded in.
    pub l_markov: Option<u64>,
}

/// Builds the report. `extra` lists further `(label, epsilon)` values to compare against.
pub fn cmd_analyze(scenario: &Scenario, extra: &[(String, f64)]) -> Result<AnalysisReport> {
    let users = scenario.users();
    let (means, v_star, best, unique, delta_min, delta_max, epsilon, o_b) = if scenario.is_user_specific() {
        let table = scenario.user_mean_table()?;
        let rep = optimal_assignment(&table)?;
        let means = (0..users).map(|i| rows(&table.user(i))).collect();
        let best = rep.best.iter().map(|a| a.to_string()).collect();
        (means, rep.v_star, best, rep.is_unique(), rep.delta_min, rep.delta_max, rep.epsilon, None)
    } else {
        let table = scenario.mean_table()?;
        let rep = optimal_symmetric(&table)?;
        let o_b = worst_case_hitting_bound::<f64>(rep.preferred().counts())?;
        let best = rep.best.iter().map(|a| a.to_string()).collect();
        (vec![rows(&table)], rep.v_star, best, rep.is_unique(), rep.delta_min, rep.delta_max, rep.epsilon, Some(o_b))
    };
    let mut epsilons = Vec::new();
    let mut push = |source: &str, eps: f64| -> Result<()> {
        if eps.is_finite() && eps > 0.0 {
            epsilons.push(EpsilonRow {
                source: source.to_string(),
                epsilon: eps,
                l_iid: exploration_constant(eps, ModelKind::Iid)?,
                l_iid_4x: exploration_constant_scaled(eps, 4.0, ModelKind::Iid)?,
            });
        }
        Ok(())
    };
    push("gap/(2M)", epsilon)?;
    push("gap/2", delta_min / 2.0)?;
    for (label, eps) in extra {
        push(label, *eps)?;
    }
    let eigen_gaps = scenario
        .resources()
        .iter()
        .map(|r| r.process().chain().map(|c| c.eigenvalue_gap()))
        .collect();
    let markov = scenario.markov_bound_params()?;
    let markov_thr = markov.as_ref().map(markov_threshold);
    let l_markov = match (&markov, epsilon.is_finite()) {
        (Some(p), true) => Some(exploration_constant(epsilon, ModelKind::Markov(p))?),
        _ => None,
    };
    Ok(AnalysisReport {
        scenario: scenario.name().to_string(),
        users,
        resources: scenario.resource_count(),
        user_specific: scenario.is_user_specific(),
        means,
        reward_scale: scenario.reward_scale(),
        v_star,
        best,
        unique,
        delta_min,
        delta_max,
        epsilon,
        half_gap: delta_min / 2.0,
        epsilons,
        o_b,
        eigen_gaps,
        markov,
        markov_threshold: markov_thr,
        l_markov,
    })
}

fn rows(table: &resshare::MeanTable) -> Vec<Vec<f64>> {
    (0..table.resources())
        .map(|k| (1..=table.users()).map(|n| table.get(k, n).unwrap_or(f64::NAN)).collect())
        .collect()
}

impl fmt::Display for AnalysisReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario {} ({} users, {} resources)", self.scenario, self.users, self.resources)?;
        if self.reward_scale != 1.0 {
            writeln!(f, "rewards divided by {:.6}", self.reward_scale)?;
        }
        for (i, table) in self.means.iter().enumerate() {
            if self.user_specific {
                writeln!(f, "mean rewards of user {}:", i + 1)?;
            } else {
                writeln!(f, "mean rewards mu[k][n]:")?;
            }
            let mut header = String::from("  k\\n");
            for n in 1..=self.users {
                write!(header, " {n:>10}").unwrap();
            }
            writeln!(f, "{header}")?;
            for (k, row) in table.iter().enumerate() {
                write!(f, "  {:>3}", k + 1)?;
                for v in row {
                    write!(f, " {v:>10.6}")?;
                }
                writeln!(f)?;
            }
        }
        writeln!(f, "v* = {:.6}", self.v_star)?;
        writeln!(f, "optimum: {}{}", self.best.join(" "), if self.unique { " (unique)" } else { "" })?;
        writeln!(f, "gap = {:.6}, largest gap = {:.6}", self.delta_min, self.delta_max)?;
        writeln!(f, "epsilon = gap/(2M) = {:.6}; gap/2 = {:.6}", self.epsilon, self.half_gap)?;
        writeln!(f, "exploration constants:")?;
        for row in &self.epsilons {
            writeln!(
                f,
                "  {:<12} eps = {:.6}  L = {:>8}  4L = {:>8}",
                row.source, row.epsilon, row.l_iid, row.l_iid_4x
            )?;
        }
        if let Some(o) = self.o_b {
            writeln!(f, "O_B = {o:.6}")?;
        }
        for (k, g) in self.eigen_gaps.iter().enumerate() {
            if let Some(g) = g {
                writeln!(f, "resource {} eigenvalue gap = {g:.6}", k + 1)?;
            }
        }
        if let (Some(m), Some(t)) = (&self.markov, self.markov_threshold) {
            writeln!(
                f,
                "markov: S_max = {}, pi_min = {:.6}, r_sum in [{:.6}, {:.6}], gap_min = {:.6}, C_P = {:.6}",
                m.s_max, m.pi_min, m.r_sigma_min, m.r_sigma_max, m.upsilon_min, m.c_p
            )?;
            writeln!(f, "markov threshold = {t:.3}")?;
        }
        if let Some(l) = self.l_markov {
            writeln!(f, "L (markov) = {l}")?;
        }
        Ok(())
    }
}
