//! Multi-seed experiment runs and their output files.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use rayon::prelude::*;
use resshare::allocation::{optimal_assignment, optimal_symmetric, AllocationCount, Assignment};
use resshare::schedule::ExplorationSchedule;
use resshare::sim::{
    channel_share, derive_seed, mean_se, percent_optimal, percent_optimal_assignments, regret_basic,
    regret_with_costs, run_episode_with, theoretical_bound, BoundAlgorithm, BoundModel, BoundParams, CostLedger,
    EpisodeOptions, MeanSe,
};
use resshare::Scenario;
use serde::{Deserialize, Serialize};

use crate::config::{AlgorithmName, ExperimentConfig};
use crate::table::{write_table, Column};

/// Optimal value and maximizers of the scenario's true means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub v_star: f64,
    /// Count vectors for user-independent rewards.
    pub counts: Vec<AllocationCount>,
    /// Explicit assignments for user-specific rewards.
    pub assignments: Vec<Assignment>,
}

impl Optimum {
    pub fn of(scenario: &Scenario) -> Result<Self> {
        if scenario.is_user_specific() {
            let rep = optimal_assignment(&scenario.user_mean_table()?)?;
            Ok(Self {
                v_star: rep.v_star,
                counts: Vec::new(),
                assignments: rep.best,
            })
        } else {
            let rep = optimal_symmetric(&scenario.mean_table()?)?;
            Ok(Self {
                v_star: rep.v_star,
                counts: rep.best,
                assignments: Vec::new(),
            })
        }
    }
}

/// What one episode contributes to the aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub seed: u64,
    pub regret: Vec<f64>,
    pub regret_cost: Vec<f64>,
    pub percent_optimal: Vec<f64>,
    /// `share[c][k]` for the configured user.
    pub share: Vec<Vec<f64>>,
    pub ledger: CostLedger,
}

/// Aggregate over seeds for one exploration setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub exploration: Option<ExplorationSchedule>,
    pub label: String,
    pub plan_len: usize,
    /// Slots at which regret is sampled.
    pub times: Vec<u64>,
    pub regret: MeanSe,
    pub regret_cost: MeanSe,
    /// Closed-form bound at each sampled slot, cost-free and with costs.
    pub bound: Option<(Vec<f64>, Vec<f64>)>,
    pub checkpoints: Vec<u64>,
    pub percent_optimal: MeanSe,
    /// `share.mean[c * K + k]`.
    pub share: MeanSe,
    pub episodes: Vec<EpisodeSummary>,
}

impl SweepResult {
    /// Mean regret at slot `t`, if sampled.
    pub fn regret_at(&self, t: u64) -> Option<f64> {
        self.times.iter().position(|&x| x == t).map(|i| self.regret.mean[i])
    }

    pub fn bound_at(&self, t: u64) -> Option<f64> {
        let i = self.times.iter().position(|&x| x == t)?;
        self.bound.as_ref().map(|(b, _)| b[i])
    }

    pub fn percent_at(&self, t: u64) -> Option<f64> {
        self.checkpoints.iter().position(|&x| x == t).map(|i| self.percent_optimal.mean[i])
    }

    /// Mean share of resource `k` (0-based) at checkpoint `t`.
    pub fn share_at(&self, t: u64, k: usize, resources: usize) -> Option<f64> {
        self.checkpoints
            .iter()
            .position(|&x| x == t)
            .map(|i| self.share.mean[i * resources + k])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub scenario: String,
    pub algorithm: AlgorithmName,
    pub users: usize,
    pub resources: usize,
    pub horizon: u64,
    pub seeds: Vec<u64>,
    pub optimum: Optimum,
    pub sweeps: Vec<SweepResult>,
}

/// Slots where regret is sampled: about twenty per decade, the checkpoints,
/// the 1-2-5 series and the horizon.
pub fn sample_times(horizon: u64, checkpoints: &[u64]) -> Vec<u64> {
    let mut times: Vec<u64> = Vec::new();
    let decades = (horizon as f64).log10();
    let steps = (decades * 20.0).ceil() as i64;
    for j in 0..=steps {
        times.push(10f64.powf(j as f64 / 20.0).round() as u64);
    }
    let mut p = 1u64;
    while p <= horizon {
        times.extend([p, 2 * p, 5 * p]);
        p = p.saturating_mul(10);
    }
    times.extend_from_slice(checkpoints);
    times.push(horizon);
    times.retain(|&t| t >= 1 && t <= horizon);
    times.sort_unstable();
    times.dedup();
    times
}

fn summarize(
    config: &ExperimentConfig,
    scenario: &Scenario,
    optimum: &Optimum,
    schedule: ExplorationSchedule,
    seed: u64,
    times: &[u64],
    traces_dir: Option<&Path>,
) -> Result<(EpisodeSummary, usize)> {
    let algorithm = config.algorithm(schedule);
    let options = EpisodeOptions { plan: config.plan };
    let trace = run_episode_with(scenario, &algorithm, config.horizon, seed, options)
        .with_context(|| format!("episode with seed {seed}"))?;
    let checkpoints = config.checkpoints();
    let ledger = CostLedger::from_trace(&trace, config.costs);
    let basic = regret_basic(&trace, optimum.v_star);
    let with_costs = regret_with_costs(&trace, &ledger, optimum.v_star)?;
    let pick = |curve: &[f64]| times.iter().map(|&t| curve[t as usize - 1]).collect::<Vec<_>>();
    let percent = if scenario.is_user_specific() {
        percent_optimal_assignments(&trace, &optimum.assignments, &checkpoints)?
    } else {
        percent_optimal(&trace, &optimum.counts, &checkpoints)?
    };
    let share = channel_share(&trace, config.share_user - 1, &checkpoints)?;
    if let Some(dir) = traces_dir {
        let path = dir.join(format!("trace-{seed}.csv"));
        let file = fs::File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
        trace.write_columns(std::io::BufWriter::new(file))?;
    }
    Ok((
        EpisodeSummary {
            seed,
            regret: pick(&basic),
            regret_cost: pick(&with_costs),
            percent_optimal: percent,
            share,
            ledger,
        },
        trace.plan_len,
    ))
}

fn label(config: &ExperimentConfig, schedule: Option<ExplorationSchedule>) -> String {
    match schedule {
        Some(s) => format!("L-{s}"),
        None => config.algorithm_label().to_string(),
    }
}

impl ExperimentConfig {
    fn algorithm_label(&self) -> &'static str {
        match self.algorithm {
            AlgorithmName::Dloe => "dloe",
            AlgorithmName::Dlc => "dlc",
            AlgorithmName::Oracle => "oracle",
            AlgorithmName::Random => "random",
        }
    }
}

/// Runs every seed of every exploration setting. When `out` is given, traces
/// are written there as they finish (if enabled).
pub fn run_experiment(config: &ExperimentConfig, out: Option<&Path>) -> Result<RunOutcome> {
    let scenario = config.validate()?;
    let optimum = Optimum::of(&scenario)?;
    let checkpoints = config.checkpoints();
    let times = sample_times(config.horizon, &checkpoints);
    let seeds: Vec<u64> = (0..config.seeds).map(|i| derive_seed(config.master_seed, i)).collect();
    let settings: Vec<Option<ExplorationSchedule>> = if config.learns() {
        config.schedules(&scenario)?.into_iter().map(Some).collect()
    } else {
        vec![None]
    };
    let resources = scenario.resource_count();
    let mut sweeps = Vec::with_capacity(settings.len());
    for schedule in settings {
        let label = label(config, schedule);
        let traces_dir = match (out, config.save_traces) {
            (Some(dir), true) => {
                let d = dir.join(&label).join("traces");
                fs::create_dir_all(&d).with_context(|| format!("cannot create {}", d.display()))?;
                Some(d)
            }
            _ => None,
        };
        let sched = schedule.unwrap_or(ExplorationSchedule::Log);
        let results: Vec<(EpisodeSummary, usize)> = seeds
            .par_iter()
            .map(|&seed| summarize(config, &scenario, &optimum, sched, seed, &times, traces_dir.as_deref()))
            .collect::<Result<_>>()?;
        let plan_len = results.first().map_or(0, |r| r.1);
        let episodes: Vec<EpisodeSummary> = results.into_iter().map(|r| r.0).collect();
        let regret = mean_se(&episodes.iter().map(|e| e.regret.clone()).collect::<Vec<_>>());
        let regret_cost = mean_se(&episodes.iter().map(|e| e.regret_cost.clone()).collect::<Vec<_>>());
        let percent = mean_se(&episodes.iter().map(|e| e.percent_optimal.clone()).collect::<Vec<_>>());
        let share = mean_se(&episodes.iter().map(|e| e.share.concat()).collect::<Vec<_>>());
        let bound = bound_series(config, &scenario, schedule, plan_len, &times)?;
        sweeps.push(SweepResult {
            exploration: schedule,
            label,
            plan_len,
            times: times.clone(),
            regret,
            regret_cost,
            bound,
            checkpoints: checkpoints.clone(),
            percent_optimal: percent,
            share,
            episodes,
        });
    }
    debug_assert!(sweeps.iter().all(|s| s.share.mean.len() == checkpoints.len() * resources));
    Ok(RunOutcome {
        scenario: scenario.name().to_string(),
        algorithm: config.algorithm,
        users: scenario.users(),
        resources,
        horizon: config.horizon,
        seeds,
        optimum,
        sweeps,
    })
}

/// Bound overlay for a constant exploration setting; `None` for other schedules and policies.
pub fn bound_series(
    config: &ExperimentConfig,
    scenario: &Scenario,
    schedule: Option<ExplorationSchedule>,
    plan_len: usize,
    times: &[u64],
) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
    let (Some(l), Some(algorithm)) = (
        schedule.and_then(|s| s.constant()),
        match config.algorithm {
            AlgorithmName::Dloe => Some(BoundAlgorithm::Dloe),
            AlgorithmName::Dlc => Some(BoundAlgorithm::Dlc),
            _ => None,
        },
    ) else {
        return Ok(None);
    };
    let model = if scenario.is_markov() { BoundModel::Markov } else { BoundModel::Iid };
    let mut params = BoundParams::for_scenario(scenario, algorithm, plan_len, l, config.a, config.b, config.costs)?;
    let with_costs = times
        .iter()
        .map(|&t| theoretical_bound(t as f64, &params, model))
        .collect::<resshare::Result<Vec<_>>>()?;
    params.costs = Default::default();
    let plain = times
        .iter()
        .map(|&t| theoretical_bound(t as f64, &params, model))
        .collect::<resshare::Result<Vec<_>>>()?;
    Ok(Some((plain, with_costs)))
}

/// The machine-readable run report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub status: String,
    pub error: Option<String>,
    pub config: ExperimentConfig,
    pub master_seed: u64,
    pub seeds: Vec<u64>,
    pub elapsed_seconds: f64,
    pub optimum: Option<Optimum>,
    pub sweeps: Vec<SweepReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub label: String,
    pub exploration: Option<ExplorationSchedule>,
    pub plan_len: usize,
    pub checkpoints: Vec<u64>,
    pub percent_optimal: MeanSe,
    pub share: MeanSe,
    pub final_regret: f64,
    pub final_regret_cost: f64,
    pub mean_computations: f64,
    pub mean_switches: f64,
    pub mean_communications: f64,
}

impl SweepReport {
    fn of(s: &SweepResult) -> Self {
        let n = s.episodes.len().max(1) as f64;
        let avg = |f: &dyn Fn(&CostLedger) -> u64| s.episodes.iter().map(|e| f(&e.ledger) as f64).sum::<f64>() / n;
        Self {
            label: s.label.clone(),
            exploration: s.exploration,
            plan_len: s.plan_len,
            checkpoints: s.checkpoints.clone(),
            percent_optimal: s.percent_optimal.clone(),
            share: s.share.clone(),
            final_regret: *s.regret.mean.last().unwrap_or(&0.0),
            final_regret_cost: *s.regret_cost.mean.last().unwrap_or(&0.0),
            mean_computations: avg(&|l| l.total_computations()),
            mean_switches: avg(&|l| l.total_switches()),
            mean_communications: avg(&|l| l.total_communications()),
        }
    }
}

/// Output directory: the explicit one, the config's, `$RESSHARE_OUT`, or `results`.
pub fn resolve_out(explicit: Option<&Path>, config: &ExperimentConfig) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| config.out.clone())
        .or_else(|| std::env::var_os(crate::config::OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"))
}

/// Runs the experiment and writes every output file under `out`. A failed run
/// still writes `report.json` with status `failed`.
pub fn cmd_run(config: &ExperimentConfig, out: &Path) -> Result<RunOutcome> {
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let start = Instant::now();
    let result = run_experiment(config, Some(out));
    let elapsed = start.elapsed().as_secs_f64();
    let seeds: Vec<u64> = (0..config.seeds).map(|i| derive_seed(config.master_seed, i)).collect();
    let mut report = RunReport {
        status: "ok".into(),
        error: None,
        config: config.clone(),
        master_seed: config.master_seed,
        seeds,
        elapsed_seconds: elapsed,
        optimum: None,
        sweeps: Vec::new(),
    };
    match &result {
        Ok(outcome) => {
            for sweep in &outcome.sweeps {
                write_sweep(&out.join(&sweep.label), sweep, outcome.resources)?;
            }
            report.optimum = Some(outcome.optimum.clone());
            report.sweeps = outcome.sweeps.iter().map(SweepReport::of).collect();
        }
        Err(e) => {
            report.status = "failed".into();
            report.error = Some(format!("{e:#}"));
        }
    }
    let path = out.join("report.json");
    fs::write(&path, serde_json::to_string_pretty(&report)?).with_context(|| format!("cannot write {}", path.display()))?;
    result
}

fn write_sweep(dir: &Path, sweep: &SweepResult, resources: usize) -> Result<()> {
    fs::create_dir_all(dir)?;
    let times: Vec<f64> = sweep.times.iter().map(|&t| t as f64).collect();
    let mut cols = vec![
        Column::new("t", times),
        Column::new("regret_mean", sweep.regret.mean.clone()),
        Column::new("regret_se", sweep.regret.se.clone()),
        Column::new("regret_cost_mean", sweep.regret_cost.mean.clone()),
        Column::new("regret_cost_se", sweep.regret_cost.se.clone()),
    ];
    if let Some((plain, costs)) = &sweep.bound {
        cols.push(Column::new("bound", plain.clone()));
        cols.push(Column::new("bound_cost", costs.clone()));
    }
    write_table(&dir.join("regret.csv"), &cols)?;

    let cps: Vec<f64> = sweep.checkpoints.iter().map(|&t| t as f64).collect();
    write_table(
        &dir.join("percent_optimal.csv"),
        &[
            Column::new("t", cps.clone()),
            Column::new("percent_mean", sweep.percent_optimal.mean.clone()),
            Column::new("percent_se", sweep.percent_optimal.se.clone()),
        ],
    )?;

    let mut share_cols = vec![Column::new("t", cps)];
    for k in 0..resources {
        let pick = |v: &[f64]| (0..sweep.checkpoints.len()).map(|c| v[c * resources + k]).collect::<Vec<_>>();
        share_cols.push(Column::new(format!("resource{}_mean", k + 1), pick(&sweep.share.mean)));
        share_cols.push(Column::new(format!("resource{}_se", k + 1), pick(&sweep.share.se)));
    }
    write_table(&dir.join("channel_share.csv"), &share_cols)?;
    Ok(())
}
