//! Acceptance checks, one PASS/FAIL line each. Exits nonzero if any fails.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resshare::allocation::{optimal_assignment, AllocationCount, MeanTable, UserMeanTable};
use resshare::constants::{exploration_constant, exploration_constant_scaled, worst_case_hitting_bound, ModelKind};
use resshare::dloe::{exploit_choice, DloeAgent, DloeConfig, ExploitTarget, UpdatePolicy};
use resshare::markov::{lezaud_bound, MarkovChain};
use resshare::plan::{is_reachable, verify_coverage, ExplorationPlan, PlanKind};
use resshare::schedule::{BlockParams, ExplorationSchedule};
use resshare::sim::{
    audit_block_counts, derive_seed, regret_basic, regret_with_costs, run_episode, BoundAlgorithm,
    BoundParams, CostLedger, SlotKind, UnitCosts,
};
use resshare::Scenario;
use resshare_cli::config::ExperimentConfig;
use resshare_cli::run::SweepResult;
use resshare_cli::{cmd_analyze, run_experiment, RunOutcome};

struct Report {
    failures: usize,
}

impl Report {
    fn check(&mut self, id: &str, ok: bool, detail: String) {
        println!("{} criterion {id}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failures += 1;
        }
    }
}

fn scenarios() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios"))
}

fn reference() -> Scenario {
    Scenario::from_path(scenarios().join("reference_osa.toml")).expect("bundled scenario")
}

fn criterion_1(r: &mut Report) {
    let start = Instant::now();
    let report = cmd_analyze(&reference(), &[]).expect("analysis");
    let secs = start.elapsed().as_secs_f64();
    let ok = report.unique && report.best == ["(0,2,1)"] && secs < 1.0;
    r.check("1", ok, format!("optimum {:?} unique={} in {secs:.3}s", report.best, report.unique));
}

fn criterion_2(r: &mut Report) {
    let given = 0.0811;
    let l = exploration_constant(given, ModelKind::Iid).unwrap();
    let l4 = exploration_constant_scaled(given, 4.0, ModelKind::Iid).unwrap();
    let report = cmd_analyze(&reference(), &[]).unwrap();
    // Normalization divides every value by the same scale, so raw gaps scale back linearly.
    let scale = report.reward_scale;
    r.check(
        "2",
        l == 152 && l4 == 608,
        format!(
            "eps 0.0811 -> L={l}, 4L={l4}; derived eps: gap/(2M)={:.6} (L={}), gap/2={:.6}; unnormalized gap/(2M)={:.6}, gap/2={:.6}; none equals 0.0811",
            report.epsilon,
            report.epsilons[0].l_iid,
            report.half_gap,
            report.epsilon * scale,
            report.half_gap * scale
        ),
    );
}

fn reference_run() -> (RunOutcome, f64) {
    let cfg = ExperimentConfig::from_path(&scenarios().join("reference_dloe.toml")).unwrap();
    let start = Instant::now();
    let outcome = run_experiment(&cfg, None).expect("reference run");
    (outcome, start.elapsed().as_secs_f64())
}

fn sweep(outcome: &RunOutcome, l: f64) -> &SweepResult {
    outcome
        .sweeps
        .iter()
        .find(|s| s.exploration == Some(ExplorationSchedule::Constant(l)))
        .expect("sweep present")
}

fn criterion_3(r: &mut Report, outcome: &RunOutcome, secs: f64) {
    let a = sweep(outcome, 152.0);
    let b = sweep(outcome, 608.0);
    let (a4, a5) = (a.percent_at(10_000).unwrap(), a.percent_at(500_000).unwrap());
    let b5 = b.percent_at(500_000).unwrap();
    let ok = (75.0..=100.0).contains(&a5) && a5 > a4 && (45.0..=75.0).contains(&b5) && b5 < a5 && secs < 300.0;
    r.check(
        "3",
        ok,
        format!(
            "% optimal L=152: {:?}; L=608: {:?}; {} seeds in {secs:.1}s",
            rounded(&a.percent_optimal.mean),
            rounded(&b.percent_optimal.mean),
            outcome.seeds.len()
        ),
    );
}

fn rounded(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 100.0).round() / 100.0).collect()
}

fn criterion_4(r: &mut Report, outcome: &RunOutcome) {
    let k = outcome.resources;
    let a = sweep(outcome, 152.0).share_at(500_000, 0, k).unwrap();
    let b = sweep(outcome, 608.0).share_at(500_000, 0, k).unwrap();
    r.check(
        "4",
        a <= 10.0 && b <= 20.0,
        format!("user 1 channel 1 share at 5e5: L=152 {a:.2}%, L=608 {b:.2}%"),
    );
}

fn criterion_5(r: &mut Report, outcome: &RunOutcome) {
    let s = sweep(outcome, 152.0);
    let checkpoints = [10_000u64, 50_000, 100_000, 500_000];
    let mut ok = true;
    let mut parts = Vec::new();
    for &t in &checkpoints {
        let lt = (t as f64).ln();
        let i = s.times.iter().position(|&x| x == t).unwrap();
        let (plain, costs) = s.bound.as_ref().unwrap();
        let basic = s.regret.mean[i] / lt;
        let with_costs = s.regret_cost.mean[i] / lt;
        ok &= basic <= plain[i] / lt && with_costs <= costs[i] / lt;
        parts.push(format!("t={t}: R/ln t={basic:.1} (bound {:.1})", plain[i] / lt));
    }
    // Least-squares slope of R against ln t over the sampled slots in [1e4, 1e5].
    let pts: Vec<(f64, f64)> = s
        .times
        .iter()
        .zip(&s.regret.mean)
        .filter(|(&t, _)| (10_000..=100_000).contains(&t))
        .map(|(&t, &v)| ((t as f64).ln(), v))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let rise = s.regret_at(500_000).unwrap() - s.regret_at(100_000).unwrap();
    let allowed = 1.2 * slope * (5e5f64.ln() - 1e5f64.ln());
    ok &= rise <= allowed;
    parts.push(format!("R(5e5)-R(1e5)={rise:.1} <= {allowed:.1} (slope {slope:.1})"));
    r.check("5", ok, parts.join("; "));
}

fn criterion_6(r: &mut Report) {
    let scenario = reference();
    let cfg = ExperimentConfig::from_path(&scenarios().join("reference_dloe.toml")).unwrap();
    let l = 152.0;
    let alg = cfg.algorithm(ExplorationSchedule::Constant(l));
    let v_star = cmd_analyze(&scenario, &[]).unwrap().v_star;
    let costs = UnitCosts {
        c_cmp: 100.0,
        ..UnitCosts::default()
    };
    let mut ok = true;
    let mut detail = String::new();
    for i in 0..3 {
        let trace = run_episode(&scenario, &alg, 500_000, derive_seed(cfg.master_seed, i)).unwrap();
        let ledger = CostLedger::from_trace(&trace, costs);
        let basic = regret_basic(&trace, v_star);
        let full = regret_with_costs(&trace, &ledger, v_star).unwrap();
        // Independent count: every user computes once per exploitation block,
        // and exploitation blocks are read off the slot annotations.
        let mut blocks_by = vec![0u64; trace.horizon as usize + 1];
        let mut blocks = 0u64;
        let mut block_end = 0u64;
        for t in 1..=trace.horizon {
            if trace.slot_kind(t) == SlotKind::Exploit && t >= block_end {
                blocks += 1;
                block_end = t + cfg.a * cfg.b.pow(blocks as u32 - 1);
            }
            blocks_by[t as usize] = blocks;
        }
        let users = trace.users as f64;
        let exact = (1..=trace.horizon).all(|t| {
            let c = 100.0 * users * blocks_by[t as usize] as f64;
            full[t as usize - 1] == basic[t as usize - 1] + c
        });
        let params = BoundParams::for_scenario(&scenario, BoundAlgorithm::Dloe, trace.plan_len, l, cfg.a, cfg.b, costs).unwrap();
        let audit = audit_block_counts(&trace, &params, cfg.c);
        let per_user = ledger.computations.iter().all(|&m| m == blocks);
        ok &= exact && audit.is_ok() && per_user;
        detail = format!(
            "{blocks} exploitation blocks, cost term {} = 100 x {}; exact={exact}, audit={:?}",
            ledger.total_cost(),
            ledger.total_computations(),
            audit.map(|_| "ok")
        );
    }
    r.check("6", ok, format!("3 episodes; last: {detail}"));
}

/// Exhaustive search over assignments with the last user most significant,
/// on means given as integer thousandths so that values compare exactly.
fn integer_search(means: &[Vec<Vec<i64>>], users: usize, resources: usize) -> (i64, Vec<Vec<usize>>) {
    let mut best = i64::MIN;
    let mut argmax = Vec::new();
    let total = resources.pow(users as u32);
    for code in 0..total {
        let mut a = vec![0; users];
        let mut c = code;
        for i in (0..users).rev() {
            a[i] = c % resources;
            c /= resources;
        }
        let mut n = vec![0; resources];
        for &k in &a {
            n[k] += 1;
        }
        let v: i64 = (0..users).map(|i| means[i][a[i]][n[a[i]] - 1]).sum();
        if v > best {
            best = v;
            argmax.clear();
        }
        if v == best {
            argmax.push(a);
        }
    }
    argmax.sort();
    (best, argmax)
}

fn criterion_7(r: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut ok = true;
    let mut ties = 0;
    for instance in 0..100 {
        let users = rng.gen_range(1..=3);
        let resources = rng.gen_range(1..=3);
        // Half the instances use a coarse grid so that ties occur.
        let step = if instance % 2 == 0 { 1 } else { 100 };
        let means: Vec<Vec<Vec<i64>>> = (0..users)
            .map(|_| (0..resources).map(|_| (0..users).map(|_| rng.gen_range(0..=10) * step * if step == 1 { 97 } else { 1 }).collect()).collect())
            .collect();
        let tables: Vec<MeanTable<f64>> = means
            .iter()
            .map(|per| MeanTable::from_rows(per.iter().map(|row| row.iter().map(|&x| x as f64 / 1000.0).collect()).collect()).unwrap())
            .collect();
        let rep = optimal_assignment(&UserMeanTable::from_users(&tables).unwrap()).unwrap();
        let (best, argmax) = integer_search(&means, users, resources);
        let ours: Vec<Vec<usize>> = rep.best.iter().map(|a| a.choices().to_vec()).collect();
        if argmax.len() > 1 {
            ties += 1;
        }
        ok &= (rep.v_star - best as f64 / 1000.0).abs() <= 1e-12 && ours == argmax;
    }
    r.check("7", ok, format!("100 user-specific instances, {ties} with tied maximizers"));
}

/// Rounds of randomization until the allocation equals `n_star`, with the
/// estimates frozen at the truth. A round is a slot in which some user draws.
fn settle_rounds(n_star: &[usize], start: &[usize], rng: &mut ChaCha8Rng) -> u64 {
    let target = ExploitTarget::new(AllocationCount::new(n_star.to_vec(), n_star.iter().sum()).unwrap());
    let resources = n_star.len();
    let mut current: Vec<usize> = start.to_vec();
    let mut congestion: Option<Vec<usize>> = None;
    let mut rounds = 0;
    loop {
        let mut drew = false;
        let next: Vec<usize> = current
            .iter()
            .map(|&k| {
                let last = congestion.as_ref().map(|c| c[k]);
                let stays = target.contains(k) && last.is_none_or(|n| n <= n_star[k]);
                drew |= !stays;
                exploit_choice(Some(k), last, &target, rng)
            })
            .collect();
        if drew {
            rounds += 1;
        }
        let mut counts = vec![0; resources];
        for &k in &next {
            counts[k] += 1;
        }
        if counts == n_star {
            return rounds;
        }
        current = next;
        congestion = Some(counts);
    }
}

fn criterion_8(r: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut ok = true;
    let mut parts = Vec::new();
    for n_star in [vec![1usize, 1], vec![2, 1], vec![0, 2, 1]] {
        let users: usize = n_star.iter().sum();
        let k = n_star.len();
        let o_b: f64 = worst_case_hitting_bound(&n_star).unwrap();
        // Uniform starts, and the start the engine produces: everyone on the
        // last resource after a full exploration pass.
        for uniform in [true, false] {
            let episodes = 10_000;
            let samples: Vec<f64> = (0..episodes)
                .map(|_| {
                    let start: Vec<usize> = (0..users).map(|_| if uniform { rng.gen_range(0..k) } else { k - 1 }).collect();
                    settle_rounds(&n_star, &start, &mut rng) as f64
                })
                .collect();
            let mean = samples.iter().sum::<f64>() / episodes as f64;
            let sd = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (episodes - 1) as f64).sqrt();
            let se = sd / (episodes as f64).sqrt();
            ok &= mean - 3.0 * se <= o_b;
            parts.push(format!("{n_star:?}{}: {mean:.3}±{se:.3} vs O_B {o_b:.3}", if uniform { "" } else { " worst start" }));
        }
    }
    r.check("8", ok, parts.join("; "));
}

fn criterion_9(r: &mut Report) {
    let chain = MarkovChain::<f64>::new(vec![vec![0.9, 0.1], vec![0.1, 0.9]], None).unwrap();
    let gap = chain.eigenvalue_gap();
    let mut ok = (gap - 0.36).abs() <= 1e-9;
    let mut parts = vec![format!("gap {gap:.12}")];

    let pi = chain.stationary().to_vec();
    let f = [-1.0, 1.0];
    let q = [0.0, 1.0];
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst_margin = f64::INFINITY;
    for horizon in [100usize, 1000] {
        for gamma in [0.1, 0.2, 0.4] {
            let paths = 10_000;
            let mut hits = 0;
            for _ in 0..paths {
                let mut x = 1usize;
                let mut sum = 0.0;
                for _ in 0..horizon {
                    sum += f[x];
                    x = chain.step(x, &mut rng).unwrap();
                }
                if sum / horizon as f64 >= gamma {
                    hits += 1;
                }
            }
            let freq = hits as f64 / paths as f64;
            let bound = lezaud_bound(&q, &pi, gap, horizon, gamma);
            ok &= freq <= bound;
            worst_margin = worst_margin.min(bound - freq);
        }
    }
    parts.push(format!("Lezaud bound holds on 6 cells (smallest margin {worst_margin:.4})"));

    let cfg = ExperimentConfig::from_path(&scenarios().join("markov_dlc_run.toml")).unwrap();
    let outcome = run_experiment(&cfg, None).expect("markov run");
    let s = &outcome.sweeps[0];
    let (plain, costs) = s.bound.as_ref().expect("bound for constant L");
    let scenario = cfg.load_scenario().unwrap();
    let c_p = scenario.markov_bound_params().unwrap().unwrap().c_p;
    let mut dlc_ok = true;
    for (i, &t) in s.times.iter().enumerate().filter(|(_, &t)| t >= 10_000) {
        let lt = (t as f64).ln();
        dlc_ok &= s.regret.mean[i] / lt <= plain[i] / lt && s.regret_cost.mean[i] / lt <= costs[i] / lt;
    }
    let last = s.times.len() - 1;
    ok &= dlc_ok;
    parts.push(format!(
        "DLC R/ln t at {}: {:.2} (bound {:.1}, C_P {c_p:.4}), % optimal {:.1}",
        s.times[last],
        s.regret.mean[last] / (s.times[last] as f64).ln(),
        plain[last] / (s.times[last] as f64).ln(),
        s.percent_optimal.mean.last().unwrap()
    ));
    r.check("9", ok, parts.join("; "));
}

fn criterion_10(r: &mut Report) {
    let mut ok = true;
    let mut pairs = 0;
    for users in 1..=16usize {
        for resources in 1..=10_000usize {
            if (resources as f64).powi(users as i32) > 1e4 {
                break;
            }
            pairs += 1;
            for kind in [PlanKind::Full, PlanKind::Compact] {
                let plan = Arc::new(ExplorationPlan::build(kind, users, resources).unwrap());
                ok &= verify_coverage(&plan).map(|c| c.min_reachable() >= 1).unwrap_or(false);
                ok &= traversal_counts_ok(&plan, users, resources);
            }
        }
    }
    r.check("10", ok, format!("{pairs} (M,K) pairs with K^M <= 1e4 (M <= 16), both plans"));
}

/// Runs DLOE agents through one plan traversal and checks their estimator counts.
fn traversal_counts_ok(plan: &Arc<ExplorationPlan>, users: usize, resources: usize) -> bool {
    let config = DloeConfig {
        blocks: BlockParams {
            a: 2,
            b: 2,
            c: 2,
            schedule: ExplorationSchedule::Constant(1e9),
        },
        update: UpdatePolicy::AllBlocks,
    };
    let mut agents: Vec<DloeAgent> = (0..users).map(|i| DloeAgent::new(i, config, plan.clone()).unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut actions = vec![0; users];
    let mut counts = vec![0; resources];
    for t in 1..=plan.len() as u64 {
        for (i, a) in agents.iter_mut().enumerate() {
            actions[i] = a.act(t, &mut rng).unwrap();
        }
        counts.iter_mut().for_each(|c| *c = 0);
        for &k in &actions {
            counts[k] += 1;
        }
        for (i, a) in agents.iter_mut().enumerate() {
            a.observe(0.5, counts[actions[i]]).unwrap();
        }
    }
    agents.iter().all(|a| {
        (0..resources).all(|k| (1..=users).all(|n| !is_reachable(users, resources, n) || a.estimates().count(k, n) >= 1))
    })
}

fn main() {
    let mut r = Report { failures: 0 };
    criterion_1(&mut r);
    criterion_2(&mut r);
    let (outcome, secs) = reference_run();
    criterion_3(&mut r, &outcome, secs);
    criterion_4(&mut r, &outcome);
    criterion_5(&mut r, &outcome);
    criterion_6(&mut r);
    criterion_7(&mut r);
    criterion_8(&mut r);
    criterion_9(&mut r);
    criterion_10(&mut r);
    if r.failures > 0 {
        println!("{} acceptance criteria failed", r.failures);
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
