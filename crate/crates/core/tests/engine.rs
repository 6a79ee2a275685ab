use proptest::prelude::*;
use resshare::allocation::{optimal_symmetric, Assignment};
use resshare::dlc::DlcConfig;
use resshare::dloe::{DloeConfig, EventKind, UpdatePolicy};
use resshare::plan::{ExplorationPlan, PlanKind};
use resshare::rewards::{IidDistribution, Resource, RewardFunction, Rewards, StateProcess};
use resshare::schedule::{BlockParams, ExplorationSchedule};
use resshare::sim::{
    audit_block_counts, channel_share, percent_optimal, percent_optimal_assignments, regret_basic,
    regret_with_costs, run_episode, run_episode_with, Algorithm, BoundAlgorithm, BoundParams, CostLedger,
    EpisodeOptions, SlotKind, UnitCosts,
};
use resshare::Scenario;

/// Deterministic rewards: `tables[k][n - 1]`.
fn deterministic(users: usize, tables: &[Vec<f64>]) -> Scenario {
    let resources = tables
        .iter()
        .map(|row| {
            Resource::new(
                StateProcess::Iid(IidDistribution::Bernoulli { p: 1.0 }),
                Rewards::Shared(RewardFunction::Table(vec![row.clone(), row.clone()])),
                users,
            )
            .unwrap()
        })
        .collect();
    Scenario::new("deterministic", users, resources).unwrap()
}

fn blocks(a: u64, b: u64, c: u64, l: f64) -> BlockParams {
    BlockParams {
        a,
        b,
        c,
        schedule: ExplorationSchedule::Constant(l),
    }
}

fn dloe(a: u64, b: u64, c: u64, l: f64) -> Algorithm {
    Algorithm::Dloe(DloeConfig {
        blocks: blocks(a, b, c, l),
        update: UpdatePolicy::AllBlocks,
    })
}

#[test]
fn two_step_hand_trace() {
    // Full plan for two users and two resources starts (1,1), (1,2).
    let s = deterministic(2, &[vec![0.8, 0.3], vec![0.5, 0.2]]);
    let trace = run_episode(&s, &dloe(2, 2, 2, 100.0), 2, 7).unwrap();
    assert_eq!(trace.actions_at(1), &[0, 0]);
    assert_eq!(trace.congestion_at(1), &[2, 0]);
    assert_eq!(trace.rewards_at(1), &[0.3, 0.3]);
    assert_eq!(trace.actions_at(2), &[0, 1]);
    assert_eq!(trace.congestion_at(2), &[1, 1]);
    assert_eq!(trace.rewards_at(2), &[0.8, 0.5]);
    // v* = 0.8 + 0.5 = 1.3.
    let r = regret_basic(&trace, 1.3);
    assert!((r[0] - 0.7).abs() < 1e-12);
    assert!((r[1] - 0.7).abs() < 1e-12);
    assert_eq!(trace.slot_kind(1), SlotKind::Explore);
}

#[test]
fn worst_fixed_assignment_regret_rate() {
    let s = deterministic(3, &[vec![0.9, 0.4, 0.2], vec![0.6, 0.5, 0.1], vec![0.3, 0.2, 0.05]]);
    let report = optimal_symmetric(&s.mean_table().unwrap()).unwrap();
    // Everyone on resource 3 is the worst allocation: 3 * 0.05.
    assert!((report.delta_max - (report.v_star - 0.15)).abs() < 1e-12);
    let worst = Assignment::new(vec![2, 2, 2], 3).unwrap();
    let trace = run_episode(&s, &Algorithm::Fixed(worst), 10_000, 0).unwrap();
    let r = regret_basic(&trace, report.v_star);
    assert!((r[9_999] / 10_000.0 - report.delta_max).abs() < 1e-9);

    let osa = Scenario::reference_osa();
    let rep = optimal_symmetric(&osa.mean_table().unwrap()).unwrap();
    let worst = Assignment::new(vec![0, 0, 0], 3).unwrap();
    let trace = run_episode(&osa, &Algorithm::Fixed(worst), 200_000, 3).unwrap();
    let rate = regret_basic(&trace, rep.v_star)[199_999] / 200_000.0;
    assert!((rate - rep.delta_max).abs() < 0.01 * rep.delta_max, "{rate} vs {}", rep.delta_max);
}

#[test]
fn oracle_regret_is_centered() {
    let s = Scenario::reference_osa();
    let v_star = optimal_symmetric(&s.mean_table().unwrap()).unwrap().v_star;
    let finals: Vec<f64> = (0..50)
        .map(|seed| *regret_basic(&run_episode(&s, &Algorithm::Oracle, 2_000, seed).unwrap(), v_star).last().unwrap())
        .collect();
    let mean = finals.iter().sum::<f64>() / 50.0;
    let sd = (finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 49.0).sqrt();
    assert!(mean.abs() < 3.0 * sd / 50f64.sqrt() + 1e-9, "mean {mean}, sd {sd}");
}

#[test]
fn uniform_random_shares() {
    let s = Scenario::reference_osa();
    let trace = run_episode(&s, &Algorithm::Random, 100_000, 11).unwrap();
    for user in 0..3 {
        let share = &channel_share(&trace, user, &[100_000]).unwrap()[0];
        for &p in share {
            assert!((p - 100.0 / 3.0).abs() < 1.0, "user {user}: {share:?}");
        }
    }
}

#[test]
fn oracle_is_always_optimal() {
    let s = Scenario::reference_osa();
    let best = optimal_symmetric(&s.mean_table().unwrap()).unwrap().best;
    let trace = run_episode(&s, &Algorithm::Oracle, 1_000, 1).unwrap();
    assert_eq!(percent_optimal(&trace, &best, &[10, 1_000]).unwrap(), vec![100.0, 100.0]);
}

#[test]
fn computation_cost_matches_hand_count() {
    // L = 1, a = b = c = 2, 27-slot plan: exploration ends at t = 189 with
    // X_O = 7 >= ln 190. Exploitation blocks cover 190..=191 and 192..=195.
    let s = deterministic(3, &[vec![0.9, 0.4, 0.2], vec![0.6, 0.5, 0.1], vec![0.3, 0.2, 0.05]]);
    let trace = run_episode(&s, &dloe(2, 2, 2, 1.0), 195, 0).unwrap();
    assert_eq!(trace.slot_kind(189), SlotKind::Explore);
    assert_eq!(trace.slot_kind(190), SlotKind::Exploit);
    let starts = trace.events.iter().filter(|e| matches!(e.kind, EventKind::ExploitationStart { .. })).count();
    assert_eq!(starts, 2 * 3);
    let costs = UnitCosts {
        c_cmp: 100.0,
        ..UnitCosts::default()
    };
    let ledger = CostLedger::from_trace(&trace, costs);
    assert_eq!(ledger.total_computations(), 6);
    assert_eq!(ledger.total_cost(), 600.0);
}

#[test]
fn cost_regret_adds_the_inner_product() {
    let s = Scenario::reference_osa();
    let trace = run_episode(&s, &dloe(2, 2, 2, 5.0), 5_000, 4).unwrap();
    let costs = UnitCosts {
        c_cmp: 3.0,
        c_swc: 0.5,
        c_com: 0.0,
        c_i: 0.0,
    };
    let ledger = CostLedger::from_trace(&trace, costs);
    let v = 0.6;
    let basic = regret_basic(&trace, v);
    let full = regret_with_costs(&trace, &ledger, v).unwrap();
    let diff = full.last().unwrap() - basic.last().unwrap();
    assert!((diff - ledger.total_cost()).abs() < 1e-6 * ledger.total_cost().max(1.0));
    assert!(ledger.total_switches() > 0);
}

fn markov_dlc() -> Scenario {
    Scenario::from_toml_str(
        r#"
        name = "markov-dlc"
        users = 2
        [[resources]]
        kind = "markov"
        transition = [[0.6, 0.4], [0.4, 0.6]]
        user_table = [[[0.2, 0.1], [0.6, 0.1]], [[0.1, 0.05], [0.2, 0.05]]]
        [[resources]]
        kind = "markov"
        transition = [[0.6, 0.4], [0.4, 0.6]]
        user_table = [[[0.1, 0.05], [0.2, 0.05]], [[0.2, 0.1], [0.6, 0.1]]]
        "#,
    )
    .unwrap()
}

#[test]
fn dlc_communication_and_setup_counts() {
    let s = markov_dlc();
    let alg = Algorithm::Dlc(DlcConfig {
        blocks: blocks(2, 4, 4, 2.0),
    });
    let trace = run_episode(&s, &alg, 20_000, 5).unwrap();
    let exploit_blocks = trace
        .events
        .iter()
        .filter(|e| e.user == Some(0) && matches!(e.kind, EventKind::ExploitationStart { .. }))
        .count() as u64;
    assert!(exploit_blocks >= 2);
    let costs = UnitCosts {
        c_cmp: 1.0,
        c_swc: 0.0,
        c_com: 2.0,
        c_i: 7.0,
    };
    let ledger = CostLedger::from_trace(&trace, costs);
    assert_eq!(ledger.setups, 1);
    assert_eq!(ledger.total_communications(), 2 * exploit_blocks);
    // Only the rotating leader computes.
    assert_eq!(ledger.total_computations(), exploit_blocks);
    assert_eq!(ledger.total_cost(), exploit_blocks as f64 * (1.0 + 4.0) + 7.0);
    let best = resshare::allocation::optimal_assignment(&s.user_mean_table().unwrap()).unwrap().best;
    assert_eq!(best[0].choices(), &[0, 1]);
    let pct = percent_optimal_assignments(&trace, &best, &[20_000]).unwrap()[0];
    assert!(pct > 50.0, "{pct}");
}

#[test]
fn dloe_rejects_user_specific_rewards() {
    assert!(run_episode(&markov_dlc(), &dloe(2, 2, 2, 2.0), 10, 0).is_err());
}

#[test]
fn compact_plan_episode_runs() {
    let s = deterministic(2, &[vec![0.9, 0.2], vec![0.6, 0.5], vec![0.3, 0.1]]);
    let plan = ExplorationPlan::build(PlanKind::Compact, 2, 3).unwrap();
    let options = EpisodeOptions { plan: PlanKind::Compact };
    let trace = run_episode_with(&s, &dloe(2, 2, 2, 3.0), 2_000, 0, options).unwrap();
    assert_eq!(trace.plan_len, plan.len());
    assert!(plan.len() < 9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn congestion_always_sums_to_users(seed in any::<u64>(), l in 1.0f64..20.0, c in 2u64..4) {
        let s = Scenario::reference_osa();
        for alg in [dloe(2, 2, c, l), Algorithm::Random] {
            let trace = run_episode(&s, &alg, 600, seed).unwrap();
            for t in 1..=600 {
                prop_assert_eq!(trace.congestion_at(t).iter().map(|&n| n as usize).sum::<usize>(), 3);
            }
        }
    }

    #[test]
    fn block_counts_respect_their_bounds(
        seed in any::<u64>(), a in 2u64..5, b in 2u64..5, c in 2u64..5, l in 1.0f64..30.0,
    ) {
        let s = Scenario::reference_osa();
        let trace = run_episode(&s, &dloe(a, b, c, l), 20_000, seed).unwrap();
        let params = BoundParams::for_scenario(&s, BoundAlgorithm::Dloe, trace.plan_len, l, a, b, UnitCosts::default()).unwrap();
        audit_block_counts(&trace, &params, c).unwrap();
    }

    #[test]
    fn dlc_runs_in_lockstep(seed in any::<u64>(), l in 1.0f64..10.0) {
        let alg = Algorithm::Dlc(DlcConfig { blocks: blocks(2, 2, 2, l) });
        let trace = run_episode(&markov_dlc(), &alg, 3_000, seed).unwrap();
        prop_assert_eq!(trace.horizon, 3_000);
    }
}
