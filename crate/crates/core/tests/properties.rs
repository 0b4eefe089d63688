use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sliceforge::drn::{select_action, DrnConfig, DrnParams, DrnPicker};
use sliceforge::harness::{evaluate, Scheduler};
use sliceforge::mapper::{self, map_slice, min_allocability, network_flexibility, select_node, PendingSet};
use sliceforge::nn::{Mhsa, Tensor};
use sliceforge::sched::{run_baseline_all, run_episode, SchedulerKind, StaticOrder};
use sliceforge::state::EnvState;
use sliceforge::trainer::{compute_returns, EpisodeRecord, ReplayMemory, RewardConfig};
use sliceforge::{generate_scenario, Rb, Scenario, ScenarioConfig};

fn small_config() -> impl Strategy<Value = ScenarioConfig> {
    (1usize..8, 0u32..6, 1u32..12, 1usize..7, 1usize..5, 0u32..3, 1u32..10, any::<u64>()).prop_map(
        |(n, cap_lo, cap_span, l, s, dem_lo, dem_span, seed)| ScenarioConfig {
            n,
            cap_range: [cap_lo, cap_lo + cap_span],
            l,
            s,
            demand_range: [dem_lo, dem_lo + dem_span],
            seed,
        },
    )
}

fn scenario() -> impl Strategy<Value = Scenario> {
    small_config().prop_map(|c| generate_scenario(&c).unwrap())
}

fn kind() -> impl Strategy<Value = SchedulerKind> {
    prop_oneof![Just(SchedulerKind::Max), Just(SchedulerKind::Min), Just(SchedulerKind::Total)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn selected_node_maximises_scores(
        avail in prop::collection::vec(0u32..12, 1..7),
        demand in 0u32..12,
        remaining in prop::collection::vec(0u32..12, 0..8),
    ) {
        let pick = select_node(&avail, demand, &PendingSet::new(remaining.iter().copied()));
        let fitting: Vec<usize> = (0..avail.len()).filter(|&k| demand <= avail[k]).collect();
        prop_assert_eq!(pick.is_none(), fitting.is_empty());
        if let Some(p) = pick {
            for k in fitting {
                let mut after = avail.clone();
                after[k] -= demand;
                let score = (min_allocability(&remaining, &after), network_flexibility(&after, &remaining));
                prop_assert!(score <= (p.alloc_after, p.flex_after));
                if score == (p.alloc_after, p.flex_after) {
                    prop_assert!(p.node <= k);
                }
            }
        }
    }

    #[test]
    fn mapped_slices_commit_and_conserve_capacity(sc in scenario()) {
        let mut state = EnvState::new(&sc);
        for j in 0..sc.l {
            let before = state.clone();
            match map_slice(&state, j) {
                Ok(placements) => {
                    prop_assert!(mapper::trial_feasible(&before, j));
                    state.commit_slice(j, &placements).unwrap();
                }
                Err(blocked) => {
                    prop_assert_eq!(blocked.slice, j);
                    prop_assert!(!mapper::trial_feasible(&state, j));
                }
            }
            prop_assert!(state.check_invariants(&sc).is_ok());
        }
        let used: u64 = state.assignments.iter().map(|a| a.amount as u64).sum();
        prop_assert_eq!(used + state.avail.iter().map(|&c| c as u64).sum::<u64>(), sc.total_capacity());
    }

    #[test]
    fn episodes_stop_only_when_nothing_fits(sc in scenario(), k in kind()) {
        let trace = run_episode(&mut StaticOrder::baseline(k, &sc).unwrap(), &sc).unwrap();
        let fin = &trace.final_state;
        prop_assert!(fin.check_invariants(&sc).is_ok());
        prop_assert!(trace.terminal_reached);
        for j in 0..sc.l {
            prop_assert!(!fin.is_pending(j) || !mapper::trial_feasible(fin, j));
        }
        let counts: Vec<usize> = trace.steps.iter().map(|s| s.n_r_after).collect();
        prop_assert!(counts.windows(2).all(|w| w[1] == w[0] + 1));
        prop_assert_eq!(trace.accommodated(), fin.accommodated_count());
        prop_assert!(trace.accommodated() <= sc.l);
        for step in &trace.steps {
            prop_assert!(step.feasible[step.action]);
        }
    }

    #[test]
    fn all_baseline_respects_capacity(sc in scenario()) {
        let out = run_baseline_all(&sc);
        prop_assert!(out.count <= sc.l);
        let mut used = vec![0u64; sc.n];
        for a in &out.assignments {
            used[a.node] += a.amount as u64;
        }
        for k in 0..sc.n {
            prop_assert_eq!(used[k] + out.avail[k] as u64, sc.capacities[k] as u64);
        }
    }

    #[test]
    fn full_success_returns_are_positive(l in 1usize..25, lambda in 0.0f64..=1.0) {
        let capacities = vec![100; 3];
        let sc = Scenario::new(capacities, vec![vec![1, 2]; l]).unwrap();
        let trace = run_episode(&mut StaticOrder::new((0..l).collect()), &sc).unwrap();
        prop_assert_eq!(trace.accommodated(), l);
        let cfg = RewardConfig { lambda, ..RewardConfig::default() };
        prop_assert!(compute_returns(&trace, &cfg, l).iter().all(|&p| p > 0.0));
    }

    #[test]
    fn argmax_ignores_increasing_transforms(
        rho in prop::collection::vec(-5.0f64..5.0, 1..10),
        mask_bits in any::<u16>(),
    ) {
        let feasible: Vec<bool> = (0..rho.len()).map(|i| mask_bits >> i & 1 == 1).collect();
        prop_assume!(feasible.iter().any(|&f| f));
        let a = select_action(&rho, &feasible).unwrap();
        let squashed: Vec<f64> = rho.iter().map(|x| x.exp() * 3.0 + 1.0).collect();
        prop_assert_eq!(select_action(&squashed, &feasible).unwrap(), a);
        prop_assert!(feasible[a]);
    }

    #[test]
    fn context_rows_sum_to_one(l in 1usize..8, s in 1usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mhsa = Mhsa::init(s, s, 5, &mut rng);
        let data: Vec<f64> = (0..l * s).map(|i| ((i as f64 + seed as f64) * 0.37).sin()).collect();
        let (ctx, _) = mhsa.forward(&Tensor::from_vec(&[l, s], data).unwrap()).unwrap();
        for i in 0..l {
            prop_assert!((ctx.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn replay_batches_have_no_repeats(pushes in 1usize..40, capacity in 1usize..20, k in 0usize..25, seed in any::<u64>()) {
        let mut memory = ReplayMemory::new(capacity);
        let sc = Scenario::new(vec![1], vec![vec![1]]).unwrap();
        let trace = run_episode(&mut StaticOrder::new(vec![0]), &sc).unwrap();
        for _ in 0..pushes {
            memory.push(EpisodeRecord::from_trace(&trace, vec![0.0]));
        }
        prop_assert!(memory.len() <= capacity);
        let picks = memory.sample_past(k, &mut ChaCha8Rng::seed_from_u64(seed));
        let mut sorted = picks.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), picks.len());
        prop_assert!(picks.len() <= k.min(memory.len() - 1));
        prop_assert!(picks.iter().all(|&i| i + 1 < memory.len()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn evaluation_stays_in_range(cfg in small_config(), k in kind()) {
        let r = evaluate(Scheduler::Baseline(k), &cfg, 5).unwrap();
        prop_assert!(r.mean_accommodated >= 0.0 && r.mean_accommodated <= cfg.l as f64);
        prop_assert!(r.std >= 0.0);
        prop_assert_eq!(r.counts.len(), 5);
    }

    #[test]
    fn drn_episodes_keep_invariants(cfg in small_config(), seed in any::<u64>()) {
        let sc = generate_scenario(&cfg).unwrap();
        let params = DrnParams::build(DrnConfig::for_scenario(&cfg), seed).unwrap();
        let trace = run_episode(&mut DrnPicker { params: &params }, &sc).unwrap();
        prop_assert!(trace.final_state.check_invariants(&sc).is_ok());
        let rewards = params.forward_state(&EnvState::new(&sc)).unwrap();
        prop_assert_eq!(rewards.len(), cfg.l);
        prop_assert!(rewards.iter().all(|r| r.is_finite()));
    }
}

#[test]
fn plenty_of_resources_gives_positive_means() {
    let cfg = ScenarioConfig::base().with_seed(3);
    for k in SchedulerKind::BASELINES {
        assert!(evaluate(Scheduler::Baseline(k), &cfg, 10).unwrap().mean_accommodated > 0.0, "{k}");
    }
}

#[test]
fn capacity_totals_are_u64_safe() {
    let sc = Scenario::new(vec![Rb::MAX; 3], vec![vec![Rb::MAX; 2]]).unwrap();
    assert_eq!(sc.total_capacity(), 3 * Rb::MAX as u64);
}
