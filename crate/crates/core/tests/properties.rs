use mecpow::difficulty::{avg_rounds, min_rounds, total_nonce_demand, update_difficulty, TimingParams};
use mecpow::fair_ordering::{kl_divergence, merge, wrr_merge, NonceSequence, OrderingState};
use mecpow::game::{best_response, closed_form_ne, utility, SystemParams};
use proptest::prelude::*;

fn sequences(lengths: &[usize]) -> Vec<NonceSequence> {
    lengths
        .iter()
        .enumerate()
        .map(|(i, &m)| NonceSequence::new(i, (0..m as u64).map(|n| 3 * n + i as u64).collect(), 32).unwrap())
        .collect()
}

fn params_strategy() -> impl Strategy<Value = SystemParams> {
    (1e3..1e5f64, 0.0..10.0f64, 1e-4..1e-2f64, 4.0..16.0f64).prop_map(|(b, r, c, h)| SystemParams {
        block_reward: b,
        fee_rate: r,
        hash_price: c,
        difficulty: h,
        nonce_bits: 32,
    })
}

fn sizes_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1.0..1024.0f64, 2..8)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn merge_keeps_every_nonce_in_user_order(
        lengths in prop::collection::vec(1usize..40, 1..6),
        seed in any::<u64>(),
    ) {
        let input = sequences(&lengths);
        let merged = merge(input.clone(), seed).unwrap().into_merged();
        prop_assert_eq!(merged.len(), lengths.iter().sum::<usize>());
        for (user, seq) in input.iter().enumerate() {
            let served: Vec<u64> = merged.iter().filter(|e| e.user == user).map(|e| e.nonce).collect();
            prop_assert_eq!(served.as_slice(), seq.nonces());
        }
    }

    #[test]
    fn merge_is_deterministic_per_seed(
        lengths in prop::collection::vec(1usize..20, 1..5),
        seed in any::<u64>(),
    ) {
        let a = merge(sequences(&lengths), seed).unwrap().into_merged();
        let b = merge(sequences(&lengths), seed).unwrap().into_merged();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn each_step_minimizes_divergence(
        lengths in prop::collection::vec(1usize..15, 2..5),
        seed in any::<u64>(),
    ) {
        let mut state = OrderingState::new(sequences(&lengths), seed).unwrap();
        let p = state.target().probabilities().to_vec();
        while !state.is_complete() {
            let brute: Vec<Option<f64>> = (0..lengths.len())
                .map(|i| state.candidate_mass(i).ok().map(|q| kl_divergence(&q, &p).unwrap()))
                .collect();
            let fast = state.candidate_divergences();
            for (b, f) in brute.iter().zip(&fast) {
                match (b, f) {
                    (Some(b), Some(f)) => prop_assert!((b - f).abs() < 1e-9),
                    (None, None) => {}
                    _ => prop_assert!(false, "exhaustion mismatch"),
                }
            }
            let best = brute.iter().flatten().copied().fold(f64::INFINITY, f64::min);
            let picked = state.advance().unwrap().user;
            prop_assert!(brute[picked].unwrap() <= best + 1e-9);
        }
    }

    #[test]
    fn argmin_does_not_depend_on_log_base(
        served in prop::collection::vec(0usize..10, 3),
        extra in prop::collection::vec(1usize..10, 3),
    ) {
        let lengths: Vec<usize> = served.iter().zip(&extra).map(|(k, e)| k + e).collect();
        let state = OrderingState::resume(sequences(&lengths), &served, 0).unwrap();
        let p = state.target().probabilities().to_vec();
        let natural: Vec<f64> = (0..3).map(|i| kl_divergence(&state.candidate_mass(i).unwrap(), &p).unwrap()).collect();
        let bits: Vec<f64> = natural.iter().map(|d| d / std::f64::consts::LN_2).collect();
        let argmin = |v: &[f64]| (0..v.len()).min_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
        prop_assert_eq!(argmin(&natural), argmin(&bits));
    }

    #[test]
    fn wrr_keeps_every_nonce_in_user_order(
        lengths in prop::collection::vec(1usize..30, 1..5),
        weights in prop::collection::vec(1usize..5, 5),
    ) {
        let input = sequences(&lengths);
        let merged = wrr_merge(&input, &weights[..lengths.len()]).unwrap();
        prop_assert_eq!(merged.len(), lengths.iter().sum::<usize>());
        for (user, seq) in input.iter().enumerate() {
            let served: Vec<u64> = merged.iter().filter(|e| e.user == user).map(|e| e.nonce).collect();
            prop_assert_eq!(served.as_slice(), seq.nonces());
        }
    }

    #[test]
    fn closed_form_is_a_best_response_fixed_point(p in params_strategy(), sizes in sizes_strategy()) {
        let ne = closed_form_ne(&p, &sizes).unwrap();
        prop_assume!(ne.iter().all(|&m| m > 0.0));
        let total: f64 = ne.iter().sum();
        for (i, &m) in ne.iter().enumerate() {
            let br = best_response(total - m, &p, sizes[i]).unwrap();
            prop_assert!(rel(br, m) < 1e-6, "user {i}: br {br} vs ne {m}");
        }
    }

    #[test]
    fn equilibrium_total_matches_demand(p in params_strategy(), sizes in sizes_strategy()) {
        let ne = closed_form_ne(&p, &sizes).unwrap();
        let a: f64 = sizes.iter().map(|&s| p.price_ratio(s)).sum();
        let expected = (sizes.len() - 1) as f64 / a;
        prop_assert!(rel(ne.iter().sum::<f64>(), expected) < 1e-9);
        prop_assert!(rel(total_nonce_demand(&p, &sizes).unwrap(), expected) < 1e-9);
    }

    #[test]
    fn no_profitable_unilateral_deviation(
        p in params_strategy(),
        sizes in sizes_strategy(),
        factor in prop_oneof![0.05..0.99f64, 1.01..20.0f64],
    ) {
        let ne = closed_form_ne(&p, &sizes).unwrap();
        prop_assume!(ne.iter().all(|&m| m > 0.0));
        for i in 0..ne.len() {
            let base = utility(i, &ne, &p, &sizes).unwrap();
            let mut dev = ne.clone();
            dev[i] *= factor;
            prop_assert!(utility(i, &dev, &p, &sizes).unwrap() <= base + 1e-9 * base.abs().max(1.0));
        }
    }

    #[test]
    fn reward_scaling_scales_equilibrium(p in params_strategy(), sizes in sizes_strategy(), k in 1.1..5.0f64) {
        // With no fee term, every reward scales with B and so does M*.
        let base = SystemParams { fee_rate: 0.0, ..p };
        let scaled = SystemParams { block_reward: k * base.block_reward, ..base };
        let a = closed_form_ne(&base, &sizes).unwrap();
        let b = closed_form_ne(&scaled, &sizes).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(rel(*y, k * x) < 1e-9);
        }
    }

    #[test]
    fn utility_is_concave_in_own_length(
        p in params_strategy(),
        sizes in sizes_strategy(),
        raw in prop::collection::vec(1.0..1e5f64, 8),
    ) {
        let m: Vec<f64> = raw[..sizes.len()].to_vec();
        let step = 1e-3 * m[0];
        let at = |x: f64| {
            let mut v = m.clone();
            v[0] = x;
            utility(0, &v, &p, &sizes).unwrap()
        };
        let second = at(m[0] + step) - 2.0 * at(m[0]) + at(m[0] - step);
        prop_assert!(second < 0.0);
    }

    #[test]
    fn best_response_is_concave_in_opponent_total(p in params_strategy(), s in 1.0..1024.0f64, x in 1.0..1e5f64) {
        let raw = |y: f64| (y / p.price_ratio(s)).sqrt() - y;
        let step = 1e-3 * x;
        prop_assert!(raw(x + step) - 2.0 * raw(x) + raw(x - step) < 0.0);
        prop_assert!(best_response(x, &p, s).unwrap() >= 0.0);
    }

    #[test]
    fn rounds_times_demand_is_expected_hashes(p in params_strategy(), sizes in sizes_strategy()) {
        let product = min_rounds(&p, &sizes).unwrap() * total_nonce_demand(&p, &sizes).unwrap();
        prop_assert!(rel(product, p.difficulty.exp2()) < 1e-9);
    }

    #[test]
    fn updated_difficulty_hits_target_rounds(
        p in params_strategy(),
        window in prop::collection::vec(prop::collection::vec(1.0..1024.0f64, 3), 1..12),
        target in 1.0..20.0f64,
    ) {
        let timing = TimingParams { target_rounds: target, ..TimingParams::default() };
        let h = update_difficulty(&window, &p, &timing).unwrap();
        let reached = avg_rounds(&window, &p.with_difficulty(h)).unwrap();
        prop_assert!(rel(reached, target) < 1e-9);
    }

    #[test]
    fn difficulty_moves_against_the_rounds_error(
        p in params_strategy(),
        window in prop::collection::vec(prop::collection::vec(1.0..1024.0f64, 3), 1..12),
        target in 1.0..20.0f64,
    ) {
        let timing = TimingParams { target_rounds: target, ..TimingParams::default() };
        let current = avg_rounds(&window, &p).unwrap();
        let h = update_difficulty(&window, &p, &timing).unwrap();
        if current < target {
            prop_assert!(h > p.difficulty);
        } else if current > target {
            prop_assert!(h < p.difficulty);
        }
    }
}
