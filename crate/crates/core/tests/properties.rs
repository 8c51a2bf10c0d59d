use leo_rach::engine::{run_scenario, Phase, SimConfig};
use leo_rach::net::layers::softmax;
use leo_rach::policy::{optimal_access_prob, success_probability, ClassPosterior, Scheme};
use leo_rach::prach::zc_root;
use proptest::prelude::*;

fn posterior() -> impl Strategy<Value = ClassPosterior> {
    prop::collection::vec(0.0f64..1.0, 7)
        .prop_filter("some mass", |v| v.iter().sum::<f64>() > 1e-3)
        .prop_map(|v| {
            let s: f64 = v.iter().sum();
            ClassPosterior::new(v.iter().map(|x| x / s).collect()).unwrap()
        })
}

proptest! {
    #[test]
    fn zc_has_unit_modulus(root in 1usize..139) {
        for z in zc_root(root, 139).unwrap() {
            prop_assert!((z.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn optimal_p_in_range_and_beats_boundaries(post in posterior()) {
        let p = optimal_access_prob(&post);
        prop_assert!((0.0..=1.0).contains(&p));
        let v = success_probability(p, &post);
        prop_assert!(v + 1e-12 >= success_probability(0.0, &post));
        prop_assert!(v + 1e-12 >= success_probability(1.0, &post));
    }

    #[test]
    fn softmax_is_distribution(z in prop::collection::vec(-500.0f64..500.0, 1..12)) {
        let p = softmax(&z);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(p.iter().all(|&v| v >= 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn engine_conserves_users(seed in any::<u64>(), n_users in 0usize..250, scheme in 0usize..3) {
        let cfg = SimConfig {
            n_users,
            n_slots: 150,
            seed,
            scheme: Scheme::ALL[scheme],
            ..SimConfig::default()
        };
        let r = run_scenario(&cfg, None).unwrap();
        let m = &r.metrics;
        prop_assert_eq!(m.n_success + m.n_failed + m.n_in_flight, n_users);
        prop_assert!((0.0..=1.0).contains(&m.pusch_utilization));
        for u in &r.users {
            prop_assert!(u.attempt_count <= cfg.max_retries);
            if u.phase == Phase::Succeeded {
                prop_assert!(u.delay_ms().unwrap() >= cfg.single_attempt_delay_ms(u.one_way_delay_ms) - 1e-9);
            }
        }
    }
}
