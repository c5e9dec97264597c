use nonstat_core::base::{Confidence, RateFunction};
use nonstat_core::harness::{curve_rounds, quantile, seed_derive};
use nonstat_core::inf_mdp::evi::{optimistic_transition, order_desc};
use nonstat_core::malg::{rho_hat, spawn_probability};
use nonstat_core::master::{MdpColumns, RoundRecord, RunLog};
use proptest::prelude::*;
use rand::RngCore;

fn rate() -> impl Strategy<Value = RateFunction<f64>> {
    (1.0f64..20.0, 0.0f64..20.0, 0.5f64..0.9)
        .prop_map(|(c1, c2, p)| RateFunction::new(c1, c2, f64::INFINITY, p, 1 << 12).unwrap())
}

fn record() -> impl Strategy<Value = RoundRecord> {
    (
        0u32..12,
        0u64..5,
        0u32..12,
        0.0f64..1.0,
        0.0f64..1.0,
        prop_oneof![Just(f64::INFINITY), 0.0f64..1.0],
        prop::option::of((
            0u64..9,
            0.0f64..2.0,
            0.0f64..1e3,
            1.0f64..64.0,
            prop::option::of(0usize..7),
        )),
        prop_oneof![
            Just(String::new()),
            Just("spawn:0#3".to_string()),
            Just("restart:test2".to_string())
        ],
    )
        .prop_map(|(block, epoch, active_order, reward, g, u, mdp, event)| RoundRecord {
            t: 0,
            block,
            epoch,
            active_order,
            policy: "1".into(),
            reward,
            f_star: reward.max(g),
            g_tilde: g,
            u_min: u,
            event,
            mdp: mdp.map(|(episode, eta, gamma_budget, dbar, borl_arm)| MdpColumns {
                episode,
                eta,
                gamma_budget,
                dbar,
                borl_arm,
            }),
        })
}

proptest! {
    #[test]
    fn spawn_probabilities_lie_in_the_unit_interval(r in rate(), n in 0u32..12) {
        let mut prev = 0.0;
        for m in 0..=n {
            let q: f64 = spawn_probability(n, m, &r).unwrap();
            prop_assert!(q > 0.0 && q <= 1.0);
            prop_assert!(q >= prev);
            prev = q;
        }
        prop_assert_eq!(spawn_probability::<f64>(n, n, &r).unwrap(), 1.0);
    }

    #[test]
    fn rho_hat_scales_linearly_in_kappa(r in rate(), t in 1usize..4096, k in 0.0f64..5.0) {
        let conf = Confidence::default_for(4096);
        let one = rho_hat(t, &r, conf, 1.0, 6.0);
        let scaled = rho_hat(t, &r, conf, k, 6.0);
        prop_assert!((scaled - k * one).abs() <= 1e-9 * one.max(1.0));
        prop_assert!(rho_hat(t, &r, conf, f64::INFINITY, 6.0).is_infinite());
    }

    #[test]
    fn quantiles_are_bracketed(mut v in prop::collection::vec(-1e6f64..1e6, 1..40), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        v.sort_by(f64::total_cmp);
        let (lo, hi) = (a.min(b), a.max(b));
        let (ql, qh) = (quantile(&v, lo), quantile(&v, hi));
        prop_assert!(ql <= qh);
        prop_assert!(v[0] <= ql && qh <= v[v.len() - 1]);
    }

    #[test]
    fn curve_rounds_end_at_the_horizon(t in 1usize..20_000) {
        let r = curve_rounds(t);
        prop_assert_eq!(*r.last().unwrap(), t);
        prop_assert!(r.len() <= 4096);
        prop_assert!(r.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn optimistic_rows_are_distributions(raw in prop::collection::vec(0.01f64..1.0, 2..6), radius in 0.0f64..3.0, seed in any::<u64>()) {
        let total: f64 = raw.iter().sum();
        let centre: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let values: Vec<f64> = (0..centre.len()).map(|i| ((seed >> (i * 7)) & 0x7f) as f64).collect();
        let order = order_desc(&values);
        let mut out = vec![0.0; centre.len()];
        optimistic_transition(&centre, radius, &order, &mut out);
        let sum: f64 = out.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(out.iter().all(|&p| p >= -1e-15));
        let l1: f64 = out.iter().zip(&centre).map(|(a, b)| (a - b).abs()).sum();
        prop_assert!(l1 <= radius + 1e-12);
        let dot = |p: &[f64]| p.iter().zip(&values).map(|(a, b)| a * b).sum::<f64>();
        prop_assert!(dot(&out) >= dot(&centre) - 1e-9);
    }

    #[test]
    fn csv_round_trip_is_exact(mut rows in prop::collection::vec(record(), 1..30), with_mdp in any::<bool>()) {
        for (i, r) in rows.iter_mut().enumerate() {
            r.t = i + 1;
            if !with_mdp {
                r.mdp = None;
            } else if r.mdp.is_none() {
                r.mdp = Some(MdpColumns { episode: 0, eta: 0.0, gamma_budget: 0.0, dbar: 1.0, borl_arm: None });
            }
        }
        let log = RunLog { horizon: rows.len(), rounds: rows, restarts: Vec::new() };
        let text = log.to_csv_string().unwrap();
        let back = RunLog::read_csv(text.as_bytes()).unwrap();
        prop_assert_eq!(&back.rounds, &log.rounds);
        prop_assert_eq!(back.dynamic_regret().unwrap().to_bits(), log.dynamic_regret().unwrap().to_bits());
    }

    #[test]
    fn seed_derivation_is_injective_in_the_run_index(master in any::<u64>(), a in 0u64..1000, b in 0u64..1000) {
        prop_assume!(a != b);
        prop_assert_ne!(seed_derive(master, a, "env").next_u64(), seed_derive(master, b, "env").next_u64());
    }
}
