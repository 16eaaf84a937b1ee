use hft_kinetics::kinetics::{interval_ccdf, IntervalLaw, TentProfile};
use hft_kinetics::langevin::{langevin_step, LangevinConfig};
use hft_kinetics::microsim::{
    decompose_cm, init_state, match_and_settle, run_simulation, step_continuous, step_poisson, Probes, SimRng,
    StepOutput, Variant,
};
use hft_kinetics::records::{NullSink, Side};
use hft_kinetics::stats::{
    empirical_ccdf, fit_exponential_decay, pearson, FitRange, Origin, ProfileAccumulator,
};
use hft_kinetics::ziob::{mu_density_powerlaw, ziob_run, ZiobConfig, ZiobProbes};
use hft_kinetics::{ExperimentConfig, RngStream};
use proptest::prelude::*;

fn config(n: usize, dz_star: f64, seed: u64) -> ExperimentConfig {
    ExperimentConfig::new(n, 15.0, 4.5, dz_star, 1.0, 200, seed)
        .unwrap()
        .with_transactions(200, 20)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn steps_keep_spreads_and_leave_no_crossing(
        n in 2usize..12,
        dz_star in 0.0f64..8.0,
        seed in any::<u64>(),
        poisson in any::<bool>(),
    ) {
        let cfg = config(n, dz_star, seed);
        let mut rng = SimRng::new(seed, n);
        let mut state = init_state(&cfg, &mut rng);
        let spreads: Vec<f64> = state.traders.iter().map(|t| t.spread()).collect();
        let mut out = StepOutput::new(false, false);
        // Uniform initial midprices can overlap; a Poisson step settles only
        // after a requote, so start from a settled book.
        match_and_settle(&mut state, &mut out);
        let mut last_tick = state.tick;
        for _ in 0..2000 {
            out.clear();
            if poisson {
                step_poisson(&mut state, &cfg, &mut rng, &mut out);
            } else {
                step_continuous(&mut state, &cfg, &mut rng, &mut out);
            }
            prop_assert!(!state.has_crossing());
            prop_assert_eq!(state.tick, last_tick + out.transactions.len() as u64);
            last_tick = state.tick;
            for e in &out.transactions {
                prop_assert_ne!(e.buyer, e.seller);
            }
        }
        for (t, l) in state.traders.iter().zip(&spreads) {
            prop_assert_eq!(t.spread(), *l);
            prop_assert!((t.ask() - t.bid() - l).abs() <= 1e-9 * l.max(1.0));
        }
    }

    #[test]
    fn relative_midprices_sum_to_zero(n in 2usize..200, seed in any::<u64>()) {
        let cfg = config(n, 3.0, seed);
        let mut rng = SimRng::new(seed, n);
        let mut state = init_state(&cfg, &mut rng);
        for t in state.traders.iter_mut() {
            t.z += 1e4;
        }
        let (zcm, r) = decompose_cm(&state);
        let sum: f64 = r.iter().sum();
        prop_assert!(sum.abs() <= 1e-9 * n as f64 * cfg.l_star);
        let mean = state.traders.iter().map(|t| t.z).sum::<f64>() / n as f64;
        prop_assert!((zcm - mean).abs() <= 1e-9 * zcm.abs());
    }

    #[test]
    fn intervals_add_up_to_elapsed_time(n in 2usize..10, seed in any::<u64>()) {
        let cfg = config(n, 2.0, seed);
        let mut rng = SimRng::new(seed, n);
        let out = run_simulation(&cfg, Variant::Continuous, &mut rng, &Probes::default(), &mut NullSink).unwrap();
        prop_assert_eq!(out.ticks.len(), 200);
        prop_assert!(out.ticks.windows(2).all(|w| w[1].tick == w[0].tick + 1));
        let total: f64 = out.ticks.iter().map(|t| t.interval).sum();
        prop_assert!((total - out.elapsed).abs() <= 1e-9 * out.elapsed.max(1.0));
        prop_assert!(out.ticks.iter().all(|t| !t.warmup && t.interval >= 0.0));
    }

    #[test]
    fn empirical_ccdf_is_a_survival_function(xs in prop::collection::vec(-50.0f64..50.0, 1..300)) {
        let c = empirical_ccdf(&xs, false).unwrap();
        prop_assert_eq!(c.p[0], 1.0);
        prop_assert!(c.x.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(c.p.windows(2).all(|w| w[0] > w[1]));
        prop_assert!(c.p.iter().all(|&p| p > 0.0 && p <= 1.0));
        for &x in xs.iter().take(20) {
            let count = xs.iter().filter(|&&v| v >= x).count() as f64 / xs.len() as f64;
            prop_assert!((c.eval(x) - count).abs() < 1e-12);
        }
    }

    #[test]
    fn pearson_is_bounded(pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 3..200)) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if let Some(r) = pearson(&x, &y) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
        }
    }

    #[test]
    fn merged_profiles_equal_pooled(
        a in prop::collection::vec(prop::collection::vec(-5.0f64..40.0, 1..20), 1..10),
        b in prop::collection::vec(prop::collection::vec(-5.0f64..40.0, 1..20), 1..10),
    ) {
        let acc = || ProfileAccumulator::new(Origin::MarketMid, 1.0, 0.0, 30.0).unwrap();
        let (mut pa, mut pb, mut all) = (acc(), acc(), acc());
        for s in &a { pa.add_snapshot(s.iter().copied()); all.add_snapshot(s.iter().copied()); }
        for s in &b { pb.add_snapshot(s.iter().copied()); all.add_snapshot(s.iter().copied()); }
        pa.merge(&pb).unwrap();
        let (m, p) = (pa.finish().unwrap(), all.finish().unwrap());
        prop_assert_eq!(&m, &p);
        let in_range: f64 = m.density().iter().sum::<f64>() * m.bin_width;
        let frac = (m.total() - m.underflow - m.overflow) as f64 / m.total() as f64;
        prop_assert!((in_range - frac).abs() < 1e-12);
    }

    #[test]
    fn interval_law_is_a_distribution(tau_star in 0.01f64..1e3, t in 0.0f64..1e4) {
        let law = IntervalLaw::new(tau_star);
        let p = interval_ccdf(t, tau_star);
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!((law.cdf(t) + law.ccdf(t) - 1.0).abs() < 1e-12);
        prop_assert!(interval_ccdf(t + 0.1 * tau_star, tau_star) <= p);
    }

    #[test]
    fn tent_mass_partitions(l in 0.1f64..100.0, cuts in prop::collection::vec(0.0f64..1.0, 1..10)) {
        let tent = TentProfile { l };
        let mut edges: Vec<f64> = cuts.iter().map(|c| (c - 0.5) * l).collect();
        edges.push(-l);
        edges.push(l);
        edges.sort_by(f64::total_cmp);
        let total: f64 = edges.windows(2).map(|w| tent.mass(w[0], w[1])).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exponential_fit_exact_on_noiseless_tail(kappa in 0.2f64..50.0) {
        let n = 200_000usize;
        // Quantiles of the exponential law: the CCDF at x_k is exactly 1 - k/n.
        let xs: Vec<f64> = (0..n).map(|k| -kappa * (1.0 - k as f64 / n as f64).ln()).collect();
        let c = empirical_ccdf(&xs, false).unwrap();
        let fit = fit_exponential_decay(&c, FitRange::by_probability(&c, 0.1, 1e-3)).unwrap();
        prop_assert!((fit.kappa / kappa - 1.0).abs() < 1e-3, "{} vs {}", fit.kappa, kappa);
    }

    #[test]
    fn small_moves_respond_linearly(
        dz_star in 0.1f64..10.0,
        dp_star in 0.5f64..10.0,
        tau in 0.01f64..50.0,
        frac in -0.1f64..0.1,
    ) {
        let cfg = LangevinConfig::new(dz_star, dp_star, 6.75, 1.0, 10, 1).unwrap();
        let dp = frac * dp_star;
        prop_assume!(dp != 0.0);
        let full = langevin_step(dp, tau, 0.0, &cfg);
        let linear = cfg.c * tau * dp / dp_star;
        prop_assert!(((full - linear) / linear).abs() < 0.01);
    }

    #[test]
    fn zi_book_never_crosses(seed in any::<u64>(), omega in 0.01f64..0.5, lambda in 2e-3f64..2e-2) {
        let mu = mu_density_powerlaw(1.0, 2.9, 10.0, 300);
        let cfg = ZiobConfig::new(mu, lambda, omega, 3000, seed).unwrap().with_warmup(500);
        let probes = ZiobProbes::default();
        if let Ok(out) = ziob_run(&cfg, &mut RngStream::new(seed), &probes, &mut NullSink) {
            let b = &out.final_book;
            prop_assert!(b.best_bid().unwrap() < b.best_ask().unwrap());
            prop_assert_eq!(b.side_volume(Side::Bid) + b.side_volume(Side::Ask), b.volume());
            prop_assert!(out.filled <= out.submitted + b.volume() as u64);
            for w in out.ticks.windows(2) {
                prop_assert!((w[1].time - w[0].time - w[1].interval).abs() < 1e-9);
                prop_assert_eq!(w[1].tick, w[0].tick + 1);
            }
        }
    }
}
