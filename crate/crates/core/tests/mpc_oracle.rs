mod common;

use common::{enumerate_with_clarabel, random_instance};
use greenlight::mpc::{
    brute_force_solve, run_day, solve, verify, MpcProblem, MpcWeights, SolverSettings,
};
use greenlight::recipe::{PhysiologyBounds, DLI_PER_PPFD_HOUR};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-6 * a.abs().max(b.abs()).max(1.0)
}

fn with_gamma(p: &MpcProblem, gamma: f64) -> MpcProblem {
    let mut q = p.clone();
    q.weights.gamma = gamma;
    q
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn branch_and_bound_matches_both_enumerations(seed in any::<u64>()) {
        let p = random_instance(seed);
        let bb = solve(&p).unwrap();
        let bf = brute_force_solve(&p).unwrap();
        let cl = enumerate_with_clarabel(&p).expect("feasible instance");
        prop_assert!(verify(&p, &bb).is_empty(), "{:?}", verify(&p, &bb));
        prop_assert!(verify(&p, &bf).is_empty(), "{:?}", verify(&p, &bf));
        prop_assert!(close(bb.objective, bf.objective), "{} vs {}", bb.objective, bf.objective);
        prop_assert!(close(bb.objective, cl), "{} vs clarabel {}", bb.objective, cl);
    }

    #[test]
    fn raising_gamma_never_raises_the_peak(seed in any::<u64>(), g in 0.0f64..0.3, dg in 0.0f64..0.3) {
        let p = random_instance(seed);
        let low = solve(&with_gamma(&p, g)).unwrap();
        let high = solve(&with_gamma(&p, g + dg)).unwrap();
        // solver accuracy on PPFD is about 1e-8 of PPFD_max
        prop_assert!(high.peak_ra() <= low.peak_ra() + 1e-5, "{} > {}", high.peak_ra(), low.peak_ra());
    }

    #[test]
    fn uniform_recipe_never_beats_the_optimum(seed in any::<u64>()) {
        let p = random_instance(seed);
        let free = p.free_hours();
        let level = p.remaining_light() / free as f64;
        prop_assume!(level >= p.bounds.ppfd_min && level <= p.bounds.ppfd_max);
        let mut ra: Vec<f64> = p.committed.iter().map(|c| c.ra).collect();
        ra.extend(std::iter::repeat_n(level, free));
        let uniform = greenlight::mpc::objective_value(&p.prices, &ra, &p.weights);
        let best = solve(&p).unwrap();
        prop_assert!(best.objective <= uniform + 1e-6 * uniform.abs().max(1.0));
    }

    #[test]
    fn committed_hours_survive_noisy_forecasts(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prices: Vec<f64> = (0..24).map(|_| rng.random_range(-0.02..0.2)).collect();
        let solar: Vec<f64> = (0..24)
            .map(|h| if (7..18).contains(&h) { rng.random_range(0.0..700.0) } else { 0.0 })
            .collect();
        let noise: Vec<(f64, f64)> = (0..24 * 24)
            .map(|_| (rng.random_range(-0.03..0.03), rng.random_range(0.6..1.4)))
            .collect();
        let (pa, sa) = (prices.clone(), solar.clone());
        let forecast = move |step: usize| {
            let p = pa.iter().enumerate().map(|(n, v)| v + noise[step * 24 + n].0).collect();
            let s = sa.iter().enumerate().map(|(n, v)| v * noise[step * 24 + n].1).collect();
            (p, s)
        };
        let day = run_day(
            &prices,
            &solar,
            &forecast,
            &PhysiologyBounds::default(),
            MpcWeights::default(),
            SolverSettings::default(),
        )
        .unwrap();
        prop_assert_eq!(day.verify_issues(), 0);
        prop_assert!(day.schedule.is_complete());
        let dli: f64 = day.schedule.hours().iter().map(|c| (c.ra + c.rs) * DLI_PER_PPFD_HOUR).sum();
        if day.repairs.is_empty() {
            prop_assert!((dli - 12.96).abs() <= 1e-6, "{dli}");
        }
    }
}

#[test]
fn instances_that_once_stalled_the_interior_point_solver() {
    for seed in [10027406489460047239, 2769126664666251974, 139858856565610021] {
        let p = random_instance(seed);
        let bb = solve(&p).unwrap();
        let bf = brute_force_solve(&p).unwrap();
        assert!(verify(&p, &bb).is_empty());
        assert!(close(bb.objective, bf.objective));
    }
}
