//! Instance generator and an enumeration oracle whose inner QP is solved by
//! Clarabel from a direct (x, s, m) formulation.

#![allow(dead_code)]

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use greenlight::mpc::{feasibility_check, CommittedHour, MpcProblem, MpcWeights, EPS_SUN};
use greenlight::recipe::{PhysiologyBounds, DLI_PER_PPFD_HOUR};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random feasible instance with `2..=8` free hours, possibly after a few
/// committed hours.
pub fn random_instance(seed: u64) -> MpcProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let free = rng.random_range(2..=8);
        let past = if rng.random_bool(0.3) { rng.random_range(1..=3) } else { 0 };
        let hours = past + free;
        let bounds = PhysiologyBounds::default();
        let prices: Vec<f64> = (0..hours).map(|_| rng.random_range(-0.02..=0.20)).collect();
        let solar: Vec<f64> = (0..hours)
            .map(|n| {
                if n < past || rng.random_bool(0.4) {
                    0.0
                } else {
                    match rng.random_range(0..4) {
                        0 => rng.random_range(0.0..2.0),
                        1 => rng.random_range(50.0..200.0),
                        _ => rng.random_range(0.0..1100.0),
                    }
                }
            })
            .collect();
        let committed: Vec<CommittedHour> = (0..past)
            .map(|_| {
                if rng.random_bool(0.5) {
                    let x = rng.random_range(bounds.ppfd_min..=bounds.ppfd_max);
                    CommittedHour { u: true, x, w: 1.0, ra: x, rs: 0.0 }
                } else {
                    CommittedHour::dark()
                }
            })
            .collect();
        let weights = MpcWeights {
            alpha: 1.0,
            beta: if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..1e-3) },
            gamma: if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..0.2) },
        };
        let light: f64 = committed.iter().map(|c| c.ra).sum::<f64>()
            + rng.random_range(0.0..=bounds.ppfd_max * free as f64);
        let mut problem = MpcProblem::new(prices, solar, bounds, weights);
        problem.step = past;
        problem.committed = committed;
        problem.dli_target = light * DLI_PER_PPFD_HOUR;
        problem.bounds.dli_target = problem.dli_target;
        if feasibility_check(&problem).is_feasible() {
            return problem;
        }
    }
}

/// Minimum over all LED patterns of the pattern's convex program, or `None`
/// when no pattern is feasible.
pub fn enumerate_with_clarabel(problem: &MpcProblem) -> Option<f64> {
    let free = problem.horizon() - problem.step;
    assert!(free <= 12);
    (0..1u32 << free)
        .filter_map(|mask| {
            let on: Vec<bool> = (0..free).map(|j| mask >> j & 1 == 1).collect();
            pattern_optimum(problem, &on)
        })
        .min_by(f64::total_cmp)
}

/// Optimal objective with the free hours' LED states fixed to `on`.
pub fn pattern_optimum(problem: &MpcProblem, on: &[bool]) -> Option<f64> {
    let b = &problem.bounds;
    let w = problem.weights;
    let scale = b.ppfd_max;
    let step = problem.step;
    let mut constant = 0.0;
    let mut committed_peak: f64 = 0.0;
    for (n, c) in problem.committed.iter().enumerate() {
        constant += w.alpha * problem.prices[n] * c.ra + w.beta * c.ra * c.ra;
        committed_peak = committed_peak.max(c.ra);
    }
    // variables: x per on hour, s per sunlit hour, then m
    let mut x_idx = vec![None; on.len()];
    let mut s_idx = vec![None; on.len()];
    let mut nv = 0;
    for j in 0..on.len() {
        if on[j] {
            x_idx[j] = Some(nv);
            nv += 1;
        }
        if problem.solar[step + j] > EPS_SUN {
            s_idx[j] = Some(nv);
            nv += 1;
        }
    }
    let m = nv;
    nv += 1;
    let mut p = vec![0.0; nv];
    let mut q = vec![0.0; nv];
    for j in 0..on.len() {
        if let Some(x) = x_idx[j] {
            p[x] = 2.0 * w.beta * scale * scale;
            q[x] = w.alpha * problem.prices[step + j] * scale;
        }
    }
    q[m] = w.gamma * scale;

    let mut eq = vec![0.0; nv];
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut le = |terms: &[(usize, f64)], rhs: f64| {
        let mut r = vec![0.0; nv];
        for &(i, v) in terms {
            r[i] += v;
        }
        rows.push((r, rhs));
    };
    let lmin = b.ppfd_min / scale;
    for j in 0..on.len() {
        let y = problem.solar[step + j];
        let mut all = Vec::new();
        if let Some(x) = x_idx[j] {
            le(&[(x, -1.0)], -lmin);
            le(&[(x, 1.0), (m, -1.0)], 0.0);
            all.push((x, 1.0));
            eq[x] = 1.0;
        }
        if let Some(s) = s_idx[j] {
            le(&[(s, -1.0)], 0.0);
            le(&[(s, 1.0)], y / scale);
            all.push((s, 1.0));
            eq[s] = 1.0;
        }
        if !all.is_empty() {
            le(&all, 1.0);
        }
        if s_idx[j].is_some() && problem.settings.sunlit_floor && !on[j] {
            let neg: Vec<(usize, f64)> = all.iter().map(|&(i, v)| (i, -v)).collect();
            le(&neg, -lmin);
        }
    }
    le(&[(m, -1.0)], -committed_peak / scale);
    le(&[(m, 1.0)], 1.0);
    let light = problem.dli_target / DLI_PER_PPFD_HOUR
        - problem.committed.iter().map(|c| c.ra + c.rs).sum::<f64>();

    let mut a_rows = vec![eq];
    let mut rhs = vec![light / scale];
    for (r, v) in rows {
        a_rows.push(r);
        rhs.push(v);
    }
    let dense_p: Vec<Vec<f64>> = (0..nv)
        .map(|i| (0..nv).map(|k| if i == k { p[i] } else { 0.0 }).collect())
        .collect();
    let pm = CscMatrix::from(dense_p.iter());
    let am = CscMatrix::from(a_rows.iter());
    let cones = [
        SupportedConeT::ZeroConeT(1),
        SupportedConeT::NonnegativeConeT(a_rows.len() - 1),
    ];
    let mut settings = DefaultSettings::default();
    settings.verbose = false;
    settings.tol_gap_abs = 1e-11;
    settings.tol_gap_rel = 1e-11;
    settings.tol_feas = 1e-11;
    settings.max_iter = 200;
    let mut solver = DefaultSolver::new(&pm, &q, &am, &rhs, &cones, settings).ok()?;
    solver.solve();
    match solver.solution.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => Some(solver.solution.obj_val + constant),
        _ => None,
    }
}
