use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::node::{NodeQp, NodeResult};
use super::{
    card_feasible, feasibility_check, node_feasible, objective_value, Feasibility, Fix, MpcError, MpcProblem,
    MpcSolution, SolveStats, SolveStatus,
};

/// Largest number of free hours [`brute_force_solve`] accepts.
pub const BRUTE_FORCE_MAX_FREE: usize = 10;

const FRACTIONAL: f64 = 1e-6;

fn tie_tolerance(value: f64) -> f64 {
    1e-9 * value.abs().max(1.0)
}

/// A fully fixed pattern and its optimum.
#[derive(Debug, Clone)]
struct Leaf {
    pattern: Vec<bool>,
    result: NodeResult,
}

/// Lower objective wins; within tolerance the pattern with LEDs on at the
/// first differing hour wins.
fn better(candidate: &Leaf, incumbent: Option<&Leaf>) -> bool {
    let Some(inc) = incumbent else {
        return true;
    };
    let (a, b) = (candidate.result.value, inc.result.value);
    if a < b - tie_tolerance(b) {
        return true;
    }
    if a > b + tie_tolerance(b) {
        return false;
    }
    match candidate.pattern.iter().zip(&inc.pattern).find(|(x, y)| x != y) {
        Some((&c, _)) => c,
        None => false,
    }
}

fn solve_leaf(problem: &MpcProblem, pattern: &[bool]) -> Result<Option<Leaf>, MpcError> {
    let fixes: Vec<Fix> = pattern.iter().map(|&on| if on { Fix::On } else { Fix::Off }).collect();
    if !node_feasible(problem, &fixes) {
        return Ok(None);
    }
    let result = NodeQp::build(problem, &fixes).solve(problem.settings.qp_tolerance)?;
    Ok(Some(Leaf {
        pattern: pattern.to_vec(),
        result,
    }))
}

struct Open {
    bound: f64,
    seq: usize,
    fixes: Vec<Fix>,
    /// Range of the number of lit free hours.
    card: (usize, usize),
    relaxed: NodeResult,
}

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Open {}
impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Open {
    // max-heap: smallest bound first, then oldest
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

fn infeasible_error(problem: &MpcProblem) -> MpcError {
    match feasibility_check(problem) {
        Feasibility::Infeasible(r) => MpcError::Infeasible(r),
        Feasibility::Feasible => MpcError::Solver("no feasible pattern found".into()),
    }
}

/// Best-first branch and bound.
pub fn solve(problem: &MpcProblem) -> Result<MpcSolution, MpcError> {
    solve_with_hint(problem, None)
}

/// As [`solve`], seeding the incumbent with an LED pattern over the whole
/// horizon (typically the previous step's plan).
pub fn solve_with_hint(
    problem: &MpcProblem,
    hint: Option<&[bool]>,
) -> Result<MpcSolution, MpcError> {
    problem.check()?;
    let free = problem.free_hours();
    let root_fixes = vec![Fix::Free; free];
    if !node_feasible(problem, &root_fixes) {
        return Err(infeasible_error(problem));
    }
    let tol = problem.settings.qp_tolerance;
    let mut stats = SolveStats {
        nodes: 0,
        qp_solves: 0,
        gap: 0.0,
    };
    let mut incumbent: Option<Leaf> = None;
    let offer = |leaf: Option<Leaf>, incumbent: &mut Option<Leaf>| {
        if let Some(leaf) = leaf {
            if better(&leaf, incumbent.as_ref()) {
                *incumbent = Some(leaf);
            }
        }
    };

    if let Some(h) = hint.filter(|h| h.len() == problem.horizon()) {
        stats.qp_solves += 1;
        offer(solve_leaf(problem, &h[problem.step..])?, &mut incumbent);
    }

    let root = NodeQp::build(problem, &root_fixes).solve(tol)?;
    stats.qp_solves += 1;
    let rounded: Vec<bool> = root.on_fraction.iter().map(|f| *f >= 0.5).collect();
    stats.qp_solves += 1;
    offer(solve_leaf(problem, &rounded)?, &mut incumbent);

    let mut heap = BinaryHeap::new();
    let mut seq = 0;
    heap.push(Open {
        bound: root.value,
        seq,
        fixes: root_fixes,
        card: (0, free),
        relaxed: root,
    });
    let mut status = SolveStatus::Optimal;
    let mut best_open = f64::NEG_INFINITY;

    while let Some(node) = heap.pop() {
        if let Some(inc) = &incumbent {
            let v = inc.result.value;
            if node.bound >= v - tie_tolerance(v) {
                break;
            }
        }
        if stats.nodes >= problem.settings.node_limit {
            best_open = node.bound;
            status = SolveStatus::NodeLimit;
            break;
        }
        stats.nodes += 1;

        // The lit count is branched on first: with near-equal prices the
        // hull bound cannot tell apart patterns of a fractional count.
        let count: f64 = node.relaxed.on_fraction.iter().sum();
        let whole = count.round();
        let children: Vec<(Vec<Fix>, (usize, usize))> = if node.card.0 < node.card.1
            && (count - whole).abs() > FRACTIONAL
        {
            let lo = count.floor() as usize;
            vec![
                (node.fixes.clone(), (lo + 1, node.card.1)),
                (node.fixes.clone(), (node.card.0, lo)),
            ]
        } else {
            let branch = node.fixes.iter().enumerate().position(|(j, f)| {
                let frac = node.relaxed.on_fraction[j];
                *f == Fix::Free && frac > FRACTIONAL && frac < 1.0 - FRACTIONAL
            });
            let Some(j) = branch else {
                // integral relaxation: its rounding is optimal for this subtree
                let pattern: Vec<bool> = node.relaxed.on_fraction.iter().map(|f| *f >= 0.5).collect();
                stats.qp_solves += 1;
                offer(solve_leaf(problem, &pattern)?, &mut incumbent);
                continue;
            };
            [Fix::On, Fix::Off]
                .into_iter()
                .map(|fix| {
                    let mut fixes = node.fixes.clone();
                    fixes[j] = fix;
                    (fixes, node.card)
                })
                .collect()
        };
        for (fixes, card) in children {
            if !card_feasible(problem, &fixes, card) {
                continue;
            }
            if fixes.iter().all(|f| *f != Fix::Free) {
                let pattern: Vec<bool> = fixes.iter().map(|f| *f == Fix::On).collect();
                stats.qp_solves += 1;
                offer(solve_leaf(problem, &pattern)?, &mut incumbent);
                continue;
            }
            let relaxed = NodeQp::with_card(problem, &fixes, card).solve(tol)?;
            stats.qp_solves += 1;
            let bound = relaxed.value.max(node.bound);
            if let Some(inc) = &incumbent {
                let v = inc.result.value;
                if bound >= v - tie_tolerance(v) {
                    continue;
                }
            }
            seq += 1;
            heap.push(Open {
                bound,
                seq,
                fixes,
                card,
                relaxed,
            });
        }
    }

    let Some(best) = incumbent else {
        return Err(MpcError::Solver("no feasible pattern found".into()));
    };
    if status == SolveStatus::NodeLimit {
        let v = best.result.value;
        stats.gap = ((v - best_open) / v.abs().max(1.0)).max(0.0);
    }
    Ok(assemble_solution(problem, &best, status, stats))
}

/// Enumerates every LED pattern of the free hours.
pub fn brute_force_solve(problem: &MpcProblem) -> Result<MpcSolution, MpcError> {
    problem.check()?;
    let free = problem.free_hours();
    if free > BRUTE_FORCE_MAX_FREE {
        return Err(MpcError::TooManyFreeHours {
            free,
            max: BRUTE_FORCE_MAX_FREE,
        });
    }
    let mut stats = SolveStats {
        nodes: 0,
        qp_solves: 0,
        gap: 0.0,
    };
    let mut best: Option<Leaf> = None;
    for bits in 0u32..(1 << free) {
        let pattern: Vec<bool> = (0..free).map(|j| bits >> j & 1 == 1).collect();
        stats.nodes += 1;
        if let Some(leaf) = solve_leaf(problem, &pattern)? {
            stats.qp_solves += 1;
            if better(&leaf, best.as_ref()) {
                best = Some(leaf);
            }
        }
    }
    match best {
        Some(b) => Ok(assemble_solution(problem, &b, SolveStatus::Optimal, stats)),
        None => Err(infeasible_error(problem)),
    }
}

fn assemble_solution(
    problem: &MpcProblem,
    leaf: &Leaf,
    status: SolveStatus,
    stats: SolveStats,
) -> MpcSolution {
    let b = &problem.bounds;
    let horizon = problem.horizon();
    let mut sol = MpcSolution {
        step: problem.step,
        u: Vec::with_capacity(horizon),
        x: Vec::with_capacity(horizon),
        v: (0..horizon).map(|n| problem.sunlit(n)).collect(),
        w: Vec::with_capacity(horizon),
        ra: Vec::with_capacity(horizon),
        rs: Vec::with_capacity(horizon),
        r: Vec::with_capacity(horizon),
        objective: 0.0,
        dli_target: problem.dli_target,
        status,
        stats,
    };
    for c in &problem.committed {
        sol.u.push(c.u);
        sol.x.push(c.x);
        sol.w.push(c.w);
        sol.ra.push(c.ra);
        sol.rs.push(c.rs);
    }
    for (j, &on) in leaf.pattern.iter().enumerate() {
        let n = problem.step + j;
        let y = problem.solar[n];
        let mut a = if on {
            leaf.result.ra[j].clamp(b.ppfd_min, b.ppfd_max)
        } else {
            0.0
        };
        let (w, s) = if sol.v[n] {
            let w = (leaf.result.rs[j] / y).clamp(0.0, 1.0);
            (w, y * w)
        } else {
            (1.0, 0.0)
        };
        if a + s > b.ppfd_max && on {
            a = (b.ppfd_max - s).max(b.ppfd_min);
        }
        sol.u.push(on);
        sol.x.push(if on { a } else { b.ppfd_min });
        sol.w.push(w);
        sol.ra.push(a);
        sol.rs.push(s);
    }
    sol.r = sol.ra.iter().zip(&sol.rs).map(|(a, s)| a + s).collect();
    sol.objective = objective_value(&problem.prices, &sol.ra, &problem.weights);
    sol
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpc::{verify, MpcWeights};
    use crate::recipe::{PhysiologyBounds, DLI_PER_PPFD_HOUR};
    use approx::assert_relative_eq;

    fn bounds(dli: f64) -> PhysiologyBounds {
        PhysiologyBounds {
            dli_target: dli,
            ..PhysiologyBounds::default()
        }
    }

    fn toy(beta: f64) -> MpcProblem {
        MpcProblem::new(
            vec![0.10, 0.05],
            vec![0.0, 0.0],
            bounds(1.08),
            MpcWeights {
                alpha: 1.0,
                beta,
                gamma: 0.0,
            },
        )
    }

    #[test]
    fn cheap_hour_takes_all_light() {
        let p = toy(0.0);
        for sol in [solve(&p).unwrap(), brute_force_solve(&p).unwrap()] {
            assert_eq!(sol.u, vec![false, true]);
            assert_relative_eq!(sol.ra[1], 300.0, max_relative = 1e-9);
            assert_relative_eq!(sol.objective, 15.0, max_relative = 1e-9);
            assert!(verify(&p, &sol).is_empty(), "{:?}", verify(&p, &sol));
        }
    }

    #[test]
    fn strong_smoothing_splits_evenly() {
        let p = toy(1e4);
        for sol in [solve(&p).unwrap(), brute_force_solve(&p).unwrap()] {
            assert_eq!(sol.u, vec![true, true]);
            assert_relative_eq!(sol.ra[0], 150.0, max_relative = 1e-6);
            assert_relative_eq!(sol.ra[1], 150.0, max_relative = 1e-6);
        }
    }

    #[test]
    fn maximal_target_forces_full_power() {
        let n = 6;
        let p = MpcProblem::new(
            (0..n).map(|i| 0.01 * i as f64).collect(),
            vec![0.0; n],
            bounds(DLI_PER_PPFD_HOUR * 880.0 * n as f64),
            MpcWeights::default(),
        );
        let sol = solve(&p).unwrap();
        for a in &sol.ra {
            assert_relative_eq!(*a, 880.0, max_relative = 1e-7);
        }
        assert!(verify(&p, &sol).is_empty(), "{:?}", verify(&p, &sol));
    }

    #[test]
    fn zero_price_zero_objective() {
        let p = MpcProblem::new(
            vec![0.0; 24],
            vec![0.0; 24],
            bounds(12.96),
            MpcWeights {
                alpha: 1.0,
                beta: 0.0,
                gamma: 0.0,
            },
        );
        let sol = solve(&p).unwrap();
        assert_eq!(sol.objective, 0.0);
        assert!(verify(&p, &sol).is_empty());
    }

    #[test]
    fn brute_force_rejects_long_horizons() {
        let p = MpcProblem::new(vec![0.1; 11], vec![0.0; 11], bounds(1.0), MpcWeights::default());
        assert!(matches!(
            brute_force_solve(&p),
            Err(MpcError::TooManyFreeHours { free: 11, .. })
        ));
    }

    #[test]
    fn infeasible_agrees_with_feasibility_check() {
        let p = MpcProblem::new(
            vec![0.1, 0.1],
            vec![0.0, 0.0],
            bounds(DLI_PER_PPFD_HOUR * 2000.0),
            MpcWeights::default(),
        );
        assert!(!feasibility_check(&p).is_feasible());
        assert!(matches!(solve(&p), Err(MpcError::Infeasible(_))));
        assert!(matches!(brute_force_solve(&p), Err(MpcError::Infeasible(_))));
    }

    #[test]
    fn equal_prices_give_smooth_schedule() {
        let p = MpcProblem::new(
            vec![0.05; 6],
            vec![0.0; 6],
            bounds(DLI_PER_PPFD_HOUR * 1200.0),
            MpcWeights {
                alpha: 1.0,
                beta: 1e-4,
                gamma: 0.0,
            },
        );
        let sol = brute_force_solve(&p).unwrap();
        assert!(sol.u.iter().all(|u| *u));
        for a in &sol.ra {
            assert_relative_eq!(*a, 200.0, max_relative = 1e-6);
        }
        assert_relative_eq!(solve(&p).unwrap().objective, sol.objective, max_relative = 1e-9);
    }

    #[test]
    fn shading_caps_strong_sun() {
        // sun alone exceeds the target: shade, LEDs off
        let p = MpcProblem::new(
            vec![0.05; 4],
            vec![900.0, 900.0, 0.0, 0.0],
            bounds(DLI_PER_PPFD_HOUR * 1000.0),
            MpcWeights::default(),
        );
        let sol = solve(&p).unwrap();
        assert!(sol.u.iter().all(|u| !u));
        assert_relative_eq!(sol.rs[0], 500.0, max_relative = 1e-6);
        assert_relative_eq!(sol.rs[1], 500.0, max_relative = 1e-6);
        assert!(verify(&p, &sol).is_empty(), "{:?}", verify(&p, &sol));
    }
}
