//! Constraint checks that share nothing with the solver.

use serde::{Deserialize, Serialize};

use super::{MpcProblem, MpcSolution};
use crate::recipe::{DLI_PER_PPFD_HOUR, DLI_TOLERANCE};

/// Slack allowed on PPFD (in)equalities, µmol·m⁻²·s⁻¹.
pub const PPFD_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyIssue {
    /// Constraint label: `ra=x*u`, `committed`, `x>=min`, `rs=Y*v*w`,
    /// `v`, `w`, `r=ra+rs`, `r<=max`, `r>=min*v`, `dli`, `shape`.
    pub constraint: &'static str,
    pub hour: Option<usize>,
    pub detail: String,
}

/// Checks `solution` against every constraint of `problem`.
///
/// Committed hours are history: they must match the problem bit for bit and
/// stay under `PPFD_max`, but the sunlit floor is only enforced on hours the
/// solver still controls.
pub fn verify(problem: &MpcProblem, solution: &MpcSolution) -> Vec<VerifyIssue> {
    let mut out = Vec::new();
    let h = problem.horizon();
    let mut issue = |constraint: &'static str, hour: Option<usize>, detail: String| {
        out.push(VerifyIssue {
            constraint,
            hour,
            detail,
        })
    };
    let lens = [
        solution.u.len(),
        solution.x.len(),
        solution.v.len(),
        solution.w.len(),
        solution.ra.len(),
        solution.rs.len(),
        solution.r.len(),
    ];
    if lens.iter().any(|&l| l != h) {
        issue("shape", None, format!("vector lengths {lens:?} for horizon {h}"));
        return out;
    }
    let b = &problem.bounds;
    for n in 0..h {
        let on = if solution.u[n] { 1.0 } else { 0.0 };
        if (solution.ra[n] - solution.x[n] * on).abs() > PPFD_TOLERANCE {
            issue("ra=x*u", Some(n), format!("{} vs {}·{on}", solution.ra[n], solution.x[n]));
        }
        if n < problem.step {
            let c = &problem.committed[n];
            let same = c.u == solution.u[n]
                && c.x.to_bits() == solution.x[n].to_bits()
                && c.w.to_bits() == solution.w[n].to_bits()
                && c.ra.to_bits() == solution.ra[n].to_bits()
                && c.rs.to_bits() == solution.rs[n].to_bits();
            if !same {
                issue("committed", Some(n), "committed hour changed".into());
            }
        } else if solution.x[n] < b.ppfd_min - PPFD_TOLERANCE {
            issue("x>=min", Some(n), format!("x = {}", solution.x[n]));
        }
        let sunlit = problem.solar[n] > problem.settings.eps_sun;
        if solution.v[n] != sunlit {
            issue("v", Some(n), format!("v = {} but solar {}", solution.v[n], problem.solar[n]));
        }
        let v = if solution.v[n] { 1.0 } else { 0.0 };
        if (solution.rs[n] - problem.solar[n] * v * solution.w[n]).abs() > PPFD_TOLERANCE {
            issue("rs=Y*v*w", Some(n), format!("rs = {}", solution.rs[n]));
        }
        if !(0.0..=1.0).contains(&solution.w[n]) {
            issue("w", Some(n), format!("w = {}", solution.w[n]));
        }
        if (solution.r[n] - solution.ra[n] - solution.rs[n]).abs() > PPFD_TOLERANCE {
            issue("r=ra+rs", Some(n), format!("r = {}", solution.r[n]));
        }
        if solution.r[n] > b.ppfd_max + PPFD_TOLERANCE {
            issue("r<=max", Some(n), format!("r = {}", solution.r[n]));
        }
        if n >= problem.step
            && problem.settings.sunlit_floor
            && solution.r[n] < b.ppfd_min * v - PPFD_TOLERANCE
        {
            issue("r>=min*v", Some(n), format!("r = {}", solution.r[n]));
        }
    }
    let dli: f64 = solution.r.iter().map(|r| DLI_PER_PPFD_HOUR * r).sum();
    if (dli - problem.dli_target).abs() > DLI_TOLERANCE {
        issue("dli", None, format!("{dli} vs target {}", problem.dli_target));
    }
    out
}
