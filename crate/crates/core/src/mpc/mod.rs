//! Receding-horizon lighting optimisation.
//!
//! At step `i` the hours before `i` are committed and the program chooses,
//! for every remaining hour, whether the LEDs are on (`u`), their intensity
//! (`x`) and the shading factor (`w`) so that
//!
//! ```text
//! α Σ P[n]·r_a[n] + β Σ r_a[n]² + γ max r_a[n]
//! ```
//!
//! is minimal while every hour stays within the PPFD range and the day's
//! light integral hits the target. Sunlight availability `v[n]` is data:
//! an hour is sunlit when its solar PPFD exceeds `eps_sun`.
//!
//! With `u` fixed the rest is a convex QP, so the binaries are resolved by
//! branch and bound over a convex-hull relaxation ([`solve`]), with an
//! exhaustive enumerator ([`brute_force_solve`]) as reference.

mod bnb;
mod node;
pub mod qp;
mod schedule;
mod verify;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::recipe::{PhysiologyBounds, DLI_PER_PPFD_HOUR};

pub use bnb::{brute_force_solve, solve, solve_with_hint, BRUTE_FORCE_MAX_FREE};
pub use schedule::{
    run_day, write_diagnostics_csv, CommittedHour, DayForecast, DayResult, RepairNote, Schedule,
    StepDiagnostics,
};
pub use verify::{verify, VerifyIssue};

/// Solar PPFD above which an hour counts as sunlit, µmol·m⁻²·s⁻¹.
pub const EPS_SUN: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcWeights {
    /// Energy price term.
    pub alpha: f64,
    /// Smoothness term, $·(µmol·m⁻²·s⁻¹)⁻².
    pub beta: f64,
    /// Peak term, $·(µmol·m⁻²·s⁻¹)⁻¹.
    pub gamma: f64,
}

impl Default for MpcWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1e-4,
            gamma: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub eps_sun: f64,
    /// Require `r[n] ≥ PPFD_min` in every sunlit hour. When off, only lit
    /// LED hours are held to the minimum.
    pub sunlit_floor: bool,
    pub node_limit: usize,
    /// Weight of the tie-breaking terms `ρ·(Y − r_s)²` and `ρ·(r_a − PPFD_min)²`
    /// in scaled units. Small enough not to change the objective beyond
    /// solver precision, large enough to make the optimum unique.
    pub regularization: f64,
    pub qp_tolerance: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            eps_sun: EPS_SUN,
            sunlit_floor: true,
            node_limit: 100_000,
            regularization: 1e-7,
            qp_tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Error)]
pub enum MpcError {
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error("no forecast for hour {hour}")]
    MissingForecast { hour: usize },
    #[error("infeasible: {0}")]
    Infeasible(FeasibilityReport),
    #[error("{free} free hours exceed the enumeration limit of {max}")]
    TooManyFreeHours { free: usize, max: usize },
    #[error("hour {hour} is already committed")]
    DoubleCommit { hour: usize },
    #[error("expected to commit hour {expected}, got {got}")]
    OutOfOrder { expected: usize, got: usize },
    #[error("solver: {0}")]
    Solver(String),
}

/// One instance of the program at step `step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcProblem {
    /// Number of committed hours; hours `step..` are free.
    pub step: usize,
    /// $/kWh per hour: actual before `step`, forecast after.
    pub prices: Vec<f64>,
    /// Solar PPFD reaching the crop without shading, per hour.
    pub solar: Vec<f64>,
    pub committed: Vec<CommittedHour>,
    pub bounds: PhysiologyBounds,
    /// Daily light integral to deliver, mol·m⁻²·day⁻¹. Equals
    /// `bounds.dli_target` unless the repair policy moved it.
    pub dli_target: f64,
    pub weights: MpcWeights,
    pub settings: SolverSettings,
}

impl MpcProblem {
    /// Step-0 problem with no history.
    pub fn new(
        prices: Vec<f64>,
        solar: Vec<f64>,
        bounds: PhysiologyBounds,
        weights: MpcWeights,
    ) -> Self {
        Self {
            step: 0,
            prices,
            solar,
            committed: Vec::new(),
            dli_target: bounds.dli_target,
            bounds,
            weights,
            settings: SolverSettings::default(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.prices.len()
    }

    pub fn free_hours(&self) -> usize {
        self.horizon() - self.step
    }

    /// `v[n]`
    pub fn sunlit(&self, n: usize) -> bool {
        self.solar[n] > self.settings.eps_sun
    }

    pub fn check(&self) -> Result<(), MpcError> {
        let bad = |m: String| Err(MpcError::Invalid(m));
        if self.prices.is_empty() || self.solar.len() != self.prices.len() {
            return bad(format!(
                "price and solar vectors must be non-empty and equal length ({} vs {})",
                self.prices.len(),
                self.solar.len()
            ));
        }
        if self.step > self.horizon() || self.committed.len() != self.step {
            return bad(format!(
                "step {} with {} committed hours over a {}-hour horizon",
                self.step,
                self.committed.len(),
                self.horizon()
            ));
        }
        if self.prices.iter().chain(&self.solar).any(|v| !v.is_finite()) {
            return bad("non-finite price or solar value".into());
        }
        if self.solar.iter().any(|&y| y < 0.0) {
            return bad("negative solar PPFD".into());
        }
        self.bounds
            .check()
            .map_err(|e| MpcError::Invalid(e.to_string()))?;
        let w = self.weights;
        if !(w.alpha >= 0.0 && w.beta >= 0.0 && w.gamma >= 0.0) {
            return bad("weights must be non-negative".into());
        }
        if !(self.dli_target >= 0.0) {
            return bad("negative DLI target".into());
        }
        for (n, c) in self.committed.iter().enumerate() {
            if c.ra != if c.u { c.x } else { 0.0 } {
                return bad(format!("committed hour {n}: r_a differs from x·u"));
            }
        }
        Ok(())
    }

    /// Light delivered by the committed hours, µmol·m⁻²·s⁻¹·h.
    pub fn committed_light(&self) -> f64 {
        self.committed.iter().map(|c| c.ra + c.rs).sum()
    }

    /// Hour-sum of total PPFD the free hours must deliver.
    pub fn remaining_light(&self) -> f64 {
        self.dli_target / DLI_PER_PPFD_HOUR - self.committed_light()
    }
}

/// Splices actuals (hours before `step`) and forecasts (hours from `step`)
/// into one problem.
#[allow(clippy::too_many_arguments)]
pub fn assemble_problem(
    step: usize,
    actual_prices: &[f64],
    actual_solar: &[f64],
    price_forecast: &[f64],
    solar_forecast: &[f64],
    committed: &[CommittedHour],
    bounds: &PhysiologyBounds,
    weights: MpcWeights,
    settings: SolverSettings,
    horizon: usize,
) -> Result<MpcProblem, MpcError> {
    if actual_prices.len() < step || actual_solar.len() < step {
        return Err(MpcError::Invalid(format!("history shorter than step {step}")));
    }
    for hour in step..horizon {
        if hour >= price_forecast.len() || hour >= solar_forecast.len() {
            return Err(MpcError::MissingForecast { hour });
        }
    }
    let splice = |actual: &[f64], forecast: &[f64]| -> Vec<f64> {
        (0..horizon)
            .map(|n| if n < step { actual[n] } else { forecast[n] })
            .collect()
    };
    let problem = MpcProblem {
        step,
        prices: splice(actual_prices, price_forecast),
        solar: splice(actual_solar, solar_forecast),
        committed: committed.to_vec(),
        bounds: bounds.clone(),
        dli_target: bounds.dli_target,
        weights,
        settings,
    };
    problem.check()?;
    Ok(problem)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    /// Node limit reached; the incumbent is returned with its gap.
    NodeLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub nodes: usize,
    pub qp_solves: usize,
    /// `(incumbent − bound) / max(1, |incumbent|)`
    pub gap: f64,
}

/// Decision variables and derived recipe over the full horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcSolution {
    pub step: usize,
    pub u: Vec<bool>,
    pub x: Vec<f64>,
    pub v: Vec<bool>,
    pub w: Vec<f64>,
    pub ra: Vec<f64>,
    pub rs: Vec<f64>,
    pub r: Vec<f64>,
    /// Objective over all hours, committed ones included.
    pub objective: f64,
    pub dli_target: f64,
    pub status: SolveStatus,
    pub stats: SolveStats,
}

impl MpcSolution {
    pub fn dli(&self) -> f64 {
        self.r.iter().map(|r| DLI_PER_PPFD_HOUR * r).sum()
    }

    pub fn peak_ra(&self) -> f64 {
        self.ra.iter().copied().fold(0.0, f64::max)
    }
}

/// `α Σ P·r_a + β Σ r_a² + γ max r_a`
pub fn objective_value(prices: &[f64], ra: &[f64], weights: &MpcWeights) -> f64 {
    let linear: f64 = prices.iter().zip(ra).map(|(p, a)| p * a).sum();
    let quad: f64 = ra.iter().map(|a| a * a).sum();
    let peak = ra.iter().copied().fold(0.0, f64::max);
    weights.alpha * linear + weights.beta * quad + weights.gamma * peak
}

/// Why a problem has no feasible schedule, in DLI terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub required_dli: f64,
    /// Closest achievable DLI.
    pub nearest_dli: f64,
    /// `required − nearest`; positive when short of light.
    pub deficit: f64,
    pub min_dli: f64,
    pub max_dli: f64,
    pub binding: String,
}

impl fmt::Display for FeasibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: DLI {:.6} required, nearest achievable {:.6} (range {:.6}..{:.6})",
            self.binding, self.required_dli, self.nearest_dli, self.min_dli, self.max_dli
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    Feasible,
    Infeasible(FeasibilityReport),
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible)
    }
}

/// Whether the LEDs of a free hour are forced on, forced off, or open.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) enum Fix {
    Free,
    On,
    Off,
}

/// Disjoint sorted intervals of reachable hour-sums of total PPFD.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Reach(Vec<(f64, f64)>);

impl Reach {
    fn point(v: f64) -> Self {
        Reach(vec![(v, v)])
    }

    fn plus(&self, options: &[(f64, f64)]) -> Self {
        let mut all: Vec<(f64, f64)> = self
            .0
            .iter()
            .flat_map(|a| options.iter().map(move |b| (a.0 + b.0, a.1 + b.1)))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(all.len());
        for iv in all {
            match merged.last_mut() {
                Some(last) if iv.0 <= last.1 + 1e-9 => last.1 = last.1.max(iv.1),
                _ => merged.push(iv),
            }
        }
        Reach(merged)
    }

    fn union(mut self, other: Reach) -> Self {
        self.0.extend(other.0);
        self.0.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(self.0.len());
        for iv in self.0 {
            match merged.last_mut() {
                Some(last) if iv.0 <= last.1 + 1e-9 => last.1 = last.1.max(iv.1),
                _ => merged.push(iv),
            }
        }
        Reach(merged)
    }

    fn contains(&self, t: f64, tol: f64) -> bool {
        self.0.iter().any(|&(lo, hi)| t >= lo - tol && t <= hi + tol)
    }

    /// Closest reachable value; ties go to the larger one.
    fn nearest(&self, t: f64) -> f64 {
        let mut best = f64::NAN;
        let mut best_d = f64::INFINITY;
        for &(lo, hi) in &self.0 {
            let c = t.clamp(lo, hi);
            let d = (c - t).abs();
            if d < best_d || (d == best_d && c > best) {
                best = c;
                best_d = d;
            }
        }
        best
    }
}

/// Total-PPFD ranges an hour can take, one per LED state.
pub(crate) fn hour_options(problem: &MpcProblem, n: usize, fix: Fix) -> Vec<(f64, f64)> {
    if n < problem.step {
        let c = &problem.committed[n];
        return vec![(c.ra + c.rs, c.ra + c.rs)];
    }
    let b = &problem.bounds;
    let sunlit = problem.sunlit(n);
    let floor = if sunlit && problem.settings.sunlit_floor {
        b.ppfd_min
    } else {
        0.0
    };
    let cap = if sunlit {
        problem.solar[n].min(b.ppfd_max)
    } else {
        0.0
    };
    let mut out = Vec::with_capacity(2);
    if fix != Fix::On && floor <= cap {
        out.push((floor, cap));
    }
    if fix != Fix::Off {
        out.push((b.ppfd_min, b.ppfd_max));
    }
    out
}

pub(crate) fn reach(problem: &MpcProblem, fixes: &[Fix]) -> Option<Reach> {
    let mut r = Reach::point(0.0);
    for n in 0..problem.horizon() {
        let fix = if n < problem.step {
            Fix::On
        } else {
            fixes[n - problem.step]
        };
        let options = hour_options(problem, n, fix);
        if options.is_empty() {
            return None;
        }
        r = r.plus(&options);
    }
    Some(r)
}

fn light_tolerance(target: f64) -> f64 {
    1e-9 * target.abs().max(1.0)
}

/// Exact feasibility of the hours left open by `fixes`.
pub(crate) fn node_feasible(problem: &MpcProblem, fixes: &[Fix]) -> bool {
    let target = problem.dli_target / DLI_PER_PPFD_HOUR;
    reach(problem, fixes).is_some_and(|r| r.contains(target, light_tolerance(target)))
}

/// As [`node_feasible`], with the number of lit free hours restricted to
/// `card`.
pub(crate) fn card_feasible(problem: &MpcProblem, fixes: &[Fix], card: (usize, usize)) -> bool {
    let target = problem.dli_target / DLI_PER_PPFD_HOUR;
    let mut base = Reach::point(0.0);
    for n in 0..problem.step {
        base = base.plus(&hour_options(problem, n, Fix::On));
    }
    // by_count[k]: reachable light with k lit free hours so far
    let mut by_count: Vec<Option<Reach>> = vec![Some(base)];
    for (j, &fix) in fixes.iter().enumerate() {
        let n = problem.step + j;
        let off: Vec<(f64, f64)> = hour_options(problem, n, Fix::Off)
            .into_iter()
            .filter(|_| fix != Fix::On)
            .collect();
        let on = if fix == Fix::Off {
            Vec::new()
        } else {
            vec![(problem.bounds.ppfd_min, problem.bounds.ppfd_max)]
        };
        let mut next: Vec<Option<Reach>> = vec![None; by_count.len() + 1];
        for (k, r) in by_count.iter().enumerate() {
            let Some(r) = r else { continue };
            for (kk, opts) in [(k, &off), (k + 1, &on)] {
                if opts.is_empty() || kk > card.1 {
                    continue;
                }
                let add = r.plus(opts);
                next[kk] = Some(match next[kk].take() {
                    Some(prev) => prev.union(add),
                    None => add,
                });
            }
        }
        by_count = next;
    }
    let tol = light_tolerance(target);
    by_count
        .iter()
        .enumerate()
        .filter(|(k, _)| *k >= card.0 && *k <= card.1)
        .any(|(_, r)| r.as_ref().is_some_and(|r| r.contains(target, tol)))
}

/// Whether any schedule meets the DLI target; otherwise the closest DLI the
/// remaining hours can deliver.
pub fn feasibility_check(problem: &MpcProblem) -> Feasibility {
    let fixes = vec![Fix::Free; problem.free_hours()];
    let target = problem.dli_target / DLI_PER_PPFD_HOUR;
    let Some(r) = reach(problem, &fixes) else {
        // an hour with no admissible state: only possible with a sunlit
        // floor above the cap, which the LED option always covers
        unreachable!("every free hour admits the LED-on state");
    };
    if r.contains(target, light_tolerance(target)) {
        return Feasibility::Feasible;
    }
    let nearest = r.nearest(target);
    let lo = r.0.first().map_or(0.0, |iv| iv.0);
    let hi = r.0.last().map_or(0.0, |iv| iv.1);
    let binding = if target > hi {
        "light above what PPFD_max allows in the remaining hours"
    } else if target < lo {
        "light below the minimum of committed and sunlit hours"
    } else {
        "light falls between off and PPFD_min in the remaining hours"
    };
    Feasibility::Infeasible(FeasibilityReport {
        required_dli: problem.dli_target,
        nearest_dli: nearest * DLI_PER_PPFD_HOUR,
        deficit: (target - nearest) * DLI_PER_PPFD_HOUR,
        min_dli: lo * DLI_PER_PPFD_HOUR,
        max_dli: hi * DLI_PER_PPFD_HOUR,
        binding: binding.into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn toy_bounds(dli: f64) -> PhysiologyBounds {
        PhysiologyBounds {
            dli_target: dli,
            ..PhysiologyBounds::default()
        }
    }

    fn one_hour(dli: f64) -> MpcProblem {
        MpcProblem::new(vec![0.1], vec![0.0], toy_bounds(dli), MpcWeights::default())
    }

    #[test]
    fn lit_count_ranges() {
        // 300 µmol-h over four dark hours: one or two lit hours can deliver it
        let p = MpcProblem::new(vec![0.1; 4], vec![0.0; 4], toy_bounds(1.08), MpcWeights::default());
        let free = vec![Fix::Free; 4];
        assert!(card_feasible(&p, &free, (0, 4)));
        assert!(card_feasible(&p, &free, (2, 2)));
        assert!(card_feasible(&p, &free, (1, 1)));
        assert!(!card_feasible(&p, &free, (0, 0)));
        assert!(!card_feasible(&p, &free, (3, 4)));
        let three_on = [Fix::On, Fix::On, Fix::On, Fix::Free];
        assert_eq!(card_feasible(&p, &three_on, (0, 4)), node_feasible(&p, &three_on));
        assert!(!node_feasible(&p, &three_on));
        let one_on = [Fix::On, Fix::Off, Fix::Free, Fix::Free];
        assert!(card_feasible(&p, &one_on, (1, 2)));
        assert!(!card_feasible(&p, &one_on, (0, 0)));
    }

    #[test]
    fn single_hour_at_full_power_is_feasible() {
        let p = one_hour(DLI_PER_PPFD_HOUR * 880.0);
        assert!(feasibility_check(&p).is_feasible());
    }

    #[test]
    fn single_hour_double_target_reports_deficit() {
        let p = one_hour(2.0 * DLI_PER_PPFD_HOUR * 880.0);
        match feasibility_check(&p) {
            Feasibility::Infeasible(r) => {
                assert_relative_eq!(r.deficit, DLI_PER_PPFD_HOUR * 880.0, max_relative = 1e-12);
            }
            Feasibility::Feasible => panic!("expected infeasible"),
        }
    }

    #[test]
    fn full_day_is_feasible() {
        let p = MpcProblem::new(
            vec![0.05; 24],
            vec![0.0; 24],
            toy_bounds(12.96),
            MpcWeights::default(),
        );
        assert!(feasibility_check(&p).is_feasible());
    }

    #[test]
    fn gap_between_off_and_minimum() {
        // one dark hour can give 0 or 130..880, not 50
        let p = one_hour(DLI_PER_PPFD_HOUR * 50.0);
        match feasibility_check(&p) {
            Feasibility::Infeasible(r) => {
                assert_relative_eq!(r.nearest_dli, 0.0);
                assert!(r.binding.contains("between"));
            }
            Feasibility::Feasible => panic!("expected infeasible"),
        }
    }

    #[test]
    fn assemble_splices_actuals_and_forecasts() {
        let actual = vec![1.0; 24];
        let forecast = vec![2.0; 24];
        let committed = vec![CommittedHour::dark(); 3];
        let p = assemble_problem(
            3,
            &actual,
            &actual,
            &forecast,
            &vec![0.0; 24],
            &committed,
            &toy_bounds(12.96),
            MpcWeights::default(),
            SolverSettings::default(),
            24,
        )
        .unwrap();
        assert_eq!(&p.prices[..3], &[1.0; 3]);
        assert_eq!(&p.prices[3..], &[2.0; 21]);
        assert!((0..24).all(|n| !p.sunlit(n) || n < 3));
        assert_eq!(p.free_hours(), 21);

        let first = assemble_problem(
            0,
            &[],
            &[],
            &forecast,
            &forecast,
            &[],
            &toy_bounds(12.96),
            MpcWeights::default(),
            SolverSettings::default(),
            24,
        )
        .unwrap();
        assert!(first.committed.is_empty());
        assert!(matches!(
            assemble_problem(
                0,
                &[],
                &[],
                &forecast[..20],
                &forecast,
                &[],
                &toy_bounds(12.96),
                MpcWeights::default(),
                SolverSettings::default(),
                24,
            ),
            Err(MpcError::MissingForecast { hour: 20 })
        ));
    }

    #[test]
    fn overcast_day_has_no_sunlit_hours() {
        let p = MpcProblem::new(
            vec![0.05; 24],
            vec![0.0; 24],
            toy_bounds(12.96),
            MpcWeights::default(),
        );
        assert!((0..24).all(|n| !p.sunlit(n)));
    }

    #[test]
    fn problem_json_round_trip() {
        let p = MpcProblem::new(
            vec![0.05, 0.1],
            vec![0.0, 300.0],
            toy_bounds(1.08),
            MpcWeights::default(),
        );
        let text = serde_json::to_string(&p).unwrap();
        let back: MpcProblem = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);
    }
}
