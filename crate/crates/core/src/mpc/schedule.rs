use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{
    assemble_problem, feasibility_check, objective_value, solve_with_hint, verify, Feasibility,
    FeasibilityReport, MpcError, MpcSolution, MpcWeights, SolverSettings,
};
use crate::recipe::{LightingRecipe, PhysiologyBounds, DLI_PER_PPFD_HOUR};

/// One hour once it is in the past.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommittedHour {
    pub u: bool,
    pub x: f64,
    pub w: f64,
    pub ra: f64,
    /// Solar PPFD that actually reached the crop.
    pub rs: f64,
}

impl CommittedHour {
    pub fn dark() -> Self {
        Self {
            u: false,
            x: 0.0,
            w: 1.0,
            ra: 0.0,
            rs: 0.0,
        }
    }
}

/// Hours committed so far; append-only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub horizon: usize,
    hours: Vec<CommittedHour>,
}

impl Schedule {
    pub fn new(horizon: usize) -> Self {
        Self {
            horizon,
            hours: Vec::with_capacity(horizon),
        }
    }

    pub fn hours(&self) -> &[CommittedHour] {
        &self.hours
    }

    pub fn is_complete(&self) -> bool {
        self.hours.len() == self.horizon
    }

    fn check_slot(&self, solution: &MpcSolution, step: usize) -> Result<(), MpcError> {
        if step < self.hours.len() {
            return Err(MpcError::DoubleCommit { hour: step });
        }
        if step != self.hours.len() || step >= self.horizon {
            return Err(MpcError::OutOfOrder {
                expected: self.hours.len(),
                got: step,
            });
        }
        if solution.step != step || solution.u.len() != self.horizon {
            return Err(MpcError::Invalid(format!(
                "solution of step {} cannot be committed at step {step}",
                solution.step
            )));
        }
        Ok(())
    }

    /// Commits hour `step` exactly as planned.
    pub fn commit(&mut self, solution: &MpcSolution, step: usize) -> Result<(), MpcError> {
        self.check_slot(solution, step)?;
        self.hours.push(CommittedHour {
            u: solution.u[step],
            x: solution.x[step],
            w: solution.w[step],
            ra: solution.ra[step],
            rs: solution.rs[step],
        });
        Ok(())
    }

    /// Commits hour `step` against the solar PPFD that actually arrived:
    /// the planned LED output and shading factor are applied, and shading
    /// is tightened only as far as needed to stay under `ppfd_max`.
    pub fn commit_realized(
        &mut self,
        solution: &MpcSolution,
        step: usize,
        actual_solar: f64,
        eps_sun: f64,
        ppfd_max: f64,
    ) -> Result<(), MpcError> {
        self.check_slot(solution, step)?;
        let ra = solution.ra[step];
        let mut w = solution.w[step];
        let rs = if actual_solar > eps_sun {
            if ra + actual_solar * w > ppfd_max {
                w = ((ppfd_max - ra) / actual_solar).clamp(0.0, 1.0);
            }
            actual_solar * w
        } else {
            0.0
        };
        self.hours.push(CommittedHour {
            u: solution.u[step],
            x: solution.x[step],
            w,
            ra,
            rs,
        });
        Ok(())
    }

    pub fn artificial(&self) -> Vec<f64> {
        self.hours.iter().map(|h| h.ra).collect()
    }

    pub fn solar(&self) -> Vec<f64> {
        self.hours.iter().map(|h| h.rs).collect()
    }

    pub fn dli(&self) -> f64 {
        self.hours.iter().map(|h| DLI_PER_PPFD_HOUR * (h.ra + h.rs)).sum()
    }

    /// The committed day as a recipe (hourly intervals over 24 h).
    pub fn recipe(&self) -> Result<LightingRecipe, MpcError> {
        if !self.is_complete() {
            return Err(MpcError::Invalid(format!(
                "{} of {} hours committed",
                self.hours.len(),
                self.horizon
            )));
        }
        LightingRecipe::new(24.0 / self.horizon as f64, self.artificial(), self.solar())
            .map_err(|e| MpcError::Invalid(e.to_string()))
    }
}

/// Forecast vectors over the whole horizon as seen at a step; only entries
/// from the step onward are used.
pub trait DayForecast {
    fn at_step(&self, step: usize) -> (Vec<f64>, Vec<f64>);
}

impl<F: Fn(usize) -> (Vec<f64>, Vec<f64>)> DayForecast for F {
    fn at_step(&self, step: usize) -> (Vec<f64>, Vec<f64>) {
        self(step)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairNote {
    pub step: usize,
    pub report: FeasibilityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub objective: f64,
    pub gap: f64,
    pub nodes: usize,
    /// DLI of the hours committed after this step.
    pub dli_committed: f64,
    pub peak_ra: f64,
    pub price_mae: f64,
    pub solar_mae: f64,
    pub verify_issues: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayResult {
    pub schedule: Schedule,
    pub first_plan: MpcSolution,
    pub steps: Vec<StepDiagnostics>,
    pub repairs: Vec<RepairNote>,
    /// Objective of the committed day at actual prices.
    pub objective: f64,
}

impl DayResult {
    pub fn verify_issues(&self) -> usize {
        self.steps.iter().map(|s| s.verify_issues).sum()
    }
}

fn mae(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// Assemble, solve and commit each hour of one day in turn.
///
/// When forecast errors leave the DLI target out of reach, the target is
/// moved to the nearest achievable value and the step is listed in
/// `repairs`.
pub fn run_day(
    actual_prices: &[f64],
    actual_solar: &[f64],
    forecast: &dyn DayForecast,
    bounds: &PhysiologyBounds,
    weights: MpcWeights,
    settings: SolverSettings,
) -> Result<DayResult, MpcError> {
    let horizon = actual_prices.len();
    if actual_solar.len() != horizon || horizon == 0 {
        return Err(MpcError::Invalid("actual price and solar lengths differ".into()));
    }
    let mut schedule = Schedule::new(horizon);
    let mut steps = Vec::with_capacity(horizon);
    let mut repairs = Vec::new();
    let mut first_plan = None;
    let mut hint: Option<Vec<bool>> = None;
    for step in 0..horizon {
        let (pf, sf) = forecast.at_step(step);
        let mut problem = assemble_problem(
            step,
            actual_prices,
            actual_solar,
            &pf,
            &sf,
            schedule.hours(),
            bounds,
            weights,
            settings,
            horizon,
        )?;
        if let Feasibility::Infeasible(report) = feasibility_check(&problem) {
            problem.dli_target = report.nearest_dli;
            repairs.push(RepairNote { step, report });
        }
        let solution = solve_with_hint(&problem, hint.as_deref())?;
        let issues = verify(&problem, &solution).len();
        schedule.commit_realized(
            &solution,
            step,
            actual_solar[step],
            settings.eps_sun,
            bounds.ppfd_max,
        )?;
        steps.push(StepDiagnostics {
            step,
            objective: solution.objective,
            gap: solution.stats.gap,
            nodes: solution.stats.nodes,
            dli_committed: schedule.dli(),
            peak_ra: schedule.artificial().into_iter().fold(0.0, f64::max),
            price_mae: mae(&pf[step..horizon], &actual_prices[step..]),
            solar_mae: mae(&sf[step..horizon], &actual_solar[step..]),
            verify_issues: issues,
        });
        hint = Some(solution.u.clone());
        if step == 0 {
            first_plan = Some(solution);
        }
    }
    let objective = objective_value(actual_prices, &schedule.artificial(), &weights);
    Ok(DayResult {
        schedule,
        first_plan: first_plan.expect("horizon is non-empty"),
        steps,
        repairs,
        objective,
    })
}

/// `step,objective,gap,nodes,dli_committed,peak_ra`
pub fn write_diagnostics_csv<W: Write>(steps: &[StepDiagnostics], writer: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["step", "objective", "gap", "nodes", "dli_committed", "peak_ra"])?;
    for s in steps {
        w.write_record([
            s.step.to_string(),
            s.objective.to_string(),
            s.gap.to_string(),
            s.nodes.to_string(),
            s.dli_committed.to_string(),
            s.peak_ra.to_string(),
        ])?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpc::{solve, MpcProblem};
    use crate::recipe::validate;
    use approx::assert_relative_eq;

    fn day_prices() -> Vec<f64> {
        (0..24)
            .map(|h| if (7..23).contains(&h) { 0.04 + 0.002 * (h % 5) as f64 } else { 0.02 })
            .collect()
    }

    fn day_solar() -> Vec<f64> {
        (0..24)
            .map(|h| {
                let x = (h as f64 - 12.0) / 5.0;
                if x.abs() < 1.0 {
                    400.0 * (1.0 - x * x)
                } else {
                    0.0
                }
            })
            .collect()
    }

    fn oracle_day() -> DayResult {
        let prices = day_prices();
        let solar = day_solar();
        let (p2, s2) = (prices.clone(), solar.clone());
        let oracle = move |_| (p2.clone(), s2.clone());
        run_day(
            &prices,
            &solar,
            &oracle,
            &PhysiologyBounds::default(),
            MpcWeights::default(),
            SolverSettings::default(),
        )
        .unwrap()
    }

    #[test]
    fn oracle_day_matches_first_plan() {
        let day = oracle_day();
        assert!(day.repairs.is_empty());
        assert_eq!(day.verify_issues(), 0);
        let plan = &day.first_plan;
        for (n, h) in day.schedule.hours().iter().enumerate() {
            assert_eq!(h.u, plan.u[n], "hour {n}");
            assert!((h.ra - plan.ra[n]).abs() < 1e-6, "hour {n}");
        }
        assert_relative_eq!(day.objective, plan.objective, max_relative = 1e-6);
        let recipe = day.schedule.recipe().unwrap();
        let bounds = PhysiologyBounds::default();
        assert!(validate(&recipe, &bounds).is_empty(), "{:?}", validate(&recipe, &bounds));
    }

    #[test]
    fn double_commit_is_rejected() {
        let p = MpcProblem::new(
            vec![0.05; 24],
            vec![0.0; 24],
            PhysiologyBounds::default(),
            MpcWeights::default(),
        );
        let sol = solve(&p).unwrap();
        let mut s = Schedule::new(24);
        s.commit(&sol, 0).unwrap();
        assert!(matches!(s.commit(&sol, 0), Err(MpcError::DoubleCommit { hour: 0 })));
        assert!(matches!(s.commit(&sol, 3), Err(MpcError::OutOfOrder { .. })));
    }

    #[test]
    fn unreachable_target_is_repaired() {
        let prices = vec![0.05; 24];
        let actual_solar = vec![0.0; 24];
        let forecast = |_: usize| (vec![0.05; 24], vec![0.0; 24]);
        let mut bounds = PhysiologyBounds::default();
        bounds.dli_target = DLI_PER_PPFD_HOUR * 880.0 * 25.0;
        let day = run_day(
            &prices,
            &actual_solar,
            &forecast,
            &bounds,
            MpcWeights::default(),
            SolverSettings::default(),
        )
        .unwrap();
        assert!(!day.repairs.is_empty());
        assert!(day.repairs[0].report.deficit > 0.0);
        assert!(day.schedule.artificial().iter().all(|a| (a - 880.0).abs() < 1e-6));
    }

    #[test]
    fn diagnostics_csv_header() {
        let day = oracle_day();
        let mut buf = Vec::new();
        write_diagnostics_csv(&day.steps, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,objective,gap,nodes,dli_committed,peak_ra\n"));
        assert_eq!(text.lines().count(), 25);
    }
}
