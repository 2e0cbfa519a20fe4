//! 24-hour lighting recipes.
//!
//! A recipe is a piecewise-constant PPFD schedule over `N_I` equal intervals
//! of length `I` hours (`N_I · I = 24`). Each interval carries an artificial
//! and a solar component; the delivered light is their sum.

use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// mol·m⁻² delivered by 1 µmol·m⁻²·s⁻¹ sustained for one hour.
pub const DLI_PER_PPFD_HOUR: f64 = 3600.0 * 1e-6;

/// A sample counts as lit when it exceeds this PPFD.
pub const LIT_THRESHOLD: f64 = 1e-9;

/// Absolute tolerance on the daily light integral equality, mol·m⁻²·day⁻¹.
pub const DLI_TOLERANCE: f64 = 1e-6;

const DAY_HOURS: f64 = 24.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecipeError {
    #[error("artificial has {artificial} samples but solar has {solar}")]
    LengthMismatch { artificial: usize, solar: usize },
    #[error("{count} intervals of {interval_hours} h do not cover 24 h")]
    NotADay { count: usize, interval_hours: f64 },
    #[error("sample {index} is {value} (must be finite and non-negative)")]
    BadSample { index: usize, value: f64 },
    #[error("time {0} h is outside [0, 24)")]
    TimeOutOfRange(f64),
    #[error("csv: {0}")]
    Csv(String),
}

/// Piecewise-constant 24-hour PPFD schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightingRecipe {
    interval_hours: f64,
    artificial: Vec<f64>,
    solar: Vec<f64>,
}

impl LightingRecipe {
    pub fn new(
        interval_hours: f64,
        artificial: Vec<f64>,
        solar: Vec<f64>,
    ) -> Result<Self, RecipeError> {
        if artificial.len() != solar.len() {
            return Err(RecipeError::LengthMismatch {
                artificial: artificial.len(),
                solar: solar.len(),
            });
        }
        let count = artificial.len();
        if !(interval_hours > 0.0)
            || count == 0
            || ((count as f64) * interval_hours - DAY_HOURS).abs() > 1e-9
        {
            return Err(RecipeError::NotADay {
                count,
                interval_hours,
            });
        }
        for (index, &value) in artificial.iter().chain(solar.iter()).enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(RecipeError::BadSample {
                    index: index % count,
                    value,
                });
            }
        }
        Ok(Self {
            interval_hours,
            artificial,
            solar,
        })
    }

    /// Recipe made of artificial light only.
    pub fn artificial_only(interval_hours: f64, ppfd: Vec<f64>) -> Result<Self, RecipeError> {
        let solar = vec![0.0; ppfd.len()];
        Self::new(interval_hours, ppfd, solar)
    }

    /// Constant `ppfd` on the masked intervals, dark elsewhere.
    pub fn from_mask(interval_hours: f64, mask: &[bool], ppfd: f64) -> Result<Self, RecipeError> {
        let values = mask.iter().map(|&on| if on { ppfd } else { 0.0 }).collect();
        Self::artificial_only(interval_hours, values)
    }

    /// Hourly recipe, 348 µmol·m⁻²·s⁻¹ from 06:00 to 18:00.
    pub fn baseline() -> Self {
        let mask: Vec<bool> = (0..24).map(|h| (6..18).contains(&h)).collect();
        Self::from_mask(1.0, &mask, 348.0).expect("baseline recipe is well formed")
    }

    pub fn interval_hours(&self) -> f64 {
        self.interval_hours
    }

    pub fn len(&self) -> usize {
        self.artificial.len()
    }

    pub fn is_empty(&self) -> bool {
        self.artificial.is_empty()
    }

    pub fn artificial(&self) -> &[f64] {
        &self.artificial
    }

    pub fn solar(&self) -> &[f64] {
        &self.solar
    }

    /// Delivered PPFD of interval `n`.
    pub fn total(&self, n: usize) -> f64 {
        self.artificial[n] + self.solar[n]
    }

    /// Delivered PPFD per interval.
    pub fn values(&self) -> Vec<f64> {
        (0..self.len()).map(|n| self.total(n)).collect()
    }

    /// Every component multiplied by `factor` (≥ 0).
    pub fn scaled(&self, factor: f64) -> Result<Self, RecipeError> {
        Self::new(
            self.interval_hours,
            self.artificial.iter().map(|v| v * factor).collect(),
            self.solar.iter().map(|v| v * factor).collect(),
        )
    }

    pub fn is_lit(&self, n: usize) -> bool {
        self.total(n) > LIT_THRESHOLD
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), RecipeError> {
        let mut w = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| RecipeError::Csv(e.to_string());
        for n in 0..self.len() {
            w.serialize(RecipeRow {
                hour_index: n,
                ppfd_total: self.total(n),
                ppfd_artificial: self.artificial[n],
                ppfd_solar: self.solar[n],
            })
            .map_err(err)?;
        }
        w.flush().map_err(|e| RecipeError::Csv(e.to_string()))
    }

    /// Reads the format produced by [`LightingRecipe::write_csv`]; the
    /// interval length is inferred from the row count.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, RecipeError> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut rows: Vec<RecipeRow> = Vec::new();
        for (line, row) in r.deserialize().enumerate() {
            let row: RecipeRow =
                row.map_err(|e| RecipeError::Csv(format!("row {}: {e}", line + 2)))?;
            if row.hour_index != rows.len() {
                return Err(RecipeError::Csv(format!(
                    "row {}: hour_index {} out of sequence",
                    line + 2,
                    row.hour_index
                )));
            }
            if (row.ppfd_total - row.ppfd_artificial - row.ppfd_solar).abs()
                > 1e-6 * row.ppfd_total.abs().max(1.0)
            {
                return Err(RecipeError::Csv(format!(
                    "row {}: total does not equal artificial + solar",
                    line + 2
                )));
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(RecipeError::Csv("no rows".into()));
        }
        let interval = DAY_HOURS / rows.len() as f64;
        Self::new(
            interval,
            rows.iter().map(|r| r.ppfd_artificial).collect(),
            rows.iter().map(|r| r.ppfd_solar).collect(),
        )
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RecipeRow {
    hour_index: usize,
    ppfd_total: f64,
    ppfd_artificial: f64,
    ppfd_solar: f64,
}

/// Daily light integral in mol·m⁻²·day⁻¹.
pub fn dli(recipe: &LightingRecipe) -> f64 {
    (0..recipe.len())
        .map(|n| DLI_PER_PPFD_HOUR * recipe.total(n) * recipe.interval_hours)
        .sum()
}

/// Total daily light duration in hours.
pub fn tdld(recipe: &LightingRecipe) -> f64 {
    recipe.interval_hours * (0..recipe.len()).filter(|&n| recipe.is_lit(n)).count() as f64
}

/// PPFD at time `t` hours; intervals are right-open, `[nI, (n+1)I)`.
pub fn value_at(recipe: &LightingRecipe, t: f64) -> Result<f64, RecipeError> {
    if !(0.0..DAY_HOURS).contains(&t) {
        return Err(RecipeError::TimeOutOfRange(t));
    }
    let n = ((t / recipe.interval_hours).floor() as usize).min(recipe.len() - 1);
    Ok(recipe.total(n))
}

/// PPFD window, target DLI and light/dark interval limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysiologyBounds {
    pub ppfd_min: f64,
    pub ppfd_max: f64,
    pub dli_target: f64,
    pub light_interval_min: f64,
    pub light_interval_max: f64,
    pub dark_interval_min: f64,
    pub dark_interval_max: f64,
    #[serde(default)]
    pub enforce_max_intervals: bool,
}

impl Default for PhysiologyBounds {
    /// Lettuce trial limits: PPFD 130–880, DLI 12.96, light runs 1–24 h,
    /// dark runs 1–18 h, run-length limits not enforced.
    fn default() -> Self {
        Self {
            ppfd_min: 130.0,
            ppfd_max: 880.0,
            dli_target: 12.96,
            light_interval_min: 1.0,
            light_interval_max: 24.0,
            dark_interval_min: 1.0,
            dark_interval_max: 18.0,
            enforce_max_intervals: false,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid physiology bounds: {0}")]
pub struct BoundsError(pub String);

impl PhysiologyBounds {
    pub fn check(&self) -> Result<(), BoundsError> {
        if !(self.ppfd_min > 0.0 && self.ppfd_min < self.ppfd_max) {
            return Err(BoundsError(format!(
                "need 0 < ppfd_min < ppfd_max, got [{}, {}]",
                self.ppfd_min, self.ppfd_max
            )));
        }
        if !(self.dli_target > 0.0) {
            return Err(BoundsError(format!("dli_target {} must be positive", self.dli_target)));
        }
        let intervals = [
            self.light_interval_min,
            self.light_interval_max,
            self.dark_interval_min,
            self.dark_interval_max,
        ];
        if intervals.iter().any(|v| !(*v > 0.0))
            || self.light_interval_min > self.light_interval_max
            || self.dark_interval_min > self.dark_interval_max
        {
            return Err(BoundsError("interval limits must be positive and ordered".into()));
        }
        Ok(())
    }

    /// Shortest admissible interval, `max(I_L,min, I_D,min)`.
    pub fn min_interval_hours(&self) -> f64 {
        self.light_interval_min.max(self.dark_interval_min)
    }
}

/// One failed physiology constraint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    IntervalTooShort { interval_hours: f64, required: f64 },
    BelowPpfdMin { index: usize, value: f64, min: f64 },
    AbovePpfdMax { index: usize, value: f64, max: f64 },
    DliMismatch { dli: f64, target: f64 },
    LightRunTooLong { start: usize, hours: f64, max: f64 },
    DarkRunTooLong { start: usize, hours: f64, max: f64 },
}

impl Violation {
    /// Short name of the violated constraint.
    pub fn constraint(&self) -> &'static str {
        match self {
            Violation::IntervalTooShort { .. } => "interval_length",
            Violation::BelowPpfdMin { .. } | Violation::AbovePpfdMax { .. } => "ppfd_range",
            Violation::DliMismatch { .. } => "dli_target",
            Violation::LightRunTooLong { .. } => "max_light_run",
            Violation::DarkRunTooLong { .. } => "max_dark_run",
        }
    }

    pub fn index(&self) -> Option<usize> {
        match self {
            Violation::BelowPpfdMin { index, .. } | Violation::AbovePpfdMax { index, .. } => {
                Some(*index)
            }
            Violation::LightRunTooLong { start, .. } | Violation::DarkRunTooLong { start, .. } => {
                Some(*start)
            }
            _ => None,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::IntervalTooShort {
                interval_hours,
                required,
            } => write!(f, "interval {interval_hours} h shorter than {required} h"),
            Violation::BelowPpfdMin { index, value, min } => {
                write!(f, "interval {index}: PPFD {value} below {min}")
            }
            Violation::AbovePpfdMax { index, value, max } => {
                write!(f, "interval {index}: PPFD {value} above {max}")
            }
            Violation::DliMismatch { dli, target } => {
                write!(f, "DLI {dli} differs from target {target}")
            }
            Violation::LightRunTooLong { start, hours, max } => {
                write!(f, "light run of {hours} h from interval {start} exceeds {max} h")
            }
            Violation::DarkRunTooLong { start, hours, max } => {
                write!(f, "dark run of {hours} h from interval {start} exceeds {max} h")
            }
        }
    }
}

/// Checks `recipe` against `bounds`; an empty list means valid.
pub fn validate(recipe: &LightingRecipe, bounds: &PhysiologyBounds) -> Vec<Violation> {
    let mut out = Vec::new();
    let required = bounds.min_interval_hours();
    if recipe.interval_hours + 1e-12 < required {
        out.push(Violation::IntervalTooShort {
            interval_hours: recipe.interval_hours,
            required,
        });
    }
    for n in 0..recipe.len() {
        let value = recipe.total(n);
        if value > bounds.ppfd_max {
            out.push(Violation::AbovePpfdMax {
                index: n,
                value,
                max: bounds.ppfd_max,
            });
        } else if recipe.is_lit(n) && value < bounds.ppfd_min {
            out.push(Violation::BelowPpfdMin {
                index: n,
                value,
                min: bounds.ppfd_min,
            });
        }
    }
    let day_dli = dli(recipe);
    if (day_dli - bounds.dli_target).abs() > DLI_TOLERANCE {
        out.push(Violation::DliMismatch {
            dli: day_dli,
            target: bounds.dli_target,
        });
    }
    if bounds.enforce_max_intervals {
        for (start, len, lit) in runs(recipe) {
            let hours = len as f64 * recipe.interval_hours;
            if lit && hours > bounds.light_interval_max {
                out.push(Violation::LightRunTooLong {
                    start,
                    hours,
                    max: bounds.light_interval_max,
                });
            } else if !lit && hours > bounds.dark_interval_max {
                out.push(Violation::DarkRunTooLong {
                    start,
                    hours,
                    max: bounds.dark_interval_max,
                });
            }
        }
    }
    out
}

/// Maximal runs of equal lit state as `(start, length, lit)`.
fn runs(recipe: &LightingRecipe) -> Vec<(usize, usize, bool)> {
    let mut out: Vec<(usize, usize, bool)> = Vec::new();
    for n in 0..recipe.len() {
        let lit = recipe.is_lit(n);
        match out.last_mut() {
            Some((_, len, state)) if *state == lit => *len += 1,
            _ => out.push((n, 1, lit)),
        }
    }
    out
}

/// Where the lit intervals of a trial recipe go.
#[derive(Debug, Clone, PartialEq)]
pub enum PatternSpec {
    /// One contiguous block starting at `start_hour`, wrapping past midnight.
    Contiguous { start_hour: f64 },
    /// Explicit on/off masks, one per TDLD choice.
    Masks(Vec<Vec<bool>>),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrialError {
    #[error("TDLD {tdld} h needs PPFD {required_ppfd:.3}, outside [{min}, {max}]")]
    Infeasible {
        tdld: f64,
        required_ppfd: f64,
        min: f64,
        max: f64,
    },
    #[error("TDLD {tdld} h is not a whole number of {interval_hours} h intervals in 1..=24 h")]
    BadTdld { tdld: f64, interval_hours: f64 },
    #[error("mask for TDLD {tdld} h lights {lit} intervals, expected {expected}")]
    MaskMismatch {
        tdld: f64,
        lit: usize,
        expected: usize,
    },
    #[error("no mask supplied for choice {0}")]
    MissingMask(usize),
    #[error(transparent)]
    Recipe(#[from] RecipeError),
    #[error("generated recipe violates bounds: {0:?}")]
    Invalid(Vec<Violation>),
}

/// Constant-intensity recipes hitting `bounds.dli_target` for each TDLD.
///
/// The interval length is `bounds.min_interval_hours()`. Each choice is
/// reported separately so one infeasible TDLD does not hide the others.
pub fn generate_trial_recipes(
    bounds: &PhysiologyBounds,
    tdld_choices: &[f64],
    pattern: &PatternSpec,
) -> Vec<Result<LightingRecipe, TrialError>> {
    let interval = bounds.min_interval_hours();
    let count = (DAY_HOURS / interval).round() as usize;
    tdld_choices
        .iter()
        .enumerate()
        .map(|(choice, &tdld)| {
            let lit = (tdld / interval).round() as usize;
            if !(tdld > 0.0)
                || (lit as f64 * interval - tdld).abs() > 1e-9
                || lit > count
                || (count as f64 * interval - DAY_HOURS).abs() > 1e-9
            {
                return Err(TrialError::BadTdld {
                    tdld,
                    interval_hours: interval,
                });
            }
            let required = bounds.dli_target / (DLI_PER_PPFD_HOUR * tdld);
            if required < bounds.ppfd_min || required > bounds.ppfd_max {
                return Err(TrialError::Infeasible {
                    tdld,
                    required_ppfd: required,
                    min: bounds.ppfd_min,
                    max: bounds.ppfd_max,
                });
            }
            let mask = match pattern {
                PatternSpec::Contiguous { start_hour } => {
                    let start = (start_hour / interval).floor() as usize;
                    let mut mask = vec![false; count];
                    for k in 0..lit {
                        mask[(start + k) % count] = true;
                    }
                    mask
                }
                PatternSpec::Masks(masks) => {
                    let mask = masks.get(choice).ok_or(TrialError::MissingMask(choice))?;
                    let on = mask.iter().filter(|&&m| m).count();
                    if mask.len() != count || on != lit {
                        return Err(TrialError::MaskMismatch {
                            tdld,
                            lit: on,
                            expected: lit,
                        });
                    }
                    mask.clone()
                }
            };
            let recipe = LightingRecipe::from_mask(interval, &mask, required)?;
            let violations = validate(&recipe, bounds);
            if violations.is_empty() {
                Ok(recipe)
            } else {
                Err(TrialError::Invalid(violations))
            }
        })
        .collect()
}

/// Hour masks in the style of the three lettuce trial recipes: a 12 h
/// control block and two interrupted schedules with 15 h and 9 h of light
/// whose dark gaps span 1 to 7 hours.
pub fn lettuce_trial_masks() -> [(f64, Vec<bool>); 3] {
    fn expand(blocks: &[(bool, usize)]) -> Vec<bool> {
        blocks
            .iter()
            .flat_map(|&(on, n)| std::iter::repeat_n(on, n))
            .collect()
    }
    let r1: Vec<bool> = (0..24).map(|h| (6..18).contains(&h)).collect();
    let r2 = expand(&[
        (false, 3),
        (true, 4),
        (false, 1),
        (true, 4),
        (false, 2),
        (true, 4),
        (false, 3),
        (true, 3),
    ]);
    let r3 = expand(&[
        (false, 2),
        (true, 2),
        (false, 1),
        (true, 2),
        (false, 4),
        (true, 3),
        (false, 7),
        (true, 2),
        (false, 1),
    ]);
    [(12.0, r1), (15.0, r2), (9.0, r3)]
}
