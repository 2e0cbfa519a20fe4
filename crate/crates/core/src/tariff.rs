//! Monthly electricity billing and market data ingestion.
//!
//! A month costs `Σ (P_ep,n + P_icra) · E_n + P_pd · max_n E_n`. Every term
//! is rounded to integer micro-dollars before it is summed, so monthly
//! components add up to annual totals without drift.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::Execution;
use crate::timeseries::{add_hours, format_timestamp, hours_between, month_of, parse_timestamp, Timestamp};

/// Longest run of missing hours that is filled by interpolation.
pub const MAX_INTERPOLATED_GAP: i64 = 3;

#[derive(Debug, Error)]
pub enum TariffError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: timestamp {timestamp} is not after the previous row")]
    NonMonotone { line: usize, timestamp: String },
    #[error("line {line}: gap of {missing} missing hours before {timestamp} (at most {MAX_INTERPOLATED_GAP} are interpolated)")]
    Gap {
        line: usize,
        missing: i64,
        timestamp: String,
    },
    #[error("no price for {0}")]
    Misaligned(String),
    #[error("energy series spans more than one month ({0} and {1})")]
    MixedMonths(String, String),
    #[error("{0}")]
    Report(String),
    #[error("io: {0}")]
    Io(String),
}

/// One market hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketPoint {
    pub timestamp: Timestamp,
    /// $/kWh; may be negative.
    pub price: f64,
    pub market_demand_mw: f64,
    /// Nuclear, gas, hydro, wind, solar, biofuel (MW).
    pub generation_mw: [f64; 6],
    pub is_holiday: bool,
    /// Filled in by interpolation during ingestion.
    pub interpolated: bool,
}

/// Contiguous hourly market series.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PriceSeries {
    pub points: Vec<MarketPoint>,
}

impl PriceSeries {
    pub fn from_points(points: Vec<MarketPoint>) -> Result<Self, TariffError> {
        for (k, pair) in points.windows(2).enumerate() {
            if hours_between(&pair[0].timestamp, &pair[1].timestamp) != 1 {
                return Err(TariffError::Gap {
                    line: k + 3,
                    missing: hours_between(&pair[0].timestamp, &pair[1].timestamp) - 1,
                    timestamp: format_timestamp(&pair[1].timestamp),
                });
            }
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn start(&self) -> Option<Timestamp> {
        self.points.first().map(|p| p.timestamp)
    }

    pub fn prices(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.price).collect()
    }

    /// Price at `t`, if the series covers it.
    pub fn price_at(&self, t: &Timestamp) -> Option<f64> {
        let start = self.start()?;
        let k = hours_between(&start, t);
        if k < 0 {
            return None;
        }
        self.points
            .get(k as usize)
            .filter(|p| p.timestamp == *t)
            .map(|p| p.price)
    }

    pub fn interpolated_count(&self) -> usize {
        self.points.iter().filter(|p| p.interpolated).count()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), TariffError> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| TariffError::Io(e.to_string());
        for p in &self.points {
            w.serialize(MarketRow::from(p)).map_err(io)?;
        }
        w.flush().map_err(|e| TariffError::Io(e.to_string()))
    }
}

/// Per-kWh adjustment and monthly demand charge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TariffConfig {
    /// $/kWh
    pub icra_rate: f64,
    /// Optional posted rate per calendar month (January first); overrides
    /// `icra_rate` when present.
    pub icra_monthly: Option<Vec<f64>>,
    /// $/kW·month
    pub peak_demand_rate: f64,
}

impl Default for TariffConfig {
    fn default() -> Self {
        Self {
            icra_rate: 0.0675,
            icra_monthly: None,
            peak_demand_rate: 10.8,
        }
    }
}

impl TariffConfig {
    pub fn check(&self) -> Result<(), String> {
        if !(self.icra_rate >= 0.0) || !(self.peak_demand_rate >= 0.0) {
            return Err("tariff rates must be non-negative".into());
        }
        if let Some(m) = &self.icra_monthly {
            if m.len() != 12 || m.iter().any(|r| !(*r >= 0.0)) {
                return Err("icra_monthly needs 12 non-negative rates".into());
            }
        }
        Ok(())
    }

    pub fn icra_for_month(&self, month: u32) -> f64 {
        match &self.icra_monthly {
            Some(m) => m[(month as usize).saturating_sub(1) % 12],
            None => self.icra_rate,
        }
    }
}

/// Integer micro-dollars.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord)]
struct Micro(i64);

impl Micro {
    fn from_dollars(d: f64) -> Self {
        Micro((d * 1e6).round() as i64)
    }
    fn dollars(self) -> f64 {
        self.0 as f64 / 1e6
    }
}

/// One month of billing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub year: i32,
    pub month: u32,
    /// $
    pub energy_cost: f64,
    pub icra_cost: f64,
    pub peak_charge: f64,
    pub total: f64,
    /// kW
    pub peak_kw: f64,
    /// kWh
    pub energy_kwh: f64,
}

impl CostBreakdown {
    pub fn zero(year: i32, month: u32) -> Self {
        Self {
            year,
            month,
            energy_cost: 0.0,
            icra_cost: 0.0,
            peak_charge: 0.0,
            total: 0.0,
            peak_kw: 0.0,
            energy_kwh: 0.0,
        }
    }
}

/// Bills one month of hourly energy `(timestamp, kWh)`.
pub fn monthly_cost(
    energy: &[(Timestamp, f64)],
    prices: &PriceSeries,
    tariff: &TariffConfig,
) -> Result<CostBreakdown, TariffError> {
    monthly_cost_with_interval(energy, prices, tariff, 1.0)
}

/// As [`monthly_cost`] for intervals of `interval_hours`.
pub fn monthly_cost_with_interval(
    energy: &[(Timestamp, f64)],
    prices: &PriceSeries,
    tariff: &TariffConfig,
    interval_hours: f64,
) -> Result<CostBreakdown, TariffError> {
    let Some((first, _)) = energy.first() else {
        return Err(TariffError::Report("empty energy series".into()));
    };
    let (year, month) = month_of(first);
    let icra = tariff.icra_for_month(month);
    let mut energy_cost = Micro::default();
    let mut icra_cost = Micro::default();
    let mut kwh_sum = 0i128;
    let mut peak_kwh: f64 = 0.0;
    for (t, e) in energy {
        if month_of(t) != (year, month) {
            return Err(TariffError::MixedMonths(
                format_timestamp(first),
                format_timestamp(t),
            ));
        }
        let price = prices
            .price_at(t)
            .ok_or_else(|| TariffError::Misaligned(format_timestamp(t)))?;
        energy_cost.0 += Micro::from_dollars(price * e).0;
        icra_cost.0 += Micro::from_dollars(icra * e).0;
        // energy in micro-kWh for an exact sum
        kwh_sum += (e * 1e6).round() as i128;
        peak_kwh = peak_kwh.max(*e);
    }
    let peak_kw = peak_kwh / interval_hours;
    let peak_charge = Micro::from_dollars(tariff.peak_demand_rate * peak_kw);
    let total = Micro(energy_cost.0 + icra_cost.0 + peak_charge.0);
    Ok(CostBreakdown {
        year,
        month,
        energy_cost: energy_cost.dollars(),
        icra_cost: icra_cost.dollars(),
        peak_charge: peak_charge.dollars(),
        total: total.dollars(),
        peak_kw,
        energy_kwh: kwh_sum as f64 / 1e6,
    })
}

/// Splits an hourly series into calendar months, in order.
pub fn split_by_month(energy: &[(Timestamp, f64)]) -> Vec<&[(Timestamp, f64)]> {
    let mut out = Vec::new();
    let mut start = 0;
    for k in 1..=energy.len() {
        if k == energy.len() || month_of(&energy[k].0) != month_of(&energy[start].0) {
            if k > start {
                out.push(&energy[start..k]);
            }
            start = k;
        }
    }
    out
}

/// Bills every calendar month in `energy`.
pub fn monthly_costs(
    energy: &[(Timestamp, f64)],
    prices: &PriceSeries,
    tariff: &TariffConfig,
    exec: Execution,
) -> Result<Vec<CostBreakdown>, TariffError> {
    let months = split_by_month(energy);
    exec.map(&months, |m| monthly_cost(m, prices, tariff))
        .into_iter()
        .collect()
}

/// `(base − opt) / base · 100`, zero when the base is zero.
pub fn reduction_pct(base: f64, opt: f64) -> f64 {
    if base == 0.0 {
        0.0
    } else {
        (base - opt) / base * 100.0
    }
}

/// One row of the baseline vs optimised comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub energy_mwh: (f64, f64),
    pub peak_mw: (f64, f64),
    pub energy_price_k: (f64, f64),
    pub peak_charge_k: (f64, f64),
    pub icra_cost_k: (f64, f64),
    pub total_cost_k: (f64, f64),
    pub energy_reduction_pct: f64,
    pub cost_reduction_pct: f64,
    pub peak_reduction_pct: f64,
}

impl ReportRow {
    fn from_pair(label: String, b: &Aggregate, o: &Aggregate) -> Self {
        Self {
            label,
            energy_mwh: (b.energy_kwh / 1e3, o.energy_kwh / 1e3),
            peak_mw: (b.peak_kw / 1e3, o.peak_kw / 1e3),
            energy_price_k: (b.energy_cost / 1e3, o.energy_cost / 1e3),
            peak_charge_k: (b.peak_charge / 1e3, o.peak_charge / 1e3),
            icra_cost_k: (b.icra_cost / 1e3, o.icra_cost / 1e3),
            total_cost_k: (b.total / 1e3, o.total / 1e3),
            energy_reduction_pct: reduction_pct(b.energy_kwh, o.energy_kwh),
            cost_reduction_pct: reduction_pct(b.total, o.total),
            peak_reduction_pct: reduction_pct(b.peak_kw, o.peak_kw),
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Aggregate {
    energy_kwh: f64,
    peak_kw: f64,
    energy_cost: f64,
    peak_charge: f64,
    icra_cost: f64,
    total: f64,
}

impl From<&CostBreakdown> for Aggregate {
    fn from(c: &CostBreakdown) -> Self {
        Self {
            energy_kwh: c.energy_kwh,
            peak_kw: c.peak_kw,
            energy_cost: c.energy_cost,
            peak_charge: c.peak_charge,
            icra_cost: c.icra_cost,
            total: c.total,
        }
    }
}

/// Month rows plus an annual row (sums; peak is the maximum month).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnualReport {
    pub months: Vec<ReportRow>,
    pub annual: ReportRow,
    /// Mean of the monthly peaks, MW (baseline, optimised).
    pub mean_monthly_peak_mw: (f64, f64),
}

fn sum_months(months: &[CostBreakdown]) -> Aggregate {
    let micro = |f: fn(&CostBreakdown) -> f64| -> f64 {
        months
            .iter()
            .map(|c| Micro::from_dollars(f(c)).0)
            .sum::<i64>() as f64
            / 1e6
    };
    Aggregate {
        energy_kwh: months
            .iter()
            .map(|c| (c.energy_kwh * 1e6).round() as i128)
            .sum::<i128>() as f64
            / 1e6,
        peak_kw: months.iter().map(|c| c.peak_kw).fold(0.0, f64::max),
        energy_cost: micro(|c| c.energy_cost),
        peak_charge: micro(|c| c.peak_charge),
        icra_cost: micro(|c| c.icra_cost),
        total: micro(|c| c.total),
    }
}

const MONTH_NAMES: [&str; 12] = [
    "Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec",
];

/// Baseline vs optimised comparison table. Both sides must cover the same
/// months in the same order.
pub fn annual_report(
    baseline: &[CostBreakdown],
    optimized: &[CostBreakdown],
) -> Result<AnnualReport, TariffError> {
    if baseline.len() != optimized.len() || baseline.is_empty() {
        return Err(TariffError::Report(format!(
            "need matching non-empty month lists, got {} and {}",
            baseline.len(),
            optimized.len()
        )));
    }
    let mut months = Vec::with_capacity(baseline.len());
    for (b, o) in baseline.iter().zip(optimized) {
        if (b.year, b.month) != (o.year, o.month) {
            return Err(TariffError::Report(format!(
                "month mismatch: {}-{:02} vs {}-{:02}",
                b.year, b.month, o.year, o.month
            )));
        }
        let label = format!("{} {}", MONTH_NAMES[(b.month as usize - 1) % 12], b.year);
        months.push(ReportRow::from_pair(label, &b.into(), &o.into()));
    }
    let annual = ReportRow::from_pair("Annual".into(), &sum_months(baseline), &sum_months(optimized));
    let mean = |m: &[CostBreakdown]| m.iter().map(|c| c.peak_kw).sum::<f64>() / m.len() as f64 / 1e3;
    Ok(AnnualReport {
        months,
        annual,
        mean_monthly_peak_mw: (mean(baseline), mean(optimized)),
    })
}

impl AnnualReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), TariffError> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| TariffError::Io(e.to_string());
        w.write_record([
            "month",
            "energy_mwh_baseline",
            "energy_mwh_optimized",
            "peak_mw_baseline",
            "peak_mw_optimized",
            "energy_price_k_baseline",
            "energy_price_k_optimized",
            "peak_charge_k_baseline",
            "peak_charge_k_optimized",
            "icra_cost_k_baseline",
            "icra_cost_k_optimized",
            "total_cost_k_baseline",
            "total_cost_k_optimized",
            "energy_reduction_pct",
            "cost_reduction_pct",
            "peak_reduction_pct",
        ])
        .map_err(io)?;
        for r in self.months.iter().chain(std::iter::once(&self.annual)) {
            let f = |v: f64| format!("{v:.6}");
            w.write_record([
                r.label.clone(),
                f(r.energy_mwh.0),
                f(r.energy_mwh.1),
                f(r.peak_mw.0),
                f(r.peak_mw.1),
                f(r.energy_price_k.0),
                f(r.energy_price_k.1),
                f(r.peak_charge_k.0),
                f(r.peak_charge_k.1),
                f(r.icra_cost_k.0),
                f(r.icra_cost_k.1),
                f(r.total_cost_k.0),
                f(r.total_cost_k.1),
                f(r.energy_reduction_pct),
                f(r.cost_reduction_pct),
                f(r.peak_reduction_pct),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| TariffError::Io(e.to_string()))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct MarketRow {
    timestamp_iso8601: String,
    hoep_dollars_per_kwh: f64,
    market_demand_mw: f64,
    gen_nuclear_mw: f64,
    gen_gas_mw: f64,
    gen_hydro_mw: f64,
    gen_wind_mw: f64,
    gen_solar_mw: f64,
    gen_biofuel_mw: f64,
    is_holiday: String,
}

impl From<&MarketPoint> for MarketRow {
    fn from(p: &MarketPoint) -> Self {
        let g = p.generation_mw;
        Self {
            timestamp_iso8601: format_timestamp(&p.timestamp),
            hoep_dollars_per_kwh: p.price,
            market_demand_mw: p.market_demand_mw,
            gen_nuclear_mw: g[0],
            gen_gas_mw: g[1],
            gen_hydro_mw: g[2],
            gen_wind_mw: g[3],
            gen_solar_mw: g[4],
            gen_biofuel_mw: g[5],
            is_holiday: if p.is_holiday { "1" } else { "0" }.into(),
        }
    }
}

fn parse_flag(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Some(true),
        "0" | "false" | "no" | "" => Some(false),
        _ => None,
    }
}

/// Reads a market CSV, filling gaps of up to three hours by linear
/// interpolation (flagged on the point) and rejecting anything else that is
/// not strictly hourly.
pub fn read_market_csv<R: Read>(reader: R) -> Result<PriceSeries, TariffError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut points: Vec<MarketPoint> = Vec::new();
    for (i, row) in r.deserialize::<MarketRow>().enumerate() {
        let line = i + 2;
        let malformed = |message: String| TariffError::Malformed { line, message };
        let row = row.map_err(|e| malformed(e.to_string()))?;
        let timestamp = parse_timestamp(&row.timestamp_iso8601).map_err(malformed)?;
        let is_holiday = parse_flag(&row.is_holiday)
            .ok_or_else(|| malformed(format!("bad is_holiday {:?}", row.is_holiday)))?;
        let values = [
            row.hoep_dollars_per_kwh,
            row.market_demand_mw,
            row.gen_nuclear_mw,
            row.gen_gas_mw,
            row.gen_hydro_mw,
            row.gen_wind_mw,
            row.gen_solar_mw,
            row.gen_biofuel_mw,
        ];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(malformed("non-finite value".into()));
        }
        let point = MarketPoint {
            timestamp,
            price: row.hoep_dollars_per_kwh,
            market_demand_mw: row.market_demand_mw,
            generation_mw: [
                row.gen_nuclear_mw,
                row.gen_gas_mw,
                row.gen_hydro_mw,
                row.gen_wind_mw,
                row.gen_solar_mw,
                row.gen_biofuel_mw,
            ],
            is_holiday,
            interpolated: false,
        };
        if let Some(prev) = points.last() {
            let step = hours_between(&prev.timestamp, &timestamp);
            if step < 1 || !crate::timeseries::is_on_hour(&timestamp) {
                return Err(TariffError::NonMonotone {
                    line,
                    timestamp: format_timestamp(&timestamp),
                });
            }
            let missing = step - 1;
            if missing > MAX_INTERPOLATED_GAP {
                return Err(TariffError::Gap {
                    line,
                    missing,
                    timestamp: format_timestamp(&timestamp),
                });
            }
            let prev = prev.clone();
            for k in 1..=missing {
                let f = k as f64 / step as f64;
                let lerp = |a: f64, b: f64| a + (b - a) * f;
                let mut generation = [0.0; 6];
                for (g, (a, b)) in generation
                    .iter_mut()
                    .zip(prev.generation_mw.iter().zip(point.generation_mw.iter()))
                {
                    *g = lerp(*a, *b);
                }
                points.push(MarketPoint {
                    timestamp: add_hours(&prev.timestamp, k),
                    price: lerp(prev.price, point.price),
                    market_demand_mw: lerp(prev.market_demand_mw, point.market_demand_mw),
                    generation_mw: generation,
                    is_holiday: prev.is_holiday,
                    interpolated: true,
                });
            }
        }
        points.push(point);
    }
    Ok(PriceSeries { points })
}

pub fn ingest_market_csv(path: &Path) -> Result<PriceSeries, TariffError> {
    let file = File::open(path).map_err(|e| TariffError::Io(format!("{}: {e}", path.display())))?;
    read_market_csv(file)
}

/// Month key → breakdown, for callers that merge several runs.
pub fn by_month(costs: &[CostBreakdown]) -> BTreeMap<(i32, u32), &CostBreakdown> {
    costs.iter().map(|c| ((c.year, c.month), c)).collect()
}
