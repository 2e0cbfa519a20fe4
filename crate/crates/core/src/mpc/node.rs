//! QP of one branch-and-bound node.
//!
//! Variables are scaled by `1/PPFD_max`. A free hour's LED output is split
//! as `a = p + q` with `p ∈ [0, l]` priced linearly at the cost of reaching
//! `l = PPFD_min` and `q ≥ 0` carrying the rest of the convex cost, with
//! `q ≤ (1 − l)/l · p`. At `p ∈ {0, l}` this reproduces the off and on
//! states exactly, in between it is the convex hull of the two, which is
//! a valid and tight lower bound.

use super::qp::{solve_qp, IpmSettings, Qp};
use super::{Fix, MpcError, MpcProblem};

#[derive(Debug, Clone, Copy)]
pub(crate) struct HourVars {
    pub fix: Fix,
    pub p: Option<usize>,
    pub q: Option<usize>,
    pub s: Option<usize>,
}

pub(crate) struct NodeQp {
    pub qp: Qp,
    pub hours: Vec<HourVars>,
    pub constant: f64,
    scale: f64,
    lmin: f64,
}

/// Scaled-down result of one node.
#[derive(Debug, Clone)]
pub(crate) struct NodeResult {
    /// Regularised objective including constants.
    pub value: f64,
    /// LED and solar PPFD per free hour.
    pub ra: Vec<f64>,
    pub rs: Vec<f64>,
    /// `p/l` per free hour (1 for forced on, 0 for forced off).
    pub on_fraction: Vec<f64>,
}

impl NodeQp {
    pub fn build(problem: &MpcProblem, fixes: &[Fix]) -> Self {
        Self::with_card(problem, fixes, (0, fixes.len()))
    }

    /// As [`NodeQp::build`], with the number of lit free hours kept within
    /// `card` through the on-fractions `p/l`.
    pub fn with_card(problem: &MpcProblem, fixes: &[Fix], card: (usize, usize)) -> Self {
        let b = &problem.bounds;
        let wts = problem.weights;
        let scale = b.ppfd_max;
        let lmin = b.ppfd_min / scale;
        let rho = problem.settings.regularization;
        let has_q = 1.0 - lmin > 1e-12;
        let k = (1.0 - lmin) / lmin;
        let mut qp = Qp::new();
        let mut hours = Vec::with_capacity(fixes.len());
        let mut constant = 0.0;

        for c in &problem.committed {
            constant += wts.beta * c.ra * c.ra;
        }
        for (n, c) in problem.committed.iter().enumerate() {
            constant += wts.alpha * problem.prices[n] * c.ra;
        }

        for (j, &fix) in fixes.iter().enumerate() {
            let n = problem.step + j;
            let price = wts.alpha * problem.prices[n];
            let q_h = 2.0 * wts.beta * scale * scale + 2.0 * rho;
            let q_c = (2.0 * wts.beta * b.ppfd_min + price) * scale;
            let mut hv = HourVars {
                fix,
                p: None,
                q: None,
                s: None,
            };
            match fix {
                Fix::Free => {
                    hv.p = Some(qp.var(0.0, (wts.beta * b.ppfd_min + price) * scale));
                    if has_q {
                        hv.q = Some(qp.var(q_h, q_c));
                    }
                }
                Fix::On => {
                    constant += price * b.ppfd_min + wts.beta * b.ppfd_min * b.ppfd_min;
                    if has_q {
                        hv.q = Some(qp.var(q_h, q_c));
                    }
                }
                Fix::Off => {}
            }
            let y = problem.solar[n].min(b.ppfd_max) / scale;
            if problem.sunlit(n) {
                // ρ (y − s)²
                hv.s = Some(qp.var(2.0 * rho, -2.0 * rho * y));
                constant += rho * y * y;
            }
            qp.close_block();

            if let Some(p) = hv.p {
                qp.bounds(p, 0.0, lmin);
                if let Some(q) = hv.q {
                    qp.le(&[(q, -1.0)], 0.0);
                    qp.le(&[(q, 1.0), (p, -k)], 0.0);
                }
            } else if let Some(q) = hv.q {
                qp.bounds(q, 0.0, 1.0 - lmin);
            }
            if let Some(s) = hv.s {
                qp.bounds(s, 0.0, y);
            }
            // r ≤ PPFD_max and the sunlit floor
            let base = if fix == Fix::On { lmin } else { 0.0 };
            let terms = led_terms(&hv, 1.0);
            let mut all = terms.clone();
            if let Some(s) = hv.s {
                all.push((s, 1.0));
            }
            if !all.is_empty() {
                qp.le(&all, 1.0 - base);
                if problem.sunlit(n) && problem.settings.sunlit_floor && fix != Fix::On {
                    let neg: Vec<(usize, f64)> = all.iter().map(|&(i, v)| (i, -v)).collect();
                    qp.le(&neg, -lmin);
                }
            }
            hours.push(hv);
        }

        if wts.gamma > 0.0 {
            let committed_peak = problem.committed.iter().map(|c| c.ra).fold(0.0, f64::max) / scale;
            // When sunlight cannot cover the remaining light, some hour must
            // be lit, so the peak is at least l and at least the LED share
            // spread over every hour that may still be lit.
            let sun: f64 = (0..fixes.len())
                .filter(|&j| problem.sunlit(problem.step + j))
                .map(|j| (problem.solar[problem.step + j] / scale).min(1.0))
                .sum();
            let led_needed = problem.remaining_light() / scale - sun;
            let can_light = fixes.iter().filter(|f| **f != Fix::Off).count().min(card.1);
            let mut floor = committed_peak;
            if card.0 > 0 {
                floor = floor.max(lmin);
            }
            if led_needed > 1e-9 && can_light > 0 {
                floor = floor.max(lmin).max(led_needed / can_light as f64);
            }
            let m = qp.var(0.0, wts.gamma * scale);
            qp.bounds(m, floor.min(1.0), 1.0);
            for hv in &hours {
                let mut t = led_terms(hv, 1.0);
                if t.is_empty() {
                    continue;
                }
                t.push((m, -1.0));
                let rhs = if hv.fix == Fix::On { -lmin } else { 0.0 };
                qp.le(&t, rhs);
            }
        }

        let forced = fixes.iter().filter(|f| **f == Fix::On).count();
        let open: Vec<usize> = hours.iter().filter_map(|hv| hv.p).collect();
        if !open.is_empty() && (card.0 > forced || card.1 < forced + open.len()) {
            // lit count of the open hours, Σ p/l
            let c = qp.var(0.0, 0.0);
            qp.bounds(c, card.0.saturating_sub(forced) as f64, card.1.saturating_sub(forced) as f64);
            let mut row = vec![0.0; qp.len()];
            for &p in &open {
                row[p] = 1.0 / lmin;
            }
            row[c] = -1.0;
            qp.eq(row, 0.0);
        }

        let mut row = vec![0.0; qp.len()];
        let mut rhs = problem.remaining_light() / scale;
        for hv in &hours {
            for (i, v) in led_terms(hv, 1.0) {
                row[i] = v;
            }
            if let Some(s) = hv.s {
                row[s] = 1.0;
            }
            if hv.fix == Fix::On {
                rhs -= lmin;
            }
        }
        if row.iter().any(|v| *v != 0.0) {
            qp.eq(row, rhs);
        }

        NodeQp {
            qp,
            hours,
            constant,
            scale,
            lmin,
        }
    }

    pub fn solve(&self, tolerance: f64) -> Result<NodeResult, MpcError> {
        let z = if self.qp.is_empty() {
            Vec::new()
        } else {
            solve_qp(
                &self.qp,
                IpmSettings {
                    tolerance,
                    ..IpmSettings::default()
                },
            )
            .map_err(|e| MpcError::Solver(e.to_string()))?
            .z
        };
        let value = self.qp.objective(&z) + self.constant;
        let at = |i: Option<usize>| i.map_or(0.0, |i| z[i]);
        let mut ra = Vec::with_capacity(self.hours.len());
        let mut rs = Vec::with_capacity(self.hours.len());
        let mut on_fraction = Vec::with_capacity(self.hours.len());
        for hv in &self.hours {
            let (a, frac) = match hv.fix {
                Fix::Free => (at(hv.p) + at(hv.q), at(hv.p) / self.lmin),
                Fix::On => (self.lmin + at(hv.q), 1.0),
                Fix::Off => (0.0, 0.0),
            };
            ra.push(a * self.scale);
            rs.push(at(hv.s) * self.scale);
            on_fraction.push(frac);
        }
        Ok(NodeResult {
            value,
            ra,
            rs,
            on_fraction,
        })
    }
}

fn led_terms(hv: &HourVars, coef: f64) -> Vec<(usize, f64)> {
    hv.p.iter().chain(hv.q.iter()).map(|&i| (i, coef)).collect()
}
