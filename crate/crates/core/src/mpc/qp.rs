//! Primal-dual interior point method for small convex QPs
//!
//! ```text
//! min ½ zᵀ diag(h) z + cᵀz   s.t.   A z = b,   G z ≤ g
//! ```
//!
//! Variables are split into small independent blocks followed by a few
//! global variables. Each inequality row may touch one block plus any
//! globals, so the reduced Newton matrix is block diagonal with a dense
//! border and is solved by a Schur complement on the border.

use std::ops::Range;

#[derive(Debug, Clone, PartialEq)]
pub enum QpError {
    Structure(String),
    NotConverged { iterations: usize, residual: f64 },
    Numerical(String),
}

impl std::fmt::Display for QpError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            QpError::Structure(s) => write!(f, "malformed QP: {s}"),
            QpError::NotConverged {
                iterations,
                residual,
            } => write!(f, "no convergence after {iterations} iterations (residual {residual:e})"),
            QpError::Numerical(s) => write!(f, "numerical failure: {s}"),
        }
    }
}

/// Problem data. Rows of `G` are stored sparsely.
#[derive(Debug, Clone, Default)]
pub struct Qp {
    /// Block ranges, contiguous from zero; variables after the last block
    /// are global.
    pub blocks: Vec<Range<usize>>,
    pub h: Vec<f64>,
    pub c: Vec<f64>,
    pub eq_rows: Vec<Vec<f64>>,
    pub eq_rhs: Vec<f64>,
    row_start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    pub ineq_rhs: Vec<f64>,
}

impl Qp {
    pub fn new() -> Self {
        Self {
            row_start: vec![0],
            ..Default::default()
        }
    }

    /// Adds a variable with objective `½ h z² + c z`; returns its index.
    pub fn var(&mut self, h: f64, c: f64) -> usize {
        self.h.push(h);
        self.c.push(c);
        self.h.len() - 1
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    /// Marks variables from the end of the previous block up to now as a block.
    pub fn close_block(&mut self) {
        let start = self.blocks.last().map_or(0, |b| b.end);
        if self.len() > start {
            self.blocks.push(start..self.len());
        }
    }

    /// `Σ coef·z ≤ rhs`
    pub fn le(&mut self, terms: &[(usize, f64)], rhs: f64) {
        for &(j, v) in terms {
            self.cols.push(j);
            self.vals.push(v);
        }
        self.row_start.push(self.cols.len());
        self.ineq_rhs.push(rhs);
    }

    /// `lo ≤ z_j ≤ hi`
    pub fn bounds(&mut self, j: usize, lo: f64, hi: f64) {
        self.le(&[(j, -1.0)], -lo);
        self.le(&[(j, 1.0)], hi);
    }

    /// Dense equality row; shorter rows are zero padded.
    pub fn eq(&mut self, mut row: Vec<f64>, rhs: f64) {
        row.resize(self.len(), 0.0);
        self.eq_rows.push(row);
        self.eq_rhs.push(rhs);
    }

    pub fn n_ineq(&self) -> usize {
        self.ineq_rhs.len()
    }

    fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_start[i]..self.row_start[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn objective(&self, z: &[f64]) -> f64 {
        z.iter()
            .zip(&self.h)
            .zip(&self.c)
            .map(|((z, h), c)| 0.5 * h * z * z + c * z)
            .sum()
    }

    /// Largest violation of any constraint at `z`.
    pub fn infeasibility(&self, z: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (row, b) in self.eq_rows.iter().zip(&self.eq_rhs) {
            worst = worst.max((dot(row, z) - b).abs());
        }
        for i in 0..self.n_ineq() {
            let lhs: f64 = self.row(i).map(|(j, v)| v * z[j]).sum();
            worst = worst.max(lhs - self.ineq_rhs[i]);
        }
        worst
    }

    fn block_map(&self) -> Result<Vec<Option<usize>>, QpError> {
        let mut map = vec![None; self.len()];
        let mut expect = 0;
        for (k, b) in self.blocks.iter().enumerate() {
            if b.start != expect || b.end > self.len() {
                return Err(QpError::Structure("blocks must be contiguous".into()));
            }
            for m in map[b.clone()].iter_mut() {
                *m = Some(k);
            }
            expect = b.end;
        }
        for i in 0..self.n_ineq() {
            let mut seen = None;
            for (j, _) in self.row(i) {
                if let Some(k) = map[j] {
                    if seen.is_some_and(|s| s != k) {
                        return Err(QpError::Structure(format!("row {i} spans two blocks")));
                    }
                    seen = Some(k);
                }
            }
        }
        Ok(map)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Multipliers of the equality rows.
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct IpmSettings {
    pub tolerance: f64,
    /// Residual at which a stalled run still counts as converged.
    pub acceptable: f64,
    pub max_iterations: usize,
}

impl Default for IpmSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            acceptable: 1e-8,
            max_iterations: 80,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Factorised reduced KKT matrix.
struct Kkt {
    /// Per block: Cholesky factor (lower, row-major k×k).
    chol: Vec<Vec<f64>>,
    /// `M_BB⁻¹ C`, nb × t, row-major.
    w: Vec<f64>,
    c: Vec<f64>,
    /// LU of the t×t Schur complement with row permutation.
    schur: Vec<f64>,
    perm: Vec<usize>,
    nb: usize,
    t: usize,
}

struct Layout<'a> {
    qp: &'a Qp,
    block_of: Vec<Option<usize>>,
    nb: usize,
    ng: usize,
}

impl<'a> Layout<'a> {
    fn new(qp: &'a Qp) -> Result<Self, QpError> {
        let block_of = qp.block_map()?;
        let nb = qp.blocks.last().map_or(0, |b| b.end);
        Ok(Self {
            qp,
            block_of,
            nb,
            ng: qp.len() - nb,
        })
    }

    /// Builds and factors `[[H + Gᵀ D G, Aᵀ], [A, 0]]`.
    fn factor(&self, d: &[f64]) -> Result<Kkt, QpError> {
        let qp = self.qp;
        let (nb, ng) = (self.nb, self.ng);
        let me = qp.eq_rows.len();
        let t = ng + me;
        let mut blocks: Vec<Vec<f64>> = qp.blocks.iter().map(|b| vec![0.0; b.len() * b.len()]).collect();
        let mut m_bg = vec![0.0; nb * ng];
        let mut m_gg = vec![0.0; ng * ng];
        for (k, b) in qp.blocks.iter().enumerate() {
            let n = b.len();
            for i in 0..n {
                blocks[k][i * n + i] += qp.h[b.start + i];
            }
        }
        for g in 0..ng {
            m_gg[g * ng + g] += qp.h[nb + g];
        }
        for (i, &di) in d.iter().enumerate() {
            for (j1, v1) in qp.row(i) {
                for (j2, v2) in qp.row(i) {
                    let val = di * v1 * v2;
                    match (self.block_of[j1], j2 >= nb) {
                        (Some(k), false) => {
                            let b = &qp.blocks[k];
                            let n = b.len();
                            blocks[k][(j1 - b.start) * n + (j2 - b.start)] += val;
                        }
                        (Some(_), true) => m_bg[j1 * ng + (j2 - nb)] += val,
                        (None, true) => m_gg[(j1 - nb) * ng + (j2 - nb)] += val,
                        (None, false) => {}
                    }
                }
            }
        }
        let scale = 1.0 + inf_norm(&qp.h);
        let mut chol = Vec::with_capacity(blocks.len());
        for (k, mut a) in blocks.into_iter().enumerate() {
            let n = qp.blocks[k].len();
            for i in 0..n {
                a[i * n + i] += 1e-14 * scale;
            }
            cholesky(&mut a, n)?;
            chol.push(a);
        }
        // border columns: globals, then equality rows restricted to blocks
        let mut c = vec![0.0; nb * t];
        for i in 0..nb {
            for g in 0..ng {
                c[i * t + g] = m_bg[i * ng + g];
            }
            for e in 0..me {
                c[i * t + ng + e] = qp.eq_rows[e][i];
            }
        }
        let mut w = c.clone();
        for (k, b) in qp.blocks.iter().enumerate() {
            for col in 0..t {
                let mut v: Vec<f64> = b.clone().map(|i| w[i * t + col]).collect();
                chol_solve(&chol[k], b.len(), &mut v);
                for (o, i) in b.clone().enumerate() {
                    w[i * t + col] = v[o];
                }
            }
        }
        let mut schur = vec![0.0; t * t];
        for g1 in 0..ng {
            for g2 in 0..ng {
                schur[g1 * t + g2] = m_gg[g1 * ng + g2] + if g1 == g2 { 1e-14 * scale } else { 0.0 };
            }
            for e in 0..me {
                schur[g1 * t + ng + e] = qp.eq_rows[e][nb + g1];
                schur[(ng + e) * t + g1] = qp.eq_rows[e][nb + g1];
            }
        }
        for a in 0..t {
            for b in 0..t {
                let mut s = 0.0;
                for i in 0..nb {
                    s += c[i * t + a] * w[i * t + b];
                }
                schur[a * t + b] -= s;
            }
        }
        let perm = lu(&mut schur, t)?;
        Ok(Kkt {
            chol,
            w,
            c,
            schur,
            perm,
            nb,
            t,
        })
    }

    /// Solves the factored system for `(Δz, Δy)` given `(r_z, r_y)`.
    fn solve(&self, kkt: &Kkt, rz: &[f64], ry: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (nb, t, ng) = (kkt.nb, kkt.t, self.ng);
        let mut u = rz[..nb].to_vec();
        for (k, b) in self.qp.blocks.iter().enumerate() {
            chol_solve(&kkt.chol[k], b.len(), &mut u[b.clone()]);
        }
        let mut rt: Vec<f64> = rz[nb..].iter().chain(ry.iter()).copied().collect();
        for (a, r) in rt.iter_mut().enumerate() {
            for i in 0..nb {
                *r -= kkt.c[i * t + a] * u[i];
            }
        }
        lu_solve(&kkt.schur, &kkt.perm, t, &mut rt);
        let mut z = u;
        for (i, zi) in z.iter_mut().enumerate() {
            for a in 0..t {
                *zi -= kkt.w[i * t + a] * rt[a];
            }
        }
        z.extend_from_slice(&rt[..ng]);
        (z, rt[ng..].to_vec())
    }
}

/// Cholesky with dynamic regularisation: a pivot lost to cancellation is
/// raised to a small fraction of its original diagonal entry.
fn cholesky(a: &mut [f64], n: usize) -> Result<(), QpError> {
    for j in 0..n {
        let mut d = a[j * n + j];
        let floor = 1e-13 * d.abs().max(f64::MIN_POSITIVE);
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !d.is_finite() {
            return Err(QpError::Numerical("block not positive definite".into()));
        }
        let d = d.max(floor).sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    Ok(())
}

fn chol_solve(l: &[f64], n: usize, x: &mut [f64]) {
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[i * n + k] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
}

fn lu(a: &mut [f64], n: usize) -> Result<Vec<usize>, QpError> {
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs()))
            .unwrap_or(k);
        if a[p * n + k] == 0.0 {
            return Err(QpError::Numerical("singular border system".into()));
        }
        if p != k {
            for j in 0..n {
                a.swap(k * n + j, p * n + j);
            }
            perm.swap(k, p);
        }
        for i in k + 1..n {
            let f = a[i * n + k] / a[k * n + k];
            a[i * n + k] = f;
            for j in k + 1..n {
                a[i * n + j] -= f * a[k * n + j];
            }
        }
    }
    Ok(perm)
}

fn lu_solve(a: &[f64], perm: &[usize], n: usize, x: &mut [f64]) {
    let b: Vec<f64> = perm.iter().map(|&p| x[p]).collect();
    x.copy_from_slice(&b);
    for i in 0..n {
        for k in 0..i {
            x[i] -= a[i * n + k] * x[k];
        }
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            x[i] -= a[i * n + k] * x[k];
        }
        x[i] /= a[i * n + i];
    }
}

fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, d)| **d < 0.0)
        .map(|(x, d)| -x / d)
        .fold(1.0, f64::min)
}

/// Mehrotra predictor-corrector.
pub fn solve_qp(qp: &Qp, settings: IpmSettings) -> Result<QpSolution, QpError> {
    let layout = Layout::new(qp)?;
    let n = qp.len();
    let mi = qp.n_ineq();
    let me = qp.eq_rows.len();
    let g_times = |z: &[f64]| -> Vec<f64> {
        (0..mi).map(|i| qp.row(i).map(|(j, v)| v * z[j]).sum()).collect()
    };
    let gt_times = |lam: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (i, l) in lam.iter().enumerate() {
            for (j, v) in qp.row(i) {
                out[j] += v * l;
            }
        }
        out
    };
    let mut z = vec![0.0; n];
    let mut y = vec![0.0; me];
    let gz = g_times(&z);
    let mut s: Vec<f64> = gz.iter().zip(&qp.ineq_rhs).map(|(gz, g)| (g - gz).max(1.0)).collect();
    let mut lam = vec![1.0; mi];
    let scale_c = 1.0 + inf_norm(&qp.c);
    let scale_b = 1.0 + inf_norm(&qp.eq_rhs);
    let scale_g = 1.0 + inf_norm(&qp.ineq_rhs);
    let tol = settings.tolerance;
    let mut best: Option<(f64, usize, Vec<f64>, Vec<f64>)> = None;

    for iter in 0..settings.max_iterations {
        let gz = g_times(&z);
        let gtl = gt_times(&lam);
        let mut rd: Vec<f64> = (0..n).map(|j| qp.h[j] * z[j] + qp.c[j] + gtl[j]).collect();
        for (e, row) in qp.eq_rows.iter().enumerate() {
            for j in 0..n {
                rd[j] += row[j] * y[e];
            }
        }
        let rp: Vec<f64> = qp.eq_rows.iter().zip(&qp.eq_rhs).map(|(r, b)| dot(r, &z) - b).collect();
        let ri: Vec<f64> = (0..mi).map(|i| gz[i] + s[i] - qp.ineq_rhs[i]).collect();
        let gap = dot(&s, &lam);
        let mu = if mi > 0 { gap / mi as f64 } else { 0.0 };
        let obj = qp.objective(&z);
        let residual = (inf_norm(&rd) / scale_c)
            .max(inf_norm(&rp) / scale_b)
            .max(inf_norm(&ri) / scale_g)
            .max(gap / (1.0 + obj.abs()));
        if residual <= tol {
            return Ok(QpSolution {
                z,
                objective: obj,
                iterations: iter,
                y,
            });
        }
        match &best {
            Some((r, at, _, _)) if residual >= *r => {
                // stalled close to the optimum: ill-conditioning near the boundary
                if *r <= settings.acceptable && iter - at >= 4 {
                    break;
                }
            }
            _ => best = Some((residual, iter, z.clone(), y.clone())),
        }

        let d: Vec<f64> = lam.iter().zip(&s).map(|(l, s)| l / s).collect();
        let kkt = match layout.factor(&d) {
            Ok(k) => k,
            Err(e) if best.is_none() => return Err(e),
            Err(_) => break,
        };
        // Newton step for right-hand sides (−r_d, −r_p, −r_i, −r_c) of
        //   H Δz + Gᵀ Δλ + Aᵀ Δy,  A Δz,  G Δz + Δs,  λ∘Δs + s∘Δλ
        let newton = |r_d: &[f64], r_p: &[f64], r_i: &[f64], r_c: &[f64]| {
            let tmp: Vec<f64> = (0..mi).map(|i| d[i] * r_i[i] - r_c[i] / s[i]).collect();
            let gtt = gt_times(&tmp);
            let rz: Vec<f64> = (0..n).map(|j| -r_d[j] - gtt[j]).collect();
            let ry: Vec<f64> = r_p.iter().map(|r| -r).collect();
            let (dz, dy) = layout.solve(&kkt, &rz, &ry);
            let gdz = g_times(&dz);
            let dl: Vec<f64> = (0..mi).map(|i| d[i] * (gdz[i] + r_i[i]) - r_c[i] / s[i]).collect();
            let ds: Vec<f64> = (0..mi).map(|i| -r_i[i] - gdz[i]).collect();
            (dz, dy, dl, ds)
        };
        let direction = |rc: &[f64]| -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
            let (mut dz, mut dy, mut dl, mut ds) = newton(&rd, &rp, &ri, rc);
            // iterative refinement on the full system: the reduced form
            // loses Δλ accuracy on constraints with tiny slack
            let size = inf_norm(&rd)
                .max(inf_norm(&rp))
                .max(inf_norm(&ri))
                .max(inf_norm(rc));
            let mut last = f64::INFINITY;
            for _ in 0..4 {
                let gtl = gt_times(&dl);
                let mut e_d: Vec<f64> = (0..n).map(|j| rd[j] + qp.h[j] * dz[j] + gtl[j]).collect();
                for (e, row) in qp.eq_rows.iter().enumerate() {
                    for j in 0..n {
                        e_d[j] += row[j] * dy[e];
                    }
                }
                let e_p: Vec<f64> = qp.eq_rows.iter().zip(&rp).map(|(row, r)| r + dot(row, &dz)).collect();
                let gdz = g_times(&dz);
                let e_i: Vec<f64> = (0..mi).map(|i| ri[i] + gdz[i] + ds[i]).collect();
                let e_c: Vec<f64> = (0..mi).map(|i| rc[i] + lam[i] * ds[i] + s[i] * dl[i]).collect();
                let err = inf_norm(&e_d)
                    .max(inf_norm(&e_p))
                    .max(inf_norm(&e_i))
                    .max(inf_norm(&e_c));
                if err >= 0.5 * last || err <= 1e-12 * size {
                    break;
                }
                last = err;
                let (cz, cy, cl, cs) = newton(&e_d, &e_p, &e_i, &e_c);
                for j in 0..n {
                    dz[j] += cz[j];
                }
                for e in 0..me {
                    dy[e] += cy[e];
                }
                for i in 0..mi {
                    dl[i] += cl[i];
                    ds[i] += cs[i];
                }
            }
            (dz, dy, dl, ds)
        };

        let rc_aff: Vec<f64> = s.iter().zip(&lam).map(|(s, l)| s * l).collect();
        let (_, _, dl_a, ds_a) = direction(&rc_aff);
        let a_aff = max_step(&s, &ds_a).min(max_step(&lam, &dl_a));
        let mu_aff = (0..mi)
            .map(|i| (s[i] + a_aff * ds_a[i]) * (lam[i] + a_aff * dl_a[i]))
            .sum::<f64>()
            / mi.max(1) as f64;
        let sigma = if mu > 0.0 { (mu_aff / mu).powi(3).min(1.0) } else { 0.0 };
        let rc: Vec<f64> = (0..mi)
            .map(|i| s[i] * lam[i] + ds_a[i] * dl_a[i] - sigma * mu)
            .collect();
        let step = |rc: &[f64]| {
            let (dz, dy, dl, ds) = direction(rc);
            let alpha = (0.995 * max_step(&s, &ds).min(max_step(&lam, &dl))).min(1.0);
            let gap_new: f64 = (0..mi)
                .map(|i| (s[i] + alpha * ds[i]) * (lam[i] + alpha * dl[i]))
                .sum();
            (dz, dy, dl, ds, alpha, gap_new)
        };
        let (mut dz, mut dy, mut dl, mut ds, mut alpha, gap_new) = step(&rc);
        if mi > 0 && gap_new > (1.0 - 0.1 * alpha) * gap {
            // the second-order term overshot: take a plain centred step
            let rc: Vec<f64> = (0..mi).map(|i| s[i] * lam[i] - 0.3 * mu).collect();
            let plain = step(&rc);
            if plain.5 < gap_new {
                (dz, dy, dl, ds, alpha, _) = plain;
            }
        }
        for j in 0..n {
            z[j] += alpha * dz[j];
        }
        for e in 0..me {
            y[e] += alpha * dy[e];
        }
        for i in 0..mi {
            s[i] = (s[i] + alpha * ds[i]).max(1e-300);
            lam[i] = (lam[i] + alpha * dl[i]).max(1e-300);
        }
        if z.iter().chain(&y).any(|v| !v.is_finite()) {
            break;
        }
    }
    match best {
        Some((r, at, z, y)) if r <= settings.acceptable => Ok(QpSolution {
            objective: qp.objective(&z),
            z,
            iterations: at,
            y,
        }),
        Some((r, ..)) => Err(QpError::NotConverged {
            iterations: settings.max_iterations,
            residual: r,
        }),
        None => Err(QpError::NotConverged {
            iterations: settings.max_iterations,
            residual: f64::INFINITY,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn box_constrained_quadratic() {
        // min (z - 2)² over z ∈ [0, 1]
        let mut qp = Qp::new();
        let z = qp.var(2.0, -4.0);
        qp.close_block();
        qp.bounds(z, 0.0, 1.0);
        let s = solve_qp(&qp, IpmSettings::default()).unwrap();
        assert_abs_diff_eq!(s.z[0], 1.0, epsilon = 1e-8);
    }

    #[test]
    fn equality_split_between_blocks() {
        // min z0² + z1² s.t. z0 + z1 = 1 → (½, ½)
        let mut qp = Qp::new();
        for _ in 0..2 {
            let j = qp.var(2.0, 0.0);
            qp.close_block();
            qp.bounds(j, 0.0, 10.0);
        }
        qp.eq(vec![1.0, 1.0], 1.0);
        let s = solve_qp(&qp, IpmSettings::default()).unwrap();
        assert_abs_diff_eq!(s.z[0], 0.5, epsilon = 1e-8);
        assert_abs_diff_eq!(s.z[1], 0.5, epsilon = 1e-8);
    }

    #[test]
    fn epigraph_global() {
        // min m s.t. z_i ≤ m, z0 + z1 + z2 = 3, z ≥ 0 → m = 1
        let mut qp = Qp::new();
        let zs: Vec<usize> = (0..3)
            .map(|_| {
                let j = qp.var(0.0, 0.0);
                qp.close_block();
                j
            })
            .collect();
        let m = qp.var(0.0, 1.0);
        for &j in &zs {
            qp.bounds(j, 0.0, 5.0);
            qp.le(&[(j, 1.0), (m, -1.0)], 0.0);
        }
        qp.bounds(m, 0.0, 5.0);
        qp.eq(vec![1.0, 1.0, 1.0, 0.0], 3.0);
        let s = solve_qp(&qp, IpmSettings::default()).unwrap();
        assert_abs_diff_eq!(s.z[m], 1.0, epsilon = 1e-8);
        assert!(qp.infeasibility(&s.z) < 1e-8);
    }

    #[test]
    fn degenerate_single_point() {
        // z0 + z1 = 2 with both ≤ 1 leaves exactly one point
        let mut qp = Qp::new();
        for _ in 0..2 {
            let j = qp.var(0.0, 1.0);
            qp.close_block();
            qp.bounds(j, 0.0, 1.0);
        }
        qp.eq(vec![1.0, 1.0], 2.0);
        let s = solve_qp(&qp, IpmSettings::default()).unwrap();
        assert_abs_diff_eq!(s.z[0], 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(s.objective, 2.0, epsilon = 1e-8);
    }

    #[test]
    fn rejects_row_across_blocks() {
        let mut qp = Qp::new();
        let a = qp.var(1.0, 0.0);
        qp.close_block();
        let b = qp.var(1.0, 0.0);
        qp.close_block();
        qp.le(&[(a, 1.0), (b, 1.0)], 1.0);
        assert!(matches!(solve_qp(&qp, IpmSettings::default()), Err(QpError::Structure(_))));
    }
}
