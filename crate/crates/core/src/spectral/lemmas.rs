//! Numerical checks of the local expansion of the leading eigenvalue: the
//! modulus of continuity of `∂λ`, the quadratic-times-log bound on
//! `λ_k − λ_{k,t}`, and the fit of the diffusion matrix `Σ`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::eigen::{eigenvalues, SpectralTracker};
use super::operators::{assemble_dp_t, assemble_p_t, phase, Freq};
use super::SpectralError;
use crate::bounds::modulus_mb;
use crate::montecarlo::DisplacementHistogram;
use crate::stats::median;
use crate::tower::TowerModel;
use crate::C64;

/// A leading eigenvalue branch `t ↦ λ_{k,t}` with its gradient.
#[derive(Debug, Clone, Copy)]
pub enum Branch<'a> {
    /// Dense eigensolve of `P_t`, tracked from `t = 0`; the gradient comes
    /// from the left/right eigenvector pairing with `∂_j P_t`.
    Tracked { tower: &'a TowerModel, k: usize },
    /// Unit-height i.i.d. tower: `P_t` has rank one and its only nonzero
    /// eigenvalue is `Σ_a μ(a) e^{it·κ(a)}`, the trace.
    RankOne { tower: &'a TowerModel },
}

/// Value of a branch at one `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchValue {
    pub t: Freq,
    pub lambda: C64,
    /// `1 − λ`, computed without cancellation where the branch allows it.
    pub one_minus_lambda: C64,
    pub grad: [C64; 2],
}

impl<'a> Branch<'a> {
    /// Picks [`Branch::RankOne`] when it applies and `k = 0`.
    pub fn for_tower(tower: &'a TowerModel, k: usize) -> Self {
        let base = &tower.base;
        if k == 0 && tower.iid && base.sigma.iter().all(|&s| s == 1) {
            Branch::RankOne { tower }
        } else {
            Branch::Tracked { tower, k }
        }
    }

    pub fn tower(&self) -> &'a TowerModel {
        match *self {
            Branch::Tracked { tower, .. } | Branch::RankOne { tower } => tower,
        }
    }

    /// `λ_k(0) = e^{2πik/q}`.
    pub fn lambda_at_zero(&self) -> C64 {
        match *self {
            Branch::RankOne { .. } => C64::new(1.0, 0.0),
            Branch::Tracked { tower, k } => {
                C64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / tower.base.q as f64)
            }
        }
    }

    /// `|λ_t|` without tracking: the trace for rank-one towers, otherwise the
    /// spectral radius of `P_t`, which is the leading branch near `t = 0`
    /// on aperiodic models.
    pub fn dominant_modulus(&self, t: f64) -> Result<f64, SpectralError> {
        match *self {
            Branch::RankOne { tower } => Ok(rank_one_value(tower, [t, 0.0]).lambda.norm()),
            Branch::Tracked { tower, .. } => Ok(eigenvalues(&assemble_p_t(tower, [t, 0.0]))?
                .iter()
                .map(|v| v.norm())
                .fold(0.0, f64::max)),
        }
    }

    /// Evaluates the branch at every point of `ts`. Tracked branches walk the
    /// points in the given order, so monotone paths are cheapest.
    pub fn evaluate(&self, ts: &[Freq]) -> Result<Vec<BranchValue>, SpectralError> {
        match *self {
            Branch::RankOne { tower } => Ok(ts.iter().map(|&t| rank_one_value(tower, t)).collect()),
            Branch::Tracked { tower, k } => {
                let mut tracker = SpectralTracker::new(tower)?;
                let mut out = Vec::with_capacity(ts.len());
                for &t in ts {
                    let pair = tracker.advance(t)?.pairs[k].clone();
                    let mut grad = [C64::new(0.0, 0.0); 2];
                    for (j, g) in grad.iter_mut().enumerate().take(tower.dimension()) {
                        *g = pair.derivative(&assemble_dp_t(tower, t, j));
                    }
                    out.push(BranchValue {
                        t,
                        lambda: pair.value,
                        one_minus_lambda: 1.0 - pair.value,
                        grad,
                    });
                }
                Ok(out)
            }
        }
    }
}

fn rank_one_value(tower: &TowerModel, t: Freq) -> BranchValue {
    let base = &tower.base;
    let mut lambda = C64::new(0.0, 0.0);
    let mut one_minus = C64::new(0.0, 0.0);
    let mut grad = [C64::new(0.0, 0.0); 2];
    for a in 0..base.alphabet_size {
        let k = base.kappa_sigma(a);
        let w = base.base_measure[a];
        let theta = t[0] * k[0] as f64 + t[1] * k[1] as f64;
        let e = phase(k, t);
        lambda += w * e;
        // 1 − e^{iθ} = 2 sin²(θ/2) − i sin θ
        one_minus += w * C64::new(2.0 * (0.5 * theta).sin().powi(2), -theta.sin());
        for j in 0..2 {
            grad[j] += w * C64::new(0.0, k[j] as f64) * e;
        }
    }
    BranchValue {
        t,
        lambda,
        one_minus_lambda: one_minus,
        grad,
    }
}

fn big_l(t: f64) -> f64 {
    -t.ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulusRow {
    pub t: f64,
    pub h: f64,
    pub delta: f64,
    pub modulus: f64,
    pub ratio: f64,
}

/// `|∂λ(t+h) − ∂λ(t)| / M_b(t, h)` over a grid, for one `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusTable {
    pub b: f64,
    pub rows: Vec<ModulusRow>,
    pub max: f64,
    pub median: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticRow {
    pub t: f64,
    pub gap: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientRow {
    pub t: f64,
    pub analytic: [f64; 2],
    pub finite_difference: [f64; 2],
    pub relative_error: f64,
}

/// Ratio tables behind the two key lemmas, along the first axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyLemmaReport {
    pub moduli: Vec<ModulusTable>,
    /// `|λ_k − λ_{k,t}| / (|t|² L(t))`.
    pub quadratic: Vec<QuadraticRow>,
    pub quadratic_max: f64,
    pub quadratic_min: f64,
    pub quadratic_median: f64,
    /// `|∂_1 λ_{k,0}|`.
    pub gradient_at_zero: f64,
    pub gradients: Vec<GradientRow>,
    pub gradient_max_relative_error: f64,
}

/// Step of the central differences that cross-check the gradient.
pub const FD_STEP: f64 = 1e-6;

/// `t_grid` and `h_grid` hold positive scalars with `t + h < 1`; the checks
/// run along the first axis.
pub fn check_key_lemmas(
    branch: &Branch,
    t_grid: &[f64],
    h_grid: &[f64],
    b_values: &[f64],
) -> Result<KeyLemmaReport, SpectralError> {
    let mut pts: Vec<f64> = vec![0.0];
    for &t in t_grid {
        pts.extend([t, t - FD_STEP, t + FD_STEP]);
        pts.extend(h_grid.iter().map(|h| t + h));
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let values = branch.evaluate(&pts.iter().map(|&t| [t, 0.0]).collect::<Vec<_>>())?;
    let at = |t: f64| {
        let i = pts.binary_search_by(|p| p.total_cmp(&t)).expect("grid point");
        values[i]
    };

    let mut moduli = Vec::new();
    for &b in b_values {
        let mut rows = Vec::new();
        for &t in t_grid {
            for &h in h_grid {
                let delta = (at(t + h).grad[0] - at(t).grad[0]).norm();
                let modulus = modulus_mb(&[t], &[h], b).map_err(|e| SpectralError::Domain(e.to_string()))?;
                rows.push(ModulusRow {
                    t,
                    h,
                    delta,
                    modulus,
                    ratio: delta / modulus,
                });
            }
        }
        let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
        moduli.push(ModulusTable {
            b,
            max: ratios.iter().copied().fold(0.0, f64::max),
            median: median(&ratios),
            rows,
        });
    }

    let l0 = branch.lambda_at_zero();
    let quadratic: Vec<QuadraticRow> = t_grid
        .iter()
        .map(|&t| {
            let v = at(t);
            let gap = if l0 == C64::new(1.0, 0.0) {
                v.one_minus_lambda.norm()
            } else {
                (l0 - v.lambda).norm()
            };
            QuadraticRow {
                t,
                gap,
                ratio: gap / (t * t * big_l(t)),
            }
        })
        .collect();
    let qr: Vec<f64> = quadratic.iter().map(|r| r.ratio).collect();

    let gradients: Vec<GradientRow> = t_grid
        .iter()
        .map(|&t| {
            let analytic = at(t).grad[0];
            let fd = (at(t + FD_STEP).lambda - at(t - FD_STEP).lambda) / (2.0 * FD_STEP);
            GradientRow {
                t,
                analytic: [analytic.re, analytic.im],
                finite_difference: [fd.re, fd.im],
                relative_error: (analytic - fd).norm() / analytic.norm(),
            }
        })
        .collect();

    Ok(KeyLemmaReport {
        moduli,
        quadratic_max: qr.iter().copied().fold(0.0, f64::max),
        quadratic_min: qr.iter().copied().fold(f64::INFINITY, f64::min),
        quadratic_median: median(&qr),
        quadratic,
        gradient_at_zero: at(0.0).grad[0].norm(),
        gradient_max_relative_error: gradients.iter().map(|g| g.relative_error).fold(0.0, f64::max),
        gradients,
    })
}

/// Fitted `Σ` (the upper-left entry only when `dimension = 1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaFit {
    pub dimension: usize,
    pub sigma: [[f64; 2]; 2],
    /// Spectral mode: largest relative residual of the fit. CLT mode: zero.
    pub residual: f64,
    /// CLT mode only: standard errors of the entries.
    pub standard_errors: Option<[[f64; 2]; 2]>,
}

fn check_positive(fit: SigmaFit) -> Result<SigmaFit, SpectralError> {
    let s = fit.sigma;
    let ok = if fit.dimension == 1 {
        s[0][0] > 0.0
    } else {
        s[0][0] > 0.0 && s[0][0] * s[1][1] - s[0][1] * s[1][0] > 0.0
    };
    if ok {
        Ok(fit)
    } else {
        Err(SpectralError::NotPositiveDefinite { sigma: s })
    }
}

/// Least-squares fit of `1 − Re λ_{0,t} ≈ (Σt·t) L(|t|)` in relative
/// residuals, over `ts` inside the unit ball.
pub fn fit_sigma_spectral(branch: &Branch, ts: &[Freq]) -> Result<SigmaFit, SpectralError> {
    let d = branch.tower().dimension();
    let values = branch.evaluate(ts)?;
    let mut rows: Vec<([f64; 3], f64)> = Vec::with_capacity(ts.len());
    for v in &values {
        let r = (v.t[0] * v.t[0] + v.t[1] * v.t[1]).sqrt();
        let l = big_l(r);
        let y = v.one_minus_lambda.re;
        rows.push(([v.t[0] * v.t[0] * l, 2.0 * v.t[0] * v.t[1] * l, v.t[1] * v.t[1] * l], y));
    }
    let sigma = if d == 1 {
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (x, y) in &rows {
            let (xw, yw) = (x[0] / y, 1.0);
            sxy += xw * yw;
            sxx += xw * xw;
        }
        [[sxy / sxx, 0.0], [0.0, 0.0]]
    } else {
        let mut a = Matrix3::<f64>::zeros();
        let mut rhs = Vector3::<f64>::zeros();
        for (x, y) in &rows {
            let xv = Vector3::new(x[0] / y, x[1] / y, x[2] / y);
            a += xv * xv.transpose();
            rhs += xv;
        }
        let s = a
            .lu()
            .solve(&rhs)
            .ok_or(SpectralError::Domain("degenerate t grid for a 2×2 fit".into()))?;
        [[s[0], s[1]], [s[1], s[2]]]
    };
    let residual = rows
        .iter()
        .map(|(x, y)| {
            let model = sigma[0][0] * x[0] + sigma[0][1] * x[1] + sigma[1][1] * x[2];
            ((model - y) / y).abs()
        })
        .fold(0.0, f64::max);
    check_positive(SigmaFit {
        dimension: d,
        sigma,
        residual,
        standard_errors: None,
    })
}

/// `Cov(κ_n) / a_n²` from a histogram, with delta-method standard errors.
pub fn fit_sigma_clt(hist: &DisplacementHistogram, a_n: f64) -> Result<SigmaFit, SpectralError> {
    let done = (hist.total_samples - hist.overflow_count) as f64;
    if done < 2.0 {
        return Err(SpectralError::Domain("fewer than two completed samples".into()));
    }
    let mut mean = [0.0; 2];
    for (k, &c) in &hist.counts {
        for i in 0..2 {
            mean[i] += c as f64 * k[i] as f64 / done;
        }
    }
    let mut cov = [[0.0; 2]; 2];
    let mut fourth = [[0.0; 2]; 2];
    for (k, &c) in &hist.counts {
        let w = c as f64 / done;
        let x = [k[0] as f64 - mean[0], k[1] as f64 - mean[1]];
        for i in 0..2 {
            for j in 0..2 {
                cov[i][j] += w * x[i] * x[j];
                fourth[i][j] += w * (x[i] * x[j]).powi(2);
            }
        }
    }
    let scale = a_n * a_n;
    let mut sigma = [[0.0; 2]; 2];
    let mut se = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            sigma[i][j] = cov[i][j] / scale;
            se[i][j] = ((fourth[i][j] - cov[i][j] * cov[i][j]).max(0.0) / done).sqrt() / scale;
        }
    }
    check_positive(SigmaFit {
        dimension: hist.dimension,
        sigma,
        residual: 0.0,
        standard_errors: Some(se),
    })
}
