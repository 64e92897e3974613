//! Fourier-side computations: exact lattice inversion of
//! `E[e^{it·κ_n}]`, the smoothed point masses, the operators
//! `A_{n,N} = ∫ e^{−it·N} r(t) P_t^n dt`, and the integrals of `|λ_t|^n`.

use std::collections::BTreeMap;

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::kernel::SmoothingKernel;
use super::lemmas::Branch;
use super::operators::{assemble_p_t, characteristic_function, sup_norm, CMatrix, Freq};
use super::SpectralError;
use crate::bounds::{a_n, abstract_a_n, lattice_norm, regime, safe_log, Regime, SlowlyVaryingFn};
use crate::quadrature::{integrate_breaks, integrate_vec};
use crate::tower::TowerModel;
use crate::{Cell, C64};

/// `max |κ_n|_∞ ≤ n · max |κ|_∞`.
pub fn support_bound(tower: &TowerModel, n: usize) -> i64 {
    n as i64 * tower.base.max_step()
}

fn grid_size(tower: &TowerModel, n: usize) -> usize {
    (2 * support_bound(tower, n) as usize + 1).next_power_of_two()
}

/// `P(κ_n = N)` for every `N` in the support box, by the trapezoidal rule on
/// the torus with an automatically sized power-of-two grid.
pub fn fourier_inversion_law(tower: &TowerModel, n: usize) -> Result<BTreeMap<Cell, f64>, SpectralError> {
    fourier_inversion_law_on_grid(tower, n, grid_size(tower, n))
}

/// As [`fourier_inversion_law`] with `m` points per axis.
pub fn fourier_inversion_law_on_grid(
    tower: &TowerModel,
    n: usize,
    m: usize,
) -> Result<BTreeMap<Cell, f64>, SpectralError> {
    let s = support_bound(tower, n);
    if (m as i64) < 2 * s + 1 {
        return Err(SpectralError::Alias { grid: m, support: s });
    }
    let d = tower.dimension();
    let step = 2.0 * std::f64::consts::PI / m as f64;
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(m);
    let scale = (m as f64).powi(d as i32);
    let idx = |k: i64| k.rem_euclid(m as i64) as usize;
    let mut law = BTreeMap::new();
    if d == 1 {
        let mut buf: Vec<C64> = (0..m)
            .map(|j| characteristic_function(tower, n, [j as f64 * step, 0.0]))
            .collect();
        fft.process(&mut buf);
        for k in -s..=s {
            law.insert([k, 0], buf[idx(k)].re / scale);
        }
    } else {
        // Row-major m × m grid; transform rows, then columns.
        let mut buf = vec![C64::new(0.0, 0.0); m * m];
        for j0 in 0..m {
            for j1 in 0..m {
                buf[j0 * m + j1] = characteristic_function(tower, n, [j0 as f64 * step, j1 as f64 * step]);
            }
        }
        for row in buf.chunks_mut(m) {
            fft.process(row);
        }
        let mut col = vec![C64::new(0.0, 0.0); m];
        for j1 in 0..m {
            for j0 in 0..m {
                col[j0] = buf[j0 * m + j1];
            }
            fft.process(&mut col);
            for j0 in 0..m {
                buf[j0 * m + j1] = col[j0];
            }
        }
        for k0 in -s..=s {
            for k1 in -s..=s {
                law.insert([k0, k1], buf[idx(k0) * m + idx(k1)].re / scale);
            }
        }
    }
    Ok(law)
}

/// `∫ e^{−it·N} r(t) E[e^{it·κ_n}] dt` for every `N` in the support box.
pub fn smoothed_law(tower: &TowerModel, n: usize, kernel: &SmoothingKernel) -> BTreeMap<Cell, f64> {
    let s = support_bound(tower, n);
    let d = tower.dimension();
    let rule = kernel.rule(2.0 * s as f64 + 1.0);
    let weighted: Vec<(Freq, C64)> = rule
        .iter()
        .map(|&(t, w)| (t, characteristic_function(tower, n, t) * w))
        .collect();
    let mut law = BTreeMap::new();
    if d == 1 {
        let mut acc = vec![0.0; (2 * s + 1) as usize];
        for &(t, v) in &weighted {
            // e^{−itN} for N = −s..=s by recurrence from e^{its}.
            let step = C64::from_polar(1.0, -t[0]);
            let mut e = C64::from_polar(1.0, t[0] * s as f64);
            for a in acc.iter_mut() {
                *a += (v * e).re;
                e *= step;
            }
        }
        for (i, a) in acc.into_iter().enumerate() {
            law.insert([i as i64 - s, 0], a);
        }
    } else {
        for k0 in -s..=s {
            for k1 in -s..=s {
                let v: f64 = weighted
                    .iter()
                    .map(|&(t, v)| (v * C64::from_polar(1.0, -(t[0] * k0 as f64 + t[1] * k1 as f64))).re)
                    .sum();
                law.insert([k0, k1], v);
            }
        }
    }
    law
}

/// Normalizing sequence used by the ratio reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Normalizer {
    /// `√(n log n)`.
    Billiard,
    /// `√n`.
    Diffusive,
    /// Solution of `a² = n ℓ₂(a)`.
    Abstract { ell2: SlowlyVaryingFn },
}

impl Normalizer {
    pub fn value(&self, n: u64) -> Result<f64, SpectralError> {
        match self {
            Normalizer::Billiard => Ok(a_n(n)),
            Normalizer::Diffusive => Ok((n as f64).sqrt()),
            Normalizer::Abstract { ell2 } => abstract_a_n(ell2, n).map_err(|e| SpectralError::Domain(e.to_string())),
        }
    }
}

/// `A_{n,N}` with its sup-induced norm and the two bound ratios.
#[derive(Debug, Clone)]
pub struct SmoothedOperator {
    pub n: u64,
    pub big_n: Cell,
    pub matrix: CMatrix,
    pub norm: f64,
    /// `‖A‖ a_n^d`.
    pub ratio_uniform: f64,
    /// `‖A‖ |N|² a_n^d / (n safe_log|N|)`; `None` at `N = 0`.
    pub ratio_decay: Option<f64>,
    pub regime: Regime,
}

fn matrix_power(m: &CMatrix, mut n: usize) -> CMatrix {
    let mut result = CMatrix::identity(m.nrows(), m.ncols());
    let mut base = m.clone();
    while n > 0 {
        if n & 1 == 1 {
            result = &result * &base;
        }
        n >>= 1;
        if n > 0 {
            base = &base * &base;
        }
    }
    result
}

/// Per-entry absolute tolerance of [`compute_a_nn`] in one dimension.
pub const A_NN_TOLERANCE: f64 = 1e-8;

/// `A_{n,N} = ∫ e^{−it·N} r(t) P_t^n dt`. One-dimensional towers use
/// adaptive Gauss–Kronrod on the spline pieces; two-dimensional ones use the
/// kernel's composite tensor rule.
pub fn compute_a_nn(
    tower: &TowerModel,
    n: u64,
    big_n: Cell,
    kernel: &SmoothingKernel,
    normalizer: &Normalizer,
) -> Result<SmoothedOperator, SpectralError> {
    let s = tower.len();
    let d = tower.dimension();
    // Without the kernel factor, which the tensor rule already carries.
    let integrand = |t: Freq| -> CMatrix {
        let ph = C64::from_polar(1.0, -(t[0] * big_n[0] as f64 + t[1] * big_n[1] as f64));
        matrix_power(&assemble_p_t(tower, t), n as usize) * ph
    };
    let matrix = if d == 1 {
        let (v, _) = integrate_vec(
            |t, out: &mut [f64]| {
                let m = integrand([t, 0.0]) * C64::new(kernel.eval([t, 0.0]), 0.0);
                for (i, z) in m.iter().enumerate() {
                    out[2 * i] = z.re;
                    out[2 * i + 1] = z.im;
                }
            },
            &kernel.knots(),
            2 * s * s,
            A_NN_TOLERANCE,
            0.0,
            20_000,
        )?;
        CMatrix::from_iterator(s, s, v.chunks(2).map(|c| C64::new(c[0], c[1])))
    } else {
        let freq = support_bound(tower, n as usize) as f64 + lattice_norm(big_n);
        let mut acc = CMatrix::zeros(s, s);
        for (t, w) in kernel.rule(freq) {
            acc += integrand(t) * C64::new(w, 0.0);
        }
        acc
    };
    let norm = sup_norm(&matrix);
    let an = normalizer.value(n)?.powi(d as i32);
    let nn = lattice_norm(big_n);
    Ok(SmoothedOperator {
        n,
        big_n,
        norm,
        ratio_uniform: norm * an,
        ratio_decay: (nn > 0.0).then(|| norm * nn * nn * an / (n as f64 * safe_log(nn))),
        regime: regime(n, big_n, 1.0, 0.1),
        matrix,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorIntRow {
    pub n: u64,
    pub integral: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorIntCurve {
    pub beta: f64,
    pub r_exp: f64,
    pub rows: Vec<CorIntRow>,
    pub max: f64,
    pub median: f64,
}

/// `ratio(n) = ∫_{|t|<2δ} |t|^β L(t)^r |λ_t|^n dt · a_n^{1+β} / (safe_log n)^r`
/// for a one-dimensional branch. Tracked branches use the dominant
/// eigenvalue of `P_t`, which is the leading branch for aperiodic models.
pub fn quadrature_cor_int(
    branch: &Branch,
    beta: f64,
    r_exp: f64,
    n_grid: &[u64],
    delta: f64,
    normalizer: &Normalizer,
) -> Result<CorIntCurve, SpectralError> {
    if branch.tower().dimension() != 1 {
        return Err(SpectralError::Domain(
            "integrals of |λ_t|^n are implemented for d = 1".into(),
        ));
    }
    let upper = 2.0 * delta;
    if upper >= 1.0 {
        return Err(SpectralError::Domain(format!(
            "2δ = {upper} must stay below 1 so that L(t) > 0"
        )));
    }
    let mut rows = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let an = normalizer.value(n)?;
        let mut breaks = vec![0.0];
        let mut b = 0.25 / an;
        while b < upper {
            breaks.push(b);
            b *= 2.0;
        }
        breaks.push(upper);
        let mut failure = None;
        let mut f = |t: f64| {
            if t == 0.0 {
                return if beta == 0.0 && r_exp == 0.0 { 1.0 } else { 0.0 };
            }
            match branch.dominant_modulus(t) {
                Ok(lam) => t.powf(beta) * (-t.ln()).powf(r_exp) * lam.powf(n as f64),
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            }
        };
        let half = integrate_breaks(&mut f, &breaks, 1e-300, 1e-9)?;
        if let Some(e) = failure {
            return Err(e);
        }
        let integral = 2.0 * half.value;
        rows.push(CorIntRow {
            n,
            integral,
            ratio: integral * an.powf(1.0 + beta) / safe_log(n as f64).powf(r_exp),
        });
    }
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    Ok(CorIntCurve {
        beta,
        r_exp,
        max: ratios.iter().copied().fold(0.0, f64::max),
        median: crate::stats::median(&ratios),
        rows,
    })
}
