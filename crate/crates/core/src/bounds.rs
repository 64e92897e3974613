//! Scalar calculus of the local large deviation bounds.
//!
//! Logarithms are natural, with the convention `log x = 1` on `[0, 2)`
//! (see [`safe_log`]). Norms of lattice vectors are Euclidean.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::montecarlo::DisplacementHistogram;
use crate::quadrature::{integrate_breaks, QuadratureBudget};
use crate::stats::{fit_line, median};
use crate::Cell;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("regime violation: n = {n} exceeds omega * log|N| = {limit}")]
    RegimeViolation { n: u64, limit: f64 },
    #[error("argument outside the domain: {0}")]
    Domain(String),
    #[error("x^2 / l2(x) is not increasing near x = {at}")]
    NotMonotone { at: f64 },
    #[error(transparent)]
    Quadrature(#[from] QuadratureBudget),
}

/// Natural logarithm with `log x = 1` for `x < 2`.
pub fn safe_log(x: f64) -> f64 {
    if x < 2.0 {
        1.0
    } else {
        x.ln()
    }
}

/// The billiard normalizer `a_n = √(n log n)`.
pub fn a_n(n: u64) -> f64 {
    let n = n as f64;
    (n * safe_log(n)).sqrt()
}

/// Euclidean norm of a lattice vector.
pub fn lattice_norm(v: Cell) -> f64 {
    (v[0] as f64).hypot(v[1] as f64)
}

/// Upper bound for `μ(κ_n = N)` without its constant scaled by `c`.
///
/// `d = 1`: `c · (n/a_n) · log|N| / (1+|N|²)`;
/// `d = 2`: `c · (n/a_n²) · log|N| · log log|N| / (1+|N|²)`.
pub fn lld_bound(n: u64, big_n: Cell, d: usize, c: f64) -> f64 {
    let r = lattice_norm(big_n);
    let l = safe_log(r);
    let an = a_n(n);
    let denom = 1.0 + r * r;
    if d == 1 {
        c * (n as f64 / an) * l / denom
    } else {
        c * (n as f64 / (an * an)) * l * safe_log(l) / denom
    }
}

/// Large-|N| bound variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BigNMode {
    /// `(log|N| · log log|N|)^{d/2}` numerator.
    Billiard,
    /// `ℓ₁(|N|) · (log|N|)^{d/2 + 1 + ε}` numerator, normalized by the
    /// abstract `a_n` of `ell2`.
    Abstract {
        ell1: SlowlyVaryingFn,
        ell2: SlowlyVaryingFn,
        eps: f64,
    },
}

/// The bound valid for `n ≤ ω log|N|`: `c · n/a_n^d · numerator / |N|²`.
pub fn big_n_bound(n: u64, big_n: Cell, d: usize, c: f64, omega: f64, mode: &BigNMode) -> Result<f64, BoundsError> {
    let r = lattice_norm(big_n);
    if r == 0.0 {
        return Err(BoundsError::Domain("N = 0".into()));
    }
    let l = safe_log(r);
    let limit = omega * l;
    if n as f64 > limit {
        return Err(BoundsError::RegimeViolation { n, limit });
    }
    let half_d = d as f64 / 2.0;
    let (an, num) = match mode {
        BigNMode::Billiard => (a_n(n), (l * safe_log(l)).powf(half_d)),
        BigNMode::Abstract { ell1, ell2, eps } => (abstract_a_n(ell2, n)?, ell1.eval(r) * l.powf(half_d + 1.0 + eps)),
    };
    Ok(c * n as f64 / an.powi(d as i32) * num / (r * r))
}

/// `L(t) = log(1/|t|)` for `0 < |t| < 1`.
fn big_l(norm: f64) -> f64 {
    -norm.ln()
}

fn unit_norm(v: &[f64], name: &str) -> Result<f64, BoundsError> {
    let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if r > 0.0 && r < 1.0 {
        Ok(r)
    } else {
        Err(BoundsError::Domain(format!("|{name}| = {r} outside (0, 1)")))
    }
}

/// `M_b(t, h) = |h| L(h) {1 + L(h)|t|²L(t) + |h|^{−b|t|²L(t)} L(h)²|t|⁴L(t)²}`.
pub fn modulus_mb(t: &[f64], h: &[f64], b: f64) -> Result<f64, BoundsError> {
    let (tn, hn) = (unit_norm(t, "t")?, unit_norm(h, "h")?);
    let (lt, lh) = (big_l(tn), big_l(hn));
    Ok(modulus_core(tn, hn, b, lh, lh, lt))
}

/// `M_b` with `L̃(t) = L(t)² ℓ̃₁(1/|t|)` in the prefactor and in place of
/// `L(t)` inside the braces; the inner `L(h)` factors are unchanged.
pub fn modulus_mb_tilde(t: &[f64], h: &[f64], b: f64, ell1: &SlowlyVaryingFn) -> Result<f64, BoundsError> {
    let (tn, hn) = (unit_norm(t, "t")?, unit_norm(h, "h")?);
    let lt_tilde = big_l_tilde(tn, ell1)?;
    let lh_tilde = big_l_tilde(hn, ell1)?;
    Ok(modulus_core(tn, hn, b, lh_tilde, big_l(hn), lt_tilde))
}

/// `L̃(t) = L(t)² ℓ̃₁(1/|t|)`.
pub fn big_l_tilde(norm: f64, ell1: &SlowlyVaryingFn) -> Result<f64, BoundsError> {
    let l = big_l(norm);
    Ok(l * l * tilde_ell1(ell1, 1.0 / norm, TildeMode::Standard)?)
}

fn modulus_core(tn: f64, hn: f64, b: f64, prefactor_l: f64, lh: f64, lt: f64) -> f64 {
    let t2 = tn * tn * lt;
    hn * prefactor_l * (1.0 + lh * t2 + hn.powf(-b * t2) * lh * lh * t2 * t2)
}

/// Choice of integrand for [`tilde_ell1`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum TildeMode {
    /// `∫₁^{1+x} u⁻¹ ℓ₁(u/log u) du`.
    #[default]
    Standard,
    /// Extra `(log u)²` factor in the integrand.
    Optimised,
}

/// Slowly varying functions on `[1, ∞)`; arguments below 1 are clamped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SlowlyVaryingFn {
    Constant {
        value: f64,
    },
    /// `coefficient · (log x)^power` with the [`safe_log`] convention.
    PowerOfLog {
        coefficient: f64,
        power: f64,
    },
    /// `x ↦ ℓ̃(x)` for an inner function `ℓ`.
    IntegralDefined {
        inner: Box<SlowlyVaryingFn>,
        #[serde(default)]
        mode: TildeMode,
    },
    /// Piecewise linear in `log x` through `(x, value)` points, constant
    /// beyond the ends.
    UserTable {
        points: Vec<(f64, f64)>,
    },
}

impl SlowlyVaryingFn {
    pub fn one() -> Self {
        Self::Constant { value: 1.0 }
    }

    pub fn log() -> Self {
        Self::log_power(1.0)
    }

    pub fn log_power(power: f64) -> Self {
        Self::PowerOfLog {
            coefficient: 1.0,
            power,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let x = x.max(1.0);
        match self {
            Self::Constant { value } => *value,
            Self::PowerOfLog { coefficient, power } => coefficient * safe_log(x).powf(*power),
            Self::IntegralDefined { inner, mode } => {
                tilde_ell1(inner, x, *mode).expect("integrand of a slowly varying function")
            }
            Self::UserTable { points } => {
                let lx = x.ln();
                let first = points.first().expect("nonempty table");
                let last = points.last().unwrap();
                if x <= first.0 {
                    return first.1;
                }
                if x >= last.0 {
                    return last.1;
                }
                let i = points.iter().position(|p| p.0 > x).unwrap();
                let (x0, y0) = (points[i - 1].0.ln(), points[i - 1].1);
                let (x1, y1) = (points[i].0.ln(), points[i].1);
                y0 + (y1 - y0) * (lx - x0) / (x1 - x0)
            }
        }
    }

    /// Checks positivity and, for tables, sorted abscissae.
    pub fn validate(&self) -> Result<(), BoundsError> {
        match self {
            Self::Constant { value } if *value > 0.0 => Ok(()),
            Self::PowerOfLog { coefficient, .. } if *coefficient > 0.0 => Ok(()),
            Self::IntegralDefined { inner, .. } => inner.validate(),
            Self::UserTable { points }
                if !points.is_empty()
                    && points.iter().all(|p| p.0 >= 1.0 && p.1 > 0.0)
                    && points.windows(2).all(|w| w[0].0 < w[1].0) =>
            {
                Ok(())
            }
            other => Err(BoundsError::Domain(format!("not a positive function: {other:?}"))),
        }
    }
}

/// `ℓ̃₁(x) = ∫₁^{1+x} u⁻¹ ℓ₁(u/log u) du`, with [`safe_log`] inside.
///
/// Computed in the variable `v = log u`, which turns the integrand into
/// `ℓ₁(e^v / log e^v)` on `[0, log(1+x)]` with one break at `v = log 2`.
pub fn tilde_ell1(ell1: &SlowlyVaryingFn, x: f64, mode: TildeMode) -> Result<f64, BoundsError> {
    if !(x >= 1.0) {
        return Err(BoundsError::Domain(format!("x = {x} < 1")));
    }
    if let (SlowlyVaryingFn::Constant { value }, TildeMode::Standard) = (ell1, mode) {
        return Ok(value * x.ln_1p());
    }
    let top = x.ln_1p();
    let ln2 = std::f64::consts::LN_2;
    let mut breaks = vec![0.0];
    if top > ln2 {
        breaks.push(ln2);
    }
    breaks.push(top);
    let mut f = |v: f64| {
        let u = v.exp();
        let lu = safe_log(u);
        let weight = match mode {
            TildeMode::Standard => 1.0,
            TildeMode::Optimised => lu * lu,
        };
        weight * ell1.eval(u / lu)
    };
    Ok(integrate_breaks(&mut f, &breaks, 0.0, 1e-11)?.value)
}

/// Solves `a² = n ℓ₂(a)` by bisection, the abstract normalizer.
pub fn abstract_a_n(ell2: &SlowlyVaryingFn, n: u64) -> Result<f64, BoundsError> {
    let nf = n as f64;
    let g = |a: f64| a * a - nf * ell2.eval(a);
    let mut lo = 1.0;
    if g(lo) > 0.0 {
        return Err(BoundsError::Domain(format!(
            "a^2 > n l2(a) already at a = 1 for n = {n}"
        )));
    }
    let mut hi = nf.max(2.0);
    while g(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(BoundsError::NotMonotone { at: hi });
        }
    }
    while hi - lo > 1e-13 * hi {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let root = 0.5 * (lo + hi);
    // Uniqueness near the root: x²/ℓ₂(x) must not decrease there.
    let ratio = |x: f64| x * x / ell2.eval(x);
    let (a, b) = ((root / 2.0).max(1.0), 2.0 * root);
    let steps = 32;
    let mut prev = ratio(a);
    for i in 1..=steps {
        let x = a * (b / a).powf(i as f64 / steps as f64);
        let r = ratio(x);
        if r < prev * (1.0 - 1e-12) {
            return Err(BoundsError::NotMonotone { at: x });
        }
        prev = r;
    }
    Ok(root)
}

/// Outcome of the `(log x)² ℓ̃₁(x) ≤ C ℓ₂(x)` check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ass3Verdict {
    pub grid: Vec<f64>,
    pub ratios: Vec<f64>,
    /// Supremum over the grid, the smallest admissible constant.
    pub worst_ratio: f64,
    pub worst_at: f64,
    /// Slope of `log ratio` against `log log x`.
    pub trend_slope: f64,
    /// Raised when the trend slope exceeds 0.5, i.e. a power of `log x`.
    pub unbounded_trend: bool,
}

pub fn check_ass3(ell1: &SlowlyVaryingFn, ell2: &SlowlyVaryingFn, grid: &[f64]) -> Result<Ass3Verdict, BoundsError> {
    let mut ratios = Vec::with_capacity(grid.len());
    for &x in grid {
        if x < 2.0 {
            return Err(BoundsError::Domain(format!("grid point {x} < 2")));
        }
        let l = safe_log(x);
        ratios.push(l * l * tilde_ell1(ell1, x, TildeMode::Standard)? / ell2.eval(x));
    }
    let (worst_idx, worst_ratio) =
        ratios
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, r)| if r > acc.1 { (i, r) } else { acc });
    let lx: Vec<f64> = grid.iter().map(|x| safe_log(safe_log(*x))).collect();
    let ly: Vec<f64> = ratios.iter().map(|r| r.ln()).collect();
    let trend_slope = fit_line(&lx, &ly).map_or(0.0, |f| f.slope);
    Ok(Ass3Verdict {
        grid: grid.to_vec(),
        ratios,
        worst_ratio,
        worst_at: grid[worst_idx],
        trend_slope,
        unbounded_trend: trend_slope > 0.5,
    })
}

/// `c · n/a_n^d · ℓ₃(|N|)/(1+|N|²)` with the abstract normalizer of `ℓ₂`.
pub fn abstract_bound(
    n: u64,
    big_n: Cell,
    d: usize,
    ell3: &SlowlyVaryingFn,
    c: f64,
    ell2: &SlowlyVaryingFn,
) -> Result<f64, BoundsError> {
    let r = lattice_norm(big_n);
    let an = abstract_a_n(ell2, n)?;
    Ok(c * n as f64 / an.powi(d as i32) * ell3.eval(r) / (1.0 + r * r))
}

/// Which bound a ratio table divides by.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BoundSpec {
    /// [`lld_bound`] with `C = 1`.
    Billiard,
    /// [`abstract_bound`] with `C = 1`; `ell3` defaults to `ell2`.
    Abstract {
        ell2: SlowlyVaryingFn,
        ell3: Option<SlowlyVaryingFn>,
    },
}

impl BoundSpec {
    pub fn eval(&self, n: u64, big_n: Cell, d: usize) -> Result<f64, BoundsError> {
        match self {
            BoundSpec::Billiard => Ok(lld_bound(n, big_n, d, 1.0)),
            BoundSpec::Abstract { ell2, ell3 } => abstract_bound(n, big_n, d, ell3.as_ref().unwrap_or(ell2), 1.0, ell2),
        }
    }

    pub fn normalizer(&self, n: u64) -> Result<f64, BoundsError> {
        match self {
            BoundSpec::Billiard => Ok(a_n(n)),
            BoundSpec::Abstract { ell2, .. } => abstract_a_n(ell2, n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// `n ≤ ω log|N|` only.
    BigN,
    /// `log|N| ≤ ε₁ n` only.
    Main,
    /// Both conditions hold.
    Overlap,
    /// Neither holds.
    Gap,
}

pub fn regime(n: u64, big_n: Cell, omega: f64, eps1: f64) -> Regime {
    let l = safe_log(lattice_norm(big_n));
    let nf = n as f64;
    match (nf <= omega * l, l <= eps1 * nf) {
        (true, true) => Regime::Overlap,
        (true, false) => Regime::BigN,
        (false, true) => Regime::Main,
        (false, false) => Regime::Gap,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub n: u64,
    pub big_n: Cell,
    pub count: u64,
    pub empirical: f64,
    pub stderr: f64,
    pub bound: f64,
    pub ratio: f64,
    pub regime: Regime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSummary {
    pub rows: usize,
    pub max: f64,
    pub median: f64,
    /// Least-squares slope of `log ratio` against `log n` over all rows;
    /// NaN unless the rows span at least two values of `n`.
    pub slope: f64,
    /// Same slope through the per-`n` medians.
    pub median_slope: f64,
    pub per_n_median: BTreeMap<u64, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub dimension: usize,
    pub spec: BoundSpec,
    pub rows: Vec<BoundRow>,
    pub summary: RatioSummary,
}

/// Selection rules for [`ratio_table`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioOptions {
    pub omega: f64,
    pub eps1: f64,
    pub min_count: u64,
    /// Keep only `|N| ≤ factor · a_n` when set.
    pub max_norm_factor: Option<f64>,
}

impl Default for RatioOptions {
    fn default() -> Self {
        Self {
            omega: 1.0,
            eps1: 0.1,
            min_count: 30,
            max_norm_factor: None,
        }
    }
}

/// Empirical-to-bound ratios over every well-populated `(n, N)`.
pub fn ratio_table(
    histograms: &[DisplacementHistogram],
    spec: &BoundSpec,
    opts: RatioOptions,
) -> Result<BoundReport, BoundsError> {
    let dimension = histograms.first().map_or(2, |h| h.dimension);
    let mut rows = Vec::new();
    for h in histograms {
        let an = spec.normalizer(h.n)?;
        for (&big_n, &count) in &h.counts {
            if count < opts.min_count {
                continue;
            }
            if let Some(f) = opts.max_norm_factor {
                if lattice_norm(big_n) > f * an {
                    continue;
                }
            }
            let empirical = count as f64 / h.total_samples as f64;
            let bound = spec.eval(h.n, big_n, h.dimension)?;
            rows.push(BoundRow {
                n: h.n,
                big_n,
                count,
                empirical,
                stderr: crate::stats::binomial_se(empirical, h.total_samples),
                bound,
                ratio: empirical / bound,
                regime: regime(h.n, big_n, opts.omega, opts.eps1),
            });
        }
    }
    let summary = summarize(&rows);
    Ok(BoundReport {
        dimension,
        spec: spec.clone(),
        rows,
        summary,
    })
}

pub fn summarize(rows: &[BoundRow]) -> RatioSummary {
    if rows.is_empty() {
        return RatioSummary {
            rows: 0,
            max: f64::NAN,
            median: f64::NAN,
            slope: f64::NAN,
            median_slope: f64::NAN,
            per_n_median: BTreeMap::new(),
        };
    }
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    let ln_n: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let ln_r: Vec<f64> = ratios.iter().map(|r| r.ln()).collect();
    let mut by_n: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for r in rows {
        by_n.entry(r.n).or_default().push(r.ratio);
    }
    let per_n_median: BTreeMap<u64, f64> = by_n.iter().map(|(n, v)| (*n, median(v))).collect();
    let mx: Vec<f64> = per_n_median.keys().map(|n| (*n as f64).ln()).collect();
    let my: Vec<f64> = per_n_median.values().map(|v| v.ln()).collect();
    RatioSummary {
        rows: rows.len(),
        max: ratios.iter().cloned().fold(f64::MIN, f64::max),
        median: median(&ratios),
        slope: fit_line(&ln_n, &ln_r).map_or(f64::NAN, |f| f.slope),
        median_slope: fit_line(&mx, &my).map_or(f64::NAN, |f| f.slope),
        per_n_median,
    }
}

impl BoundReport {
    /// CSV with columns `n, N…, empirical, stderr, bound, ratio, regime`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), crate::Error> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["n".to_string(), "N_x".into()];
        if self.dimension == 2 {
            header.push("N_y".into());
        }
        header.extend(["empirical", "stderr", "bound", "ratio", "regime"].map(String::from));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.n.to_string(), r.big_n[0].to_string()];
            if self.dimension == 2 {
                rec.push(r.big_n[1].to_string());
            }
            rec.push(format!("{:e}", r.empirical));
            rec.push(format!("{:e}", r.stderr));
            rec.push(format!("{:e}", r.bound));
            rec.push(format!("{:e}", r.ratio));
            rec.push(serde_json::to_value(r.regime)?.as_str().unwrap_or_default().to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}
