//! Smoothing kernel `r`: a product of cubic B-splines. It is even, `C²`,
//! nonnegative, integrates to one, and its Fourier coefficients
//! `ř(m) = Π sinc⁴(m_i w / 4)` are nonnegative, so
//! `1{κ_n = N} ≤ ∫ e^{−it·N} r(t) e^{it·κ_n} dt`.

use serde::{Deserialize, Serialize};

use super::operators::Freq;
use super::SpectralError;
use crate::quadrature::gauss_legendre;
use crate::Cell;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingKernel {
    pub delta: f64,
    pub dimension: usize,
    /// Per-axis support is `[−w, w]` with `w = δ / (2√d)`, so the support
    /// of `r` sits inside the ball of radius `δ/2`.
    pub half_width: f64,
}

/// Centred cubic B-spline on `[−2, 2]`, unit integral.
fn b3(x: f64) -> f64 {
    let a = x.abs();
    if a < 1.0 {
        (4.0 - 6.0 * a * a + 3.0 * a * a * a) / 6.0
    } else if a < 2.0 {
        (2.0 - a).powi(3) / 6.0
    } else {
        0.0
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

impl SmoothingKernel {
    pub fn new(delta: f64, dimension: usize) -> Result<Self, SpectralError> {
        if !(delta > 0.0) || !(1..=2).contains(&dimension) {
            return Err(SpectralError::Domain(format!(
                "kernel needs δ > 0 and d ∈ {{1, 2}}, got δ = {delta}, d = {dimension}"
            )));
        }
        Ok(SmoothingKernel {
            delta,
            dimension,
            half_width: delta / (2.0 * (dimension as f64).sqrt()),
        })
    }

    fn axis(&self, s: f64) -> f64 {
        let w = self.half_width;
        2.0 / w * b3(2.0 * s / w)
    }

    pub fn eval(&self, t: Freq) -> f64 {
        (0..self.dimension).map(|i| self.axis(t[i])).product()
    }

    /// `ř(m) = ∫ e^{it·m} r(t) dt`.
    pub fn fourier(&self, m: Cell) -> f64 {
        (0..self.dimension)
            .map(|i| sinc(m[i] as f64 * self.half_width / 4.0).powi(4))
            .product()
    }

    /// Knots of the per-axis spline; `r` is a polynomial between them.
    pub fn knots(&self) -> [f64; 5] {
        let w = self.half_width;
        [-w, -0.5 * w, 0.0, 0.5 * w, w]
    }

    /// Composite Gauss–Legendre rule for one axis, already multiplied by the
    /// axis factor of `r`. Panels never straddle a knot and are short
    /// enough to resolve `e^{iωt}` for `|ω| ≤ max_frequency`.
    pub fn axis_rule(&self, max_frequency: f64) -> Vec<(f64, f64)> {
        const ORDER: usize = 16;
        let (x, w) = gauss_legendre(ORDER);
        let knots = self.knots();
        let piece = 0.5 * self.half_width;
        let panels = ((max_frequency * piece / std::f64::consts::PI).ceil() as usize).max(1);
        let mut rule = Vec::with_capacity(4 * panels * ORDER);
        for k in knots.windows(2) {
            let h = (k[1] - k[0]) / panels as f64;
            for p in 0..panels {
                let c = k[0] + (p as f64 + 0.5) * h;
                for (xi, wi) in x.iter().zip(&w) {
                    let t = c + 0.5 * h * xi;
                    rule.push((t, 0.5 * h * wi * self.axis(t)));
                }
            }
        }
        rule
    }

    /// Tensor-product version of [`SmoothingKernel::axis_rule`].
    pub fn rule(&self, max_frequency: f64) -> Vec<(Freq, f64)> {
        let axis = self.axis_rule(max_frequency);
        if self.dimension == 1 {
            axis.into_iter().map(|(t, w)| ([t, 0.0], w)).collect()
        } else {
            let mut out = Vec::with_capacity(axis.len() * axis.len());
            for &(t0, w0) in &axis {
                for &(t1, w1) in &axis {
                    out.push(([t0, t1], w0 * w1));
                }
            }
            out
        }
    }
}
