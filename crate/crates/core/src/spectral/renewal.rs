//! Renewal route to the leading eigenvalues: `τ_k(z, t)` is the eigenvalue
//! of `R̂(z, t)` near 1, `g_k(t)` solves `τ_k(g, t) = 1`, and `λ_{k,t}`
//! should equal `1 / g_k(t)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eigen::{eigenpair, eigenvalues, CVector, SpectralTracker};
use super::operators::{
    assemble_dr_hat_dz, assemble_r_hat, assemble_renewal_operators, p_hat_truncated, phase, sup_norm, CMatrix, Freq,
};
use super::SpectralError;
use crate::tower::TowerModel;
use crate::C64;

/// Radius of the `t`-neighbourhood on which the branches are followed.
pub const DEFAULT_DELTA: f64 = 0.3;

pub const NEWTON_MAX_ITERATIONS: usize = 100;

/// Largest `|t|`-increment of the continuation used by [`solve_gk`].
const CONTINUATION_STEP: f64 = 0.05;

/// `τ_k(z, t)` with its `z`-derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tau {
    pub value: C64,
    pub dz: C64,
}

/// Scalar `τ` of an i.i.d. base, where `R̂` has rank one:
/// `τ(z, t) = Σ_a μ_Y(a) z^{σ(a)} e^{it·κ_σ(a)}`.
pub fn tau_iid(tower: &TowerModel, z: C64, t: Freq) -> Tau {
    let base = &tower.base;
    let (mut value, mut dz) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
    for a in 0..base.alphabet_size {
        let s = base.sigma[a] as u32;
        let w = phase(base.kappa_sigma(a), t) * base.base_measure[a];
        let zs1 = z.powu(s - 1);
        value += w * zs1 * z;
        dz += w * zs1 * s as f64;
    }
    Tau { value, dz }
}

/// Eigenvalue of `R̂(z, t)` nearest 1 and its derivative in `z`.
pub fn tau(tower: &TowerModel, z: C64, t: Freq) -> Result<Tau, SpectralError> {
    if tower.iid {
        return Ok(tau_iid(tower, z, t));
    }
    let r = assemble_r_hat(tower, z, t);
    let one = C64::new(1.0, 0.0);
    let near = eigenvalues(&r)?
        .into_iter()
        .min_by(|a, b| (a - one).norm().total_cmp(&(b - one).norm()))
        .expect("nonempty alphabet");
    let pair = eigenpair(&r, near)?;
    Ok(Tau {
        value: pair.value,
        dz: pair.derivative(&assemble_dr_hat_dz(tower, z, t)),
    })
}

/// A rank-one matrix `right · leftᴴ`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOne {
    pub right: CVector,
    pub left: CVector,
}

impl RankOne {
    pub fn matrix(&self) -> CMatrix {
        &self.right * self.left.adjoint()
    }

    fn scaled(mut self, c: C64) -> Self {
        self.right *= c;
        self
    }
}

/// Spectral projection `π_k(z, t)` of `R̂(z, t)` for the eigenvalue near `τ`.
///
/// On an i.i.d. base every row of `R̂` is the same vector `w`, so the
/// projection is `1·wᵀ/τ` and never needs a dense eigensolve.
pub fn pi(tower: &TowerModel, z: C64, t: Freq, tau: C64) -> Result<RankOne, SpectralError> {
    if tower.iid {
        let k = tower.base.alphabet_size;
        let w = iid_row(tower, z, t);
        let total = w.sum();
        let left = w.map(|x| (x / total).conj());
        return Ok(RankOne {
            right: CVector::from_element(k, C64::new(1.0, 0.0)),
            left,
        });
    }
    let pair = eigenpair(&assemble_r_hat(tower, z, t), tau)?;
    Ok(RankOne {
        right: pair.right,
        left: pair.left,
    })
}

/// Common row `w(a) = μ_Y(a) z^{σ(a)} e^{it·κ_σ(a)}` of an i.i.d. `R̂`.
fn iid_row(tower: &TowerModel, z: C64, t: Freq) -> CVector {
    let base = &tower.base;
    CVector::from_fn(base.alphabet_size, |a, _| {
        phase(base.kappa_sigma(a), t) * base.base_measure[a] * z.powu(base.sigma[a] as u32)
    })
}

/// `‖α·P − β·Q‖` in the max-row-sum norm.
fn combination_norm(p: &RankOne, alpha: C64, q: &RankOne, beta: C64) -> f64 {
    // A constant right vector means identical rows, so the norm is the ℓ¹
    // norm of one row.
    let constant = |v: &CVector| v.iter().all(|x| *x == v[0]).then(|| v[0]);
    if let (Some(cp), Some(cq)) = (constant(&p.right), constant(&q.right)) {
        p.left
            .iter()
            .zip(q.left.iter())
            .map(|(a, b)| (alpha * cp * a.conj() - beta * cq * b.conj()).norm())
            .sum()
    } else {
        sup_norm(&(p.matrix() * alpha - q.matrix() * beta))
    }
}

/// `λ̄_k = e^{−2πik/q}`, the zero of `τ_k(·, 0) − 1`.
pub fn conj_root(k: usize, q: usize) -> C64 {
    C64::from_polar(1.0, -2.0 * std::f64::consts::PI * k as f64 / q as f64)
}

/// `(1−τ_k)^{-1}π_k = (g_k − z)^{-1}π̃_k + H_k` near `z = g_k(t)`.
#[derive(Debug, Clone)]
pub struct RenewalFactorization {
    pub k: usize,
    pub t: Freq,
    pub g: C64,
    /// `∂_z τ_k(g_k(t), t)`.
    pub dtau_dz: C64,
    pub newton_iterations: usize,
    /// `π̃_k(t) = π_k(g_k, t) / ∂_zτ_k(g_k, t)`, kept in factored form.
    pub pi_tilde: RankOne,
    /// Largest `‖H_k(z, t)‖` over `z` on small circles around `g_k(t)`.
    pub residual_h: f64,
}

fn newton(tower: &TowerModel, mut z: C64, t: Freq, iterations: &mut usize) -> Result<(C64, Tau), SpectralError> {
    for _ in 0..NEWTON_MAX_ITERATIONS {
        *iterations += 1;
        let tv = tau(tower, z, t)?;
        let f = tv.value - 1.0;
        let dz = f / tv.dz;
        z -= dz;
        if dz.norm() <= 1e-15 * z.norm() || f.norm() < 1e-16 {
            let tv = tau(tower, z, t)?;
            return Ok((z, tv));
        }
    }
    let tv = tau(tower, z, t)?;
    Err(SpectralError::NoConvergence {
        iterations: NEWTON_MAX_ITERATIONS,
        residual: (tv.value - 1.0).norm(),
    })
}

/// Newton's method for `τ_k(g, t) = 1`, continued from `(λ̄_k, 0)` along the
/// segment to `t`.
pub fn solve_gk(tower: &TowerModel, k: usize, t: Freq) -> Result<RenewalFactorization, SpectralError> {
    let q = tower.base.q;
    let norm_t = (t[0] * t[0] + t[1] * t[1]).sqrt();
    let steps = (norm_t / CONTINUATION_STEP).ceil().max(1.0) as usize;
    let mut z = conj_root(k, q);
    let mut iterations = 0;
    let mut tv = tau(tower, z, [0.0, 0.0])?;
    for s in 1..=steps {
        let f = s as f64 / steps as f64;
        let (zn, tn) = newton(tower, z, [f * t[0], f * t[1]], &mut iterations)?;
        z = zn;
        tv = tn;
    }
    let pi_tilde = pi(tower, z, t, tv.value)?.scaled(tv.dz.inv());
    let mut residual_h = 0.0_f64;
    for eps in [1e-2, 1e-3, 1e-4] {
        for j in 0..4 {
            let w = z + C64::from_polar(eps * z.norm(), 0.4 + j as f64 * std::f64::consts::FRAC_PI_2);
            let tw = tau(tower, w, t)?;
            let pi_w = pi(tower, w, t, tw.value)?;
            let h = combination_norm(&pi_w, (1.0 - tw.value).inv(), &pi_tilde, (z - w).inv());
            residual_h = residual_h.max(h);
        }
    }
    Ok(RenewalFactorization {
        k,
        t,
        g: z,
        dtau_dz: tv.dz,
        newton_iterations: iterations,
        pi_tilde,
        residual_h,
    })
}

/// One point of the local expansion `τ_k(z, 0) − 1 ≈ λ_k σ̄ (z − λ̄_k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mu0Point {
    pub offset: f64,
    /// `(τ_k(z, 0) − 1)/(z − λ̄_k)` as `[re, im]`.
    pub difference_quotient: [f64; 2],
    pub target: [f64; 2],
    pub error: f64,
}

pub fn check_mu0(tower: &TowerModel, k: usize, offsets: &[f64]) -> Result<Vec<Mu0Point>, SpectralError> {
    let q = tower.base.q;
    let root = conj_root(k, q);
    let target = root.conj() * tower.sigma_bar;
    offsets
        .iter()
        .map(|&h| {
            let dz = C64::from_polar(h, 1.0);
            let quotient = (tau(tower, root + dz, [0.0, 0.0])?.value - 1.0) / dz;
            Ok(Mu0Point {
                offset: h,
                difference_quotient: [quotient.re, quotient.im],
                target: [target.re, target.im],
                error: (quotient - target).norm(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaGRow {
    pub t: Freq,
    pub k: usize,
    pub lambda: [f64; 2],
    pub g: [f64; 2],
    pub discrepancy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaGReport {
    pub rows: Vec<LambdaGRow>,
    pub sup: f64,
}

/// Compares the tracked eigenvalues of `P_t` with `1 / g_k(t)` on a grid.
/// Grid points are visited in order, so a grid running outward along a ray
/// keeps the tracking cheap.
pub fn verify_lambda_g(tower: &TowerModel, t_grid: &[Freq]) -> Result<LambdaGReport, SpectralError> {
    let mut tracker = SpectralTracker::new(tower)?;
    let mut rows = Vec::new();
    for &t in t_grid {
        let lambdas = tracker.advance(t)?.lambdas();
        for (k, lambda) in lambdas.into_iter().enumerate() {
            let g = solve_gk(tower, k, t)?.g;
            rows.push(LambdaGRow {
                t,
                k,
                lambda: [lambda.re, lambda.im],
                g: [g.re, g.im],
                discrepancy: (lambda - 1.0 / g).norm(),
            });
        }
    }
    let sup = rows.iter().map(|r| r.discrepancy).fold(0.0, f64::max);
    Ok(LambdaGReport { rows, sup })
}

/// Residuals of `T̂ = (I − R̂)^{-1}` and `P̂ = ÂT̂B̂ + Ê` at one `(z, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenewalResidual {
    pub z: [f64; 2],
    pub t: Freq,
    pub n_max: usize,
    pub t_hat: f64,
    pub p_hat: f64,
    /// Geometric truncation bound `|z|^{n_max+1} / (1 − |z|)`.
    pub truncation_bound: f64,
}

/// Builds `P̂` and `T̂ = 1_Y P̂ 1_Y` as power series truncated at `n_max` and
/// compares them with the renewal factorization.
pub fn verify_renewal_identity(tower: &TowerModel, z: C64, t: Freq, n_max: usize) -> RenewalResidual {
    let p_hat = p_hat_truncated(tower, z, t, n_max);
    let k = tower.base.alphabet_size;
    let t_hat_series = CMatrix::from_fn(k, k, |b, a| p_hat[(tower.offsets[b], tower.offsets[a])]);
    let ops = assemble_renewal_operators(tower, z, t);
    let t_hat = (CMatrix::identity(k, k) - &ops.r_hat)
        .try_inverse()
        .unwrap_or_else(|| CMatrix::from_element(k, k, C64::new(f64::INFINITY, 0.0)));
    let factored = &ops.a_hat * &t_hat * &ops.b_hat + &ops.e_hat;
    RenewalResidual {
        z: [z.re, z.im],
        t,
        n_max,
        t_hat: sup_norm(&(t_hat_series - &t_hat)),
        p_hat: sup_norm(&(p_hat - factored)),
        truncation_bound: z.norm().powi(n_max as i32 + 1) / (1.0 - z.norm()),
    }
}

/// [`verify_renewal_identity`] over a product grid, in parallel.
pub fn renewal_sweep(tower: &TowerModel, z_grid: &[C64], t_grid: &[Freq], n_max: usize) -> Vec<RenewalResidual> {
    let points: Vec<(C64, Freq)> = z_grid
        .iter()
        .flat_map(|&z| t_grid.iter().map(move |&t| (z, t)))
        .collect();
    points
        .par_iter()
        .map(|&(z, t)| verify_renewal_identity(tower, z, t, n_max))
        .collect()
}
