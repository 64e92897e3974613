//! Leading eigendata of `P_t`: eigenvalues from a complex Schur form,
//! eigenvectors by inverse iteration, and branch tracking in `t` by maximal
//! eigenvector overlap.

use nalgebra::{DVector, Schur};

use super::operators::{assemble_p_t, sup_norm, CMatrix, Freq};
use super::SpectralError;
use crate::stats::fit_line;
use crate::tower::TowerModel;
use crate::C64;

pub type CVector = DVector<C64>;

/// Branches closer than this are considered indistinguishable.
pub const COLLISION_GAP: f64 = 1e-8;

/// Largest `t`-increment taken between two tracking steps.
pub const TRACK_STEP: f64 = 0.02;

/// All eigenvalues via the complex Schur form.
///
/// Plain shifted QR can cycle forever on matrices whose spectrum is
/// symmetric about the origin (period-two towers at `t = 0`), so the
/// iteration is capped and retried on `M + cI` for a few off-axis `c`.
pub fn eigenvalues(m: &CMatrix) -> Result<Vec<C64>, SpectralError> {
    let n = m.nrows();
    let cap = 200 * n.max(4);
    for c in [
        C64::new(0.0, 0.0),
        C64::new(0.31, 0.17),
        C64::new(-0.23, 0.41),
        C64::new(0.57, -0.29),
    ] {
        let shifted = m + CMatrix::identity(n, n) * c;
        if let Some(schur) = Schur::try_new(shifted, f64::EPSILON, cap) {
            if let Some(vals) = schur.eigenvalues() {
                return Ok(vals.iter().map(|v| v - c).collect());
            }
        }
    }
    Err(SpectralError::NoConvergence {
        iterations: cap,
        residual: f64::NAN,
    })
}

/// Simple eigenvalue with right (`M r = λ r`) and left (`lᴴ M = λ lᴴ`)
/// eigenvectors, normalized so that `‖r‖ = 1` and `lᴴ r = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: C64,
    pub right: CVector,
    pub left: CVector,
}

impl EigenPair {
    /// Rank-one spectral projection `r lᴴ`.
    pub fn projection(&self) -> CMatrix {
        &self.right * self.left.adjoint()
    }

    /// First-order derivative `lᴴ (∂M) r` of the eigenvalue along a
    /// perturbation direction `dm`.
    pub fn derivative(&self, dm: &CMatrix) -> C64 {
        (self.left.adjoint() * dm * &self.right)[(0, 0)]
    }
}

fn inverse_iteration(m: &CMatrix, shift: C64) -> Result<CVector, SpectralError> {
    let n = m.nrows();
    let mut rel = 1e-10;
    let lu = loop {
        let a = m - CMatrix::identity(n, n) * (shift + C64::new(rel, 0.5 * rel) * (1.0 + shift.norm()));
        let lu = a.lu();
        if lu.is_invertible() {
            break lu;
        }
        rel *= 10.0;
        if rel > 1e-4 {
            return Err(SpectralError::Singular);
        }
    };
    let mut v = CVector::from_fn(n, |i, _| C64::new(1.0 + 0.1 * (i as f64).sin(), 0.05 * i as f64));
    for _ in 0..4 {
        v = lu.solve(&v).ok_or(SpectralError::Singular)?;
        let norm = v.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(SpectralError::Singular);
        }
        v /= C64::new(norm, 0.0);
    }
    Ok(v)
}

/// Eigenpair for the eigenvalue of `m` nearest `approx`.
pub fn eigenpair(m: &CMatrix, approx: C64) -> Result<EigenPair, SpectralError> {
    let right = inverse_iteration(m, approx)?;
    let left = inverse_iteration(&m.adjoint(), approx.conj())?;
    let pairing = (left.adjoint() * &right)[(0, 0)];
    if pairing.norm() < 1e-12 {
        return Err(SpectralError::EigenvalueCollision { gap: 0.0 });
    }
    let left = left / pairing.conj();
    let value = (left.adjoint() * m * &right)[(0, 0)];
    Ok(EigenPair { value, right, left })
}

/// The `q` peripheral eigenvalues of `P_t` with their projections.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub t: Freq,
    pub q: usize,
    /// Branch `k` starts at `e^{2πik/q}` when `t = 0`.
    pub pairs: Vec<EigenPair>,
    /// Decay of `‖Q_t^n‖`, filled in by [`SpectralDecomposition::fit_remainder`]
    /// (the tracker skips it since it costs fifty matrix products).
    pub remainder: Option<RemainderFit>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemainderFit {
    /// Fitted `γ`; zero when `Q_t` vanishes.
    pub rate: f64,
    pub r_squared: f64,
}

impl SpectralDecomposition {
    pub fn lambdas(&self) -> Vec<C64> {
        self.pairs.iter().map(|p| p.value).collect()
    }

    pub fn projections(&self) -> Vec<CMatrix> {
        self.pairs.iter().map(EigenPair::projection).collect()
    }

    /// Fits the remainder decay against the operator `m` the pairs came from.
    pub fn fit_remainder(&mut self, m: &CMatrix) -> RemainderFit {
        let fit = remainder_rate(m, &self.pairs, 50);
        self.remainder = Some(fit);
        fit
    }
}

/// Fits `‖Q^n‖ ≈ C γ^n` for `n = 1..=n_max`, where `Q = M − Σ λ_k Π_k`.
pub fn remainder_rate(m: &CMatrix, pairs: &[EigenPair], n_max: usize) -> RemainderFit {
    let mut q = m.clone();
    for p in pairs {
        q -= p.projection() * p.value;
    }
    let scale = sup_norm(m).max(1.0);
    let mut qn = q.clone();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for n in 1..=n_max {
        let norm = sup_norm(&qn);
        if norm <= 1e-12 * scale {
            break;
        }
        xs.push(n as f64);
        ys.push(norm.ln());
        qn = &qn * &q;
    }
    match fit_line(&xs, &ys) {
        Some(f) if xs.len() >= 3 => RemainderFit {
            rate: f.slope.exp(),
            r_squared: f.r_squared,
        },
        _ => RemainderFit {
            rate: 0.0,
            r_squared: 1.0,
        },
    }
}

fn root_of_unity(k: usize, q: usize) -> C64 {
    C64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / q as f64)
}

/// Peripheral spectrum of an unperturbed operator: the `q` eigenvalues of
/// largest modulus, ordered so that branch `k` sits nearest `e^{2πik/q}`.
pub fn leading_spectrum(m: &CMatrix, q: usize, t: Freq) -> Result<SpectralDecomposition, SpectralError> {
    let mut vals = eigenvalues(m)?;
    vals.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    let mut top: Vec<C64> = vals.iter().take(q).copied().collect();
    if let Some(&next) = vals.get(q) {
        if (top[q - 1].norm() - next.norm()).abs() < COLLISION_GAP {
            return Err(SpectralError::EigenvalueCollision {
                gap: (top[q - 1].norm() - next.norm()).abs(),
            });
        }
    }
    let mut ordered = Vec::with_capacity(q);
    for k in 0..q {
        let target = root_of_unity(k, q);
        let (i, _) = top
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - target).norm().total_cmp(&(b.1 - target).norm()))
            .expect("q ≥ 1");
        ordered.push(top.swap_remove(i));
    }
    let pairs = ordered
        .into_iter()
        .map(|v| eigenpair(m, v))
        .collect::<Result<Vec<_>, _>>()?;
    let remainder = Some(remainder_rate(m, &pairs, 50));
    Ok(SpectralDecomposition { t, q, pairs, remainder })
}

/// Follows the `q` peripheral branches of `P_t` from `t = 0` along a path.
///
/// Each call to [`SpectralTracker::advance`] moves in straight substeps of
/// at most [`TRACK_STEP`], matching every branch to the candidate
/// eigenvector with maximal overlap.
#[derive(Debug, Clone)]
pub struct SpectralTracker<'a> {
    tower: &'a TowerModel,
    current: SpectralDecomposition,
}

impl<'a> SpectralTracker<'a> {
    pub fn new(tower: &'a TowerModel) -> Result<Self, SpectralError> {
        let q = tower.base.q;
        let p0 = assemble_p_t(tower, [0.0, 0.0]);
        let current = leading_spectrum(&p0, q, [0.0, 0.0])?;
        Ok(SpectralTracker { tower, current })
    }

    pub fn current(&self) -> &SpectralDecomposition {
        &self.current
    }

    /// Moves to `t` and returns the tracked decomposition there.
    pub fn advance(&mut self, t: Freq) -> Result<&SpectralDecomposition, SpectralError> {
        let from = self.current.t;
        let dist = ((t[0] - from[0]).powi(2) + (t[1] - from[1]).powi(2)).sqrt();
        let steps = (dist / TRACK_STEP).ceil().max(1.0) as usize;
        for s in 1..=steps {
            let f = s as f64 / steps as f64;
            let ts = [from[0] + f * (t[0] - from[0]), from[1] + f * (t[1] - from[1])];
            self.step(ts)?;
        }
        Ok(&self.current)
    }

    fn step(&mut self, t: Freq) -> Result<(), SpectralError> {
        let m = assemble_p_t(self.tower, t);
        let vals = eigenvalues(&m)?;
        let mut pairs: Vec<EigenPair> = Vec::with_capacity(self.current.q);
        for prev in &self.current.pairs {
            let mut cands = vals.clone();
            cands.sort_by(|a, b| (a - prev.value).norm().total_cmp(&(b - prev.value).norm()));
            let mut best: Option<(f64, EigenPair)> = None;
            for (i, &c) in cands.iter().take(3).enumerate() {
                // Far candidates may sit in a degenerate cluster (e.g. the
                // zero eigenvalue of a rank-one operator); skip those.
                let pair = match eigenpair(&m, c) {
                    Ok(p) => p,
                    Err(_) if i > 0 => continue,
                    Err(e) => return Err(e),
                };
                let overlap = (prev.right.adjoint() * &pair.right)[(0, 0)].norm();
                if best.as_ref().is_none_or(|(o, _)| overlap > *o) {
                    best = Some((overlap, pair));
                }
            }
            let (_, pair) = best.expect("nonempty spectrum");
            if let Some(&other) = cands.get(1) {
                let gap = (cands[0] - other).norm();
                if gap < COLLISION_GAP && (other - pair.value).norm() < 1e-6 {
                    return Err(SpectralError::EigenvalueCollision { gap });
                }
            }
            pairs.push(pair);
        }
        for i in 0..pairs.len() {
            for j in 0..i {
                let gap = (pairs[i].value - pairs[j].value).norm();
                if gap < COLLISION_GAP {
                    return Err(SpectralError::EigenvalueCollision { gap });
                }
            }
        }
        self.current = SpectralDecomposition {
            t,
            q: self.current.q,
            pairs,
            remainder: None,
        };
        Ok(())
    }
}

/// Tracked decomposition at a single `t`, remainder fit included.
pub fn decompose(tower: &TowerModel, t: Freq) -> Result<SpectralDecomposition, SpectralError> {
    let mut tr = SpectralTracker::new(tower)?;
    let mut d = tr.advance(t)?.clone();
    d.fit_remainder(&assemble_p_t(tower, t));
    Ok(d)
}
