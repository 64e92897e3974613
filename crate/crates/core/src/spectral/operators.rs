//! Perturbed transfer operator `P_t` and the renewal operators `R̂, Â, B̂, Ê`.
//!
//! Functions on the tower are indexed by state (see [`TowerModel::states`]),
//! functions on the base by symbol. Matrices act on column vectors, so
//! `(P_t v)(y) = Σ_x P[y][x] v(x)` with
//! `P[y][x] = μ(x) K(x, y) e^{it·κ(x)} / μ(y)`.

use nalgebra::DMatrix;

use crate::tower::TowerModel;
use crate::{Cell, C64};

pub type CMatrix = DMatrix<C64>;

/// Frequency vector; one-dimensional models ignore the second entry.
pub type Freq = [f64; 2];

pub fn phase(k: Cell, t: Freq) -> C64 {
    C64::from_polar(1.0, t[0] * k[0] as f64 + t[1] * k[1] as f64)
}

/// `κ_ℓ` accumulated over levels `from..to` of column `a`.
fn partial_kappa(tower: &TowerModel, a: usize, from: usize, to: usize) -> Cell {
    tower.base.kappa_levels[a][from..to]
        .iter()
        .fold([0, 0], |s, k| [s[0] + k[0], s[1] + k[1]])
}

/// Weight `μ_Y(a) K(a, b) / μ_Y(b)` of the base transfer operator.
fn base_weight(tower: &TowerModel, a: usize, b: usize) -> f64 {
    let base = &tower.base;
    base.base_measure[a] * base.transition[a][b] / base.base_measure[b]
}

/// Dense matrix of `P_t`.
pub fn assemble_p_t(tower: &TowerModel, t: Freq) -> CMatrix {
    let s = tower.len();
    let mut m = CMatrix::zeros(s, s);
    for x in 0..s {
        let ph = phase(tower.kappa[x], t);
        if tower.is_top(x) {
            let a = tower.states[x].0;
            for b in 0..tower.base.alphabet_size {
                let w = base_weight(tower, a, b);
                if w != 0.0 {
                    m[(tower.offsets[b], x)] += ph * w;
                }
            }
        } else {
            m[(x + 1, x)] = ph;
        }
    }
    m
}

/// `∂P_t/∂t_j`: every column `x` of `P_t` picks up a factor `iκ_j(x)`.
pub fn assemble_dp_t(tower: &TowerModel, t: Freq, axis: usize) -> CMatrix {
    let mut m = assemble_p_t(tower, t);
    for x in 0..tower.len() {
        let f = C64::new(0.0, tower.kappa[x][axis] as f64);
        for y in 0..tower.len() {
            m[(y, x)] *= f;
        }
    }
    m
}

/// Matrix-free `P_t`, costing `O(states + alphabet²)` per application and
/// `O(states)` when the base is i.i.d.
#[derive(Debug, Clone)]
pub struct TransferOperator<'a> {
    tower: &'a TowerModel,
    phases: Vec<C64>,
    iid: bool,
}

impl<'a> TransferOperator<'a> {
    pub fn new(tower: &'a TowerModel, t: Freq) -> Self {
        TransferOperator {
            tower,
            phases: tower.kappa.iter().map(|&k| phase(k, t)).collect(),
            iid: tower.iid,
        }
    }

    pub fn apply(&self, v: &[C64], out: &mut [C64]) {
        let tower = self.tower;
        let base = &tower.base;
        let mut exits = vec![C64::new(0.0, 0.0); base.alphabet_size];
        for x in 0..tower.len() {
            let w = self.phases[x] * v[x];
            if tower.is_top(x) {
                let a = tower.states[x].0;
                exits[a] = w * base.base_measure[a];
            } else {
                out[x + 1] = w;
            }
        }
        if self.iid {
            // K(a, b) = μ_Y(b): every base state receives the same total.
            let total: C64 = exits.iter().sum();
            for &o in &tower.offsets {
                out[o] = total;
            }
        } else {
            for b in 0..base.alphabet_size {
                let mut acc = C64::new(0.0, 0.0);
                for (a, e) in exits.iter().enumerate() {
                    acc += e * base.transition[a][b];
                }
                out[tower.offsets[b]] = acc / base.base_measure[b];
            }
        }
    }
}

/// `E[e^{it·κ_n}] = ⟨μ_Δ, P_t^n 1⟩`.
pub fn characteristic_function(tower: &TowerModel, n: usize, t: Freq) -> C64 {
    let op = TransferOperator::new(tower, t);
    let mut v = vec![C64::new(1.0, 0.0); tower.len()];
    let mut w = v.clone();
    for _ in 0..n {
        op.apply(&v, &mut w);
        std::mem::swap(&mut v, &mut w);
    }
    v.iter().zip(&tower.measure).map(|(a, m)| a * m).sum()
}

/// Row-compressed sparse copy of a dense matrix, for repeated left
/// multiplication.
#[derive(Debug, Clone)]
pub struct SparseRows {
    rows: Vec<Vec<(usize, C64)>>,
}

impl SparseRows {
    pub fn from_dense(m: &CMatrix) -> Self {
        let rows = (0..m.nrows())
            .map(|i| {
                (0..m.ncols())
                    .filter(|&j| m[(i, j)] != C64::new(0.0, 0.0))
                    .map(|j| (j, m[(i, j)]))
                    .collect()
            })
            .collect();
        SparseRows { rows }
    }

    /// `self · h`.
    pub fn mul_dense(&self, h: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.rows.len(), h.ncols());
        for c in 0..h.ncols() {
            let col = h.column(c);
            for (i, row) in self.rows.iter().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for &(j, v) in row {
                    acc += v * col[j];
                }
                out[(i, c)] = acc;
            }
        }
        out
    }
}

/// Truncated `P̂(z) = Σ_{n=0}^{n_max} z^n P_t^n`, by Horner's rule.
pub fn p_hat_truncated(tower: &TowerModel, z: C64, t: Freq, n_max: usize) -> CMatrix {
    let p = SparseRows::from_dense(&assemble_p_t(tower, t));
    let id = CMatrix::identity(tower.len(), tower.len());
    let mut h = id.clone();
    for _ in 0..n_max {
        h = &id + p.mul_dense(&h) * z;
    }
    h
}

/// The four renewal operators at `(z, t)`.
#[derive(Debug, Clone)]
pub struct RenewalOperators {
    /// Base → base, first-return generating function.
    pub r_hat: CMatrix,
    /// Base → tower, climbing from level 0.
    pub a_hat: CMatrix,
    /// Tower → base, first arrival at the base.
    pub b_hat: CMatrix,
    /// Tower → tower, paths that stay above the base.
    pub e_hat: CMatrix,
}

/// `R̂(z, t) v = R(z^σ e^{it·κ_σ} v)`.
pub fn assemble_r_hat(tower: &TowerModel, z: C64, t: Freq) -> CMatrix {
    let base = &tower.base;
    let k = base.alphabet_size;
    let mut r = CMatrix::zeros(k, k);
    for a in 0..k {
        let f = z.powu(base.sigma[a] as u32) * phase(base.kappa_sigma(a), t);
        for b in 0..k {
            r[(b, a)] = f * base_weight(tower, a, b);
        }
    }
    r
}

/// `∂R̂/∂z`.
pub fn assemble_dr_hat_dz(tower: &TowerModel, z: C64, t: Freq) -> CMatrix {
    let base = &tower.base;
    let k = base.alphabet_size;
    let mut r = CMatrix::zeros(k, k);
    for a in 0..k {
        let s = base.sigma[a] as u32;
        let f = z.powu(s - 1) * s as f64 * phase(base.kappa_sigma(a), t);
        for b in 0..k {
            r[(b, a)] = f * base_weight(tower, a, b);
        }
    }
    r
}

pub fn assemble_renewal_operators(tower: &TowerModel, z: C64, t: Freq) -> RenewalOperators {
    let base = &tower.base;
    let k = base.alphabet_size;
    let s = tower.len();
    let mut a_hat = CMatrix::zeros(s, k);
    let mut b_hat = CMatrix::zeros(k, s);
    let mut e_hat = CMatrix::zeros(s, s);
    for (x, &(y, l)) in tower.states.iter().enumerate() {
        let sigma = base.sigma[y];
        a_hat[(x, y)] = z.powu(l as u32) * phase(partial_kappa(tower, y, 0, l), t);
        if l == 0 {
            b_hat[(y, x)] = C64::new(1.0, 0.0);
        } else {
            let f = z.powu((sigma - l) as u32) * phase(partial_kappa(tower, y, l, sigma), t);
            for b in 0..k {
                b_hat[(b, x)] = f * base_weight(tower, y, b);
            }
            for lp in 1..=l {
                let src = tower.offsets[y] + lp;
                e_hat[(x, src)] = z.powu((l - lp) as u32) * phase(partial_kappa(tower, y, lp, l), t);
            }
        }
    }
    RenewalOperators {
        r_hat: assemble_r_hat(tower, z, t),
        a_hat,
        b_hat,
        e_hat,
    }
}

/// Maximum absolute row sum: the operator norm induced by the sup norm.
pub fn sup_norm(m: &CMatrix) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}
