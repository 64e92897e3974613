//! Finite Young towers over Gibbs–Markov bases.
//!
//! A base symbol `a` returns after `σ(a)` steps; the tower has states
//! `(a, ℓ)` with `0 ≤ ℓ < σ(a)`, climbs deterministically and jumps from the
//! top level `(a, σ(a)−1)` to `(b, 0)` with probability `K(a, b)`. Each state
//! carries an integer displacement `κ(a, ℓ)`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::SlowlyVaryingFn;
use crate::Cell;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TowerError {
    #[error("invalid base: {0}")]
    InvalidBase(String),
    #[error("displacement mass {defect:e} left the truncation box")]
    TruncationLoss { defect: f64 },
}

/// Finite-alphabet Markov base with return times and level displacements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsMarkovBase {
    pub alphabet_size: usize,
    /// Row-stochastic `K(a, b)`.
    pub transition: Vec<Vec<f64>>,
    /// Stationary probability vector `μ_Y`.
    pub base_measure: Vec<f64>,
    pub sigma: Vec<usize>,
    /// `kappa_levels[a][ℓ] = κ(a, ℓ)` for `ℓ < σ(a)`.
    pub kappa_levels: Vec<Vec<Cell>>,
    /// 1 or 2; for 1 the second coordinate of every `κ` is zero.
    pub dimension: usize,
    /// Period: every `σ(a)` is a multiple of `q`.
    pub q: usize,
}

/// Stationary vector of a row-stochastic matrix by a dense linear solve.
pub fn stationary(transition: &[Vec<f64>]) -> Option<Vec<f64>> {
    let n = transition.len();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = transition[j][i] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let x = a.lu().solve(&b)?;
    Some(x.iter().copied().collect())
}

impl GibbsMarkovBase {
    /// Builds a base, computing `μ_Y` from the transition matrix.
    pub fn new(
        transition: Vec<Vec<f64>>,
        sigma: Vec<usize>,
        kappa_levels: Vec<Vec<Cell>>,
        dimension: usize,
        q: usize,
    ) -> Result<Self, TowerError> {
        let base_measure = stationary(&transition)
            .ok_or_else(|| TowerError::InvalidBase("transition has no unique stationary law".into()))?;
        let base = Self {
            alphabet_size: transition.len(),
            transition,
            base_measure,
            sigma,
            kappa_levels,
            dimension,
            q,
        };
        base.validate()?;
        Ok(base)
    }

    /// Independent base: every row equals `measure`.
    pub fn iid(
        measure: Vec<f64>,
        sigma: Vec<usize>,
        kappa_levels: Vec<Vec<Cell>>,
        dimension: usize,
        q: usize,
    ) -> Result<Self, TowerError> {
        let base = Self {
            alphabet_size: measure.len(),
            transition: vec![measure.clone(); measure.len()],
            base_measure: measure,
            sigma,
            kappa_levels,
            dimension,
            q,
        };
        base.validate()?;
        Ok(base)
    }

    /// True when all rows of the transition matrix coincide.
    pub fn is_iid(&self) -> bool {
        self.transition.iter().all(|r| r == &self.transition[0])
    }

    /// `κ_σ(a) = Σ_ℓ κ(a, ℓ)`.
    pub fn kappa_sigma(&self, a: usize) -> Cell {
        self.kappa_levels[a]
            .iter()
            .fold([0, 0], |s, k| [s[0] + k[0], s[1] + k[1]])
    }

    /// `ψ(a) = Σ_ℓ |κ(a, ℓ)|` with the Euclidean norm.
    pub fn psi(&self, a: usize) -> f64 {
        self.kappa_levels[a]
            .iter()
            .map(|k| crate::bounds::lattice_norm(*k))
            .sum()
    }

    pub fn max_step(&self) -> i64 {
        self.kappa_levels
            .iter()
            .flatten()
            .map(|k| k[0].abs().max(k[1].abs()))
            .max()
            .unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), TowerError> {
        let bad = |m: String| Err(TowerError::InvalidBase(m));
        let n = self.alphabet_size;
        if n < 2 {
            return bad(format!("alphabet_size {n} < 2"));
        }
        if self.transition.len() != n
            || self.base_measure.len() != n
            || self.sigma.len() != n
            || self.kappa_levels.len() != n
        {
            return bad("array lengths disagree with alphabet_size".into());
        }
        if !(self.dimension == 1 || self.dimension == 2) {
            return bad(format!("dimension {} not in {{1, 2}}", self.dimension));
        }
        if self.q == 0 {
            return bad("q = 0".into());
        }
        for (a, row) in self.transition.iter().enumerate() {
            if row.len() != n || row.iter().any(|p| !(*p >= 0.0)) {
                return bad(format!("transition row {a} is not a nonnegative vector"));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return bad(format!("transition row {a} sums to {s}"));
            }
        }
        if self.base_measure.iter().any(|p| !(*p > 0.0)) {
            return bad("base_measure must be positive".into());
        }
        if (self.base_measure.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return bad("base_measure does not sum to 1".into());
        }
        let mut pushed = vec![0.0; n];
        for (row, &m) in self.transition.iter().zip(&self.base_measure) {
            for (acc, p) in pushed.iter_mut().zip(row) {
                *acc += m * p;
            }
        }
        for (b, pushed) in pushed.into_iter().enumerate() {
            if (pushed - self.base_measure[b]).abs() > 1e-12 {
                return bad(format!("base_measure not stationary at symbol {b}"));
            }
        }
        for a in 0..n {
            let s = self.sigma[a];
            if s == 0 || s % self.q != 0 {
                return bad(format!("sigma[{a}] = {s} not a positive multiple of q = {}", self.q));
            }
            if self.kappa_levels[a].len() != s {
                return bad(format!(
                    "kappa_levels[{a}] has {} levels, sigma = {s}",
                    self.kappa_levels[a].len()
                ));
            }
            if self.dimension == 1 && self.kappa_levels[a].iter().any(|k| k[1] != 0) {
                return bad(format!("kappa_levels[{a}] has a second component in d = 1"));
            }
        }
        let mut mean = [0.0_f64; 2];
        let mut scale = 0.0_f64;
        for a in 0..n {
            let k = self.kappa_sigma(a);
            for i in 0..2 {
                mean[i] += self.base_measure[a] * k[i] as f64;
                scale += self.base_measure[a] * (k[i] as f64).abs();
            }
        }
        if mean.iter().any(|m| m.abs() > 1e-12 * scale.max(1.0)) {
            return bad(format!("nonzero mean displacement {mean:?}"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("base serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, crate::Error> {
        let base: Self = serde_json::from_str(s)?;
        base.validate()?;
        Ok(base)
    }
}

/// How the displacement of a heavy-tailed symbol is laid out on its column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SigmaProfile {
    /// `σ ≡ 1`, `κ(a_m^±, 0) = ±m`.
    Unit,
    /// `σ ≡ levels`, with `±m` split as evenly as possible over the levels.
    Spread(usize),
    /// `σ(a_m^±) = 1 + (m − 1) mod period`, with `±m` on the top level.
    Cyclic(usize),
}

/// Symmetric heavy-tailed i.i.d. model on `{a_m^± : 1 ≤ m ≤ m_max}` with
/// `μ_Y(a_m^±) = c / (2 m^exponent)`. Symbols are ordered
/// `a_1^+, a_1^-, a_2^+, …`.
pub fn make_heavy_tailed_model(
    m_max: usize,
    tail_exponent: f64,
    profile: SigmaProfile,
) -> Result<GibbsMarkovBase, TowerError> {
    if m_max < 2 {
        return Err(TowerError::InvalidBase(format!("m_max = {m_max} < 2")));
    }
    let c = heavy_tail_constant(m_max, tail_exponent);
    let mut measure = Vec::with_capacity(2 * m_max);
    let mut sigma = Vec::with_capacity(2 * m_max);
    let mut kappa = Vec::with_capacity(2 * m_max);
    for m in 1..=m_max {
        let p = c / (2.0 * (m as f64).powf(tail_exponent));
        for sign in [1_i64, -1] {
            measure.push(p);
            let levels = match profile {
                SigmaProfile::Unit => vec![[sign * m as i64, 0]],
                SigmaProfile::Spread(l) => {
                    let (q, r) = (m / l, m % l);
                    (0..l).map(|i| [sign * (q + usize::from(i < r)) as i64, 0]).collect()
                }
                SigmaProfile::Cyclic(period) => {
                    let s = 1 + (m - 1) % period;
                    let mut v = vec![[0, 0]; s];
                    v[s - 1] = [sign * m as i64, 0];
                    v
                }
            };
            sigma.push(levels.len());
            kappa.push(levels);
        }
    }
    GibbsMarkovBase::iid(measure, sigma, kappa, 1, 1)
}

/// `c = 1 / Σ_{m ≤ m_max} m^{−exponent}`.
pub fn heavy_tail_constant(m_max: usize, exponent: f64) -> f64 {
    1.0 / (1..=m_max).map(|m| (m as f64).powf(-exponent)).sum::<f64>()
}

/// Fair ±1 steps.
pub fn bernoulli() -> GibbsMarkovBase {
    GibbsMarkovBase::iid(vec![0.5, 0.5], vec![1, 1], vec![vec![[1, 0]], vec![[-1, 0]]], 1, 1).expect("valid model")
}

/// Two-level Bernoulli tower: `σ = (2, 2)`, period 2, `κ(±, 0) = ±1`.
pub fn two_level_bernoulli() -> GibbsMarkovBase {
    GibbsMarkovBase::iid(
        vec![0.5, 0.5],
        vec![2, 2],
        vec![vec![[1, 0], [0, 0]], vec![[-1, 0], [0, 0]]],
        1,
        2,
    )
    .expect("valid model")
}

/// Random Markov base whose symbols come in pairs `(a^+, a^-)` exchanged by
/// a symmetry flipping the sign of `κ`; the law of `κ_n` is then symmetric.
///
/// Pair `i` gets return time `sigma_choices[i mod len]`, so every listed
/// value occurs once `pairs ≥ sigma_choices.len()`.
pub fn random_symmetric_tower(
    seed: u64,
    pairs: usize,
    sigma_choices: &[usize],
    kappa_max: i64,
    dimension: usize,
    q: usize,
) -> Result<GibbsMarkovBase, TowerError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 2 * pairs;
    // w[i][j][same?] weights between pair classes.
    let w: Vec<Vec<[f64; 2]>> = (0..pairs)
        .map(|_| {
            (0..pairs)
                .map(|_| [rng.random_range(0.1..1.0), rng.random_range(0.1..1.0)])
                .collect()
        })
        .collect();
    let mut transition = vec![vec![0.0; n]; n];
    for i in 0..pairs {
        let total: f64 = w[i].iter().map(|x| x[0] + x[1]).sum();
        for s in 0..2 {
            for j in 0..pairs {
                for s2 in 0..2 {
                    let same = usize::from(s == s2);
                    transition[2 * i + s][2 * j + s2] = w[i][j][same] / total;
                }
            }
        }
    }
    let mut sigma = vec![0; n];
    let mut kappa = vec![Vec::new(); n];
    for i in 0..pairs {
        let s = sigma_choices[i % sigma_choices.len()];
        let levels: Vec<Cell> = (0..s)
            .map(|_| {
                let x = rng.random_range(-kappa_max..=kappa_max);
                let y = if dimension == 2 {
                    rng.random_range(-kappa_max..=kappa_max)
                } else {
                    0
                };
                [x, y]
            })
            .collect();
        sigma[2 * i] = s;
        sigma[2 * i + 1] = s;
        kappa[2 * i + 1] = levels.iter().map(|k| [-k[0], -k[1]]).collect();
        kappa[2 * i] = levels;
    }
    // Exact symmetry of μ_Y: average the solved vector over each pair.
    let mut base_measure =
        stationary(&transition).ok_or_else(|| TowerError::InvalidBase("singular random chain".into()))?;
    for i in 0..pairs {
        let m = 0.5 * (base_measure[2 * i] + base_measure[2 * i + 1]);
        base_measure[2 * i] = m;
        base_measure[2 * i + 1] = m;
    }
    let base = GibbsMarkovBase {
        alphabet_size: n,
        transition,
        base_measure,
        sigma,
        kappa_levels: kappa,
        dimension,
        q,
    };
    base.validate()?;
    Ok(base)
}

/// Swap-symmetric aperiodic Markov model with `σ ∈ {1, 2, 3}`.
pub fn markov_aperiodic() -> GibbsMarkovBase {
    random_symmetric_tower(17, 3, &[1, 2, 3], 3, 1, 1).expect("valid model")
}

/// Swap-symmetric Markov model of period 2 with `σ ∈ {2, 4}`.
pub fn markov_period_two() -> GibbsMarkovBase {
    random_symmetric_tower(29, 3, &[2, 4], 2, 1, 2).expect("valid model")
}

/// Named models used across the test suites.
pub fn shipped_models() -> Vec<(&'static str, GibbsMarkovBase)> {
    vec![
        ("bernoulli", bernoulli()),
        (
            "heavy-tailed-2",
            make_heavy_tailed_model(2, 3.0, SigmaProfile::Unit).expect("valid"),
        ),
        (
            "heavy-tailed-64",
            make_heavy_tailed_model(64, 3.0, SigmaProfile::Unit).expect("valid"),
        ),
        (
            "heavy-tailed-16-cyclic",
            make_heavy_tailed_model(16, 3.0, SigmaProfile::Cyclic(3)).expect("valid"),
        ),
        ("two-level-bernoulli", two_level_bernoulli()),
        ("markov-aperiodic", markov_aperiodic()),
        ("markov-period-two", markov_period_two()),
    ]
}

/// Young tower of a base, states in `(symbol, level)` lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct TowerModel {
    pub base: GibbsMarkovBase,
    pub states: Vec<(usize, usize)>,
    /// Index of `(a, 0)` for each symbol `a`.
    pub offsets: Vec<usize>,
    /// `μ_Δ(a, ℓ) = μ_Y(a) / σ̄`.
    pub measure: Vec<f64>,
    pub sigma_bar: f64,
    pub kappa: Vec<Cell>,
    /// `ψ(a)` per symbol.
    pub psi: Vec<f64>,
    /// Cached [`GibbsMarkovBase::is_iid`], which costs a full pass over the
    /// transition matrix.
    pub iid: bool,
}

pub fn build_tower(base: &GibbsMarkovBase) -> Result<TowerModel, TowerError> {
    base.validate()?;
    let mut states = Vec::new();
    let mut offsets = Vec::with_capacity(base.alphabet_size);
    let mut kappa = Vec::new();
    for a in 0..base.alphabet_size {
        offsets.push(states.len());
        for l in 0..base.sigma[a] {
            states.push((a, l));
            kappa.push(base.kappa_levels[a][l]);
        }
    }
    let sigma_bar: f64 = (0..base.alphabet_size)
        .map(|a| base.base_measure[a] * base.sigma[a] as f64)
        .sum();
    let measure = states.iter().map(|&(a, _)| base.base_measure[a] / sigma_bar).collect();
    let psi = (0..base.alphabet_size).map(|a| base.psi(a)).collect();
    Ok(TowerModel {
        base: base.clone(),
        states,
        offsets,
        measure,
        sigma_bar,
        kappa,
        psi,
        iid: base.is_iid(),
    })
}

impl TowerModel {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.base.dimension
    }

    /// True when `(a, ℓ)` is the top of its column.
    pub fn is_top(&self, state: usize) -> bool {
        let (a, l) = self.states[state];
        l + 1 == self.base.sigma[a]
    }

    /// Pushes a measure on states one step forward through the tower map.
    pub fn push_forward(&self, m: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for (x, &(a, _)) in self.states.iter().enumerate() {
            if self.is_top(x) {
                for b in 0..self.base.alphabet_size {
                    out[self.offsets[b]] += m[x] * self.base.transition[a][b];
                }
            } else {
                out[x + 1] += m[x];
            }
        }
        out
    }
}

/// Joint law of (current state, accumulated displacement) on a box
/// `[−bound, bound]^d`, stored densely per state.
#[derive(Debug, Clone, PartialEq)]
pub struct JointLaw {
    pub steps: usize,
    pub bound: i64,
    pub dimension: usize,
    pub mass: Vec<Vec<f64>>,
    /// Mass pushed outside the box so far.
    pub defect: f64,
}

impl JointLaw {
    fn width(&self) -> usize {
        (2 * self.bound + 1) as usize
    }

    fn index(&self, k: Cell) -> Option<usize> {
        let w = self.width() as i64;
        let (x, y) = (k[0] + self.bound, k[1] + self.bound);
        let in_range = |v: i64| (0..w).contains(&v);
        if self.dimension == 1 {
            (in_range(x) && k[1] == 0).then_some(x as usize)
        } else {
            (in_range(x) && in_range(y)).then_some((y * w + x) as usize)
        }
    }

    fn cell(&self, i: usize) -> Cell {
        let w = self.width();
        if self.dimension == 1 {
            [i as i64 - self.bound, 0]
        } else {
            [(i % w) as i64 - self.bound, (i / w) as i64 - self.bound]
        }
    }

    /// Stationary start: `μ_Δ` at displacement zero.
    pub fn initial(tower: &TowerModel, bound: i64) -> Self {
        let d = tower.dimension();
        let w = (2 * bound + 1) as usize;
        let size = if d == 1 { w } else { w * w };
        let mut law = Self {
            steps: 0,
            bound,
            dimension: d,
            mass: vec![vec![0.0; size]; tower.len()],
            defect: 0.0,
        };
        let zero = law.index([0, 0]).expect("origin inside box");
        for (x, m) in tower.measure.iter().enumerate() {
            law.mass[x][zero] = *m;
        }
        law
    }

    /// Advances the joint law `n` steps: displacement `κ(x)` is added when
    /// leaving state `x`.
    pub fn advance(&mut self, tower: &TowerModel, n: usize) {
        let size = self.mass[0].len();
        let iid = tower.iid;
        let mut shifted = vec![0.0; size];
        for _ in 0..n {
            let mut next = vec![vec![0.0; size]; tower.len()];
            let mut exit = vec![0.0; size];
            for x in 0..tower.len() {
                self.defect += shift_into(self, &self.mass[x], tower.kappa[x], &mut shifted);
                let (a, _) = tower.states[x];
                if !tower.is_top(x) {
                    add_into(&mut next[x + 1], &shifted, 1.0);
                } else if iid {
                    add_into(&mut exit, &shifted, 1.0);
                } else {
                    for b in 0..tower.base.alphabet_size {
                        let p = tower.base.transition[a][b];
                        if p > 0.0 {
                            add_into(&mut next[tower.offsets[b]], &shifted, p);
                        }
                    }
                }
            }
            if iid {
                for b in 0..tower.base.alphabet_size {
                    add_into(&mut next[tower.offsets[b]], &exit, tower.base.base_measure[b]);
                }
            }
            self.mass = next;
            self.steps += 1;
        }
    }

    /// Marginal law of the displacement.
    pub fn displacement_law(&self) -> BTreeMap<Cell, f64> {
        let mut out = BTreeMap::new();
        for i in 0..self.mass[0].len() {
            let p: f64 = self.mass.iter().map(|m| m[i]).sum();
            if p > 0.0 {
                out.insert(self.cell(i), p);
            }
        }
        out
    }
}

/// Writes `src` translated by `k` into `dst`, returning the mass that fell
/// outside the box.
fn shift_into(law: &JointLaw, src: &[f64], k: Cell, dst: &mut [f64]) -> f64 {
    dst.iter_mut().for_each(|v| *v = 0.0);
    let mut lost = 0.0;
    for (i, &m) in src.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        let c = law.cell(i);
        match law.index([c[0] + k[0], c[1] + k[1]]) {
            Some(j) => dst[j] = m,
            None => lost += m,
        }
    }
    lost
}

fn add_into(dst: &mut [f64], src: &[f64], w: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += w * s;
    }
}

/// Exact law of `κ_n` under `μ_Δ`, by dynamic programming over
/// (state, displacement). Fails if any mass leaves `[−bound, bound]^d`.
pub fn exact_displacement_law(
    tower: &TowerModel,
    n: usize,
    support_bound: i64,
) -> Result<BTreeMap<Cell, f64>, TowerError> {
    let mut law = JointLaw::initial(tower, support_bound);
    law.advance(tower, n);
    if law.defect > 0.0 {
        return Err(TowerError::TruncationLoss { defect: law.defect });
    }
    Ok(law.displacement_law())
}

/// Exact `μ_Y(ψ > m)` with reference envelopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiTail {
    pub m: Vec<u64>,
    pub tail: Vec<f64>,
    /// `m^{-2}`.
    pub envelope_square: Vec<f64>,
    /// `m^{-2} (log m)² ℓ₁(m / log m)`.
    pub envelope_log: Vec<f64>,
    /// `sup_m m² μ_Y(ψ > m)`.
    pub sup_m2_tail: f64,
    /// `sup_m μ_Y(ψ > m) / envelope_log(m)`.
    pub sup_log_ratio: f64,
}

pub fn psi_tail_curve(base: &GibbsMarkovBase, ell1: &SlowlyVaryingFn) -> PsiTail {
    use crate::bounds::safe_log;
    let psi: Vec<f64> = (0..base.alphabet_size).map(|a| base.psi(a)).collect();
    let top = psi.iter().cloned().fold(0.0, f64::max).ceil() as u64;
    let mut out = PsiTail {
        m: Vec::new(),
        tail: Vec::new(),
        envelope_square: Vec::new(),
        envelope_log: Vec::new(),
        sup_m2_tail: 0.0,
        sup_log_ratio: 0.0,
    };
    for m in 1..=top.max(1) {
        let mf = m as f64;
        let tail: f64 = psi
            .iter()
            .zip(&base.base_measure)
            .filter(|(p, _)| **p > mf)
            .map(|(_, w)| w)
            .sum();
        let l = safe_log(mf);
        let env_sq = mf.powi(-2);
        let env_log = env_sq * l * l * ell1.eval(mf / l);
        out.sup_m2_tail = out.sup_m2_tail.max(mf * mf * tail);
        out.sup_log_ratio = out.sup_log_ratio.max(tail / env_log);
        out.m.push(m);
        out.tail.push(tail);
        out.envelope_square.push(env_sq);
        out.envelope_log.push(env_log);
    }
    out
}
