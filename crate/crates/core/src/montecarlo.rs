//! Reproducible Monte Carlo over the Liouville measure.
//!
//! Sample `i` of a campaign with seed `s` is drawn from
//! `ChaCha8Rng::seed_from_u64(s)` on stream `i`, so results depend only on
//! `(seed, sample count)` and never on how work is split across threads.
//! Partial results combine by summing counts.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{step_norm, BilliardTable, DynamicsError, PhasePoint, Trajectory};
use crate::stats::{binomial_se, fit_line};
use crate::Cell;

/// Samples per work unit. Fixed so chunking never depends on `workers`.
const CHUNK: u64 = 2048;

#[derive(Debug, Error)]
pub enum McError {
    #[error("no threshold in the fit window has at least {min} exceedances")]
    FitWindowEmpty { min: u64 },
    #[error("cannot merge histograms: {0}")]
    Incompatible(String),
    #[error("thresholds must be increasing and at least 1")]
    BadThresholds,
    #[error("thread pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Deterministic sampler of Liouville-distributed phase points.
#[derive(Debug, Clone)]
pub struct LiouvilleSampler<'a> {
    table: &'a BilliardTable,
    seed: u64,
}

impl<'a> LiouvilleSampler<'a> {
    pub fn new(table: &'a BilliardTable, seed: u64) -> Self {
        Self { table, seed }
    }

    /// Generator for sample `index`.
    pub fn rng(&self, index: u64) -> ChaCha8Rng {
        sample_rng(self.seed, index)
    }

    pub fn sample(&self, index: u64) -> PhasePoint {
        sample_phase_point(self.table, &mut self.rng(index))
    }
}

pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniform boundary position and `sin φ` uniform on `(−1, 1)`, which is the
/// density `cos φ / 2` in `φ`.
pub fn sample_phase_point<R: Rng>(table: &BilliardTable, rng: &mut R) -> PhasePoint {
    let s: f64 = rng.sample(Open01);
    let u: f64 = rng.sample(Open01);
    table.point_at(s * table.total_arclength(), 2.0 * u - 1.0)
}

/// Runs `f` on every chunk of sample indices in a pool of `workers` threads
/// and folds the chunk results with `merge`.
fn parallel_chunks<T, F, M>(
    total: u64,
    workers: usize,
    identity: impl Fn() -> T + Sync + Send,
    f: F,
    merge: M,
) -> Result<T, McError>
where
    T: Send,
    F: Fn(std::ops::Range<u64>) -> T + Sync + Send,
    M: Fn(T, T) -> T + Sync + Send,
{
    let chunks: Vec<std::ops::Range<u64>> = (0..total.div_ceil(CHUNK))
        .map(|c| c * CHUNK..((c + 1) * CHUNK).min(total))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| McError::Pool(e.to_string()))?;
    Ok(pool.install(|| chunks.into_par_iter().map(&f).reduce(&identity, &merge)))
}

/// Empirical law of `κ_n` on exact lattice keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplacementHistogram {
    pub n: u64,
    pub dimension: usize,
    pub counts: BTreeMap<Cell, u64>,
    pub total_samples: u64,
    pub overflow_count: u64,
    pub seed: u64,
    pub config_digest: String,
}

/// Metadata persisted next to a histogram CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramMeta {
    pub n: u64,
    pub dimension: usize,
    pub seed: u64,
    pub total_samples: u64,
    pub overflow_count: u64,
    pub config_digest: String,
    pub wall_time_s: f64,
}

impl DisplacementHistogram {
    pub fn empty(n: u64, dimension: usize, seed: u64, config_digest: &str) -> Self {
        Self {
            n,
            dimension,
            counts: BTreeMap::new(),
            total_samples: 0,
            overflow_count: 0,
            seed,
            config_digest: config_digest.to_string(),
        }
    }

    pub fn count(&self, k: Cell) -> u64 {
        self.counts.get(&k).copied().unwrap_or(0)
    }

    /// Empirical probability of `κ_n = k`.
    pub fn probability(&self, k: Cell) -> f64 {
        self.count(k) as f64 / self.total_samples as f64
    }

    pub fn stderr(&self, k: Cell) -> f64 {
        binomial_se(self.probability(k), self.total_samples)
    }

    /// Adds the counts of `other`; `(n, config_digest)` must agree.
    pub fn merge(&mut self, other: &DisplacementHistogram) -> Result<(), McError> {
        if self.n != other.n || self.config_digest != other.config_digest || self.dimension != other.dimension {
            return Err(McError::Incompatible(format!(
                "(n={}, {}) vs (n={}, {})",
                self.n, self.config_digest, other.n, other.config_digest
            )));
        }
        for (k, c) in &other.counts {
            *self.counts.entry(*k).or_insert(0) += c;
        }
        self.total_samples += other.total_samples;
        self.overflow_count += other.overflow_count;
        Ok(())
    }

    /// Atoms `(value, count)` of the first coordinate, sorted by value.
    pub fn marginal_x(&self) -> Vec<(i64, u64)> {
        let mut m: BTreeMap<i64, u64> = BTreeMap::new();
        for (k, c) in &self.counts {
            *m.entry(k[0]).or_insert(0) += c;
        }
        m.into_iter().collect()
    }

    /// Second moment matrix of `κ_n` over completed samples.
    pub fn covariance(&self) -> [[f64; 2]; 2] {
        let done = (self.total_samples - self.overflow_count) as f64;
        let mut c = [[0.0; 2]; 2];
        for (k, n) in &self.counts {
            let w = *n as f64 / done;
            for i in 0..2 {
                for j in 0..2 {
                    c[i][j] += w * k[i] as f64 * k[j] as f64;
                }
            }
        }
        c
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), crate::Error> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["n", "kappa_x"];
        if self.dimension == 2 {
            header.push("kappa_y");
        }
        header.push("count");
        w.write_record(&header)?;
        for (k, c) in &self.counts {
            let mut rec = vec![self.n.to_string(), k[0].to_string()];
            if self.dimension == 2 {
                rec.push(k[1].to_string());
            }
            rec.push(c.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn meta(&self, wall_time_s: f64) -> HistogramMeta {
        HistogramMeta {
            n: self.n,
            dimension: self.dimension,
            seed: self.seed,
            total_samples: self.total_samples,
            overflow_count: self.overflow_count,
            config_digest: self.config_digest.clone(),
            wall_time_s,
        }
    }

    /// Rebuilds a histogram from its CSV body and metadata.
    pub fn read_csv<R: Read>(input: R, meta: &HistogramMeta) -> Result<Self, crate::Error> {
        let mut h = Self::empty(meta.n, meta.dimension, meta.seed, &meta.config_digest);
        h.total_samples = meta.total_samples;
        h.overflow_count = meta.overflow_count;
        let mut r = csv::Reader::from_reader(input);
        for rec in r.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<i64, crate::Error> {
                rec.get(i)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| crate::Error::Config(format!("bad histogram row {rec:?}")))
            };
            let (k, c) = if meta.dimension == 2 {
                ([parse(1)?, parse(2)?], parse(3)?)
            } else {
                ([parse(1)?, 0], parse(2)?)
            };
            h.counts.insert(k, c as u64);
        }
        Ok(h)
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str, wall_time_s: f64) -> Result<(), crate::Error> {
        self.write_csv(std::fs::File::create(dir.join(format!("{stem}.csv")))?)?;
        let meta = serde_json::to_string_pretty(&self.meta(wall_time_s))?;
        std::fs::write(dir.join(format!("{stem}.json")), meta)?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self, crate::Error> {
        let meta: HistogramMeta = serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
        Self::read_csv(std::fs::File::open(dir.join(format!("{stem}.csv")))?, &meta)
    }
}

/// Histograms of `κ_n` for every `n` in `n_values`, read off one trajectory
/// per sample.
pub fn estimate_displacement_laws(
    table: &BilliardTable,
    n_values: &[u64],
    total_samples: u64,
    seed: u64,
    workers: usize,
) -> Result<Vec<DisplacementHistogram>, McError> {
    let mut ns = n_values.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let n_max = ns.last().copied().unwrap_or(0);
    let d = table.dimension();
    let digest = table.config().digest();
    let sampler = LiouvilleSampler::new(table, seed);
    let empty = || -> Vec<DisplacementHistogram> {
        ns.iter()
            .map(|&n| DisplacementHistogram::empty(n, d, seed, &digest))
            .collect()
    };
    let run_chunk = |range: std::ops::Range<u64>| {
        let mut hs = empty();
        for i in range {
            let mut orbit = Trajectory::new(table, sampler.sample(i));
            let mut kappa = [0_i64; 2];
            let mut next = 0;
            let mut step = 0;
            while next < ns.len() {
                while step < ns[next] {
                    match orbit.advance() {
                        Ok(f) => {
                            kappa[0] += f.kappa[0];
                            kappa[1] += f.kappa[1];
                            step += 1;
                        }
                        Err(_) => break,
                    }
                }
                if step < ns[next] {
                    break;
                }
                *hs[next].counts.entry(kappa).or_insert(0) += 1;
                next += 1;
            }
            for h in &mut hs {
                h.total_samples += 1;
            }
            for h in &mut hs[next..] {
                h.overflow_count += 1;
            }
        }
        hs
    };
    let merge = |mut a: Vec<DisplacementHistogram>, b: Vec<DisplacementHistogram>| {
        for (x, y) in a.iter_mut().zip(&b) {
            x.merge(y).expect("same campaign");
        }
        a
    };
    if n_max == 0 {
        let mut hs = empty();
        for h in &mut hs {
            h.total_samples = total_samples;
            h.counts.insert([0, 0], total_samples);
        }
        return Ok(hs);
    }
    parallel_chunks(total_samples, workers, empty, run_chunk, merge)
}

/// Histogram of `κ_n` for a single `n`.
pub fn estimate_displacement_law(
    table: &BilliardTable,
    n: u64,
    total_samples: u64,
    seed: u64,
    workers: usize,
) -> Result<DisplacementHistogram, McError> {
    Ok(estimate_displacement_laws(table, &[n], total_samples, seed, workers)?.remove(0))
}

/// Empirical survival `μ(|κ| > m)` of one free flight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailCurve {
    pub thresholds: Vec<u64>,
    pub exceedances: Vec<u64>,
    pub survival: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub fitted_exponent: f64,
    /// Thresholds actually used by the fit.
    pub fit_window: (u64, u64),
    pub total_samples: u64,
    pub overflow_count: u64,
}

/// Minimal exceedance count for a threshold to enter the fit.
pub const MIN_FIT_EXCEEDANCES: u64 = 100;

/// Estimates the one-step tail and fits `log survival` against `log m` over
/// the thresholds in `window` with enough exceedances.
pub fn estimate_tail(
    table: &BilliardTable,
    total_samples: u64,
    seed: u64,
    thresholds: &[u64],
    window: (u64, u64),
    workers: usize,
) -> Result<TailCurve, McError> {
    if thresholds.is_empty() || thresholds[0] < 1 || thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(McError::BadThresholds);
    }
    let sampler = LiouvilleSampler::new(table, seed);
    let k = thresholds.len();
    let thr: Vec<f64> = thresholds.iter().map(|&m| m as f64).collect();
    // Slot j counts flights whose norm exceeds exactly j thresholds.
    let run_chunk = |range: std::ops::Range<u64>| {
        let mut slots = vec![0_u64; k + 2];
        for i in range {
            match table.next_collision(&sampler.sample(i)) {
                Ok(f) => {
                    let norm = step_norm(f.kappa);
                    let j = thr.partition_point(|&m| norm > m);
                    slots[j] += 1;
                }
                Err(_) => slots[k + 1] += 1,
            }
        }
        slots
    };
    let slots = parallel_chunks(
        total_samples,
        workers,
        || vec![0_u64; k + 2],
        run_chunk,
        |mut a, b| {
            for (x, y) in a.iter_mut().zip(&b) {
                *x += y;
            }
            a
        },
    )?;
    let overflow_count = slots[k + 1];
    let mut exceedances = vec![0_u64; k];
    let mut acc = 0;
    for j in (0..k).rev() {
        acc += slots[j + 1];
        exceedances[j] = acc;
    }
    let survival: Vec<f64> = exceedances.iter().map(|&e| e as f64 / total_samples as f64).collect();
    let standard_errors = survival.iter().map(|&p| binomial_se(p, total_samples)).collect();
    let used: Vec<usize> = (0..k)
        .filter(|&j| thresholds[j] >= window.0 && thresholds[j] <= window.1 && exceedances[j] >= MIN_FIT_EXCEEDANCES)
        .collect();
    if used.len() < 2 {
        return Err(McError::FitWindowEmpty {
            min: MIN_FIT_EXCEEDANCES,
        });
    }
    let lx: Vec<f64> = used.iter().map(|&j| thr[j].ln()).collect();
    let ly: Vec<f64> = used.iter().map(|&j| survival[j].ln()).collect();
    let fit = fit_line(&lx, &ly).expect("distinct thresholds");
    Ok(TailCurve {
        thresholds: thresholds.to_vec(),
        exceedances,
        survival,
        standard_errors,
        fitted_exponent: fit.slope,
        fit_window: (thresholds[used[0]], thresholds[*used.last().unwrap()]),
        total_samples,
        overflow_count,
    })
}

impl TailCurve {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), crate::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["threshold", "exceedances", "survival", "stderr"])?;
        for j in 0..self.thresholds.len() {
            w.write_record(&[
                self.thresholds[j].to_string(),
                self.exceedances[j].to_string(),
                format!("{:e}", self.survival[j]),
                format!("{:e}", self.standard_errors[j]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Probabilities of the events splitting a large `S_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlightDecomposition {
    pub n: u64,
    pub n_norm: f64,
    /// `μ̂(S_n ≥ |N|)`.
    pub p_sum: f64,
    /// `μ̂(M_n > |N|/2)`.
    pub p_max: f64,
    /// `μ̂(S_n ≥ |N|, M_n ≤ |N|/2)`.
    pub p_joint: f64,
    pub se_sum: f64,
    pub se_max: f64,
    pub se_joint: f64,
    pub total_samples: u64,
    pub overflow_count: u64,
}

pub fn estimate_flight_decomposition(
    table: &BilliardTable,
    n: u64,
    n_norm: f64,
    total_samples: u64,
    seed: u64,
    workers: usize,
) -> Result<FlightDecomposition, McError> {
    let sampler = LiouvilleSampler::new(table, seed);
    let run_chunk = |range: std::ops::Range<u64>| {
        let mut c = [0_u64; 4];
        for i in range {
            match table.orbit_displacement(&sampler.sample(i), n as usize) {
                Ok(s) => {
                    let big_sum = s.sum_norm >= n_norm;
                    let big_max = s.max_norm > n_norm / 2.0;
                    c[0] += big_sum as u64;
                    c[1] += big_max as u64;
                    c[2] += (big_sum && !big_max) as u64;
                }
                Err(_) => c[3] += 1,
            }
        }
        c
    };
    let c = parallel_chunks(
        total_samples,
        workers,
        || [0_u64; 4],
        run_chunk,
        |a, b| [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]],
    )?;
    let p = |k: u64| k as f64 / total_samples as f64;
    Ok(FlightDecomposition {
        n,
        n_norm,
        p_sum: p(c[0]),
        p_max: p(c[1]),
        p_joint: p(c[2]),
        se_sum: binomial_se(p(c[0]), total_samples),
        se_max: binomial_se(p(c[1]), total_samples),
        se_joint: binomial_se(p(c[2]), total_samples),
        total_samples,
        overflow_count: c[3],
    })
}

/// One cell of the corridor correlation table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCell {
    pub p: u64,
    pub r: u64,
    /// Samples with `⌊|κ|⌋ = p`.
    pub conditioning: u64,
    /// Of those, samples with `|κ∘T^r| ≥ c p^{4/5}`.
    pub hits: u64,
    pub ratio: f64,
    pub stderr: f64,
    /// False when fewer than [`MIN_CONDITIONING`] events were seen.
    pub reliable: bool,
}

pub const MIN_CONDITIONING: u64 = 50;

/// Conditional frequencies `μ̂(|κ∘T^r| ≥ c p^{4/5} | ⌊|κ|⌋ = p)`.
pub fn estimate_corridor_correlation(
    table: &BilliardTable,
    p_range: (u64, u64),
    r_range: (u64, u64),
    c: f64,
    total_samples: u64,
    seed: u64,
    workers: usize,
) -> Result<Vec<CorrelationCell>, McError> {
    let (p_lo, p_hi) = p_range;
    let (r_lo, r_hi) = r_range;
    let np = (p_hi - p_lo + 1) as usize;
    let nr = (r_hi - r_lo + 1) as usize;
    let sampler = LiouvilleSampler::new(table, seed);
    // Layout: [conditioning per p] followed by [hits per (p, r)].
    let size = np + np * nr;
    let run_chunk = |range: std::ops::Range<u64>| {
        let mut acc = vec![0_u64; size];
        let mut norms = vec![0.0; r_hi as usize + 1];
        'sample: for i in range {
            let mut orbit = Trajectory::new(table, sampler.sample(i));
            for slot in norms.iter_mut() {
                match orbit.advance() {
                    Ok(f) => *slot = step_norm(f.kappa),
                    Err(_) => continue 'sample,
                }
            }
            let p = norms[0].floor() as u64;
            if p < p_lo || p > p_hi {
                continue;
            }
            let pi = (p - p_lo) as usize;
            acc[pi] += 1;
            let level = c * (p as f64).powf(0.8);
            for (ri, r) in (r_lo..=r_hi).enumerate() {
                if norms[r as usize] >= level {
                    acc[np + pi * nr + ri] += 1;
                }
            }
        }
        acc
    };
    let acc = parallel_chunks(
        total_samples,
        workers,
        || vec![0_u64; size],
        run_chunk,
        |mut a, b| {
            for (x, y) in a.iter_mut().zip(&b) {
                *x += y;
            }
            a
        },
    )?;
    let mut out = Vec::with_capacity(np * nr);
    for pi in 0..np {
        for ri in 0..nr {
            let conditioning = acc[pi];
            let hits = acc[np + pi * nr + ri];
            let ratio = if conditioning > 0 {
                hits as f64 / conditioning as f64
            } else {
                0.0
            };
            out.push(CorrelationCell {
                p: p_lo + pi as u64,
                r: r_lo + ri as u64,
                conditioning,
                hits,
                ratio,
                stderr: binomial_se(ratio, conditioning),
                reliable: conditioning >= MIN_CONDITIONING,
            });
        }
    }
    Ok(out)
}

/// Wall-clock helper for metadata.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed().as_secs_f64())
}
