//! Mode dispatch: each mode runs one module pipeline and fills [`Artifacts`].

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::Context;
use chrono::{SecondsFormat, Utc};
use lorentz_core::bounds::{
    a_n, abstract_bound, big_n_bound, check_ass3, lattice_norm, ratio_table, regime, summarize, BigNMode, BoundRow,
    BoundSpec, RatioOptions, RatioSummary, Regime, SlowlyVaryingFn,
};
use lorentz_core::dynamics::BilliardTable;
use lorentz_core::montecarlo::{
    estimate_corridor_correlation, estimate_displacement_laws, estimate_flight_decomposition, estimate_tail, timed,
    DisplacementHistogram,
};
use lorentz_core::spectral::fourier::support_bound;
use lorentz_core::spectral::renewal::renewal_sweep;
use lorentz_core::spectral::{
    check_key_lemmas, compute_a_nn, fit_sigma_clt, quadrature_cor_int, verify_lambda_g, Branch, Normalizer,
    SmoothingKernel,
};
use lorentz_core::stats::best_centered_normal;
use lorentz_core::tower::{build_tower, exact_displacement_law, psi_tail_curve, GibbsMarkovBase, TowerModel};
use lorentz_core::C64;
use serde::Serialize;

use crate::config::{ExperimentConfig, Mode};
use crate::record::{show, Artifacts, Field, RunRecord, TableSummary, CONFIG_FILE, RECORD_FILE};
use crate::row;

/// Command-line overrides, applied before the digest is taken.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, config: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            config.run.seed = s;
        }
        if let Some(w) = self.workers {
            config.run.workers = w;
        }
        if let Some(o) = &self.out {
            config.output_dir = o.clone();
        }
    }
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Runs one experiment and writes its outputs, `config.toml` and
/// `run_record.json` under `config.output_dir`.
pub fn run(config: &ExperimentConfig) -> anyhow::Result<RunRecord> {
    config.validate()?;
    let started = now();
    let clock = Instant::now();
    let mut art = Artifacts::new(&config.output_dir)?;
    art.write_with(
        CONFIG_FILE,
        |out| Ok(out.write_all(config.to_toml_string().as_bytes())?),
    )?;
    let mode = config.run.mode;
    match mode {
        Mode::BilliardLld => billiard_lld(config, &mut art),
        Mode::BilliardClt => billiard_clt(config, &mut art),
        Mode::Tail => tail(config, &mut art),
        Mode::Spectral => spectral(config, &mut art),
        Mode::Renewal => renewal(config, &mut art),
        Mode::CorridorCorr => corridor(config, &mut art),
        Mode::Abstract => abstract_mode(config, &mut art),
    }
    .with_context(|| format!("mode {mode}"))?;
    let record = RunRecord {
        config_digest: config.digest(),
        artifact_version: env!("CARGO_PKG_VERSION").into(),
        mode,
        seed: config.run.seed,
        workers: config.run.workers,
        started,
        finished: now(),
        wall_time_s: clock.elapsed().as_secs_f64(),
        files: art.files.clone(),
        verdicts: art.verdicts.clone(),
        tables: art.tables.clone(),
    };
    let path = config.output_dir.join(RECORD_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&record)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(record)
}

fn table_of(config: &ExperimentConfig) -> anyhow::Result<BilliardTable> {
    let lattice = config.lattice().context("missing [lattice]")?;
    Ok(BilliardTable::new(&lattice)?)
}

fn histograms(
    config: &ExperimentConfig,
    table: &BilliardTable,
    art: &mut Artifacts,
) -> anyhow::Result<Vec<DisplacementHistogram>> {
    let run = &config.run;
    let (hists, secs) = timed(|| estimate_displacement_laws(table, &run.n_values, run.samples, run.seed, run.workers));
    let hists = hists?;
    for h in &hists {
        let stem = format!("kappa_n{}", h.n);
        h.save(art.dir(), &stem, secs)?;
        art.adopt(&format!("{stem}.csv"))?;
        art.adopt(&format!("{stem}.json"))?;
    }
    Ok(hists)
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn regime_name(r: Regime) -> &'static str {
    match r {
        Regime::BigN => "big-n",
        Regime::Main => "main",
        Regime::Overlap => "overlap",
        Regime::Gap => "gap",
    }
}

/// Bounded-ratio and trend verdicts shared by the local limit tables.
fn ratio_verdicts(art: &mut Artifacts, label: &str, s: &RatioSummary) {
    let spread = s.max / s.median;
    art.verdict(
        &format!("{label}: bounded ratio"),
        s.rows > 0 && spread <= 10.0,
        format!("{} rows, max/median {spread:.3} (limit 10)", s.rows),
    );
    if s.per_n_median.len() >= 2 {
        art.verdict(
            &format!("{label}: no trend in n"),
            s.slope <= 0.1,
            format!(
                "slope of log ratio vs log n over all rows {:.4} (limit 0.1); through per-n medians {:.4}",
                s.slope, s.median_slope
            ),
        );
    }
}

fn summary_table(inequality: &str, file: &str, s: &RatioSummary) -> TableSummary {
    TableSummary {
        inequality: inequality.into(),
        file: file.into(),
        rows: s.rows,
        sup: finite(s.max),
        median: finite(s.median),
        trend_slope: finite(s.slope),
        trend_in: "n".into(),
    }
}

/// Orbit lengths for the large-|N| table.
const BIG_N_STEPS: [u64; 4] = [1, 2, 3, 4];

fn billiard_lld(config: &ExperimentConfig, art: &mut Artifacts) -> anyhow::Result<()> {
    let table = table_of(config)?;
    let hists = histograms(config, &table, art)?;
    let b = &config.bounds;
    let opts = RatioOptions {
        omega: b.omega,
        eps1: b.eps1,
        min_count: 30,
        max_norm_factor: Some(4.0),
    };
    let report = ratio_table(&hists, &BoundSpec::Billiard, opts)?;
    art.write_with("lld_ratios.csv", |out| Ok(report.write_csv(out)?))?;
    let s = &report.summary;
    art.table(summary_table("local limit bound", "lld_ratios.csv", s));
    ratio_verdicts(art, "local limit", s);
    art.verdict(
        "local limit: constant C",
        s.rows > 0 && s.max <= b.c,
        format!("sup of μ̂(κ_n = N) over the C = 1 bound is {:.4}, C = {}", s.max, b.c),
    );

    // The large-|N| regime n ≤ ω log|N| is empty for the sweep's n, so it
    // gets its own short-orbit campaign.
    let d = table.dimension();
    let small = estimate_displacement_laws(
        &table,
        &BIG_N_STEPS,
        config.run.samples,
        config.run.seed,
        config.run.workers,
    )?;
    let mut rows = Vec::new();
    let (mut xs, mut ratios) = (Vec::new(), Vec::new());
    for h in &small {
        for (&big_n, &count) in &h.counts {
            if count < 30 || lattice_norm(big_n) == 0.0 {
                continue;
            }
            let Ok(bound) = big_n_bound(h.n, big_n, d, 1.0, b.omega, &BigNMode::Billiard) else {
                continue;
            };
            let empirical = count as f64 / h.total_samples as f64;
            let ratio = empirical / bound;
            rows.push(row![h.n, big_n[0], big_n[1], count, empirical, bound, ratio]);
            xs.push(lattice_norm(big_n));
            ratios.push(ratio);
        }
    }
    art.csv(
        "big_n_ratios.csv",
        &["n", "N_x", "N_y", "count", "empirical", "bound", "ratio"],
        &rows,
    )?;
    let sup = ratios.iter().copied().fold(0.0, f64::max);
    art.verdict(
        "large-|N| bound: constant C",
        !ratios.is_empty() && sup <= b.c,
        format!(
            "{} rows at n ≤ {}, sup ratio {sup:.4}, C = {}",
            ratios.len(),
            BIG_N_STEPS[3],
            b.c
        ),
    );
    art.table(TableSummary::from_ratios(
        "large-|N| bound",
        "big_n_ratios.csv",
        "|N|",
        &xs,
        &ratios,
    ));

    // Splitting of large sums at |N| = 4 a_n.
    let mut rows = Vec::new();
    let mut union_ok = true;
    for &n in &config.run.n_values {
        let norm = 4.0 * a_n(n.max(2));
        let f =
            estimate_flight_decomposition(&table, n, norm, config.run.samples, config.run.seed, config.run.workers)?;
        let err = (f.se_sum.powi(2) + f.se_max.powi(2) + f.se_joint.powi(2)).sqrt();
        union_ok &= f.p_sum <= f.p_max + f.p_joint + 4.0 * err;
        rows.push(row![
            f.n,
            f.n_norm,
            f.p_sum,
            f.p_max,
            f.p_joint,
            f.se_sum,
            f.se_max,
            f.se_joint,
            f.total_samples,
            f.overflow_count
        ]);
    }
    art.csv(
        "flight_decomposition.csv",
        &[
            "n", "N_norm", "p_sum", "p_max", "p_joint", "se_sum", "se_max", "se_joint", "samples", "overflow",
        ],
        &rows,
    )?;
    art.verdict(
        "flight decomposition: union bound",
        union_ok,
        "p_sum ≤ p_max + p_joint + 4 combined errors at every n",
    );
    Ok(())
}

fn scaled_marginal(h: &DisplacementHistogram) -> Vec<f64> {
    let an = a_n(h.n);
    let mut v = Vec::with_capacity(h.total_samples as usize);
    for (x, c) in h.marginal_x() {
        v.extend(std::iter::repeat_n(x as f64 / an, c as usize));
    }
    v
}

fn billiard_clt(config: &ExperimentConfig, art: &mut Artifacts) -> anyhow::Result<()> {
    let table = table_of(config)?;
    let hists = histograms(config, &table, art)?;
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for h in hists.iter().filter(|h| h.n >= 2) {
        let fit = fit_sigma_clt(h, a_n(h.n))?;
        let x = scaled_marginal(h);
        let m = x.iter().sum::<f64>() / x.len() as f64;
        let var = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64;
        let (sigma, ks) = best_centered_normal(&x);
        rows.push(row![
            h.n,
            a_n(h.n),
            fit.sigma[0][0],
            fit.sigma[0][1],
            fit.sigma[1][1],
            var,
            sigma,
            ks
        ]);
        fits.push((h.n, var, ks));
    }
    art.csv(
        "clt.csv",
        &[
            "n",
            "a_n",
            "sigma_xx",
            "sigma_xy",
            "sigma_yy",
            "variance_x",
            "best_sigma",
            "ks",
        ],
        &rows,
    )?;
    let Some(&(n, _, ks)) = fits.last() else {
        anyhow::bail!("billiard-clt needs some n ≥ 2");
    };
    let limit = if config.run.samples >= 1_000_000 { 0.05 } else { 0.1 };
    art.verdict(
        "CLT: Gaussian shape",
        ks <= limit,
        format!("KS {ks:.4} at n = {n} against the best centered normal (limit {limit})"),
    );
    if let [.., (n0, v0, _), (n1, v1, _)] = fits[..] {
        let drift = (v1 / v0 - 1.0).abs();
        art.verdict(
            "CLT: variance stable",
            drift <= 0.25,
            format!(
                "Var(κ/a_n) {v0:.4} at n = {n0}, {v1:.4} at n = {n1}, change {:.1}% (limit 25%)",
                100.0 * drift
            ),
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct TailSummary {
    fitted_exponent: f64,
    fit_window: (u64, u64),
    total_samples: u64,
    overflow_count: u64,
}

fn tail(config: &ExperimentConfig, art: &mut Artifacts) -> anyhow::Result<()> {
    let table = table_of(config)?;
    let ts = config.tail_section();
    let run = &config.run;
    let curve = estimate_tail(&table, run.samples, run.seed, &ts.thresholds(), ts.window, run.workers)?;
    art.write_with("tail.csv", |out| Ok(curve.write_csv(out)?))?;
    art.json(
        "tail_summary.json",
        &TailSummary {
            fitted_exponent: curve.fitted_exponent,
            fit_window: curve.fit_window,
            total_samples: curve.total_samples,
            overflow_count: curve.overflow_count,
        },
    )?;
    let e = curve.fitted_exponent;
    art.verdict(
        "free-flight tail exponent",
        (-2.35..=-1.65).contains(&e),
        format!(
            "fitted exponent {e:.4} on m ∈ [{}, {}] (window [−2.35, −1.65])",
            curve.fit_window.0, curve.fit_window.1
        ),
    );
    let (m, r): (Vec<f64>, Vec<f64>) = curve
        .thresholds
        .iter()
        .zip(&curve.survival)
        .zip(&curve.exceedances)
        .filter(|(_, &k)| k > 0)
        .map(|((&m, &s), _)| (m as f64, s * (m * m) as f64))
        .unzip();
    art.table(TableSummary::from_ratios(
        "free-flight tail m²μ(|κ|>m)",
        "tail.csv",
        "m",
        &m,
        &r,
    ));
    Ok(())
}

fn load_tower(config: &ExperimentConfig) -> anyhow::Result<(GibbsMarkovBase, TowerModel)> {
    let base = config.model_base()?;
    let tower = build_tower(&base)?;
    Ok((base, tower))
}

/// The step law under `μ_Y` is invariant under `κ ↦ −κ`.
fn is_symmetric(base: &GibbsMarkovBase) -> bool {
    let mut law: BTreeMap<[i64; 2], f64> = BTreeMap::new();
    for a in 0..base.alphabet_size {
        *law.entry(base.kappa_sigma(a)).or_default() += base.base_measure[a];
    }
    law.iter()
        .all(|(k, p)| law.get(&[-k[0], -k[1]]).is_some_and(|q| (p - q).abs() <= 1e-14))
}

fn spectral(config: &ExperimentConfig, art: &mut Artifacts) -> anyhow::Result<()> {
    let (base, tower) = load_tower(config)?;
    let sp = config.spectral_section();
    let b = &config.bounds;
    let d = tower.dimension();
    let branch = Branch::for_tower(&tower, 0);

    let report = check_key_lemmas(&branch, &sp.t_grid, &sp.h_grid, &[b.b])?;
    let mut rows = Vec::new();
    for m in &report.moduli {
        for r in &m.rows {
            rows.push(row![m.b, r.t, r.h, r.delta, r.modulus, r.ratio]);
        }
    }
    art.csv(
        "gradient_modulus.csv",
        &["b", "t", "h", "delta", "modulus", "ratio"],
        &rows,
    )?;
    let moduli = &report.moduli[0];
    let (h, r): (Vec<f64>, Vec<f64>) = moduli.rows.iter().map(|r| (r.h, r.ratio)).unzip();
    art.table(TableSummary::from_ratios(
        "eigenvalue gradient modulus",
        "gradient_modulus.csv",
        "h",
        &h,
        &r,
    ));
    art.verdict(
        "gradient modulus bounded",
        moduli.max.is_finite() && moduli.max / moduli.median <= 10.0,
        format!("b = {}: max/median {:.3} (limit 10)", b.b, moduli.max / moduli.median),
    );

    let rows: Vec<Vec<Field>> = report.quadratic.iter().map(|q| row![q.t, q.gap, q.ratio]).collect();
    art.csv("quadratic_gap.csv", &["t", "gap", "ratio"], &rows)?;
    let (t, r): (Vec<f64>, Vec<f64>) = report.quadratic.iter().map(|q| (q.t, q.ratio)).unzip();
    art.table(TableSummary::from_ratios(
        "eigenvalue quadratic gap",
        "quadratic_gap.csv",
        "t",
        &t,
        &r,
    ));

    let rows: Vec<Vec<Field>> = report
        .gradients
        .iter()
        .map(|g| {
            row![
                g.t,
                g.analytic[0],
                g.analytic[1],
                g.finite_difference[0],
                g.finite_difference[1],
                g.relative_error
            ]
        })
        .collect();
    art.csv(
        "gradients.csv",
        &["t", "analytic_re", "analytic_im", "fd_re", "fd_im", "relative_error"],
        &rows,
    )?;
    art.verdict(
        "gradient matches finite differences",
        report.gradient_max_relative_error <= 1e-5,
        format!(
            "max relative error {:.2e} (limit 1e-5)",
            report.gradient_max_relative_error
        ),
    );
    if is_symmetric(&base) {
        art.verdict(
            "gradient vanishes at 0",
            report.gradient_at_zero <= 1e-10,
            format!("|∂λ(0)| = {:.2e} (limit 1e-10)", report.gradient_at_zero),
        );
    }

    if d == 1 {
        let mut rows = Vec::new();
        for (beta, r) in [(0.0, 0.0), (2.0, 1.0), (4.0, 2.0)] {
            let curve = quadrature_cor_int(&branch, beta, r, &config.run.n_values, b.delta, &Normalizer::Billiard)?;
            for row in &curve.rows {
                rows.push(row![beta, r, row.n, row.integral, row.ratio]);
            }
            let (n, q): (Vec<f64>, Vec<f64>) = curve.rows.iter().map(|row| (row.n as f64, row.ratio)).unzip();
            let mut s = TableSummary::from_ratios(
                &format!("characteristic integral (β = {beta}, r = {r})"),
                "char_integral.csv",
                "n",
                &n,
                &q,
            );
            s.rows = curve.rows.len();
            art.table(s);
            art.verdict(
                &format!("characteristic integral (β = {beta}, r = {r}) bounded"),
                curve.max / curve.median <= 5.0,
                format!("max/median {:.3} (limit 5)", curve.max / curve.median),
            );
        }
        art.csv("char_integral.csv", &["beta", "r", "n", "integral", "ratio"], &rows)?;
    }

    // Outward along the first axis, in both directions.
    let grid: Vec<[f64; 2]> = (0..15)
        .map(|i| [0.02 * i as f64, 0.0])
        .chain((1..15).map(|i| [-0.02 * i as f64, 0.0]))
        .collect();
    let lg = verify_lambda_g(&tower, &grid)?;
    let rows: Vec<Vec<Field>> = lg
        .rows
        .iter()
        .map(|r| {
            row![
                r.t[0],
                r.t[1],
                r.k,
                r.lambda[0],
                r.lambda[1],
                r.g[0],
                r.g[1],
                r.discrepancy
            ]
        })
        .collect();
    art.csv(
        "lambda_g.csv",
        &[
            "t_x",
            "t_y",
            "k",
            "lambda_re",
            "lambda_im",
            "g_re",
            "g_im",
            "discrepancy",
        ],
        &rows,
    )?;
    art.verdict(
        "λ = 1/g",
        lg.sup <= 1e-8,
        format!("sup discrepancy {:.2e} (limit 1e-8)", lg.sup),
    );

    psi_table(art, &base, &SlowlyVaryingFn::one())?;

    let kernel = SmoothingKernel::new(b.delta, d)?;
    let mut rows = Vec::new();
    let (mut un, mut ur, mut dn, mut dr) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for &n in &config.run.n_values {
        for &m in &sp.big_n {
            let big_n = [m, 0];
            let a = compute_a_nn(&tower, n, big_n, &kernel, &Normalizer::Billiard)?;
            let decay = a.ratio_decay.map_or(Field::Text(String::new()), Field::Float);
            rows.push(vec![
                Field::from(n),
                Field::from(m),
                Field::from(0i64),
                Field::from(a.norm),
                Field::from(a.ratio_uniform),
                decay,
                Field::from(regime_name(a.regime)),
            ]);
            un.push(n as f64);
            ur.push(a.ratio_uniform);
            if let Some(r) = a.ratio_decay {
                dn.push(n as f64);
                dr.push(r);
            }
        }
    }
    art.csv(
        "smoothed_operator.csv",
        &["n", "N_x", "N_y", "norm", "ratio_uniform", "ratio_decay", "regime"],
        &rows,
    )?;
    art.table(TableSummary::from_ratios(
        "smoothed operator norm ‖A‖a_n^d",
        "smoothed_operator.csv",
        "n",
        &un,
        &ur,
    ));
    art.table(TableSummary::from_ratios(
        "smoothed operator decay in |N|",
        "smoothed_operator.csv",
        "n",
        &dn,
        &dr,
    ));
    Ok(())
}

fn psi_table(art: &mut Artifacts, base: &GibbsMarkovBase, ell1: &SlowlyVaryingFn) -> anyhow::Result<()> {
    let psi = psi_tail_curve(base, ell1);
    let rows: Vec<Vec<Field>> = (0..psi.m.len())
        .map(|i| row![psi.m[i], psi.tail[i], psi.envelope_square[i], psi.envelope_log[i]])
        .collect();
    art.csv("psi_tail.csv", &["m", "tail", "envelope_square", "envelope_log"], &rows)?;
    let m: Vec<f64> = psi.m.iter().map(|&m| m as f64).collect();
    let sq: Vec<f64> = psi.tail.iter().zip(&psi.envelope_square).map(|(t, e)| t / e).collect();
    let lg: Vec<f64> = psi.tail.iter().zip(&psi.envelope_log).map(|(t, e)| t / e).collect();
    art.table(TableSummary::from_ratios(
        "return-time tail m²μ(ψ>m)",
        "psi_tail.csv",
        "m",
        &m,
        &sq,
    ));
    art.table(TableSummary::from_ratios(
        "return-time tail, log envelope",
        "psi_tail.csv",
        "m",
        &m,
        &lg,
    ));
    art.verdict(
        "return-time tail bounded",
        psi.sup_m2_tail.is_finite() && psi.sup_log_ratio.is_finite(),
        format!(
            "sup m²μ(ψ>m) = {:.4}, sup over log envelope = {:.4}",
            psi.sup_m2_tail, psi.sup_log_ratio
        ),
    );
    Ok(())
}

fn renewal(config: &ExperimentConfig, art: &mut Artifacts) -> anyhow::Result<()> {
    let (_, tower) = load_tower(config)?;
    let z_grid: Vec<C64> = [0.3, 0.6, 0.9]
        .iter()
        .flat_map(|&r| (0..6).map(move |j| C64::from_polar(r, std::f64::consts::TAU * j as f64 / 6.0 + 0.1)))
        .collect();
    let t_grid: Vec<[f64; 2]> = [0.0, 0.05, 0.2]
        .iter()
        .map(|&t| if tower.dimension() == 2 { [t, t / 2.0] } else { [t, 0.0] })
        .collect();
    let res = renewal_sweep(&tower, &z_grid, &t_grid, 200);
    let rows: Vec<Vec<Field>> = res
        .iter()
        .map(|r| {
            row![
                r.z[0],
                r.z[1],
                r.t[0],
                r.t[1],
                r.n_max,
                r.t_hat,
                r.p_hat,
                r.truncation_bound
            ]
        })
        .collect();
    art.csv(
        "renewal_residuals.csv",
        &[
            "z_re",
            "z_im",
            "t_x",
            "t_y",
            "n_max",
            "t_hat",
            "p_hat",
            "truncation_bound",
        ],
        &rows,
    )?;
    let worst = res.iter().map(|r| r.t_hat.max(r.p_hat)).fold(0.0, f64::max);
    art.verdict(
        "renewal identities",
        worst <= 1e-8,
        format!("{} points, worst residual {worst:.2e} (limit 1e-8)", res.len()),
    );
    Ok(())
}

fn corridor(config: &ExperimentConfig, art: &mut Artifacts) -> anyhow::Result<()> {
    let table = table_of(config)?;
    let cs = config.corridor_section();
    let run = &config.run;
    let cells =
        estimate_corridor_correlation(&table, cs.p_range, cs.r_range, cs.c, run.samples, run.seed, run.workers)?;
    let rows: Vec<Vec<Field>> = cells
        .iter()
        .map(|c| row![c.p, c.r, c.conditioning, c.hits, c.ratio, c.stderr, c.reliable])
        .collect();
    art.csv(
        "corridor_correlation.csv",
        &["p", "r", "conditioning", "hits", "ratio", "stderr", "reliable"],
        &rows,
    )?;
    art.verdict(
        "correlation ratios are probabilities",
        cells.iter().all(|c| (0.0..=1.0).contains(&c.ratio)),
        format!("{} cells", cells.len()),
    );
    let self_cells: Vec<_> = cells
        .iter()
        .filter(|c| c.r == 0 && c.conditioning > 0 && c.p as f64 >= cs.c * (c.p as f64).powf(0.8))
        .collect();
    if !self_cells.is_empty() {
        art.verdict(
            "lag-zero ratio is one",
            self_cells.iter().all(|c| c.ratio == 1.0),
            format!("{} cells at r = 0", self_cells.len()),
        );
    }
    // Against the decay rate p^{-2/45} the ratios should stay bounded.
    let (p, r): (Vec<f64>, Vec<f64>) = cells
        .iter()
        .filter(|c| c.reliable && c.r >= 1)
        .map(|c| (c.p as f64, c.ratio * (c.p as f64).powf(2.0 / 45.0)))
        .unzip();
    art.table(TableSummary::from_ratios(
        "corridor correlation",
        "corridor_correlation.csv",
        "p",
        &p,
        &r,
    ));
    Ok(())
}

fn abstract_mode(config: &ExperimentConfig, art: &mut Artifacts) -> anyhow::Result<()> {
    let (base, tower) = load_tower(config)?;
    let a = config.abstract_section();
    let b = &config.bounds;
    let v = check_ass3(&a.ell1, &a.ell2, &a.grid)?;
    let rows: Vec<Vec<Field>> = v.grid.iter().zip(&v.ratios).map(|(x, r)| row![*x, *r]).collect();
    art.csv("assumption_ratio.csv", &["x", "ratio"], &rows)?;
    art.verdict(
        "tail assumption",
        !v.unbounded_trend && v.worst_ratio <= b.c,
        format!(
            "worst ratio {:.4} at x = {:e} (C = {}), trend slope in log log x {:.3} (limit 0.5)",
            v.worst_ratio, v.worst_at, b.c, v.trend_slope
        ),
    );

    let ell3 = a.ell3.as_ref().unwrap_or(&a.ell2);
    let d = tower.dimension();
    let mut bound_rows = Vec::new();
    for &n in &config.run.n_values {
        let an = lorentz_core::bounds::abstract_a_n(&a.ell2, n)?;
        let law = exact_displacement_law(&tower, n as usize, support_bound(&tower, n as usize))?;
        for (big_n, p) in law {
            if p < 1e-12 || lattice_norm(big_n) > 4.0 * an {
                continue;
            }
            let bound = abstract_bound(n, big_n, d, ell3, 1.0, &a.ell2)?;
            bound_rows.push(BoundRow {
                n,
                big_n,
                count: 0,
                empirical: p,
                stderr: 0.0,
                bound,
                ratio: p / bound,
                regime: regime(n, big_n, b.omega, b.eps1),
            });
        }
    }
    let s = summarize(&bound_rows);
    let rows: Vec<Vec<Field>> = bound_rows
        .iter()
        .map(|r| {
            row![
                r.n,
                r.big_n[0],
                r.big_n[1],
                r.empirical,
                r.bound,
                r.ratio,
                regime_name(r.regime)
            ]
        })
        .collect();
    art.csv(
        "abstract_ratios.csv",
        &["n", "N_x", "N_y", "exact", "bound", "ratio", "regime"],
        &rows,
    )?;
    art.table(summary_table("abstract local limit bound", "abstract_ratios.csv", &s));
    // Exact laws reach into the truncated tail where the ratio is tiny, so a
    // median is meaningless; the bound is an upper bound, and what must not
    // grow with n is the supremum over N.
    let mut sup_by_n: BTreeMap<u64, f64> = BTreeMap::new();
    for r in &bound_rows {
        let e = sup_by_n.entry(r.n).or_insert(0.0);
        *e = e.max(r.ratio);
    }
    let (ns, sups): (Vec<f64>, Vec<f64>) = sup_by_n.iter().map(|(n, v)| (*n as f64, *v)).unzip();
    let trend = TableSummary::from_ratios("", "", "n", &ns, &sups).trend_slope;
    art.verdict(
        "abstract local limit: sup over N bounded in n",
        !sups.is_empty() && trend.is_none_or(|t| t <= 0.1),
        format!(
            "per-n sup {}, slope of log sup vs log n {} (limit 0.1)",
            sup_by_n
                .iter()
                .map(|(n, v)| format!("{n}:{v:.3}"))
                .collect::<Vec<_>>()
                .join(" "),
            show(trend)
        ),
    );
    psi_table(art, &base, &a.ell1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use lorentz_core::tower::{bernoulli, make_heavy_tailed_model, markov_aperiodic, SigmaProfile};

    #[test]
    fn symmetry_of_shipped_models() {
        assert!(is_symmetric(&bernoulli()));
        assert!(is_symmetric(
            &make_heavy_tailed_model(8, 3.0, SigmaProfile::Unit).unwrap()
        ));
        assert!(is_symmetric(&markov_aperiodic()));
    }

    #[test]
    fn overrides_take_effect() {
        let mut c = ExperimentConfig::from_toml_str(
            "output_dir = \"a\"\n[run]\nmode = \"renewal\"\nn_values = [1]\n[model]\nbuiltin = \"bernoulli\"\n",
        )
        .unwrap();
        let before = c.digest();
        Overrides {
            seed: Some(9),
            workers: Some(3),
            out: Some("b".into()),
        }
        .apply(&mut c);
        assert_eq!((c.run.seed, c.run.workers), (9, 3));
        assert_eq!(c.output_dir, PathBuf::from("b"));
        assert_ne!(c.digest(), before);
    }
}
