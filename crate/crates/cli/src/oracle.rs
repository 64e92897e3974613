//! Exact laws computed without sampling, for comparison with a run.

use lorentz_core::dynamics::{exact_step_law, BilliardTable, StepLawOptions};
use lorentz_core::spectral::fourier::support_bound;
use lorentz_core::tower::{build_tower, exact_displacement_law};

use crate::config::ExperimentConfig;
use crate::record::{Artifacts, Field};
use crate::row;

/// Lattice modes: quadrature of `μ(κ₁ = N)` on `[−2, 2]^d`. Model modes: the
/// exact law of `κ_n` for every configured `n`. Writes one CSV into
/// `config.output_dir` and returns its name.
pub fn write_oracle(config: &ExperimentConfig) -> anyhow::Result<String> {
    let mut art = Artifacts::new(&config.output_dir)?;
    if let Some(lattice) = config.lattice() {
        let table = BilliardTable::new(&lattice)?;
        let range = if table.dimension() == 2 { -2..=2 } else { 0..=0 };
        let targets: Vec<[i64; 2]> = (-2..=2_i64).flat_map(|x| range.clone().map(move |y| [x, y])).collect();
        let law = exact_step_law(&table, &targets, StepLawOptions::default())?;
        let rows: Vec<Vec<Field>> = law
            .mass
            .iter()
            .map(|(k, m)| row![k[0], k[1], *m, law.error[k]])
            .collect();
        art.csv("oracle_step_law.csv", &["N_x", "N_y", "mass", "error_bound"], &rows)?;
        Ok("oracle_step_law.csv".into())
    } else {
        let tower = build_tower(&config.model_base()?)?;
        let mut rows = Vec::new();
        for &n in &config.run.n_values {
            let n = n as usize;
            for (k, p) in exact_displacement_law(&tower, n, support_bound(&tower, n))? {
                rows.push(row![n, k[0], k[1], p]);
            }
        }
        art.csv(
            "oracle_displacement_law.csv",
            &["n", "N_x", "N_y", "probability"],
            &rows,
        )?;
        Ok("oracle_displacement_law.csv".into())
    }
}
