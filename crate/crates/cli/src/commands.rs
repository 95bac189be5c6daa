//! Subcommand implementations.

use std::path::Path;

use ndarray::Array2;
use serde::Serialize;

use hdglht::{
    build_contrast, expand_grid, gen_sample, normal_upper_quantile, power_curve, run_replicates,
    run_test, size_table, CalibrationReport, ContrastInput, ExponentMode, GroupedSample,
    SimulationConfig, TestResult, WeightSpec,
};

use crate::config::{Overrides, RunConfigFile, SimMode};
use crate::dataset::{read_dataset, write_dataset, Dataset};
use crate::error::{CliError, CliResult};

#[derive(Serialize)]
struct TestOutput {
    groups: Vec<String>,
    n_sizes: Vec<usize>,
    p: usize,
    level: f64,
    statistic: f64,
    sigma_hat_sq: f64,
    z: Option<f64>,
    p_value: Option<f64>,
    reject: Option<bool>,
    degenerate_variance: bool,
    trace_w_sigma: Vec<f64>,
    trace_w_sigma_sq: Vec<f64>,
    trace_cross: Vec<Vec<f64>>,
}

fn test_output(
    labels: Vec<String>,
    n_sizes: Vec<usize>,
    p: usize,
    level: f64,
    result: TestResult,
) -> CliResult<TestOutput> {
    let threshold = normal_upper_quantile(level)?;
    Ok(TestOutput {
        groups: labels,
        n_sizes,
        p,
        level,
        statistic: result.t_n,
        sigma_hat_sq: result.sigma_hat_sq,
        z: result.z,
        p_value: result.p_value,
        reject: result.z.map(|z| z >= threshold),
        degenerate_variance: result.degenerate_variance,
        trace_w_sigma: result.trace_w_sigma,
        trace_w_sigma_sq: result.trace_w_sigma_sq,
        trace_cross: result.trace_cross,
    })
}

fn weights_for(config: &RunConfigFile, p: usize) -> CliResult<WeightSpec> {
    Ok(config.weight_source().build(p)?)
}

/// `test`: one linear-hypothesis test on a grouped CSV dataset.
pub fn cmd_test(data: &Path, config_path: &Path, level_flag: Option<f64>) -> CliResult<()> {
    let config = RunConfigFile::load(config_path)?;
    let Dataset { labels, sample } = read_dataset(data)?;
    let level = config.level_or_default(level_flag)?;
    let g_tilde = config.contrast_spec().g_tilde(labels.len())?;
    let contrast = build_contrast(
        &ContrastInput::new(g_tilde, config.exponent_mode),
        &sample.n_sizes(),
    )?;
    let weights = weights_for(&config, sample.p())?;
    let result = run_test(&sample, &contrast, &weights)?;
    let output = test_output(labels, sample.n_sizes(), sample.p(), level, result)?;
    println!("{}", serde_json::to_string_pretty(&output)?);
    Ok(())
}

#[derive(Serialize)]
struct PairOutput {
    pair: String,
    group_a: String,
    group_b: String,
    n_a: usize,
    n_b: usize,
    statistic: f64,
    z: Option<f64>,
    p_value: Option<f64>,
    degenerate_variance: bool,
}

/// `contrasts`: every unordered pair of groups, tested with the two-group
/// difference contrast; pairs are ordered by label.
pub fn cmd_contrasts(
    data: &Path,
    config_path: Option<&Path>,
    level_flag: Option<f64>,
) -> CliResult<()> {
    let config = match config_path {
        Some(path) => RunConfigFile::load(path)?,
        None => RunConfigFile {
            contrast: None,
            exponent_mode: ExponentMode::default(),
            level: None,
            weights: None,
            simulate: None,
        },
    };
    let level = config.level_or_default(level_flag)?;
    let Dataset { labels, sample } = read_dataset(data)?;
    let weights = weights_for(&config, sample.p())?;

    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| labels[a].cmp(&labels[b]));

    let pair_g_tilde = Array2::from_shape_vec((1, 2), vec![1.0, -1.0])
        .map_err(|e| CliError::Internal(e.to_string()))?;
    let mut outputs = Vec::new();
    for i in 0..order.len() {
        for j in i + 1..order.len() {
            let (a, b) = (order[i], order[j]);
            let pair = GroupedSample::new(vec![sample.group(a).clone(), sample.group(b).clone()])?;
            let contrast = build_contrast(
                &ContrastInput::new(pair_g_tilde.clone(), config.exponent_mode),
                &pair.n_sizes(),
            )?;
            let result = run_test(&pair, &contrast, &weights)?;
            outputs.push(PairOutput {
                pair: format!("{} vs {}", labels[a], labels[b]),
                group_a: labels[a].clone(),
                group_b: labels[b].clone(),
                n_a: pair.n_sizes()[0],
                n_b: pair.n_sizes()[1],
                statistic: result.t_n,
                z: result.z,
                p_value: result.p_value,
                degenerate_variance: result.degenerate_variance,
            });
        }
    }
    let table = serde_json::json!({ "level": level, "pairs": outputs });
    println!("{}", serde_json::to_string_pretty(&table)?);
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::user(format!("cannot write {}: {e}", path.display())))
}

fn write_report_json(path: &Path, report: &CalibrationReport) -> CliResult<()> {
    let text = serde_json::to_string_pretty(report)?;
    write_file(path, &(text + "\n"))
}

fn replicates_csv(report: &CalibrationReport) -> String {
    let mut out = String::from("replicate,t_n,sigma_hat_sq,z,reject\n");
    for rec in &report.records {
        let z = rec.z.map(|z| z.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            rec.replicate, rec.t_n, rec.sigma_hat_sq, z, rec.reject as u8
        ));
    }
    out
}

/// `simulate`: replicated experiments; writes artifacts into the output
/// directory and prints one summary line per grid cell.
pub fn cmd_simulate(
    config_path: &Path,
    out_dir: &Path,
    overrides: Overrides,
) -> CliResult<()> {
    let config = RunConfigFile::load(config_path)?;
    let sim = config.simulate_section()?.clone();
    let base: SimulationConfig = config.to_simulation_config(overrides)?;
    // fail on config inconsistencies before creating any artifacts
    base.build_parts()?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::user(format!("cannot create {}: {e}", out_dir.display())))?;

    match sim.mode {
        SimMode::Calibration => {
            let report = run_replicates(&base)?;
            println!(
                "calibration p={} dist={} cov={} replicates={} rate={:.4} se={:.4} degenerate={}",
                base.p,
                base.dist.name(),
                base.cov.label(),
                report.replicates,
                report.rejection_rate,
                report.rejection_se,
                report.degenerate_count
            );
            let report_path = out_dir.join("report.json");
            write_report_json(&report_path, &report)?;
            if sim.persist_replicates {
                write_file(&out_dir.join("replicates.csv"), &replicates_csv(&report))?;
            }
            println!("wrote {}", report_path.display());
        }
        SimMode::SizeTable => {
            let ps = sim.p_grid.unwrap_or_else(|| vec![base.p]);
            let dists = sim.dists.unwrap_or_else(|| vec![base.dist]);
            let covs = sim.covs.unwrap_or_else(|| vec![base.cov.clone()]);
            let configs = expand_grid(&base, &ps, &dists, &covs);
            let table = size_table(&configs)?;
            for row in &table.rows {
                println!(
                    "size p={} dist={} cov={} rate={:.4} se={:.4} degenerate={}",
                    row.p,
                    row.dist,
                    row.cov,
                    row.rejection_rate,
                    row.rejection_se,
                    row.degenerate_count
                );
            }
            let path = out_dir.join("size_table.csv");
            write_file(&path, &table.to_csv())?;
            println!("wrote {}", path.display());
        }
        SimMode::PowerCurve => {
            let r_values = sim.r_values.unwrap_or_else(|| vec![0.03, 0.06, 0.09, 0.12]);
            let t_values = sim.t_values.unwrap_or_else(|| vec![0.10, 0.15, 0.20, 0.25]);
            let table = power_curve(&base, &r_values, &t_values)?;
            for row in &table.rows {
                println!(
                    "power r={} t={} p={} empirical={:.4} predicted={}",
                    row.r,
                    row.t,
                    row.p,
                    row.empirical_power,
                    row.predicted_power
                        .map(|v| format!("{v:.4}"))
                        .unwrap_or_else(|| "-".into())
                );
            }
            let path = out_dir.join("power_curve.csv");
            write_file(&path, &table.to_csv())?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

/// `emit-data`: write one synthetic replicate as a grouped CSV dataset.
pub fn cmd_emit_data(
    config_path: &Path,
    out: &Path,
    seed_flag: Option<u64>,
    replicate: u64,
) -> CliResult<()> {
    let config = RunConfigFile::load(config_path)?;
    let base = config.to_simulation_config(Overrides {
        seed: seed_flag,
        ..Overrides::default()
    })?;
    let parts = base.build_parts()?;
    let sample = gen_sample(
        base.p,
        &base.n_sizes,
        &parts.cov_models,
        base.dist,
        &parts.means,
        base.seed,
        replicate,
    )?;
    let labels: Vec<String> = (1..=sample.k()).map(|i| format!("g{i}")).collect();
    write_dataset(out, &labels, &sample)?;
    println!(
        "wrote {} ({} groups, {} rows, p={})",
        out.display(),
        sample.k(),
        sample.n_sizes().iter().sum::<usize>(),
        sample.p()
    );
    Ok(())
}
