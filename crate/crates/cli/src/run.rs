//! Executes a parsed configuration and writes its artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use sparsevar::estimators::fit;
use sparsevar::io::{format_f64, parse_model, parse_series, write_model, write_series};
use sparsevar::metrics::{crit_gamma_error, crit_param_error, crit_spectral_error, NormKind, DEFAULT_N_FREQ};
use sparsevar::model::simulate;
use sparsevar::simlab::{residual_sigma, run_monte_carlo, BenchmarkResult};
use sparsevar::VarModel;

use crate::config::{Command, RunConfig};
use crate::error::CliError;
use crate::verify::{run_all, Sizes};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Hex SHA-256 of the configuration text.
pub fn config_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn header(cfg: &RunConfig, hash: &str) -> Vec<String> {
    let seed = cfg.seed.map_or("none".to_string(), |s| s.to_string());
    vec![
        format!("sparsevar {VERSION}"),
        format!("command: {}", cfg.command.name()),
        format!("config-sha256: {hash}"),
        format!("seed: {seed}"),
    ]
}

fn comment_block(lines: &[String]) -> String {
    lines.iter().map(|l| format!("# {l}\n")).collect()
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::write(path, e))
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::read(path, e))
}

/// Runs `cfg` inside a thread pool of `cfg.threads` workers and returns
/// the files written.
pub fn run(cfg: &RunConfig, config_text: &str) -> Result<Vec<PathBuf>, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| CliError::Internal(format!("thread pool: {e}")))?;
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::write(&cfg.out, e))?;
    let hash = config_hash(config_text);
    pool.install(|| match cfg.command {
        Command::Simulate => run_simulate(cfg, &hash),
        Command::Estimate => run_estimate(cfg, &hash),
        Command::Benchmark => run_benchmark(cfg, &hash),
        Command::Verify => run_verify(cfg, &hash),
    })
}

fn require_scenario(cfg: &RunConfig) -> Result<&sparsevar::simlab::Scenario, CliError> {
    cfg.scenario
        .as_ref()
        .ok_or_else(|| CliError::Config(format!("`{}` needs a [scenario] section", cfg.command.name())))
}

fn run_simulate(cfg: &RunConfig, hash: &str) -> Result<Vec<PathBuf>, CliError> {
    let sc = require_scenario(cfg)?;
    let model = sc.model()?;
    let series = simulate(&model, sc.n, sc.burn_in, sc.seed)?;
    let mut comments = header(cfg, hash);
    comments.push(format!("dgp: {}", sc.dgp));
    let series_path = cfg.out.join("series.csv");
    let model_path = cfg.out.join("model.txt");
    write_file(&series_path, &write_series(&series, &comments))?;
    write_file(&model_path, &write_model(&model, &comments))?;
    Ok(vec![series_path, model_path])
}

fn run_estimate(cfg: &RunConfig, hash: &str) -> Result<Vec<PathBuf>, CliError> {
    let input = cfg
        .estimate
        .as_ref()
        .ok_or_else(|| CliError::Config("`estimate` needs an [estimate] section".into()))?;
    let series = parse_series(&read_file(&input.series)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", input.series.display())))?;
    let truth: Option<VarModel> = match &input.truth {
        Some(path) => {
            let m = parse_model(&read_file(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            if m.d() != series.d() || m.p() != input.p {
                return Err(CliError::Data(format!(
                    "truth model has d={}, p={} but the series has d={} and p={} was requested",
                    m.d(),
                    m.p(),
                    series.d(),
                    input.p
                )));
            }
            Some(m)
        }
        None => None,
    };
    let cv_seed = cfg.seed.unwrap_or(0);
    let (norm, n_freq) = cfg
        .scenario
        .as_ref()
        .map_or((NormKind::Inf, DEFAULT_N_FREQ), |s| (s.norm, s.n_freq));

    let mut written = Vec::new();
    let mut criteria = String::new();
    for (name, est_cfg) in &cfg.estimators {
        let mut est_cfg = est_cfg.clone();
        est_cfg.cv_seed = cv_seed;
        let est = fit(&est_cfg, &series, input.p)?;
        let sigma = residual_sigma(&series, &est.coeffs, cv_seed)?;
        let model = VarModel::new(est.coeffs.clone(), sigma.clone())?;
        let mut comments = header(cfg, hash);
        comments.push(format!("estimator: {name} ({})", est_cfg.label()));
        comments.push(format!(
            "lambda: {}",
            est.lambdas.iter().map(|l| format_f64(*l)).collect::<Vec<_>>().join(" ")
        ));
        comments.push("Sigma: thresholded residual covariance".into());
        for note in &est.provenance.notes {
            comments.push(format!("note: {note}"));
        }
        for (row, msg) in &est.provenance.row_failures {
            comments.push(format!("row {} failed: {msg}", row + 1));
        }
        let path = cfg.out.join(format!("model_{name}.txt"));
        write_file(&path, &write_model(&model, &comments))?;
        written.push(path);

        if let Some(t) = &truth {
            let values = [
                ("param", crit_param_error(t.coeffs(), &est.coeffs)?),
                ("gamma", crit_gamma_error(t, &est.coeffs, &sigma, norm)?),
                ("spectral", crit_spectral_error(t, &est.coeffs, &sigma, norm, n_freq)?),
            ];
            for (crit, v) in values {
                criteria.push_str(&format!("{name},{crit},{}\n", format_f64(v)));
            }
        }
    }
    if truth.is_some() {
        let mut comments = header(cfg, hash);
        comments.push(format!("norm: {}", norm.name()));
        let path = cfg.out.join("criteria.csv");
        write_file(&path, &format!("{}estimator,criterion,value\n{criteria}", comment_block(&comments)))?;
        written.push(path);
    }
    Ok(written)
}

fn run_benchmark(cfg: &RunConfig, hash: &str) -> Result<Vec<PathBuf>, CliError> {
    let sc = require_scenario(cfg)?;
    let result = run_monte_carlo(sc)?;
    let mut comments = header(cfg, hash);
    comments.push(format!("dgp: {}", sc.dgp));
    comments.push(format!("norm: {}", sc.norm.name()));
    let table = cfg.out.join("benchmark.csv");
    write_file(&table, &benchmark_csv(&result, &comments))?;
    let fails = cfg.out.join("failures.csv");
    let mut text = comment_block(&comments);
    text.push_str("estimator,replication,seed,message\n");
    for f in &result.failures {
        let msg = f.message.replace(['"', '\n'], " ");
        text.push_str(&format!("{},{},{},\"{msg}\"\n", f.estimator, f.replication + 1, f.seed));
    }
    write_file(&fails, &text)?;
    Ok(vec![table, fails])
}

pub fn benchmark_csv(result: &BenchmarkResult, comments: &[String]) -> String {
    format!(
        "{}{}\n{}",
        comment_block(comments),
        BenchmarkResult::csv_header(),
        result.to_csv_rows()
    )
}

fn run_verify(cfg: &RunConfig, hash: &str) -> Result<Vec<PathBuf>, CliError> {
    let sizes = if cfg.verify_level == "full" { Sizes::full() } else { Sizes::quick() };
    let outcomes = run_all(&sizes);
    let mut comments = header(cfg, hash);
    comments.push(format!("level: {}", cfg.verify_level));
    let mut text = comment_block(&comments);
    for o in &outcomes {
        text.push_str(&o.line());
        text.push('\n');
    }
    let failed: usize = outcomes.iter().map(|o| o.failed).sum();
    let passed: usize = outcomes.iter().map(|o| o.passed).sum();
    text.push_str(&format!("total: {passed} passed, {failed} failed\n"));
    let path = cfg.out.join("verify.txt");
    write_file(&path, &text)?;
    eprint!("{}", text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect::<String>());
    if outcomes.iter().any(|o| !o.ok()) {
        return Err(CliError::Numeric(format!("{failed} verification checks failed")));
    }
    Ok(vec![path])
}
