use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use greenhouse_pinn::autodiff::NetworkModel;
use greenhouse_pinn::baseline::{train_baseline_with, BaselineResult};
use greenhouse_pinn::evaluation::{
    benchmark_checks, cell_generation, compare_methods, recovery_report, rmse_improvement, summarize,
    sweep_cell, write_sweep_csv, BaselineCell, ComparisonReport, CriterionCheck, PinnCell, RecoveryReport,
    SweepCell, SweepConfig, SweepReport, BASELINE_LABEL, PINN_LABEL,
};
use greenhouse_pinn::forcing::ForcingSignals;
use greenhouse_pinn::model::{ParameterSet, TimeGrid, Trajectory};
use greenhouse_pinn::parallel;
use greenhouse_pinn::pinn::{
    train_pinn_with, write_history_csv, PinnResult, RecoveredParameters, Step, TrainingConfig,
};
use greenhouse_pinn::synthetic::{generate_dataset, Dataset, GenerationConfig};
use serde::Serialize;
use serde_json::json;

use crate::config::Layered;
use crate::error::CliError;
use crate::files::{read, read_json, sha256_hex, write_atomic, write_json};
use crate::manifest::RunManifest;
use crate::{ConfigArgs, Method, NoiseArgs};

pub const DATASET_FILE: &str = "dataset.json";
pub const NETWORK_FILE: &str = "network.json";
pub const PARAMS_FILE: &str = "params.json";
pub const HISTORY_FILE: &str = "loss_history.csv";
pub const CELL_FILE: &str = "cell.json";

/// Improvement of the PINN over the baseline reported for the original
/// benchmark: 36% lower RMSE_T, 48% lower RMSE_H.
const REFERENCE_IMPROVEMENT: (f64, f64) = (0.36, 0.48);

fn layered(args: &ConfigArgs) -> Result<Layered, CliError> {
    if args.default {
        Ok(Layered::defaults())
    } else {
        Layered::load(args.config.as_deref())
    }
}

fn apply_noise(gen: &mut GenerationConfig, noise: &NoiseArgs) {
    if let Some(f) = noise.fraction {
        gen.fraction = f;
    }
    if let Some(s) = noise.sigma_t {
        gen.sigma_t = s;
    }
    if let Some(s) = noise.sigma_h {
        gen.sigma_h = s;
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> greenhouse_pinn::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn forcing_csv(forcings: &ForcingSignals, grid: &TimeGrid) -> String {
    let mut s = String::from("t,T_out,H_out,R,V,E\n");
    for t in grid.nodes() {
        let f = forcings.sample(t);
        let _ = writeln!(
            s,
            "{t},{},{},{},{},{}",
            f.t_out, f.h_out, f.radiation, f.ventilation, f.moisture
        );
    }
    s
}

// ---- generate -------------------------------------------------------------

struct Generated {
    dataset: Dataset,
    path: PathBuf,
    sha256: String,
}

fn generate_into(dir: &Path, gen: &GenerationConfig, started: Instant) -> Result<Generated, CliError> {
    let dataset = generate_dataset(gen)?;
    let text = dataset.to_json()?;
    let path = dir.join(DATASET_FILE);
    write_atomic(&path, text.as_bytes())?;
    let mut reference = Vec::new();
    dataset.reference.write_csv(&mut reference)?;
    write_atomic(&dir.join("reference.csv"), &reference)?;
    write_atomic(
        &dir.join("forcing.csv"),
        forcing_csv(&dataset.meta.forcings, &gen.grid).as_bytes(),
    )?;
    let sha256 = sha256_hex(text.as_bytes());
    let mut m = RunManifest::new("generate", json!({ "generation": gen }), started);
    m.outputs = vec![DATASET_FILE.into(), "reference.csv".into(), "forcing.csv".into()];
    m.seeds = vec![gen.seed];
    m.dataset_sha256 = Some(sha256.clone());
    m.write(dir)?;
    Ok(Generated {
        dataset,
        path,
        sha256,
    })
}

pub fn generate(
    config: &ConfigArgs,
    noise: &NoiseArgs,
    seed: Option<u64>,
    output: &Path,
) -> Result<(), CliError> {
    let started = Instant::now();
    let mut gen = layered(config)?.config.generation;
    apply_noise(&mut gen, noise);
    if let Some(s) = seed {
        gen.seed = s;
    }
    let g = generate_into(output, &gen, started)?;
    eprintln!(
        "wrote {} ({} observations, sha256 {})",
        g.path.display(),
        g.dataset.observations.len(),
        &g.sha256[..12]
    );
    Ok(())
}

// ---- train ----------------------------------------------------------------

pub enum Trained {
    Pinn(PinnResult),
    Baseline(BaselineResult),
}

fn load_dataset(path: &Path) -> Result<(Dataset, String), CliError> {
    let bytes = read(path)?;
    let text =
        std::str::from_utf8(&bytes).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let ds = Dataset::from_json(text).map_err(|e| CliError::from(e).context(&path.display().to_string()))?;
    Ok((ds, sha256_hex(&bytes)))
}

fn progress(label: String) -> impl FnMut(&Step<'_>) {
    move |s| {
        if let Some(b) = s.breakdown {
            if b.iteration % 2000 == 0 {
                eprintln!(
                    "[{label}] iter {:>6}  l_data {:.4e}  l_phys {:.4e}  l_ic {:.4e}",
                    b.iteration, b.l_data, b.l_phys, b.l_ic
                );
            }
        }
    }
}

fn train_into(
    dir: &Path,
    dataset: &Dataset,
    dataset_path: &Path,
    sha256: &str,
    method: Method,
    training: &TrainingConfig,
    started: Instant,
) -> Result<Trained, CliError> {
    let label = format!("{} seed {}", method.name(), training.seed);
    let (network, history, trained) = match method {
        Method::Pinn => {
            let ic = dataset.meta.initial_condition;
            let r = train_pinn_with(
                &dataset.observations,
                &dataset.meta.forcings,
                &ic,
                training,
                &mut progress(label),
            )?;
            (r.network.clone(), r.history.clone(), Trained::Pinn(r))
        }
        Method::Baseline => {
            let r = train_baseline_with(&dataset.observations, training, &mut progress(label))?;
            (r.network.clone(), r.loss_history.clone(), Trained::Baseline(r))
        }
    };
    write_atomic(&dir.join(NETWORK_FILE), network.to_json()?.as_bytes())?;
    write_atomic(
        &dir.join(HISTORY_FILE),
        &csv_bytes(|w| write_history_csv(w, &history))?,
    )?;
    let mut outputs = vec![NETWORK_FILE.to_string(), HISTORY_FILE.to_string()];
    if let Trained::Pinn(r) = &trained {
        write_json(&dir.join(PARAMS_FILE), &r.recovered())?;
        outputs.push(PARAMS_FILE.into());
    }
    let mut m =
        RunManifest::new("train", json!({ "training": training }), started).input("dataset", dataset_path);
    m.outputs = outputs;
    m.seeds = vec![training.seed];
    m.dataset_sha256 = Some(sha256.into());
    m.method = Some(method.name().into());
    m.write(dir)?;
    Ok(trained)
}

pub fn train(
    dataset_path: &Path,
    method: Method,
    config: &ConfigArgs,
    seed: Option<u64>,
    output: &Path,
) -> Result<Trained, CliError> {
    let started = Instant::now();
    let layers = layered(config)?;
    let (dataset, sha256) = load_dataset(dataset_path)?;
    let mut training = layers.config.training.clone();
    // Unless set explicitly, the seed follows the dataset and the input
    // scaling follows the dataset grid.
    training.seed = match seed {
        Some(s) => s,
        None if layers.file_sets("training.seed") => training.seed,
        None => dataset.meta.seed,
    };
    if !layers.file_sets("training.horizon") {
        training.horizon = [dataset.meta.grid.start, dataset.meta.grid.end];
    }
    let trained = train_into(
        output,
        &dataset,
        dataset_path,
        &sha256,
        method,
        &training,
        started,
    )?;
    match &trained {
        Trained::Pinn(r) => {
            eprintln!("trained PINN in {:.1} s; recovered coefficients:", r.seconds);
            for (n, v) in ParameterSet::NAMES.iter().zip(r.parameters.to_array()) {
                eprintln!("  {n} = {v:.6}");
            }
        }
        Trained::Baseline(r) => eprintln!("trained baseline in {:.1} s", r.seconds),
    }
    Ok(trained)
}

// ---- evaluate -------------------------------------------------------------

fn check_run(dir: &Path, method: Method, sha256: &str) -> Result<RunManifest, CliError> {
    let m = RunManifest::load(dir)?;
    if m.command != "train" || m.method.as_deref() != Some(method.name()) {
        return Err(CliError::usage(format!(
            "{} is not a {} training run",
            dir.display(),
            method.name()
        )));
    }
    if m.dataset_sha256.as_deref() != Some(sha256) {
        return Err(CliError::usage(format!(
            "dataset hash mismatch: {} was trained on sha256 {}, the given dataset is {}",
            dir.display(),
            m.dataset_sha256.as_deref().unwrap_or("(none)"),
            sha256
        )));
    }
    Ok(m)
}

fn load_network(dir: &Path) -> Result<NetworkModel, CliError> {
    let path = dir.join(NETWORK_FILE);
    let bytes = read(&path)?;
    let text = String::from_utf8_lossy(&bytes);
    NetworkModel::from_json(&text).map_err(|e| CliError::from(e).context(&path.display().to_string()))
}

fn reconstruction_csv(
    reference: &Trajectory,
    pinn: &NetworkModel,
    baseline: &NetworkModel,
    obs_times: &[f64],
) -> Result<String, CliError> {
    let (pt, ph) = pinn.predict(&reference.times)?;
    let (bt, bh) = baseline.predict(&reference.times)?;
    let mut s = String::from("t,reference_T,reference_H,pinn_T,pinn_H,baseline_T,baseline_H,obs_flag\n");
    let mut j = 0;
    for (i, &t) in reference.times.iter().enumerate() {
        while j < obs_times.len() && obs_times[j] < t {
            j += 1;
        }
        let flag = u8::from(j < obs_times.len() && obs_times[j] == t);
        let _ = writeln!(
            s,
            "{t},{},{},{},{},{},{},{flag}",
            reference.temperature[i], reference.humidity[i], pt[i], ph[i], bt[i], bh[i]
        );
    }
    Ok(s)
}

fn parameters_csv(report: &RecoveryReport) -> String {
    let mut s = String::from("name,true,learned,relative_error\n");
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            r.name, r.true_value, r.learned_value, r.relative_error
        );
    }
    s
}

pub fn evaluate(
    pinn_dir: &Path,
    baseline_dir: &Path,
    dataset_path: &Path,
    output: &Path,
) -> Result<(ComparisonReport, RecoveryReport), CliError> {
    let started = Instant::now();
    let (dataset, sha256) = load_dataset(dataset_path)?;
    let pm = check_run(pinn_dir, Method::Pinn, &sha256)?;
    let bm = check_run(baseline_dir, Method::Baseline, &sha256)?;
    let pinn = load_network(pinn_dir)?;
    let baseline = load_network(baseline_dir)?;
    let learned: RecoveredParameters = read_json(&pinn_dir.join(PARAMS_FILE))?;

    let mut comparison = compare_methods(&pinn, &baseline, &dataset.reference, &dataset.meta.grid)?;
    comparison.seeds = vec![dataset.meta.seed];
    comparison.sigma_t = Some(dataset.meta.sigma_t);
    comparison.sigma_h = Some(dataset.meta.sigma_h);
    let recovery = recovery_report(&learned.coefficients, &dataset.meta.true_parameters)?;

    write_atomic(&output.join("comparison.json"), comparison.to_json()?.as_bytes())?;
    write_atomic(&output.join("comparison.txt"), comparison.to_table().as_bytes())?;
    write_json(&output.join("recovery.json"), &recovery)?;
    write_atomic(&output.join("recovery.txt"), recovery.to_table().as_bytes())?;
    let recon = reconstruction_csv(&dataset.reference, &pinn, &baseline, &dataset.observations.times)?;
    write_atomic(&output.join("reconstruction.csv"), recon.as_bytes())?;
    write_atomic(
        &output.join("forcing.csv"),
        forcing_csv(&dataset.meta.forcings, &dataset.meta.grid).as_bytes(),
    )?;
    write_atomic(&output.join(HISTORY_FILE), &read(&pinn_dir.join(HISTORY_FILE))?)?;
    write_atomic(
        &output.join("parameters.csv"),
        parameters_csv(&recovery).as_bytes(),
    )?;

    let config = json!({ "pinn": pm.resolved_config, "baseline": bm.resolved_config });
    let mut m = RunManifest::new("evaluate", config, started)
        .input("dataset", dataset_path)
        .input("pinn", pinn_dir)
        .input("baseline", baseline_dir);
    m.outputs = [
        "comparison.json",
        "comparison.txt",
        "recovery.json",
        "recovery.txt",
        "reconstruction.csv",
        "forcing.csv",
        HISTORY_FILE,
        "parameters.csv",
    ]
    .map(String::from)
    .to_vec();
    m.seeds = vec![dataset.meta.seed];
    m.dataset_sha256 = Some(sha256);
    m.write(output)?;
    print!("{}\n{}", comparison.to_table(), recovery.to_table());
    Ok((comparison, recovery))
}

// ---- sweep ----------------------------------------------------------------

fn cell_name(mult: f64, seed: u64) -> String {
    format!("mult{mult}_seed{seed}")
}

fn cell_config(cfg: &SweepConfig, mult: f64, seed: u64) -> serde_json::Value {
    json!({
        "generation": cell_generation(&cfg.generation, mult, seed),
        "training": TrainingConfig { seed, ..cfg.training.clone() },
    })
}

/// Writes a finished cell into a scratch directory and renames it into
/// place, so `cells/<name>` either holds a complete cell or does not exist.
fn write_cell(cells: &Path, cfg: &SweepConfig, cell: &SweepCell, started: Instant) -> Result<(), CliError> {
    let name = cell_name(cell.sigma_mult, cell.seed);
    let scratch = cells.join(format!(".{name}.partial"));
    if scratch.exists() {
        fs::remove_dir_all(&scratch).map_err(|e| CliError::io(&scratch, e))?;
    }
    write_json(&scratch.join(CELL_FILE), cell)?;
    let mut m = RunManifest::new(
        "sweep-cell",
        cell_config(cfg, cell.sigma_mult, cell.seed),
        started,
    );
    m.outputs = vec![CELL_FILE.into()];
    m.seeds = vec![cell.seed];
    m.write(&scratch)?;
    let dest = cells.join(&name);
    fs::rename(&scratch, &dest).map_err(|e| CliError::io(&dest, e))
}

/// Loads a completed cell, refusing cells produced under another config.
fn load_cell(dir: &Path, cfg: &SweepConfig, mult: f64, seed: u64) -> Result<Option<SweepCell>, CliError> {
    if !dir.join(CELL_FILE).exists() {
        return Ok(None);
    }
    let m = RunManifest::load(dir)?;
    if m.resolved_config != cell_config(cfg, mult, seed) {
        return Err(CliError::usage(format!(
            "{} was produced with a different configuration; use a fresh output directory",
            dir.display()
        )));
    }
    Ok(Some(read_json(&dir.join(CELL_FILE))?))
}

fn cell_summary(c: &SweepCell) -> String {
    let show = |r: Result<f64, &String>| match r {
        Ok(v) => format!("{v:.4}"),
        Err(e) => format!("failed ({e})"),
    };
    format!(
        "{}: PINN RMSE_H {}, baseline RMSE_H {}",
        cell_name(c.sigma_mult, c.seed),
        show(c.pinn.as_ref().map(|p| p.metrics.humidity.rmse)),
        show(c.baseline.as_ref().map(|b| b.metrics.humidity.rmse)),
    )
}

const AGGREGATION_NOTE: &str = "sweep.csv holds one row per (sigma_mult, seed, method) for every \
cell whose training succeeded, followed by one row per (sigma_mult, method) with seed = median, \
the per-metric median over seeds.";

fn run_sweep(cfg: &SweepConfig, output: &Path, started: Instant) -> Result<SweepReport, CliError> {
    cfg.validate()?;
    let cells_dir = output.join("cells");
    fs::create_dir_all(&cells_dir).map_err(|e| CliError::io(&cells_dir, e))?;
    let pairs: Vec<(f64, u64)> = cfg
        .multipliers
        .iter()
        .flat_map(|&m| cfg.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let mut done = Vec::with_capacity(pairs.len());
    let mut pending = Vec::new();
    for &(m, s) in &pairs {
        match load_cell(&cells_dir.join(cell_name(m, s)), cfg, m, s)? {
            Some(c) => done.push(Some(c)),
            None => {
                done.push(None);
                pending.push((m, s));
            }
        }
    }
    if pairs.len() > pending.len() {
        eprintln!(
            "resuming sweep: {} of {} cells already complete",
            pairs.len() - pending.len(),
            pairs.len()
        );
    }
    let fresh = parallel::map(&pending, |&(m, s)| -> Result<SweepCell, CliError> {
        let t0 = Instant::now();
        let cell = sweep_cell(cfg, m, s)?;
        write_cell(&cells_dir, cfg, &cell, t0)?;
        eprintln!("{}", cell_summary(&cell));
        Ok(cell)
    });
    let mut fresh = fresh.into_iter();
    let cells = done
        .into_iter()
        .map(|slot| match slot {
            Some(c) => Ok(c),
            None => fresh.next().expect("one result per pending cell"),
        })
        .collect::<Result<Vec<_>, _>>()?;

    let report = SweepReport {
        multipliers: cfg.multipliers.clone(),
        summaries: summarize(cfg, &cells),
        cells,
    };
    write_atomic(
        &output.join("sweep.csv"),
        &csv_bytes(|w| write_sweep_csv(w, &report))?,
    )?;
    write_json(&output.join("summary.json"), &report.summaries)?;
    let mut text = String::new();
    for (s, m) in report.summaries.iter().zip(&report.multipliers) {
        let _ = writeln!(text, "noise multiplier {m} (median over seeds {:?})", s.seeds);
        text.push_str(&s.to_table());
        text.push('\n');
    }
    text.push_str(AGGREGATION_NOTE);
    text.push('\n');
    write_atomic(&output.join("summary.txt"), text.as_bytes())?;

    let mut m = RunManifest::new("sweep", cfg, started);
    m.outputs = ["sweep.csv", "summary.json", "summary.txt", "cells"]
        .map(String::from)
        .to_vec();
    m.seeds = cfg.seeds.clone();
    m.write(output)?;
    Ok(report)
}

pub fn sweep(
    config: &ConfigArgs,
    noise: &NoiseArgs,
    multipliers: Option<Vec<f64>>,
    seed: Option<u64>,
    output: &Path,
) -> Result<(), CliError> {
    let started = Instant::now();
    let mut cfg = layered(config)?.config;
    apply_noise(&mut cfg.generation, noise);
    if let Some(m) = multipliers {
        cfg.multipliers = m;
    }
    if let Some(s) = seed {
        cfg.seeds = vec![s];
    }
    let report = run_sweep(&cfg, output, started)?;
    print!(
        "{}",
        fs::read_to_string(output.join("summary.txt")).unwrap_or_default()
    );
    let failed = report
        .cells
        .iter()
        .filter(|c| c.pinn.is_err() || c.baseline.is_err())
        .count();
    if failed > 0 {
        eprintln!("{failed} cell(s) contain a failed training run; see cells/*/cell.json");
    }
    Ok(())
}

// ---- reproduce-paper ------------------------------------------------------

#[derive(Serialize)]
struct Improvement {
    temperature: f64,
    humidity: f64,
    reference_temperature: f64,
    reference_humidity: f64,
}

#[derive(Serialize)]
struct ReproduceSummary {
    seeds: Vec<u64>,
    checks: Vec<CriterionCheck>,
    improvement: Option<Improvement>,
}

fn stage<T>(what: String, r: Result<T, CliError>) -> Result<T, CliError> {
    r.map_err(|e| e.context(&format!("stage {what}")))
}

pub fn reproduce(config: &ConfigArgs, seed: u64, output: &Path) -> Result<(), CliError> {
    let started = Instant::now();
    let mut cfg = layered(config)?.config;
    cfg.seeds = (seed..seed + 3).collect();
    cfg.validate()?;
    let cells_dir = output.join("sweep").join("cells");

    for &s in &cfg.seeds {
        let gen = cell_generation(&cfg.generation, 1.0, s);
        let data_dir = output.join("data").join(format!("seed{s}"));
        let g = stage(
            format!("generate (seed {s})"),
            generate_into(&data_dir, &gen, Instant::now()),
        )?;
        let training = TrainingConfig {
            seed: s,
            ..cfg.training.clone()
        };
        let runs = output.join("runs").join(format!("seed{s}"));
        let run = |method: Method| {
            stage(
                format!("train (seed {s}, {})", method.name()),
                train_into(
                    &runs.join(method.name()),
                    &g.dataset,
                    &g.path,
                    &g.sha256,
                    method,
                    &training,
                    Instant::now(),
                ),
            )
        };
        let (Trained::Pinn(p), Trained::Baseline(b)) = (run(Method::Pinn)?, run(Method::Baseline)?) else {
            unreachable!("train_into returns the requested method");
        };
        let (comparison, _) = stage(
            format!("evaluate (seed {s})"),
            evaluate(
                &runs.join("pinn"),
                &runs.join("baseline"),
                &g.path,
                &output.join("eval").join(format!("seed{s}")),
            ),
        )?;
        // The nominal-noise sweep cell is exactly this run; store it so the
        // sweep does not train it again.
        if cfg.multipliers.contains(&1.0) && !cells_dir.join(cell_name(1.0, s)).join(CELL_FILE).exists() {
            let metric = |label| *comparison.method(label).expect("both methods evaluated");
            let cell = SweepCell {
                sigma_mult: 1.0,
                seed: s,
                pinn: Ok(PinnCell {
                    metrics: metric(PINN_LABEL),
                    parameters: p.parameters,
                    history: p.history,
                    seconds: p.seconds,
                }),
                baseline: Ok(BaselineCell {
                    metrics: metric(BASELINE_LABEL),
                    seconds: b.seconds,
                }),
            };
            fs::create_dir_all(&cells_dir).map_err(|e| CliError::io(&cells_dir, e))?;
            write_cell(&cells_dir, &cfg, &cell, Instant::now())?;
        }
    }

    let report = stage(
        "sweep".into(),
        run_sweep(&cfg, &output.join("sweep"), Instant::now()),
    )?;
    let at = |mult: f64| -> Vec<SweepCell> {
        report
            .cells
            .iter()
            .filter(|c| c.sigma_mult == mult)
            .cloned()
            .collect()
    };
    let checks = benchmark_checks(&at(1.0), &at(2.0), &cfg.generation.params);
    let improvement = report
        .multipliers
        .iter()
        .position(|&m| m == 1.0)
        .and_then(|i| rmse_improvement(&report.summaries[i]))
        .map(|(t, h)| Improvement {
            temperature: t,
            humidity: h,
            reference_temperature: REFERENCE_IMPROVEMENT.0,
            reference_humidity: REFERENCE_IMPROVEMENT.1,
        });

    let mut text = String::new();
    for c in &checks {
        let _ = writeln!(
            text,
            "[{}] {:>2} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            c.detail
        );
    }
    if let Some(i) = &improvement {
        let _ = writeln!(
            text,
            "RMSE reduction vs baseline (median, nominal noise): T {:.1}% (reference {:.0}%), H {:.1}% (reference {:.0}%)",
            100.0 * i.temperature,
            100.0 * i.reference_temperature,
            100.0 * i.humidity,
            100.0 * i.reference_humidity
        );
    }
    print!("{text}");
    write_atomic(&output.join("summary.txt"), text.as_bytes())?;
    let summary = ReproduceSummary {
        seeds: cfg.seeds.clone(),
        checks,
        improvement,
    };
    write_json(&output.join("summary.json"), &summary)?;
    let mut m = RunManifest::new("reproduce-paper", &cfg, started);
    m.outputs = ["data", "runs", "eval", "sweep", "summary.json", "summary.txt"]
        .map(String::from)
        .to_vec();
    m.seeds = cfg.seeds.clone();
    m.write(output)?;
    Ok(())
}
