//! Reconstruction metrics, parameter recovery, method comparison tables and
//! the observation-noise sweep.
//!
//! Metrics are always taken against the noise-free reference trajectory on
//! its dense grid, never against the noisy observations.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::autodiff::NetworkModel;
use crate::baseline::train_baseline;
use crate::error::{Error, Result};
use crate::model::{InitialCondition, ParameterSet, TimeGrid, Trajectory};
use crate::parallel;
use crate::pinn::{train_pinn, LossBreakdown, TrainingConfig};
use crate::synthetic::{generate_dataset, GenerationConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelMetrics {
    pub rmse: f64,
    pub mae: f64,
    pub r2: f64,
}

/// RMSE, MAE and the reference-mean-centred R².
pub fn channel_metrics(predicted: &[f64], reference: &[f64]) -> Result<ChannelMetrics> {
    if predicted.len() != reference.len() {
        return Err(Error::validation(
            "predicted",
            format!(
                "length {} differs from reference length {}",
                predicted.len(),
                reference.len()
            ),
        ));
    }
    let n = reference.len();
    if n < 2 {
        return Err(Error::validation("reference", "need at least two samples"));
    }
    let mean = reference.iter().sum::<f64>() / n as f64;
    let ss_tot: f64 = reference.iter().map(|r| (r - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::validation("reference", "constant series, R² is undefined"));
    }
    let (mut ss_res, mut abs) = (0.0, 0.0);
    for (p, r) in predicted.iter().zip(reference) {
        let e = p - r;
        ss_res += e * e;
        abs += e.abs();
    }
    Ok(ChannelMetrics {
        rmse: (ss_res / n as f64).sqrt(),
        mae: abs / n as f64,
        r2: 1.0 - ss_res / ss_tot,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    #[serde(rename = "T")]
    pub temperature: ChannelMetrics,
    #[serde(rename = "H")]
    pub humidity: ChannelMetrics,
}

/// Evaluates `net` at the reference times and scores both channels.
pub fn evaluate_network(net: &NetworkModel, reference: &Trajectory) -> Result<MethodMetrics> {
    let (t, h) = net.predict(&reference.times)?;
    Ok(MethodMetrics {
        temperature: channel_metrics(&t, &reference.temperature)?,
        humidity: channel_metrics(&h, &reference.humidity)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub name: String,
    pub true_value: f64,
    pub learned_value: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub rows: Vec<RecoveryRow>,
}

impl RecoveryReport {
    pub fn relative_error(&self, name: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.name == name)
            .map(|r| r.relative_error)
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<10}{:>12}{:>12}{:>12}\n",
            "Parameter", "True", "Learned", "Rel. err"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<10}{:>12.6}{:>12.6}{:>12.6}",
                r.name, r.true_value, r.learned_value, r.relative_error
            );
        }
        s
    }
}

/// `|learned - true| / |true|` per coefficient.
pub fn recovery_report(learned: &ParameterSet, truth: &ParameterSet) -> Result<RecoveryReport> {
    let mut rows = Vec::with_capacity(8);
    for ((name, t), l) in ParameterSet::NAMES
        .iter()
        .zip(truth.to_array())
        .zip(learned.to_array())
    {
        if t == 0.0 {
            return Err(Error::validation(
                *name,
                "true value is zero, relative error undefined",
            ));
        }
        rows.push(RecoveryRow {
            name: name.to_string(),
            true_value: t,
            learned_value: l,
            relative_error: (l - t).abs() / t.abs(),
        });
    }
    Ok(RecoveryReport { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: String,
    pub metrics: MethodMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub methods: Vec<MethodRow>,
    pub seeds: Vec<u64>,
    /// Noise levels of the training data, when known.
    #[serde(rename = "sigma_T")]
    pub sigma_t: Option<f64>,
    #[serde(rename = "sigma_H")]
    pub sigma_h: Option<f64>,
    pub eval_grid: TimeGrid,
}

pub const PINN_LABEL: &str = "Coupled PINN";
pub const BASELINE_LABEL: &str = "Baseline NN";

impl ComparisonReport {
    pub fn method(&self, name: &str) -> Option<&MethodMetrics> {
        self.methods.iter().find(|m| m.method == name).map(|m| &m.metrics)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Aligned table with four decimals.
    pub fn to_table(&self) -> String {
        let head = ["RMSE_T", "MAE_T", "R2_T", "RMSE_H", "MAE_H", "R2_H"];
        let mut s = format!("{:<14}", "Method");
        for h in head {
            let _ = write!(s, "{h:>9}");
        }
        s.push('\n');
        for row in &self.methods {
            let (t, h) = (row.metrics.temperature, row.metrics.humidity);
            let _ = write!(s, "{:<14}", row.method);
            for v in [t.rmse, t.mae, t.r2, h.rmse, h.mae, h.r2] {
                let _ = write!(s, "{v:>9.4}");
            }
            s.push('\n');
        }
        s
    }
}

/// Scores both networks on `eval_grid` against `reference`, which must be
/// sampled on exactly that grid.
pub fn compare_methods(
    pinn: &NetworkModel,
    baseline: &NetworkModel,
    reference: &Trajectory,
    eval_grid: &TimeGrid,
) -> Result<ComparisonReport> {
    eval_grid.validate()?;
    let on_grid = reference.len() == eval_grid.len()
        && reference
            .times
            .iter()
            .enumerate()
            .all(|(i, &t)| t == eval_grid.node(i));
    if !on_grid {
        return Err(Error::validation(
            "eval_grid",
            "reference trajectory is not sampled on the evaluation grid",
        ));
    }
    Ok(ComparisonReport {
        methods: vec![
            MethodRow {
                method: BASELINE_LABEL.into(),
                metrics: evaluate_network(baseline, reference)?,
            },
            MethodRow {
                method: PINN_LABEL.into(),
                metrics: evaluate_network(pinn, reference)?,
            },
        ],
        seeds: Vec::new(),
        sigma_t: None,
        sigma_h: None,
        eval_grid: *eval_grid,
    })
}

/// Median of a nonempty sample (mean of the middle pair for even sizes).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

/// Inputs shared by every sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub generation: GenerationConfig,
    pub training: TrainingConfig,
    pub multipliers: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            generation: GenerationConfig::default(),
            training: TrainingConfig::default(),
            multipliers: vec![1.0, 2.0, 4.0],
            seeds: vec![0, 1, 2],
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        self.generation.validate()?;
        self.training.validate()?;
        if let Some(m) = self.multipliers.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
            return Err(Error::validation(
                "multipliers",
                format!("must be finite and >= 0, got {m}"),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinnCell {
    pub metrics: MethodMetrics,
    pub parameters: ParameterSet,
    pub history: Vec<LossBreakdown>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineCell {
    pub metrics: MethodMetrics,
    pub seconds: f64,
}

/// One (multiplier, seed) cell. Failures are kept as messages so that one
/// diverging run does not abort the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub sigma_mult: f64,
    pub seed: u64,
    pub pinn: std::result::Result<PinnCell, String>,
    pub baseline: std::result::Result<BaselineCell, String>,
}

/// Dataset with both noise levels scaled by `mult`; the clean trajectory and
/// observation times do not depend on `mult`.
pub fn cell_generation(cfg: &GenerationConfig, mult: f64, seed: u64) -> GenerationConfig {
    GenerationConfig {
        sigma_t: cfg.sigma_t * mult,
        sigma_h: cfg.sigma_h * mult,
        seed,
        ..cfg.clone()
    }
}

/// Generates the cell dataset and trains both methods on it.
pub fn sweep_cell(cfg: &SweepConfig, mult: f64, seed: u64) -> Result<SweepCell> {
    let dataset = generate_dataset(&cell_generation(&cfg.generation, mult, seed))?;
    let training = TrainingConfig {
        seed,
        ..cfg.training.clone()
    };
    let ic = InitialCondition {
        t0: cfg.generation.grid.start,
        ..InitialCondition::BENCHMARK
    };
    let pinn = train_pinn(&dataset.observations, &dataset.meta.forcings, &ic, &training).and_then(|r| {
        Ok(PinnCell {
            metrics: evaluate_network(&r.network, &dataset.reference)?,
            parameters: r.parameters,
            history: r.history,
            seconds: r.seconds,
        })
    });
    let baseline = train_baseline(&dataset.observations, &training).and_then(|r| {
        Ok(BaselineCell {
            metrics: evaluate_network(&r.network, &dataset.reference)?,
            seconds: r.seconds,
        })
    });
    Ok(SweepCell {
        sigma_mult: mult,
        seed,
        pinn: pinn.map_err(|e| e.to_string()),
        baseline: baseline.map_err(|e| e.to_string()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub multipliers: Vec<f64>,
    pub cells: Vec<SweepCell>,
    /// One report per multiplier, holding per-method medians over seeds.
    pub summaries: Vec<ComparisonReport>,
}

fn median_metrics(rows: &[MethodMetrics]) -> Option<MethodMetrics> {
    let pick = |f: fn(&MethodMetrics) -> f64| median(&rows.iter().map(f).collect::<Vec<_>>());
    Some(MethodMetrics {
        temperature: ChannelMetrics {
            rmse: pick(|m| m.temperature.rmse)?,
            mae: pick(|m| m.temperature.mae)?,
            r2: pick(|m| m.temperature.r2)?,
        },
        humidity: ChannelMetrics {
            rmse: pick(|m| m.humidity.rmse)?,
            mae: pick(|m| m.humidity.mae)?,
            r2: pick(|m| m.humidity.r2)?,
        },
    })
}

/// Per-multiplier medians over the successful cells.
pub fn summarize(cfg: &SweepConfig, cells: &[SweepCell]) -> Vec<ComparisonReport> {
    let mut out = Vec::new();
    for &mult in &cfg.multipliers {
        let here: Vec<&SweepCell> = cells.iter().filter(|c| c.sigma_mult == mult).collect();
        let base: Vec<MethodMetrics> = here
            .iter()
            .filter_map(|c| c.baseline.as_ref().ok().map(|b| b.metrics))
            .collect();
        let pinn: Vec<MethodMetrics> = here
            .iter()
            .filter_map(|c| c.pinn.as_ref().ok().map(|p| p.metrics))
            .collect();
        let mut methods = Vec::new();
        if let Some(m) = median_metrics(&base) {
            methods.push(MethodRow {
                method: BASELINE_LABEL.into(),
                metrics: m,
            });
        }
        if let Some(m) = median_metrics(&pinn) {
            methods.push(MethodRow {
                method: PINN_LABEL.into(),
                metrics: m,
            });
        }
        out.push(ComparisonReport {
            methods,
            seeds: here.iter().map(|c| c.seed).collect(),
            sigma_t: Some(cfg.generation.sigma_t * mult),
            sigma_h: Some(cfg.generation.sigma_h * mult),
            eval_grid: cfg.generation.grid,
        });
    }
    out
}

/// Trains both methods for every (multiplier, seed) pair. Cells run
/// concurrently when the `parallel` feature is on; each owns all its state.
pub fn noise_sweep(cfg: &SweepConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let pairs: Vec<(f64, u64)> = cfg
        .multipliers
        .iter()
        .flat_map(|&m| cfg.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let cells = parallel::map(&pairs, |&(m, s)| sweep_cell(cfg, m, s))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let summaries = summarize(cfg, &cells);
    Ok(SweepReport {
        multipliers: cfg.multipliers.clone(),
        cells,
        summaries,
    })
}

pub const SWEEP_CSV_HEADER: &str = "sigma_mult,seed,method,rmse_T,mae_T,r2_T,rmse_H,mae_H,r2_H";

fn write_row<W: Write>(w: &mut W, mult: f64, seed: &str, method: &str, m: &MethodMetrics) -> Result<()> {
    let (t, h) = (m.temperature, m.humidity);
    writeln!(
        w,
        "{mult},{seed},{method},{},{},{},{},{},{}",
        t.rmse, t.mae, t.r2, h.rmse, h.mae, h.r2
    )?;
    Ok(())
}

/// One row per successful (cell, method), followed by a `median` row per
/// (multiplier, method).
pub fn write_sweep_csv<W: Write>(mut w: W, report: &SweepReport) -> Result<()> {
    writeln!(w, "{SWEEP_CSV_HEADER}")?;
    for c in &report.cells {
        let seed = c.seed.to_string();
        if let Ok(p) = &c.pinn {
            write_row(&mut w, c.sigma_mult, &seed, "pinn", &p.metrics)?;
        }
        if let Ok(b) = &c.baseline {
            write_row(&mut w, c.sigma_mult, &seed, "baseline", &b.metrics)?;
        }
    }
    for (s, &mult) in report.summaries.iter().zip(&report.multipliers) {
        if let Some(m) = s.method(PINN_LABEL) {
            write_row(&mut w, mult, "median", "pinn", m)?;
        }
        if let Some(m) = s.method(BASELINE_LABEL) {
            write_row(&mut w, mult, "median", "baseline", m)?;
        }
    }
    Ok(())
}

/// One benchmark check with its measured value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionCheck {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Relative RMSE reduction of the coupled PINN over the baseline, per
/// channel: `1 - pinn / baseline`.
pub fn rmse_improvement(report: &ComparisonReport) -> Option<(f64, f64)> {
    let p = report.method(PINN_LABEL)?;
    let b = report.method(BASELINE_LABEL)?;
    Some((
        1.0 - p.temperature.rmse / b.temperature.rmse,
        1.0 - p.humidity.rmse / b.humidity.rmse,
    ))
}

fn median_of(cells: &[&SweepCell], f: impl Fn(&PinnCell, &BaselineCell) -> f64) -> f64 {
    let v: Vec<f64> = cells
        .iter()
        .filter_map(|c| match (&c.pinn, &c.baseline) {
            (Ok(p), Ok(b)) => Some(f(p, b)),
            _ => None,
        })
        .collect();
    median(&v).unwrap_or(f64::NAN)
}

/// Benchmark reproduction checks over paired runs at the nominal noise
/// level (`nominal`) and at doubled noise (`doubled`), medians over seeds.
pub fn benchmark_checks(
    nominal: &[SweepCell],
    doubled: &[SweepCell],
    truth: &ParameterSet,
) -> Vec<CriterionCheck> {
    let ok: Vec<&SweepCell> = nominal
        .iter()
        .filter(|c| c.pinn.is_ok() && c.baseline.is_ok())
        .collect();
    let mut out = Vec::new();
    let mut push = |id, name: &str, passed: bool, detail: String| {
        out.push(CriterionCheck {
            id,
            name: name.into(),
            passed,
            detail,
        })
    };

    let rt = median_of(&ok, |p, _| p.metrics.temperature.rmse);
    let rh = median_of(&ok, |p, _| p.metrics.humidity.rmse);
    let r2t = median_of(&ok, |p, _| p.metrics.temperature.r2);
    let r2h = median_of(&ok, |p, _| p.metrics.humidity.r2);
    let slowest = ok
        .iter()
        .filter_map(|c| c.pinn.as_ref().ok().map(|p| p.seconds))
        .fold(0.0, f64::max);
    push(
        6,
        "reconstruction quality",
        !ok.is_empty() && rt <= 0.25 && rh <= 0.60 && r2t >= 0.995 && r2h >= 0.995 && slowest <= 600.0,
        format!("RMSE_T {rt:.4} RMSE_H {rh:.4} R2_T {r2t:.4} R2_H {r2h:.4} slowest run {slowest:.0} s"),
    );

    let ratio_t = median_of(&ok, |p, b| {
        p.metrics.temperature.rmse / b.metrics.temperature.rmse
    });
    let ratio_h = median_of(&ok, |p, b| p.metrics.humidity.rmse / b.metrics.humidity.rmse);
    push(
        7,
        "relative advantage",
        ratio_t <= 0.95 && ratio_h <= 0.75,
        format!("PINN/baseline RMSE ratio T {ratio_t:.3} (<= 0.95), H {ratio_h:.3} (<= 0.75)"),
    );

    let truth_arr = truth.to_array();
    let rel: Vec<f64> = (0..8)
        .map(|k| {
            median_of(&ok, |p, _| {
                (p.parameters.to_array()[k] - truth_arr[k]).abs() / truth_arr[k].abs()
            })
        })
        .collect();
    let bounds = [0.05, 0.05, 0.25, f64::INFINITY, 0.05, 0.05, 0.25, f64::INFINITY];
    let passed = rel.iter().zip(bounds).all(|(r, b)| *r < b);
    let detail = ParameterSet::NAMES
        .iter()
        .zip(&rel)
        .map(|(n, r)| format!("{n} {:.2}%", 100.0 * r))
        .collect::<Vec<_>>()
        .join(" ");
    push(8, "parameter recovery", passed, detail);

    let decay = median_of(&ok, |p, _| {
        let at100 = p.history.iter().find(|b| b.iteration == 100).map(|b| b.l_phys);
        let last = p.history.last().map(|b| b.l_phys);
        match (at100, last) {
            (Some(a), Some(l)) => l / a,
            _ => f64::NAN,
        }
    });
    push(
        9,
        "physics loss decay",
        decay <= 1e-2,
        format!("final / iteration-100 l_phys {decay:.2e} (<= 1e-2)"),
    );

    let ok2: Vec<&SweepCell> = doubled
        .iter()
        .filter(|c| c.pinn.is_ok() && c.baseline.is_ok())
        .collect();
    let ph = median_of(&ok2, |p, _| p.metrics.humidity.rmse);
    let bh = median_of(&ok2, |_, b| b.metrics.humidity.rmse);
    push(
        10,
        "noise robustness",
        !ok2.is_empty() && ph < bh,
        format!("median RMSE_H at 2x noise: PINN {ph:.4} vs baseline {bh:.4}"),
    );
    out
}
