//! Synthetic benchmark generation: reference trajectory, sparse subsampling,
//! Gaussian measurement noise, and the JSON dataset file.
//!
//! Randomness comes from ChaCha20 seeded with the user seed. Each consumer
//! draws from its own stream of that generator:
//!
//! | stream | use |
//! |--------|-----|
//! | 0 | observation-time selection |
//! | 1 | temperature noise |
//! | 2 | humidity noise |

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forcing::ForcingSignals;
use crate::model::{integrate_rk4, InitialCondition, ParameterSet, TimeGrid, Trajectory};

pub const STREAM_SUBSAMPLE: u64 = 0;
pub const STREAM_NOISE_T: u64 = 1;
pub const STREAM_NOISE_H: u64 = 2;

/// ChaCha20 generator for `seed` positioned on `stream`.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Sparse (possibly noisy) measurements `(t_i, T_i, H_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    #[serde(rename = "t")]
    pub times: Vec<f64>,
    #[serde(rename = "T")]
    pub temperature: Vec<f64>,
    #[serde(rename = "H")]
    pub humidity: Vec<f64>,
}

impl ObservationSet {
    pub fn new(times: Vec<f64>, temperature: Vec<f64>, humidity: Vec<f64>) -> Result<Self> {
        let obs = Self {
            times,
            temperature,
            humidity,
        };
        obs.validate()?;
        Ok(obs)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.is_empty() {
            return Err(Error::validation(
                "observations",
                "at least one observation required",
            ));
        }
        if self.temperature.len() != self.times.len() || self.humidity.len() != self.times.len() {
            return Err(Error::validation(
                "observations",
                format!(
                    "length mismatch: t={}, T={}, H={}",
                    self.times.len(),
                    self.temperature.len(),
                    self.humidity.len()
                ),
            ));
        }
        check_increasing("observations.t", &self.times)?;
        if self
            .temperature
            .iter()
            .chain(&self.humidity)
            .any(|v| !v.is_finite())
        {
            return Err(Error::validation("observations", "values must be finite"));
        }
        Ok(())
    }
}

fn check_increasing(field: &str, times: &[f64]) -> Result<()> {
    if let Some(v) = times.iter().find(|v| !v.is_finite()) {
        return Err(Error::validation(field, format!("non-finite time {v}")));
    }
    if let Some(i) = times.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::validation(
            field,
            format!(
                "times must be strictly increasing (index {}: {} then {})",
                i + 1,
                times[i],
                times[i + 1]
            ),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma_t: f64,
    pub sigma_h: f64,
    pub seed: u64,
}

impl NoiseSpec {
    /// σ_T = 0.30 °C, σ_H = 1.00 %RH.
    pub fn benchmark(seed: u64) -> Self {
        Self {
            sigma_t: 0.30,
            sigma_h: 1.00,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, s) in [("sigma_T", self.sigma_t), ("sigma_H", self.sigma_h)] {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::validation(
                    name,
                    format!("must be finite and >= 0, got {s}"),
                ));
            }
        }
        Ok(())
    }
}

/// Reference trajectory from the benchmark initial condition `(22, 70)`.
pub fn generate_reference(
    params: &ParameterSet,
    forcings: &ForcingSignals,
    grid: &TimeGrid,
) -> Result<Trajectory> {
    let ic = InitialCondition {
        t0: grid.start,
        ..InitialCondition::BENCHMARK
    };
    integrate_rk4(params, forcings, &ic, grid)
}

/// Number of retained nodes: `floor(fraction * nodes)`.
pub fn observation_count(nodes: usize, fraction: f64) -> usize {
    (fraction * nodes as f64).floor() as usize
}

/// Keeps `floor(fraction * nodes)` trajectory nodes chosen uniformly without
/// replacement, always including the first node, sorted by time.
pub fn subsample(traj: &Trajectory, fraction: f64, seed: u64) -> Result<ObservationSet> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::validation(
            "fraction",
            format!("must lie in (0, 1], got {fraction}"),
        ));
    }
    let n = traj.len();
    let k = observation_count(n, fraction);
    if k < 2 {
        return Err(Error::validation(
            "fraction",
            format!("retains {k} of {n} nodes; at least 2 required"),
        ));
    }
    let mut rng = rng_stream(seed, STREAM_SUBSAMPLE);
    let mut idx: Vec<usize> = rand::seq::index::sample(&mut rng, n - 1, k - 1)
        .into_iter()
        .map(|i| i + 1)
        .collect();
    idx.push(0);
    idx.sort_unstable();
    ObservationSet::new(
        idx.iter().map(|&i| traj.times[i]).collect(),
        idx.iter().map(|&i| traj.temperature[i]).collect(),
        idx.iter().map(|&i| traj.humidity[i]).collect(),
    )
}

/// Adds independent `N(0, σ²)` draws per channel and index.
pub fn add_noise(obs: &ObservationSet, spec: &NoiseSpec) -> Result<ObservationSet> {
    spec.validate()?;
    let perturb = |values: &[f64], sigma: f64, stream: u64| -> Vec<f64> {
        if sigma == 0.0 {
            return values.to_vec();
        }
        let mut rng = rng_stream(spec.seed, stream);
        let dist = Normal::new(0.0, sigma).expect("sigma validated");
        values.iter().map(|v| v + dist.sample(&mut rng)).collect()
    };
    Ok(ObservationSet {
        times: obs.times.clone(),
        temperature: perturb(&obs.temperature, spec.sigma_t, STREAM_NOISE_T),
        humidity: perturb(&obs.humidity, spec.sigma_h, STREAM_NOISE_H),
    })
}

/// Everything needed to regenerate a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub seed: u64,
    pub fraction: f64,
    #[serde(rename = "sigma_T")]
    pub sigma_t: f64,
    #[serde(rename = "sigma_H")]
    pub sigma_h: f64,
    pub grid: TimeGrid,
    pub true_parameters: ParameterSet,
    pub initial_condition: InitialCondition,
    pub forcings: ForcingSignals,
    pub n_obs: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Series {
    t: Vec<f64>,
    #[serde(rename = "T")]
    temperature: Vec<f64>,
    #[serde(rename = "H")]
    humidity: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub observations: ObservationSet,
    pub reference: Trajectory,
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    meta: DatasetMeta,
    observations: ObservationSet,
    reference: Series,
}

/// Configuration of the full generation pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub params: ParameterSet,
    pub forcings: ForcingSignals,
    pub grid: TimeGrid,
    pub fraction: f64,
    #[serde(rename = "sigma_T")]
    pub sigma_t: f64,
    #[serde(rename = "sigma_H")]
    pub sigma_h: f64,
    pub seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            params: ParameterSet::BENCHMARK,
            forcings: ForcingSignals::default(),
            grid: TimeGrid::BENCHMARK,
            fraction: 0.25,
            sigma_t: 0.30,
            sigma_h: 1.00,
            seed: 0,
        }
    }
}

impl GenerationConfig {
    pub fn noise(&self) -> NoiseSpec {
        NoiseSpec {
            sigma_t: self.sigma_t,
            sigma_h: self.sigma_h,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.forcings.validate()?;
        self.grid.validate()?;
        self.noise().validate()?;
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::validation("fraction", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// forcings → reference → subsample → noise. A pure function of the config.
pub fn generate_dataset(cfg: &GenerationConfig) -> Result<Dataset> {
    cfg.validate()?;
    let reference = generate_reference(&cfg.params, &cfg.forcings, &cfg.grid)?;
    let clean = subsample(&reference, cfg.fraction, cfg.seed)?;
    let observations = add_noise(&clean, &cfg.noise())?;
    Ok(Dataset {
        meta: DatasetMeta {
            seed: cfg.seed,
            fraction: cfg.fraction,
            sigma_t: cfg.sigma_t,
            sigma_h: cfg.sigma_h,
            grid: cfg.grid,
            true_parameters: cfg.params,
            initial_condition: InitialCondition {
                t0: cfg.grid.start,
                ..InitialCondition::BENCHMARK
            },
            forcings: cfg.forcings.clone(),
            n_obs: observations.len(),
        },
        observations,
        reference,
    })
}

impl Dataset {
    pub fn to_json(&self) -> Result<String> {
        let file = DatasetFile {
            meta: self.meta.clone(),
            observations: self.observations.clone(),
            reference: Series {
                t: self.reference.times.clone(),
                temperature: self.reference.temperature.clone(),
                humidity: self.reference.humidity.clone(),
            },
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: DatasetFile = serde_json::from_str(text)?;
        let ds = Dataset {
            meta: file.meta,
            observations: file.observations,
            reference: Trajectory {
                times: file.reference.t,
                temperature: file.reference.temperature,
                humidity: file.reference.humidity,
            },
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        self.observations.validate()?;
        let r = &self.reference;
        if r.times.is_empty() || r.temperature.len() != r.times.len() || r.humidity.len() != r.times.len() {
            return Err(Error::validation(
                "reference",
                "arrays must be nonempty and equal length",
            ));
        }
        check_increasing("reference.t", &r.times)?;
        if self.meta.n_obs != self.observations.len() {
            return Err(Error::validation(
                "meta.n_obs",
                format!(
                    "header records {} observations, file holds {}",
                    self.meta.n_obs,
                    self.observations.len()
                ),
            ));
        }
        // Observation times are selected grid nodes, so membership is exact.
        let mut j = 0;
        for &t in &self.observations.times {
            while j < r.times.len() && r.times[j] < t {
                j += 1;
            }
            if j == r.times.len() || r.times[j] != t {
                return Err(Error::validation(
                    "observations.t",
                    format!("time {t} is not a reference grid node"),
                ));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

pub fn save_dataset(
    path: impl AsRef<Path>,
    meta: &DatasetMeta,
    obs: &ObservationSet,
    traj: &Trajectory,
) -> Result<()> {
    Dataset {
        meta: meta.clone(),
        observations: obs.clone(),
        reference: traj.clone(),
    }
    .save(path)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<(ObservationSet, Trajectory)> {
    let ds = Dataset::load(path)?;
    Ok((ds.observations, ds.reference))
}
