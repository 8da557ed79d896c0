//! Coupled physics-informed training: residuals, the three loss terms, the
//! positivity-constrained physical coefficients, and the optimisation loop.
//!
//! The objective is
//!
//! ```text
//! L(θ, φ) = w_data L_data(θ) + w_phys L_phys(θ, exp φ) + w_ic L_ic(θ)
//! ```
//!
//! Gradients come from the reverse tape in [`crate::autodiff`]. The free
//! functions [`residual_t`], [`loss_data`], ... evaluate the same quantities
//! point by point without the tape and serve as an independent route.

use std::io::Write;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{init_network, GradientVector, InputScale, NetworkModel, Tape, Var};
use crate::error::{Error, Result};
use crate::forcing::{ForcingSample, ForcingSignals};
use crate::model::{rhs_at, InitialCondition, ParameterSet, Rate};
use crate::optim::{Adam, AdamSettings};
use crate::synthetic::{rng_stream, ObservationSet};

/// RNG stream used by [`CollocationStrategy::SeededUniformRandom`].
pub const STREAM_COLLOCATION: u64 = 3;

/// Physical coefficients in unconstrained form, `λ_k = exp(φ_k)`, ordered
/// `a1..a4, b1..b4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainablePhysicalParams {
    pub phi: [f64; 8],
}

impl TrainablePhysicalParams {
    /// All coefficients equal to `value`.
    pub fn uniform(value: f64) -> Result<Self> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::validation(
                "initial_coefficient",
                format!("must be positive and finite, got {value}"),
            ));
        }
        Ok(Self { phi: [value.ln(); 8] })
    }

    pub fn from_parameter_set(p: &ParameterSet) -> Result<Self> {
        let mut phi = [0.0; 8];
        for ((slot, v), name) in phi.iter_mut().zip(p.to_array()).zip(ParameterSet::NAMES) {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(name, "must be strictly positive"));
            }
            *slot = v.ln();
        }
        Ok(Self { phi })
    }

    pub fn coefficients(&self) -> [f64; 8] {
        self.phi.map(f64::exp)
    }

    pub fn to_parameter_set(&self) -> ParameterSet {
        ParameterSet::from_array(self.coefficients())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w_data: f64,
    pub w_phys: f64,
    pub w_ic: f64,
}

impl Default for LossWeights {
    /// Physics weighted 10x: with unit weights the data term dominates and
    /// the recovered humidity coefficients stay biased.
    fn default() -> Self {
        Self {
            w_data: 1.0,
            w_phys: 10.0,
            w_ic: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("w_data", self.w_data),
            ("w_phys", self.w_phys),
            ("w_ic", self.w_ic),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::validation(
                    name,
                    format!("must be finite and >= 0, got {w}"),
                ));
            }
        }
        if self.w_data == 0.0 && self.w_phys == 0.0 && self.w_ic == 0.0 {
            return Err(Error::validation(
                "loss_weights",
                "at least one weight must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CollocationStrategy {
    /// Evenly spaced, both endpoints included.
    #[default]
    UniformGrid,
    /// Independent uniform draws, sorted.
    SeededUniformRandom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollocationSet {
    pub times: Vec<f64>,
}

impl CollocationSet {
    pub fn count(&self) -> usize {
        self.times.len()
    }
}

pub fn make_collocation(
    horizon: [f64; 2],
    n: usize,
    strategy: CollocationStrategy,
    seed: u64,
) -> Result<CollocationSet> {
    let [start, end] = horizon;
    if n == 0 {
        return Err(Error::validation("collocation_count", "must be >= 1"));
    }
    if !(start.is_finite() && end.is_finite() && start < end) {
        return Err(Error::validation(
            "horizon",
            format!("invalid interval [{start}, {end}]"),
        ));
    }
    let times = match strategy {
        CollocationStrategy::UniformGrid if n == 1 => vec![start],
        CollocationStrategy::UniformGrid => {
            let span = end - start;
            let last = (n - 1) as f64;
            (0..n)
                .map(|i| {
                    if i == n - 1 {
                        end
                    } else {
                        start + span * (i as f64 / last)
                    }
                })
                .collect()
        }
        CollocationStrategy::SeededUniformRandom => {
            let mut rng = rng_stream(seed, STREAM_COLLOCATION);
            let mut t: Vec<f64> = (0..n).map(|_| rng.random_range(start..=end)).collect();
            t.sort_by(f64::total_cmp);
            t
        }
    };
    Ok(CollocationSet { times })
}

/// One logged evaluation of the objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub iteration: usize,
    pub l_data: f64,
    pub l_phys: f64,
    pub l_ic: f64,
    pub l_total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        self.l_data.is_finite()
            && self.l_phys.is_finite()
            && self.l_ic.is_finite()
            && self.l_total.is_finite()
    }
}

/// Writes `iter,l_data,l_phys,l_ic,l_total` rows.
pub fn write_history_csv<W: Write>(mut w: W, history: &[LossBreakdown]) -> Result<()> {
    writeln!(w, "iter,l_data,l_phys,l_ic,l_total")?;
    for b in history {
        writeln!(
            w,
            "{},{:e},{:e},{:e},{:e}",
            b.iteration, b.l_data, b.l_phys, b.l_ic, b.l_total
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    /// Learning rate multiplier reached at the last iteration. `1.0` keeps
    /// the rate constant.
    pub lr_decay: f64,
    /// Fraction of the run after which the geometric decay starts.
    pub lr_decay_start: f64,
    pub loss_weights: LossWeights,
    pub collocation_count: usize,
    pub collocation: CollocationStrategy,
    pub seed: u64,
    pub adam: AdamSettings,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    /// Training interval; also fixes the network input scaling.
    pub horizon: [f64; 2],
    pub initial_coefficient: f64,
    pub log_every: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            iterations: 20_000,
            learning_rate: 1e-3,
            lr_decay: 0.1,
            lr_decay_start: 0.5,
            loss_weights: LossWeights::default(),
            collocation_count: 2000,
            collocation: CollocationStrategy::UniformGrid,
            seed: 0,
            adam: AdamSettings::default(),
            hidden_layers: 3,
            hidden_width: 64,
            horizon: [0.0, 72.0],
            initial_coefficient: 0.1,
            log_every: 100,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::validation("iterations", "must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::validation("learning_rate", "must be positive"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::validation("lr_decay", "must lie in (0, 1]"));
        }
        if !(0.0..1.0).contains(&self.lr_decay_start) {
            return Err(Error::validation("lr_decay_start", "must lie in [0, 1)"));
        }
        self.loss_weights.validate()?;
        if self.collocation_count == 0 {
            return Err(Error::validation("collocation_count", "must be >= 1"));
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1)
            || !(0.0..1.0).contains(&a.beta2)
            || !(a.epsilon.is_finite() && a.epsilon > 0.0)
        {
            return Err(Error::validation("adam", "need 0 <= beta < 1 and epsilon > 0"));
        }
        if self.hidden_layers == 0 || self.hidden_width == 0 {
            return Err(Error::validation(
                "hidden_layers",
                "network needs at least one unit",
            ));
        }
        let [s, e] = self.horizon;
        if !(s.is_finite() && e.is_finite() && s < e) {
            return Err(Error::validation("horizon", "need start < end"));
        }
        TrainablePhysicalParams::uniform(self.initial_coefficient)?;
        if self.log_every == 0 {
            return Err(Error::validation("log_every", "must be >= 1"));
        }
        Ok(())
    }

    /// Learning rate used at iteration `k` (0-based).
    pub fn learning_rate_at(&self, k: usize) -> f64 {
        if self.lr_decay == 1.0 {
            return self.learning_rate;
        }
        let n = self.iterations as f64;
        let start = self.lr_decay_start * n;
        let progress = ((k as f64 - start) / (n - start)).clamp(0.0, 1.0);
        self.learning_rate * self.lr_decay.powf(progress)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainingConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Freshly initialised network for this configuration.
    pub fn network(&self) -> Result<NetworkModel> {
        let mut net = init_network(self.hidden_layers, self.hidden_width, self.seed)?;
        net.input_scale = InputScale::for_horizon(self.horizon[0], self.horizon[1]);
        Ok(net)
    }
}

/// Forcings tabulated at the collocation times.
#[derive(Debug, Clone)]
pub struct PhysicsContext {
    pub times: Vec<f64>,
    pub t_out: Vec<f64>,
    pub h_out: Vec<f64>,
    pub radiation: Vec<f64>,
    pub ventilation: Vec<f64>,
    pub moisture: Vec<f64>,
}

impl PhysicsContext {
    pub fn new(forcings: &ForcingSignals, colloc: &CollocationSet) -> Result<Self> {
        if colloc.times.is_empty() {
            return Err(Error::validation("collocation", "empty collocation set"));
        }
        let n = colloc.count();
        let mut ctx = Self {
            times: colloc.times.clone(),
            t_out: Vec::with_capacity(n),
            h_out: Vec::with_capacity(n),
            radiation: Vec::with_capacity(n),
            ventilation: Vec::with_capacity(n),
            moisture: Vec::with_capacity(n),
        };
        for &t in &colloc.times {
            let f = forcings.checked_sample(t)?;
            ctx.t_out.push(f.t_out);
            ctx.h_out.push(f.h_out);
            ctx.radiation.push(f.radiation);
            ctx.ventilation.push(f.ventilation);
            ctx.moisture.push(f.moisture);
        }
        Ok(ctx)
    }
}

/// Everything the objective depends on apart from θ and φ.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    pub observations: &'a ObservationSet,
    /// `None` drops the physics term entirely.
    pub physics: Option<PhysicsContext>,
    /// `None` drops the initial-condition term entirely.
    pub initial_condition: Option<InitialCondition>,
    pub weights: LossWeights,
}

/// Tape nodes of one objective evaluation.
pub struct ObjectiveTerms<'t> {
    pub data: Var<'t>,
    pub phys: Option<Var<'t>>,
    pub ic: Option<Var<'t>>,
    pub total: Var<'t>,
}

/// Which loss terms fed the gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ActiveTerms {
    pub data: bool,
    pub phys: bool,
    pub ic: bool,
}

impl Problem<'_> {
    fn active(&self) -> ActiveTerms {
        ActiveTerms {
            data: self.weights.w_data > 0.0,
            phys: self.weights.w_phys > 0.0 && self.physics.is_some(),
            ic: self.weights.w_ic > 0.0 && self.initial_condition.is_some(),
        }
    }

    /// True when every available term is part of the recorded graph.
    fn records_everything(&self) -> bool {
        let a = self.active();
        a.phys == self.physics.is_some() && a.ic == self.initial_condition.is_some()
    }

    /// Records the objective on `tape`. Terms with zero weight are left out
    /// of the graph, so they cost nothing and contribute no gradient.
    pub fn record<'t>(&self, tape: &'t Tape<'t>, phi: &[f64; 8]) -> Result<ObjectiveTerms<'t>> {
        let active = self.active();
        let obs = self.observations;
        if obs.is_empty() {
            return Err(Error::validation("observations", "empty observation set"));
        }
        let lam = tape.parameters(phi)?.exp();

        let out = tape.network(&obs.times, false)?;
        let e_t = out.temperature - tape.constant(obs.temperature.clone());
        let e_h = out.humidity - tape.constant(obs.humidity.clone());
        let data = (e_t.square() + e_h.square()).mean();
        let mut total = data.scale(self.weights.w_data);

        let mut phys = None;
        if active.phys {
            let ctx = self.physics.as_ref().expect("checked by active()");
            let (r_t, r_h) = residual_nodes(tape, ctx, lam)?;
            let l = (r_t.square() + r_h.square()).mean();
            total = total + l.scale(self.weights.w_phys);
            phys = Some(l);
        }

        let mut ic = None;
        if active.ic {
            let ic0 = self.initial_condition.expect("checked by active()");
            let out = tape.network(&[ic0.t0], false)?;
            let d_t = out.temperature - tape.scalar(ic0.state0.temperature);
            let d_h = out.humidity - tape.scalar(ic0.state0.humidity);
            let l = d_t.square() + d_h.square();
            total = total + l.scale(self.weights.w_ic);
            ic = Some(l);
        }

        Ok(ObjectiveTerms {
            data,
            phys,
            ic,
            total,
        })
    }

    /// Loss breakdown and gradient `(∂L/∂θ, ∂L/∂φ)` at `(net, phi)`.
    pub fn gradient(&self, net: &NetworkModel, phi: &[f64; 8]) -> Result<(LossBreakdown, GradientVector)> {
        let tape = Tape::with_network(net);
        let terms = self.record(&tape, phi)?;
        let breakdown = LossBreakdown {
            iteration: 0,
            l_data: terms.data.item(),
            l_phys: terms.phys.map_or(0.0, |v| v.item()),
            l_ic: terms.ic.map_or(0.0, |v| v.item()),
            l_total: terms.total.item(),
        };
        let grad = tape.backward(terms.total)?;
        Ok((breakdown, grad))
    }

    /// Breakdown of every term, including zero-weight ones, without
    /// gradients.
    pub fn breakdown(&self, net: &NetworkModel, params: &TrainablePhysicalParams) -> Result<LossBreakdown> {
        let w = self.weights;
        let l_data = loss_data(net, self.observations)?;
        let l_phys = match &self.physics {
            Some(ctx) => loss_phys_ctx(net, params, ctx)?,
            None => 0.0,
        };
        let l_ic = match &self.initial_condition {
            Some(ic) => loss_ic(net, ic)?,
            None => 0.0,
        };
        Ok(LossBreakdown {
            iteration: 0,
            l_data,
            l_phys,
            l_ic,
            l_total: w.w_data * l_data + w.w_phys * l_phys + w.w_ic * l_ic,
        })
    }
}

/// Residual nodes `R_T`, `R_H` at the collocation times.
fn residual_nodes<'t>(tape: &'t Tape<'t>, ctx: &PhysicsContext, lam: Var<'t>) -> Result<(Var<'t>, Var<'t>)> {
    let out = tape.network(&ctx.times, true)?;
    let (t, h) = (out.temperature, out.humidity);
    let dt = out.d_temperature.expect("tangent requested");
    let dh = out.d_humidity.expect("tangent requested");
    let t_out = tape.constant(ctx.t_out.clone());
    let h_out = tape.constant(ctx.h_out.clone());
    let rad = tape.constant(ctx.radiation.clone());
    let vent = tape.constant(ctx.ventilation.clone());
    let moist = tape.constant(ctx.moisture.clone());
    let k = |i| lam.index(i);

    let f_t = k(0) * (t_out - t) + k(1) * rad - k(2) * vent * (t - t_out) + k(3) * (h - h_out);
    let f_h = k(4) * (h_out - h) + k(5) * moist - k(6) * vent * (h - h_out) + k(7) * (t_out - t);
    Ok((dt - f_t, dh - f_h))
}

fn pointwise_residual(
    net: &NetworkModel,
    params: &TrainablePhysicalParams,
    f: &ForcingSample,
    t: f64,
) -> Result<Rate> {
    let out = net.forward(t)?;
    let rate = rhs_at(out.value, &params.to_parameter_set(), f);
    Ok(Rate {
        d_temperature: out.time_derivative.d_temperature - rate.d_temperature,
        d_humidity: out.time_derivative.d_humidity - rate.d_humidity,
    })
}

/// `R_T = dT/dt - f_T(T, H, forcings; a)` at `t`.
pub fn residual_t(
    net: &NetworkModel,
    params: &TrainablePhysicalParams,
    forcings: &ForcingSignals,
    t: f64,
) -> Result<f64> {
    Ok(pointwise_residual(net, params, &forcings.checked_sample(t)?, t)?.d_temperature)
}

/// `R_H = dH/dt - f_H(T, H, forcings; b)` at `t`.
pub fn residual_h(
    net: &NetworkModel,
    params: &TrainablePhysicalParams,
    forcings: &ForcingSignals,
    t: f64,
) -> Result<f64> {
    Ok(pointwise_residual(net, params, &forcings.checked_sample(t)?, t)?.d_humidity)
}

/// Mean over observations of the squared T and H misfits.
pub fn loss_data(net: &NetworkModel, obs: &ObservationSet) -> Result<f64> {
    if obs.is_empty() {
        return Err(Error::validation("observations", "empty observation set"));
    }
    let (t, h) = net.predict(&obs.times)?;
    let sum: f64 = (0..obs.len())
        .map(|i| (t[i] - obs.temperature[i]).powi(2) + (h[i] - obs.humidity[i]).powi(2))
        .sum();
    Ok(sum / obs.len() as f64)
}

/// Mean over collocation points of `R_T² + R_H²`.
pub fn loss_phys(
    net: &NetworkModel,
    params: &TrainablePhysicalParams,
    forcings: &ForcingSignals,
    colloc: &CollocationSet,
) -> Result<f64> {
    loss_phys_ctx(net, params, &PhysicsContext::new(forcings, colloc)?)
}

fn loss_phys_ctx(net: &NetworkModel, params: &TrainablePhysicalParams, ctx: &PhysicsContext) -> Result<f64> {
    let mut sum = 0.0;
    for (j, &t) in ctx.times.iter().enumerate() {
        let f = ForcingSample {
            t_out: ctx.t_out[j],
            h_out: ctx.h_out[j],
            radiation: ctx.radiation[j],
            ventilation: ctx.ventilation[j],
            moisture: ctx.moisture[j],
        };
        let r = pointwise_residual(net, params, &f, t)?;
        sum += r.d_temperature.powi(2) + r.d_humidity.powi(2);
    }
    Ok(sum / ctx.times.len() as f64)
}

/// Squared distance of the network state at `t0` from the initial state.
pub fn loss_ic(net: &NetworkModel, ic: &InitialCondition) -> Result<f64> {
    let v = net.forward(ic.t0)?.value;
    Ok((v.temperature - ic.state0.temperature).powi(2) + (v.humidity - ic.state0.humidity).powi(2))
}

/// All three terms and their weighted sum.
pub fn total_loss(
    net: &NetworkModel,
    params: &TrainablePhysicalParams,
    forcings: &ForcingSignals,
    obs: &ObservationSet,
    colloc: &CollocationSet,
    ic: &InitialCondition,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    weights.validate()?;
    let problem = Problem {
        observations: obs,
        physics: Some(PhysicsContext::new(forcings, colloc)?),
        initial_condition: Some(*ic),
        weights: *weights,
    };
    problem.breakdown(net, params)
}

/// Progress report handed to training observers after every update.
#[derive(Debug)]
pub struct Step<'a> {
    pub iteration: usize,
    pub coefficients: [f64; 8],
    /// Present on logging iterations.
    pub breakdown: Option<&'a LossBreakdown>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PinnResult {
    pub network: NetworkModel,
    pub parameters: ParameterSet,
    pub trainable: TrainablePhysicalParams,
    pub history: Vec<LossBreakdown>,
    pub active_terms: ActiveTerms,
    pub seconds: f64,
}

impl PinnResult {
    pub fn recovered(&self) -> RecoveredParameters {
        RecoveredParameters {
            coefficients: self.parameters,
            phi: self.trainable.phi,
        }
    }
}

/// File form of the learned coefficients: `{a1..b4, phi}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveredParameters {
    #[serde(flatten)]
    pub coefficients: ParameterSet,
    pub phi: [f64; 8],
}

pub(crate) struct Outcome {
    pub network: NetworkModel,
    pub trainable: TrainablePhysicalParams,
    pub history: Vec<LossBreakdown>,
    pub active_terms: ActiveTerms,
    pub seconds: f64,
}

fn diverged(iteration: usize, b: &LossBreakdown) -> Error {
    Error::TrainingDiverged {
        iteration,
        l_data: b.l_data,
        l_phys: b.l_phys,
        l_ic: b.l_ic,
        l_total: b.l_total,
    }
}

/// Shared optimisation loop. θ and φ have separate Adam states; φ is only
/// updated when `train_phi` is set.
pub(crate) fn optimise(
    problem: &Problem<'_>,
    cfg: &TrainingConfig,
    train_phi: bool,
    observer: &mut dyn FnMut(&Step<'_>),
) -> Result<Outcome> {
    cfg.validate()?;
    problem.weights.validate()?;
    problem.observations.validate()?;
    let start = Instant::now();
    let mut net = cfg.network()?;
    let mut trainable = TrainablePhysicalParams::uniform(cfg.initial_coefficient)?;
    let mut adam_theta = Adam::new(net.param_count(), cfg.adam);
    let mut adam_phi = Adam::new(8, cfg.adam);
    let mut history = Vec::with_capacity(cfg.iterations / cfg.log_every + 2);
    let active = problem.active();
    let nan_at = |iteration| LossBreakdown {
        iteration,
        l_data: f64::NAN,
        l_phys: f64::NAN,
        l_ic: f64::NAN,
        l_total: f64::NAN,
    };
    let numeric = |e: Error, it: usize| {
        if e.is_numeric() {
            diverged(it, &nan_at(it))
        } else {
            e
        }
    };

    for it in 0..cfg.iterations {
        let (mut b, grad) = problem
            .gradient(&net, &trainable.phi)
            .map_err(|e| numeric(e, it))?;
        b.iteration = it;
        if !b.is_finite() || !grad.is_finite() {
            return Err(diverged(it, &b));
        }
        let logged = if it % cfg.log_every != 0 {
            None
        } else if problem.records_everything() {
            Some(b)
        } else {
            // Zero-weight terms are absent from the graph; evaluate them
            // separately so the history shows every component.
            let mut full = problem.breakdown(&net, &trainable).map_err(|e| numeric(e, it))?;
            full.iteration = it;
            Some(full)
        };
        if let Some(entry) = logged {
            history.push(entry);
        }

        let lr = cfg.learning_rate_at(it);
        adam_theta.update(&mut net.params, grad.theta(), lr);
        if train_phi {
            adam_phi.update(&mut trainable.phi, grad.phi(), lr);
        }
        observer(&Step {
            iteration: it,
            coefficients: trainable.coefficients(),
            breakdown: logged.as_ref(),
        });
    }

    let n = cfg.iterations;
    let mut last = problem.breakdown(&net, &trainable).map_err(|e| numeric(e, n))?;
    last.iteration = n;
    if !last.is_finite() {
        return Err(diverged(n, &last));
    }
    history.push(last);

    Ok(Outcome {
        network: net,
        trainable,
        history,
        active_terms: active,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Jointly fits the network and the physical coefficients.
pub fn train_pinn(
    data: &ObservationSet,
    forcings: &ForcingSignals,
    ic: &InitialCondition,
    cfg: &TrainingConfig,
) -> Result<PinnResult> {
    train_pinn_with(data, forcings, ic, cfg, &mut |_| {})
}

/// [`train_pinn`] with a callback after every update.
pub fn train_pinn_with(
    data: &ObservationSet,
    forcings: &ForcingSignals,
    ic: &InitialCondition,
    cfg: &TrainingConfig,
    observer: &mut dyn FnMut(&Step<'_>),
) -> Result<PinnResult> {
    cfg.validate()?;
    forcings.validate()?;
    let colloc = make_collocation(cfg.horizon, cfg.collocation_count, cfg.collocation, cfg.seed)?;
    let problem = Problem {
        observations: data,
        physics: Some(PhysicsContext::new(forcings, &colloc)?),
        initial_condition: Some(*ic),
        weights: cfg.loss_weights,
    };
    let out = optimise(&problem, cfg, true, observer)?;
    Ok(PinnResult {
        parameters: out.trainable.to_parameter_set(),
        network: out.network,
        trainable: out.trainable,
        history: out.history,
        active_terms: out.active_terms,
        seconds: out.seconds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Activation;
    use crate::forcing::DiurnalSignal;
    use crate::model::State;

    fn constant_forcings(t_out: f64, h_out: f64) -> ForcingSignals {
        let c = |v| DiurnalSignal::sinusoid(v, 0.0, 0.0);
        ForcingSignals {
            t_out: c(t_out),
            h_out: c(h_out),
            radiation: DiurnalSignal::daylight(0.0, 0.0, [6.0, 18.0]),
            ventilation: c(0.5),
            moisture: c(0.0),
        }
    }

    /// Network whose output is exactly `(T, H)` for every input.
    fn constant_network(t: f64, h: f64) -> NetworkModel {
        let mut net = NetworkModel::zeros(vec![1, 3, 2], Activation::Tanh).unwrap();
        let (_, b) = net.layer_offsets(1);
        net.params[b] = (t - 22.0) / 10.0;
        net.params[b + 1] = (h - 70.0) / 20.0;
        net
    }

    #[test]
    fn exp_transform_is_positive() {
        let p = TrainablePhysicalParams {
            phi: [-700.0, -30.0, -1.0, 0.0, 1.0, 5.0, 30.0, 100.0],
        };
        assert!(p.coefficients().iter().all(|&c| c > 0.0));
        p.to_parameter_set().validate().unwrap();
        let q = TrainablePhysicalParams::from_parameter_set(&ParameterSet::BENCHMARK).unwrap();
        for (a, b) in q.coefficients().iter().zip(ParameterSet::BENCHMARK.to_array()) {
            assert!((a - b).abs() < 1e-15 * b.max(1.0));
        }
        assert!(TrainablePhysicalParams::uniform(0.0).is_err());
    }

    #[test]
    fn equilibrium_residuals_vanish() {
        let f = constant_forcings(12.0, 80.0);
        let net = constant_network(12.0, 80.0);
        let p = TrainablePhysicalParams::from_parameter_set(&ParameterSet::BENCHMARK).unwrap();
        for t in [0.0, 7.5, 33.0, 72.0] {
            assert!(residual_t(&net, &p, &f, t).unwrap().abs() < 1e-10);
            assert!(residual_h(&net, &p, &f, t).unwrap().abs() < 1e-10);
        }
    }

    #[test]
    fn vanishing_coefficients_leave_time_derivative() {
        let net = init_network(2, 6, 3).unwrap();
        let p = TrainablePhysicalParams { phi: [-30.0; 8] };
        let f = crate::forcing::default_forcings();
        for t in [1.0, 20.0, 50.0] {
            let d = net.forward(t).unwrap().time_derivative;
            assert!((residual_t(&net, &p, &f, t).unwrap() - d.d_temperature).abs() < 1e-10);
            assert!((residual_h(&net, &p, &f, t).unwrap() - d.d_humidity).abs() < 1e-10);
        }
    }

    #[test]
    fn single_observation_arithmetic() {
        let net = constant_network(20.0, 60.0);
        let obs = ObservationSet::new(vec![5.0], vec![21.0], vec![62.0]).unwrap();
        assert!((loss_data(&net, &obs).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn ic_penalty_arithmetic() {
        let net = constant_network(22.5, 69.5);
        let l = loss_ic(&net, &InitialCondition::BENCHMARK).unwrap();
        assert!((l - 0.5).abs() < 1e-12);
        let exact = constant_network(22.0, 70.0);
        assert_eq!(loss_ic(&exact, &InitialCondition::BENCHMARK).unwrap(), 0.0);
    }

    #[test]
    fn ic_penalty_equals_singleton_data_loss() {
        let net = init_network(2, 5, 9).unwrap();
        let ic = InitialCondition {
            t0: 0.0,
            state0: State::new(21.3, 71.9),
        };
        let obs = ObservationSet::new(vec![0.0], vec![21.3], vec![71.9]).unwrap();
        let a = loss_ic(&net, &ic).unwrap();
        let b = loss_data(&net, &obs).unwrap();
        assert!((a - b).abs() <= 1e-12 * a);
    }

    #[test]
    fn empty_sets_rejected() {
        let net = constant_network(20.0, 60.0);
        let empty = ObservationSet {
            times: vec![],
            temperature: vec![],
            humidity: vec![],
        };
        assert!(loss_data(&net, &empty).is_err());
        let p = TrainablePhysicalParams::uniform(0.1).unwrap();
        let colloc = CollocationSet { times: vec![] };
        assert!(loss_phys(&net, &p, &constant_forcings(1.0, 1.0), &colloc).is_err());
    }

    #[test]
    fn weights_validation() {
        assert!(LossWeights::default().validate().is_ok());
        let zero = LossWeights {
            w_data: 0.0,
            w_phys: 0.0,
            w_ic: 0.0,
        };
        assert!(zero.validate().is_err());
        let neg = LossWeights {
            w_phys: -1.0,
            ..LossWeights::default()
        };
        assert!(neg.validate().is_err());
    }

    #[test]
    fn collocation_uniform_grid() {
        let c = make_collocation([0.0, 72.0], 3, CollocationStrategy::UniformGrid, 0).unwrap();
        assert_eq!(c.times, vec![0.0, 36.0, 72.0]);
        let c = make_collocation([0.0, 72.0], 2000, CollocationStrategy::UniformGrid, 0).unwrap();
        let h = 72.0 / 1999.0;
        assert!(c.times.windows(2).all(|w| ((w[1] - w[0]) - h).abs() < 1e-12));
        assert!(make_collocation([0.0, 72.0], 0, CollocationStrategy::UniformGrid, 0).is_err());
    }

    #[test]
    fn collocation_random_is_seeded() {
        let s = CollocationStrategy::SeededUniformRandom;
        let a = make_collocation([0.0, 72.0], 50, s, 4).unwrap();
        let b = make_collocation([0.0, 72.0], 50, s, 4).unwrap();
        let c = make_collocation([0.0, 72.0], 50, s, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.times.iter().all(|t| (0.0..=72.0).contains(t)));
    }

    #[test]
    fn total_loss_weighting() {
        let net = init_network(2, 4, 1).unwrap();
        let p = TrainablePhysicalParams::uniform(0.1).unwrap();
        let f = crate::forcing::default_forcings();
        let obs = ObservationSet::new(
            vec![0.0, 10.0, 40.0],
            vec![22.0, 25.0, 18.0],
            vec![70.0, 60.0, 80.0],
        )
        .unwrap();
        let colloc = make_collocation([0.0, 72.0], 17, CollocationStrategy::UniformGrid, 0).unwrap();
        let ic = InitialCondition::BENCHMARK;
        let only_data = LossWeights {
            w_data: 1.0,
            w_phys: 0.0,
            w_ic: 0.0,
        };
        let b = total_loss(&net, &p, &f, &obs, &colloc, &ic, &only_data).unwrap();
        assert_eq!(b.l_total, b.l_data);
        let b = total_loss(&net, &p, &f, &obs, &colloc, &ic, &LossWeights::default()).unwrap();
        let sum = b.l_data + 10.0 * b.l_phys + b.l_ic;
        assert!((b.l_total - sum).abs() <= 1e-12 * sum);
        let zero = LossWeights {
            w_data: 0.0,
            w_phys: 0.0,
            w_ic: 0.0,
        };
        assert!(total_loss(&net, &p, &f, &obs, &colloc, &ic, &zero).is_err());
    }

    #[test]
    fn tape_objective_matches_pointwise_route() {
        let net = init_network(2, 8, 2).unwrap();
        let p = TrainablePhysicalParams::uniform(0.2).unwrap();
        let f = crate::forcing::default_forcings();
        let obs = ObservationSet::new(
            vec![0.0, 3.0, 30.0, 60.0],
            vec![22.0, 23.0, 19.0, 25.0],
            vec![70.0; 4],
        )
        .unwrap();
        let colloc = make_collocation([0.0, 72.0], 41, CollocationStrategy::UniformGrid, 0).unwrap();
        let problem = Problem {
            observations: &obs,
            physics: Some(PhysicsContext::new(&f, &colloc).unwrap()),
            initial_condition: Some(InitialCondition::BENCHMARK),
            weights: LossWeights {
                w_data: 0.5,
                w_phys: 2.0,
                w_ic: 3.0,
            },
        };
        let (tape_b, _) = problem.gradient(&net, &p.phi).unwrap();
        let point_b = problem.breakdown(&net, &p).unwrap();
        for (a, b) in [
            (tape_b.l_data, point_b.l_data),
            (tape_b.l_phys, point_b.l_phys),
            (tape_b.l_ic, point_b.l_ic),
            (tape_b.l_total, point_b.l_total),
        ] {
            assert!((a - b).abs() <= 1e-12 * b.abs(), "{a} vs {b}");
        }
    }

    #[test]
    fn lr_schedule_endpoints() {
        let cfg = TrainingConfig {
            iterations: 100,
            lr_decay: 0.01,
            lr_decay_start: 0.0,
            ..TrainingConfig::default()
        };
        assert_eq!(cfg.learning_rate_at(0), 1e-3);
        assert!((cfg.learning_rate_at(100) - 1e-5).abs() < 1e-18);
        let late = TrainingConfig {
            lr_decay_start: 0.5,
            ..cfg.clone()
        };
        assert_eq!(late.learning_rate_at(50), 1e-3);
        assert!((late.learning_rate_at(75) - 1e-4).abs() < 1e-15);
        let flat = TrainingConfig {
            lr_decay: 1.0,
            ..TrainingConfig::default()
        };
        assert_eq!(flat.learning_rate_at(19_999), 1e-3);
        let d = TrainingConfig::default();
        assert_eq!(d.learning_rate_at(10_000), 1e-3);
        assert!((d.learning_rate_at(20_000) - 1e-4).abs() < 1e-16);
    }

    #[test]
    fn config_json_round_trip_and_defaults() {
        let cfg = TrainingConfig::default();
        assert_eq!(TrainingConfig::from_json(&cfg.to_json().unwrap()).unwrap(), cfg);
        let partial = TrainingConfig::from_json(r#"{"iterations": 5}"#).unwrap();
        assert_eq!(partial.iterations, 5);
        assert_eq!(partial.collocation_count, 2000);
        assert!(TrainingConfig::from_json(r#"{"learning_rate": 0}"#).is_err());
    }

    #[test]
    fn history_csv_header() {
        let mut buf = Vec::new();
        let b = LossBreakdown {
            iteration: 100,
            l_data: 1.5,
            l_phys: 0.0,
            l_ic: 2.0,
            l_total: 3.5,
        };
        write_history_csv(&mut buf, &[b]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("iter,l_data,l_phys,l_ic,l_total\n100,"));
    }
}
