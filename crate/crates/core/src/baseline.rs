//! Purely data-driven baseline: the same network, initialisation, optimiser
//! and iteration budget as the coupled trainer, fitted to the observation
//! loss alone.

use serde::Serialize;

use crate::autodiff::NetworkModel;
use crate::error::Result;
use crate::pinn::{optimise, ActiveTerms, LossBreakdown, LossWeights, Problem, Step, TrainingConfig};
use crate::synthetic::ObservationSet;

#[derive(Debug, Clone, Serialize)]
pub struct BaselineResult {
    pub network: NetworkModel,
    /// `l_phys` and `l_ic` are always zero.
    pub loss_history: Vec<LossBreakdown>,
    /// Terms that contributed to the gradient; only `data` is ever set.
    pub active_terms: ActiveTerms,
    pub seconds: f64,
}

pub fn train_baseline(data: &ObservationSet, cfg: &TrainingConfig) -> Result<BaselineResult> {
    train_baseline_with(data, cfg, &mut |_| {})
}

/// [`train_baseline`] with a callback after every update.
pub fn train_baseline_with(
    data: &ObservationSet,
    cfg: &TrainingConfig,
    observer: &mut dyn FnMut(&Step<'_>),
) -> Result<BaselineResult> {
    cfg.validate()?;
    let problem = Problem {
        observations: data,
        physics: None,
        initial_condition: None,
        weights: LossWeights {
            w_data: 1.0,
            w_phys: 0.0,
            w_ic: 0.0,
        },
    };
    let out = optimise(&problem, cfg, false, observer)?;
    Ok(BaselineResult {
        network: out.network,
        loss_history: out.history,
        active_terms: out.active_terms,
        seconds: out.seconds,
    })
}
