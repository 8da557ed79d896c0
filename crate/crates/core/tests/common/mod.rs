#![allow(dead_code)]

use greenhouse_pinn::autodiff::{init_network, NetworkModel};
use greenhouse_pinn::forcing::default_forcings;
use greenhouse_pinn::model::{InitialCondition, TimeGrid};
use greenhouse_pinn::pinn::{
    make_collocation, CollocationStrategy, LossWeights, PhysicsContext, Problem, TrainablePhysicalParams,
};
use greenhouse_pinn::synthetic::{generate_dataset, GenerationConfig, ObservationSet};

/// Fourth-order central difference of `f` along every coordinate of `x`.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let mut at = |d: f64| {
                probe[i] = x[i] + d;
                let v = f(&probe);
                probe[i] = x[i];
                v
            };
            let (p1, m1, p2, m2) = (at(h), at(-h), at(2.0 * h), at(-2.0 * h));
            (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h)
        })
        .collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Coarse benchmark dataset: 2 h grid, a third of the nodes observed.
pub fn coarse_observations(seed: u64) -> ObservationSet {
    let cfg = GenerationConfig {
        grid: TimeGrid::new(0.0, 72.0, 2.0).unwrap(),
        fraction: 0.3,
        seed,
        ..GenerationConfig::default()
    };
    generate_dataset(&cfg).unwrap().observations
}

pub fn small_problem(obs: &ObservationSet, n_colloc: usize, weights: LossWeights) -> Problem<'_> {
    let colloc = make_collocation([0.0, 72.0], n_colloc, CollocationStrategy::UniformGrid, 0).unwrap();
    Problem {
        observations: obs,
        physics: Some(PhysicsContext::new(&default_forcings(), &colloc).unwrap()),
        initial_condition: Some(InitialCondition::BENCHMARK),
        weights,
    }
}

/// 2 hidden layers × 8 tanh units.
pub fn small_network(seed: u64) -> NetworkModel {
    init_network(2, 8, seed).unwrap()
}

/// Mildly non-uniform coefficients so every φ entry matters differently.
pub fn test_phi() -> TrainablePhysicalParams {
    TrainablePhysicalParams {
        phi: [-1.7, 1.2, -2.1, -4.0, -2.0, 1.6, -2.5, -2.8],
    }
}

pub struct GradientCheck {
    pub worst: f64,
    pub checked: usize,
}

/// Compares the tape gradient of `problem` against finite differences of
/// the pointwise objective. Entries with |g| <= 1e-8 are skipped.
pub fn check_gradient(
    problem: &Problem<'_>,
    net: &NetworkModel,
    phi: &TrainablePhysicalParams,
) -> GradientCheck {
    let (_, grad) = problem.gradient(net, &phi.phi).unwrap();
    let n_theta = net.param_count();
    let mut x = net.params.clone();
    x.extend_from_slice(&phi.phi);
    let objective = |v: &[f64]| {
        let mut n = net.clone();
        n.params.copy_from_slice(&v[..n_theta]);
        let mut p = *phi;
        p.phi.copy_from_slice(&v[n_theta..]);
        problem.breakdown(&n, &p).unwrap().l_total
    };
    let fd = fd_gradient(objective, &x, 1e-4);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (a, b) in grad.values.iter().zip(&fd) {
        if a.abs() > 1e-8 {
            worst = worst.max(rel_err(*a, *b));
            checked += 1;
        }
    }
    GradientCheck { worst, checked }
}
