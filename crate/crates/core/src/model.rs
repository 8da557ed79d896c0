//! Reduced coupled temperature/humidity dynamics and a fixed-step RK4
//! reference integrator.
//!
//! ```text
//! dT/dt = a1 (T_out - T) + a2 R - a3 V (T - T_out) + a4 (H - H_out)
//! dH/dt = b1 (H_out - H) + b2 E - b3 V (H - H_out) + b4 (T_out - T)
//! ```
//!
//! Time is in hours, temperature in °C, humidity in %RH. States are never
//! clamped to physical ranges.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forcing::{ForcingSample, ForcingSignals};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub temperature: f64,
    pub humidity: f64,
}

impl State {
    pub const fn new(temperature: f64, humidity: f64) -> Self {
        Self {
            temperature,
            humidity,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.temperature.is_finite() && self.humidity.is_finite()
    }
}

/// Time derivative of a [`State`] (°C/h, %RH/h).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rate {
    pub d_temperature: f64,
    pub d_humidity: f64,
}

/// The eight nonnegative coefficients of the reduced model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub b4: f64,
}

impl ParameterSet {
    pub const NAMES: [&'static str; 8] = ["a1", "a2", "a3", "a4", "b1", "b2", "b3", "b4"];

    /// Coefficients used to generate the synthetic benchmark.
    pub const BENCHMARK: ParameterSet = ParameterSet {
        a1: 0.18,
        a2: 3.50,
        a3: 0.12,
        a4: 0.015,
        b1: 0.12,
        b2: 5.00,
        b3: 0.08,
        b4: 0.06,
    };

    pub const ZERO: ParameterSet = ParameterSet::from_array([0.0; 8]);

    pub const fn from_array(v: [f64; 8]) -> Self {
        Self {
            a1: v[0],
            a2: v[1],
            a3: v[2],
            a4: v[3],
            b1: v[4],
            b2: v[5],
            b3: v[6],
            b4: v[7],
        }
    }

    pub fn to_array(&self) -> [f64; 8] {
        [
            self.a1, self.a2, self.a3, self.a4, self.b1, self.b2, self.b3, self.b4,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in Self::NAMES.iter().zip(self.to_array()) {
            if !v.is_finite() {
                return Err(Error::validation(*name, "must be finite"));
            }
            if v < 0.0 {
                return Err(Error::validation(*name, format!("must be nonnegative, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialCondition {
    pub t0: f64,
    pub state0: State,
}

impl InitialCondition {
    /// `T(0) = 22 °C`, `H(0) = 70 %RH`.
    pub const BENCHMARK: InitialCondition = InitialCondition {
        t0: 0.0,
        state0: State::new(22.0, 70.0),
    };
}

/// Uniform grid `start, start + step, ..., end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub start: f64,
    pub end: f64,
    pub step: f64,
}

impl TimeGrid {
    /// `[0, 72] h` at `0.01 h` (7201 nodes).
    pub const BENCHMARK: TimeGrid = TimeGrid {
        start: 0.0,
        end: 72.0,
        step: 0.01,
    };

    pub fn new(start: f64, end: f64, step: f64) -> Result<Self> {
        let g = Self { start, end, step };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.start.is_finite() && self.end.is_finite() && self.step.is_finite()) {
            return Err(Error::validation("grid", "bounds and step must be finite"));
        }
        if self.start >= self.end {
            return Err(Error::validation("grid", "start must be < end"));
        }
        if self.step <= 0.0 {
            return Err(Error::validation("grid.step", "must be positive"));
        }
        let ratio = (self.end - self.start) / self.step;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::validation(
                "grid.step",
                format!("(end - start) / step = {ratio} is not a whole number"),
            ));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        ((self.end - self.start) / self.step).round() as usize
    }

    pub fn len(&self) -> usize {
        self.steps() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Node `i`; exact at both endpoints.
    pub fn node(&self, i: usize) -> f64 {
        let n = self.steps();
        if i == n {
            return self.end;
        }
        self.start + (i as f64 * (self.end - self.start)) / n as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    /// Same span with the step divided by `factor`.
    pub fn refined(&self, factor: usize) -> TimeGrid {
        TimeGrid {
            start: self.start,
            end: self.end,
            step: (self.end - self.start) / (self.steps() * factor) as f64,
        }
    }
}

/// States at every node of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub temperature: Vec<f64>,
    pub humidity: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> State {
        State::new(self.temperature[i], self.humidity[i])
    }

    pub fn last(&self) -> Option<State> {
        (!self.is_empty()).then(|| self.state(self.len() - 1))
    }

    /// CSV with header `t,T,H`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,T,H")?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e}",
                self.times[i], self.temperature[i], self.humidity[i]
            )?;
        }
        Ok(())
    }
}

/// Right-hand side of the model for an already evaluated forcing sample.
#[inline]
pub fn rhs_at(state: State, p: &ParameterSet, f: &ForcingSample) -> Rate {
    let (t, h) = (state.temperature, state.humidity);
    Rate {
        d_temperature: p.a1 * (f.t_out - t) + p.a2 * f.radiation - p.a3 * f.ventilation * (t - f.t_out)
            + p.a4 * (h - f.h_out),
        d_humidity: p.b1 * (f.h_out - h) + p.b2 * f.moisture - p.b3 * f.ventilation * (h - f.h_out)
            + p.b4 * (f.t_out - t),
    }
}

/// Right-hand side at time `t`.
pub fn rhs(state: State, t: f64, params: &ParameterSet, forcings: &ForcingSignals) -> Result<Rate> {
    let f = forcings.checked_sample(t)?;
    Ok(rhs_at(state, params, &f))
}

/// Classical fixed-step fourth-order Runge–Kutta over `grid`.
pub fn integrate_rk4(
    params: &ParameterSet,
    forcings: &ForcingSignals,
    ic: &InitialCondition,
    grid: &TimeGrid,
) -> Result<Trajectory> {
    grid.validate()?;
    params.validate()?;
    if grid.start != ic.t0 {
        return Err(Error::validation(
            "initial condition",
            format!("t0 = {} does not match grid start {}", ic.t0, grid.start),
        ));
    }
    let n = grid.len();
    let mut traj = Trajectory {
        times: Vec::with_capacity(n),
        temperature: Vec::with_capacity(n),
        humidity: Vec::with_capacity(n),
    };
    let mut y = ic.state0;
    traj.times.push(grid.node(0));
    traj.temperature.push(y.temperature);
    traj.humidity.push(y.humidity);

    let axpy = |y: State, k: Rate, s: f64| {
        State::new(y.temperature + s * k.d_temperature, y.humidity + s * k.d_humidity)
    };
    for i in 0..grid.steps() {
        let t = grid.node(i);
        let t1 = grid.node(i + 1);
        let h = t1 - t;
        let k1 = rhs(y, t, params, forcings)?;
        let k2 = rhs(axpy(y, k1, 0.5 * h), t + 0.5 * h, params, forcings)?;
        let k3 = rhs(axpy(y, k2, 0.5 * h), t + 0.5 * h, params, forcings)?;
        let k4 = rhs(axpy(y, k3, h), t1, params, forcings)?;
        y = State::new(
            y.temperature
                + h / 6.0
                    * (k1.d_temperature + 2.0 * k2.d_temperature + 2.0 * k3.d_temperature + k4.d_temperature),
            y.humidity
                + h / 6.0 * (k1.d_humidity + 2.0 * k2.d_humidity + 2.0 * k3.d_humidity + k4.d_humidity),
        );
        if !y.is_finite() {
            return Err(Error::Divergence { t: t1 });
        }
        traj.times.push(t1);
        traj.temperature.push(y.temperature);
        traj.humidity.push(y.humidity);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forcing::{default_forcings, DiurnalSignal};

    fn constant_forcings(t_out: f64, h_out: f64) -> ForcingSignals {
        ForcingSignals {
            t_out: DiurnalSignal::sinusoid(t_out, 0.0, 0.0),
            h_out: DiurnalSignal::sinusoid(h_out, 0.0, 0.0),
            radiation: DiurnalSignal::daylight(0.0, 0.0, [6.0, 18.0]),
            ventilation: DiurnalSignal::sinusoid(0.5, 0.0, 0.0),
            moisture: DiurnalSignal::sinusoid(0.0, 0.0, 0.0),
        }
    }

    #[test]
    fn zero_params_give_zero_rate() {
        let f = default_forcings();
        let r = rhs(State::new(31.0, 55.0), 13.2, &ParameterSet::ZERO, &f).unwrap();
        assert_eq!(r.d_temperature, 0.0);
        assert_eq!(r.d_humidity, 0.0);
    }

    #[test]
    fn outdoor_equilibrium_without_sources() {
        let f = default_forcings();
        let p = ParameterSet::BENCHMARK;
        // Night: R = 0; moisture carries a constant 0.3 so use b2 = 0.
        let p = ParameterSet { b2: 0.0, ..p };
        for t in [0.0, 2.5, 4.0, 20.0, 23.9] {
            let s = f.sample(t);
            assert_eq!(s.radiation, 0.0);
            let r = rhs_at(State::new(s.t_out, s.h_out), &p, &s);
            assert_eq!(r.d_temperature, 0.0);
            assert_eq!(r.d_humidity, 0.0);
        }
    }

    #[test]
    fn hand_substitution_at_benchmark_start() {
        // t = 0: sin(-3π/4) = -√2/2 so T_out = 15 - 2.5√2, H_out = 75 + 5√2;
        // R = 0, V = 0.5, E = 0.3.
        let s2 = std::f64::consts::SQRT_2;
        let t_out = 15.0 - 2.5 * s2;
        let h_out = 75.0 + 5.0 * s2;
        let dt = 0.18 * (t_out - 22.0) - 0.12 * 0.5 * (22.0 - t_out) + 0.015 * (70.0 - h_out);
        let dh = 0.12 * (h_out - 70.0) + 5.0 * 0.3 - 0.08 * 0.5 * (70.0 - h_out) + 0.06 * (t_out - 22.0);
        // Spreadsheet values for the same substitution.
        assert!((dt - (-2.709594154601839)).abs() < 1e-12);
        assert!((dh - 2.7992388155425116).abs() < 1e-12);
        let r = rhs(
            State::new(22.0, 70.0),
            0.0,
            &ParameterSet::BENCHMARK,
            &default_forcings(),
        )
        .unwrap();
        assert!((r.d_temperature - dt).abs() < 1e-13);
        assert!((r.d_humidity - dh).abs() < 1e-13);
    }

    #[test]
    fn partials_match_bracketed_factors() {
        let f = default_forcings();
        let state = State::new(24.3, 81.0);
        for t in [1.0, 9.5, 14.0] {
            let s = f.sample(t);
            let (tt, hh) = (state.temperature, state.humidity);
            let factors_t = [
                s.t_out - tt,
                s.radiation,
                -s.ventilation * (tt - s.t_out),
                hh - s.h_out,
            ];
            let factors_h = [
                s.h_out - hh,
                s.moisture,
                -s.ventilation * (hh - s.h_out),
                s.t_out - tt,
            ];
            for k in 0..8 {
                let mut e = [0.0; 8];
                e[k] = 1.0;
                let r = rhs_at(state, &ParameterSet::from_array(e), &s);
                if k < 4 {
                    assert_eq!(r.d_temperature, factors_t[k]);
                    assert_eq!(r.d_humidity, 0.0);
                } else {
                    assert_eq!(r.d_temperature, 0.0);
                    assert_eq!(r.d_humidity, factors_h[k - 4]);
                }
            }
        }
    }

    #[test]
    fn non_finite_forcing_is_reported() {
        let mut f = default_forcings();
        f.radiation.amplitude = f64::INFINITY;
        let err = rhs(State::new(20.0, 60.0), 12.0, &ParameterSet::BENCHMARK, &f).unwrap_err();
        assert!(matches!(
            err,
            Error::NonFiniteForcing {
                signal: "radiation",
                ..
            }
        ));
    }

    #[test]
    fn zero_params_constant_trajectory() {
        let traj = integrate_rk4(
            &ParameterSet::ZERO,
            &default_forcings(),
            &InitialCondition::BENCHMARK,
            &TimeGrid::new(0.0, 5.0, 0.1).unwrap(),
        )
        .unwrap();
        assert_eq!(traj.len(), 51);
        assert!(traj.temperature.iter().all(|&v| v == 22.0));
        assert!(traj.humidity.iter().all(|&v| v == 70.0));
    }

    #[test]
    fn decoupled_exponential_relaxation() {
        let c = 12.0;
        let p = ParameterSet {
            a1: 0.18,
            ..ParameterSet::ZERO
        };
        let f = constant_forcings(c, 75.0);
        let ic = InitialCondition::BENCHMARK;
        let traj = integrate_rk4(&p, &f, &ic, &TimeGrid::BENCHMARK).unwrap();
        let max_err = traj
            .times
            .iter()
            .zip(&traj.temperature)
            .map(|(&t, &v)| (v - (c + (22.0 - c) * (-0.18 * t).exp())).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 1e-8, "max_err = {max_err:e}");
    }

    #[test]
    fn divergence_is_reported() {
        let p = ParameterSet {
            a4: 1e6,
            b4: 1e6,
            ..ParameterSet::BENCHMARK
        };
        let err = integrate_rk4(
            &p,
            &default_forcings(),
            &InitialCondition::BENCHMARK,
            &TimeGrid::new(0.0, 72.0, 0.5).unwrap(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
    }

    #[test]
    fn grid_start_must_match_ic() {
        let ic = InitialCondition {
            t0: 1.0,
            ..InitialCondition::BENCHMARK
        };
        assert!(integrate_rk4(
            &ParameterSet::BENCHMARK,
            &default_forcings(),
            &ic,
            &TimeGrid::BENCHMARK
        )
        .is_err());
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(0.0, 1.0, 0.3).is_err());
        assert!(TimeGrid::new(1.0, 1.0, 0.1).is_err());
        assert!(TimeGrid::new(0.0, 1.0, -0.1).is_err());
        let g = TimeGrid::BENCHMARK;
        assert_eq!(g.len(), 7201);
        assert_eq!(g.node(0), 0.0);
        assert_eq!(g.node(7200), 72.0);
        assert_eq!(g.refined(10).len(), 72001);
    }

    #[test]
    fn csv_has_header_and_full_precision() {
        let traj = Trajectory {
            times: vec![0.0, 0.1],
            temperature: vec![22.0, 1.0 / 3.0],
            humidity: vec![70.0, 0.1],
        };
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,T,H"));
        lines.next();
        let row: Vec<f64> = lines
            .next()
            .unwrap()
            .split(',')
            .map(|s| s.parse().unwrap())
            .collect();
        assert_eq!(row, vec![0.1, 1.0 / 3.0, 0.1]);
    }
}
