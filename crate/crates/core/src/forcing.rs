//! Exogenous forcing signals: outdoor temperature and humidity, a radiation
//! proxy, and ventilation / moisture-source proxies.
//!
//! Every signal shares one parameterisation ([`DiurnalSignal`]). Without a
//! daylight window it is a sinusoid
//! `offset + amplitude * sin(2π (t - phase_hours) / period_hours)`.
//! With a daylight window `[s, e]` it becomes a half-sine bump that is zero
//! at night: `offset + amplitude * max(0, sin(π (h - s) / (e - s)))` for
//! `h = (t - phase_hours) mod period_hours` inside the window, `offset`
//! outside it.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn default_period() -> f64 {
    24.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiurnalSignal {
    pub offset: f64,
    pub amplitude: f64,
    #[serde(default)]
    pub phase_hours: f64,
    #[serde(default)]
    pub daylight_window: Option<[f64; 2]>,
    #[serde(default = "default_period")]
    pub period_hours: f64,
}

impl DiurnalSignal {
    pub fn sinusoid(offset: f64, amplitude: f64, phase_hours: f64) -> Self {
        Self {
            offset,
            amplitude,
            phase_hours,
            daylight_window: None,
            period_hours: 24.0,
        }
    }

    pub fn daylight(offset: f64, amplitude: f64, window: [f64; 2]) -> Self {
        Self {
            offset,
            amplitude,
            phase_hours: 0.0,
            daylight_window: Some(window),
            period_hours: 24.0,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let h = (t - self.phase_hours).rem_euclid(self.period_hours);
        match self.daylight_window {
            None => self.offset + self.amplitude * (2.0 * PI * h / self.period_hours).sin(),
            Some([start, end]) => {
                let bump = if h >= start && h <= end {
                    (PI * (h - start) / (end - start)).sin().max(0.0)
                } else {
                    0.0
                };
                self.offset + self.amplitude * bump
            }
        }
    }

    /// Lower bound of the signal over all t.
    pub fn min_value(&self) -> f64 {
        match self.daylight_window {
            None => self.offset - self.amplitude.abs(),
            Some(_) => self.offset + self.amplitude.min(0.0),
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let fields = [
            ("offset", self.offset),
            ("amplitude", self.amplitude),
            ("phase_hours", self.phase_hours),
            ("period_hours", self.period_hours),
        ];
        for (field, v) in fields {
            if !v.is_finite() {
                return Err(Error::validation(format!("{name}.{field}"), "must be finite"));
            }
        }
        if self.period_hours <= 0.0 {
            return Err(Error::validation(
                format!("{name}.period_hours"),
                "must be positive",
            ));
        }
        if let Some([s, e]) = self.daylight_window {
            if !(s.is_finite() && e.is_finite() && 0.0 <= s && s < e && e <= self.period_hours) {
                return Err(Error::validation(
                    format!("{name}.daylight_window"),
                    format!("expected 0 <= start < end <= period, got [{s}, {e}]"),
                ));
            }
        }
        Ok(())
    }
}

/// Forcing values at a single instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForcingSample {
    pub t_out: f64,
    pub h_out: f64,
    pub radiation: f64,
    pub ventilation: f64,
    pub moisture: f64,
}

impl ForcingSample {
    pub(crate) fn check_finite(&self, t: f64) -> Result<()> {
        let named = [
            ("t_out", self.t_out),
            ("h_out", self.h_out),
            ("radiation", self.radiation),
            ("ventilation", self.ventilation),
            ("moisture", self.moisture),
        ];
        for (signal, v) in named {
            if !v.is_finite() {
                return Err(Error::NonFiniteForcing { signal, t });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingSignals {
    pub t_out: DiurnalSignal,
    pub h_out: DiurnalSignal,
    pub radiation: DiurnalSignal,
    pub ventilation: DiurnalSignal,
    pub moisture: DiurnalSignal,
}

impl Default for ForcingSignals {
    fn default() -> Self {
        default_forcings()
    }
}

/// Benchmark forcings: outdoor temperature peaking at 15:00, outdoor humidity
/// in anti-phase, radiation active between 06:00 and 18:00, and ventilation /
/// moisture proxies that rise with radiation.
pub fn default_forcings() -> ForcingSignals {
    let day = [6.0, 18.0];
    ForcingSignals {
        t_out: DiurnalSignal::sinusoid(15.0, 5.0, 9.0),
        h_out: DiurnalSignal::sinusoid(75.0, -10.0, 9.0),
        radiation: DiurnalSignal::daylight(0.0, 1.0, day),
        ventilation: DiurnalSignal::daylight(0.5, 0.25, day),
        moisture: DiurnalSignal::daylight(0.3, 0.5, day),
    }
}

impl ForcingSignals {
    pub fn sample(&self, t: f64) -> ForcingSample {
        ForcingSample {
            t_out: self.t_out.eval(t),
            h_out: self.h_out.eval(t),
            radiation: self.radiation.eval(t),
            ventilation: self.ventilation.eval(t),
            moisture: self.moisture.eval(t),
        }
    }

    /// Evaluates all signals at `t`, failing on the first non-finite value.
    pub fn checked_sample(&self, t: f64) -> Result<ForcingSample> {
        let s = self.sample(t);
        s.check_finite(t)?;
        Ok(s)
    }

    /// Checks finiteness, nonnegativity of the proxies, and that radiation is
    /// confined to a daylight window.
    pub fn validate(&self) -> Result<()> {
        self.t_out.validate("t_out")?;
        self.h_out.validate("h_out")?;
        self.radiation.validate("radiation")?;
        self.ventilation.validate("ventilation")?;
        self.moisture.validate("moisture")?;
        for (name, s) in [
            ("radiation", &self.radiation),
            ("ventilation", &self.ventilation),
            ("moisture", &self.moisture),
        ] {
            if s.min_value() < 0.0 {
                return Err(Error::validation(name, "signal must be nonnegative everywhere"));
            }
        }
        if self.radiation.daylight_window.is_none() || self.radiation.offset != 0.0 {
            return Err(Error::validation(
                "radiation",
                "must have a daylight window and zero offset (no radiation at night)",
            ));
        }
        Ok(())
    }

    /// Loads a forcing configuration from JSON and validates it.
    pub fn from_json(text: &str) -> Result<Self> {
        let f: ForcingSignals = serde_json::from_str(text)?;
        f.validate()?;
        Ok(f)
    }
}
