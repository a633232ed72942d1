//! Server learning-rate schedules.
//!
//! The cyclic rate is a sawtooth ramp over `[gamma_fixed - amplitude, gamma_fixed)`
//! written as an alternating sine series:
//!
//! ```text
//! gamma(r) = gamma_fixed - amplitude * (1/2 - (1/pi) * sum_{k>=1} (-1)^(k+1) sin(2 pi k x) / k)
//! x        = frequency * r / horizon
//! ```
//!
//! The series sums to `pi * wrap(x)` with `wrap(y) = y - floor(y + 1/2)`, so the
//! closed form is exact away from the jumps at half-integer phases, where the
//! truncated series converges to the midpoint instead.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("round {round} is outside the schedule horizon {horizon}")]
    OutOfHorizon { round: usize, horizon: usize },
    #[error("invalid schedule config: {field} {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("schedule produced a non-finite rate at round {round}")]
    NonFinite { round: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Fixed,
    Cyclic,
}

/// How the sine series is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    ClosedForm,
    FourierTruncated { terms: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub kind: ScheduleKind,
    pub gamma_fixed: f64,
    /// Ignored for [`ScheduleKind::Fixed`].
    pub amplitude: f64,
    /// Number of full cycles over `horizon` rounds.
    pub frequency: f64,
    pub horizon: usize,
    pub eval_mode: EvalMode,
}

impl ScheduleConfig {
    pub fn fixed(gamma_fixed: f64, horizon: usize) -> Self {
        Self {
            kind: ScheduleKind::Fixed,
            gamma_fixed,
            amplitude: 0.0,
            frequency: 1.0,
            horizon,
            eval_mode: EvalMode::ClosedForm,
        }
    }

    pub fn cyclic(gamma_fixed: f64, amplitude: f64, frequency: f64, horizon: usize) -> Self {
        Self {
            kind: ScheduleKind::Cyclic,
            gamma_fixed,
            amplitude,
            frequency,
            horizon,
            eval_mode: EvalMode::ClosedForm,
        }
    }

    pub fn with_eval_mode(mut self, eval_mode: EvalMode) -> Self {
        self.eval_mode = eval_mode;
        self
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        let invalid = |field, reason: String| Err(ScheduleError::InvalidConfig { field, reason });
        if !(self.gamma_fixed.is_finite() && self.gamma_fixed > 0.0) {
            return invalid(
                "gamma_fixed",
                format!("must be finite and > 0, got {}", self.gamma_fixed),
            );
        }
        if self.horizon == 0 {
            return invalid("horizon", "must be >= 1".into());
        }
        if let EvalMode::FourierTruncated { terms: 0 } = self.eval_mode {
            return invalid("fourier_terms", "must be >= 1".into());
        }
        if self.kind == ScheduleKind::Cyclic {
            if !(self.frequency.is_finite() && self.frequency > 0.0) {
                return invalid("frequency", format!("must be finite and > 0, got {}", self.frequency));
            }
            if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
                return invalid("amplitude", format!("must be finite and >= 0, got {}", self.amplitude));
            }
            // The ramp reaches gamma_fixed - amplitude, which must stay positive.
            if self.amplitude >= self.gamma_fixed {
                return invalid(
                    "amplitude",
                    format!("must be < gamma_fixed ({}), got {}", self.gamma_fixed, self.amplitude),
                );
            }
        }
        Ok(())
    }

    /// Phase of `round` in cycles.
    pub fn phase(&self, round: usize) -> f64 {
        self.frequency * round as f64 / self.horizon as f64
    }

    /// Server learning rate applied when aggregating `round`.
    pub fn rate_at(&self, round: usize) -> Result<f64, ScheduleError> {
        if round >= self.horizon {
            return Err(ScheduleError::OutOfHorizon {
                round,
                horizon: self.horizon,
            });
        }
        let rate = match self.kind {
            ScheduleKind::Fixed => return Ok(self.gamma_fixed),
            ScheduleKind::Cyclic => {
                let x = self.phase(round);
                let saw = match self.eval_mode {
                    EvalMode::ClosedForm => wrap(x),
                    EvalMode::FourierTruncated { terms } => sawtooth_series(x, terms) / PI,
                };
                self.gamma_fixed - self.amplitude * (0.5 - saw)
            }
        };
        if rate.is_finite() {
            Ok(rate)
        } else {
            Err(ScheduleError::NonFinite { round })
        }
    }
}

/// `y - floor(y + 1/2)`, in `[-1/2, 1/2)`.
pub fn wrap(y: f64) -> f64 {
    y - (y + 0.5).floor()
}

/// Partial sum `sum_{k=1..terms} (-1)^(k+1) sin(2 pi k x) / k`.
pub fn sawtooth_series(x: f64, terms: u32) -> f64 {
    // The series has period 1 in x; reducing first keeps sin() arguments small for large k.
    let t = 2.0 * PI * x.rem_euclid(1.0);
    let mut sum = 0.0;
    for k in 1..=terms {
        let kf = k as f64;
        let term = (kf * t).sin() / kf;
        if k % 2 == 1 {
            sum += term;
        } else {
            sum -= term;
        }
    }
    sum
}
