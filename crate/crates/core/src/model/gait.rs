use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest flapping frequency accepted by [`GaitSchedule::validate`].
pub const MAX_FLAP_HZ: f64 = 8.0;

/// Prescribed shoulder/elbow trajectories produced by the flapping linkage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaitSchedule {
    pub flap_hz: f64,
    pub waveform: Waveform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Waveform {
    /// q(t) = offset + amplitude * sin(2 pi f t + phase) per joint.
    Sinusoid { shoulder: JointWave, elbow: JointWave },
    /// One period of joint angles sampled uniformly in phase, starting at phase 0.
    /// Evaluated through trigonometric interpolation so rates and accelerations
    /// are exact derivatives of the position.
    Tabulated {
        shoulder_rad: Vec<f64>,
        elbow_rad: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointWave {
    pub amplitude_rad: f64,
    pub offset_rad: f64,
    pub phase_rad: f64,
}

/// Joint positions, rates and accelerations at one instant, ordered
/// `[shoulder, elbow]`. `acc` is the constraint target for the dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointTargets {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
    pub acc: [f64; 2],
}

impl GaitSchedule {
    /// Default gait: shoulder flaps symmetrically, elbow lags by a quarter
    /// period so the distal wing folds back during the upstroke.
    pub fn default_gait() -> Self {
        serde_json::from_str(include_str!("../../configs/gait.json")).expect("bundled gait config parses")
    }

    /// Shoulder and elbow held still at the given angles.
    pub fn frozen(shoulder: f64, elbow: f64) -> Self {
        GaitSchedule {
            flap_hz: 1.0,
            waveform: Waveform::Sinusoid {
                shoulder: JointWave {
                    amplitude_rad: 0.0,
                    offset_rad: shoulder,
                    phase_rad: 0.0,
                },
                elbow: JointWave {
                    amplitude_rad: 0.0,
                    offset_rad: elbow,
                    phase_rad: 0.0,
                },
            },
        }
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self> {
        let gait: GaitSchedule = super::from_document(value, "gait config")?;
        gait.validate()?;
        Ok(gait)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = super::read_file(path.as_ref())?;
        let value = serde_json::from_str(&text).map_err(|source| Error::Parse {
            what: "gait config".into(),
            source,
        })?;
        Self::from_value(value)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.flap_hz.is_finite() && self.flap_hz > 0.0) {
            return Err(Error::invalid("flap_hz", "must be positive"));
        }
        if self.flap_hz > MAX_FLAP_HZ {
            return Err(Error::invalid(
                "flap_hz",
                format!("{} Hz exceeds the {MAX_FLAP_HZ} Hz flapping limit", self.flap_hz),
            ));
        }
        match &self.waveform {
            Waveform::Sinusoid { shoulder, elbow } => {
                for (name, w) in [("shoulder", shoulder), ("elbow", elbow)] {
                    let ok = [w.amplitude_rad, w.offset_rad, w.phase_rad].iter().all(|x| x.is_finite());
                    if !ok {
                        return Err(Error::invalid(format!("waveform.{name}"), "values must be finite"));
                    }
                }
            }
            Waveform::Tabulated {
                shoulder_rad,
                elbow_rad,
            } => {
                if shoulder_rad.len() < 3 || shoulder_rad.len() != elbow_rad.len() {
                    return Err(Error::invalid(
                        "waveform.shoulder_rad",
                        "need at least 3 samples and the same count for both joints",
                    ));
                }
                if shoulder_rad.iter().chain(elbow_rad).any(|x| !x.is_finite()) {
                    return Err(Error::invalid("waveform", "samples must be finite"));
                }
            }
        }
        Ok(())
    }

    pub fn period_s(&self) -> f64 {
        1.0 / self.flap_hz
    }
}

/// Gait compiled into a truncated Fourier series for fast evaluation.
#[derive(Debug, Clone)]
pub struct Gait {
    omega: f64,
    joints: [Harmonics; 2],
}

/// mean + sum_k [cos_k cos(k w t) + sin_k sin(k w t)], k = 1..
#[derive(Debug, Clone)]
struct Harmonics {
    mean: f64,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl Harmonics {
    fn sinusoid(w: &JointWave) -> Self {
        Harmonics {
            mean: w.offset_rad,
            cos: vec![w.amplitude_rad * w.phase_rad.sin()],
            sin: vec![w.amplitude_rad * w.phase_rad.cos()],
        }
    }

    fn interpolate(samples: &[f64]) -> Self {
        let n = samples.len();
        let nf = n as f64;
        let mean = samples.iter().sum::<f64>() / nf;
        let top = n / 2;
        let mut cos = Vec::with_capacity(top);
        let mut sin = Vec::with_capacity(top);
        for k in 1..=top {
            let (mut c, mut s) = (0.0, 0.0);
            for (j, x) in samples.iter().enumerate() {
                let arg = 2.0 * PI * (k * j) as f64 / nf;
                c += x * arg.cos();
                s += x * arg.sin();
            }
            if 2 * k == n {
                // Nyquist term: only the cosine is observable on the samples.
                cos.push(c / nf);
                sin.push(0.0);
            } else {
                cos.push(2.0 * c / nf);
                sin.push(2.0 * s / nf);
            }
        }
        Harmonics { mean, cos, sin }
    }

    fn eval(&self, omega: f64, t: f64) -> (f64, f64, f64) {
        let (mut q, mut qd, mut qdd) = (self.mean, 0.0, 0.0);
        for (k, (c, s)) in self.cos.iter().zip(&self.sin).enumerate() {
            let w = omega * (k + 1) as f64;
            let (sn, cs) = (w * t).sin_cos();
            q += c * cs + s * sn;
            qd += w * (s * cs - c * sn);
            qdd -= w * w * (c * cs + s * sn);
        }
        (q, qd, qdd)
    }
}

impl Gait {
    pub fn new(schedule: &GaitSchedule) -> Result<Self> {
        schedule.validate()?;
        let joints = match &schedule.waveform {
            Waveform::Sinusoid { shoulder, elbow } => [Harmonics::sinusoid(shoulder), Harmonics::sinusoid(elbow)],
            Waveform::Tabulated {
                shoulder_rad,
                elbow_rad,
            } => [Harmonics::interpolate(shoulder_rad), Harmonics::interpolate(elbow_rad)],
        };
        Ok(Gait {
            omega: 2.0 * PI * schedule.flap_hz,
            joints,
        })
    }

    pub fn flap_hz(&self) -> f64 {
        self.omega / (2.0 * PI)
    }

    pub fn eval(&self, t: f64) -> JointTargets {
        let (qs, qds, qdds) = self.joints[0].eval(self.omega, t);
        let (qe, qde, qdde) = self.joints[1].eval(self.omega, t);
        JointTargets {
            pos: [qs, qe],
            vel: [qds, qde],
            acc: [qdds, qdde],
        }
    }
}

/// Joint state of `gait` at time `t`.
pub fn gait_eval(gait: &Gait, t: f64) -> JointTargets {
    gait.eval(t)
}
