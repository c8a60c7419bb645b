//! Smooth 3-axis trajectory library with raised-cosine on/off ramps.
//!
//! Every generated trajectory starts at the origin at rest and returns to
//! rest, so closed-loop trials can assume zero initial deviation. Generators
//! are analytic in time: resampling at a finer step reproduces shared
//! timestamps exactly.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Names accepted by [`trajectory_library`].
pub const TRAJECTORY_NAMES: [&str; 6] = [
    "circle",
    "lemniscate",
    "helix-up",
    "ramp-diagonal",
    "sine-xy",
    "rounded-square",
];

/// Discrete acceleration bound (m/s²) used by the smoothness lint.
pub const SMOOTHNESS_ACCEL_BOUND: f64 = 20.0;

/// A sampled desired position trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub name: String,
    pub dt: f64,
    /// Position samples at `t = k·dt`, `k = 0..=n_steps`.
    pub samples: Vec<DVector<f64>>,
    /// Smoothness lint: true when discrete accelerations stay below
    /// [`SMOOTHNESS_ACCEL_BOUND`]. Library trajectories always pass; raw
    /// user samples merely get flagged.
    pub smooth: bool,
}

impl Trajectory {
    /// Wrap raw samples, running the smoothness lint.
    pub fn from_samples(name: impl Into<String>, dt: f64, samples: Vec<DVector<f64>>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: format!("must be positive and finite, got {dt}"),
            });
        }
        if samples.len() < 2 {
            return Err(Error::InvalidParameter {
                name: "samples",
                reason: "need at least two samples".into(),
            });
        }
        let p = samples[0].len();
        if p == 0 || samples.iter().any(|s| s.len() != p) {
            return Err(Error::InvalidParameter {
                name: "samples",
                reason: "ragged or empty sample vectors".into(),
            });
        }
        let mut traj = Self {
            name: name.into(),
            dt,
            samples,
            smooth: true,
        };
        traj.smooth = traj.max_discrete_accel() <= SMOOTHNESS_ACCEL_BOUND;
        Ok(traj)
    }

    pub fn channels(&self) -> usize {
        self.samples[0].len()
    }

    /// Number of control steps (one less than the sample count).
    pub fn n_steps(&self) -> usize {
        self.samples.len() - 1
    }

    pub fn duration(&self) -> f64 {
        self.n_steps() as f64 * self.dt
    }

    /// Largest second difference divided by dt².
    pub fn max_discrete_accel(&self) -> f64 {
        let mut worst = 0.0f64;
        for k in 2..self.samples.len() {
            let acc = (&self.samples[k] - 2.0 * &self.samples[k - 1] + &self.samples[k - 2])
                / (self.dt * self.dt);
            worst = worst.max(acc.amax());
        }
        worst
    }

    /// Samples extended by holding the final position, for lookahead past the
    /// end of the trajectory.
    pub fn desired_padded(&self, extra: usize) -> Vec<DVector<f64>> {
        let mut out = self.samples.clone();
        let last = out.last().expect("non-empty trajectory").clone();
        out.extend(std::iter::repeat_n(last, extra));
        out
    }

    /// CSV export: header `t,x,y,z` (or `t,c1..cp`), one row per sample.
    pub fn to_csv(&self) -> String {
        let p = self.channels();
        let header: String = if p == 3 {
            "t,x,y,z".into()
        } else {
            let cols: Vec<String> = (1..=p).map(|i| format!("c{i}")).collect();
            format!("t,{}", cols.join(","))
        };
        let mut out = String::with_capacity(self.samples.len() * 32);
        out.push_str(&header);
        out.push('\n');
        for (k, s) in self.samples.iter().enumerate() {
            out.push_str(&format!("{}", k as f64 * self.dt));
            for v in s.iter() {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    /// Parse the CSV form written by [`Trajectory::to_csv`].
    pub fn from_csv(name: impl Into<String>, text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let _header = lines.next().ok_or_else(|| Error::InvalidParameter {
            name: "csv",
            reason: "empty file".into(),
        })?;
        let mut times = Vec::new();
        let mut samples = Vec::new();
        for (row, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() < 2 {
                return Err(Error::InvalidParameter {
                    name: "csv",
                    reason: format!("row {row}: too few columns"),
                });
            }
            let parse = |s: &str| -> Result<f64> {
                s.trim().parse().map_err(|_| Error::InvalidParameter {
                    name: "csv",
                    reason: format!("row {row}: bad number '{s}'"),
                })
            };
            times.push(parse(fields[0])?);
            let vals: Result<Vec<f64>> = fields[1..].iter().map(|s| parse(s)).collect();
            samples.push(DVector::from_vec(vals?));
        }
        if times.len() < 2 {
            return Err(Error::InvalidParameter {
                name: "csv",
                reason: "need at least two rows".into(),
            });
        }
        let dt = times[1] - times[0];
        Self::from_samples(name, dt, samples)
    }
}

/// Raised-cosine on/off envelope: zero value and slope at both ends.
fn envelope(t: f64, duration: f64) -> f64 {
    let ramp = (duration * 0.25).min(1.5);
    if t <= 0.0 || t >= duration {
        0.0
    } else if t < ramp {
        0.5 * (1.0 - (std::f64::consts::PI * t / ramp).cos())
    } else if t > duration - ramp {
        0.5 * (1.0 - (std::f64::consts::PI * (duration - t) / ramp).cos())
    } else {
        1.0
    }
}

fn shape(name: &str, t: f64, duration: f64) -> Option<[f64; 3]> {
    let theta = std::f64::consts::TAU * t / duration;
    match name {
        "circle" => Some([0.8 * theta.cos(), 0.8 * theta.sin(), 0.0]),
        "lemniscate" => Some([0.9 * theta.sin(), 0.9 * theta.sin() * theta.cos(), 0.0]),
        "helix-up" => Some([0.6 * theta.cos(), 0.6 * theta.sin(), 0.15 * t]),
        "ramp-diagonal" => Some([0.25 * t, 0.2 * t, 0.12 * t]),
        "sine-xy" => Some([
            0.8 * (2.0 * theta).sin(),
            0.7 * (3.0 * theta + 0.7).sin(),
            0.3 * theta.sin(),
        ]),
        "rounded-square" => {
            let k = 3.0f64;
            let sq = |v: f64| (k * v).tanh() / k.tanh();
            Some([0.7 * sq(theta.cos()), 0.7 * sq(theta.sin()), 0.2 * theta.sin()])
        }
        _ => None,
    }
}

/// Generate a named library trajectory at unit scale.
pub fn trajectory_library(name: &str, duration_s: f64, dt: f64) -> Result<Trajectory> {
    trajectory_library_scaled(name, duration_s, dt, 1.0)
}

/// Generate a named library trajectory with a global position scale factor
/// (scale 0 degenerates to a rest trajectory at the origin).
pub fn trajectory_library_scaled(
    name: &str,
    duration_s: f64,
    dt: f64,
    scale: f64,
) -> Result<Trajectory> {
    if !(duration_s > 0.0) || !(dt > 0.0) || dt >= duration_s {
        return Err(Error::InvalidParameter {
            name: "duration_s/dt",
            reason: format!("need 0 < dt < duration, got dt={dt}, duration={duration_s}"),
        });
    }
    if shape(name, 0.0, duration_s).is_none() {
        return Err(Error::UnknownTrajectory {
            name: name.to_string(),
            valid: TRAJECTORY_NAMES.to_vec(),
        });
    }
    let steps = (duration_s / dt).round() as usize;
    let samples: Vec<DVector<f64>> = (0..=steps)
        .map(|k| {
            let t = k as f64 * dt;
            let g = envelope(t, duration_s) * scale;
            let s = shape(name, t, duration_s).expect("name validated above");
            DVector::from_vec(vec![g * s[0], g * s[1], g * s[2]])
        })
        .collect();
    Trajectory::from_samples(name, dt, samples)
}
