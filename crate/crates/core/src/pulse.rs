//! Instantaneous π-pulse schedules and the ±1 filter functions they induce on
//! the electron Pauli operators.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::ComplexMatrix;
use crate::spin::{pauli, Axis, FilterValues};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PulseError {
    #[error("harmonic p must be odd and positive, got {0}")]
    EvenHarmonic(u32),
    #[error("revolution count must be at least 1")]
    ZeroRevolutions,
    #[error("detuning must be non-zero and finite")]
    ZeroDetuning,
    #[error("pulse times must be strictly increasing within [0, {duration}]")]
    BadTimes { duration: f64 },
    #[error("{times} pulse times but {axes} axes")]
    LengthMismatch { times: usize, axes: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PulseAxis {
    X,
    Y,
    Z,
    None,
}

impl PulseAxis {
    fn pauli_axis(self) -> Option<Axis> {
        match self {
            PulseAxis::X => Some(Axis::X),
            PulseAxis::Y => Some(Axis::Y),
            PulseAxis::Z => Some(Axis::Z),
            PulseAxis::None => None,
        }
    }
}

/// Cycle parameters of a CPMG schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpmgCycle {
    pub period: f64,
    pub harmonic: u32,
    pub revolutions: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule {
    times: Vec<f64>,
    axes: Vec<PulseAxis>,
    duration: f64,
    cycle: Option<CpmgCycle>,
}

impl PulseSchedule {
    pub fn new(times: Vec<f64>, axes: Vec<PulseAxis>, duration: f64) -> Result<Self, PulseError> {
        if times.len() != axes.len() {
            return Err(PulseError::LengthMismatch {
                times: times.len(),
                axes: axes.len(),
            });
        }
        let ordered = times.windows(2).all(|w| w[0] < w[1]);
        let inside = times.iter().all(|&t| (0.0..=duration).contains(&t));
        if !ordered || !inside || !duration.is_finite() {
            return Err(PulseError::BadTimes { duration });
        }
        Ok(Self {
            times,
            axes,
            duration,
            cycle: None,
        })
    }

    pub fn empty(duration: f64) -> Self {
        Self {
            times: Vec::new(),
            axes: Vec::new(),
            duration,
            cycle: None,
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn axes(&self) -> &[PulseAxis] {
        &self.axes
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn cycle(&self) -> Option<CpmgCycle> {
        self.cycle
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Continues a CPMG pattern past its nominal end, up to `horizon`.
    pub fn extend_periodic(&self, horizon: f64) -> Self {
        let Some(cycle) = self.cycle else {
            return Self {
                duration: self.duration.max(horizon),
                ..self.clone()
            };
        };
        let mut out = self.clone();
        out.duration = self.duration.max(horizon);
        let period = cycle.period;
        let mut m = cycle.revolutions as usize;
        loop {
            let mut added = false;
            for frac in [0.25, 0.75] {
                let t = (m as f64 + frac) * period;
                if t < out.duration {
                    out.times.push(t);
                    out.axes.push(PulseAxis::Y);
                    added = true;
                }
            }
            if !added {
                break;
            }
            m += 1;
        }
        out
    }
}

pub fn cpmg_period(harmonic: u32, delta: f64) -> f64 {
    2.0 * PI * harmonic as f64 / delta.abs()
}

/// `N` periods of `T = 2πp/|Δ|` with y-axis π pulses at `T/4` and `3T/4`.
pub fn cpmg_schedule(
    harmonic: u32,
    revolutions: u32,
    delta: f64,
) -> Result<PulseSchedule, PulseError> {
    if harmonic % 2 == 0 {
        return Err(PulseError::EvenHarmonic(harmonic));
    }
    if revolutions == 0 {
        return Err(PulseError::ZeroRevolutions);
    }
    if delta == 0.0 || !delta.is_finite() {
        return Err(PulseError::ZeroDetuning);
    }
    let period = cpmg_period(harmonic, delta);
    let mut times = Vec::with_capacity(2 * revolutions as usize);
    for m in 0..revolutions {
        times.push((m as f64 + 0.25) * period);
        times.push((m as f64 + 0.75) * period);
    }
    let axes = vec![PulseAxis::Y; times.len()];
    Ok(PulseSchedule {
        times,
        axes,
        duration: revolutions as f64 * period,
        cycle: Some(CpmgCycle {
            period,
            harmonic,
            revolutions,
        }),
    })
}

/// Piecewise-constant ±1 function starting at +1 and flipping at each listed time.
///
/// At a flip time the value is the right limit.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Filter {
    flips: Vec<f64>,
}

impl Filter {
    pub fn constant() -> Self {
        Self::default()
    }

    pub fn flips(&self) -> &[f64] {
        &self.flips
    }

    pub fn value(&self, t: f64) -> f64 {
        let n = self.flips.partition_point(|&b| b <= t);
        if n % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Exact `∫_a^b F(t) dt`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let mut acc = 0.0;
        let mut t = a;
        let mut sign = self.value(a);
        let start = self.flips.partition_point(|&x| x <= a);
        for &f in &self.flips[start..] {
            if f >= b {
                break;
            }
            acc += sign * (f - t);
            t = f;
            sign = -sign;
        }
        acc + sign * (b - t)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FilterSet {
    pub x: Filter,
    pub y: Filter,
    pub z: Filter,
}

impl FilterSet {
    pub fn free() -> Self {
        Self::default()
    }

    pub fn at(&self, t: f64) -> FilterValues {
        FilterValues {
            x: self.x.value(t),
            y: self.y.value(t),
            z: self.z.value(t),
        }
    }

    pub fn get(&self, axis: Axis) -> &Filter {
        match axis {
            Axis::X => &self.x,
            Axis::Y => &self.y,
            Axis::Z => &self.z,
        }
    }

    /// Sorted union of all sign changes.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self
            .x
            .flips
            .iter()
            .chain(&self.y.flips)
            .chain(&self.z.flips)
            .copied()
            .collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        all
    }
}

/// `F_α` flips at every pulse about an axis other than α.
pub fn filters_from_schedule(s: &PulseSchedule) -> FilterSet {
    let flips_for = |alpha: Axis| Filter {
        flips: s
            .times
            .iter()
            .zip(&s.axes)
            .filter(|(_, ax)| matches!(ax.pauli_axis(), Some(a) if a != alpha))
            .map(|(&t, _)| t)
            .collect(),
    };
    FilterSet {
        x: flips_for(Axis::X),
        y: flips_for(Axis::Y),
        z: flips_for(Axis::Z),
    }
}

/// Partial Fourier sum `Σ_{k=1}^{k_max} 4 sin(kπ/2)/(kπ) cos(kΩt)` of the CPMG square wave.
pub fn filter_fourier(k_max: u32, omega: f64, t: f64) -> f64 {
    (1..=k_max)
        .filter(|k| k % 2 == 1)
        .map(|k| {
            let k = k as f64;
            4.0 * (k * PI / 2.0).sin() / (k * PI) * (k * omega * t).cos()
        })
        .sum()
}

/// Toggling-frame image of `σ_α` at time `t`: conjugation by every pulse applied so far.
pub fn toggling_operator(s: &PulseSchedule, alpha: Axis, t: f64) -> ComplexMatrix {
    let mut op = pauli(alpha);
    let applied = s.times.partition_point(|&p| p <= t);
    for ax in s.axes[..applied].iter().rev() {
        if let Some(a) = ax.pauli_axis() {
            let p = pauli(a);
            op = &p * op * &p;
        }
    }
    op
}
