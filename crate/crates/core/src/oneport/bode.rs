//! Bode-Q from one-port reflection data.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::format::sig17;

use super::{OnePortError, OnePortSweep, SweepKind};

/// Points with |S11| at or above this are excluded.
const MAG_GUARD: f64 = 1.0 - 1e-9;
const SMOOTH_WINDOW: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum QVariant {
    /// Q = ω·|dS11/dω| / (1 − |S11|²)
    #[default]
    Paper,
    /// Q = ω·τg·|S11| / (1 − |S11|²), τg = −dφ/dω
    Feld,
}

impl QVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            QVariant::Paper => "paper",
            QVariant::Feld => "feld",
        }
    }
}

impl std::str::FromStr for QVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper" => Ok(QVariant::Paper),
            "feld" => Ok(QVariant::Feld),
            other => Err(format!("unknown Q variant '{other}' (expected paper or feld)")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BodeQSettings {
    pub variant: QVariant,
    /// Local quadratic least-squares over 5 points (Savitzky–Golay style)
    /// before differentiating.
    pub smoothing: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QCurve {
    /// Hz, only the points where Q is defined.
    pub freqs: Vec<f64>,
    pub q: Vec<f64>,
    /// (Hz, Q) at the global maximum.
    pub q_max: (f64, f64),
    pub variant: QVariant,
    pub smoothing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QSummary {
    pub q_max: f64,
    pub f_at_q_max: f64,
    pub variant: QVariant,
    pub smoothing: String,
}

impl QCurve {
    /// Maximum restricted to `lo ≤ f ≤ hi`.
    pub fn peak_in(&self, lo: f64, hi: f64) -> Option<(f64, f64)> {
        argmax(
            self.freqs
                .iter()
                .zip(&self.q)
                .filter(|(f, _)| **f >= lo && **f <= hi)
                .map(|(f, q)| (*f, *q)),
        )
    }

    pub fn smoothing_label(&self) -> &'static str {
        if self.smoothing {
            "savitzky-golay(5,2)"
        } else {
            "none"
        }
    }

    pub fn summary(&self) -> QSummary {
        QSummary {
            q_max: self.q_max.1,
            f_at_q_max: self.q_max.0,
            variant: self.variant,
            smoothing: self.smoothing_label().to_string(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("freq_hz,q\n");
        for (f, q) in self.freqs.iter().zip(&self.q) {
            out.push_str(&format!("{},{}\n", sig17(*f), sig17(*q)));
        }
        out
    }
}

fn argmax(points: impl Iterator<Item = (f64, f64)>) -> Option<(f64, f64)> {
    points.fold(None, |best, (f, q)| match best {
        Some((_, bq)) if bq >= q => best,
        _ => Some((f, q)),
    })
}

pub fn bode_q(sweep: &OnePortSweep, variant: QVariant) -> Result<QCurve, OnePortError> {
    bode_q_with(
        sweep,
        &BodeQSettings {
            variant,
            smoothing: false,
        },
    )
}

pub fn bode_q_with(sweep: &OnePortSweep, settings: &BodeQSettings) -> Result<QCurve, OnePortError> {
    sweep.expect(SweepKind::S11)?;
    sweep.validate()?;
    let n = sweep.len();
    if n < 5 {
        return Err(OnePortError::TooFewPoints(n));
    }
    let omega: Vec<f64> = sweep.freqs.iter().map(|f| 2.0 * PI * f).collect();
    let re: Vec<f64> = sweep.values.iter().map(|s| s.re).collect();
    let im: Vec<f64> = sweep.values.iter().map(|s| s.im).collect();

    // (|S11|, Q numerator without the ω factor) per point
    let terms: Vec<(f64, f64)> = match (settings.variant, settings.smoothing) {
        (QVariant::Paper, false) => {
            let (dre, dim) = (derivative(&omega, &re), derivative(&omega, &im));
            (0..n)
                .map(|i| (sweep.values[i].norm(), Complex64::new(dre[i], dim[i]).norm()))
                .collect()
        }
        (QVariant::Paper, true) => {
            let (fre, fim) = (smooth(&omega, &re), smooth(&omega, &im));
            (0..n)
                .map(|i| {
                    let mag = Complex64::new(fre[i].0, fim[i].0).norm();
                    (mag, Complex64::new(fre[i].1, fim[i].1).norm())
                })
                .collect()
        }
        (QVariant::Feld, smoothing) => {
            let phase = unwrap(sweep.values.iter().map(|s| s.arg()));
            let mags: Vec<f64> = sweep.values.iter().map(|s| s.norm()).collect();
            let (mags, dphi): (Vec<f64>, Vec<f64>) = if smoothing {
                let fm = smooth(&omega, &mags);
                let fp = smooth(&omega, &phase);
                (fm.iter().map(|m| m.0).collect(), fp.iter().map(|p| p.1).collect())
            } else {
                (mags, derivative(&omega, &phase))
            };
            // group delay −dφ/dω; its magnitude enters Q
            (0..n).map(|i| (mags[i], dphi[i].abs() * mags[i])).collect()
        }
    };

    let (mut freqs, mut q) = (Vec::new(), Vec::new());
    for i in 0..n {
        let (mag, num) = terms[i];
        if mag >= MAG_GUARD {
            continue;
        }
        let value = omega[i] * num / (1.0 - mag * mag);
        if value.is_finite() {
            freqs.push(sweep.freqs[i]);
            q.push(value);
        }
    }
    let q_max = argmax(freqs.iter().copied().zip(q.iter().copied())).ok_or(OnePortError::AllExcluded)?;
    Ok(QCurve {
        freqs,
        q,
        q_max,
        variant: settings.variant,
        smoothing: settings.smoothing,
    })
}

/// Second-order central differences on a possibly non-uniform grid,
/// one-sided at the ends.
fn derivative(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n];
    d[0] = (y[1] - y[0]) / (x[1] - x[0]);
    d[n - 1] = (y[n - 1] - y[n - 2]) / (x[n - 1] - x[n - 2]);
    for i in 1..n - 1 {
        let h1 = x[i] - x[i - 1];
        let h2 = x[i + 1] - x[i];
        d[i] = -h2 / (h1 * (h1 + h2)) * y[i - 1] + (h2 - h1) / (h1 * h2) * y[i] + h1 / (h2 * (h1 + h2)) * y[i + 1];
    }
    d
}

/// (value, slope) of a least-squares quadratic through the 5-point window
/// around each sample; windows are shifted inward at the ends.
fn smooth(x: &[f64], y: &[f64]) -> Vec<(f64, f64)> {
    let n = x.len();
    let half = SMOOTH_WINDOW / 2;
    (0..n)
        .map(|i| {
            let start = i.saturating_sub(half).min(n - SMOOTH_WINDOW);
            let window = start..start + SMOOTH_WINDOW;
            let scale = x[window.end - 1] - x[start];
            let mut ata = Matrix3::<f64>::zeros();
            let mut aty = Vector3::<f64>::zeros();
            for k in window {
                let t = (x[k] - x[i]) / scale;
                let row = Vector3::new(1.0, t, t * t);
                ata += row * row.transpose();
                aty += row * y[k];
            }
            let coef = ata.lu().solve(&aty).unwrap_or_else(Vector3::zeros);
            (coef[0], coef[1] / scale)
        })
        .collect()
}

fn unwrap(phase: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    let mut offset = 0.0;
    let mut prev: Option<f64> = None;
    for p in phase {
        if let Some(q) = prev {
            let jump = p - q;
            if jump > PI {
                offset -= 2.0 * PI;
            } else if jump < -PI {
                offset += 2.0 * PI;
            }
        }
        prev = Some(p);
        out.push(p + offset);
    }
    out
}
