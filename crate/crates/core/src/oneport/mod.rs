//! One-port sweeps: Y ↔ S11 conversion, Bode-Q extraction and file I/O.

mod bode;
mod touchstone;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::format::sig17;

pub use bode::{bode_q, bode_q_with, BodeQSettings, QCurve, QSummary, QVariant};
pub use touchstone::{
    format_touchstone, parse_touchstone, read_touchstone, write_touchstone, write_touchstone_with,
    DataFormat, FreqUnit, TouchstoneOptions,
};

/// Reference impedance used when none is given, Ω.
pub const DEFAULT_Z0: f64 = 50.0;
/// Tolerance above |S11| = 1 before a point counts as non-passive.
pub const PASSIVITY_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum OnePortError {
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error("expected a {expected} sweep, got {found}")]
    WrongKind { expected: SweepKind, found: SweepKind },
    #[error("conversion singular at {freq} Hz")]
    Singular { freq: f64 },
    #[error("Bode-Q needs at least 5 points, got {0}")]
    TooFewPoints(usize),
    #[error("every point has |S11| at or above the passivity guard; no Q defined")]
    AllExcluded,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("touchstone line {line}: {reason}")]
    Touchstone { line: usize, reason: String },
    #[error("sweep csv line {line}: {reason}")]
    Csv { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepKind {
    Y,
    S11,
}

impl fmt::Display for SweepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepKind::Y => "Y",
            SweepKind::S11 => "S11",
        })
    }
}

impl FromStr for SweepKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Y" => Ok(SweepKind::Y),
            "S11" => Ok(SweepKind::S11),
            other => Err(format!("unknown sweep kind '{other}' (expected Y or S11)")),
        }
    }
}

/// Complex one-port response on a strictly increasing frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OnePortSweep {
    /// Hz
    pub freqs: Vec<f64>,
    pub values: Vec<Complex64>,
    pub kind: SweepKind,
    /// Reference impedance, Ω.
    pub z0: f64,
}

impl OnePortSweep {
    pub fn new(freqs: Vec<f64>, values: Vec<Complex64>, kind: SweepKind, z0: f64) -> Result<Self, OnePortError> {
        let sweep = Self {
            freqs,
            values,
            kind,
            z0,
        };
        sweep.validate()?;
        Ok(sweep)
    }

    pub fn validate(&self) -> Result<(), OnePortError> {
        let bad = |m: String| Err(OnePortError::InvalidSweep(m));
        if self.freqs.is_empty() {
            return bad("no frequency points".into());
        }
        if self.freqs.len() != self.values.len() {
            return bad(format!("{} frequencies but {} values", self.freqs.len(), self.values.len()));
        }
        if let Some(f) = self.freqs.iter().find(|f| !(f.is_finite() && **f > 0.0)) {
            return bad(format!("frequency {f} is not positive and finite"));
        }
        if let Some(i) = self.freqs.windows(2).position(|w| w[1] <= w[0]) {
            return bad(format!(
                "frequencies not strictly increasing at index {} ({} after {})",
                i + 1,
                self.freqs[i + 1],
                self.freqs[i]
            ));
        }
        if let Some(i) = self.values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return bad(format!("non-finite value at {} Hz", self.freqs[i]));
        }
        if !(self.z0 > 0.0 && self.z0.is_finite()) {
            return bad(format!("reference impedance {} must be positive", self.z0));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    /// Indices where an S11 sweep exceeds |S11| = 1 by more than [`PASSIVITY_TOL`].
    pub fn passivity_violations(&self) -> Vec<usize> {
        if self.kind != SweepKind::S11 {
            return Vec::new();
        }
        self.values
            .iter()
            .enumerate()
            .filter(|(_, s)| s.norm() > 1.0 + PASSIVITY_TOL)
            .map(|(i, _)| i)
            .collect()
    }

    fn expect(&self, kind: SweepKind) -> Result<(), OnePortError> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(OnePortError::WrongKind {
                expected: kind,
                found: self.kind,
            })
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# kind={} z0={}\nfreq_hz,re,im\n", self.kind, self.z0);
        for (f, v) in self.freqs.iter().zip(&self.values) {
            out.push_str(&format!("{},{},{}\n", sig17(*f), sig17(v.re), sig17(v.im)));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, OnePortError> {
        let err = |line: usize, reason: String| OnePortError::Csv { line, reason };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (n, head) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
        let meta = head
            .trim()
            .strip_prefix('#')
            .ok_or_else(|| err(n + 1, "expected '# kind=<Y|S11> z0=<ohms>'".into()))?;
        let (mut kind, mut z0) = (None, DEFAULT_Z0);
        for token in meta.split_whitespace() {
            match token.split_once('=') {
                Some(("kind", k)) => kind = Some(k.parse::<SweepKind>().map_err(|e| err(n + 1, e))?),
                Some(("z0", z)) => z0 = z.parse().map_err(|_| err(n + 1, format!("bad z0 '{z}'")))?,
                _ => return Err(err(n + 1, format!("unknown header token '{token}'"))),
            }
        }
        let kind = kind.ok_or_else(|| err(n + 1, "header lacks kind=".into()))?;
        let (n, cols) = lines.next().ok_or_else(|| err(n + 2, "missing column header".into()))?;
        if cols.trim() != "freq_hz,re,im" {
            return Err(err(n + 1, format!("expected column header 'freq_hz,re,im', found '{}'", cols.trim())));
        }
        let (mut freqs, mut values) = (Vec::new(), Vec::new());
        for (n, line) in lines {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(err(n + 1, format!("expected 3 fields, found {}", fields.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| err(n + 1, format!("bad number '{s}'")));
            freqs.push(num(fields[0])?);
            values.push(Complex64::new(num(fields[1])?, num(fields[2])?));
        }
        Self::new(freqs, values, kind, z0)
    }

    pub fn read_csv(path: &Path) -> Result<Self, OnePortError> {
        Self::from_csv(&read_text(path)?)
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String, OnePortError> {
    std::fs::read_to_string(path).map_err(|source| OnePortError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// S11 = (1 − z0·Y)/(1 + z0·Y).
pub fn y_to_s11(sweep: &OnePortSweep, z0: f64) -> Result<OnePortSweep, OnePortError> {
    sweep.expect(SweepKind::Y)?;
    if !(z0 > 0.0 && z0.is_finite()) {
        return Err(OnePortError::InvalidSweep(format!("reference impedance {z0} must be positive")));
    }
    let mut values = Vec::with_capacity(sweep.len());
    for (f, y) in sweep.freqs.iter().zip(&sweep.values) {
        let zy = y * z0;
        let den = 1.0 + zy;
        if den == Complex64::new(0.0, 0.0) {
            return Err(OnePortError::Singular { freq: *f });
        }
        values.push((1.0 - zy) / den);
    }
    Ok(OnePortSweep {
        freqs: sweep.freqs.clone(),
        values,
        kind: SweepKind::S11,
        z0,
    })
}

/// Y = (1 − S11)/(z0·(1 + S11)).
pub fn s11_to_y(sweep: &OnePortSweep) -> Result<OnePortSweep, OnePortError> {
    sweep.expect(SweepKind::S11)?;
    let mut values = Vec::with_capacity(sweep.len());
    for (f, s) in sweep.freqs.iter().zip(&sweep.values) {
        let den = (1.0 + s) * sweep.z0;
        if den == Complex64::new(0.0, 0.0) {
            return Err(OnePortError::Singular { freq: *f });
        }
        values.push((1.0 - s) / den);
    }
    Ok(OnePortSweep {
        freqs: sweep.freqs.clone(),
        values,
        kind: SweepKind::Y,
        z0: sweep.z0,
    })
}
