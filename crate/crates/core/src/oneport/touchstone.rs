//! 1-port Touchstone (.s1p) reading and writing.

use std::path::Path;

use num_complex::Complex64;

use crate::format::sig17;

use super::{read_text, OnePortError, OnePortSweep, SweepKind, DEFAULT_Z0};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FreqUnit {
    Hz,
    KHz,
    MHz,
    GHz,
}

impl FreqUnit {
    pub fn multiplier(&self) -> f64 {
        match self {
            FreqUnit::Hz => 1.0,
            FreqUnit::KHz => 1e3,
            FreqUnit::MHz => 1e6,
            FreqUnit::GHz => 1e9,
        }
    }

    pub fn token(&self) -> &'static str {
        match self {
            FreqUnit::Hz => "HZ",
            FreqUnit::KHz => "KHZ",
            FreqUnit::MHz => "MHZ",
            FreqUnit::GHz => "GHZ",
        }
    }

    pub const ALL: [FreqUnit; 4] = [FreqUnit::Hz, FreqUnit::KHz, FreqUnit::MHz, FreqUnit::GHz];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    /// real, imaginary
    Ri,
    /// magnitude, angle in degrees
    Ma,
    /// 20·log10 magnitude, angle in degrees
    Db,
}

impl DataFormat {
    pub fn token(&self) -> &'static str {
        match self {
            DataFormat::Ri => "RI",
            DataFormat::Ma => "MA",
            DataFormat::Db => "DB",
        }
    }

    pub const ALL: [DataFormat; 3] = [DataFormat::Ri, DataFormat::Ma, DataFormat::Db];

    fn decode(&self, a: f64, b: f64) -> Complex64 {
        match self {
            DataFormat::Ri => Complex64::new(a, b),
            DataFormat::Ma => Complex64::from_polar(a, b.to_radians()),
            DataFormat::Db => Complex64::from_polar(10f64.powf(a / 20.0), b.to_radians()),
        }
    }

    fn encode(&self, s: Complex64) -> (f64, f64) {
        match self {
            DataFormat::Ri => (s.re, s.im),
            DataFormat::Ma => (s.norm(), s.arg().to_degrees()),
            DataFormat::Db => (20.0 * s.norm().log10(), s.arg().to_degrees()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TouchstoneOptions {
    pub unit: FreqUnit,
    pub format: DataFormat,
}

impl Default for TouchstoneOptions {
    fn default() -> Self {
        Self {
            unit: FreqUnit::Hz,
            format: DataFormat::Ri,
        }
    }
}

pub fn read_touchstone(path: &Path) -> Result<OnePortSweep, OnePortError> {
    parse_touchstone(&read_text(path)?)
}

pub fn parse_touchstone(text: &str) -> Result<OnePortSweep, OnePortError> {
    let err = |line: usize, reason: String| OnePortError::Touchstone { line, reason };
    // version 1 defaults
    let mut unit = FreqUnit::GHz;
    let mut format = DataFormat::Ma;
    let mut z0 = DEFAULT_Z0;
    let mut seen_options = false;
    let (mut freqs, mut values) = (Vec::new(), Vec::new());

    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.split('!').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(opts) = line.strip_prefix('#') {
            if seen_options {
                // only the first option line counts
                continue;
            }
            seen_options = true;
            let mut tokens = opts.split_whitespace();
            while let Some(tok) = tokens.next() {
                match tok.to_ascii_uppercase().as_str() {
                    "HZ" => unit = FreqUnit::Hz,
                    "KHZ" => unit = FreqUnit::KHz,
                    "MHZ" => unit = FreqUnit::MHz,
                    "GHZ" => unit = FreqUnit::GHz,
                    "S" => {}
                    "Y" | "Z" | "G" | "H" => {
                        return Err(err(line_no, format!("parameter type '{tok}' not supported, only S")))
                    }
                    "RI" => format = DataFormat::Ri,
                    "MA" => format = DataFormat::Ma,
                    "DB" => format = DataFormat::Db,
                    "R" => {
                        let value = tokens
                            .next()
                            .ok_or_else(|| err(line_no, "'R' without a reference impedance".into()))?;
                        z0 = value
                            .parse::<f64>()
                            .ok()
                            .filter(|z| *z > 0.0 && z.is_finite())
                            .ok_or_else(|| err(line_no, format!("bad reference impedance '{value}'")))?;
                    }
                    _ => return Err(err(line_no, format!("unknown option token '{tok}'"))),
                }
            }
            continue;
        }
        if line.starts_with('[') {
            return Err(err(line_no, format!("unsupported keyword '{line}'")));
        }
        let numbers: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| err(line_no, format!("bad number '{t}'"))))
            .collect::<Result<_, _>>()?;
        if numbers.len() != 3 {
            return Err(err(
                line_no,
                format!("expected 3 values per row for a 1-port file, found {}", numbers.len()),
            ));
        }
        let f = numbers[0] * unit.multiplier();
        if !(f > 0.0 && f.is_finite()) {
            return Err(err(line_no, format!("frequency {} must be positive", numbers[0])));
        }
        if let Some(&last) = freqs.last() {
            if f <= last {
                return Err(err(line_no, format!("non-monotonic frequency {} after {}", numbers[0], last / unit.multiplier())));
            }
        }
        let s = format.decode(numbers[1], numbers[2]);
        if !(s.re.is_finite() && s.im.is_finite()) {
            return Err(err(line_no, "non-finite S11".into()));
        }
        freqs.push(f);
        values.push(s);
    }
    if freqs.is_empty() {
        return Err(err(text.lines().count().max(1), "no data rows".into()));
    }
    OnePortSweep::new(freqs, values, SweepKind::S11, z0)
}

pub fn format_touchstone(sweep: &OnePortSweep, options: &TouchstoneOptions) -> Result<String, OnePortError> {
    sweep.expect(SweepKind::S11)?;
    let mut out = format!(
        "! 1-port S11\n# {} S {} R {}\n",
        options.unit.token(),
        options.format.token(),
        sweep.z0
    );
    for (f, s) in sweep.freqs.iter().zip(&sweep.values) {
        let (a, b) = options.format.encode(*s);
        out.push_str(&format!("{} {} {}\n", sig17(f / options.unit.multiplier()), sig17(a), sig17(b)));
    }
    Ok(out)
}

/// Writes `# HZ S RI R <z0>`.
pub fn write_touchstone(sweep: &OnePortSweep, path: &Path) -> Result<(), OnePortError> {
    write_touchstone_with(sweep, path, &TouchstoneOptions::default())
}

pub fn write_touchstone_with(
    sweep: &OnePortSweep,
    path: &Path,
    options: &TouchstoneOptions,
) -> Result<(), OnePortError> {
    let text = format_touchstone(sweep, options)?;
    std::fs::write(path, text).map_err(|source| OnePortError::Io {
        path: path.display().to_string(),
        source,
    })
}
