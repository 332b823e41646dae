//! Design tables over h/λ, power-sweep drift analysis and benchmark tables.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{find_resonances, CircuitError, ResonancePair};
use crate::dispersion::{DispersionBranch, ModeLabel};
use crate::format::sig17;
use crate::oneport::{s11_to_y, OnePortError, OnePortSweep, SweepKind};

pub const FIG6_CSV: &str = include_str!("../data/fig6_design.csv");
pub const TABLE1_CSV: &str = include_str!("../data/table1_benchmark.csv");
pub const FIG5_CSV: &str = include_str!("../data/fig5_coupling.csv");

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("benchmark entry {row}: missing field '{field}'")]
    MissingField { row: usize, field: &'static str },
    #[error("sweep '{label}': {source}")]
    Resonance {
        label: String,
        #[source]
        source: CircuitError,
    },
    #[error(transparent)]
    OnePort(#[from] OnePortError),
    #[error("reference data: {0}")]
    Data(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonatorGeometry {
    /// IDT electrode pairs
    pub ne: u32,
    pub reflector_pairs: u32,
    /// in wavelengths
    pub aperture: f64,
    /// m
    pub film_thickness: f64,
    pub h_over_lambda: f64,
}

impl ResonatorGeometry {
    pub fn validate(&self) -> Result<(), SweepError> {
        if self.ne == 0 || self.reflector_pairs == 0 {
            return Err(SweepError::InvalidArgument("electrode and reflector counts must be positive".into()));
        }
        for (name, v) in [
            ("aperture", self.aperture),
            ("film_thickness", self.film_thickness),
            ("h_over_lambda", self.h_over_lambda),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SweepError::InvalidArgument(format!("{name} = {v} must be positive")));
            }
        }
        Ok(())
    }

    /// m
    pub fn wavelength(&self) -> f64 {
        self.film_thickness / self.h_over_lambda
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowSource {
    Simulated,
    Measured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRow {
    pub h_over_lambda: f64,
    pub label: ModeLabel,
    /// Hz
    pub fs: f64,
    /// m/s
    pub v_p: f64,
    pub k2: f64,
    pub source: RowSource,
}

/// One row per branch point, fs = v_free·(h/λ)/h, sorted by (label, h/λ).
pub fn design_table(branches: &[DispersionBranch], h: f64) -> Vec<DesignRow> {
    let mut rows: Vec<DesignRow> = branches
        .iter()
        .flat_map(|b| b.points.iter())
        .map(|p| DesignRow {
            h_over_lambda: p.h_over_lambda,
            label: p.label,
            fs: p.v_free * p.h_over_lambda / h,
            v_p: p.v_free,
            k2: p.k2_dvv,
            source: RowSource::Simulated,
        })
        .collect();
    rows.sort_by(|a, b| a.label.cmp(&b.label).then(a.h_over_lambda.total_cmp(&b.h_over_lambda)));
    rows
}

pub fn design_csv(rows: &[DesignRow]) -> String {
    let mut out = String::from("h_over_lambda,label,fs_hz,v_p_m_s,k2,source\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            sig17(r.h_over_lambda),
            r.label.as_str(),
            sig17(r.fs),
            sig17(r.v_p),
            sig17(r.k2),
            match r.source {
                RowSource::Simulated => "simulated",
                RowSource::Measured => "measured",
            }
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// Reference data

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuredRow {
    pub h_over_lambda: f64,
    pub label: ModeLabel,
    pub fs_hz: f64,
    pub k2: f64,
    pub q_p3db: f64,
    pub ne: u32,
}

impl MeasuredRow {
    /// As a design row for film thickness `h`, with v_p = fs·h/(h/λ).
    pub fn to_design_row(&self, h: f64) -> DesignRow {
        DesignRow {
            h_over_lambda: self.h_over_lambda,
            label: self.label,
            fs: self.fs_hz,
            v_p: self.fs_hz * h / self.h_over_lambda,
            k2: self.k2,
            source: RowSource::Measured,
        }
    }
}

/// Bundled measured design rows versus h/λ.
pub fn reference_design_rows() -> Result<Vec<MeasuredRow>, SweepError> {
    reader(FIG6_CSV)
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| SweepError::Data(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingEndpoint {
    pub label: ModeLabel,
    pub ne_values: String,
    pub k2_endpoint: f64,
    pub behaviour: String,
}

/// Bundled coupling endpoints versus electrode-pair count.
pub fn reference_coupling_endpoints() -> Result<Vec<CouplingEndpoint>, SweepError> {
    reader(FIG5_CSV)
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| SweepError::Data(e.to_string()))
}

// ---------------------------------------------------------------------------
// Benchmark table

/// One platform in a benchmark table. Every field is required by
/// [`benchmark_table`]; options allow partially specified input.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkEntry {
    pub reference: Option<String>,
    pub platform: Option<String>,
    pub mode: Option<String>,
    pub substrate: Option<String>,
    pub fs_hz: Option<f64>,
    pub v_p_m_s: Option<f64>,
    pub k2: Option<f64>,
    pub q_max: Option<f64>,
}

impl BenchmarkEntry {
    pub fn from_design_row(row: &DesignRow, reference: &str, platform: &str, substrate: &str, q_max: Option<f64>) -> Self {
        Self {
            reference: Some(reference.into()),
            platform: Some(platform.into()),
            mode: Some(row.label.as_str().into()),
            substrate: Some(substrate.into()),
            fs_hz: Some(row.fs),
            v_p_m_s: Some(row.v_p),
            k2: Some(row.k2),
            q_max,
        }
    }
}

/// Bundled comparison rows.
pub fn reference_benchmarks() -> Result<Vec<BenchmarkEntry>, SweepError> {
    reader(TABLE1_CSV)
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| SweepError::Data(e.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkTable {
    pub csv: String,
    pub text: String,
}

struct Complete<'a> {
    reference: &'a str,
    platform: &'a str,
    mode: &'a str,
    substrate: &'a str,
    fs: f64,
    v_p: f64,
    k2: f64,
    q_max: f64,
}

fn complete(row: usize, e: &BenchmarkEntry) -> Result<Complete<'_>, SweepError> {
    let missing = |field| SweepError::MissingField { row, field };
    Ok(Complete {
        reference: e.reference.as_deref().ok_or_else(|| missing("reference"))?,
        platform: e.platform.as_deref().ok_or_else(|| missing("platform"))?,
        mode: e.mode.as_deref().ok_or_else(|| missing("mode"))?,
        substrate: e.substrate.as_deref().ok_or_else(|| missing("substrate"))?,
        fs: e.fs_hz.ok_or_else(|| missing("fs_hz"))?,
        v_p: e.v_p_m_s.ok_or_else(|| missing("v_p_m_s"))?,
        k2: e.k2.ok_or_else(|| missing("k2"))?,
        q_max: e.q_max.ok_or_else(|| missing("q_max"))?,
    })
}

/// CSV (17 significant digits) and an aligned text rendering.
pub fn benchmark_table(entries: &[BenchmarkEntry]) -> Result<BenchmarkTable, SweepError> {
    let rows: Vec<Complete> = entries.iter().enumerate().map(|(i, e)| complete(i, e)).collect::<Result<_, _>>()?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| SweepError::Data(e.to_string());
    w.write_record(["reference", "platform", "mode", "substrate", "fs_hz", "v_p_m_s", "k2", "q_max"])
        .map_err(io)?;
    for r in &rows {
        w.write_record([
            r.reference.to_string(),
            r.platform.to_string(),
            r.mode.to_string(),
            r.substrate.to_string(),
            sig17(r.fs),
            sig17(r.v_p),
            sig17(r.k2),
            sig17(r.q_max),
        ])
        .map_err(io)?;
    }
    let csv = String::from_utf8(w.into_inner().map_err(|e| SweepError::Data(e.to_string()))?)
        .expect("csv output is utf-8");

    let header = ["Ref.", "Platform", "Mode", "Substrate", "fs [GHz]", "vp [m/s]", "k2 [%]", "Qmax"];
    let cells: Vec<[String; 8]> = rows
        .iter()
        .map(|r| {
            [
                r.reference.to_string(),
                r.platform.to_string(),
                r.mode.to_string(),
                r.substrate.to_string(),
                format!("{:.2}", r.fs / 1e9),
                format!("{:.0}", r.v_p),
                format!("{:.2}", r.k2 * 100.0),
                format!("{:.0}", r.q_max),
            ]
        })
        .collect();
    let mut width = header.map(|h| h.chars().count());
    for row in &cells {
        for (w, c) in width.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cols: &[String]| {
        cols.iter()
            .enumerate()
            .map(|(i, c)| {
                let pad = width[i] - c.chars().count();
                if i < 4 {
                    format!("{c}{}", " ".repeat(pad))
                } else {
                    format!("{}{c}", " ".repeat(pad))
                }
            })
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut text = line(&header.map(String::from));
    text.push('\n');
    text.push_str(&"-".repeat(width.iter().sum::<usize>() + 2 * (width.len() - 1)));
    text.push('\n');
    for row in &cells {
        text.push_str(&line(row));
        text.push('\n');
    }
    Ok(BenchmarkTable { csv, text })
}

// ---------------------------------------------------------------------------
// Power drift

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub labels: Vec<String>,
    /// dBm
    pub powers: Vec<f64>,
    /// Hz
    pub fs_hz: Vec<f64>,
    /// relative to the first sweep
    pub fs_shift_ppm: Vec<f64>,
    /// peak |Y| change relative to the first sweep, dB
    pub peak_mag_change_db: Vec<f64>,
    /// |fs(last) − fs(earliest sweep at the same power)| in ppm of the latter
    pub hysteresis_ppm: f64,
}

/// Tracks the series resonance across sweeps taken at different drive
/// powers. The strongest resonance of the first sweep is followed; later
/// sweeps use the pair nearest to it.
pub fn compare_power_sweeps(sweeps: &[(String, OnePortSweep)], powers: &[f64]) -> Result<DriftReport, SweepError> {
    if sweeps.is_empty() {
        return Err(SweepError::InvalidArgument("no sweeps given".into()));
    }
    if sweeps.len() != powers.len() {
        return Err(SweepError::InvalidArgument(format!(
            "{} sweeps but {} power levels",
            sweeps.len(),
            powers.len()
        )));
    }
    if let Some(p) = powers.iter().find(|p| !p.is_finite()) {
        return Err(SweepError::InvalidArgument(format!("power {p} dBm is not finite")));
    }
    let grid = &sweeps[0].1.freqs;
    if let Some((label, _)) = sweeps.iter().find(|(_, s)| &s.freqs != grid) {
        return Err(SweepError::InvalidArgument(format!(
            "sweep '{label}' does not share the first sweep's frequency grid"
        )));
    }

    let mut fs_hz: Vec<f64> = Vec::with_capacity(sweeps.len());
    let mut peaks: Vec<f64> = Vec::with_capacity(sweeps.len());
    for (k, (label, sweep)) in sweeps.iter().enumerate() {
        let y = match sweep.kind {
            SweepKind::Y => sweep.clone(),
            SweepKind::S11 => s11_to_y(sweep)?,
        };
        let pairs = find_resonances(&y).map_err(|source| SweepError::Resonance {
            label: label.clone(),
            source,
        })?;
        let pair = if k == 0 {
            *pairs
                .iter()
                .max_by(|a, b| peak_magnitude(&y, a).total_cmp(&peak_magnitude(&y, b)))
                .expect("find_resonances returns at least one pair")
        } else {
            let reference = fs_hz[0];
            *pairs
                .iter()
                .min_by(|a, b| (a.fs - reference).abs().total_cmp(&(b.fs - reference).abs()))
                .expect("find_resonances returns at least one pair")
        };
        fs_hz.push(pair.fs);
        peaks.push(peak_magnitude(&y, &pair));
    }

    let ppm = |f: f64, base: f64| (f - base) / base * 1e6;
    let fs_shift_ppm = fs_hz.iter().map(|&f| ppm(f, fs_hz[0])).collect();
    let peak_mag_change_db = peaks.iter().map(|&p| 20.0 * (p / peaks[0]).log10()).collect();
    let last = sweeps.len() - 1;
    let base = (0..last).find(|&k| powers[k] == powers[last]).unwrap_or(0);
    let hysteresis_ppm = ppm(fs_hz[last], fs_hz[base]).abs();
    Ok(DriftReport {
        labels: sweeps.iter().map(|(l, _)| l.clone()).collect(),
        powers: powers.to_vec(),
        fs_hz,
        fs_shift_ppm,
        peak_mag_change_db,
        hysteresis_ppm,
    })
}

/// Largest |Y| sample between fs − (fp − fs) and the midpoint of the pair.
fn peak_magnitude(y: &OnePortSweep, pair: &ResonancePair) -> f64 {
    let lo = pair.fs - (pair.fp - pair.fs);
    let hi = 0.5 * (pair.fs + pair.fp);
    y.freqs
        .iter()
        .zip(&y.values)
        .filter(|(f, _)| **f >= lo && **f <= hi)
        .map(|(_, v)| v.norm())
        .fold(0.0, f64::max)
}
