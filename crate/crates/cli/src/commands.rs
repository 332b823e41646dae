use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::Serialize;

use sawstack_core::circuit::{
    admittance, find_resonances_with, fit_mbvd, keff2_from_fsfp, synthesize_mbvd, MbvdModel, ResonanceMethod,
    ResonancePair, ResonanceSettings,
};
use sawstack_core::dispersion::{solve_branches, DispersionBranch, Polarization, SearchSettings, StackConfig};
use sawstack_core::format::{sig17, to_json};
use sawstack_core::materials::{bulk_velocities, MaterialDb};
use sawstack_core::oneport::{
    bode_q_with, format_touchstone, parse_touchstone, s11_to_y, y_to_s11, BodeQSettings, OnePortSweep, QCurve,
    QSummary, QVariant, SweepKind, TouchstoneOptions,
};
use sawstack_core::sweep::{benchmark_table, compare_power_sweeps, design_csv, design_table, reference_benchmarks};

use crate::error::Failure;
use crate::output::Staged;
use crate::{BenchArgs, Cli, DispersionArgs, ExtractArgs, Format, MethodArg, PowerArgs, SynthArgs, VariantArg};

const MAX_GRID_POINTS: usize = 10_000_000;

fn read_input(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::io(format!("cannot read {}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<(String, Vec<u8>), Failure> {
    let bytes = read_input(path)?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| Failure::validation(format!("{} is not UTF-8 text", path.display())))?;
    Ok((text, bytes))
}

fn command_line() -> Vec<String> {
    std::env::args().collect()
}

/// Material database plus the bytes its digest is taken over.
fn load_db(cli: &Cli, staged: &mut Staged) -> Result<MaterialDb, Failure> {
    match &cli.materials {
        Some(path) => {
            let (text, bytes) = read_text(path)?;
            let db = MaterialDb::from_json(&text).map_err(|e| Failure::from(e).context(path.display()))?;
            staged.input("materials", &path.display().to_string(), &bytes);
            Ok(db)
        }
        None => {
            let db = MaterialDb::builtin();
            staged.input("materials", "<builtin>", db.to_json().as_bytes());
            Ok(db)
        }
    }
}

/// `start:stop:step` (inclusive, step > 0), a comma-separated list, or one value.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, Failure> {
    let bad = |why: &str| Failure::validation(format!("grid '{spec}': {why}"));
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| bad(&format!("'{}' is not a finite number", s.trim())))
    };
    let values = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected start:stop:step"));
        }
        let (start, stop, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step > 0.0) || stop < start {
            return Err(bad("need step > 0 and stop ≥ start"));
        }
        let span = (stop - start) / step;
        if span + 1.0 > MAX_GRID_POINTS as f64 {
            return Err(bad("too many points"));
        }
        let n = span.round() as usize;
        if (span - n as f64).abs() > 1e-6 {
            return Err(bad("(stop − start) is not a whole number of steps"));
        }
        (0..=n)
            .map(|k| if k == n { stop } else { start + k as f64 * step })
            .collect()
    } else {
        spec.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    if values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(bad("values must be strictly increasing"));
    }
    Ok(values)
}

// ---------------------------------------------------------------------------
// dispersion

#[derive(Serialize)]
struct BranchRow {
    h_over_lambda: f64,
    wavelength_m: f64,
    label: &'static str,
    v_free: f64,
    v_metal: f64,
    k2_dvv: f64,
}

fn branch_rows(branches: &[DispersionBranch]) -> Vec<BranchRow> {
    branches
        .iter()
        .flat_map(|b| &b.points)
        .map(|p| BranchRow {
            h_over_lambda: p.h_over_lambda,
            wavelength_m: p.wavelength,
            label: p.label.as_str(),
            v_free: p.v_free,
            v_metal: p.v_metal,
            k2_dvv: p.k2_dvv,
        })
        .collect()
}

fn branch_csv(rows: &[BranchRow]) -> String {
    let mut out = String::from("h_over_lambda,wavelength_m,label,v_free,v_metal,k2_dvv\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            sig17(r.h_over_lambda),
            sig17(r.wavelength_m),
            r.label,
            sig17(r.v_free),
            sig17(r.v_metal),
            sig17(r.k2_dvv)
        ));
    }
    out
}

pub fn dispersion(cli: &Cli, args: &DispersionArgs) -> Result<(), Failure> {
    let mut staged = Staged::new(&cli.out_dir);
    let db = load_db(cli, &mut staged)?;
    let (text, bytes) = read_text(&args.stack)?;
    let stack = StackConfig::from_json(&text)
        .and_then(|cfg| cfg.resolve(&db))
        .map_err(|e| Failure::from(e).context(args.stack.display()))?;
    staged.input("stack", &args.stack.display().to_string(), &bytes);
    let grid = parse_grid(&args.grid)?;
    if args.scan_points < 10 {
        return Err(Failure::validation("--scan-points must be at least 10"));
    }
    let settings = SearchSettings {
        scan_points: args.scan_points,
        polarization: if args.coupled {
            Polarization::Coupled
        } else {
            Polarization::Sagittal
        },
        ..Default::default()
    };

    let sweep = solve_branches(&stack, args.h, &grid, &settings)?;
    if !sweep.errors.is_empty() {
        let failed = sweep.errors.len();
        let first = sweep.errors.into_iter().next().expect("non-empty");
        let r = first.h_over_lambda;
        return Err(Failure::from(first.error).context(format!(
            "{failed} of {} grid points failed; first at h/λ = {r}",
            grid.len()
        )));
    }

    let rows = branch_rows(&sweep.branches);
    let table = match cli.format {
        Format::Csv => branch_csv(&rows),
        Format::Json => to_json(&rows),
    };
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("dispersion.{}", cli.format.ext())));
    staged.add(&out, table)?;
    if let Some(path) = &args.design {
        let design = design_table(&sweep.branches, args.h);
        let text = match cli.format {
            Format::Csv => design_csv(&design),
            Format::Json => to_json(&design),
        };
        staged.add(path, text)?;
    }
    staged.commit("dispersion.manifest.json", command_line(), cli.seed)?;
    for b in &sweep.branches {
        eprintln!("{}: {} point(s)", b.label.as_str(), b.points.len());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// extract

#[derive(Serialize)]
struct FitReport {
    model: MbvdModel,
    rms_s: f64,
    iterations: usize,
    converged: bool,
    window_hz: [f64; 2],
}

#[derive(Serialize)]
struct ModeReport {
    fs_hz: f64,
    fp_hz: f64,
    keff2: f64,
    /// Q maximum between fs − (fp − fs)/4 and fp + (fp − fs)/4
    q_band_max: Option<f64>,
    f_at_q_band_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fit: Option<FitReport>,
}

#[derive(Serialize)]
struct ExtractionReport {
    source: String,
    z0_ohm: f64,
    points: usize,
    passivity_violations: usize,
    resonance_method: &'static str,
    prominence_db: f64,
    modes: Vec<ModeReport>,
    q: QSummary,
}

/// Fits one motional branch on the sweep restricted to fs − 3Δ … fp + 3Δ.
fn fit_mode(y: &OnePortSweep, pair: &ResonancePair, k2: f64, q_est: Option<f64>) -> Result<FitReport, Failure> {
    let delta = pair.fp - pair.fs;
    let (lo, hi) = (pair.fs - 3.0 * delta, pair.fp + 3.0 * delta);
    let keep: Vec<usize> = (0..y.len()).filter(|&k| y.freqs[k] >= lo && y.freqs[k] <= hi).collect();
    let window = if keep.len() >= 20 {
        OnePortSweep::new(
            keep.iter().map(|&k| y.freqs[k]).collect(),
            keep.iter().map(|&k| y.values[k]).collect(),
            SweepKind::Y,
            y.z0,
        )?
    } else {
        y.clone()
    };
    // C0 from the susceptance at the low edge, less the motional share there
    let f0 = window.freqs[0];
    let ratio = 8.0 * k2 / (PI * PI);
    let c0 = window.values[0].im / (2.0 * PI * f0) / (1.0 + ratio * pair.fs.powi(2) / (pair.fs.powi(2) - f0 * f0).abs().max(1e-30));
    if !(c0 > 0.0 && c0.is_finite()) {
        return Err(Failure::solver(format!("no capacitive baseline near {} Hz to seed the fit", pair.fs)));
    }
    let init = synthesize_mbvd(pair.fs, k2.max(1e-6), c0, q_est.unwrap_or(200.0).max(10.0))?;
    let result = fit_mbvd(&window, &init)?;
    Ok(FitReport {
        model: result.model,
        rms_s: result.rms,
        iterations: result.iterations,
        converged: result.converged,
        window_hz: [window.freqs[0], *window.freqs.last().expect("non-empty sweep")],
    })
}

fn q_table(curve: &QCurve, format: Format) -> String {
    match format {
        Format::Csv => curve.to_csv(),
        Format::Json => {
            #[derive(Serialize)]
            struct QTable<'a> {
                freq_hz: &'a [f64],
                q: &'a [f64],
            }
            to_json(&QTable {
                freq_hz: &curve.freqs,
                q: &curve.q,
            })
        }
    }
}

pub fn extract(cli: &Cli, args: &ExtractArgs) -> Result<(), Failure> {
    let mut staged = Staged::new(&cli.out_dir);
    if !(args.prominence_db > 0.0 && args.prominence_db.is_finite()) {
        return Err(Failure::validation("--prominence-db must be positive"));
    }
    let (text, bytes) = read_text(&args.s1p)?;
    let s11 = parse_touchstone(&text).map_err(|e| Failure::from(e).context(args.s1p.display()))?;
    staged.input("s1p", &args.s1p.display().to_string(), &bytes);

    let y = s11_to_y(&s11)?;
    let settings = ResonanceSettings {
        prominence_db: args.prominence_db,
        method: match args.method {
            MethodArg::Conductance => ResonanceMethod::Conductance,
            MethodArg::Magnitude => ResonanceMethod::Magnitude,
        },
    };
    let pairs = find_resonances_with(&y, &settings)?;
    let curve = bode_q_with(
        &s11,
        &BodeQSettings {
            variant: match args.variant {
                VariantArg::Paper => QVariant::Paper,
                VariantArg::Feld => QVariant::Feld,
            },
            smoothing: args.smooth,
        },
    )?;

    let mut modes = Vec::with_capacity(pairs.len());
    for pair in &pairs {
        let keff2 = keff2_from_fsfp(pair)?;
        let pad = 0.25 * (pair.fp - pair.fs);
        let band = curve.peak_in(pair.fs - pad, pair.fp + pad);
        let fit = if args.fit {
            Some(fit_mode(&y, pair, keff2, band.map(|b| b.1)).map_err(|e| e.context(format!("fit near {} Hz", pair.fs)))?)
        } else {
            None
        };
        modes.push(ModeReport {
            fs_hz: pair.fs,
            fp_hz: pair.fp,
            keff2,
            q_band_max: band.map(|b| b.1),
            f_at_q_band_max: band.map(|b| b.0),
            fit,
        });
    }
    let report = ExtractionReport {
        source: args.s1p.display().to_string(),
        z0_ohm: s11.z0,
        points: s11.len(),
        passivity_violations: s11.passivity_violations().len(),
        resonance_method: match settings.method {
            ResonanceMethod::Conductance => "conductance",
            ResonanceMethod::Magnitude => "magnitude",
        },
        prominence_db: settings.prominence_db,
        modes,
        q: curve.summary(),
    };

    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("extract.json"));
    let q_out = args
        .q_out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("q.{}", cli.format.ext())));
    staged.add(&out, to_json(&report))?;
    staged.add(&q_out, q_table(&curve, cli.format))?;
    staged.commit("extract.manifest.json", command_line(), cli.seed)?;
    for m in &report.modes {
        println!("fs {:.6} GHz  fp {:.6} GHz  k_eff² {:.4} %", m.fs_hz / 1e9, m.fp_hz / 1e9, m.keff2 * 100.0);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// synth

fn admittance_table(y: &OnePortSweep, format: Format) -> String {
    match format {
        Format::Csv => y.to_csv(),
        Format::Json => {
            #[derive(Serialize)]
            struct YTable {
                kind: String,
                z0: f64,
                freq_hz: Vec<f64>,
                re: Vec<f64>,
                im: Vec<f64>,
            }
            to_json(&YTable {
                kind: y.kind.to_string(),
                z0: y.z0,
                freq_hz: y.freqs.clone(),
                re: y.values.iter().map(|v| v.re).collect(),
                im: y.values.iter().map(|v| v.im).collect(),
            })
        }
    }
}

pub fn synth(cli: &Cli, args: &SynthArgs) -> Result<(), Failure> {
    let mut staged = Staged::new(&cli.out_dir);
    for (name, v, positive) in [
        ("fs", args.fs, true),
        ("c0", args.c0, true),
        ("q", args.q, true),
        ("z0", args.z0, true),
        ("k2", args.k2, false),
        ("rs", args.rs, false),
        ("r0", args.r0, false),
    ] {
        let ok = v.is_finite() && if positive { v > 0.0 } else { v >= 0.0 };
        if !ok {
            let need = if positive { "> 0" } else { "≥ 0" };
            return Err(Failure::validation(format!("--{name} = {v} must be finite and {need}")));
        }
    }
    let freqs = parse_grid(&args.grid)?;
    if freqs[0] <= 0.0 {
        return Err(Failure::validation("frequencies must be positive"));
    }
    let model = MbvdModel {
        rs: args.rs,
        r0: args.r0,
        ..synthesize_mbvd(args.fs, args.k2, args.c0, args.q)?
    };
    let y = admittance(&model, &freqs)?;
    let s11 = y_to_s11(&y, args.z0)?;

    staged.add(
        args.s1p_out.as_deref().unwrap_or(Path::new("synth.s1p")),
        format_touchstone(&s11, &TouchstoneOptions::default())?,
    )?;
    let y_out = args
        .y_out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("admittance.{}", cli.format.ext())));
    staged.add(&y_out, admittance_table(&y, cli.format))?;
    staged.add(args.model_out.as_deref().unwrap_or(Path::new("model.json")), model.to_json())?;
    staged.commit("synth.manifest.json", command_line(), cli.seed)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// power

pub fn power(cli: &Cli, args: &PowerArgs) -> Result<(), Failure> {
    let mut staged = Staged::new(&cli.out_dir);
    if args.s1p.len() != args.powers.len() {
        return Err(Failure::validation(format!(
            "{} files but {} power levels",
            args.s1p.len(),
            args.powers.len()
        )));
    }
    let mut sweeps = Vec::with_capacity(args.s1p.len());
    for path in &args.s1p {
        let (text, bytes) = read_text(path)?;
        let s11 = parse_touchstone(&text).map_err(|e| Failure::from(e).context(path.display()))?;
        staged.input("s1p", &path.display().to_string(), &bytes);
        sweeps.push((path.display().to_string(), s11));
    }
    let report = compare_power_sweeps(&sweeps, &args.powers)?;
    staged.add(args.out.as_deref().unwrap_or(Path::new("drift.json")), to_json(&report))?;
    staged.commit("power.manifest.json", command_line(), cli.seed)?;
    for ((label, p), shift) in report.labels.iter().zip(&report.powers).zip(&report.fs_shift_ppm) {
        println!("{p:>7.2} dBm  {shift:>9.3} ppm  {label}");
    }
    println!("hysteresis {:.3} ppm", report.hysteresis_ppm);
    Ok(())
}

// ---------------------------------------------------------------------------
// bench

pub fn bench(cli: &Cli, args: &BenchArgs) -> Result<(), Failure> {
    let entries = reference_benchmarks()?;
    let table = benchmark_table(&entries)?;
    if let Some(out) = &args.out {
        let mut staged = Staged::new(&cli.out_dir);
        let text = match cli.format {
            Format::Csv => table.csv.clone(),
            Format::Json => to_json(&entries),
        };
        staged.add(out, text)?;
        staged.commit("bench.manifest.json", command_line(), cli.seed)?;
    }
    print!("{}", table.text);
    Ok(())
}

// ---------------------------------------------------------------------------
// materials validate

pub fn materials_validate(cli: &Cli) -> Result<(), Failure> {
    let mut scratch = Staged::new(&cli.out_dir);
    let db = load_db(cli, &mut scratch)?;
    println!("{:<10} {:<14} {:>9} {:>9} {:>9} {:>9}", "name", "kind", "rho", "v1", "v2", "v3");
    for m in db.iter() {
        m.validate()?;
        let v = bulk_velocities(m, [1.0, 0.0, 0.0])?;
        let kind = match m.kind {
            sawstack_core::materials::MaterialKind::Piezoelectric => "piezoelectric",
            sawstack_core::materials::MaterialKind::Elastic => "elastic",
        };
        println!(
            "{:<10} {:<14} {:>9.0} {:>9.1} {:>9.1} {:>9.1}",
            m.name, kind, m.density, v[0], v[1], v[2]
        );
    }
    println!("{} material(s) valid; bulk velocities in m/s along x", db.len());
    Ok(())
}
