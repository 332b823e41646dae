//! Modified Butterworth–Van Dyke (mBVD) one-port: synthesis, admittance,
//! resonance finding, coupling extraction and least-squares fitting.
//!
//! Topology: a static branch r0 + C0 in parallel with the motional branch
//! rm + Lm + Cm, the pair in series with rs.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oneport::{OnePortError, OnePortSweep, SweepKind};

#[derive(Debug, Error)]
pub enum CircuitError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("no resonance found")]
    NoResonance,
    #[error("fp not bracketed: no admittance minimum above fs = {fs} Hz inside the sweep")]
    FpNotBracketed { fs: f64 },
    #[error("non-finite data: {0}")]
    NonFinite(String),
    #[error("malformed model JSON: {0}")]
    Parse(String),
    #[error(transparent)]
    Sweep(#[from] OnePortError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MbvdModel {
    /// F
    pub c0: f64,
    /// F; zero means no motional branch
    pub cm: f64,
    /// H
    pub lm: f64,
    /// Ω
    pub rm: f64,
    /// Ω
    pub rs: f64,
    /// Ω, in series with C0
    pub r0: f64,
}

impl MbvdModel {
    pub fn validate(&self) -> Result<(), CircuitError> {
        let fields = [
            ("c0", self.c0),
            ("cm", self.cm),
            ("lm", self.lm),
            ("rm", self.rm),
            ("rs", self.rs),
            ("r0", self.r0),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(CircuitError::InvalidModel(format!("{name} = {v} must be finite and ≥ 0")));
            }
        }
        if self.c0 <= 0.0 {
            return Err(CircuitError::InvalidModel("c0 must be > 0".into()));
        }
        if (self.cm > 0.0) != (self.lm > 0.0) {
            return Err(CircuitError::InvalidModel(
                "cm and lm must both be > 0 (or both 0 for a capacitor-only model)".into(),
            ));
        }
        Ok(())
    }

    pub fn has_motional(&self) -> bool {
        self.cm > 0.0
    }

    /// 1/(2π√(Lm·Cm)), Hz.
    pub fn series_resonance(&self) -> Option<f64> {
        self.has_motional()
            .then(|| 1.0 / (2.0 * PI * (self.lm * self.cm).sqrt()))
    }

    pub fn admittance_at(&self, f: f64) -> Complex64 {
        self.branches(f).y
    }

    fn branches(&self, f: f64) -> Branches {
        let w = 2.0 * PI * f;
        let j = Complex64::i();
        let yc = 1.0 / (self.r0 + 1.0 / (j * w * self.c0));
        let ym = if self.has_motional() {
            1.0 / (self.rm + j * w * self.lm + 1.0 / (j * w * self.cm))
        } else {
            Complex64::new(0.0, 0.0)
        };
        let yi = yc + ym;
        let y = 1.0 / (self.rs + 1.0 / yi);
        Branches { w, yc, ym, yi, y }
    }

    pub fn from_json(text: &str) -> Result<Self, CircuitError> {
        let model: Self = serde_json::from_str(text).map_err(|e| CircuitError::Parse(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        crate::format::to_json(self)
    }
}

struct Branches {
    w: f64,
    yc: Complex64,
    ym: Complex64,
    yi: Complex64,
    y: Complex64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonancePair {
    /// Hz
    pub fs: f64,
    /// Hz
    pub fp: f64,
}

impl ResonancePair {
    pub fn new(fs: f64, fp: f64) -> Result<Self, CircuitError> {
        let pair = Self { fs, fp };
        pair.validate()?;
        Ok(pair)
    }

    fn validate(&self) -> Result<(), CircuitError> {
        if !(self.fs > 0.0 && self.fs.is_finite() && self.fp.is_finite()) {
            return Err(CircuitError::InvalidArgument(format!(
                "resonances must be positive and finite (fs = {}, fp = {})",
                self.fs, self.fp
            )));
        }
        if self.fp < self.fs {
            return Err(CircuitError::InvalidArgument(format!(
                "fp = {} Hz below fs = {} Hz",
                self.fp, self.fs
            )));
        }
        Ok(())
    }
}

/// k²eff = (π²/8)·(fp² − fs²)/fs².
pub fn keff2_from_fsfp(pair: &ResonancePair) -> Result<f64, CircuitError> {
    pair.validate()?;
    let (fs, fp) = (pair.fs, pair.fp);
    Ok(PI * PI / 8.0 * ((fp - fs) / fs) * ((fp + fs) / fs))
}

/// fp = fs·√(1 + 8k²/π²).
pub fn fp_from_keff2(fs: f64, k2: f64) -> Result<f64, CircuitError> {
    if !(fs > 0.0 && fs.is_finite()) {
        return Err(CircuitError::InvalidArgument(format!("fs = {fs} must be positive")));
    }
    if !(k2 >= 0.0 && k2.is_finite()) {
        return Err(CircuitError::InvalidArgument(format!("k2 = {k2} must be ≥ 0")));
    }
    Ok(fs * (1.0 + 8.0 * k2 / (PI * PI)).sqrt())
}

/// Lossy-motional model with cm = 8k²c0/π², lm from fs and rm = ωs·lm/q.
/// `k2 = 0` gives a bare capacitor.
pub fn synthesize_mbvd(fs: f64, k2: f64, c0: f64, q: f64) -> Result<MbvdModel, CircuitError> {
    for (name, v) in [("fs", fs), ("c0", c0), ("q", q)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(CircuitError::InvalidArgument(format!("{name} = {v} must be positive")));
        }
    }
    if !(k2 >= 0.0 && k2.is_finite()) {
        return Err(CircuitError::InvalidArgument(format!("k2 = {k2} must be ≥ 0")));
    }
    let ws = 2.0 * PI * fs;
    let cm = 8.0 * k2 * c0 / (PI * PI);
    let (lm, rm) = if cm > 0.0 {
        let lm = 1.0 / (ws * ws * cm);
        (lm, ws * lm / q)
    } else {
        (0.0, 0.0)
    };
    Ok(MbvdModel {
        c0,
        cm,
        lm,
        rm,
        rs: 0.0,
        r0: 0.0,
    })
}

pub fn admittance(model: &MbvdModel, freqs: &[f64]) -> Result<OnePortSweep, CircuitError> {
    model.validate()?;
    let values = freqs.iter().map(|&f| model.admittance_at(f)).collect();
    Ok(OnePortSweep::new(freqs.to_vec(), values, SweepKind::Y, crate::oneport::DEFAULT_Z0)?)
}

// ---------------------------------------------------------------------------
// Resonance finding

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResonanceMethod {
    /// Peaks located on |Y|, then fs at the conductance maximum and fp at the
    /// resistance maximum, each refined by a 3-point parabola.
    #[default]
    Conductance,
    /// fs at the |Y| maximum and fp at the |Y| minimum, refined on log|Y|.
    Magnitude,
}

#[derive(Debug, Clone, Copy)]
pub struct ResonanceSettings {
    /// Minimum topographic prominence of an |Y| peak, dB.
    pub prominence_db: f64,
    pub method: ResonanceMethod,
}

impl Default for ResonanceSettings {
    fn default() -> Self {
        Self {
            prominence_db: 6.0,
            method: ResonanceMethod::Conductance,
        }
    }
}

pub fn find_resonances(sweep: &OnePortSweep) -> Result<Vec<ResonancePair>, CircuitError> {
    find_resonances_with(sweep, &ResonanceSettings::default())
}

/// One pair per |Y| peak above the prominence threshold, ordered by fs.
pub fn find_resonances_with(
    sweep: &OnePortSweep,
    settings: &ResonanceSettings,
) -> Result<Vec<ResonancePair>, CircuitError> {
    if sweep.kind != SweepKind::Y {
        return Err(OnePortError::WrongKind {
            expected: SweepKind::Y,
            found: sweep.kind,
        }
        .into());
    }
    sweep.validate()?;
    let n = sweep.len();
    if n < 3 {
        return Err(CircuitError::NoResonance);
    }
    let f = &sweep.freqs;
    let db: Vec<f64> = sweep
        .values
        .iter()
        .map(|y| 20.0 * y.norm().max(f64::MIN_POSITIVE).log10())
        .collect();
    let peaks = prominent_peaks(&db, settings.prominence_db);
    if peaks.is_empty() {
        return Err(CircuitError::NoResonance);
    }

    let g: Vec<f64> = sweep.values.iter().map(|y| y.re).collect();
    let r: Vec<f64> = sweep.values.iter().map(|y| (1.0 / y).re).collect();
    let mut pairs = Vec::with_capacity(peaks.len());
    let mut window_start = 0;
    for (k, &p) in peaks.iter().enumerate() {
        let window_end = peaks.get(k + 1).copied().unwrap_or(n - 1);
        let dip = argmin(&db, p + 1, window_end);
        if dip == n - 1 {
            return Err(CircuitError::FpNotBracketed { fs: f[p] });
        }
        let pair = match settings.method {
            ResonanceMethod::Magnitude => ResonancePair {
                fs: vertex(f, &db, p),
                fp: vertex(f, &db, dip),
            },
            ResonanceMethod::Conductance => {
                let is = argmax(&g, window_start, dip);
                let ip = argmax(&r, is + 1, window_end);
                if ip == n - 1 {
                    return Err(CircuitError::FpNotBracketed { fs: f[is] });
                }
                ResonancePair {
                    fs: vertex(f, &g, is),
                    fp: vertex(f, &r, ip),
                }
            }
        };
        if !(pair.fp > pair.fs) {
            return Err(CircuitError::FpNotBracketed { fs: pair.fs });
        }
        pairs.push(pair);
        window_start = dip;
    }
    Ok(pairs)
}

/// Interior local maxima whose topographic prominence is at least `min_prominence`.
fn prominent_peaks(y: &[f64], min_prominence: f64) -> Vec<usize> {
    let n = y.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if y[i] > y[i - 1] {
            // walk a plateau to its end
            let mut j = i;
            while j + 1 < n && y[j + 1] == y[i] {
                j += 1;
            }
            if j + 1 < n && y[j + 1] < y[i] {
                let left = (0..i).rev().find(|&k| y[k] > y[i]).unwrap_or(0);
                let right = (j + 1..n).find(|&k| y[k] > y[i]).unwrap_or(n - 1);
                let left_min = y[left..i].iter().copied().fold(f64::INFINITY, f64::min);
                let right_min = y[j + 1..=right].iter().copied().fold(f64::INFINITY, f64::min);
                if y[i] - left_min.max(right_min) >= min_prominence {
                    out.push(i);
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Index of the maximum of y[lo..=hi] (first on ties).
fn argmax(y: &[f64], lo: usize, hi: usize) -> usize {
    (lo..=hi).fold(lo, |best, k| if y[k] > y[best] { k } else { best })
}

fn argmin(y: &[f64], lo: usize, hi: usize) -> usize {
    (lo..=hi).fold(lo, |best, k| if y[k] < y[best] { k } else { best })
}

/// Abscissa of the parabola through samples i−1, i, i+1; the sample itself at the ends.
fn vertex(x: &[f64], y: &[f64], i: usize) -> f64 {
    if i == 0 || i + 1 >= x.len() {
        return x[i];
    }
    let (xa, xb, xc) = (x[i - 1], x[i], x[i + 1]);
    let (ya, yb, yc) = (y[i - 1], y[i], y[i + 1]);
    let num = (xb - xa).powi(2) * (yb - yc) - (xb - xc).powi(2) * (yb - ya);
    let den = (xb - xa) * (yb - yc) - (xb - xc) * (yb - ya);
    if den == 0.0 || !den.is_finite() {
        return xb;
    }
    (xb - 0.5 * num / den).clamp(xa, xc)
}

// ---------------------------------------------------------------------------
// Fitting

#[derive(Debug, Clone, Copy)]
pub struct FitSettings {
    pub max_iterations: usize,
    /// Stop once the largest log-parameter step falls below this.
    pub rel_step: f64,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            rel_step: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub model: MbvdModel,
    /// √(mean |Y_model − Y_data|²), S
    pub rms: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn fit_mbvd(sweep: &OnePortSweep, init: &MbvdModel) -> Result<FitResult, CircuitError> {
    fit_mbvd_with(sweep, init, &FitSettings::default())
}

/// Damped least squares on log-parameters. Parameters that are exactly zero
/// in `init` stay zero. A second start seeded from the sweep's own fs/fp is
/// tried whenever the first does not fit to round-off; the better fit wins.
pub fn fit_mbvd_with(
    sweep: &OnePortSweep,
    init: &MbvdModel,
    settings: &FitSettings,
) -> Result<FitResult, CircuitError> {
    if sweep.kind != SweepKind::Y {
        return Err(OnePortError::WrongKind {
            expected: SweepKind::Y,
            found: sweep.kind,
        }
        .into());
    }
    if let Some(i) = sweep.values.iter().position(|y| !(y.re.is_finite() && y.im.is_finite())) {
        return Err(CircuitError::NonFinite(format!("admittance at {} Hz", sweep.freqs[i])));
    }
    sweep.validate()?;
    init.validate()?;
    if !init.has_motional() {
        return Err(CircuitError::InvalidArgument("initial model needs a motional branch".into()));
    }
    let problem = Problem::new(sweep);

    let first = problem.solve(init, settings);
    if first.cost <= problem.exact_cost() {
        return Ok(problem.finish(first));
    }
    let best = match reseed(sweep, init) {
        Some(seed) => {
            let second = problem.solve(&seed, settings);
            if second.cost < first.cost {
                second
            } else {
                first
            }
        }
        None => first,
    };
    Ok(problem.finish(best))
}

const PARAMS: usize = 6;

fn to_array(m: &MbvdModel) -> [f64; PARAMS] {
    [m.c0, m.cm, m.lm, m.rm, m.rs, m.r0]
}

fn from_array(p: &[f64; PARAMS]) -> MbvdModel {
    MbvdModel {
        c0: p[0],
        cm: p[1],
        lm: p[2],
        rm: p[3],
        rs: p[4],
        r0: p[5],
    }
}

struct Problem<'a> {
    sweep: &'a OnePortSweep,
    scale: f64,
}

struct Run {
    model: MbvdModel,
    cost: f64,
    iterations: usize,
    converged: bool,
}

impl<'a> Problem<'a> {
    fn new(sweep: &'a OnePortSweep) -> Self {
        let scale = sweep.values.iter().map(|y| y.norm()).fold(0.0, f64::max);
        Self {
            sweep,
            scale: if scale > 0.0 { scale } else { 1.0 },
        }
    }

    /// Cost at which the fit is exact to round-off.
    fn exact_cost(&self) -> f64 {
        0.5 * (self.sweep.len() as f64) * (1e-14f64).powi(2)
    }

    fn residuals(&self, model: &MbvdModel) -> DVector<f64> {
        let n = self.sweep.len();
        let mut r = DVector::zeros(2 * n);
        for (k, (f, y)) in self.sweep.freqs.iter().zip(&self.sweep.values).enumerate() {
            let d = (model.admittance_at(*f) - y) / self.scale;
            r[2 * k] = d.re;
            r[2 * k + 1] = d.im;
        }
        r
    }

    fn cost(&self, model: &MbvdModel) -> f64 {
        let c = 0.5 * self.residuals(model).norm_squared();
        if c.is_finite() {
            c
        } else {
            f64::INFINITY
        }
    }

    /// Columns are ∂r/∂ln p for the free parameters.
    fn jacobian(&self, model: &MbvdModel, free: &[usize]) -> DMatrix<f64> {
        let n = self.sweep.len();
        let p = to_array(model);
        let mut jac = DMatrix::zeros(2 * n, free.len());
        let j = Complex64::i();
        for (k, f) in self.sweep.freqs.iter().enumerate() {
            let b = model.branches(*f);
            let outer = b.y * b.y / (b.yi * b.yi);
            let ym2 = b.ym * b.ym;
            let yc2 = b.yc * b.yc;
            for (col, &idx) in free.iter().enumerate() {
                let d = match idx {
                    0 => outer * yc2 / (j * b.w * p[0] * p[0]),
                    1 => outer * ym2 / (j * b.w * p[1] * p[1]),
                    2 => -outer * ym2 * j * b.w,
                    3 => -outer * ym2,
                    4 => -b.y * b.y,
                    _ => -outer * yc2,
                } * p[idx]
                    / self.scale;
                jac[(2 * k, col)] = d.re;
                jac[(2 * k + 1, col)] = d.im;
            }
        }
        jac
    }

    fn solve(&self, init: &MbvdModel, settings: &FitSettings) -> Run {
        let start = to_array(init);
        let free: Vec<usize> = (0..PARAMS).filter(|&i| start[i] > 0.0).collect();
        let mut theta: Vec<f64> = free.iter().map(|&i| start[i].ln()).collect();
        let build = |theta: &[f64]| {
            let mut p = start;
            for (t, &i) in theta.iter().zip(&free) {
                p[i] = t.exp();
            }
            from_array(&p)
        };

        let mut model = *init;
        let mut cost = self.cost(&model);
        let mut lambda = 1e-3;
        let mut iterations = 0;
        let mut converged = cost <= self.exact_cost();

        while !converged && iterations < settings.max_iterations {
            iterations += 1;
            let jac = self.jacobian(&model, &free);
            let r = self.residuals(&model);
            let jtj = jac.transpose() * &jac;
            let g = jac.transpose() * r;
            let mut accepted = false;
            while lambda < 1e16 {
                let mut a = jtj.clone();
                for d in 0..free.len() {
                    a[(d, d)] += lambda * jtj[(d, d)].max(1e-30);
                }
                let Some(chol) = a.cholesky() else {
                    lambda *= 4.0;
                    continue;
                };
                let step = chol.solve(&(-&g));
                let trial: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + s).collect();
                let trial_model = build(&trial);
                let trial_cost = self.cost(&trial_model);
                if trial_cost < cost {
                    theta = trial;
                    model = trial_model;
                    cost = trial_cost;
                    lambda = (lambda / 3.0).max(1e-15);
                    accepted = true;
                    if step.amax() < settings.rel_step || cost <= self.exact_cost() {
                        converged = true;
                    }
                    break;
                }
                lambda *= 4.0;
            }
            if !accepted {
                // no descent at any damping: stationary to working precision
                converged = true;
            }
        }
        Run {
            model,
            cost,
            iterations,
            converged,
        }
    }

    fn finish(&self, run: Run) -> FitResult {
        let n = self.sweep.len() as f64;
        FitResult {
            model: run.model,
            rms: (2.0 * run.cost / n).sqrt() * self.scale,
            iterations: run.iterations,
            converged: run.converged,
        }
    }
}

/// Starting point rebuilt from the sweep: fs/fp of the resonance nearest the
/// initial model, C0 from the response far from resonance, rm from the peak
/// conductance. Loss terms that are zero in `init` stay zero.
fn reseed(sweep: &OnePortSweep, init: &MbvdModel) -> Option<MbvdModel> {
    let target = init.series_resonance()?;
    let pairs = find_resonances(sweep).ok()?;
    let pair = pairs
        .iter()
        .min_by(|a, b| (a.fs / target).ln().abs().total_cmp(&(b.fs / target).ln().abs()))?;
    let ratio2 = (pair.fp / pair.fs).powi(2) - 1.0;
    if !(ratio2 > 0.0) {
        return None;
    }
    let n = sweep.len();
    let far = [0, n - 1]
        .into_iter()
        .max_by(|&a, &b| {
            let d = |i: usize| (sweep.freqs[i] / pair.fs).ln().abs();
            d(a).total_cmp(&d(b))
        })?;
    let (f, y) = (sweep.freqs[far], sweep.values[far]);
    let detune = 1.0 - (f / pair.fs).powi(2);
    let mut c0 = y.im / (2.0 * PI * f) / (1.0 + ratio2 / detune);
    if !(c0 > 0.0 && c0.is_finite()) {
        c0 = init.c0;
    }
    let cm = ratio2 * c0;
    let ws = 2.0 * PI * pair.fs;
    let lm = 1.0 / (ws * ws * cm);
    let rm = if init.rm > 0.0 {
        let gmax = sweep.values.iter().map(|y| y.re).fold(f64::NEG_INFINITY, f64::max);
        if gmax > 0.0 {
            (1.0 / gmax - init.rs).max(1e-3 * ws * lm)
        } else {
            init.rm
        }
    } else {
        0.0
    };
    let seed = MbvdModel {
        c0,
        cm,
        lm,
        rm,
        rs: init.rs,
        r0: init.r0,
    };
    seed.validate().ok().map(|_| seed)
}
