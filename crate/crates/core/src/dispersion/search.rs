//! Root search over the subsonic velocity window and h/λ sweeps.

use rayon::prelude::*;

use super::stack::{Evaluation, Prepared};
use super::{
    DispersionBranch, DispersionError, DispersionPoint, GuidedMode, LayerStack, ModeLabel,
    Polarization, SurfaceBc,
};

/// Relative velocity step used to hop over degenerate evaluation points.
const DEGENERACY_STEP: f64 = 1e-6;
/// A bisected sign change is a pole (or a zero of the interface factor), not
/// a root, unless the raw indicator collapsed by at least this factor
/// relative to the bracket ends.
const ROOT_COLLAPSE: f64 = 1e-3;

#[derive(Debug, Clone, Copy)]
pub struct SearchSettings {
    /// Uniform scan points across the subsonic window.
    pub scan_points: usize,
    /// Relative bracket width at which bisection stops.
    pub rel_tol: f64,
    pub max_bisections: usize,
    pub polarization: Polarization,
    /// Lower edge of the scan as a fraction of the slowest bulk velocity
    /// over all materials in the stack.
    pub lower_fraction: f64,
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self {
            scan_points: 2000,
            rel_tol: 1e-9,
            max_bisections: 200,
            polarization: Polarization::Sagittal,
            lower_fraction: 0.3,
        }
    }
}

/// (lower, upper) scan bounds in m/s; the upper bound is the substrate's
/// slowest bulk velocity for the active polarization.
pub fn subsonic_window(stack: &LayerStack, settings: &SearchSettings) -> Result<(f64, f64), DispersionError> {
    let prep = Prepared::new(stack, settings.polarization)?;
    Ok((settings.lower_fraction * prep.slowest_material, prep.limit))
}

fn evaluate_stepping(prep: &Prepared, v: f64, wavelength: f64) -> Result<Evaluation, DispersionError> {
    match prep.evaluate(v, wavelength) {
        Err(DispersionError::Degenerate { .. }) => prep
            .evaluate(v * (1.0 + DEGENERACY_STEP), wavelength)
            .or_else(|_| prep.evaluate(v * (1.0 - DEGENERACY_STEP), wavelength)),
        other => other,
    }
}

/// (regularized, raw) indicator. A root next to a layer pole shows no sign
/// change in the raw indicator; a root next to a removable zero of the
/// interface factor shows none in the regularized one. Both are scanned.
fn indicator_at(prep: &Prepared, v: f64, wavelength: f64) -> Option<[f64; 2]> {
    evaluate_stepping(prep, v, wavelength)
        .ok()
        .map(|e| [e.regularized(), e.indicator()])
        .filter(|pair| pair.iter().all(|x| x.is_finite()))
}

const RAW: usize = 1;

/// Guided modes sorted by ascending phase velocity.
pub fn find_guided_modes(
    stack: &LayerStack,
    wavelength: f64,
    settings: &SearchSettings,
) -> Result<Vec<GuidedMode>, DispersionError> {
    if !(wavelength > 0.0 && wavelength.is_finite()) {
        return Err(DispersionError::InvalidArgument(format!("wavelength {wavelength}")));
    }
    if settings.scan_points < 2 {
        return Err(DispersionError::InvalidArgument("scan needs at least 2 points".into()));
    }
    let prep = Prepared::new(stack, settings.polarization)?;
    let lo = settings.lower_fraction * prep.slowest_material;
    let hi = prep.limit * (1.0 - 1e-7);
    let n = settings.scan_points;
    let grid: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let values: Vec<Option<[f64; 2]>> = grid.iter().map(|&v| indicator_at(&prep, v, wavelength)).collect();

    let mut roots: Vec<(f64, f64)> = Vec::new();
    let mut prev: Option<(f64, [f64; 2])> = None;
    for (&v, value) in grid.iter().zip(&values) {
        let Some(fv) = *value else {
            prev = None;
            continue;
        };
        if fv[RAW] == 0.0 {
            roots.push((v, 0.0));
            prev = None;
            continue;
        }
        if let Some((va, fa)) = prev {
            let scale = fa[RAW].abs().max(fv[RAW].abs());
            for which in 0..2 {
                if fa[which].signum() != fv[which].signum() {
                    if let Some(root) = bisect(&prep, wavelength, which, (va, fa[which]), v, scale, settings)? {
                        roots.push(root);
                    }
                }
            }
        }
        prev = Some((v, fv));
    }
    roots.sort_by(|a, b| a.0.total_cmp(&b.0));
    roots.dedup_by(|b, a| (b.0 - a.0).abs() <= 1e3 * settings.rel_tol * a.0);

    let mut modes = Vec::with_capacity(roots.len());
    for (index, (v, residual)) in roots.into_iter().enumerate() {
        let depth_profile = evaluate_stepping(&prep, v, wavelength)?.profile(wavelength);
        modes.push(GuidedMode {
            phase_velocity: v,
            mode_index: index,
            label: ModeLabel::from_index(index),
            depth_profile,
            residual,
        });
    }
    Ok(modes)
}

/// Bisects a sign change of indicator component `which`; `None` when the raw
/// indicator does not collapse there (a pole or a removable factor zero).
fn bisect(
    prep: &Prepared,
    wavelength: f64,
    which: usize,
    (mut a, mut fa): (f64, f64),
    mut b: f64,
    scale: f64,
    settings: &SearchSettings,
) -> Result<Option<(f64, f64)>, DispersionError> {
    let (lo0, hi0) = (a, b);
    let mut fm = fa;
    let mut mid = 0.5 * (a + b);
    for _ in 0..settings.max_bisections {
        mid = 0.5 * (a + b);
        if (b - a) <= settings.rel_tol * mid.abs() {
            break;
        }
        fm = indicator_at(prep, mid, wavelength).ok_or(DispersionError::NonConvergence { lo: lo0, hi: hi0 })?[which];
        if fm == 0.0 {
            break;
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    if (b - a) > settings.rel_tol * mid.abs() && fm != 0.0 {
        return Err(DispersionError::NonConvergence { lo: a, hi: b });
    }
    let residual = indicator_at(prep, mid, wavelength).map_or(f64::INFINITY, |f| f[RAW].abs());
    Ok((residual <= ROOT_COLLAPSE * scale).then_some((mid, residual)))
}

/// Δv/v coupling estimate 2(v_free − v_metal)/v_free.
pub fn coupling_dvv(v_free: f64, v_metal: f64) -> Result<f64, DispersionError> {
    if !(v_free > 0.0 && v_metal > 0.0) {
        return Err(DispersionError::InvalidArgument(format!(
            "velocities must be positive (v_free = {v_free}, v_metal = {v_metal})"
        )));
    }
    if v_metal > v_free {
        return Err(DispersionError::MisPaired { v_free, v_metal });
    }
    Ok(2.0 * (v_free - v_metal) / v_free)
}

#[derive(Debug)]
pub struct BranchPointError {
    pub h_over_lambda: f64,
    pub error: DispersionError,
}

/// Result of an h/λ sweep: branches plus any per-point failures.
#[derive(Debug, Default)]
pub struct BranchSweep {
    pub branches: Vec<DispersionBranch>,
    pub errors: Vec<BranchPointError>,
}

/// Sweeps h/λ at fixed piezoelectric film thickness `h` (m), pairing free and
/// metallized modes by ordinal. Grid points are solved concurrently and
/// reported in grid order.
pub fn solve_branches(
    stack: &LayerStack,
    h: f64,
    grid: &[f64],
    settings: &SearchSettings,
) -> Result<BranchSweep, DispersionError> {
    if grid.is_empty() {
        return Err(DispersionError::InvalidArgument("empty h/λ grid".into()));
    }
    if grid.iter().any(|&r| !(r > 0.0 && r <= 2.0)) {
        return Err(DispersionError::InvalidArgument("h/λ values must lie in (0, 2]".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(DispersionError::InvalidArgument("h/λ grid must be strictly increasing".into()));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(DispersionError::InvalidArgument(format!("film thickness {h}")));
    }
    let film = stack.piezo_thickness();
    if film > 0.0 && (film - h).abs() > 1e-6 * h {
        return Err(DispersionError::InvalidArgument(format!(
            "h = {h} m does not match the stack's piezoelectric thickness {film} m"
        )));
    }
    stack.validate()?;

    let free = stack.clone().with_bc(SurfaceBc::Free);
    let metal = stack.clone().with_bc(SurfaceBc::Metallized);
    let per_point: Vec<Result<Vec<DispersionPoint>, DispersionError>> = grid
        .par_iter()
        .map(|&r| {
            let wavelength = h / r;
            let modes_free = find_guided_modes(&free, wavelength, settings)?;
            let modes_metal = find_guided_modes(&metal, wavelength, settings)?;
            let mut points = Vec::new();
            for (mf, mm) in modes_free.iter().zip(&modes_metal) {
                let (v_free, mut v_metal) = (mf.phase_velocity, mm.phase_velocity);
                // Purely elastic stacks give equal velocities up to the root tolerance.
                if v_metal > v_free && v_metal - v_free <= 10.0 * settings.rel_tol * v_free {
                    v_metal = v_free;
                }
                points.push(DispersionPoint {
                    h_over_lambda: r,
                    wavelength,
                    v_free,
                    v_metal,
                    k2_dvv: coupling_dvv(v_free, v_metal)?,
                    label: mf.label,
                });
            }
            Ok(points)
        })
        .collect();

    let mut sweep = BranchSweep::default();
    let mut by_index: Vec<Vec<DispersionPoint>> = Vec::new();
    for (&r, result) in grid.iter().zip(per_point) {
        match result {
            Ok(points) => {
                for (index, point) in points.into_iter().enumerate() {
                    if by_index.len() <= index {
                        by_index.resize_with(index + 1, Vec::new);
                    }
                    by_index[index].push(point);
                }
            }
            Err(error) => sweep.errors.push(BranchPointError {
                h_over_lambda: r,
                error,
            }),
        }
    }
    sweep.branches = by_index
        .into_iter()
        .enumerate()
        .filter(|(_, points)| !points.is_empty())
        .map(|(index, points)| DispersionBranch {
            label: ModeLabel::from_index(index),
            mode_index: index,
            points,
        })
        .collect();
    Ok(sweep)
}
