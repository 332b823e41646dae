//! Recursive stiffness-matrix assembly of a layered stack and the top-surface
//! boundary indicator.
//!
//! Every region relates generalized tractions b to generalized displacements
//! a through a stiffness K (b = K a, both in units where the physical traction
//! is ik·b). The substrate contributes its decaying half-space stiffness, each
//! layer a 2m×2m block mapping (bottom, top) displacements to tractions, and
//! the recursion condenses the bottom face away. For subsonic velocities
//! −iK is Hermitian, so its determinant is real.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use super::partial::{sh_decoupled, PartialWaves, Projection};
use super::{DepthProfile, DispersionError, LayerStack, Polarization, SurfaceBc};
use crate::materials::{christoffel, MaterialTensorSet};

const I: Complex64 = Complex64::new(0.0, 1.0);
const PROFILE_SAMPLES: usize = 241;

/// Stack prepared for repeated evaluation at one polarization.
#[derive(Debug, Clone)]
pub(crate) struct Prepared {
    /// Generalized field indices taking part (subset of 0..4, ends with 3).
    pub fields: Vec<usize>,
    substrate: Projection,
    layers: Vec<(Projection, f64)>,
    bc: SurfaceBc,
    /// Velocity at which the first substrate partial wave stops decaying.
    pub limit: f64,
    /// Slowest active bulk velocity over every material of the stack.
    pub slowest_material: f64,
    total_thickness: f64,
}

impl Prepared {
    pub fn new(stack: &LayerStack, polarization: Polarization) -> Result<Self, DispersionError> {
        stack.validate()?;
        let frame = stack.propagation_frame();
        let d = [1.0, 0.0, 0.0];
        let decoupled = sh_decoupled(&frame.substrate, d)
            && frame.layers.iter().all(|l| sh_decoupled(&l.material, d));
        let fields = match polarization {
            Polarization::Sagittal if decoupled => vec![0, 2, 3],
            _ => vec![0, 1, 2, 3],
        };
        let sagittal_only = fields.len() == 3;
        let limit = active_bulk_minimum(&frame.substrate, sagittal_only);
        let slowest_material = frame
            .layers
            .iter()
            .map(|l| active_bulk_minimum(&l.material, sagittal_only))
            .fold(limit, f64::min);
        Ok(Self {
            substrate: Projection::new(&frame.substrate, d, &fields),
            layers: frame
                .layers
                .iter()
                .map(|l| (Projection::new(&l.material, d, &fields), l.thickness))
                .collect(),
            fields,
            bc: frame.surface_bc,
            limit,
            slowest_material,
            total_thickness: frame.total_thickness(),
        })
    }

    fn dim(&self) -> usize {
        self.fields.len()
    }

    fn electric(&self) -> usize {
        self.dim() - 1
    }

    /// Assembles the stack at trial velocity `v` (m/s) and wavelength (m).
    pub fn evaluate(&self, v: f64, wavelength: f64) -> Result<Evaluation, DispersionError> {
        if !(v > 0.0 && v < self.limit) {
            return Err(DispersionError::OutsideWindow {
                velocity: v,
                limit: self.limit,
            });
        }
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(DispersionError::InvalidArgument(format!("wavelength {wavelength}")));
        }
        let m = self.dim();
        let k = 2.0 * std::f64::consts::PI / wavelength;
        let degenerate = || DispersionError::Degenerate { velocity: v };

        let sub = PartialWaves::new(&self.substrate, v)?;
        let scale = 1e-9 * sub.p.iter().map(|p| p.norm()).fold(1.0, f64::max);
        if sub.p[m - 1].im >= -scale || sub.p[m].im <= scale {
            return Err(DispersionError::OutsideWindow {
                velocity: v,
                limit: self.limit,
            });
        }
        let a_d = sub.w.view((0, 0), (m, m)).into_owned();
        let b_d = sub.w.view((m, 0), (m, m)).into_owned();
        let a_d_inv = a_d.try_inverse().ok_or_else(degenerate)?;
        let k_sub = &b_d * &a_d_inv;

        let mut k_below = k_sub.clone();
        let mut pole_factor = 1.0;
        let mut layers = Vec::with_capacity(self.layers.len());
        for (proj, thickness) in &self.layers {
            let waves = PartialWaves::new(proj, v)?;
            let kd = k * thickness;
            let (m_u, m_t) = layer_blocks(&waves, kd);
            let m_u_inv = m_u.try_inverse().ok_or_else(degenerate)?;
            let stiff = m_t * &m_u_inv;
            let k11 = stiff.view((0, 0), (m, m));
            let k12 = stiff.view((0, m), (m, m));
            let k21 = stiff.view((m, 0), (m, m));
            let k22 = stiff.view((m, m), (m, m));
            let interface = &k_below - k11;
            // Zeros of this (real) determinant are poles of the condensed
            // stiffness; the product with the indicator stays finite there.
            let d = interface.map(|z| -I * z).determinant().re;
            pole_factor *= d / interface.row_iter().map(|r| r.norm()).product::<f64>().max(f64::MIN_POSITIVE);
            let lu = interface.lu();
            let g = lu.solve(&k12.into_owned()).ok_or_else(degenerate)?;
            k_below = k21 * &g + k22;
            layers.push(LayerEval {
                waves,
                thickness: *thickness,
                m_u_inv,
                to_bottom: g,
            });
        }

        Ok(Evaluation {
            top: k_below.map(|z| -I * z),
            pole_factor,
            substrate_impedance: k_sub.map(|z| -I * z),
            substrate: sub,
            a_d_inv,
            layers,
            k,
            electric: self.electric(),
            fields: self.fields.clone(),
            total_thickness: self.total_thickness,
            bc: self.bc,
        })
    }
}

/// Slowest bulk velocity along x among waves that couple to the active fields.
fn active_bulk_minimum(mat: &MaterialTensorSet, sagittal_only: bool) -> f64 {
    let eig = SymmetricEigen::new(christoffel(mat, [1.0, 0.0, 0.0]));
    eig.eigenvalues
        .iter()
        .zip(eig.eigenvectors.column_iter())
        .filter(|(_, vec)| !(sagittal_only && vec[1].abs() > 0.5))
        .map(|(lam, _)| lam.max(0.0).sqrt())
        .fold(f64::INFINITY, f64::min)
}

/// M_u and M_t of one layer: the bottom/top generalized displacements and
/// tractions as linear maps of the partial-wave amplitudes [c_up; c_down].
/// Upward-decaying waves are referenced at the bottom face and
/// downward-decaying ones at the top face, so every exponential is ≤ 1.
fn layer_blocks(waves: &PartialWaves, kd: f64) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
    let m = waves.dim();
    let mut m_u = DMatrix::zeros(2 * m, 2 * m);
    let mut m_t = DMatrix::zeros(2 * m, 2 * m);
    for col in 0..2 * m {
        let p = waves.p[col];
        let up = col >= m;
        // Amplitude slot: up waves first.
        let slot = if up { col - m } else { col + m };
        let (bottom, top) = if up {
            (Complex64::new(1.0, 0.0), (I * p * kd).exp())
        } else {
            ((-I * p * kd).exp(), Complex64::new(1.0, 0.0))
        };
        for row in 0..m {
            let a = waves.w[(row, col)];
            let b = waves.w[(row + m, col)];
            m_u[(row, slot)] = a * bottom;
            m_u[(row + m, slot)] = a * top;
            m_t[(row, slot)] = b * bottom;
            m_t[(row + m, slot)] = b * top;
        }
    }
    (m_u, m_t)
}

#[derive(Debug, Clone)]
struct LayerEval {
    waves: PartialWaves,
    thickness: f64,
    m_u_inv: DMatrix<Complex64>,
    /// Maps top-face displacement to bottom-face displacement.
    to_bottom: DMatrix<Complex64>,
}

/// Assembled stack at one (v, λ).
#[derive(Debug, Clone)]
pub(crate) struct Evaluation {
    /// −i·K of the whole stack at its top face.
    top: DMatrix<Complex64>,
    /// Product over layers of the normalized interface determinants.
    pole_factor: f64,
    substrate_impedance: DMatrix<Complex64>,
    substrate: PartialWaves,
    a_d_inv: DMatrix<Complex64>,
    layers: Vec<LayerEval>,
    k: f64,
    electric: usize,
    fields: Vec<usize>,
    total_thickness: f64,
    bc: SurfaceBc,
}

impl Evaluation {
    /// Hermitian boundary matrix for the surface condition and the indices it acts on.
    fn boundary_matrix(&self, impedance: &DMatrix<Complex64>) -> (DMatrix<Complex64>, Vec<usize>) {
        let m = impedance.nrows();
        let mut f = impedance.clone();
        let keep: Vec<usize> = match self.bc {
            SurfaceBc::Free => {
                // Vacuum above: D3 = ε0·k·φ.
                f[(self.electric, self.electric)] += Complex64::new(1.0, 0.0);
                (0..m).collect()
            }
            SurfaceBc::Metallized => (0..m).filter(|&i| i != self.electric).collect(),
        };
        let f = f.select_rows(&keep).select_columns(&keep);
        let herm = (&f + f.adjoint()).map(|z| z * 0.5);
        (herm, keep)
    }

    /// Relative deviation of the boundary matrix from Hermitian form.
    #[cfg(test)]
    pub fn hermiticity_error(&self) -> f64 {
        let skew = &self.top - self.top.adjoint();
        skew.norm() / self.top.norm().max(f64::MIN_POSITIVE)
    }

    /// Real boundary determinant normalized by the bare substrate's row norms.
    pub fn indicator(&self) -> f64 {
        let (h, _) = self.boundary_matrix(&self.top);
        let (h_sub, _) = self.boundary_matrix(&self.substrate_impedance);
        let norm: f64 = h_sub.row_iter().map(|r| r.norm()).product();
        h.determinant().re / norm
    }

    /// Indicator times the layer interface determinants: continuous across
    /// the poles the condensation introduces, same roots otherwise.
    pub fn regularized(&self) -> f64 {
        self.indicator() * self.pole_factor
    }

    /// Field samples against depth for the null vector of the boundary matrix.
    pub fn profile(&self, wavelength: f64) -> DepthProfile {
        let m = self.fields.len();
        let (h, keep) = self.boundary_matrix(&self.top);
        let eig = SymmetricEigen::new(h);
        let idx = eig.eigenvalues.iamin();
        let null = eig.eigenvectors.column(idx);
        let mut u_top = DVector::<Complex64>::zeros(m);
        for (slot, &i) in keep.iter().enumerate() {
            u_top[i] = null[slot];
        }

        // Displacements at each interface, top layer first.
        let mut interfaces = Vec::with_capacity(self.layers.len());
        let mut u = u_top;
        for layer in self.layers.iter().rev() {
            let bottom = &layer.to_bottom * &u;
            interfaces.push((bottom.clone(), u.clone()));
            u = bottom;
        }
        interfaces.reverse();
        let c_sub = &self.a_d_inv * &u;
        let layer_amps: Vec<DVector<Complex64>> = self
            .layers
            .iter()
            .zip(&interfaces)
            .map(|(layer, (bottom, top))| {
                let mut stacked = DVector::zeros(2 * m);
                stacked.rows_mut(0, m).copy_from(bottom);
                stacked.rows_mut(m, m).copy_from(top);
                &layer.m_u_inv * stacked
            })
            .collect();

        let span = self.total_thickness + 2.0 * wavelength;
        let mut profile = DepthProfile::default();
        let mut raw = Vec::with_capacity(PROFILE_SAMPLES);
        for s in 0..PROFILE_SAMPLES {
            let depth = span * s as f64 / (PROFILE_SAMPLES - 1) as f64;
            let z = self.total_thickness - depth;
            let field = if z >= 0.0 {
                let mut base = 0.0;
                let mut found = None;
                for (j, layer) in self.layers.iter().enumerate() {
                    if z <= base + layer.thickness || j + 1 == self.layers.len() {
                        found = Some((j, (z - base).clamp(0.0, layer.thickness)));
                        break;
                    }
                    base += layer.thickness;
                }
                match found {
                    Some((j, local)) => self.layer_field(j, &layer_amps[j], local),
                    None => self.substrate_field(&c_sub, 0.0),
                }
            } else {
                self.substrate_field(&c_sub, z)
            };
            raw.push((depth, field));
        }

        let peak = raw
            .iter()
            .map(|(_, f)| self.displacement(f).iter().fold(0.0f64, |a, x| a.max(*x)))
            .fold(f64::MIN_POSITIVE, f64::max);
        let mut energy = Vec::with_capacity(raw.len());
        for (depth, field) in &raw {
            let disp = self.displacement(field).map(|x| x / peak);
            profile.depth.push(*depth);
            profile.displacement.push(disp);
            profile.potential.push(field[self.electric].norm() / peak);
            energy.push(disp.iter().map(|x| x * x).sum::<f64>());
        }
        let (mut total, mut below, mut moment) = (0.0, 0.0, 0.0);
        for s in 1..raw.len() {
            let dz = raw[s].0 - raw[s - 1].0;
            let e = 0.5 * (energy[s] + energy[s - 1]) * dz;
            let mid = 0.5 * (raw[s].0 + raw[s - 1].0);
            total += e;
            moment += e * mid;
            if mid > self.total_thickness {
                below += e;
            }
        }
        profile.substrate_fraction = below / total.max(f64::MIN_POSITIVE);
        profile.centroid_wavelengths = moment / total.max(f64::MIN_POSITIVE) / wavelength;
        profile
    }

    fn displacement(&self, field: &DVector<Complex64>) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (slot, &f) in self.fields.iter().enumerate() {
            if f < 3 {
                out[f] = field[slot].norm();
            }
        }
        out
    }

    fn layer_field(&self, j: usize, amps: &DVector<Complex64>, local: f64) -> DVector<Complex64> {
        let layer = &self.layers[j];
        let m = self.fields.len();
        let mut field = DVector::zeros(m);
        for col in 0..2 * m {
            let p = layer.waves.p[col];
            let up = col >= m;
            let slot = if up { col - m } else { col + m };
            let phase = if up {
                (I * p * self.k * local).exp()
            } else {
                (I * p * self.k * (local - layer.thickness)).exp()
            };
            let c = amps[slot] * phase;
            for row in 0..m {
                field[row] += layer.waves.w[(row, col)] * c;
            }
        }
        field
    }

    fn substrate_field(&self, c: &DVector<Complex64>, z: f64) -> DVector<Complex64> {
        let m = self.fields.len();
        let mut field = DVector::zeros(m);
        for col in 0..m {
            let phase = (I * self.substrate.p[col] * self.k * z).exp();
            for row in 0..m {
                field[row] += self.substrate.w[(row, col)] * c[col] * phase;
            }
        }
        field
    }
}

/// Boundary indicator with an explicit polarization choice.
pub fn boundary_indicator(
    stack: &LayerStack,
    v: f64,
    wavelength: f64,
    polarization: Polarization,
) -> Result<f64, DispersionError> {
    Prepared::new(stack, polarization)?
        .evaluate(v, wavelength)
        .map(|e| e.indicator())
}

/// Real, sign-changing boundary determinant of the stack at trial phase
/// velocity `v` (m/s); zero at guided modes. Sagittal polarization.
pub fn boundary_determinant(stack: &LayerStack, v: f64, wavelength: f64) -> Result<f64, DispersionError> {
    boundary_indicator(stack, v, wavelength, Polarization::Sagittal)
}

/// Depth profile of the field at a (refined) root velocity.
pub fn mode_profile(
    stack: &LayerStack,
    v: f64,
    wavelength: f64,
    polarization: Polarization,
) -> Result<DepthProfile, DispersionError> {
    Prepared::new(stack, polarization)?
        .evaluate(v, wavelength)
        .map(|e| e.profile(wavelength))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::{MaterialDb, MaterialTensorSet};

    fn paper_stack() -> LayerStack {
        let db = MaterialDb::builtin();
        LayerStack::new(db.get("diamond").unwrap().clone()).with_layer(db.get("AlScN").unwrap().clone(), 200e-9)
    }

    #[test]
    fn boundary_matrix_is_hermitian() {
        let db = MaterialDb::builtin();
        let stack = paper_stack().with_layer(db.get("Al").unwrap().clone(), 50e-9);
        for pol in [Polarization::Sagittal, Polarization::Coupled] {
            let prep = Prepared::new(&stack, pol).unwrap();
            for v in [3000.0, 6000.0, 9000.0, 11000.0] {
                let e = prep.evaluate(v, 200e-9 / 0.3).unwrap();
                assert!(e.hermiticity_error() < 1e-8, "v = {v}: {}", e.hermiticity_error());
            }
        }
    }

    #[test]
    fn bare_substrate_no_mode_at_half_rayleigh() {
        let mat = MaterialTensorSet::isotropic("iso", 1000.0, 3.0e11, 1.0e11, 1.0);
        let vt = 1e4;
        let f = boundary_determinant(&LayerStack::new(mat), 0.5 * 0.9194 * vt, 1e-6).unwrap();
        assert!(f.abs() > 1e-3, "{f}");
    }

    #[test]
    fn outside_window_rejected() {
        let stack = paper_stack();
        assert!(matches!(
            boundary_determinant(&stack, 2.0e4, 1e-6),
            Err(DispersionError::OutsideWindow { .. })
        ));
        assert!(boundary_determinant(&stack, -1.0, 1e-6).is_err());
    }

    #[test]
    fn window_limit_is_diamond_shear() {
        let prep = Prepared::new(&paper_stack(), Polarization::Sagittal).unwrap();
        let vt = (534.6e9f64 / 3515.0).sqrt();
        assert!((prep.limit / vt - 1.0).abs() < 1e-12);
        assert_eq!(prep.fields, vec![0, 2, 3]);
    }
}
