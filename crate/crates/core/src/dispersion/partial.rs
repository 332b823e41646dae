//! Partial waves of a homogeneous piezoelectric medium at fixed in-plane slowness.
//!
//! Fields vary as exp(ik(x·d + p·z − vt)). The generalized displacement
//! (u1, u2, u3, φ) and traction (σ31, σ32, σ33, D3) satisfy a first-order
//! system whose 2m eigenvalues p and eigenvectors [a; b] are the partial
//! waves. All quantities are nondimensional: stiffness is divided by
//! `C_REF`, permittivity by `EPS_REF` and piezoelectric constants by
//! √(C_REF·EPS_REF).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::materials::{MaterialKind, MaterialTensorSet, EPS0};

use super::DispersionError;

pub(crate) const C_REF: f64 = 1e11;
pub(crate) const EPS_REF: f64 = EPS0;

const CLUSTER_TOL: f64 = 1e-7;
const CONDITION_FLOOR: f64 = 1e-9;

/// Projected extended stiffness of one material for propagation along `d`
/// with surface normal z, restricted to a subset of the generalized fields.
#[derive(Debug, Clone)]
pub(crate) struct Projection {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub t: DMatrix<f64>,
    /// ρ / C_REF, multiplies v².
    pub rho: f64,
    /// Position of the electric potential within the field subset, if present.
    pub electric: Option<usize>,
}

/// C_iJKl of the extended tensor (J, K = 3 is the electric index), nondimensional.
fn extended(mat: &MaterialTensorSet, i: usize, jj: usize, kk: usize, l: usize) -> f64 {
    let piezo_scale = (C_REF * EPS_REF).sqrt();
    match (jj < 3, kk < 3) {
        (true, true) => mat.c4(i, jj, kk, l) / C_REF,
        (true, false) => mat.e3(l, i, jj) / piezo_scale,
        (false, true) => mat.e3(i, kk, l) / piezo_scale,
        (false, false) => -mat.permittivity[i][l] / EPS_REF,
    }
}

/// Full 4×4 projections (Q, R, T) for in-plane direction `d`.
pub(crate) fn full_projection(mat: &MaterialTensorSet, d: [f64; 3]) -> [[[f64; 4]; 4]; 3] {
    let n = [0.0, 0.0, 1.0];
    let mut out = [[[0.0; 4]; 4]; 3];
    for jj in 0..4 {
        for kk in 0..4 {
            let (mut q, mut r, mut t) = (0.0, 0.0, 0.0);
            for i in 0..3 {
                for l in 0..3 {
                    let c = extended(mat, i, jj, kk, l);
                    q += c * d[i] * d[l];
                    r += c * d[i] * n[l];
                    t += c * n[i] * n[l];
                }
            }
            out[0][jj][kk] = q;
            out[1][jj][kk] = r;
            out[2][jj][kk] = t;
        }
    }
    out
}

/// True when the shear-horizontal displacement (index 1) decouples from the
/// sagittal fields for this material and direction.
pub(crate) fn sh_decoupled(mat: &MaterialTensorSet, d: [f64; 3]) -> bool {
    let m = full_projection(mat, d);
    let scale = m
        .iter()
        .flatten()
        .flatten()
        .fold(0.0f64, |acc, x| acc.max(x.abs()));
    m.iter().all(|mat| {
        [0usize, 2, 3]
            .iter()
            .all(|&k| mat[1][k].abs() <= 1e-12 * scale && mat[k][1].abs() <= 1e-12 * scale)
    })
}

impl Projection {
    pub fn new(mat: &MaterialTensorSet, d: [f64; 3], fields: &[usize]) -> Self {
        let full = full_projection(mat, d);
        let m = fields.len();
        let pick = |k: usize| DMatrix::from_fn(m, m, |a, b| full[k][fields[a]][fields[b]]);
        let electric = fields.iter().position(|&f| f == 3);
        debug_assert!(mat.kind == MaterialKind::Elastic || electric.is_some());
        Self {
            q: pick(0),
            r: pick(1),
            t: pick(2),
            rho: mat.density / C_REF,
            electric,
        }
    }

    fn dim(&self) -> usize {
        self.q.nrows()
    }

    /// Q − ρv²I′ (mechanical diagonal only).
    fn q_dynamic(&self, v: f64) -> DMatrix<f64> {
        let mut q = self.q.clone();
        for k in 0..self.dim() {
            if Some(k) != self.electric {
                q[(k, k)] -= self.rho * v * v;
            }
        }
        q
    }
}

/// Eigen-solution of the layer system at one trial velocity.
#[derive(Debug, Clone)]
pub(crate) struct PartialWaves {
    /// Eigenvalues sorted by (Im p, Re p); the first m decay towards −z.
    pub p: Vec<Complex64>,
    /// Columns are the eigenvectors [a; b] in the order of `p`.
    pub w: DMatrix<Complex64>,
}

impl PartialWaves {
    pub fn new(proj: &Projection, v: f64) -> Result<Self, DispersionError> {
        let m = proj.dim();
        let degenerate = || DispersionError::Degenerate { velocity: v };
        let t_inv = proj.t.clone().try_inverse().ok_or_else(degenerate)?;
        let q_dyn = proj.q_dynamic(v);
        let rt = proj.r.transpose();

        let mut n = DMatrix::<f64>::zeros(2 * m, 2 * m);
        n.view_mut((0, 0), (m, m)).copy_from(&(-&t_inv * &rt));
        n.view_mut((0, m), (m, m)).copy_from(&t_inv);
        n.view_mut((m, 0), (m, m))
            .copy_from(&(&proj.r * &t_inv * &rt - &q_dyn));
        n.view_mut((m, m), (m, m)).copy_from(&(-&proj.r * &t_inv));

        let schur = nalgebra::linalg::Schur::try_new(n, f64::EPSILON, 10_000).ok_or_else(degenerate)?;
        let mut p: Vec<Complex64> = schur.complex_eigenvalues().iter().copied().collect();
        p.sort_by(|a, b| a.im.total_cmp(&b.im).then(a.re.total_cmp(&b.re)));

        let qc = q_dyn.map(|x| Complex64::new(x, 0.0));
        let rc = proj.r.map(|x| Complex64::new(x, 0.0));
        let tc = proj.t.map(|x| Complex64::new(x, 0.0));
        let rsum = &rc + rc.transpose();
        let rtc = rc.transpose();

        let mut w = DMatrix::<Complex64>::zeros(2 * m, 2 * m);
        let mut done = vec![false; 2 * m];
        for i in 0..2 * m {
            if done[i] {
                continue;
            }
            let tol = CLUSTER_TOL * p[i].norm().max(1.0);
            let members: Vec<usize> = (i..2 * m)
                .filter(|&j| !done[j] && (p[j] - p[i]).norm() <= tol)
                .collect();
            let centre = members.iter().map(|&j| p[j]).sum::<Complex64>() / members.len() as f64;
            let gamma = &qc + &rsum * centre + &tc * (centre * centre);
            let vectors = null_vectors(gamma, members.len());
            for (&j, a) in members.iter().zip(vectors) {
                let b = (&rtc + &tc * p[j]) * &a;
                w.view_mut((0, j), (m, 1)).copy_from(&a);
                w.view_mut((m, j), (m, 1)).copy_from(&b);
                done[j] = true;
            }
        }

        let mut wn = w.clone();
        for mut col in wn.column_iter_mut() {
            let norm = col.norm();
            col /= Complex64::new(norm, 0.0);
        }
        let sv = wn.singular_values();
        let (smax, smin) = sv.iter().fold((0.0f64, f64::INFINITY), |(hi, lo), &s| (hi.max(s), lo.min(s)));
        if !(smin > CONDITION_FLOOR * smax) {
            return Err(degenerate());
        }
        Ok(Self { p, w })
    }

    pub fn dim(&self) -> usize {
        self.p.len() / 2
    }
}

/// `count` right singular vectors of `a` belonging to its smallest singular values.
fn null_vectors(a: DMatrix<Complex64>, count: usize) -> Vec<DVector<Complex64>> {
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested V^H");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&x, &y| svd.singular_values[x].total_cmp(&svd.singular_values[y]));
    order
        .into_iter()
        .take(count)
        .map(|k| v_t.row(k).transpose().map(|z| z.conj()))
        .collect()
}
