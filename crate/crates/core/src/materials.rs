//! Material constants, tensor rotation and bulk (Christoffel) velocities.
//!
//! Tensors use Voigt notation: stiffness is 6×6 (Pa), piezoelectric stress
//! constants are 3×6 (C/m²) and permittivity is 3×3 (F/m). Orientation is a
//! Z-X-Z Euler triple in radians.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Matrix6, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Vacuum permittivity, F/m.
pub const EPS0: f64 = 8.854_187_8128e-12;

pub type Stiffness = [[f64; 6]; 6];
pub type Piezo = [[f64; 6]; 3];
pub type Permittivity = [[f64; 3]; 3];

#[derive(Debug, Error)]
pub enum MaterialError {
    #[error("cannot read material config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed material config: {0}")]
    Parse(String),
    #[error("material '{name}': {reason}")]
    Invalid { name: String, reason: String },
    #[error("duplicate material name '{0}'")]
    Duplicate(String),
    #[error("unknown material '{0}'")]
    Unknown(String),
    #[error("propagation direction is not a unit vector (|n| = {0})")]
    NonUnitDirection(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaterialKind {
    Piezoelectric,
    Elastic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialTensorSet {
    pub name: String,
    pub kind: MaterialKind,
    /// kg/m³
    pub density: f64,
    pub stiffness: Stiffness,
    pub piezo: Piezo,
    pub permittivity: Permittivity,
    /// Z-X-Z Euler angles (radians) taking the crystal frame to the lab frame.
    pub orientation: [f64; 3],
}

/// Voigt index of the symmetric pair (i, j).
#[inline]
pub fn voigt(i: usize, j: usize) -> usize {
    match (i.min(j), i.max(j)) {
        (0, 0) => 0,
        (1, 1) => 1,
        (2, 2) => 2,
        (1, 2) => 3,
        (0, 2) => 4,
        (0, 1) => 5,
        _ => unreachable!("tensor index out of range"),
    }
}

impl MaterialTensorSet {
    /// Isotropic elastic solid from its two Lamé-style constants c11 and c44.
    pub fn isotropic(name: &str, density: f64, c11: f64, c44: f64, rel_permittivity: f64) -> Self {
        let c12 = c11 - 2.0 * c44;
        let mut c = [[0.0; 6]; 6];
        for i in 0..3 {
            for j in 0..3 {
                c[i][j] = if i == j { c11 } else { c12 };
            }
            c[i + 3][i + 3] = c44;
        }
        let eps = rel_permittivity * EPS0;
        Self {
            name: name.to_string(),
            kind: MaterialKind::Elastic,
            density,
            stiffness: c,
            piezo: [[0.0; 6]; 3],
            permittivity: [[eps, 0.0, 0.0], [0.0, eps, 0.0], [0.0, 0.0, eps]],
            orientation: [0.0; 3],
        }
    }

    /// c_ijkl from the Voigt matrix.
    #[inline]
    pub fn c4(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.stiffness[voigt(i, j)][voigt(k, l)]
    }

    /// e_ijk from the Voigt matrix.
    #[inline]
    pub fn e3(&self, i: usize, j: usize, k: usize) -> f64 {
        self.piezo[i][voigt(j, k)]
    }

    /// Checks density, symmetry and definiteness, and the elastic ⇒ zero-piezo rule.
    pub fn validate(&self) -> Result<(), MaterialError> {
        let fail = |reason: String| {
            Err(MaterialError::Invalid {
                name: self.name.clone(),
                reason,
            })
        };
        let finite = self.density.is_finite()
            && self.stiffness.iter().flatten().all(|x| x.is_finite())
            && self.piezo.iter().flatten().all(|x| x.is_finite())
            && self.permittivity.iter().flatten().all(|x| x.is_finite())
            && self.orientation.iter().all(|x| x.is_finite());
        if !finite {
            return fail("non-finite constant".into());
        }
        if self.density <= 0.0 {
            return fail(format!("density must be positive (got {})", self.density));
        }
        let c = Matrix6::from_fn(|i, j| self.stiffness[i][j]);
        let scale = c.amax().max(f64::MIN_POSITIVE);
        if (c - c.transpose()).amax() > 1e-9 * scale {
            return fail("stiffness not symmetric".into());
        }
        if c.cholesky().is_none() {
            return fail("stiffness not positive definite".into());
        }
        let eps = Matrix3::from_fn(|i, j| self.permittivity[i][j]);
        let scale = eps.amax().max(f64::MIN_POSITIVE);
        if (eps - eps.transpose()).amax() > 1e-9 * scale {
            return fail("permittivity not symmetric".into());
        }
        if eps.cholesky().is_none() {
            return fail("permittivity not positive definite".into());
        }
        if self.kind == MaterialKind::Elastic && self.piezo.iter().flatten().any(|&x| x != 0.0) {
            return fail("elastic material with non-zero piezoelectric constants".into());
        }
        Ok(())
    }

    /// Tensors rotated by this material's own orientation; the result has zero orientation.
    pub fn in_lab_frame(&self) -> Self {
        let mut out = rotate_material(self, self.orientation);
        out.orientation = [0.0; 3];
        out
    }
}

/// Rotation matrix for Z-X-Z Euler angles: R = Rz(φ)·Rx(θ)·Rz(ψ).
pub fn euler_zxz(euler: [f64; 3]) -> Matrix3<f64> {
    let rz = |a: f64| {
        let (s, c) = a.sin_cos();
        Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
    };
    let (s, c) = euler[1].sin_cos();
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c);
    rz(euler[0]) * rx * rz(euler[2])
}

/// Angles of the inverse rotation.
pub fn inverse_euler(euler: [f64; 3]) -> [f64; 3] {
    [-euler[2], -euler[1], -euler[0]]
}

/// Rotates stiffness (rank 4), piezoelectric (rank 3) and permittivity (rank 2)
/// tensors by the Z-X-Z rotation. The `orientation` field is carried over unchanged.
pub fn rotate_material(mat: &MaterialTensorSet, euler: [f64; 3]) -> MaterialTensorSet {
    let a = euler_zxz(euler);
    // Bond matrix M such that c' = M c Mᵀ, e' = a e Mᵀ.
    let mut m = [[0.0; 6]; 6];
    for (p, (i, j)) in VOIGT_PAIRS.iter().enumerate() {
        for (q, (k, l)) in VOIGT_PAIRS.iter().enumerate() {
            m[p][q] = if q < 3 {
                a[(*i, *k)] * a[(*j, *l)]
            } else {
                a[(*i, *k)] * a[(*j, *l)] + a[(*i, *l)] * a[(*j, *k)]
            };
        }
    }
    let m = Matrix6::from_fn(|i, j| m[i][j]);
    let c = Matrix6::from_fn(|i, j| mat.stiffness[i][j]);
    let c_rot = m * c * m.transpose();
    let e = nalgebra::Matrix3x6::from_fn(|i, j| mat.piezo[i][j]);
    let e_rot = a * e * m.transpose();
    let eps = Matrix3::from_fn(|i, j| mat.permittivity[i][j]);
    let eps_rot = a * eps * a.transpose();

    let mut out = mat.clone();
    for i in 0..6 {
        for j in 0..6 {
            // Symmetrize away round-off.
            out.stiffness[i][j] = 0.5 * (c_rot[(i, j)] + c_rot[(j, i)]);
        }
    }
    if mat.kind == MaterialKind::Piezoelectric {
        for i in 0..3 {
            for j in 0..6 {
                out.piezo[i][j] = e_rot[(i, j)];
            }
        }
    }
    for i in 0..3 {
        for j in 0..3 {
            out.permittivity[i][j] = 0.5 * (eps_rot[(i, j)] + eps_rot[(j, i)]);
        }
    }
    out
}

const VOIGT_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)];

/// Piezoelectrically stiffened Christoffel matrix Γ_ik / ρ along `n` (m²/s²).
pub fn christoffel(mat: &MaterialTensorSet, n: [f64; 3]) -> Matrix3<f64> {
    let mut g = Matrix3::zeros();
    for i in 0..3 {
        for k in 0..3 {
            let mut s = 0.0;
            for j in 0..3 {
                for l in 0..3 {
                    s += mat.c4(i, j, k, l) * n[j] * n[l];
                }
            }
            g[(i, k)] = s;
        }
    }
    if mat.kind == MaterialKind::Piezoelectric {
        let mut gamma = [0.0; 3];
        let mut eps_nn = 0.0;
        for i in 0..3 {
            for p in 0..3 {
                for j in 0..3 {
                    gamma[i] += mat.e3(p, i, j) * n[p] * n[j];
                }
                eps_nn += mat.permittivity[i][p] * n[i] * n[p];
            }
        }
        for i in 0..3 {
            for k in 0..3 {
                g[(i, k)] += gamma[i] * gamma[k] / eps_nn;
            }
        }
    }
    g / mat.density
}

/// Three bulk phase velocities (m/s) along a unit direction, sorted descending.
pub fn bulk_velocities(mat: &MaterialTensorSet, direction: [f64; 3]) -> Result<[f64; 3], MaterialError> {
    let norm = Vector3::from(direction).norm();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(MaterialError::NonUnitDirection(norm));
    }
    let eig = SymmetricEigen::new(christoffel(mat, direction));
    let mut v = [0.0; 3];
    for (slot, lam) in v.iter_mut().zip(eig.eigenvalues.iter()) {
        *slot = lam.max(0.0).sqrt();
    }
    v.sort_by(|a, b| b.total_cmp(a));
    Ok(v)
}

// ---------------------------------------------------------------------------
// Config file

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct MaterialEntry {
    name: String,
    kind: MaterialKind,
    density: f64,
    stiffness: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    piezo: Option<Vec<f64>>,
    permittivity: Vec<f64>,
    #[serde(default)]
    euler: [f64; 3],
    #[serde(default)]
    source: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MaterialConfig {
    version: u32,
    materials: Vec<MaterialEntry>,
}

/// Validated set of named materials with provenance strings.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MaterialDb {
    pub version: u32,
    entries: BTreeMap<String, MaterialTensorSet>,
    sources: BTreeMap<String, String>,
    order: Vec<String>,
}

/// The material set shipped with the crate.
pub const DEFAULT_MATERIALS_JSON: &str = include_str!("../data/materials.json");

impl MaterialDb {
    pub fn from_json(text: &str) -> Result<Self, MaterialError> {
        let cfg: MaterialConfig =
            serde_json::from_str(text).map_err(|e| MaterialError::Parse(e.to_string()))?;
        let mut db = MaterialDb {
            version: cfg.version,
            ..Default::default()
        };
        for entry in cfg.materials {
            let source = entry.source.clone();
            let mat = entry_to_tensor(entry)?;
            db.insert(mat, source)?;
        }
        Ok(db)
    }

    /// The shipped default database.
    pub fn builtin() -> Self {
        Self::from_json(DEFAULT_MATERIALS_JSON).expect("shipped material config is valid")
    }

    pub fn insert(&mut self, mat: MaterialTensorSet, source: String) -> Result<(), MaterialError> {
        mat.validate()?;
        if self.entries.contains_key(&mat.name) {
            return Err(MaterialError::Duplicate(mat.name));
        }
        self.order.push(mat.name.clone());
        self.sources.insert(mat.name.clone(), source);
        self.entries.insert(mat.name.clone(), mat);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&MaterialTensorSet, MaterialError> {
        self.entries
            .get(name)
            .ok_or_else(|| MaterialError::Unknown(name.to_string()))
    }

    pub fn source(&self, name: &str) -> Option<&str> {
        self.sources.get(name).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Materials in file order.
    pub fn iter(&self) -> impl Iterator<Item = &MaterialTensorSet> {
        self.order.iter().map(move |n| &self.entries[n])
    }

    pub fn to_json(&self) -> String {
        let cfg = MaterialConfig {
            version: self.version,
            materials: self
                .iter()
                .map(|m| tensor_to_entry(m, self.sources[&m.name].clone()))
                .collect(),
        };
        serde_json::to_string_pretty(&cfg).expect("material config serializes")
    }
}

/// Reads and validates a material config file.
pub fn load_materials(path: impl AsRef<Path>) -> Result<MaterialDb, MaterialError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| MaterialError::Io {
        path: path.display().to_string(),
        source,
    })?;
    MaterialDb::from_json(&text)
}

fn entry_to_tensor(entry: MaterialEntry) -> Result<MaterialTensorSet, MaterialError> {
    let bad = |reason: String| MaterialError::Invalid {
        name: entry.name.clone(),
        reason,
    };
    if entry.stiffness.len() != 36 {
        return Err(bad(format!("stiffness needs 36 numbers, got {}", entry.stiffness.len())));
    }
    if entry.permittivity.len() != 9 {
        return Err(bad(format!(
            "permittivity needs 9 numbers, got {}",
            entry.permittivity.len()
        )));
    }
    let mut piezo = [[0.0; 6]; 3];
    match (&entry.kind, &entry.piezo) {
        (MaterialKind::Piezoelectric, None) => {
            return Err(bad("piezoelectric material without piezo constants".into()))
        }
        (_, Some(p)) => {
            if p.len() != 18 {
                return Err(bad(format!("piezo needs 18 numbers, got {}", p.len())));
            }
            for (k, v) in p.iter().enumerate() {
                piezo[k / 6][k % 6] = *v;
            }
        }
        (MaterialKind::Elastic, None) => {}
    }
    let mut stiffness = [[0.0; 6]; 6];
    for (k, v) in entry.stiffness.iter().enumerate() {
        stiffness[k / 6][k % 6] = *v;
    }
    let mut permittivity = [[0.0; 3]; 3];
    for (k, v) in entry.permittivity.iter().enumerate() {
        permittivity[k / 3][k % 3] = *v;
    }
    Ok(MaterialTensorSet {
        name: entry.name,
        kind: entry.kind,
        density: entry.density,
        stiffness,
        piezo,
        permittivity,
        orientation: entry.euler,
    })
}

fn tensor_to_entry(m: &MaterialTensorSet, source: String) -> MaterialEntry {
    MaterialEntry {
        name: m.name.clone(),
        kind: m.kind,
        density: m.density,
        stiffness: m.stiffness.iter().flatten().copied().collect(),
        piezo: match m.kind {
            MaterialKind::Piezoelectric => Some(m.piezo.iter().flatten().copied().collect()),
            MaterialKind::Elastic => None,
        },
        permittivity: m.permittivity.iter().flatten().copied().collect(),
        euler: m.orientation,
        source,
    }
}
