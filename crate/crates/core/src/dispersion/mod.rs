//! Guided acoustic modes of a layered piezoelectric stack on a half-space.
//!
//! The film occupies 0 < z < H with the substrate filling z < 0. Each
//! homogeneous region is described by its partial waves; layers are chained
//! with the recursive stiffness-matrix scheme so thick layers never produce
//! growing exponentials. Guided modes are the real velocities below the
//! substrate's limiting bulk velocity where the top-surface boundary
//! determinant vanishes.

mod partial;
mod search;
mod stack;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::materials::{rotate_material, MaterialDb, MaterialError, MaterialKind, MaterialTensorSet};

pub use search::{
    coupling_dvv, find_guided_modes, solve_branches, subsonic_window, BranchPointError,
    BranchSweep, SearchSettings,
};
pub use stack::{boundary_determinant, boundary_indicator, mode_profile};

#[derive(Debug, Error)]
pub enum DispersionError {
    #[error("evaluation point degenerate at v = {velocity} m/s")]
    Degenerate { velocity: f64 },
    #[error("velocity {velocity} m/s outside the subsonic window (0, {limit}) m/s")]
    OutsideWindow { velocity: f64, limit: f64 },
    #[error("invalid stack: {0}")]
    InvalidStack(String),
    #[error("root refinement did not converge in [{lo}, {hi}] m/s")]
    NonConvergence { lo: f64, hi: f64 },
    #[error("metallized velocity {v_metal} exceeds free velocity {v_free} (mis-paired modes)")]
    MisPaired { v_free: f64, v_metal: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Material(#[from] MaterialError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SurfaceBc {
    #[default]
    Free,
    Metallized,
}

/// Which displacement components take part in the boundary problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Polarization {
    /// (u1, u3, φ) only, when every material decouples the shear-horizontal
    /// component for the propagation direction; otherwise the full problem.
    #[default]
    Sagittal,
    /// All of (u1, u2, u3, φ).
    Coupled,
}

#[derive(Debug, Clone)]
pub struct Layer {
    pub material: MaterialTensorSet,
    /// m
    pub thickness: f64,
}

/// Film layers (bottom to top) on a half-space substrate.
#[derive(Debug, Clone)]
pub struct LayerStack {
    pub substrate: MaterialTensorSet,
    pub layers: Vec<Layer>,
    pub surface_bc: SurfaceBc,
    /// In-plane unit propagation direction.
    pub direction: [f64; 3],
}

impl LayerStack {
    pub fn new(substrate: MaterialTensorSet) -> Self {
        Self {
            substrate,
            layers: Vec::new(),
            surface_bc: SurfaceBc::Free,
            direction: [1.0, 0.0, 0.0],
        }
    }

    pub fn with_layer(mut self, material: MaterialTensorSet, thickness: f64) -> Self {
        self.layers.push(Layer {
            material,
            thickness,
        });
        self
    }

    pub fn with_bc(mut self, bc: SurfaceBc) -> Self {
        self.surface_bc = bc;
        self
    }

    pub fn validate(&self) -> Result<(), DispersionError> {
        let [dx, dy, dz] = self.direction;
        if dz.abs() > 1e-12 {
            return Err(DispersionError::InvalidStack(
                "propagation direction must lie in the surface plane".into(),
            ));
        }
        if ((dx * dx + dy * dy).sqrt() - 1.0).abs() > 1e-9 {
            return Err(DispersionError::InvalidStack("propagation direction must be a unit vector".into()));
        }
        self.substrate.validate()?;
        for (k, layer) in self.layers.iter().enumerate() {
            if !(layer.thickness > 0.0 && layer.thickness.is_finite()) {
                return Err(DispersionError::InvalidStack(format!(
                    "layer {k} ({}) has non-positive thickness {}",
                    layer.material.name, layer.thickness
                )));
            }
            layer.material.validate()?;
        }
        Ok(())
    }

    /// Total thickness of the piezoelectric layers, m.
    pub fn piezo_thickness(&self) -> f64 {
        self.layers
            .iter()
            .filter(|l| l.material.kind == MaterialKind::Piezoelectric)
            .map(|l| l.thickness)
            .sum()
    }

    pub fn total_thickness(&self) -> f64 {
        self.layers.iter().map(|l| l.thickness).sum()
    }

    /// Copy with all tensors expressed in a frame whose x axis is the
    /// propagation direction.
    pub(crate) fn propagation_frame(&self) -> Self {
        let angle = self.direction[1].atan2(self.direction[0]);
        let to_frame = |m: &MaterialTensorSet| {
            let lab = m.in_lab_frame();
            if angle == 0.0 {
                lab
            } else {
                rotate_material(&lab, [-angle, 0.0, 0.0])
            }
        };
        Self {
            substrate: to_frame(&self.substrate),
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    material: to_frame(&l.material),
                    thickness: l.thickness,
                })
                .collect(),
            surface_bc: self.surface_bc,
            direction: [1.0, 0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, PartialOrd, Ord, Hash)]
pub enum ModeLabel {
    Rayleigh,
    Sezawa,
    #[serde(rename = "higher")]
    Higher,
}

impl ModeLabel {
    pub fn from_index(index: usize) -> Self {
        match index {
            0 => ModeLabel::Rayleigh,
            1 => ModeLabel::Sezawa,
            _ => ModeLabel::Higher,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ModeLabel::Rayleigh => "Rayleigh",
            ModeLabel::Sezawa => "Sezawa",
            ModeLabel::Higher => "higher",
        }
    }
}

impl std::str::FromStr for ModeLabel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Rayleigh" => Ok(ModeLabel::Rayleigh),
            "Sezawa" => Ok(ModeLabel::Sezawa),
            "higher" => Ok(ModeLabel::Higher),
            other => Err(format!("unknown mode label '{other}'")),
        }
    }
}

/// Field magnitudes of a mode sampled against depth below the top surface.
#[derive(Debug, Clone, Default)]
pub struct DepthProfile {
    /// Depth below the top surface, m.
    pub depth: Vec<f64>,
    /// |u1|, |u2|, |u3| normalized to the largest displacement magnitude.
    pub displacement: Vec<[f64; 3]>,
    /// |φ| in the solver's nondimensional units, same normalization.
    pub potential: Vec<f64>,
    /// Share of ∫|u|² dz (over the sampled depth) that lies in the substrate.
    pub substrate_fraction: f64,
    /// Displacement-energy-weighted mean depth, in wavelengths.
    pub centroid_wavelengths: f64,
}

#[derive(Debug, Clone)]
pub struct GuidedMode {
    /// m/s
    pub phase_velocity: f64,
    pub mode_index: usize,
    pub label: ModeLabel,
    pub depth_profile: DepthProfile,
    /// |indicator| at the refined root.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispersionPoint {
    pub h_over_lambda: f64,
    pub wavelength: f64,
    pub v_free: f64,
    pub v_metal: f64,
    pub k2_dvv: f64,
    pub label: ModeLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispersionBranch {
    pub label: ModeLabel,
    /// Velocity ordinal shared by every point of the branch.
    pub mode_index: usize,
    pub points: Vec<DispersionPoint>,
}

// ---------------------------------------------------------------------------
// Stack config

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StackLayerConfig {
    pub material: String,
    pub thickness_m: f64,
}

/// JSON form of a stack; material names resolve against a [`MaterialDb`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StackConfig {
    pub substrate: String,
    #[serde(default)]
    pub layers: Vec<StackLayerConfig>,
    #[serde(default)]
    pub surface_bc: SurfaceBc,
    #[serde(default = "default_direction")]
    pub direction: [f64; 3],
}

fn default_direction() -> [f64; 3] {
    [1.0, 0.0, 0.0]
}

impl StackConfig {
    pub fn from_json(text: &str) -> Result<Self, DispersionError> {
        serde_json::from_str(text).map_err(|e| DispersionError::InvalidStack(e.to_string()))
    }

    pub fn resolve(&self, db: &MaterialDb) -> Result<LayerStack, DispersionError> {
        let mut stack = LayerStack::new(db.get(&self.substrate)?.clone());
        for layer in &self.layers {
            stack = stack.with_layer(db.get(&layer.material)?.clone(), layer.thickness_m);
        }
        stack.surface_bc = self.surface_bc;
        stack.direction = self.direction;
        stack.validate()?;
        Ok(stack)
    }
}
