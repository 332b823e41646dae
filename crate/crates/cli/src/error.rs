//! Exit-code classification: 2 for bad input, 3 for solver failures.

use std::fmt;

use sawstack_core::circuit::CircuitError;
use sawstack_core::dispersion::DispersionError;
use sawstack_core::materials::MaterialError;
use sawstack_core::oneport::OnePortError;
use sawstack_core::sweep::SweepError;

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_SOLVER: u8 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_VALIDATION,
            message: message.into(),
        }
    }

    pub fn solver(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_SOLVER,
            message: message.into(),
        }
    }

    /// Unreadable inputs and unwritable outputs count as invalid arguments.
    pub fn io(message: impl Into<String>) -> Self {
        Self::validation(message)
    }

    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<MaterialError> for Failure {
    fn from(e: MaterialError) -> Self {
        Self::validation(e.to_string())
    }
}

impl From<DispersionError> for Failure {
    fn from(e: DispersionError) -> Self {
        match e {
            DispersionError::Degenerate { .. }
            | DispersionError::NonConvergence { .. }
            | DispersionError::MisPaired { .. } => Self::solver(e.to_string()),
            DispersionError::OutsideWindow { .. }
            | DispersionError::InvalidStack(_)
            | DispersionError::InvalidArgument(_)
            | DispersionError::Material(_) => Self::validation(e.to_string()),
        }
    }
}

impl From<OnePortError> for Failure {
    fn from(e: OnePortError) -> Self {
        match e {
            OnePortError::Singular { .. } | OnePortError::AllExcluded => Self::solver(e.to_string()),
            _ => Self::validation(e.to_string()),
        }
    }
}

impl From<CircuitError> for Failure {
    fn from(e: CircuitError) -> Self {
        match e {
            CircuitError::NoResonance | CircuitError::FpNotBracketed { .. } => Self::solver(e.to_string()),
            CircuitError::Sweep(inner) => inner.into(),
            _ => Self::validation(e.to_string()),
        }
    }
}

impl From<SweepError> for Failure {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::Resonance { .. } => Self::solver(e.to_string()),
            SweepError::OnePort(inner) => inner.into(),
            _ => Self::validation(e.to_string()),
        }
    }
}
