//! Thin-film-on-substrate SAW resonator toolkit: layered guided-mode
//! dispersion, mBVD equivalent circuits, one-port extraction and design sweeps.

pub mod circuit;
pub mod dispersion;
pub mod format;
pub mod materials;
pub mod oneport;
pub mod sweep;
