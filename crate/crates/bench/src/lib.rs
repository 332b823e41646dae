//! Shared fixtures for the benchmarks.

use sawstack_core::circuit::{admittance, synthesize_mbvd};
use sawstack_core::dispersion::LayerStack;
use sawstack_core::materials::MaterialDb;
use sawstack_core::oneport::{y_to_s11, OnePortSweep};

/// 200 nm AlScN on diamond.
pub fn film_on_diamond() -> LayerStack {
    let db = MaterialDb::builtin();
    LayerStack::new(db.get("diamond").unwrap().clone()).with_layer(db.get("AlScN").unwrap().clone(), 200e-9)
}

/// Admittance of a 12.9 GHz, k² = 2.1 %, Q = 408 resonator on `n` points over 12–14 GHz.
pub fn resonator_y(n: usize) -> OnePortSweep {
    let model = synthesize_mbvd(12.9e9, 0.021, 1e-12, 408.0).unwrap();
    let freqs: Vec<f64> = (0..n).map(|k| 12e9 + 2e9 * k as f64 / (n - 1) as f64).collect();
    admittance(&model, &freqs).unwrap()
}

pub fn resonator_s11(n: usize) -> OnePortSweep {
    y_to_s11(&resonator_y(n), 50.0).unwrap()
}
