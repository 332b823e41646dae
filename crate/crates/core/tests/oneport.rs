use num_complex::Complex64;
use proptest::prelude::*;
use sawstack_core::circuit::{admittance, find_resonances, synthesize_mbvd};
use sawstack_core::oneport::*;

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

fn s11_of(q: f64, n: usize) -> OnePortSweep {
    let m = synthesize_mbvd(12.9e9, 0.021, 1e-12, q).unwrap();
    y_to_s11(&admittance(&m, &grid(12e9, 14e9, n)).unwrap(), 50.0).unwrap()
}

/// Peak Q inside the band spanned by the resonance pair, widened by a quarter
/// of its width on either side.
fn band_peak(s11: &OnePortSweep, curve: &QCurve) -> (f64, f64) {
    let pair = find_resonances(&s11_to_y(s11).unwrap()).unwrap()[0];
    let pad = 0.25 * (pair.fp - pair.fs);
    curve.peak_in(pair.fs - pad, pair.fp + pad).unwrap()
}

#[test]
fn bode_q_loop_recovers_set_q() {
    let s11 = s11_of(408.0, 20001);
    let paper = bode_q(&s11, QVariant::Paper).unwrap();
    let feld = bode_q(&s11, QVariant::Feld).unwrap();
    let (_, qp) = band_peak(&s11, &paper);
    let (_, qf) = band_peak(&s11, &feld);
    assert!((qp / 408.0 - 1.0).abs() < 0.05, "paper {qp}");
    assert!((qp / qf - 1.0).abs() < 0.10, "paper {qp} feld {qf}");
}

#[test]
fn smoothing_changes_little_on_clean_data() {
    let s11 = s11_of(408.0, 20001);
    let raw = band_peak(&s11, &bode_q(&s11, QVariant::Paper).unwrap()).1;
    let curve = bode_q_with(
        &s11,
        &BodeQSettings {
            variant: QVariant::Paper,
            smoothing: true,
        },
    )
    .unwrap();
    assert_eq!(curve.summary().smoothing, "savitzky-golay(5,2)");
    let smooth = band_peak(&s11, &curve).1;
    assert!((smooth / raw - 1.0).abs() < 1e-3);
}

#[test]
fn grid_halving_is_stable() {
    let fine = s11_of(408.0, 20001);
    let coarse = s11_of(408.0, 10001);
    let a = band_peak(&fine, &bode_q(&fine, QVariant::Paper).unwrap()).1;
    let b = band_peak(&coarse, &bode_q(&coarse, QVariant::Paper).unwrap()).1;
    assert!((a / b - 1.0).abs() < 0.01, "{a} vs {b}");
}

#[test]
fn q_ignores_frequency_units() {
    let s11 = s11_of(300.0, 2001);
    let mut scaled = s11.clone();
    scaled.freqs.iter_mut().for_each(|f| *f *= 1e-6);
    let a = bode_q(&s11, QVariant::Paper).unwrap();
    let b = bode_q(&scaled, QVariant::Paper).unwrap();
    for (x, y) in a.q.iter().zip(&b.q) {
        assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
    }
}

#[test]
fn q_outputs() {
    let s11 = s11_of(300.0, 11);
    let curve = bode_q(&s11, QVariant::Feld).unwrap();
    let csv = curve.to_csv();
    assert!(csv.starts_with("freq_hz,q\n"));
    assert_eq!(csv.lines().count(), curve.q.len() + 1);
    let json = serde_json::to_string(&curve.summary()).unwrap();
    assert!(json.contains("\"variant\":\"feld\""));
    assert!(curve.q.iter().all(|q| *q >= 0.0));
    assert!(curve.q.contains(&curve.q_max.1));
}

#[test]
fn touchstone_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.s1p");
    let s11 = s11_of(200.0, 101);
    write_touchstone(&s11, &path).unwrap();
    assert_eq!(read_touchstone(&path).unwrap(), s11);
    let y = s11_to_y(&s11).unwrap();
    assert!(write_touchstone(&y, &path).is_err());
    assert!(read_touchstone(&dir.path().join("missing.s1p")).is_err());
}

fn passive_sweep() -> impl Strategy<Value = OnePortSweep> {
    (2usize..40, 1e3..1e10f64, 1.0..200.0f64).prop_flat_map(|(n, f0, z0)| {
        (
            prop::collection::vec((1e-3..1.0f64, 0.001..1.0f64), n),
            prop::collection::vec((0.0..1.0f64, -3.14..3.14f64), n),
        )
            .prop_map(move |(steps, polar)| {
                let mut f = f0;
                let freqs = steps
                    .iter()
                    .map(|(s, _)| {
                        f += s * f0;
                        f
                    })
                    .collect();
                let values = polar.iter().map(|(m, a)| Complex64::from_polar(*m, *a)).collect();
                OnePortSweep::new(freqs, values, SweepKind::S11, z0).unwrap()
            })
    })
}

proptest! {
    #[test]
    fn conversions_round_trip(re in -10.0..10.0f64, im in -10.0..10.0f64, z0 in 1.0..500.0f64) {
        let y = OnePortSweep::new(vec![1e9], vec![Complex64::new(re, im) / z0], SweepKind::Y, z0).unwrap();
        let back = s11_to_y(&y_to_s11(&y, z0).unwrap()).unwrap();
        prop_assert!((back.values[0] - y.values[0]).norm() <= 1e-12 * y.values[0].norm().max(1e-300));
    }

    #[test]
    fn touchstone_formats_round_trip(s in passive_sweep(), unit in 0usize..4, format in 0usize..3) {
        let options = TouchstoneOptions { unit: FreqUnit::ALL[unit], format: DataFormat::ALL[format] };
        let text = format_touchstone(&s, &options).unwrap();
        let back = parse_touchstone(&text).unwrap();
        prop_assert_eq!(back.z0, s.z0);
        for (a, b) in back.freqs.iter().zip(&s.freqs) {
            prop_assert!(((a - b) / b).abs() < 1e-12);
        }
        for (a, b) in back.values.iter().zip(&s.values) {
            prop_assert!((a - b).norm() <= 1e-12 * b.norm());
        }
    }

    #[test]
    fn constant_reflection_zero_q(m in 0.0..0.99f64, a in -3.0..3.0f64) {
        let freqs = grid(1e9, 2e9, 9);
        let s = OnePortSweep::new(freqs, vec![Complex64::from_polar(m, a); 9], SweepKind::S11, 50.0).unwrap();
        let q = bode_q(&s, QVariant::Paper).unwrap();
        prop_assert!(q.q.iter().all(|v| v.abs() < 1e-9));
    }
}
