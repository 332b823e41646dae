use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sawstack_core::circuit::{admittance, fp_from_keff2, synthesize_mbvd};
use sawstack_core::oneport::{parse_touchstone, write_touchstone, y_to_s11, OnePortSweep, SweepKind};

const BIN: &str = env!("CARGO_BIN_EXE_sawstack");

const PAPER_STACK: &str = r#"{"substrate": "diamond", "layers": [{"material": "AlScN", "thickness_m": 2e-7}], "surface_bc": "free", "direction": [1, 0, 0]}"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

fn json(path: PathBuf) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn synth(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["synth", "--fs", "12.9e9", "--k2", "0.021", "--c0", "1e-12", "--q", "200", "--grid", "12e9:14e9:1e5"];
    args.extend_from_slice(extra);
    run(dir, &args)
}

#[test]
fn dispersion_bare_and_layered() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bare.json"), r#"{"substrate": "diamond"}"#).unwrap();
    fs::write(dir.path().join("stack.json"), PAPER_STACK).unwrap();

    let out = run(dir.path(), &["dispersion", "--stack", "bare.json", "--h", "200e-9", "--grid", "0.3", "--out", "bare.csv"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("bare.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "h_over_lambda,wavelength_m,label,v_free,v_metal,k2_dvv");
    assert_eq!(text.lines().count(), 2);
    assert!(text.contains(",Rayleigh,"));

    let out = run(
        dir.path(),
        &["dispersion", "--stack", "stack.json", "--h", "200e-9", "--grid", "0.25:0.45:0.1", "--out", "paper.csv"],
    );
    assert_eq!(code(&out), 0);
    let text = fs::read_to_string(dir.path().join("paper.csv")).unwrap();
    assert_eq!(text.matches(",Rayleigh,").count(), 3);
    assert_eq!(text.matches(",Sezawa,").count(), 3);
    let manifest = json(dir.path().join("dispersion.manifest.json"));
    assert_eq!(manifest["inputs"][1]["role"], "stack");
    assert_eq!(manifest["outputs"][0]["path"], "./paper.csv");
    assert!(manifest["timestamp"].is_string());
}

#[test]
fn malformed_stack_exits_2_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("stack.json"), r#"{"substrate": "diamond", "layers": [{"material": "AlScN"}]}"#).unwrap();
    fs::write(dir.path().join("unknown.json"), r#"{"substrate": "unobtainium"}"#).unwrap();
    let before = files(dir.path());
    for stack in ["stack.json", "unknown.json", "missing.json"] {
        let out = run(dir.path(), &["dispersion", "--stack", stack, "--h", "200e-9", "--grid", "0.3"]);
        assert_eq!(code(&out), 2, "{stack}");
        assert!(String::from_utf8_lossy(&out.stderr).contains(stack));
    }
    let out = run(dir.path(), &["dispersion", "--stack", "stack.json", "--h", "200e-9", "--grid", "0.45:0.25:0.05"]);
    assert_eq!(code(&out), 2);
    assert_eq!(files(dir.path()), before);
}

#[test]
fn synth_then_extract_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = synth(dir.path(), &[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        files(dir.path()),
        ["admittance.csv", "model.json", "synth.manifest.json", "synth.s1p"]
    );
    let out = run(dir.path(), &["extract", "--s1p", "synth.s1p", "--fit"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(dir.path().join("extract.json"));
    let modes = report["modes"].as_array().unwrap();
    assert_eq!(modes.len(), 1);
    let fs_hz = modes[0]["fs_hz"].as_f64().unwrap();
    assert!((fs_hz / 12.9e9 - 1.0).abs() < 1e-4);
    assert!((modes[0]["keff2"].as_f64().unwrap() / 0.021 - 1.0).abs() < 0.01);
    assert_eq!(modes[0]["fit"]["converged"], true);
    assert_eq!(report["q"]["variant"], "paper");
    assert!(fs::read_to_string(dir.path().join("q.csv")).unwrap().starts_with("freq_hz,q\n"));

    let out = run(dir.path(), &["extract", "--s1p", "synth.s1p", "--variant", "feld", "--smooth", "--out", "feld.json"]);
    assert_eq!(code(&out), 0);
    let report = json(dir.path().join("feld.json"));
    assert_eq!(report["q"]["variant"], "feld");
    assert_eq!(report["q"]["smoothing"], "savitzky-golay(5,2)");
}

#[test]
fn synth_fp_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &["synth", "--fs", "12.77e9", "--k2", "0.0311", "--c0", "1e-12", "--q", "1e5", "--grid", "12e9:14e9:1e5"],
    );
    assert_eq!(code(&out), 0);
    let y = OnePortSweep::from_csv(&fs::read_to_string(dir.path().join("admittance.csv")).unwrap()).unwrap();
    let mag: Vec<f64> = y.values.iter().map(|v| v.norm()).collect();
    let kmax = (0..mag.len()).max_by(|&a, &b| mag[a].total_cmp(&mag[b])).unwrap();
    let kmin = (kmax..mag.len()).min_by(|&a, &b| mag[a].total_cmp(&mag[b])).unwrap();
    // two interior extrema: the |Y| pole and zero
    assert!(kmax > 0 && kmin < mag.len() - 1 && kmin > kmax);
    let fp = fp_from_keff2(12.77e9, 0.0311).unwrap();
    assert!((y.freqs[kmin] - fp).abs() <= 1e5);
    assert!((y.freqs[kmax] - 12.77e9).abs() <= 1e5);
}

#[test]
fn capacitor_only_synth_and_solver_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["synth", "--fs", "12.9e9", "--k2", "0", "--c0", "1e-12", "--q", "200", "--grid", "12e9:14e9:1e7"]);
    assert_eq!(code(&out), 0);
    let y = OnePortSweep::from_csv(&fs::read_to_string(dir.path().join("admittance.csv")).unwrap()).unwrap();
    assert!(y.values.iter().all(|v| v.re.abs() < 1e-15 && v.im > 0.0));

    let before = files(dir.path());
    let out = run(dir.path(), &["extract", "--s1p", "synth.s1p"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no resonance"));
    assert_eq!(files(dir.path()), before);
}

#[test]
fn bad_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("notes.txt"), "these are not S-parameters\n").unwrap();
    assert_eq!(code(&run(dir.path(), &["extract", "--s1p", "notes.txt"])), 2);
    assert_eq!(code(&run(dir.path(), &["extract", "--s1p", "absent.s1p"])), 2);
    assert_eq!(code(&synth(dir.path(), &["--rs", "-1"])), 2);
    assert_eq!(code(&run(dir.path(), &["synth", "--fs", "0", "--k2", "0.02", "--c0", "1e-12", "--q", "200", "--grid", "1:2:1"])), 2);
    // clap usage errors share the validation code
    assert_eq!(code(&run(dir.path(), &["synth", "--fs", "1e9"])), 2);
    assert_eq!(files(dir.path()), ["notes.txt"]);
}

#[test]
fn two_mode_file_gives_two_entries() {
    let dir = tempfile::tempdir().unwrap();
    let a = synthesize_mbvd(9.12e9, 0.0165, 1e-12, 200.0).unwrap();
    let b = synthesize_mbvd(12.9e9, 0.021, 1e-12, 300.0).unwrap();
    let freqs: Vec<f64> = (0..=30000).map(|k| 8e9 + k as f64 * 2e5).collect();
    let values = freqs.iter().map(|&f| a.admittance_at(f) + b.admittance_at(f)).collect();
    let y = OnePortSweep::new(freqs, values, SweepKind::Y, 50.0).unwrap();
    write_touchstone(&y_to_s11(&y, 50.0).unwrap(), &dir.path().join("two.s1p")).unwrap();
    let out = run(dir.path(), &["extract", "--s1p", "two.s1p"]);
    assert_eq!(code(&out), 0);
    let modes = json(dir.path().join("extract.json"))["modes"].as_array().unwrap().clone();
    assert_eq!(modes.len(), 2);
    assert!(modes[0]["fs_hz"].as_f64().unwrap() < modes[1]["fs_hz"].as_f64().unwrap());
}

#[test]
fn power_drift_report() {
    let dir = tempfile::tempdir().unwrap();
    let freqs: Vec<f64> = (0..=20000).map(|k| 12.5e9 + k as f64 * 5e4).collect();
    let powers = [-2.5, 12.5, -2.5];
    let shifts = [0.0, 100e-6, 0.0];
    let mut names = Vec::new();
    for (k, s) in shifts.iter().enumerate() {
        let m = synthesize_mbvd(12.9e9 * (1.0 + s), 0.021, 1e-12, 200.0).unwrap();
        let name = format!("p{k}.s1p");
        write_touchstone(&y_to_s11(&admittance(&m, &freqs).unwrap(), 50.0).unwrap(), &dir.path().join(&name)).unwrap();
        names.push(name);
    }
    let list = powers.map(|p| p.to_string()).join(",");
    let mut args = vec!["power", "--s1p"];
    args.extend(names.iter().map(String::as_str));
    args.extend(["--powers", &list]);
    let out = run(dir.path(), &args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(dir.path().join("drift.json"));
    let shift = report["fs_shift_ppm"][1].as_f64().unwrap();
    assert!((shift - 100.0).abs() < 1.0, "{shift}");
    assert!(report["hysteresis_ppm"].as_f64().unwrap() < 1.0);
    assert_eq!(report["powers"][0].as_f64(), Some(-2.5));

    let out = run(dir.path(), &["power", "--s1p", "p0.s1p", "p1.s1p", "--powers", "0"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn bench_prints_bundled_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["bench"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 7);
    assert!(text.contains("12.90") && text.contains("8671") && text.contains("408"));
    assert!(files(dir.path()).is_empty());

    let out = run(dir.path(), &["--format", "json", "bench", "--out", "bench.json"]);
    assert_eq!(code(&out), 0);
    let rows = json(dir.path().join("bench.json"));
    assert_eq!(rows.as_array().unwrap().len(), 5);
}

#[test]
fn materials_validate() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["materials", "validate"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("diamond"));

    let shipped = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/data/materials.json");
    let out = run(dir.path(), &["materials", "validate", "--materials", shipped]);
    assert_eq!(code(&out), 0);

    let text = fs::read_to_string(shipped).unwrap().replacen("\"density\": 3515.0", "\"density\": -1.0", 1);
    fs::write(dir.path().join("bad.json"), text).unwrap();
    let out = run(dir.path(), &["--materials", "bad.json", "materials", "validate"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("diamond"));
}

#[test]
fn json_format_outputs() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&synth(dir.path(), &["--format", "json"])), 0);
    let y = json(dir.path().join("admittance.json"));
    assert_eq!(y["freq_hz"].as_array().unwrap().len(), 20001);
    let s11 = parse_touchstone(&fs::read_to_string(dir.path().join("synth.s1p")).unwrap()).unwrap();
    assert_eq!(s11.len(), 20001);
    assert_eq!(code(&run(dir.path(), &["--format", "json", "extract", "--s1p", "synth.s1p"])), 0);
    assert!(json(dir.path().join("q.json"))["q"].is_array());
}

/// Every non-manifest file from two identical runs, byte for byte.
#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        fs::write(dir.join("stack.json"), PAPER_STACK).unwrap();
        assert_eq!(code(&synth(dir, &[])), 0);
        assert_eq!(code(&run(dir, &["extract", "--s1p", "synth.s1p", "--fit"])), 0);
        assert_eq!(
            code(&run(dir, &["dispersion", "--stack", "stack.json", "--h", "200e-9", "--grid", "0.25:0.45:0.1", "--design", "design.csv"])),
            0
        );
    }
    let names = files(a.path());
    assert_eq!(names, files(b.path()));
    for name in names.iter().filter(|n| !n.ends_with(".manifest.json")) {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}
