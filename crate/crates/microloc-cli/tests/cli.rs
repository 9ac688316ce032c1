//! End-to-end runs of the binary: determinism, exit codes, artifact
//! formats.

use std::path::Path;
use std::process::Command;

use num_complex::Complex64;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_microloc"))
}

fn write_jump_fixture(dir: &Path) -> std::path::PathBuf {
    // N = 256 keeps three fit-window octaves below Xi/2
    let spec = microloc::grid::GridSpec::new(2, 256, 8.0).unwrap();
    let u = microloc::grid::GridField::from_fn(spec, |x| {
        let g = (-(x[0] * x[0] + x[1] * x[1])).exp();
        Complex64::new(if x[0] >= 0.0 { g } else { 0.0 }, 0.0)
    })
    .unwrap();
    let path = dir.join("jump.mfld");
    microloc::grid::save_mfld(&path, &u).unwrap();
    path
}

const SCAN_CONFIG: &str = "\
seed = 7

[lattice]
window = 1.6
stride = 1.6
r_inner = 0.8
r_outer = 1.6
angular = 8
half_angle = 0.5
radial_floor = 1.0

[scan]
order = 0.4
";

#[test]
fn wf_scan_is_bitwise_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let field = write_jump_fixture(tmp.path());
    let config = tmp.path().join("scan.cfg");
    std::fs::write(&config, SCAN_CONFIG).unwrap();
    let mut outputs = Vec::new();
    for run in 0..2 {
        let out = tmp.path().join(format!("out{run}"));
        let status = bin()
            .args(["wf-scan", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .arg(&field)
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push(std::fs::read(out.join("wf_jump.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1], "reports differ between runs");
}

#[test]
fn manifest_lists_every_artifact_with_its_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let field = write_jump_fixture(tmp.path());
    let config = tmp.path().join("scan.cfg");
    std::fs::write(&config, SCAN_CONFIG).unwrap();
    let out = tmp.path().join("out");
    let status = bin()
        .args(["wf-scan", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .arg(&field)
        .status()
        .unwrap();
    assert!(status.success());
    let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("config_sha256 ="));
    let line = manifest
        .lines()
        .find(|l| l.starts_with("artifact wf_jump.csv"))
        .expect("artifact line");
    let hash = line.split("sha256=").nth(1).unwrap().trim();
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(std::fs::read(out.join("wf_jump.csv")).unwrap());
    let expect: String = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(hash, expect);
}

#[test]
fn config_errors_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let field = write_jump_fixture(tmp.path());
    let config = tmp.path().join("bad.cfg");
    std::fs::write(&config, "[lattice]\nbogus_key = 1\n").unwrap();
    let status = bin()
        .args(["wf-scan", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(tmp.path().join("out"))
        .arg(&field)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_with_code_three() {
    // a grid too small for any usable octave window
    let tmp = tempfile::tempdir().unwrap();
    let spec = microloc::grid::GridSpec::new(1, 32, 32.0).unwrap();
    let u = microloc::grid::GridField::from_fn(spec, |x| {
        Complex64::new((-x[0] * x[0]).exp(), 0.0)
    })
    .unwrap();
    let field = tmp.path().join("tiny.mfld");
    microloc::grid::save_mfld(&field, &u).unwrap();
    let config = tmp.path().join("scan.cfg");
    std::fs::write(
        &config,
        "[lattice]\nwindow = 2.0\nstride = 2.0\nr_inner = 1.0\nr_outer = 2.0\nhalf_angle = 0.5\n",
    )
    .unwrap();
    let status = bin()
        .args(["wf-scan", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(tmp.path().join("out"))
        .arg(&field)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn selftest_passes() {
    let status = bin().arg("selftest").status().unwrap();
    assert!(status.success());
}

#[test]
fn pullback_verify_prints_table_rows() {
    let out = bin()
        .args([
            "pullback-verify",
            "--case",
            "constant-rank",
            "--n",
            "2",
            "--k",
            "1",
            "--r1",
            "0.0",
            "--r2",
            "0.5",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("verdict=open_in_paper"), "{text}");

    let out = bin()
        .args(["pullback-verify", "--case", "general", "--n", "2", "--r1", "0.4", "--r2", "1.5"])
        .output()
        .unwrap();
    assert!(String::from_utf8(out.stdout).unwrap().contains("verdict=admissible"));
}

#[test]
fn appendix_check_meets_the_stated_tolerance() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let out = bin()
        .args(["appendix-check", "--q", "1", "--s", "2"])
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    let csv = std::fs::read_to_string(out_dir.join("appendix_q1_s2.csv")).unwrap();
    let mut max_rel = 0.0f64;
    for line in csv.lines().skip(1) {
        let rel: f64 = line.split(',').next_back().unwrap().parse().unwrap();
        max_rel = max_rel.max(rel);
    }
    assert!(max_rel <= 1e-3, "max rel_err {max_rel}");
}

#[test]
fn psido_apply_round_trips_through_mfld() {
    let tmp = tempfile::tempdir().unwrap();
    let field = write_jump_fixture(tmp.path());
    let config = tmp.path().join("symbol.cfg");
    std::fs::write(&config, "[symbol]\nsymbol = multiplier(japanese_bracket, power=-1)\n").unwrap();
    let out = tmp.path().join("out");
    let status = bin()
        .args(["psido-apply", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .arg(&field)
        .status()
        .unwrap();
    assert!(status.success());
    let result = microloc::grid::load_mfld(&out.join("psido_out.mfld")).unwrap();
    let original = microloc::grid::load_mfld(&field).unwrap();
    // smoothing multiplier shrinks the L2 mass
    assert!(result.l2_norm() < original.l2_norm());
}

#[test]
fn compcomp_run_emits_the_convergence_curve() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let output = bin()
        .args(["compcomp-run", "--preset", "div-curl", "--freqs", "8,16,32,64", "--b", "fail"])
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    assert!(text.contains("condition fail"), "{text}");
    let csv = std::fs::read_to_string(out_dir.join("compcomp_run.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5); // header + 4 members
    assert!(csv.starts_with("n,density_re,density_im,gap\n"));
}

#[test]
fn defect_estimate_runs_from_config() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("defect.cfg");
    std::fs::write(
        &config,
        "\
[grid]
dim = 2
samples = 256
extent = 8.0

[sequence]
kind = oscillation
profile = bump(0, 0, 0.8, 1.5)
omega0 = 1,0
freqs = 8,16,32,48
limit = zero

[defect]
window = 3.0
cells = 3
transition = 0.4
angular = 8
tail = 2
",
    )
    .unwrap();
    let out = tmp.path().join("out");
    let status = bin()
        .args(["defect-estimate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out.join("defect_estimate.csv")).unwrap();
    assert!(csv.starts_with("cell_x0,cell_x1,omega0,omega1,re,im,cauchy_gap,reliable\n"));
    assert!(csv.lines().count() > 70); // 9 cells x 8 sectors + header
}

#[test]
fn wfc_scan_runs_on_member_files() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = microloc::grid::GridSpec::new(2, 128, 8.0).unwrap();
    let bump = microloc::seminorm::BumpCutoff::new(vec![0.0, 0.0], 0.8, 1.5).unwrap();
    let mut member_paths = Vec::new();
    for (i, m) in [4i64, 8, 16, 24].iter().enumerate() {
        let xi0 = *m as f64 * spec.freq_spacing();
        let u = microloc::grid::GridField::from_fn(spec, |x| {
            Complex64::from_polar(bump.value(x), xi0 * x[0])
        })
        .unwrap();
        let p = tmp.path().join(format!("member{i}.mfld"));
        microloc::grid::save_mfld(&p, &u).unwrap();
        member_paths.push(p);
    }
    let config = tmp.path().join("wfc.cfg");
    std::fs::write(
        &config,
        "\
[lattice]
window = 0.1
stride = 1.0
r_inner = 1.0
r_outer = 2.0
angular = 8
half_angle = 0.5

[scan]
order = 0.0
r_grid = 2,4,8,16
",
    )
    .unwrap();
    let out = tmp.path().join("out");
    let mut cmd = bin();
    cmd.args(["wfc-scan", "--config"]).arg(&config).arg("--out").arg(&out);
    for p in &member_paths {
        cmd.arg(p);
    }
    let status = cmd.status().unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out.join("wfc_scan.csv")).unwrap();
    assert!(csv.contains("noncompact"), "{csv}");
}
