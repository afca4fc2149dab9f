use std::path::Path;
use std::process::{Command, Output};

fn homlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_homlab")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("exp.cfg");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn resolution_rule_violation_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "domain_grid_n = 64\nepsilons = 1/4, 1/8\n");
    let out = homlab(&["run", "--config", &cfg, "--output-dir", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("resolution rule") && err.contains("0.125"), "{err}");
    assert!(!dir.path().join("out/summary.json").exists());
}

#[test]
fn single_epsilon_subcommand_checks_its_own_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "domain_grid_n = 64\nepsilons = 1/4\n");
    let out = homlab(&["solve", "--config", &cfg, "--epsilon", "0.125"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unknown_key_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "A_preset = layered\ncell_size = 3\n");
    let out = homlab(&["cell", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cell_size"));
}

#[test]
fn cell_subcommand_writes_report_and_fields() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let cfg = write_config(dir.path(), "A_preset = layered\nW_preset = sine1\ncell_grid_n = 32\ndomain_grid_n = 64\nepsilons = 1/4\n");
    let out = homlab(&["cell", "--config", &cfg, "--output-dir", out_dir.to_str().unwrap(), "--dump-fields"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out_dir.join("cell_solution.json")).unwrap()).unwrap();
    let a11 = report["a_hat"][0][0].as_f64().unwrap();
    assert!((a11 - 3f64.sqrt()).abs() < 5e-3, "{a11}");
    assert!(report["m_w_chi_w"].as_f64().unwrap() < 0.0);
    let fields = std::fs::read_to_string(out_dir.join("cell_fields.csv")).unwrap();
    assert!(fields.starts_with("y1,y2,chi1,chi2,chi_w\n"));
    assert_eq!(fields.lines().count(), 1 + 32 * 32);
    assert!(!fields.contains('\r'));
}

#[test]
fn eigs_then_gaps_reuse_spectrum_files() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let cfg = write_config(
        dir.path(),
        &format!("cell_grid_n = 32\ndomain_grid_n = 64\nepsilons = 1/4\nk_eigen = 3\noutput_dir = {}\n", out_dir.display()),
    );
    let out = homlab(&["eigs", "--config", &cfg, "--epsilon", "0.25"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let spectrum = std::fs::read_to_string(out_dir.join("spectrum_0.25.csv")).unwrap();
    for tag in ["eps,", "eps_prime,", "hom,", "hom_prime,", "hom_matched,", "hom_prime_matched,"] {
        assert_eq!(spectrum.lines().filter(|l| l.starts_with(tag)).count(), 3, "{tag}\n{spectrum}");
    }
    let out = homlab(&["gaps", "--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let gaps = std::fs::read_to_string(out_dir.join("gaps.csv")).unwrap();
    assert_eq!(gaps.lines().next().unwrap(), "epsilon,k,lambda_eps,lambda_0,gap,normalized_const");
    assert_eq!(gaps.lines().count(), 4);
}
