use std::path::Path;
use std::process::{Command, Output};

const COARSE: &str = "[params]\nn = 2\nh = 0.0625\nbeta = 1.0\nalpha = 0.5\n\n[experiment]\nsamples = 40\nseed = 5\n";

fn planckwave(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_planckwave"))
        .args(args)
        .env_remove("PLANCKWAVE_THREADS")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("c.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn lattice_export_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), COARSE);
    let out = dir.path().join("run");
    let o = planckwave(&["lattice", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("lattice.csv")).unwrap();
    assert!(csv.starts_with("j,xi_1,xi_2,norm\r\n"));
    assert_eq!(csv.lines().count(), 301);
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("lattice.json")).unwrap()).unwrap();
    assert_eq!(meta["N"], 300);
    assert_eq!(meta["seed"], 5);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("lattice: N=300"));
}

#[test]
fn missing_config_names_the_path() {
    let o = planckwave(&["lattice", "--config", "/definitely/not/here.toml", "--out", "/tmp/unused"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/definitely/not/here.toml"));
}

#[test]
fn bad_values_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), COARSE);
    let out = dir.path().join("run");
    let o = planckwave(&["lattice", "--config", &cfg, "--h", "1.5", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let o = planckwave(&["bogus-subcommand"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn empty_aperture_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[params]\nn = 2\nh = 0.25\nbeta = 1.0\nalpha = 0.5\n\n[lattice]\nmomenta = [[0.0, 1.0]]\n\n[phase]\nx = [0.0, 0.0]\nxi = [1.0, 0.0]\n";
    let cfg = write_config(dir.path(), text);
    let out = dir.path().join("run");
    let o = planckwave(&["phase", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no modes in aperture"));
}

#[test]
fn refuses_to_overwrite_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), COARSE);
    let out = dir.path().join("run");
    let out = out.to_str().unwrap();
    assert_eq!(planckwave(&["lattice", "--config", &cfg, "--out", out]).status.code(), Some(0));
    let o = planckwave(&["lattice", "--config", &cfg, "--out", out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--force"));
    let o = planckwave(&["lattice", "--config", &cfg, "--out", out, "--force"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn manifest_covers_every_file_and_validates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), COARSE);
    let out = dir.path().join("run");
    let o = planckwave(&["xray", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("xray-point:"));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let listed: Vec<String> = manifest["files"].as_object().unwrap().keys().cloned().collect();
    let mut on_disk: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "manifest.json")
        .collect();
    on_disk.sort();
    assert_eq!(listed, on_disk);
    assert!(planckwave::ensemble::verify_manifest(&out).unwrap().is_empty());
    std::fs::write(out.join("xray_point.csv"), "tampered").unwrap();
    assert_eq!(planckwave::ensemble::verify_manifest(&out).unwrap(), vec!["xray_point.csv".to_string()]);
}

#[test]
fn same_config_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), COARSE);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        let o = planckwave(&["phase", "--config", &cfg, "--out", out.to_str().unwrap(), "--threads", threads]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for name in ["phase_point.csv", "phase_point_summary.csv", "config.json"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn overrides_win_over_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), COARSE);
    let out = dir.path().join("run");
    let o = planckwave(&["lattice", "--config", &cfg, "--h", "0.125", "--seed", "9", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("lattice.json")).unwrap()).unwrap();
    assert_eq!(meta["params"]["h"], 0.125);
    assert_eq!(meta["seed"], 9);
}

#[test]
fn raster_export() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), COARSE);
    let out = dir.path().join("run");
    let o = planckwave(&["raster", "--config", &cfg, "--resolution", "16", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("raster.csv")).unwrap();
    assert!(csv.starts_with("x_1,x_2,abs_u_sq\r\n"));
    assert_eq!(csv.lines().count(), 257);
}
