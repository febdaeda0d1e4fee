use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(format!("{name}.toml"))
}

fn openqx(cmd: &str, cfg: &Path, out: &Path, workers: usize) -> Output {
    Command::new(env!("CARGO_BIN_EXE_openqx"))
        .args([cmd, "--config"])
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .args(["--workers", &workers.to_string()])
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn verify_fermion_preset_passes_the_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let o = openqx("verify", &config("verify-fermion"), dir.path(), 1);
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{text}");
    assert!(text.lines().any(|l| l.starts_with("max |Δρ| < 1e-6 PASS")), "{text}");
    assert!(dir.path().join("verify.json").exists());
}

#[test]
fn thermalize_weak_coupling_final_row_is_close_to_gibbs() {
    let dir = tempfile::tempdir().unwrap();
    let o = openqx("thermalize", &config("weak-coupling"), dir.path(), 1);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let (header, rows) = csv_rows(&dir.path().join("sweep.csv"));
    assert_eq!(&header[..3], ["scale", "deviation", "gibbs_distance"]);
    let last = rows.last().unwrap();
    assert_eq!(last[0], "extrapolated");
    let dev: f64 = last[1].parse().unwrap();
    assert!(dev < 1e-3, "final deviation {dev}");
    for f in ["steady_state.json", "memory.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn decoupled_level_keeps_its_population() {
    let dir = tempfile::tempdir().unwrap();
    let o = openqx("evolve", &config("decoupled"), dir.path(), 1);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let (header, rows) = csv_rows(&dir.path().join("populations.csv"));
    assert_eq!(header, ["t", "p_0", "p_1"]);
    for r in &rows {
        let p1: f64 = r[2].parse().unwrap();
        assert!((p1 - 1.0).abs() < 1e-12, "p_1 = {p1} at t = {}", r[0]);
    }
    let (_, audit) = csv_rows(&dir.path().join("audit.csv"));
    assert!(audit.iter().all(|r| r[5] == "true"));
}

#[test]
fn spectrum_and_greens_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("lorentzian-pair");
    assert_eq!(openqx("spectrum", &cfg, dir.path(), 1).status.code(), Some(0));
    assert_eq!(openqx("greens", &cfg, dir.path(), 1).status.code(), Some(0));
    let (h, rows) = csv_rows(&dir.path().join("spectrum.csv"));
    assert_eq!(h.len(), 1 + 3 * 8);
    assert_eq!(rows.len(), 2001);
    let (h, rows) = csv_rows(&dir.path().join("greens.csv"));
    assert_eq!(h[..3], ["t", "u_00_re", "u_00_im"]);
    assert_eq!(rows.len(), 1001);
}

#[test]
fn invalid_config_exits_one_with_a_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[system]\nstatistics = \"fermion\"\neps = [[0.3]]\n\n[bath]\nbeta = -1.0\n").unwrap();
    let o = openqx("evolve", &cfg, &dir.path().join("out"), 1);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 6") && err.contains("bath.beta"), "{err}");
}

#[test]
fn unknown_subcommand_exits_one() {
    let o = Command::new(env!("CARGO_BIN_EXE_openqx")).args(["relax", "--config", "x.toml"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = config("boson");
    for dir in [&a, &b] {
        assert_eq!(openqx("evolve", &cfg, dir.path(), 2).status.code(), Some(0));
    }
    for f in ["populations.csv", "audit.csv", "coherences.csv", "rho.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}
