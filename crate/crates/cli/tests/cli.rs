use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn abrsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_abrsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("config.toml");
    fs::write(&p, body).unwrap();
    p.display().to_string()
}

#[test]
fn lists_scenarios() {
    let out = abrsim(&["--list-scenarios"]);
    assert!(out.status.success());
    let s = text(&out.stdout);
    for name in ["two_src_vbr", "parking_lot", "upstream_bottleneck", "transient"] {
        assert!(s.contains(name), "{s}");
    }
}

#[test]
fn run_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[[run]]\nscenario = \"transient\"\narch = \"nonvsvd\"\n\n[[run]]\nscenario = \"transient\"\narch = \"vsvd\"\npreset = \"D\"\n",
    );
    let out_dir = dir.path().join("out");
    let out = abrsim(&["run", &cfg, "--out", out_dir.to_str().unwrap(), "--workers", "2"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let table = text(&out.stdout);
    assert!(table.contains("convergence_time_ms"), "{table}");
    assert!(table.contains("nonvsvd"), "{table}");
    for d in ["transient__nonvsvd", "transient__D"] {
        for f in ["acr.csv", "queues.csv", "delivered.csv", "spec.toml"] {
            assert!(out_dir.join(d).join(f).is_file(), "{d}/{f}");
        }
    }

    let v = abrsim(&["--verify", out_dir.to_str().unwrap()]);
    assert!(v.status.success(), "{}", text(&v.stdout));
    assert!(text(&v.stdout).contains("verified 2 runs"));

    let summary = out_dir.join("summary.csv");
    let s = fs::read_to_string(&summary).unwrap();
    fs::write(&summary, s.replacen("throughput_kcells.vc1,", "throughput_kcells.vc1,1", 1)).unwrap();
    let v = abrsim(&["--verify", out_dir.to_str().unwrap()]);
    assert_eq!(v.status.code(), Some(1));
    assert!(text(&v.stdout).contains("MISMATCH"));
}

#[test]
fn parse_error_names_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[[run]]\nscenario = \"transient\"\narch = \"nonvsvd\"\ncolour = 1\n");
    let out = abrsim(&["run", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = text(&out.stderr);
    assert!(err.contains("line 4"), "{err}");
    assert!(err.contains("colour"), "{err}");
}

#[test]
fn validation_error_names_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[[run]]\nscenario = \"transient\"\narch = \"vsvd\"\npreset = \"Z\"\n");
    let out = abrsim(&["run", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("run[0].preset"), "{}", text(&out.stderr));
}

#[test]
fn missing_config_fails() {
    let out = abrsim(&["run", "/nonexistent/abrsim.toml"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn verify_of_missing_dir_fails() {
    let out = abrsim(&["--verify", "/nonexistent/out"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in fs::read_dir(&dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "toml") {
            abrsim_core::parse_config(&p).unwrap_or_else(|e| panic!("{e}"));
            n += 1;
        }
    }
    assert!(n >= 2);
}
