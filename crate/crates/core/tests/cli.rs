//! End-to-end runs of the command-line tool and checks of its output files.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

const BIN: &str = env!("CARGO_BIN_EXE_hm-galerkin");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn hm-galerkin")
}

fn write_config(dir: &Path, extra: &str) -> String {
    let text = format!(
        "[run]\nseed = 3\n\n[geometry]\nkind = disk\nsize = 1\n\n[basis]\nn_modes = 10\n\n\
         [density]\nprofile = power_law\nalpha = 1\neta = 0\ndelta = 0.01\n\n\
         [initial]\npreset = random_band\nmu_min = 0\nmu_max = 40\nw_norm = 1\n\n\
         [model]\neps = 0.05\n\n[integrator]\ndt = 0.01\nt_end = 0.2\nsample_every = 5\n\n\
         [monitors]\np_list = 2, 4\n\n[output]\ndir = out\nsnapshots = true\ntensor_dump = true\n{extra}"
    );
    let path = dir.join("run.ini");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn run_writes_consistent_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out_dir = dir.path().join("result");
    let o = run(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["steps_taken"], 20);
    let files = manifest["files"].as_array().unwrap();
    // monitors, 5 snapshots (steps 0, 5, 10, 15, 20) and the tensor dump
    assert_eq!(files.len(), 7);
    for f in files {
        let bytes = fs::read(out_dir.join(f["name"].as_str().unwrap())).unwrap();
        assert_eq!(f["size"].as_u64().unwrap(), bytes.len() as u64);
        assert_eq!(f["sha256"].as_str().unwrap(), hex::encode(Sha256::digest(&bytes)));
    }

    let csv = fs::read_to_string(out_dir.join("monitors.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,normV2,normW2,enstrophy2,lp2,lp4,linf,energy_residual,weak_residual"
    );
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 5);
    assert!(rows.windows(2).all(|w| w[1][0] > w[0][0]));
    // V-norm decays under dissipation at this amplitude
    assert!(rows.last().unwrap()[1] < rows[0][1]);
    let snap = fs::read(out_dir.join("snapshots/snap_00004.hms")).unwrap();
    assert_eq!(&snap[..4], b"HMS1");
    let dump = fs::read(out_dir.join("tensor.hmt")).unwrap();
    assert_eq!(&dump[..4], b"HMT1");
}

#[test]
fn same_seed_reproduces_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let o = run(&["run", "--config", &cfg, "--out", d.to_str().unwrap(), "--threads", "2"]);
        assert!(o.status.success());
    }
    assert_eq!(
        fs::read(a.join("monitors.csv")).unwrap(),
        fs::read(b.join("monitors.csv")).unwrap()
    );
}

#[test]
fn osgood_reports_json() {
    let o = run(&["osgood", "--theta", "log"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["verdict"], "divergent");
    let o = run(&["osgood", "--theta", "power:1"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["verdict"], "convergent");
}

#[test]
fn basis_table_lists_square_modes() {
    let o = run(&["basis-table", "--geometry", "square", "--n", "3"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("1,1,1,"));
}

#[test]
fn bad_configs_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let good = fs::read_to_string(&cfg).unwrap();
    fs::write(&cfg, good.replace("eps = 0.05", "eps = 0.05\nviscosity = 1")).unwrap();
    let o = run(&["run", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("viscosity"));

    fs::write(&cfg, format!("{good}[model]\neps = 0.1\n")).unwrap();
    let o = run(&["run", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("more than once"));

    let text = good.replace("delta = 0.01", "delta = 0");
    fs::write(&cfg, text).unwrap();
    let o = run(&["run", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("regularised"));
}

#[test]
fn missing_config_is_an_io_error() {
    let o = run(&["run", "--config", "/nonexistent/run.ini"]);
    assert_eq!(o.status.code(), Some(1));
}
