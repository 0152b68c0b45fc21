use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fockdimer"))
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("fockdimer-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

const UNIFORM: &str = r#"{"n": 3, "curve": {"genus": 0}, "angles": {"alpha": [0.0], "beta": [1.5707963267948966],
    "gamma": [0.7853981633974483], "delta": [2.356194490192345]}}"#;

fn write(dir: &PathBuf, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn stdout_json(out: &std::process::Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn partition_summary() {
    let d = scratch("partition");
    let cfg = write(&d, "m.json", UNIFORM);
    let out = bin()
        .args(["partition", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert!(v["results"]["rel_err"].as_f64().unwrap() < 1e-8);
    // 2^{n(n+1)} at n = 3
    assert!((v["results"]["det"].as_f64().unwrap() - 4096.0).abs() < 1e-8);
    assert_eq!(v["inputs_digest"].as_str().unwrap().len(), 64);
    let out = bin()
        .args(["--tol", "1e-30", "partition", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn config_errors_exit_2() {
    let d = scratch("errors");
    let unknown = write(
        &d,
        "u.json",
        &UNIFORM.replace("\"n\": 3", "\"n\": 3, \"extra\": 1"),
    );
    let out = bin()
        .args(["validate", "--config"])
        .arg(&unknown)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let order = write(
        &d,
        "o.json",
        &UNIFORM.replace("[0.7853981633974483]", "[2.0]"),
    );
    let out = bin()
        .args(["validate", "--config"])
        .arg(&order)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin()
        .args(["validate", "--config", "/nonexistent.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn arctic_circle_csv() {
    let d = scratch("arctic");
    let cfg = write(&d, "m.json", UNIFORM);
    let csv = d.join("curve.csv");
    let svg = d.join("curve.svg");
    let out = bin()
        .args(["arctic", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&csv)
        .arg("--svg")
        .arg(&svg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let mut r = csv::Reader::from_path(&csv).unwrap();
    let mut count = 0;
    for rec in r.records() {
        let rec = rec.unwrap();
        let (x, y): (f64, f64) = (rec[1].parse().unwrap(), rec[2].parse().unwrap());
        assert!(((x - 0.5).powi(2) + (y - 0.5).powi(2) - 0.25).abs() < 1e-10);
        count += 1;
    }
    assert_eq!(count, 2048);
    assert!(std::fs::read_to_string(&svg).unwrap().contains("<polyline"));
}

#[test]
fn outputs_are_reproducible() {
    let d = scratch("repro");
    let cfg = write(&d, "m.json", UNIFORM);
    let run = |tag: &str| {
        let s = d.join(format!("s{tag}.jsonl"));
        let p = d.join(format!("p{tag}.csv"));
        let out = bin()
            .args(["sample", "--seed", "7", "--count", "20", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&s)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0));
        let out = bin()
            .args(["probabilities", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&p)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0));
        (std::fs::read(s).unwrap(), std::fs::read(p).unwrap())
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(a, b);
    assert_eq!(String::from_utf8(a.0).unwrap().lines().count(), 20);
}

#[test]
fn inverse_pairs() {
    let d = scratch("inverse");
    let cfg = write(&d, "m.json", UNIFORM);
    let pairs = write(&d, "pairs.csv", "b_x,b_y,w_x,w_y\n1,0,0,1\n1,0,2,1\n");
    let mut vals = Vec::new();
    for method in ["residue", "direct", "quadrature", "homogeneous"] {
        let o = d.join(format!("{method}.csv"));
        let out = bin()
            .args(["inverse", "--method", method, "--config"])
            .arg(&cfg)
            .arg("--pairs")
            .arg(&pairs)
            .arg("--out")
            .arg(&o)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{method}");
        let mut r = csv::Reader::from_path(&o).unwrap();
        let v: Vec<f64> = r
            .records()
            .map(|x| x.unwrap()[4].parse().unwrap())
            .collect();
        vals.push(v);
    }
    for v in &vals[1..] {
        for (a, b) in v.iter().zip(&vals[0]) {
            assert!((a - b).abs() < 1e-9);
        }
    }
    let bad = write(&d, "bad.csv", "b_x,b_y,w_x,w_y\n0,1,1,0\n");
    let out = bin()
        .args(["inverse", "--config"])
        .arg(&cfg)
        .arg("--pairs")
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gauge_and_extension() {
    let d = scratch("gauge");
    let g = write(&d, "g.json", r#"{"biased": {"a": 1.0, "b": 0.5}}"#);
    let out = bin().args(["gauge", "--config"]).arg(&g).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert!((v["results"]["rho"].as_f64().unwrap() - 0.25).abs() < 1e-10);
    let small = write(&d, "m.json", &UNIFORM.replace("\"n\": 3", "\"n\": 2"));
    let out = bin()
        .args(["extended-check", "--depth", "1", "--config"])
        .arg(&small)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
}
