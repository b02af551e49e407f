use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_fracmorse");

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(BIN)
        .arg(cmd)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .env_remove("FRACMORSE_OUT")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn lambdas(dir: &Path) -> Vec<f64> {
    fs::read_to_string(dir.join("spectrum.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Every file under `dir` and how many manifests list it.
fn manifest_references(dir: &Path) -> BTreeMap<String, usize> {
    fn walk(root: &Path, d: &Path, out: &mut Vec<String>) {
        for e in fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/"));
            }
        }
    }
    let mut all = Vec::new();
    walk(dir, dir, &mut all);
    let mut refs: BTreeMap<String, usize> = all.iter().map(|f| (f.clone(), 0)).collect();
    for f in &all {
        if !f.ends_with(".json") {
            continue;
        }
        let v = json(&dir.join(f));
        let mut entries = Vec::new();
        if let Some(files) = v.get("files").and_then(Value::as_array) {
            entries.extend(files.iter().cloned());
        }
        if let Some(file) = v.get("file") {
            entries.push(file.clone());
        }
        for e in entries {
            let path = e["path"].as_str().unwrap().to_string();
            let data = fs::read(dir.join(&path)).unwrap();
            assert_eq!(e["bytes"].as_u64().unwrap() as usize, data.len(), "{path}");
            *refs.entry(path).or_insert(0) += 1;
        }
        if let Some(sum) = v.get("checksum").and_then(Value::as_str) {
            // matrix manifest: the checksum covers the stiffness file
            let data = fs::read(dir.join("stiffness.csv")).unwrap();
            assert_eq!(sum, fracmorse::export::sha256_hex(&data));
            *refs.entry("stiffness.csv".into()).or_insert(0) += 1;
        }
    }
    refs.remove("manifest.json");
    refs
}

const SMALL_SOLVE: &str = "mesh.n = 32\noperator.s = 0.5\nreaction.kind = example_h2\nreaction.mu = 0.5*lambda_1\nreaction.k = 2\nsolver.n_starts = 16\n";

#[test]
fn missing_s_names_the_key() {
    let t = tempfile::tempdir().unwrap();
    let c = write_config(t.path(), "c.cfg", "mesh.n = 16\n");
    let o = run("spectrum", &c, &t.path().join("out"), &[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("operator.s"), "{}", stderr(&o));
}

#[test]
fn validation_errors_exit_2() {
    let t = tempfile::tempdir().unwrap();
    for body in [
        "mesh.n = 16\noperator.s = 0.5\nmesh.size = 3\n",
        "mesh.n = 16\noperator.s = 1.5\n",
        "mesh.n = 0\noperator.s = 0.5\n",
        "mesh.n = 16\noperator.s = 0.5\nweight.kind = table\nweight.values = 1, 2\n",
        "mesh.n = 16\noperator.s = 0.5\nreaction.mu = 0.5*lambda\n",
    ] {
        let c = write_config(t.path(), "c.cfg", body);
        let o = run("spectrum", &c, &t.path().join("out"), &[]);
        assert_eq!(code(&o), 2, "{body}: {}", stderr(&o));
    }
    let o = Command::new(BIN).arg("spectrum").output().unwrap();
    assert_eq!(code(&o), 2);
    let o = Command::new(BIN).arg("nonsense").output().unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn verify_rejects_k_max_above_n() {
    let t = tempfile::tempdir().unwrap();
    let c = write_config(t.path(), "c.cfg", "mesh.n = 8\noperator.s = 0.5\nspectrum.k_max = 9\n");
    assert_eq!(code(&run("verify", &c, &t.path().join("out"), &[])), 2);
}

#[test]
fn doubled_constant_weight_halves_the_spectrum() {
    let t = tempfile::tempdir().unwrap();
    let base = "mesh.n = 48\noperator.s = 0.4\nweight.kind = constant\nspectrum.k_max = 6\n";
    let c1 = write_config(t.path(), "c1.cfg", &format!("{base}weight.value = 1\n"));
    let c2 = write_config(t.path(), "c2.cfg", &format!("{base}weight.value = 2\n"));
    let (o1, o2) = (t.path().join("o1"), t.path().join("o2"));
    assert_eq!(code(&run("spectrum", &c1, &o1, &[])), 0);
    assert_eq!(code(&run("spectrum", &c2, &o2, &[])), 0);
    let (l1, l2) = (lambdas(&o1), lambdas(&o2));
    assert_eq!(l1.len(), 6);
    for (a, b) in l1.iter().zip(&l2) {
        assert!((b / a - 0.5).abs() < 1e-10, "{a} {b}");
    }
    // eigenvector files and report are listed in the run manifest
    assert!(manifest_references(&o1).values().all(|&c| c == 1));
    assert!(o1.join("eigenvector_0006.csv").exists());
}

#[test]
fn spectrum_regression_checksum() {
    let t = tempfile::tempdir().unwrap();
    let c = write_config(t.path(), "c.cfg", "mesh.n = 256\noperator.s = 0.5\nspectrum.k_max = 6\n");
    let out = t.path().join("out");
    assert_eq!(code(&run("spectrum", &c, &out, &[])), 0);
    let data = fs::read(out.join("spectrum.csv")).unwrap();
    assert_eq!(
        fracmorse::export::sha256_hex(&data),
        "ba8f59ed37f84ee6d5c7d21279124dbedb5598a2773a92664c11abd94ea429dc"
    );
    assert!((lambdas(&out)[0] - 7.280944718185822).abs() < 1e-12);
}

#[test]
fn solve_refuses_resonant_zero_slope() {
    let t = tempfile::tempdir().unwrap();
    for mu in ["lambda_1", "lambda_2"] {
        let body = format!("mesh.n = 32\noperator.s = 0.5\nreaction.kind = example_h2\nreaction.mu = {mu}\nreaction.k = 2\n");
        let c = write_config(t.path(), "c.cfg", &body);
        let out = t.path().join(format!("out_{mu}"));
        let o = run("solve", &c, &out, &[]);
        assert_eq!(code(&o), 4, "{mu}: {}", stderr(&o));
        assert!(stderr(&o).contains("iv_near_zero"));
        assert!(!out.join("summary.json").exists());
        let h = json(&out.join("hypotheses.json"));
        assert_eq!(h["all_passed"], Value::Bool(false));
    }
}

#[test]
fn force_runs_and_flags_the_summary() {
    let t = tempfile::tempdir().unwrap();
    let body = "mesh.n = 32\noperator.s = 0.5\nreaction.kind = example_h2\nreaction.mu = lambda_1\nreaction.k = 2\nsolver.n_starts = 8\nsolver.pipeline = newton_multistart\n";
    let c = write_config(t.path(), "c.cfg", body);
    let out = t.path().join("out");
    let o = run("solve", &c, &out, &["--force"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = json(&out.join("summary.json"));
    assert_eq!(s["hypotheses_ok"], Value::Bool(false));
    assert_eq!(s["forced"], Value::Bool(true));
}

#[test]
fn linear_reaction_fails_the_tail_clause() {
    let t = tempfile::tempdir().unwrap();
    let body = "mesh.n = 32\noperator.s = 0.5\nreaction.kind = linear\nreaction.slope = 0.5*lambda_1 + 0.5*lambda_2\nreaction.k = 1\n";
    let c = write_config(t.path(), "c.cfg", body);
    let o = run("solve", &c, &t.path().join("out"), &[]);
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("ii_divergence"));
}

#[test]
fn solve_writes_classified_solutions() {
    let t = tempfile::tempdir().unwrap();
    let c = write_config(t.path(), "c.cfg", SMALL_SOLVE);
    let out = t.path().join("out");
    let o = run("solve", &c, &out, &["--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = json(&out.join("summary.json"));
    assert_eq!(s["hypotheses_ok"], Value::Bool(true));
    assert_eq!(s["seed"], 3);
    let classes: Vec<&str> = s["sign_classes"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(classes.contains(&"positive") && classes.contains(&"negative"), "{classes:?}");
    let n = s["n_solutions"].as_u64().unwrap() as usize;
    assert_eq!(s["morse_indices"].as_array().unwrap().len(), n);
    for i in 1..=n {
        let m = json(&out.join(format!("solutions/solution_{i:03}.json")));
        for key in ["energy", "residual_euclid", "residual_dual", "morse_index", "nullity", "sign_class", "provenance", "seed", "cfg"] {
            assert!(m.get(key).is_some(), "missing {key}");
        }
        let csv = fs::read_to_string(out.join(format!("solutions/solution_{i:03}.csv"))).unwrap();
        assert!(csv.starts_with("node_index,x,u_value\n"));
        assert_eq!(csv.lines().count(), 33);
    }
    let refs = manifest_references(&out);
    assert!(refs.values().all(|&c| c == 1), "{refs:?}");
}

#[test]
fn solve_is_byte_deterministic() {
    let t = tempfile::tempdir().unwrap();
    let c = write_config(t.path(), "c.cfg", SMALL_SOLVE);
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    assert_eq!(code(&run("solve", &c, &a, &["--seed", "5"])), 0);
    assert_eq!(code(&run("solve", &c, &b, &["--seed", "5"])), 0);
    let files = manifest_references(&a);
    for f in files.keys().chain(std::iter::once(&"manifest.json".to_string())) {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn verify_passes_and_fault_injection_fails() {
    let t = tempfile::tempdir().unwrap();
    let base = "mesh.n = 32\noperator.s = 0.5\nweight.kind = ramp\nweight.slope = 1\nspectrum.k_max = 6\n";
    let good = write_config(t.path(), "g.cfg", base);
    let out = t.path().join("good");
    let o = run("verify", &good, &out, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let checks = json(&out.join("checks.json"));
    assert_eq!(checks["passed"], Value::Bool(true));
    assert_eq!(checks["checks"].as_array().unwrap().len(), 10);

    let bad = write_config(t.path(), "b.cfg", &format!("{base}verify.inject_fault = true\n"));
    let out = t.path().join("bad");
    let o = run("verify", &bad, &out, &[]);
    assert_eq!(code(&o), 5);
    let failing: Vec<String> = json(&out.join("checks.json"))["failing"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    assert!(
        failing.iter().any(|f| f == "symmetric_positive_definite" || f == "orthonormality"),
        "{failing:?}"
    );
    assert!(stderr(&o).contains("symmetric_positive_definite"));
}

#[test]
fn assemble_writes_sorted_triplets() {
    let t = tempfile::tempdir().unwrap();
    let c = write_config(t.path(), "c.cfg", "mesh.n = 6\noperator.s = 0.3\nweight.kind = bump\n");
    let out = t.path().join("out");
    assert_eq!(code(&run("assemble", &c, &out, &[])), 0);
    let csv = fs::read_to_string(out.join("stiffness.csv")).unwrap();
    let rows: Vec<(usize, usize)> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let mut it = l.split(',');
            (it.next().unwrap().parse().unwrap(), it.next().unwrap().parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 36);
    assert!(rows.windows(2).all(|w| w[0] < w[1]));
    let mass_rows = fs::read_to_string(out.join("mass.csv")).unwrap().lines().count() - 1;
    assert_eq!(mass_rows, 6 + 2 * 5);
    let m = json(&out.join("matrix_manifest.json"));
    assert_eq!(m["n"], 6);
    assert_eq!(m["s"], 0.3);
    let refs = manifest_references(&out);
    assert!(refs.values().all(|&c| c == 1), "{refs:?}");
}

#[test]
fn output_dir_from_environment() {
    let t = tempfile::tempdir().unwrap();
    let c = write_config(t.path(), "c.cfg", "mesh.n = 8\noperator.s = 0.5\noutput.dir = ignored\n");
    let env_out = t.path().join("from_env");
    let o = Command::new(BIN)
        .args(["assemble", "--config"])
        .arg(&c)
        .env("FRACMORSE_OUT", &env_out)
        .current_dir(t.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(env_out.join("manifest.json").exists());
    assert!(!t.path().join("ignored").exists());
}
