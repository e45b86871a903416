use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_optilime"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn optilime")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "optilime {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas")
}

fn assert_valid(schema: &str, doc: &Value) {
    let schema: Value = read_json(&schema_dir().join(format!("{schema}.schema.json")));
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator
        .iter_errors(doc)
        .map(|e| format!("{e} at {}", e.instance_path()))
        .collect();
    assert!(errors.is_empty(), "{schema}: {errors:#?}");
}

struct ToyFiles {
    _dir: tempfile::TempDir,
    root: PathBuf,
    csv: String,
    model: String,
    row: String,
}

fn toy() -> ToyFiles {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_owned();
    ok(&["toy", "--out", root.join("toy").to_str().unwrap()]);
    let doc = read_json(&root.join("toy/toy.json"));
    ToyFiles {
        csv: root.join("toy/toy.csv").display().to_string(),
        model: root.join("toy/toy.json").display().to_string(),
        row: doc["result"]["reference_row"].to_string(),
        root,
        _dir: dir,
    }
}

impl ToyFiles {
    fn args<'a>(&'a self, predictor: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
        let mut v = vec![
            "--data",
            &self.csv,
            "--target-column",
            "y",
            "--predictor",
            predictor,
            "--row",
            &self.row,
            "--num-samples",
            "2000",
        ];
        v.extend_from_slice(extra);
        v
    }

    fn out(&self, name: &str) -> String {
        self.root.join(name).display().to_string()
    }
}

#[test]
fn toy_outputs_follow_dgp_and_schema() {
    let t = toy();
    let csv = fs::read_to_string(&t.csv).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x,y"));
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let (x, y) = l.split_once(',').unwrap();
            (x.parse().unwrap(), y.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 20);
    for (x, y) in rows {
        assert!((x.sin() * x + 10.0 - y).abs() < 1e-12);
    }
    let doc = read_json(Path::new(&t.model));
    assert_valid("toy", &doc);
    assert_eq!(doc["result"]["degree"], 5);
    assert_eq!(doc["manifest"]["command"], "toy");
}

#[test]
fn explain_stability_scan_optimize_validate() {
    let t = toy();
    let predictor = format!("builtin:poly5:{}", t.model);

    let explain_out = t.out("e.json");
    ok(&[
        &["explain"][..],
        &t.args(&predictor, &["--kernel-width", "0.2", "--out", &explain_out]),
    ]
    .concat());
    let e = read_json(Path::new(&explain_out));
    assert_valid("explanation", &e);
    let inputs = e["manifest"]["inputs"].as_array().unwrap();
    assert_eq!(inputs.len(), 2, "data and model digests");
    let validator = jsonschema::validator_for(&read_json(&schema_dir().join("explanation.schema.json"))).unwrap();
    let mut bad = e.clone();
    bad["result"]["r_squared"] = 1.5.into();
    assert!(!validator.is_valid(&bad));
    let mut bad = e.clone();
    bad["schema"] = "optilime.stability".into();
    assert!(!validator.is_valid(&bad));

    let stab_out = t.out("s.json");
    ok(&[
        &["stability"][..],
        &t.args(
            &predictor,
            &["--kernel-width", "0.2", "--repetitions", "4", "--out", &stab_out],
        ),
    ]
    .concat());
    let s = read_json(Path::new(&stab_out));
    assert_valid("stability", &s);
    assert_eq!(s["result"]["explanations"].as_array().unwrap().len(), 4);

    let scan_dir = t.out("scan");
    ok(&[
        &["scan"][..],
        &t.args(&predictor, &["--steps", "6", "--repetitions", "3", "--out", &scan_dir]),
    ]
    .concat());
    assert_valid("scan", &read_json(&Path::new(&scan_dir).join("scan.json")));
    let csv = fs::read_to_string(Path::new(&scan_dir).join("scan.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("kw,r_squared,csi,vsi"));
    assert_eq!(csv.lines().count(), 7);

    let opt_out = t.out("o.json");
    ok(&[
        &["optimize"][..],
        &t.args(
            &predictor,
            &[
                "--preliminary",
                "4",
                "--iterations",
                "3",
                "--repetitions",
                "2",
                "--out",
                &opt_out,
            ],
        ),
    ]
    .concat());
    let o = read_json(Path::new(&opt_out));
    assert_valid("optimization", &o);
    assert_eq!(o["result"]["trace"].as_array().unwrap().len(), 7);
}

#[test]
fn explain_writes_stdout_without_out() {
    let t = toy();
    let predictor = format!("builtin:poly5:{}", t.model);
    let out = ok(&[&["explain"][..], &t.args(&predictor, &["--kernel-width", "0.3"])].concat());
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["schema"], "optilime.explanation");
}

#[test]
fn ridge_lowers_adherence_at_small_width() {
    let t = toy();
    let predictor = format!("builtin:poly5:{}", t.model);
    let r2 = |ridge: &str| {
        let out = ok(&[
            &["explain"][..],
            &t.args(&predictor, &["--kernel-width", "0.05", "--ridge", ridge, "--seed", "3"]),
        ]
        .concat());
        let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
        doc["result"]["r_squared"].as_f64().unwrap()
    };
    assert!(r2("1") < r2("0"));
}

#[test]
fn small_width_is_less_stable_than_large() {
    let t = toy();
    let predictor = format!("builtin:poly5:{}", t.model);
    let csi = |kw: &str| {
        let out = ok(&[
            &["stability"][..],
            &t.args(&predictor, &["--kernel-width", kw, "--seed", "1"]),
        ]
        .concat());
        let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
        doc["result"]["csi"].as_f64().unwrap()
    };
    assert!(csi("0.05") < csi("1.0"));
}

fn linear_fixture(dir: &Path) -> (String, String) {
    let csv = dir.join("lin.csv");
    let mut body = String::from("a,b\n");
    for i in 0..30 {
        body.push_str(&format!("{},{}\n", i as f64 * 0.1, (i * 7 % 11) as f64));
    }
    fs::write(&csv, body).unwrap();
    let script = dir.join("lin.py");
    fs::write(
        &script,
        "import sys\n\
         while True:\n\
         \x20   head = sys.stdin.readline()\n\
         \x20   if not head:\n\
         \x20       break\n\
         \x20   rows = [sys.stdin.readline() for _ in range(int(head.split()[0]))]\n\
         \x20   out = []\n\
         \x20   for r in rows:\n\
         \x20       a, b = (float(v) for v in r.split(','))\n\
         \x20       out.append(repr(2.0 * a - 0.5 * b + 1.0))\n\
         \x20   sys.stdout.write('\\n'.join(out) + '\\n')\n\
         \x20   sys.stdout.flush()\n",
    )
    .unwrap();
    (csv.display().to_string(), format!("exec:python3 {}", script.display()))
}

#[test]
fn external_linear_model_through_cli() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, predictor) = linear_fixture(dir.path());
    let base = [
        "--data",
        &csv,
        "--predictor",
        &predictor,
        "--point",
        "1.0,3.0",
        "--num-samples",
        "500",
    ];
    let out = ok(&[&["explain"][..], &base, &["--kernel-width", "0.5"]].concat());
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    let features = doc["result"]["features"].as_array().unwrap();
    let coef = |name: &str| {
        features.iter().find(|f| f["feature"] == name).unwrap()["coefficient"]
            .as_f64()
            .unwrap()
    };
    assert!((coef("a") - 2.0).abs() < 1e-9);
    assert!((coef("b") + 0.5).abs() < 1e-9);

    let out = ok(&[
        &["stability"][..],
        &base,
        &["--kernel-width", "0.5", "--repetitions", "4"],
    ]
    .concat());
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["result"]["csi"], 1.0);
    assert_eq!(doc["result"]["vsi"], 1.0);
}

#[test]
fn serve_speaks_the_protocol() {
    let t = toy();
    let mut child = bin()
        .args(["serve", "--model", &t.model])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(b"2 1\n0\n1\n").unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let doc = read_json(Path::new(&t.model));
    let c: Vec<f64> = doc["result"]["model"]["coefficients"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let text = String::from_utf8(out.stdout).unwrap();
    let values: Vec<f64> = text.lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(values.len(), 2);
    assert_eq!(values[0], c[0]);
    assert!((values[1] - c.iter().sum::<f64>()).abs() < 1e-9);
}

#[test]
fn failures_exit_nonzero_without_partial_output() {
    let t = toy();
    let predictor = format!("builtin:poly5:{}", t.model);
    let out_file = t.out("never.json");
    let cases: Vec<Vec<&str>> = vec![
        t.args("nonsense", &["--kernel-width", "0.3", "--out", &out_file]),
        t.args(
            "builtin:poly5:/does/not/exist",
            &["--kernel-width", "0.3", "--out", &out_file],
        ),
        t.args(&predictor, &["--kernel-width", "-1", "--out", &out_file]),
        t.args(
            &predictor,
            &["--kernel-width", "0.3", "--num-features", "2", "--out", &out_file],
        ),
        t.args("exec:exit 3", &["--kernel-width", "0.3", "--out", &out_file]),
    ];
    for args in cases {
        let out = run(&[&["explain"][..], &args].concat());
        assert!(!out.status.success(), "{args:?} should fail");
        assert!(!out.stderr.is_empty());
        assert!(!Path::new(&out_file).exists());
    }
    // both or neither reference flag
    let out = run(&[
        "explain",
        "--data",
        &t.csv,
        "--predictor",
        &predictor,
        "--kernel-width",
        "0.3",
    ]);
    assert!(!out.status.success());
    let out = run(&[
        "explain",
        "--data",
        "/does/not/exist.csv",
        "--predictor",
        &predictor,
        "--row",
        "0",
        "--kernel-width",
        "0.3",
    ]);
    assert!(!out.status.success());
}
