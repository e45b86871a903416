use std::time::Duration;

use nalgebra::DMatrix;
use optilime::blackbox::ExternalPredictor;
use optilime::toy;
use optilime::{explain, LimeConfig, PredictError, Predictor};

const TIMEOUT: Duration = Duration::from_secs(20);

/// Python server answering each row with `expr`, evaluated with the row bound
/// to `x` (a list of floats).
fn py_server(expr: &str) -> String {
    let program = format!(
        r#"import sys
while True:
    head = sys.stdin.readline()
    if not head:
        break
    b = int(head.split()[0])
    out = []
    for _ in range(b):
        x = [float(v) for v in sys.stdin.readline().split(",")]
        out.append(repr(float({expr})))
    sys.stdout.write("\n".join(out) + "\n")
    sys.stdout.flush()
"#
    );
    format!("python3 -c '{program}'")
}

fn batch(rows: &[&[f64]]) -> DMatrix<f64> {
    let d = rows[0].len();
    DMatrix::from_row_iterator(rows.len(), d, rows.iter().flat_map(|r| r.iter().copied()))
}

#[test]
fn identity_and_constant_servers() {
    let id = ExternalPredictor::spawn(&py_server("x[0]"), TIMEOUT).unwrap();
    let m = batch(&[&[1.5, 9.0], &[-0.25, 0.0], &[1e-7, 3.0]]);
    assert_eq!(id.predict(&m).unwrap(), vec![1.5, -0.25, 1e-7]);
    // several batches over one process
    let m2 = batch(&[&[42.0, 1.0]]);
    assert_eq!(id.predict(&m2).unwrap(), vec![42.0]);
    assert_eq!(id.predict(&DMatrix::zeros(0, 2)).unwrap(), Vec::<f64>::new());
    assert_eq!(id.descriptor(), format!("exec:{}", id.command()));

    let zero = ExternalPredictor::spawn(&py_server("0"), TIMEOUT).unwrap();
    assert_eq!(zero.predict(&m).unwrap(), vec![0.0; 3]);
}

fn poly_server(coefficients: &[f64]) -> String {
    // Horner from the highest power down
    let mut expr = String::from("0.0");
    for c in coefficients.iter().rev() {
        expr = format!("({expr}) * x[0] + ({c:?})");
    }
    py_server(&expr)
}

#[test]
fn wrapped_polynomial_matches_in_process_model() {
    let data = toy::canonical_dataset();
    let model = toy::build_toy_model(&data).unwrap();
    let server = ExternalPredictor::spawn(&poly_server(model.coefficients()), TIMEOUT).unwrap();
    let xs: Vec<f64> = (0..200).map(|i| -1.0 + 0.06 * i as f64).collect();
    let m = DMatrix::from_column_slice(xs.len(), 1, &xs);
    let remote = server.predict(&m).unwrap();
    let local = model.predict(&m).unwrap();
    for (a, b) in remote.iter().zip(&local) {
        assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{a} vs {b}");
    }

    let stats = data.compute_stats();
    let reference = data.row(toy::reference_row(&data)).unwrap();
    let cfg = LimeConfig::new(0.3, 1, 5);
    let names = data.feature_names().to_vec();
    let e_remote = explain(&server, &names, &stats, &reference, &cfg).unwrap();
    let e_local = explain(&model, &names, &stats, &reference, &cfg).unwrap();
    let (a, b) = (e_remote.features[0].coefficient, e_local.features[0].coefficient);
    assert!((a - b).abs() < 1e-6, "{a} vs {b}");
}

#[test]
fn silent_server_times_out_and_breaks() {
    let p = ExternalPredictor::spawn("cat > /dev/null", Duration::from_millis(300)).unwrap();
    let m = batch(&[&[1.0]]);
    assert!(matches!(p.predict(&m), Err(PredictError::Timeout(_))));
    assert!(matches!(p.predict(&m), Err(PredictError::Broken)));
}

#[test]
fn protocol_violations_are_reported() {
    let m = batch(&[&[1.0], &[2.0]]);

    let garbage = ExternalPredictor::spawn("while read line; do echo nope; done", TIMEOUT).unwrap();
    assert!(matches!(garbage.predict(&m), Err(PredictError::Protocol(_))));

    let exits = ExternalPredictor::spawn("head -n 2 > /dev/null; echo 1", TIMEOUT).unwrap();
    assert!(matches!(
        exits.predict(&m),
        Err(PredictError::ProcessExited {
            received: 1,
            expected: 2
        })
    ));

    let missing = ExternalPredictor::spawn("exec /nonexistent/predictor", TIMEOUT).unwrap();
    assert!(missing.predict(&m).is_err());
}

#[test]
fn extra_reply_lines_are_a_protocol_error() {
    // two unsolicited lines, already buffered before the first batch
    let p = ExternalPredictor::spawn("echo 7; echo 8; cat > /dev/null", TIMEOUT).unwrap();
    std::thread::sleep(Duration::from_millis(300));
    let m = batch(&[&[1.0]]);
    assert!(matches!(p.predict(&m), Err(PredictError::Protocol(_))));
}
