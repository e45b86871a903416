//! Server side of the external predictor line protocol for a polynomial model.

use std::io::{BufRead, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use optilime::PolynomialModel;

use crate::predictor::load_model;

pub fn run(model: &Path) -> Result<()> {
    let model = load_model(model)?;
    let stdin = std::io::stdin().lock();
    let stdout = std::io::stdout().lock();
    serve(&model, stdin, stdout)
}

/// Answers batches until end of input.
pub fn serve(model: &PolynomialModel, mut input: impl BufRead, mut output: impl Write) -> Result<()> {
    let mut line = String::new();
    let mut batch = 0usize;
    loop {
        line.clear();
        if input.read_line(&mut line)? == 0 {
            return Ok(());
        }
        batch += 1;
        let header = line.trim();
        let (rows, dim) = header
            .split_once(' ')
            .and_then(|(b, d)| Some((b.parse::<usize>().ok()?, d.trim().parse::<usize>().ok()?)))
            .with_context(|| format!("batch {batch}: malformed header `{header}`"))?;
        if dim != 1 {
            bail!("batch {batch}: polynomial model takes 1 feature, got {dim}");
        }
        let mut answers = String::new();
        for r in 0..rows {
            line.clear();
            if input.read_line(&mut line)? == 0 {
                bail!("batch {batch}: input ended after {r} of {rows} rows");
            }
            let x: f64 = line
                .trim()
                .parse()
                .with_context(|| format!("batch {batch}, row {}: `{}` is not a real", r + 1, line.trim()))?;
            answers.push_str(&model.eval(x).to_string());
            answers.push('\n');
        }
        output.write_all(answers.as_bytes())?;
        output.flush()?;
    }
}
