//! `--predictor` specifications.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use optilime::{ExternalPredictor, PolynomialModel, Predictor};
use serde_json::Value;

use crate::output::Run;

#[derive(Debug, Clone, PartialEq)]
pub enum PredictorSpec {
    Polynomial { degree: usize, model: PathBuf },
    Exec { command: String },
}

impl PredictorSpec {
    pub fn parse(spec: &str) -> Result<Self> {
        if let Some(command) = spec.strip_prefix("exec:") {
            if command.trim().is_empty() {
                bail!("empty command in predictor spec `{spec}`");
            }
            return Ok(Self::Exec {
                command: command.to_owned(),
            });
        }
        if let Some(rest) = spec.strip_prefix("builtin:") {
            let (kind, file) = rest
                .split_once(':')
                .with_context(|| format!("expected builtin:<model>:<file>, got `{spec}`"))?;
            let degree = match kind.strip_prefix("poly").map(str::parse::<usize>) {
                Some(Ok(d)) if d >= 1 => d,
                _ => bail!("unknown builtin model `{kind}` (expected e.g. poly5)"),
            };
            if file.is_empty() {
                bail!("missing model file in `{spec}`");
            }
            return Ok(Self::Polynomial {
                degree,
                model: PathBuf::from(file),
            });
        }
        bail!("predictor spec must start with `builtin:` or `exec:`, got `{spec}`")
    }

    pub fn build(&self, run: &mut Run, timeout: Duration) -> Result<Box<dyn Predictor>> {
        match self {
            Self::Polynomial { degree, model } => {
                let bytes = run.read_input(model)?;
                let m = parse_model(&bytes).with_context(|| format!("loading model {}", model.display()))?;
                if m.degree() != *degree {
                    bail!(
                        "model {} has degree {}, spec asks for {degree}",
                        model.display(),
                        m.degree()
                    );
                }
                Ok(Box::new(m))
            }
            Self::Exec { command } => Ok(Box::new(ExternalPredictor::spawn(command, timeout)?)),
        }
    }
}

/// Accepts a bare model object or a `toy` output document carrying one.
pub fn parse_model(bytes: &[u8]) -> Result<PolynomialModel> {
    let v: Value = serde_json::from_slice(bytes)?;
    let inner = v.pointer("/result/model").cloned().unwrap_or(v);
    let m: PolynomialModel = serde_json::from_value(inner)?;
    // re-validate through the constructor
    Ok(PolynomialModel::new(m.degree(), m.coefficients().to_vec())?)
}

pub fn load_model(path: &Path) -> Result<PolynomialModel> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    parse_model(&bytes).with_context(|| format!("loading model {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_specs() {
        assert_eq!(
            PredictorSpec::parse("builtin:poly5:m.json").unwrap(),
            PredictorSpec::Polynomial {
                degree: 5,
                model: "m.json".into()
            }
        );
        assert_eq!(
            PredictorSpec::parse("exec:python3 serve.py --x 1").unwrap(),
            PredictorSpec::Exec {
                command: "python3 serve.py --x 1".into()
            }
        );
        for bad in [
            "poly5:m.json",
            "builtin:poly5",
            "builtin:tree:m",
            "builtin:poly0:m",
            "exec:  ",
            "builtin:poly5:",
        ] {
            assert!(PredictorSpec::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn model_from_bare_or_wrapped_json() {
        let bare = br#"{"degree":1,"coefficients":[1.0,2.0]}"#;
        assert_eq!(parse_model(bare).unwrap().eval(3.0), 7.0);
        let wrapped = br#"{"schema":"x","result":{"model":{"degree":1,"coefficients":[1.0,2.0]}}}"#;
        assert_eq!(parse_model(wrapped).unwrap().eval(3.0), 7.0);
        assert!(parse_model(br#"{"degree":2,"coefficients":[1.0]}"#).is_err());
    }
}
