//! Predictor backed by a child process speaking a line protocol.
//!
//! For each batch the engine writes a header line `B d`, then `B` lines of `d`
//! comma-separated reals, and flushes. The process answers with exactly `B`
//! lines, one real each. The exchange repeats until the engine closes the
//! process's stdin.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, TryRecvError};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;

use super::{PredictError, Predictor};

pub struct ExternalPredictor {
    command: String,
    timeout: Duration,
    process: Mutex<Session>,
}

struct Session {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    broken: bool,
}

impl ExternalPredictor {
    /// Launches `command` through `sh -c`. Batches are serialized on one process.
    pub fn spawn(command: &str, timeout: Duration) -> Result<Self, PredictError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| PredictError::Launch {
                command: command.to_owned(),
                source,
            })?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        Ok(Self {
            command: command.to_owned(),
            timeout,
            process: Mutex::new(Session {
                child,
                stdin,
                lines: rx,
                broken: false,
            }),
        })
    }

    pub fn command(&self) -> &str {
        &self.command
    }
}

/// Encodes one request batch.
pub fn encode_batch(points: &DMatrix<f64>) -> String {
    let mut out = format!("{} {}\n", points.nrows(), points.ncols());
    for r in 0..points.nrows() {
        for c in 0..points.ncols() {
            if c > 0 {
                out.push(',');
            }
            out.push_str(&points[(r, c)].to_string());
        }
        out.push('\n');
    }
    out
}

impl Session {
    fn exchange(&mut self, points: &DMatrix<f64>, timeout: Duration) -> Result<Vec<f64>, PredictError> {
        let stdin = self.stdin.as_mut().ok_or(PredictError::Broken)?;
        stdin.write_all(encode_batch(points).as_bytes())?;
        stdin.flush()?;

        let expected = points.nrows();
        let deadline = Instant::now() + timeout;
        let mut out = Vec::with_capacity(expected);
        while out.len() < expected {
            let remaining = deadline.saturating_duration_since(Instant::now());
            let line = match self.lines.recv_timeout(remaining) {
                Ok(line) => line?,
                Err(RecvTimeoutError::Timeout) => return Err(PredictError::Timeout(timeout)),
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(PredictError::ProcessExited {
                        received: out.len(),
                        expected,
                    })
                }
            };
            let value = line
                .trim()
                .parse::<f64>()
                .map_err(|_| PredictError::Protocol(format!("reply line {} is not a real: `{line}`", out.len() + 1)))?;
            out.push(value);
        }
        match self.lines.try_recv() {
            Err(TryRecvError::Empty) | Err(TryRecvError::Disconnected) => Ok(out),
            Ok(extra) => Err(PredictError::Protocol(format!(
                "more than {expected} reply lines (extra: `{}`)",
                extra.unwrap_or_default()
            ))),
        }
    }
}

impl Predictor for ExternalPredictor {
    fn predict(&self, points: &DMatrix<f64>) -> Result<Vec<f64>, PredictError> {
        if points.nrows() == 0 {
            return Ok(Vec::new());
        }
        let mut session = self.process.lock().unwrap_or_else(|e| e.into_inner());
        if session.broken {
            return Err(PredictError::Broken);
        }
        let result = session.exchange(points, self.timeout);
        if result.is_err() {
            // the stream may be out of sync; refuse further batches
            session.broken = true;
        }
        result
    }

    fn descriptor(&self) -> String {
        format!("exec:{}", self.command)
    }
}

impl Drop for ExternalPredictor {
    fn drop(&mut self) {
        let session = self.process.get_mut().unwrap_or_else(|e| e.into_inner());
        session.stdin.take();
        let deadline = Instant::now() + Duration::from_millis(500);
        while Instant::now() < deadline {
            match session.child.try_wait() {
                Ok(Some(_)) | Err(_) => return,
                Ok(None) => thread::sleep(Duration::from_millis(5)),
            }
        }
        let _ = session.child.kill();
        let _ = session.child.wait();
    }
}
