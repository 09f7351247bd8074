//! Built-in benchmark objectives and the child-process adapter for
//! external ones.
//!
//! The engine always maximizes; minimization problems are negated when the
//! objective is constructed. External objectives speak a line protocol:
//! one JSON object per candidate on stdin (dimension name to value), one
//! `{"value": <real>}` line on stdout per evaluation.

use crate::space::Candidate;
use serde::Deserialize;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("objective evaluation failed: {0}")]
pub struct EvalError(pub String);

/// A maximization target over candidates of a fixed arity.
pub trait Objective: Send + Sync {
    fn arity(&self) -> usize;

    fn evaluate(&self, candidate: &Candidate) -> Result<f64, EvalError>;

    /// Upper bound on concurrent evaluations the objective tolerates;
    /// `None` means unbounded.
    fn max_parallelism(&self) -> Option<usize> {
        None
    }
}

/// Griewank function of arbitrary dimension; the index inside the cosine
/// is 1-based.
pub fn griewank(x: &[f64]) -> f64 {
    let sum: f64 = x.iter().map(|v| v * v).sum();
    let prod: f64 = x
        .iter()
        .enumerate()
        .map(|(i, v)| (v / ((i + 1) as f64).sqrt()).cos())
        .product();
    1.0 + sum / 4000.0 - prod
}

/// Six-dimensional Griewank variant with per-dimension quadratic
/// coefficients `(i-1)/4000`, which makes the first coordinate's quadratic
/// term vanish and gives the dimensions strictly increasing influence.
pub fn griewank_mod6(x: &[f64]) -> f64 {
    assert_eq!(x.len(), 6, "griewank_mod6 takes exactly 6 coordinates");
    let mut sum = 0.0;
    let mut prod = 1.0;
    for (i, v) in x.iter().enumerate() {
        sum += (i as f64) / 4000.0 * v * v;
        prod *= (v / ((i + 1) as f64).sqrt()).cos();
    }
    1.0 + sum - prod
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BuiltinKind {
    NegGriewank,
    NegGriewankMod6,
}

/// A named built-in objective (already negated where the underlying
/// function is a minimization benchmark).
#[derive(Debug, Clone)]
pub struct BuiltinObjective {
    kind: BuiltinKind,
    arity: usize,
}

impl BuiltinObjective {
    /// Look up a built-in by name: `neg_griewank` (any arity) or
    /// `neg_griewank_mod6` (arity 6).
    pub fn by_name(name: &str, arity: usize) -> Result<Self, EvalError> {
        match name {
            "neg_griewank" => {
                if arity == 0 {
                    return Err(EvalError(
                        "neg_griewank needs at least one dimension".into(),
                    ));
                }
                Ok(Self {
                    kind: BuiltinKind::NegGriewank,
                    arity,
                })
            }
            "neg_griewank_mod6" => {
                if arity != 6 {
                    return Err(EvalError(format!(
                        "neg_griewank_mod6 is six-dimensional, got a {arity}-dimensional space"
                    )));
                }
                Ok(Self {
                    kind: BuiltinKind::NegGriewankMod6,
                    arity: 6,
                })
            }
            other => Err(EvalError(format!(
                "unknown built-in objective `{other}`; available: neg_griewank, neg_griewank_mod6"
            ))),
        }
    }
}

impl Objective for BuiltinObjective {
    fn arity(&self) -> usize {
        self.arity
    }

    fn evaluate(&self, candidate: &Candidate) -> Result<f64, EvalError> {
        let x = candidate
            .as_f64_vec()
            .ok_or_else(|| EvalError("built-in objectives need numeric coordinates".into()))?;
        if x.len() != self.arity {
            return Err(EvalError(format!(
                "expected {} coordinates, got {}",
                self.arity,
                x.len()
            )));
        }
        Ok(match self.kind {
            BuiltinKind::NegGriewank => -griewank(&x),
            BuiltinKind::NegGriewankMod6 => -griewank_mod6(&x),
        })
    }
}

/// Closure-backed objective, mostly for synthetic test functions.
pub struct FnObjective<F> {
    arity: usize,
    f: F,
}

impl<F> FnObjective<F>
where
    F: Fn(&Candidate) -> Result<f64, EvalError> + Send + Sync,
{
    pub fn new(arity: usize, f: F) -> Self {
        Self { arity, f }
    }
}

impl FnObjective<()> {
    /// Adapter for plain real-valued functions of the coordinate vector.
    pub fn on_reals<G>(
        arity: usize,
        g: G,
    ) -> FnObjective<impl Fn(&Candidate) -> Result<f64, EvalError> + Send + Sync>
    where
        G: Fn(&[f64]) -> f64 + Send + Sync,
    {
        FnObjective::new(arity, move |c: &Candidate| {
            let x = c
                .as_f64_vec()
                .ok_or_else(|| EvalError("non-numeric coordinate".into()))?;
            Ok(g(&x))
        })
    }
}

impl<F> Objective for FnObjective<F>
where
    F: Fn(&Candidate) -> Result<f64, EvalError> + Send + Sync,
{
    fn arity(&self) -> usize {
        self.arity
    }

    fn evaluate(&self, candidate: &Candidate) -> Result<f64, EvalError> {
        (self.f)(candidate)
    }
}

pub const DEFAULT_EXTERNAL_TIMEOUT: Duration = Duration::from_secs(3600);

#[derive(Debug, Deserialize)]
struct ResponseLine {
    value: f64,
}

struct Worker {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
}

impl Worker {
    fn spawn(command: &[String]) -> Result<Self, EvalError> {
        let mut child = Command::new(&command[0])
            .args(&command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| EvalError(format!("failed to spawn `{}`: {e}", command[0])))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            loop {
                let mut line = String::new();
                match reader.read_line(&mut line) {
                    Ok(0) => break,
                    Ok(_) => {
                        if tx.send(Ok(line)).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        });
        Ok(Self {
            child,
            stdin: Some(stdin),
            lines: rx,
        })
    }

    fn request(&mut self, line: &str, timeout: Duration) -> Result<f64, EvalError> {
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| EvalError("process stdin already closed".into()))?;
        stdin
            .write_all(line.as_bytes())
            .and_then(|_| stdin.flush())
            .map_err(|e| EvalError(format!("failed to write candidate: {e}")))?;
        let raw = match self.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => return Err(EvalError(format!("failed to read response: {e}"))),
            Err(RecvTimeoutError::Timeout) => {
                return Err(EvalError(format!(
                    "evaluation timed out after {:.1}s",
                    timeout.as_secs_f64()
                )))
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(EvalError("process exited without a response".into()))
            }
        };
        let parsed: ResponseLine = serde_json::from_str(raw.trim())
            .map_err(|e| EvalError(format!("malformed response line: {e}")))?;
        if !parsed.value.is_finite() {
            return Err(EvalError(format!("non-finite value {}", parsed.value)));
        }
        Ok(parsed.value)
    }

    /// Signal end of input; loop-style children exit on the EOF.
    fn close_stdin(&mut self) {
        self.stdin = None;
    }

    fn kill(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }

    /// Reap the child after the response, killing it past the deadline.
    fn finish(&mut self, deadline: Instant) -> Option<std::process::ExitStatus> {
        loop {
            match self.child.try_wait() {
                Ok(Some(status)) => return Some(status),
                Ok(None) => {
                    if Instant::now() >= deadline {
                        self.kill();
                        return None;
                    }
                    std::thread::sleep(Duration::from_millis(2));
                }
                Err(_) => return None,
            }
        }
    }
}

/// Objective evaluated by a child process speaking the line protocol.
///
/// By default one process is spawned per evaluation; persistent mode keeps
/// a single child alive and feeds it one request line per trial, which
/// also serializes evaluations.
pub struct ExternalObjective {
    command: Vec<String>,
    dim_names: Vec<String>,
    timeout: Duration,
    persistent: bool,
    max_parallelism: Option<usize>,
    worker: Mutex<Option<Worker>>,
}

impl ExternalObjective {
    pub fn new(command: Vec<String>, dim_names: Vec<String>) -> Result<Self, EvalError> {
        if command.is_empty() {
            return Err(EvalError("external objective command is empty".into()));
        }
        Ok(Self {
            command,
            dim_names,
            timeout: DEFAULT_EXTERNAL_TIMEOUT,
            persistent: false,
            max_parallelism: None,
            worker: Mutex::new(None),
        })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    /// Keep one child process alive across evaluations.
    pub fn persistent(mut self, persistent: bool) -> Self {
        self.persistent = persistent;
        self
    }

    pub fn with_max_parallelism(mut self, limit: Option<usize>) -> Self {
        self.max_parallelism = limit;
        self
    }

    fn request_line(&self, candidate: &Candidate) -> Result<String, EvalError> {
        if candidate.values.len() != self.dim_names.len() {
            return Err(EvalError(format!(
                "expected {} coordinates, got {}",
                self.dim_names.len(),
                candidate.values.len()
            )));
        }
        let mut map = serde_json::Map::new();
        for (name, value) in self.dim_names.iter().zip(&candidate.values) {
            let v = serde_json::to_value(value)
                .map_err(|e| EvalError(format!("unserializable value: {e}")))?;
            map.insert(name.clone(), v);
        }
        let mut line = serde_json::Value::Object(map).to_string();
        line.push('\n');
        Ok(line)
    }

    fn evaluate_once(&self, line: &str) -> Result<f64, EvalError> {
        let mut worker = Worker::spawn(&self.command)?;
        let result = worker.request(line, self.timeout);
        match result {
            Ok(value) => {
                worker.close_stdin();
                match worker.finish(Instant::now() + self.timeout) {
                    Some(status) if !status.success() => Err(EvalError(format!(
                        "process exited with {status} after responding"
                    ))),
                    _ => Ok(value),
                }
            }
            Err(e) => {
                // Attach the exit status when the child already died.
                let status = worker.child.try_wait().ok().flatten();
                worker.kill();
                match status {
                    Some(s) if !s.success() => {
                        Err(EvalError(format!("process exited with {s}: {e}")))
                    }
                    _ => Err(e),
                }
            }
        }
    }

    fn evaluate_persistent(&self, line: &str) -> Result<f64, EvalError> {
        let mut guard = self.worker.lock().unwrap_or_else(|p| p.into_inner());
        if guard.is_none() {
            *guard = Some(Worker::spawn(&self.command)?);
        }
        let worker = guard.as_mut().expect("worker just ensured");
        match worker.request(line, self.timeout) {
            Ok(value) => Ok(value),
            Err(e) => {
                // A dead or wedged worker is discarded; the next evaluation
                // respawns a fresh one.
                worker.kill();
                *guard = None;
                Err(e)
            }
        }
    }
}

impl Objective for ExternalObjective {
    fn arity(&self) -> usize {
        self.dim_names.len()
    }

    fn evaluate(&self, candidate: &Candidate) -> Result<f64, EvalError> {
        let line = self.request_line(candidate)?;
        if self.persistent {
            self.evaluate_persistent(&line)
        } else {
            self.evaluate_once(&line)
        }
    }

    fn max_parallelism(&self) -> Option<usize> {
        if self.persistent {
            Some(1)
        } else {
            self.max_parallelism
        }
    }
}

impl Drop for ExternalObjective {
    fn drop(&mut self) {
        if let Ok(mut guard) = self.worker.lock() {
            if let Some(worker) = guard.as_mut() {
                worker.kill();
            }
        }
    }
}

#[cfg(test)]
#[allow(clippy::excessive_precision)] // frozen oracle literals keep full digits
mod tests {
    use super::*;
    use crate::seed::stream;
    use crate::space::Value;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::Rng;

    fn candidate_of(values: Vec<Value>) -> Candidate {
        Candidate { values }
    }

    // Independent re-derivation of the Griewank formula, written against
    // the analytic form rather than the production code path.
    fn griewank_oracle(x: &[f64]) -> f64 {
        let mut acc = 1.0;
        for v in x {
            acc += v * v / 4000.0;
        }
        let mut prod = 1.0;
        for i in 1..=x.len() {
            prod *= (x[i - 1] / (i as f64).sqrt()).cos();
        }
        acc - prod
    }

    fn griewank_mod6_oracle(x: &[f64]) -> f64 {
        let mut acc = 1.0;
        for (i, v) in x.iter().enumerate().take(6) {
            acc += (i + 1 - 1) as f64 / 4000.0 * v * v;
        }
        let mut prod = 1.0;
        for i in 1..=6 {
            prod *= (x[i - 1] / (i as f64).sqrt()).cos();
        }
        acc - prod
    }

    #[test]
    fn griewank_is_zero_at_origin() {
        for d in [1, 2, 6, 10] {
            assert_eq!(griewank(&vec![0.0; d]), 0.0);
        }
    }

    #[test]
    fn griewank_local_structure_in_one_dimension() {
        // G1(pi) = 2 + pi^2/4000, frozen from a high-precision reference.
        assert_relative_eq!(
            griewank(&[std::f64::consts::PI]),
            2.0024674011002723,
            max_relative = 1e-14
        );
        assert!(griewank(&[0.0]) < griewank(&[std::f64::consts::PI]));
    }

    #[test]
    fn griewank_matches_independent_oracle() {
        let mut rng = stream(11, "griewank-oracle", 0);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-600.0..=600.0)).collect();
            assert_relative_eq!(griewank(&x), griewank_oracle(&x), max_relative = 1e-12);
        }
    }

    #[test]
    fn griewank_mod6_spot_values() {
        assert_eq!(griewank_mod6(&[0.0; 6]), 0.0);
        // 1 - cos(600): the first quadratic term has a zero coefficient.
        assert_relative_eq!(
            griewank_mod6(&[600.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
            1.9990234788329058,
            max_relative = 1e-13
        );
        // 451 - cos(600/sqrt(6)).
        assert_relative_eq!(
            griewank_mod6(&[0.0, 0.0, 0.0, 0.0, 0.0, 600.0]),
            450.00453310959605,
            max_relative = 1e-13
        );
    }

    #[test]
    fn griewank_mod6_matches_independent_oracle() {
        let mut rng = stream(12, "griewank-mod6-oracle", 0);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-600.0..=600.0)).collect();
            assert_relative_eq!(
                griewank_mod6(&x),
                griewank_mod6_oracle(&x),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn neg_griewank_mod6_never_exceeds_zero_on_samples() {
        let obj = BuiltinObjective::by_name("neg_griewank_mod6", 6).unwrap();
        let mut rng = stream(13, "mod6-bound", 0);
        for _ in 0..100_000 {
            let x: Vec<Value> = (0..6)
                .map(|_| Value::Real(rng.gen_range(-600.0..=600.0)))
                .collect();
            let v = obj.evaluate(&candidate_of(x)).unwrap();
            assert!(v <= 0.0, "found -G above zero: {v}");
        }
    }

    #[test]
    fn builtin_lookup_validates_arity() {
        assert!(BuiltinObjective::by_name("neg_griewank_mod6", 5).is_err());
        assert!(BuiltinObjective::by_name("neg_griewank", 3).is_ok());
        assert!(BuiltinObjective::by_name("no_such_fn", 2).is_err());
    }

    #[test]
    fn negation_preserves_the_argbest() {
        let f = |x: &[f64]| griewank(x);
        let mut rng = stream(21, "negation", 0);
        let points: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..3).map(|_| rng.gen_range(-10.0..=10.0)).collect())
            .collect();
        let argmin = points
            .iter()
            .enumerate()
            .min_by(|a, b| f(a.1).total_cmp(&f(b.1)))
            .unwrap()
            .0;
        let argmax_neg = points
            .iter()
            .enumerate()
            .max_by(|a, b| (-f(a.1)).total_cmp(&-f(b.1)))
            .unwrap()
            .0;
        assert_eq!(argmin, argmax_neg);
    }

    #[test]
    fn external_stub_success() {
        let obj = ExternalObjective::new(
            vec![
                "/bin/sh".into(),
                "-c".into(),
                r#"read line; printf '{"value": 1.0}\n'"#.into(),
            ],
            vec!["x".into()],
        )
        .unwrap();
        let v = obj.evaluate(&candidate_of(vec![Value::Real(0.5)])).unwrap();
        assert_abs_diff_eq!(v, 1.0);
    }

    #[test]
    fn external_stub_nonzero_exit_is_a_failure() {
        let obj = ExternalObjective::new(
            vec!["/bin/sh".into(), "-c".into(), "exit 3".into()],
            vec!["x".into()],
        )
        .unwrap();
        let err = obj
            .evaluate(&candidate_of(vec![Value::Real(0.5)]))
            .unwrap_err();
        assert!(err.0.contains("exit"), "unexpected error: {err}");
    }

    #[test]
    fn external_stub_malformed_response_is_a_failure() {
        let obj = ExternalObjective::new(
            vec![
                "/bin/sh".into(),
                "-c".into(),
                "read line; echo not-json".into(),
            ],
            vec!["x".into()],
        )
        .unwrap();
        assert!(obj.evaluate(&candidate_of(vec![Value::Real(0.5)])).is_err());
    }

    #[test]
    fn external_stub_timeout_kills_the_child() {
        let obj = ExternalObjective::new(
            vec!["/bin/sh".into(), "-c".into(), "sleep 30".into()],
            vec!["x".into()],
        )
        .unwrap()
        .with_timeout(Duration::from_millis(200));
        let start = Instant::now();
        let err = obj
            .evaluate(&candidate_of(vec![Value::Real(0.5)]))
            .unwrap_err();
        assert!(err.0.contains("timed out"), "unexpected error: {err}");
        assert!(start.elapsed() < Duration::from_secs(5));
    }

    #[test]
    fn loop_style_child_exits_promptly_in_per_evaluation_mode() {
        // Closing stdin after the response ends a while-read child without
        // waiting out the timeout.
        let obj = ExternalObjective::new(
            vec![
                "/bin/sh".into(),
                "-c".into(),
                r#"while read line; do printf '{"value": 2.5}\n'; done"#.into(),
            ],
            vec!["x".into()],
        )
        .unwrap()
        .with_timeout(Duration::from_secs(30));
        let start = Instant::now();
        let v = obj.evaluate(&candidate_of(vec![Value::Real(0.1)])).unwrap();
        assert_eq!(v, 2.5);
        assert!(start.elapsed() < Duration::from_secs(5));
    }

    #[test]
    fn persistent_mode_reuses_one_child() {
        let obj = ExternalObjective::new(
            vec![
                "/bin/sh".into(),
                "-c".into(),
                // Echo a counter so a respawn would reset the sequence.
                r#"i=0; while read line; do i=$((i+1)); printf '{"value": %d}\n' "$i"; done"#
                    .into(),
            ],
            vec!["x".into()],
        )
        .unwrap()
        .persistent(true);
        let c = candidate_of(vec![Value::Real(0.0)]);
        assert_eq!(obj.evaluate(&c).unwrap(), 1.0);
        assert_eq!(obj.evaluate(&c).unwrap(), 2.0);
        assert_eq!(obj.evaluate(&c).unwrap(), 3.0);
        assert_eq!(obj.max_parallelism(), Some(1));
    }
}
