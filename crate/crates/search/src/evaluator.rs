//! Candidate evaluation: parse, execute on the training split, score.
//!
//! Failures fall into four classes that drive the correction dialogue:
//! unparseable output, execution errors, a silent pipeline (no trigger on the
//! segment holding the loudest injection) and exceeding the wall-clock limit.

use std::collections::HashMap;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use gwevo_core::datagen::{io::write_strain, Benchmark, Segment, Split, CHANNELS};
use gwevo_core::parallel::Execution;
use gwevo_core::pipelines::{parse_dsl, run_dsl, DetectionCatalog};
use gwevo_core::scoring::{evaluate_segments, EvalResult, Evaluation, FarRange};
use serde::{Deserialize, Serialize};

use crate::prompts::CodeMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Failure {
    #[error("parse error: {message}")]
    Parse { message: String },
    #[error("runtime error: {message}")]
    Runtime { message: String },
    #[error("no triggers on segment {segment}, which holds the loudest injection")]
    NoTrigger { segment: String },
    #[error("evaluation took {elapsed:.1} s, limit is {limit:.1} s")]
    Timeout { elapsed: f64, limit: f64 },
}

impl Failure {
    pub fn label(&self) -> &'static str {
        match self {
            Failure::Parse { .. } => "parse",
            Failure::Runtime { .. } => "runtime",
            Failure::NoTrigger { .. } => "no_trigger",
            Failure::Timeout { .. } => "timeout",
        }
    }

    /// Text appended to a correction request.
    pub fn report(&self) -> String {
        match self {
            Failure::NoTrigger { .. } => format!("{self}. The pipeline produced an empty catalog; check thresholds and the metric scale."),
            Failure::Timeout { .. } => format!("{self}. Reduce the computational cost."),
            _ => self.to_string(),
        }
    }

    pub fn parse(message: impl Into<String>) -> Self {
        Failure::Parse { message: message.into() }
    }
}

/// A successful evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    /// Canonical program text (raw code for external candidates).
    pub code: String,
    pub result: EvalResult,
    pub background: DetectionCatalog,
    pub foreground: DetectionCatalog,
}

impl Scored {
    pub fn fitness(&self) -> f64 {
        self.result.auc
    }
}

/// Subprocess contract for free-form candidates. Each argument may contain
/// `{candidate}` (file holding the code), `{input}` (directory with `H1.f64`,
/// `L1.f64` and their JSON sidecars) and `{output}` (CSV catalog path the
/// process must write). Exit status zero means the catalog was written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalExecutor {
    pub argv: Vec<String>,
}

impl ExternalExecutor {
    fn run(&self, code_path: &std::path::Path, h1: &gwevo_core::dsp::SampledSeries, l1: &gwevo_core::dsp::SampledSeries, deadline: Instant) -> Result<DetectionCatalog, Failure> {
        let runtime = |m: String| Failure::Runtime { message: m };
        let dir = tempfile::tempdir().map_err(|e| runtime(e.to_string()))?;
        let input = dir.path().join("input");
        write_strain(&input, CHANNELS[0], h1, 0).map_err(|e| runtime(e.to_string()))?;
        write_strain(&input, CHANNELS[1], l1, 0).map_err(|e| runtime(e.to_string()))?;
        let output = dir.path().join("catalog.csv");
        let subst = |a: &String| {
            a.replace("{candidate}", &code_path.display().to_string())
                .replace("{input}", &input.display().to_string())
                .replace("{output}", &output.display().to_string())
        };
        let args: Vec<String> = self.argv.iter().map(subst).collect();
        let Some((prog, rest)) = args.split_first() else {
            return Err(runtime("empty executor command".into()));
        };
        let mut child = Command::new(prog)
            .args(rest)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| runtime(format!("cannot start `{prog}`: {e}")))?;
        let status = loop {
            match child.try_wait().map_err(|e| runtime(e.to_string()))? {
                Some(s) => break s,
                None if Instant::now() >= deadline => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(Failure::Timeout { elapsed: f64::NAN, limit: f64::NAN });
                }
                None => std::thread::sleep(Duration::from_millis(5)),
            }
        };
        if !status.success() {
            let mut err = String::new();
            if let Some(mut s) = child.stderr.take() {
                let _ = std::io::Read::read_to_string(&mut s, &mut err);
            }
            let tail: String = err.chars().rev().take(2000).collect::<Vec<_>>().into_iter().rev().collect();
            return Err(runtime(format!("executor exited with {status}: {}", tail.trim())));
        }
        let f = std::fs::File::open(&output).map_err(|e| runtime(format!("no catalog written: {e}")))?;
        DetectionCatalog::read_csv(BufReader::new(f), &output.display().to_string()).map_err(|e| runtime(e.to_string()))
    }
}

pub struct Evaluator {
    bench: Arc<Benchmark>,
    split: Split,
    pub range: FarRange,
    /// Wall-clock limit per evaluation (s).
    pub t_max: f64,
    pub exec: Execution,
    pub mode: CodeMode,
    pub external: Option<ExternalExecutor>,
    cache: Mutex<HashMap<String, Result<Arc<Scored>, Failure>>>,
}

impl Evaluator {
    pub fn new(bench: Arc<Benchmark>, split: Split, range: FarRange, t_max: f64, exec: Execution) -> Self {
        Evaluator {
            bench,
            split,
            range,
            t_max,
            exec,
            mode: CodeMode::Dsl,
            external: None,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_external(mut self, executor: ExternalExecutor) -> Self {
        self.mode = CodeMode::External;
        self.external = Some(executor);
        self
    }

    pub fn benchmark(&self) -> &Benchmark {
        &self.bench
    }

    pub fn segments(&self) -> Vec<&Segment> {
        self.bench.split(self.split)
    }

    /// Scores `code`, reusing earlier results for identical programs.
    pub fn evaluate(&self, code: &str) -> Result<Arc<Scored>, Failure> {
        let key = match self.mode {
            CodeMode::Dsl => parse_dsl(code).map_err(|e| Failure::parse(e.to_string()))?.canonical(),
            CodeMode::External => code.trim().to_string(),
        };
        if let Some(hit) = self.cache.lock().expect("cache lock").get(&key) {
            return hit.clone();
        }
        let out = self.evaluate_uncached(&key);
        if !matches!(out, Err(Failure::Timeout { .. })) {
            self.cache.lock().expect("cache lock").insert(key, out.clone());
        }
        out
    }

    fn evaluate_uncached(&self, key: &str) -> Result<Arc<Scored>, Failure> {
        let segs = self.segments();
        let start = Instant::now();
        let ev = match (&self.mode, &self.external) {
            (CodeMode::External, Some(ext)) => self.run_external(ext, key, &segs, start)?,
            _ => {
                let p = parse_dsl(key).map_err(|e| Failure::parse(e.to_string()))?;
                evaluate_segments(&segs, self.bench.d_max, self.range, self.exec, |h, l| run_dsl(&p, h, l))
                    .map_err(|e| Failure::Runtime { message: e.to_string() })?
            }
        };
        let elapsed = start.elapsed().as_secs_f64();
        if elapsed > self.t_max {
            return Err(Failure::Timeout { elapsed, limit: self.t_max });
        }
        if let Some(name) = loudest_segment(&segs) {
            if ev.segments.iter().any(|s| s.name == name && s.foreground.is_empty()) {
                return Err(Failure::NoTrigger { segment: name });
            }
        }
        Ok(Arc::new(Scored { code: key.to_string(), background: ev.background(), foreground: ev.foreground(), result: ev.result }))
    }

    fn run_external(&self, ext: &ExternalExecutor, code: &str, segs: &[&Segment], start: Instant) -> Result<Evaluation, Failure> {
        let dir = tempfile::tempdir().map_err(|e| Failure::Runtime { message: e.to_string() })?;
        let code_path: PathBuf = dir.path().join("candidate.txt");
        std::fs::write(&code_path, code).map_err(|e| Failure::Runtime { message: e.to_string() })?;
        let deadline = start + Duration::from_secs_f64(self.t_max);
        let failure: Mutex<Option<Failure>> = Mutex::new(None);
        let ev = evaluate_segments(segs, self.bench.d_max, self.range, self.exec, |h, l| {
            ext.run(&code_path, h, l, deadline).map_err(|f| {
                let msg = f.to_string();
                failure.lock().expect("failure lock").get_or_insert(f);
                gwevo_core::Error::Evaluation(msg)
            })
        });
        match ev {
            Ok(ev) => Ok(ev),
            Err(e) => Err(match failure.into_inner().expect("failure lock") {
                Some(Failure::Timeout { .. }) => Failure::Timeout { elapsed: start.elapsed().as_secs_f64(), limit: self.t_max },
                Some(f) => f,
                None => Failure::Runtime { message: e.to_string() },
            }),
        }
    }
}

/// Name of the segment holding the injection with the highest optimal SNR.
pub fn loudest_segment(segs: &[&Segment]) -> Option<String> {
    let mut best: Option<(f64, &str)> = None;
    for s in segs {
        for i in &s.injections {
            if best.is_none_or(|(b, _)| i.snr_opt > b) {
                best = Some((i.snr_opt, &s.info.name));
            }
        }
    }
    best.map(|b| b.1.to_string())
}
