//! Text format for candidate pipelines.
//!
//! ```text
//! """Optional design note, kept as provenance."""
//! detrend_median(kernel=101)      # comments run to end of line
//! whiten_adaptive(default)
//! metric_coherent(nperseg=256, noverlap=128); trigger_multires()
//! ```
//!
//! Stages are separated by newlines or `;`. Parameters not mentioned take their
//! registered defaults. A pipeline is an optional detrending stage followed by
//! exactly one whitening, one metric and one trigger stage, in that order.
//! Text inside the first fenced block is used when the input contains one.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Parse or validation failure with a 1-based source position.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}, column {col}: {message}")]
pub struct DslError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Role {
    Detrend,
    Whiten,
    Metric,
    Trigger,
}

impl Role {
    fn label(self) -> &'static str {
        match self {
            Role::Detrend => "detrend",
            Role::Whiten => "whitening",
            Role::Metric => "metric",
            Role::Trigger => "trigger",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Real,
    Integer,
    OddInteger,
    Flag,
}

#[derive(Debug, Clone, Copy)]
pub struct ParamSpec {
    pub name: &'static str,
    pub default: f64,
    pub min: f64,
    pub max: f64,
    pub kind: ParamKind,
}

const fn real(name: &'static str, default: f64, min: f64, max: f64) -> ParamSpec {
    ParamSpec { name, default, min, max, kind: ParamKind::Real }
}

const fn int(name: &'static str, default: f64, min: f64, max: f64) -> ParamSpec {
    ParamSpec { name, default, min, max, kind: ParamKind::Integer }
}

const fn odd(name: &'static str, default: f64, min: f64, max: f64) -> ParamSpec {
    ParamSpec { name, default, min, max, kind: ParamKind::OddInteger }
}

const fn flag(name: &'static str, default: f64) -> ParamSpec {
    ParamSpec { name, default, min: 0.0, max: 1.0, kind: ParamKind::Flag }
}

#[derive(Debug, Clone, Copy)]
pub struct StageSpec {
    pub name: &'static str,
    pub role: Role,
    pub params: &'static [ParamSpec],
    pub summary: &'static str,
}

/// Every stage the executor knows, with tunables and their admissible ranges.
pub const REGISTRY: &[StageSpec] = &[
    StageSpec {
        name: "detrend_none",
        role: Role::Detrend,
        params: &[],
        summary: "pass the strain through unchanged",
    },
    StageSpec {
        name: "detrend_median",
        role: Role::Detrend,
        params: &[odd("kernel", 101.0, 1.0, 4097.0)],
        summary: "subtract a zero-padded running median",
    },
    StageSpec {
        name: "whiten_welch",
        role: Role::Whiten,
        params: &[
            int("nperseg", 4096.0, 16.0, 1_048_576.0),
            real("overlap", 0.5, 0.0, 0.95),
            int("smooth", 32.0, 1.0, 1024.0),
        ],
        summary: "divide by the square root of a moving-average-smoothed Hann Welch PSD",
    },
    StageSpec {
        name: "whiten_adaptive",
        role: Role::Whiten,
        params: &[
            real("win_div", 20.0, 1.0, 1000.0),
            real("win_min", 5.0, 0.01, 600.0),
            real("win_max", 30.0, 0.01, 600.0),
            real("tukey_alpha", 0.25, 0.0, 1.0),
            real("overlap", 0.75, 0.0, 0.95),
            real("alpha_base", 0.8, 0.0, 1.0),
            real("alpha_slope", 0.05, 0.0, 10.0),
            real("alpha_min", 0.75, 0.0, 1.0),
            real("alpha_max", 0.85, 0.0, 1.0),
            odd("savgol_window", 11.0, 3.0, 101.0),
            int("savgol_polyorder", 2.0, 1.0, 6.0),
            real("sigmoid_scale", 2.0, 0.0, 100.0),
            real("gain_rate", 0.5, 0.0, 100.0),
            real("gain_clip", 8.0, 0.01, 1000.0),
        ],
        summary: "Tukey-window Welch PSD with stationarity-adaptive exponential smoothing and a nonlinear spectral gain",
    },
    StageSpec {
        name: "metric_meanpower",
        role: Role::Metric,
        params: &[int("nperseg", 256.0, 8.0, 65536.0), int("noverlap", 128.0, 0.0, 65535.0)],
        summary: "frequency-averaged mean of the two channels' squared magnitude spectrograms",
    },
    StageSpec {
        name: "metric_coherent",
        role: Role::Metric,
        params: &[
            int("nperseg", 256.0, 8.0, 65536.0),
            int("noverlap", 128.0, 0.0, 65535.0),
            real("lambda_min", 1e-4, 0.0, 1e6),
            real("lambda_max", 1e-2, 0.0, 1e6),
            real("curv_linear", 0.1, 0.0, 100.0),
            real("curv_tanh", 5.0, 0.0, 100.0),
        ],
        summary: "cross-channel phase coherence weighted by regularised PSDs with curvature boosts",
    },
    StageSpec {
        name: "trigger_basic",
        role: Role::Trigger,
        params: &[
            real("height", 1.0, 0.0, 1e6),
            int("distance", 2.0, 1.0, 10000.0),
            real("prominence", 0.3, 0.0, 1e6),
            real("var", 10.0, 0.001, 1000.0),
        ],
        summary: "peaks above height*median with prominence*median, fixed timing tolerance",
    },
    StageSpec {
        name: "trigger_multires",
        role: Role::Trigger,
        params: &[
            real("threshold", 1.5, -100.0, 100.0),
            real("prominence", 0.8, 0.0, 100.0),
            int("distance", 2.0, 1.0, 10000.0),
            real("veto", 0.1, -100.0, 100.0),
            flag("veto_enabled", 1.0),
            int("uncertainty_window", 5.0, 1.0, 1000.0),
            real("uncertainty_floor", 0.01, 1e-6, 1000.0),
            int("max_width", 8.0, 1.0, 64.0),
        ],
        summary: "robust MAD threshold, curvature veto and Ricker-wavelet validation with local timing uncertainty",
    },
];

pub fn stage_spec(name: &str) -> Option<&'static StageSpec> {
    REGISTRY.iter().find(|s| s.name == name)
}

/// A stage with every parameter bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub params: BTreeMap<String, f64>,
}

impl Stage {
    pub fn spec(&self) -> &'static StageSpec {
        stage_spec(&self.name).expect("stages are validated on construction")
    }

    pub fn get(&self, key: &str) -> f64 {
        self.params[key]
    }

    pub fn get_usize(&self, key: &str) -> usize {
        self.params[key] as usize
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.name)?;
        for (i, (k, v)) in self.params.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{k}={}", format_number(*v))?;
        }
        write!(f, ")")
    }
}

/// Parsed, validated pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineDsl {
    pub stages: Vec<Stage>,
    pub provenance: String,
}

impl PipelineDsl {
    /// Fully expanded form: explicit detrend stage, every parameter spelled out
    /// in key order, canonical numerals, one stage per line. Two pipelines with
    /// equal canonical text behave identically.
    pub fn canonical(&self) -> String {
        let mut lines = Vec::with_capacity(4);
        if self.stage(Role::Detrend).is_none() {
            lines.push("detrend_none()".to_string());
        }
        lines.extend(self.stages.iter().map(Stage::to_string));
        lines.join("\n")
    }

    pub fn stage(&self, role: Role) -> Option<&Stage> {
        self.stages.iter().find(|s| s.spec().role == role)
    }

    pub fn stage_mut(&mut self, role: Role) -> Option<&mut Stage> {
        self.stages.iter_mut().find(|s| s.spec().role == role)
    }
}

fn format_number(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v}")
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    LParen,
    RParen,
    Comma,
    Eq,
    Sep,
    Doc(String),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn err(line: usize, col: usize, message: impl Into<String>) -> DslError {
    DslError { line, col, message: message.into() }
}

/// Returns the body of the first fenced block, with the line offset it starts at.
fn unfence(text: &str) -> (&str, usize) {
    let Some(open) = text.find("```") else {
        return (text, 0);
    };
    let after = &text[open + 3..];
    let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
    let body = &after[body_start..];
    let body = body.find("```").map_or(body, |end| &body[..end]);
    let offset = text[..open + 3 + body_start].matches('\n').count();
    (body, offset)
}

fn lex(text: &str, line_offset: usize) -> Result<Vec<Token>, DslError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut line, mut col) = (1 + line_offset, 1);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let push = |out: &mut Vec<Token>, tok| out.push(Token { tok, line: tl, col: tc });
        match c {
            '\n' => {
                push(&mut out, Tok::Sep);
                i += 1;
                line += 1;
                col = 1;
                continue;
            }
            ';' => push(&mut out, Tok::Sep),
            ' ' | '\t' | '\r' => {}
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                    col += 1;
                }
                continue;
            }
            '(' => push(&mut out, Tok::LParen),
            ')' => push(&mut out, Tok::RParen),
            ',' => push(&mut out, Tok::Comma),
            '=' => push(&mut out, Tok::Eq),
            '"' | '\'' => {
                let quote: String = std::iter::repeat_n(c, 3).collect();
                let rest: String = chars[i..].iter().collect();
                if !rest.starts_with(&quote) {
                    return Err(err(tl, tc, "unexpected quote; docstrings use triple quotes"));
                }
                let body = &rest[3..];
                let Some(end) = body.find(&quote) else {
                    return Err(err(tl, tc, "unterminated docstring"));
                };
                let content = &body[..end];
                push(&mut out, Tok::Doc(content.trim().to_string()));
                let consumed = 6 + content.chars().count();
                for ch in chars[i..i + consumed].iter() {
                    if *ch == '\n' {
                        line += 1;
                        col = 1;
                    } else {
                        col += 1;
                    }
                }
                i += consumed;
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                col += i - start;
                push(&mut out, Tok::Ident(word));
                continue;
            }
            c if c.is_ascii_digit() || c == '.' || c == '-' || c == '+' => {
                let start = i;
                i += 1;
                while i < chars.len() {
                    let d = chars[i];
                    let exp_sign =
                        (d == '-' || d == '+') && matches!(chars[i - 1], 'e' | 'E');
                    if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || d == '_' || exp_sign {
                        i += 1;
                    } else {
                        break;
                    }
                }
                let lit: String = chars[start..i].iter().filter(|&&d| d != '_').collect();
                let v: f64 = lit
                    .parse()
                    .map_err(|_| err(tl, tc, format!("malformed number `{lit}`")))?;
                if !v.is_finite() {
                    return Err(err(tl, tc, format!("number `{lit}` is not finite")));
                }
                col += i - start;
                push(&mut out, Tok::Number(v));
                continue;
            }
            other => return Err(err(tl, tc, format!("unexpected character `{other}`"))),
        }
        i += 1;
        col += 1;
    }
    out.push(Token { tok: Tok::Sep, line, col });
    Ok(out)
}

struct RawStage {
    name: String,
    line: usize,
    col: usize,
    args: Vec<(String, f64, usize, usize)>,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos.min(self.toks.len() - 1)]
    }

    fn next(&mut self) -> Token {
        let t = self.peek().clone();
        self.pos += 1;
        t
    }

    fn skip_seps(&mut self) {
        while self.pos < self.toks.len() && self.peek().tok == Tok::Sep {
            self.pos += 1;
        }
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<Token, DslError> {
        let t = self.next();
        if t.tok == want {
            Ok(t)
        } else {
            Err(err(t.line, t.col, format!("expected {what}")))
        }
    }

    fn stage(&mut self, name: String, line: usize, col: usize) -> Result<RawStage, DslError> {
        self.expect(Tok::LParen, "`(` after stage name")?;
        let mut args = Vec::new();
        self.skip_seps();
        if let Tok::Ident(w) = &self.peek().tok {
            if w == "default" && self.toks.get(self.pos + 1).is_some_and(|t| t.tok != Tok::Eq) {
                self.pos += 1;
                self.skip_seps();
                self.expect(Tok::RParen, "`)` after `default`")?;
                return Ok(RawStage { name, line, col, args });
            }
        }
        loop {
            self.skip_seps();
            let t = self.next();
            match t.tok {
                Tok::RParen => break,
                Tok::Ident(key) => {
                    self.expect(Tok::Eq, "`=` after parameter name")?;
                    let v = self.next();
                    let value = match v.tok {
                        Tok::Number(x) => x,
                        Tok::Ident(ref w) if w == "true" || w == "True" => 1.0,
                        Tok::Ident(ref w) if w == "false" || w == "False" => 0.0,
                        _ => return Err(err(v.line, v.col, format!("expected a number for `{key}`"))),
                    };
                    args.push((key, value, t.line, t.col));
                    self.skip_seps();
                    let sep = self.next();
                    match sep.tok {
                        Tok::Comma => continue,
                        Tok::RParen => break,
                        _ => return Err(err(sep.line, sep.col, "expected `,` or `)`")),
                    }
                }
                _ => return Err(err(t.line, t.col, "expected a parameter name or `)`")),
            }
        }
        Ok(RawStage { name, line, col, args })
    }
}

fn bind(raw: RawStage) -> Result<Stage, DslError> {
    let Some(spec) = stage_spec(&raw.name) else {
        let known: Vec<&str> = REGISTRY.iter().map(|s| s.name).collect();
        return Err(err(
            raw.line,
            raw.col,
            format!("unknown stage `{}` (known stages: {})", raw.name, known.join(", ")),
        ));
    };
    let mut params: BTreeMap<String, f64> =
        spec.params.iter().map(|p| (p.name.to_string(), p.default)).collect();
    let mut seen = Vec::new();
    for (key, value, line, col) in raw.args {
        let Some(p) = spec.params.iter().find(|p| p.name == key) else {
            let known: Vec<&str> = spec.params.iter().map(|p| p.name).collect();
            let hint = if known.is_empty() {
                "it takes no parameters".to_string()
            } else {
                format!("parameters: {}", known.join(", "))
            };
            return Err(err(line, col, format!("`{}` has no parameter `{key}` ({hint})", spec.name)));
        };
        if seen.contains(&key) {
            return Err(err(line, col, format!("parameter `{key}` given twice")));
        }
        check_value(p, value).map_err(|m| err(line, col, format!("{}: {m}", spec.name)))?;
        seen.push(key.clone());
        params.insert(key, value);
    }
    let stage = Stage { name: raw.name, params };
    check_stage(&stage).map_err(|m| err(raw.line, raw.col, format!("{}: {m}", spec.name)))?;
    Ok(stage)
}

fn check_value(p: &ParamSpec, v: f64) -> Result<(), String> {
    let integral = v.fract() == 0.0;
    match p.kind {
        ParamKind::Integer if !integral => {
            return Err(format!("`{}` must be an integer, got {v}", p.name))
        }
        ParamKind::OddInteger if !integral || (v as i64) % 2 == 0 => {
            return Err(format!("`{}` must be odd, got {v}", p.name))
        }
        ParamKind::Flag if v != 0.0 && v != 1.0 => {
            return Err(format!("`{}` must be 0 or 1, got {v}", p.name))
        }
        _ => {}
    }
    if v < p.min || v > p.max {
        return Err(format!("`{}` = {v} outside [{}, {}]", p.name, p.min, p.max));
    }
    Ok(())
}

/// Constraints linking several parameters of one stage.
fn check_stage(s: &Stage) -> Result<(), String> {
    let p = |k: &str| s.params[k];
    match s.name.as_str() {
        "metric_meanpower" | "metric_coherent" if p("noverlap") >= p("nperseg") => {
            Err("`noverlap` must be below `nperseg`".into())
        }
        "metric_coherent" if p("lambda_min") > p("lambda_max") => {
            Err("`lambda_min` must not exceed `lambda_max`".into())
        }
        "whiten_adaptive" if p("win_min") > p("win_max") => {
            Err("`win_min` must not exceed `win_max`".into())
        }
        "whiten_adaptive" if p("alpha_min") > p("alpha_max") => {
            Err("`alpha_min` must not exceed `alpha_max`".into())
        }
        "whiten_adaptive" if p("savgol_polyorder") >= p("savgol_window") => {
            Err("`savgol_polyorder` must be below `savgol_window`".into())
        }
        _ => Ok(()),
    }
}

/// Parses and validates pipeline text.
pub fn parse_dsl(text: &str) -> Result<PipelineDsl, DslError> {
    let (body, offset) = unfence(text);
    let toks = lex(body, offset)?;
    let end = toks.last().map(|t| (t.line, t.col)).unwrap_or((1, 1));
    let mut parser = Parser { toks, pos: 0 };
    let mut docs = Vec::new();
    let mut stages: Vec<(Stage, usize, usize)> = Vec::new();
    loop {
        parser.skip_seps();
        if parser.pos >= parser.toks.len() {
            break;
        }
        let t = parser.next();
        match t.tok {
            Tok::Doc(d) => docs.push(d),
            Tok::Ident(name) => {
                let raw = parser.stage(name, t.line, t.col)?;
                let after = parser.peek().clone();
                if after.tok != Tok::Sep {
                    return Err(err(after.line, after.col, "expected `;` or a new line after a stage"));
                }
                stages.push((bind(raw)?, t.line, t.col));
            }
            _ => return Err(err(t.line, t.col, "expected a stage name")),
        }
    }

    let mut last: Option<Role> = None;
    for (s, line, col) in &stages {
        let role = s.spec().role;
        if let Some(prev) = last {
            if role == prev {
                return Err(err(*line, *col, format!("more than one {} stage", role.label())));
            }
            if role < prev {
                return Err(err(
                    *line,
                    *col,
                    format!("{} stage `{}` must come before the {} stage", role.label(), s.name, prev.label()),
                ));
            }
        }
        last = Some(role);
    }
    for role in [Role::Whiten, Role::Metric, Role::Trigger] {
        if !stages.iter().any(|(s, _, _)| s.spec().role == role) {
            return Err(err(end.0, end.1, format!("missing {} stage", role.label())));
        }
    }
    Ok(PipelineDsl {
        stages: stages.into_iter().map(|(s, _, _)| s).collect(),
        provenance: docs.join("\n"),
    })
}
