//! Prompt templates, rendering and response parsing.
//!
//! Templates live as text assets under `templates/` and are compiled in. A
//! directory of same-named `.txt` files can override any of them. Placeholder
//! syntax follows Python's `str.format`: `{name}` substitutes a binding, `{{`
//! and `}}` produce literal braces.
//!
//! | asset | used by |
//! |---|---|
//! | `system` | every request |
//! | `seed_analysis` | seed analysis |
//! | `init_variant` + `output_format` | initial population |
//! | `pc_reflection` | PC reflection |
//! | `pc_synthesis` + `pc_requirements` + `output_format` | PC synthesis |
//! | `sc_reflection`, `sc_synthesis` | SC phases |
//! | `pm_single` | single-stage PM |
//! | `pm_reflection`, `pm_synthesis` | two-stage PM |
//! | `pwc_reflection`, `pwc_comprehensive`, `pwc_synthesis` | PWC phases |
//! | `summary` | post-generation description |
//! | `external_knowledge` | `{external_knowledge}` binding |
//! | `rechat_preamble` | correction requests |
//! | `seed_python` | seed listing in external-executor mode |
//! | `dsl_format` | appended to code prompts in stage-language mode |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use gwevo_core::pipelines::dsl::{ParamKind, REGISTRY};
use gwevo_core::pipelines::SEED_DSL;
use serde::{Deserialize, Serialize};

pub type Bindings = BTreeMap<String, String>;

pub const ASSETS: &[(&str, &str)] = &[
    ("system", include_str!("../templates/system.txt")),
    ("seed_analysis", include_str!("../templates/seed_analysis.txt")),
    ("init_variant", include_str!("../templates/init_variant.txt")),
    ("pc_reflection", include_str!("../templates/pc_reflection.txt")),
    ("pc_synthesis", include_str!("../templates/pc_synthesis.txt")),
    ("pc_requirements", include_str!("../templates/pc_requirements.txt")),
    ("output_format", include_str!("../templates/output_format.txt")),
    ("sc_reflection", include_str!("../templates/sc_reflection.txt")),
    ("sc_synthesis", include_str!("../templates/sc_synthesis.txt")),
    ("pm_single", include_str!("../templates/pm_single.txt")),
    ("pm_reflection", include_str!("../templates/pm_reflection.txt")),
    ("pm_synthesis", include_str!("../templates/pm_synthesis.txt")),
    ("pwc_reflection", include_str!("../templates/pwc_reflection.txt")),
    ("pwc_comprehensive", include_str!("../templates/pwc_comprehensive.txt")),
    ("pwc_synthesis", include_str!("../templates/pwc_synthesis.txt")),
    ("external_knowledge", include_str!("../templates/external_knowledge.txt")),
    ("summary", include_str!("../templates/summary.txt")),
    ("rechat_preamble", include_str!("../templates/rechat_preamble.txt")),
    ("seed_python", include_str!("../templates/seed_python.txt")),
    ("dsl_format", include_str!("../templates/dsl_format.txt")),
];

/// Directions given to the eight initial variants, one each.
pub const INIT_VARIATIONS: [&str; 8] = [
    "Rework data conditioning: change how the strain is detrended and how the noise spectrum is estimated and smoothed before whitening.",
    "Rework the time-frequency representation: change window lengths and overlaps to trade time resolution against frequency resolution.",
    "Exploit the two detectors jointly: replace the independent per-channel power with a statistic that rewards coherent structure across H1 and L1.",
    "Make thresholds adaptive: derive trigger thresholds from robust noise statistics instead of fixed multiples of the median.",
    "Emphasize transient morphology: favour short, chirp-like excursions over broadband power changes when ranking candidates.",
    "Tighten timing: produce narrower, data-driven timing uncertainties for each trigger.",
    "Suppress non-stationary noise: add mechanisms that down-weight stretches whose spectrum drifts or that contain glitches.",
    "Simplify aggressively: remove any stage or parameter that does not clearly help and tune the remaining ones.",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    SeedAnalysis,
    Init,
    PcReflection,
    PcSynthesis,
    ScReflection,
    ScSynthesis,
    PmSingle,
    PmReflection,
    PmSynthesis,
    PwcReflection,
    PwcComprehensive,
    PwcSynthesis,
    Summary,
}

/// Which configured model answers a request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelRole {
    Generation,
    Reflection,
}

impl PromptKind {
    pub const ALL: [PromptKind; 13] = [
        PromptKind::SeedAnalysis,
        PromptKind::Init,
        PromptKind::PcReflection,
        PromptKind::PcSynthesis,
        PromptKind::ScReflection,
        PromptKind::ScSynthesis,
        PromptKind::PmSingle,
        PromptKind::PmReflection,
        PromptKind::PmSynthesis,
        PromptKind::PwcReflection,
        PromptKind::PwcComprehensive,
        PromptKind::PwcSynthesis,
        PromptKind::Summary,
    ];

    pub fn label(self) -> &'static str {
        match self {
            PromptKind::SeedAnalysis => "seed_analysis",
            PromptKind::Init => "init",
            PromptKind::PcReflection => "pc_reflection",
            PromptKind::PcSynthesis => "pc_synthesis",
            PromptKind::ScReflection => "sc_reflection",
            PromptKind::ScSynthesis => "sc_synthesis",
            PromptKind::PmSingle => "pm_single",
            PromptKind::PmReflection => "pm_reflection",
            PromptKind::PmSynthesis => "pm_synthesis",
            PromptKind::PwcReflection => "pwc_reflection",
            PromptKind::PwcComprehensive => "pwc_comprehensive",
            PromptKind::PwcSynthesis => "pwc_synthesis",
            PromptKind::Summary => "summary",
        }
    }

    /// Analysis prompts go to the reflection model, code prompts to the
    /// generation model.
    pub fn role(self) -> ModelRole {
        if self.produces_code() {
            ModelRole::Generation
        } else {
            ModelRole::Reflection
        }
    }

    /// Whether the response must carry a fenced candidate program.
    pub fn produces_code(self) -> bool {
        matches!(
            self,
            PromptKind::Init
                | PromptKind::PcSynthesis
                | PromptKind::ScSynthesis
                | PromptKind::PmSingle
                | PromptKind::PmSynthesis
                | PromptKind::PwcSynthesis
        )
    }

    fn parts(self) -> &'static [&'static str] {
        match self {
            PromptKind::SeedAnalysis => &["seed_analysis"],
            PromptKind::Init => &["init_variant", "output_format"],
            PromptKind::PcReflection => &["pc_reflection"],
            PromptKind::PcSynthesis => &["pc_synthesis", "pc_requirements", "output_format"],
            PromptKind::ScReflection => &["sc_reflection"],
            PromptKind::ScSynthesis => &["sc_synthesis"],
            PromptKind::PmSingle => &["pm_single"],
            PromptKind::PmReflection => &["pm_reflection"],
            PromptKind::PmSynthesis => &["pm_synthesis"],
            PromptKind::PwcReflection => &["pwc_reflection"],
            PromptKind::PwcComprehensive => &["pwc_comprehensive"],
            PromptKind::PwcSynthesis => &["pwc_synthesis"],
            PromptKind::Summary => &["summary"],
        }
    }

    /// Templates that spell out shallow / medium / deep guidance.
    fn depth_guided(self) -> bool {
        matches!(
            self,
            PromptKind::PcReflection
                | PromptKind::PcSynthesis
                | PromptKind::ScReflection
                | PromptKind::ScSynthesis
                | PromptKind::PwcReflection
                | PromptKind::PwcComprehensive
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DepthBand {
    Shallow,
    Medium,
    Deep,
}

impl DepthBand {
    pub fn of(depth: u32) -> Self {
        match depth {
            0..=2 => DepthBand::Shallow,
            3..=4 => DepthBand::Medium,
            _ => DepthBand::Deep,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            DepthBand::Shallow => "Shallow (Depth 1-2)",
            DepthBand::Medium => "Medium (Depth 3-4)",
            DepthBand::Deep => "Deep (Depth 5+)",
        }
    }
}

/// How candidates are expressed and executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodeMode {
    /// Stage programs run by the built-in executor.
    #[default]
    Dsl,
    /// Free-form code handed to an external command.
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnRole {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: TurnRole,
    pub content: String,
}

/// A fully rendered conversation ready for a generator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub kind: PromptKind,
    pub depth: u32,
    pub system: String,
    pub turns: Vec<Turn>,
    pub placeholders: Bindings,
}

impl PromptBundle {
    pub fn role(&self) -> ModelRole {
        self.kind.role()
    }

    pub fn last_user(&self) -> &str {
        self.turns.iter().rev().find(|t| t.role == TurnRole::User).map_or("", |t| &t.content)
    }

    /// Number of correction rounds already folded into the conversation.
    pub fn rechats(&self) -> usize {
        self.turns.iter().filter(|t| t.role == TurnRole::Assistant).count()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("missing placeholder `{0}`")]
    Missing(String),
    #[error("template `{template}` has a stray brace at byte {offset}")]
    Malformed { template: String, offset: usize },
    #[error("unknown template override `{0}`")]
    UnknownTemplate(String),
    #[error("empty {0}")]
    Empty(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Substitutes `{name}` placeholders; `{{` and `}}` are literal braces.
pub fn fill(template: &str, bindings: &Bindings) -> Result<String, PromptError> {
    fill_named("template", template, bindings)
}

fn fill_named(name: &str, template: &str, bindings: &Bindings) -> Result<String, PromptError> {
    let b = template.as_bytes();
    let malformed = |offset| PromptError::Malformed { template: name.to_string(), offset };
    let mut out = String::with_capacity(template.len());
    let (mut i, mut last) = (0, 0);
    while i < b.len() {
        match b[i] {
            b'{' | b'}' if b.get(i + 1) == Some(&b[i]) => {
                out.push_str(&template[last..=i]);
                i += 2;
                last = i;
            }
            b'{' => {
                let close = template[i + 1..].find('}').map(|j| i + 1 + j).ok_or_else(|| malformed(i))?;
                let key = &template[i + 1..close];
                if !is_identifier(key) {
                    return Err(malformed(i));
                }
                let value = bindings.get(key).ok_or_else(|| PromptError::Missing(key.to_string()))?;
                out.push_str(&template[last..i]);
                out.push_str(value);
                i = close + 1;
                last = i;
            }
            b'}' => return Err(malformed(i)),
            _ => i += 1,
        }
    }
    out.push_str(&template[last..]);
    Ok(out)
}

/// Placeholder names referenced by a template.
pub fn placeholders(template: &str) -> Vec<String> {
    let b = template.as_bytes();
    let mut names = Vec::new();
    let mut i = 0;
    while i < b.len() {
        if (b[i] == b'{' || b[i] == b'}') && b.get(i + 1) == Some(&b[i]) {
            i += 2;
            continue;
        }
        if b[i] == b'{' {
            if let Some(j) = template[i + 1..].find('}') {
                let key = &template[i + 1..i + 1 + j];
                if is_identifier(key) && !names.iter().any(|n| n == key) {
                    names.push(key.to_string());
                }
                i += j + 2;
                continue;
            }
        }
        i += 1;
    }
    names
}

fn is_identifier(s: &str) -> bool {
    let mut c = s.chars();
    c.next().is_some_and(|f| f.is_ascii_alphabetic() || f == '_') && c.all(|x| x.is_ascii_alphanumeric() || x == '_')
}

/// Bullet list of registered stages and their parameters.
pub fn stage_catalog() -> String {
    let mut s = String::new();
    for spec in REGISTRY {
        let _ = writeln!(s, "- {}: {}", spec.name, spec.summary);
        for p in spec.params {
            let kind = match p.kind {
                ParamKind::Real => "real",
                ParamKind::Integer => "integer",
                ParamKind::OddInteger => "odd integer",
                ParamKind::Flag => "flag 0/1",
            };
            let _ = writeln!(s, "    * {} ({kind}, {} to {}, default {})", p.name, p.min, p.max, p.default);
        }
    }
    s.trim_end().to_string()
}

/// The template set plus the fixed bindings shared by every prompt.
#[derive(Debug, Clone)]
pub struct PromptSet {
    templates: BTreeMap<String, String>,
    pub mode: CodeMode,
    pub max_depth: u32,
}

impl PromptSet {
    pub fn builtin(mode: CodeMode) -> Self {
        PromptSet {
            templates: ASSETS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            mode,
            max_depth: 10,
        }
    }

    /// Replaces templates by the `<name>.txt` files found in `dir`.
    pub fn with_overrides(mut self, dir: &Path) -> Result<Self, PromptError> {
        let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<Result<_, _>>()?;
        entries.sort_by_key(|e| e.file_name());
        for e in entries {
            let path = e.path();
            if path.extension().and_then(|x| x.to_str()) != Some("txt") {
                continue;
            }
            let name = path.file_stem().and_then(|x| x.to_str()).unwrap_or_default().to_string();
            if !self.templates.contains_key(&name) {
                return Err(PromptError::UnknownTemplate(name));
            }
            self.templates.insert(name, std::fs::read_to_string(&path)?);
        }
        Ok(self)
    }

    pub fn template(&self, name: &str) -> &str {
        &self.templates[name]
    }

    /// Bindings every template may use; caller bindings take precedence.
    pub fn defaults(&self) -> Bindings {
        let mut b = Bindings::new();
        let mut set = |k: &str, v: String| {
            b.insert(k.to_string(), v);
        };
        set("external_knowledge", self.template("external_knowledge").trim_end().to_string());
        set("max_depth", self.max_depth.to_string());
        set("func_name", "pipeline_v2".into());
        set("input_count", "3".into());
        set("joined_inputs", "strain_h1, strain_l1, times".into());
        set("output_count", "3".into());
        set("joined_outputs", "peak_times, peak_heights, peak_deltat".into());
        match self.mode {
            CodeMode::Dsl => {
                set(
                    "inout_inf",
                    "the program receives the H1 and L1 strain on a shared GPS time axis and must emit one trigger per candidate event with its GPS time, ranking statistic and timing tolerance".into(),
                );
                set(
                    "other_inf",
                    "express the pipeline in the stage language described under Candidate Language; only registered stages with parameters inside their ranges are accepted".into(),
                );
                set("prompt_seed_func", SEED_DSL.trim_end().to_string());
                set(
                    "prompt_other_inf",
                    "the seed whitens each channel by a smoothed Welch PSD, averages the squared spectrogram magnitudes of both detectors over frequency and picks peaks relative to the median of that series; window lengths are in samples".into(),
                );
            }
            CodeMode::External => {
                set(
                    "inout_inf",
                    "strain_h1 and strain_l1 are equal-length numpy arrays sampled on the GPS time stamps in times; return three equal-length arrays of trigger times, ranking statistics and timing uncertainties".into(),
                );
                set(
                    "other_inf",
                    "use numpy and scipy only and finish within the per-evaluation time limit".into(),
                );
                set("prompt_seed_func", self.template("seed_python").trim_end().to_string());
                set(
                    "prompt_other_inf",
                    "the seed whitens each channel by a smoothed Welch PSD (4096-sample Hann windows), averages the squared spectrogram magnitudes of both detectors over frequency and picks peaks relative to the median of that series".into(),
                );
            }
        }
        set(
            "prompt_inout_inf",
            "fitness is the area under the sensitive-distance curve over false-alarm rates between 4 and 1000 per month, so stronger separation of injected chirps from noise triggers raises it".into(),
        );
        b
    }

    /// Renders a single-turn conversation for `kind` at tree depth `depth`.
    pub fn render(&self, kind: PromptKind, depth: u32, bindings: &Bindings) -> Result<PromptBundle, PromptError> {
        let mut all = self.defaults();
        all.insert("depth".into(), depth.to_string());
        all.extend(bindings.iter().map(|(k, v)| (k.clone(), v.clone())));
        let mut text = String::new();
        for (i, part) in kind.parts().iter().enumerate() {
            if i > 0 {
                text.push('\n');
            }
            text.push_str(&fill_named(part, self.template(part), &all)?);
        }
        if kind.depth_guided() {
            let _ = write!(text, "\nDepth band for this request: {}\n", DepthBand::of(depth).label());
        }
        if kind.produces_code() && self.mode == CodeMode::Dsl {
            all.insert("stage_catalog".into(), stage_catalog());
            text.push('\n');
            text.push_str(&fill_named("dsl_format", self.template("dsl_format"), &all)?);
        }
        Ok(PromptBundle {
            kind,
            depth,
            system: self.template("system").trim_end().to_string(),
            turns: vec![Turn { role: TurnRole::User, content: text }],
            placeholders: all,
        })
    }

    /// Post-generation description request for a parsed candidate.
    pub fn summarize(&self, idea: &str, code: &str, depth: u32) -> Result<PromptBundle, PromptError> {
        if code.trim().is_empty() {
            return Err(PromptError::Empty("code"));
        }
        let b = Bindings::from([("algorithm".to_string(), idea.to_string()), ("code".to_string(), code.to_string())]);
        self.render(PromptKind::Summary, depth, &b)
    }

    /// Extends `prev` with the failed reply and a debugging request that
    /// repeats the original prompt followed by `report`.
    pub fn build_rechat(&self, prev: &PromptBundle, reply: &str, report: &str) -> PromptBundle {
        let original = prev.turns.first().map_or("", |t| t.content.as_str());
        let mut content = format!("{}{}", self.template("rechat_preamble"), original);
        if !report.is_empty() {
            let _ = write!(content, "\n\n## Error Report\n{report}");
        }
        let mut next = prev.clone();
        next.turns.push(Turn { role: TurnRole::Assistant, content: reply.to_string() });
        next.turns.push(Turn { role: TurnRole::User, content });
        next
    }
}

/// Design idea and candidate program extracted from a generator reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub design_idea: String,
    pub code: String,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message} (byte {offset})")]
pub struct ParseError {
    pub message: String,
    pub offset: usize,
}

struct Fence {
    start: usize,
    end: usize,
    body: String,
}

/// Fenced blocks in order. An unterminated fence is an error.
fn fences(raw: &str) -> Result<Vec<Fence>, ParseError> {
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(rel) = raw[from..].find("```") {
        let start = from + rel;
        let body_start = raw[start + 3..].find('\n').map_or(raw.len(), |j| start + 3 + j + 1);
        let Some(close) = raw.get(body_start..).and_then(|s| s.find("```")) else {
            return Err(ParseError { message: "unterminated code fence".into(), offset: start });
        };
        let end = body_start + close + 3;
        out.push(Fence { start, end, body: raw[body_start..body_start + close].trim().to_string() });
        from = end;
    }
    Ok(out)
}

/// First `{...}` span (non-greedy), trimmed of surrounding escapes.
fn first_brace_span(text: &str) -> Option<String> {
    let open = text.find('{')?;
    let close = text[open + 1..].find('}')? + open + 1;
    let inner = text[open + 1..close].trim().trim_end_matches('\\').trim();
    (!inner.is_empty()).then(|| inner.to_string())
}

fn first_docstring(code: &str) -> Option<String> {
    for q in ["\"\"\"", "'''"] {
        if let Some(a) = code.find(q) {
            if let Some(b) = code[a + 3..].find(q) {
                let s = code[a + 3..a + 3 + b].trim();
                if !s.is_empty() {
                    return Some(s.to_string());
                }
            }
        }
    }
    None
}

/// Extracts the design idea (first brace span outside code, else the first
/// docstring in the code) and the first fenced code block.
pub fn parse_response(raw: &str) -> Result<ParsedResponse, ParseError> {
    let blocks = fences(raw)?;
    let Some(first) = blocks.first() else {
        return Err(ParseError { message: "no fenced code block".into(), offset: raw.len() });
    };
    if first.body.is_empty() {
        return Err(ParseError { message: "empty code block".into(), offset: first.start });
    }
    let mut outside = String::with_capacity(raw.len());
    let mut last = 0;
    for f in &blocks {
        outside.push_str(&raw[last..f.start]);
        outside.push('\n');
        last = f.end;
    }
    outside.push_str(&raw[last..]);
    let idea = first_brace_span(&outside).or_else(|| first_docstring(&first.body)).ok_or_else(|| ParseError {
        message: "no design idea in braces or docstring".into(),
        offset: first.start,
    })?;
    Ok(ParsedResponse { design_idea: idea, code: first.body.clone(), raw: raw.to_string() })
}

/// Reflection text: the first brace span, or the whole trimmed reply.
pub fn parse_reflection(raw: &str) -> String {
    let outside = match fences(raw) {
        Ok(blocks) if !blocks.is_empty() => {
            let mut s = String::new();
            let mut last = 0;
            for f in &blocks {
                s.push_str(&raw[last..f.start]);
                last = f.end;
            }
            s.push_str(&raw[last..]);
            s
        }
        _ => raw.to_string(),
    };
    first_brace_span(&outside).unwrap_or_else(|| raw.trim().to_string())
}
