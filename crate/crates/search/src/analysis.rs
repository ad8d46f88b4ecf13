//! Run analytics: code normalization, population diversity and phase
//! transitions in the best-so-far fitness.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use gwevo_core::pipelines::parse_dsl;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Normalized {
    pub text: String,
    /// Not a valid stage program; only the textual clean-up was applied.
    pub flagged: bool,
}

/// Canonical form of a candidate. Stage programs get their exact canonical
/// text; anything else loses docstrings, `#` comments, redundant whitespace
/// and non-canonical numerals.
pub fn normalize_code(text: &str) -> Normalized {
    if let Ok(p) = parse_dsl(text) {
        return Normalized { text: p.canonical(), flagged: false };
    }
    let cleaned = canonical_numerals(&collapse_whitespace(&strip_comments(&strip_docstrings(text))));
    match parse_dsl(&cleaned) {
        Ok(p) => Normalized { text: p.canonical(), flagged: false },
        Err(_) => Normalized { text: cleaned, flagged: true },
    }
}

fn strip_docstrings(text: &str) -> String {
    let mut s = text.to_string();
    loop {
        let hit = ["\"\"\"", "'''"].iter().filter_map(|q| s.find(q).map(|i| (i, *q))).min();
        let Some((a, q)) = hit else { return s };
        let end = s[a + 3..].find(q).map_or(s.len(), |b| a + 3 + b + 3);
        s.replace_range(a..end, "");
    }
}

fn strip_comments(text: &str) -> String {
    text.lines().map(|l| l.split('#').next().unwrap_or("")).collect::<Vec<_>>().join("\n")
}

fn collapse_whitespace(text: &str) -> String {
    text.lines()
        .map(|l| l.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}

fn is_word(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_' || c == b'.'
}

/// Rewrites free-standing decimal literals in shortest round-trip form.
fn canonical_numerals(text: &str) -> String {
    let b = text.as_bytes();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < b.len() {
        let starts = b[i].is_ascii_digit() || (b[i] == b'.' && b.get(i + 1).is_some_and(u8::is_ascii_digit));
        if starts && (i == 0 || !is_word(b[i - 1])) {
            let mut j = i;
            while j < b.len() && b[j].is_ascii_digit() {
                j += 1;
            }
            if j < b.len() && b[j] == b'.' {
                j += 1;
                while j < b.len() && b[j].is_ascii_digit() {
                    j += 1;
                }
            }
            if j < b.len() && (b[j] == b'e' || b[j] == b'E') {
                let mut k = j + 1;
                if k < b.len() && (b[k] == b'+' || b[k] == b'-') {
                    k += 1;
                }
                if k < b.len() && b[k].is_ascii_digit() {
                    while k < b.len() && b[k].is_ascii_digit() {
                        k += 1;
                    }
                    j = k;
                }
            }
            if j == b.len() || !is_word(b[j]) {
                if let Ok(v) = text[i..j].parse::<f64>() {
                    if v.is_finite() {
                        let _ = write!(out, "{v}");
                        i = j;
                        continue;
                    }
                }
            }
            out.push_str(&text[i..j]);
            i = j;
            continue;
        }
        let ch = text[i..].chars().next().expect("char boundary");
        out.push(ch);
        i += ch.len_utf8();
    }
    out
}

/// Identifier, number and operator tokens of a normalized text.
pub fn tokens(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        if c.is_alphanumeric() || c == '_' || c == '.' {
            start.get_or_insert(i);
        } else {
            if let Some(s) = start.take() {
                out.push(&text[s..i]);
            }
            if !c.is_whitespace() {
                out.push(&text[i..i + c.len_utf8()]);
            }
        }
    }
    if let Some(s) = start {
        out.push(&text[s..]);
    }
    out
}

/// Natural-log entropy of the distinct-variant frequencies.
pub fn shannon_index<S: AsRef<str>>(population: &[S]) -> f64 {
    if population.is_empty() {
        return 0.0;
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for p in population {
        *counts.entry(p.as_ref()).or_default() += 1;
    }
    let n = population.len() as f64;
    let h: f64 = counts.values().map(|&c| c as f64 / n).map(|p| -p * p.ln()).sum();
    h + 0.0
}

pub const CID_EPSILON: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cid {
    pub value: f64,
    /// The centroid is numerically zero, so the value reflects the epsilon.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("embedding {index} has dimension {found}, expected {expected}")]
    Dimension { index: usize, found: usize, expected: usize },
    #[error("no embeddings")]
    Empty,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Mean distance to the centroid relative to the centroid's norm.
pub fn cid_index(embeddings: &[Vec<f64>]) -> Result<Cid, AnalysisError> {
    let first = embeddings.first().ok_or(AnalysisError::Empty)?;
    let d = first.len();
    for (index, e) in embeddings.iter().enumerate() {
        if e.len() != d {
            return Err(AnalysisError::Dimension { index, found: e.len(), expected: d });
        }
    }
    let n = embeddings.len() as f64;
    let mut centroid = vec![0.0; d];
    for e in embeddings {
        for (c, x) in centroid.iter_mut().zip(e) {
            *c += x / n;
        }
    }
    let cn = norm(&centroid);
    let spread = embeddings
        .iter()
        .map(|e| norm(&e.iter().zip(&centroid).map(|(x, c)| x - c).collect::<Vec<_>>()))
        .sum::<f64>()
        / n;
    Ok(Cid { value: spread / (cn + CID_EPSILON), degenerate: cn < 1e-9 })
}

/// Token-frequency embeddings over a shared sorted vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub tokens: Vec<String>,
}

impl Vocabulary {
    pub fn build<S: AsRef<str>>(texts: &[S]) -> Self {
        let set: BTreeSet<&str> = texts.iter().flat_map(|t| tokens(t.as_ref())).collect();
        Vocabulary { tokens: set.into_iter().map(str::to_string).collect() }
    }

    pub fn embed(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.tokens.len()];
        let toks = tokens(text);
        for t in &toks {
            if let Ok(i) = self.tokens.binary_search_by(|x| x.as_str().cmp(t)) {
                v[i] += 1.0;
            }
        }
        let total = toks.len().max(1) as f64;
        v.iter_mut().for_each(|x| *x /= total);
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseTransition {
    /// Position in the trajectory; the evaluation number in reports.
    pub index: usize,
    pub from: f64,
    pub to: f64,
    pub gain: f64,
}

pub const PT_THRESHOLD: f64 = 400.0;

/// Steps where the best-so-far fitness rises by at least `threshold`.
pub fn detect_phase_transitions(best_so_far: &[f64], threshold: f64) -> Vec<PhaseTransition> {
    best_so_far
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1] - w[0] >= threshold)
        .map(|(i, w)| PhaseTransition { index: i + 1, from: w[0], to: w[1], gain: w[1] - w[0] })
        .collect()
}

/// Running maximum; `None` entries carry the previous best.
pub fn best_so_far(fitness: &[Option<f64>]) -> Vec<f64> {
    let mut best = f64::NEG_INFINITY;
    fitness
        .iter()
        .map(|f| {
            if let Some(f) = f {
                best = best.max(*f);
            }
            best
        })
        .collect()
}

/// One evaluation as seen by the analysis: its fitness and code when it
/// produced a scored candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub eval: u64,
    pub fitness: Option<f64>,
    pub code: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub eval: u64,
    pub fitness: Option<f64>,
    pub best_so_far: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityPoint {
    pub eval: u64,
    pub window: usize,
    pub shannon: f64,
    pub cid: f64,
    pub cid_degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub window: usize,
    pub pt_threshold: f64,
    pub trajectory: Vec<TrajectoryPoint>,
    pub phase_transitions: Vec<PhaseTransition>,
    pub diversity: Vec<DiversityPoint>,
    /// Candidates that only received textual normalization.
    pub flagged: usize,
}

impl AnalysisReport {
    pub fn diversity_csv(&self) -> String {
        let mut s = String::from("eval,window,shannon,cid,cid_degenerate\n");
        for d in &self.diversity {
            let _ = writeln!(s, "{},{},{},{},{}", d.eval, d.window, d.shannon, d.cid, d.cid_degenerate);
        }
        s
    }
}

/// Fitness trajectory, phase transitions and windowed diversity over the
/// last `window` scored candidates at every evaluation.
pub fn analyze(points: &[EvalPoint], window: usize, pt_threshold: f64) -> AnalysisReport {
    let best = best_so_far(&points.iter().map(|p| p.fitness).collect::<Vec<_>>());
    let trajectory: Vec<TrajectoryPoint> =
        points.iter().zip(&best).map(|(p, &b)| TrajectoryPoint { eval: p.eval, fitness: p.fitness, best_so_far: b }).collect();
    let finite: Vec<f64> = best.iter().map(|&b| if b.is_finite() { b } else { 0.0 }).collect();
    let mut phase_transitions = detect_phase_transitions(&finite, pt_threshold);
    for pt in &mut phase_transitions {
        pt.index = points[pt.index].eval as usize;
    }

    let normalized: Vec<(u64, Normalized)> =
        points.iter().filter_map(|p| p.code.as_deref().map(|c| (p.eval, normalize_code(c)))).collect();
    let flagged = normalized.iter().filter(|n| n.1.flagged).count();
    let vocab = Vocabulary::build(&normalized.iter().map(|n| n.1.text.as_str()).collect::<Vec<_>>());
    let embeddings: Vec<Vec<f64>> = normalized.iter().map(|n| vocab.embed(&n.1.text)).collect();
    let window = window.max(1);
    let mut diversity = Vec::with_capacity(normalized.len());
    for end in 1..=normalized.len() {
        let start = end.saturating_sub(window);
        let texts: Vec<&str> = normalized[start..end].iter().map(|n| n.1.text.as_str()).collect();
        let cid = cid_index(&embeddings[start..end]).unwrap_or(Cid { value: 0.0, degenerate: true });
        diversity.push(DiversityPoint {
            eval: normalized[end - 1].0,
            window: end - start,
            shannon: shannon_index(&texts),
            cid: cid.value,
            cid_degenerate: cid.degenerate,
        });
    }
    AnalysisReport { window, pt_threshold, trajectory, phase_transitions, diversity, flagged }
}
