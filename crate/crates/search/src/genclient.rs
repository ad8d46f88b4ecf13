//! Candidate generators and the correction dialogue.
//!
//! [`LiveGenerator`] talks to any OpenAI-compatible chat-completion endpoint.
//! [`MockGenerator`] answers from a JSON script and needs no network; every
//! test and the acceptance suite use it.

use std::collections::HashMap;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use gwevo_core::datagen::derive_seed;
use gwevo_core::pipelines::dsl::{ParamKind, Role, Stage, REGISTRY};
use gwevo_core::pipelines::{parse_dsl, PipelineDsl, SEED_DSL};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::evaluator::{Evaluator, Failure, Scored};
use crate::prompts::{parse_reflection, parse_response, Bindings, ModelRole, ParsedResponse, PromptBundle, PromptKind, PromptSet, Turn, TurnRole};
use crate::tree::OpKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub generation_model: String,
    pub reflection_model: String,
    pub temperature: f64,
    pub base_url: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    /// Per-request timeout (s).
    pub timeout: f64,
    pub max_in_flight: usize,
    /// Attempts after the first one for transport errors, 429 and 5xx.
    pub max_retries: u32,
    pub backoff_ms: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            generation_model: "o3-mini-medium".into(),
            reflection_model: "deepseek-r1-250120".into(),
            temperature: 1.0,
            base_url: "https://api.openai.com/v1".into(),
            api_key_env: "GWEVO_API_KEY".into(),
            timeout: 600.0,
            max_in_flight: 4,
            max_retries: 3,
            backoff_ms: 2000,
        }
    }
}

impl GeneratorConfig {
    pub fn model(&self, role: ModelRole) -> &str {
        match role {
            ModelRole::Generation => &self.generation_model,
            ModelRole::Reflection => &self.reflection_model,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenError {
    #[error("request failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("{0}")]
    Config(String),
    #[error("mock script: {0}")]
    Script(String),
}

pub trait Generator: Send + Sync {
    fn generate(&self, bundle: &PromptBundle) -> Result<String, GenError>;

    /// Model name reported in transcripts.
    fn model(&self, role: ModelRole) -> String;
}

/// One request/response pair as recorded in `prompts.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub kind: PromptKind,
    pub depth: u32,
    pub model: String,
    pub system: String,
    pub turns: Vec<Turn>,
    pub response: String,
}

/// Sends `bundle` and records the exchange.
pub fn ask(gen: &dyn Generator, bundle: &PromptBundle, log: &mut Vec<Exchange>) -> Result<String, GenError> {
    let response = gen.generate(bundle)?;
    log.push(Exchange {
        kind: bundle.kind,
        depth: bundle.depth,
        model: gen.model(bundle.role()),
        system: bundle.system.clone(),
        turns: bundle.turns.clone(),
        response: response.clone(),
    });
    Ok(response)
}

// ---------------------------------------------------------------- live

struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut n = self.free.lock().expect("semaphore");
        while *n == 0 {
            n = self.cv.wait(n).expect("semaphore");
        }
        *n -= 1;
        SemaphoreGuard(self)
    }
}

struct SemaphoreGuard<'a>(&'a Semaphore);

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("semaphore") += 1;
        self.0.cv.notify_one();
    }
}

pub struct LiveGenerator {
    config: GeneratorConfig,
    agent: ureq::Agent,
    slots: Semaphore,
}

/// Replaces every occurrence of `secret` in `text`.
pub fn redact(text: &str, secret: &str) -> String {
    if secret.is_empty() {
        text.to_string()
    } else {
        text.replace(secret, "[REDACTED]")
    }
}

fn excerpt(s: &str) -> String {
    let mut out: String = s.chars().take(500).collect();
    if out.len() < s.len() {
        out.push_str("...");
    }
    out
}

impl LiveGenerator {
    pub fn new(config: GeneratorConfig) -> Result<Self, GenError> {
        if !(config.timeout > 0.0) {
            return Err(GenError::Config("generator timeout must be positive".into()));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout)))
            .http_status_as_error(false)
            .build()
            .into();
        let slots = Semaphore { free: Mutex::new(config.max_in_flight.max(1)), cv: Condvar::new() };
        Ok(LiveGenerator { config, agent, slots })
    }

    pub fn request_body(&self, bundle: &PromptBundle) -> serde_json::Value {
        let mut messages = vec![json!({"role": "system", "content": bundle.system})];
        for t in &bundle.turns {
            let role = match t.role {
                TurnRole::User => "user",
                TurnRole::Assistant => "assistant",
            };
            messages.push(json!({"role": role, "content": t.content}));
        }
        json!({
            "model": self.config.model(bundle.role()),
            "messages": messages,
            "temperature": self.config.temperature,
        })
    }

    fn once(&self, url: &str, key: &str, body: &serde_json::Value) -> Result<String, (bool, GenError)> {
        let transport = |m: String| (true, GenError::Transport { attempts: 1, message: redact(&m, key) });
        let mut resp = self
            .agent
            .post(url)
            .header("Authorization", &format!("Bearer {key}"))
            .send_json(body)
            .map_err(|e| transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            let retry = status == 429 || status >= 500;
            return Err((retry, GenError::Status { status, body: excerpt(&redact(&text, key)) }));
        }
        let v: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| (false, GenError::Transport { attempts: 1, message: format!("bad response JSON: {e}") }))?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| (false, GenError::Transport { attempts: 1, message: format!("no choices in response: {}", excerpt(&redact(&text, key))) }))
    }
}

impl Generator for LiveGenerator {
    fn generate(&self, bundle: &PromptBundle) -> Result<String, GenError> {
        let key = std::env::var(&self.config.api_key_env)
            .map_err(|_| GenError::Config(format!("environment variable {} is not set", self.config.api_key_env)))?;
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let body = self.request_body(bundle);
        let _slot = self.slots.acquire();
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.once(&url, &key, &body) {
                Ok(text) => return Ok(text),
                Err((true, e)) if attempt <= self.config.max_retries => {
                    log::warn!("generator attempt {attempt} failed: {e}");
                    std::thread::sleep(Duration::from_millis(self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(6))));
                }
                Err((_, GenError::Transport { message, .. })) => return Err(GenError::Transport { attempts: attempt, message }),
                Err((_, e)) => return Err(e),
            }
        }
    }

    fn model(&self, role: ModelRole) -> String {
        self.config.model(role).to_string()
    }
}

// ---------------------------------------------------------------- mock

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockChoice {
    pub weight: f64,
    pub response: String,
}

/// One scripted answer. A rule applies when every given key matches the
/// request; the first applicable rule wins. `responses` cycles by call index
/// and `choices` draws by weight.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockRule {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<PromptKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub call: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub responses: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub choices: Vec<MockChoice>,
}

/// Scripted generator behaviour. The response `@mutate` perturbs the last
/// stage program quoted in the prompt.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockScript {
    pub seed: u64,
    pub rules: Vec<MockRule>,
}

pub const MUTATE: &str = "@mutate";

impl MockScript {
    pub fn from_json(text: &str) -> Result<Self, GenError> {
        serde_json::from_str(text).map_err(|e| GenError::Script(e.to_string()))
    }

    /// Reflections and descriptions as brace text, programs by mutation.
    pub fn demo(seed: u64) -> Self {
        let text = |s: &str| MockRule { response: Some(s.to_string()), ..Default::default() };
        let mut rules = Vec::new();
        for kind in PromptKind::ALL {
            let mut r = match kind {
                PromptKind::SeedAnalysis => text("{The seed whitens both channels with a smoothed Welch PSD, averages spectrogram power over frequency and picks peaks relative to the median.}"),
                PromptKind::Summary => text("Stage program tuned from its parent; see the parameter list for the exact configuration."),
                k if k.produces_code() => text(MUTATE),
                _ => MockRule {
                    responses: vec![
                        "{Tighten the trigger thresholds and lengthen the PSD estimate to suppress noise triggers.}".into(),
                        "{Favour coherent power across detectors and shorter spectrogram windows for chirp tails.}".into(),
                        "{Smooth the noise estimate more aggressively and relax the peak prominence.}".into(),
                    ],
                    ..Default::default()
                },
            };
            r.kind = Some(kind);
            rules.push(r);
        }
        MockScript { seed, rules }
    }
}

pub struct MockGenerator {
    script: MockScript,
    calls: Mutex<HashMap<(PromptKind, u32), usize>>,
}

fn kind_index(kind: PromptKind) -> u64 {
    PromptKind::ALL.iter().position(|&k| k == kind).unwrap_or(0) as u64
}

impl MockGenerator {
    pub fn new(script: MockScript) -> Self {
        MockGenerator { script, calls: Mutex::new(HashMap::new()) }
    }

    /// Calls answered so far for `(kind, depth)`.
    pub fn calls(&self, kind: PromptKind, depth: u32) -> usize {
        self.calls.lock().expect("mock counter").get(&(kind, depth)).copied().unwrap_or(0)
    }

    pub fn total_calls(&self) -> usize {
        self.calls.lock().expect("mock counter").values().sum()
    }
}

impl Generator for MockGenerator {
    fn generate(&self, bundle: &PromptBundle) -> Result<String, GenError> {
        let idx = {
            let mut c = self.calls.lock().expect("mock counter");
            let e = c.entry((bundle.kind, bundle.depth)).or_insert(0);
            *e += 1;
            *e - 1
        };
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[self.script.seed, kind_index(bundle.kind), bundle.depth as u64, idx as u64]));
        let rule = self
            .script
            .rules
            .iter()
            .find(|r| r.kind.is_none_or(|k| k == bundle.kind) && r.depth.is_none_or(|d| d == bundle.depth) && r.call.is_none_or(|c| c == idx))
            .ok_or_else(|| GenError::Script(format!("no rule for {} at depth {} call {idx}", bundle.kind.label(), bundle.depth)))?;
        let text = if let Some(r) = &rule.response {
            r.clone()
        } else if !rule.responses.is_empty() {
            rule.responses[idx % rule.responses.len()].clone()
        } else if !rule.choices.is_empty() {
            let total: f64 = rule.choices.iter().map(|c| c.weight.max(0.0)).sum();
            let mut u = rng.random::<f64>() * total;
            let mut pick = rule.choices.len() - 1;
            for (i, c) in rule.choices.iter().enumerate() {
                if u < c.weight.max(0.0) {
                    pick = i;
                    break;
                }
                u -= c.weight.max(0.0);
            }
            rule.choices[pick].response.clone()
        } else {
            return Err(GenError::Script("rule has no response".into()));
        };
        Ok(if text.trim() == MUTATE { mutate_reply(bundle.last_user(), &mut rng) } else { text })
    }

    fn model(&self, role: ModelRole) -> String {
        match role {
            ModelRole::Generation => "mock-generation".into(),
            ModelRole::Reflection => "mock-reflection".into(),
        }
    }
}

/// Last fenced stage program in `prompt` that parses, ignoring the language
/// appendix example.
pub fn last_program(prompt: &str) -> Option<PipelineDsl> {
    let body = prompt.split("## Candidate Language").next().unwrap_or(prompt);
    let mut found = None;
    let mut rest = body;
    while let Some(a) = rest.find("```") {
        let after = &rest[a + 3..];
        let start = after.find('\n').map_or(after.len(), |j| j + 1);
        let Some(end) = after[start..].find("```") else { break };
        if let Ok(p) = parse_dsl(&after[start..start + end]) {
            found = Some(p);
        }
        rest = &after[start + end + 3..];
    }
    found
}

fn snap(v: f64, kind: ParamKind, min: f64, max: f64) -> f64 {
    let v = v.clamp(min, max);
    match kind {
        ParamKind::Real => v,
        ParamKind::Integer => v.round(),
        ParamKind::OddInteger => {
            let r = v.round();
            if r % 2.0 == 0.0 {
                if r + 1.0 <= max { r + 1.0 } else { r - 1.0 }
            } else {
                r
            }
        }
        ParamKind::Flag => v.round(),
    }
}

/// One random edit that keeps the program valid: swap a stage for another of
/// the same role, or rescale a parameter by a factor in [0.6, 1.6].
pub fn mutate_program<R: Rng>(p: &PipelineDsl, rng: &mut R) -> (PipelineDsl, String) {
    for _ in 0..32 {
        if let Some((q, what)) = try_edit(p, rng) {
            if let Ok(valid) = parse_dsl(&q.canonical()) {
                if valid.canonical() != p.canonical() {
                    return (valid, what);
                }
            }
        }
    }
    let mut same = p.clone();
    same.provenance.clear();
    (same, "keep the program unchanged".into())
}

fn try_edit<R: Rng>(p: &PipelineDsl, rng: &mut R) -> Option<(PipelineDsl, String)> {
    let mut out = p.clone();
    let i = rng.random_range(0..out.stages.len());
    let role = out.stages[i].spec().role;
    if rng.random::<f64>() < 0.2 && role != Role::Detrend {
        let alts: Vec<_> = REGISTRY.iter().filter(|s| s.role == role && s.name != out.stages[i].name).collect();
        let s = alts.get(rng.random_range(0..alts.len().max(1)))?;
        out.stages[i] = Stage { name: s.name.to_string(), params: s.params.iter().map(|q| (q.name.to_string(), q.default)).collect() };
        return Some((out, format!("replace stage {} by {} with default parameters", p.stages[i].name, s.name)));
    }
    let tunable: Vec<_> = out.stages[i].spec().params.iter().filter(|q| q.kind != ParamKind::Flag).collect();
    let spec = **tunable.get(rng.random_range(0..tunable.len().max(1)))?;
    let old = out.stages[i].params[spec.name];
    let base = if old == 0.0 { spec.min + 0.05 * (spec.max - spec.min) } else { old * (0.6 + rng.random::<f64>()) };
    let new = snap(base, spec.kind, spec.min, spec.max);
    out.stages[i].params.insert(spec.name.to_string(), new);
    let what = format!("set {}.{} from {old} to {new}", out.stages[i].name, spec.name);
    Some((out, what))
}

fn mutate_reply<R: Rng>(prompt: &str, rng: &mut R) -> String {
    let base = last_program(prompt).unwrap_or_else(|| parse_dsl(SEED_DSL).expect("seed parses"));
    let (p, what) = mutate_program(&base, rng);
    format!("{{Variant that would {what}.}}\n```\n{}\n```\n", p.canonical())
}

// ---------------------------------------------------------------- correction

/// Result of the generate, check, rechat cycle.
#[derive(Debug, Clone)]
pub struct Corrected<T> {
    /// Accepted response with the check's value, or the last failure.
    pub outcome: Result<(ParsedResponse, T), Failure>,
    /// Failures in call order.
    pub failures: Vec<Failure>,
    pub calls: usize,
    pub exchanges: Vec<Exchange>,
}

impl<T> Corrected<T> {
    pub fn rechats(&self) -> usize {
        self.calls.saturating_sub(1)
    }
}

/// Sends `bundle` and retries up to `max_rechats` times, each time extending
/// the conversation with the failed reply and a failure report. A generator
/// error aborts the whole loop.
pub fn correction_loop<T>(
    gen: &dyn Generator,
    prompts: &PromptSet,
    bundle: PromptBundle,
    max_rechats: usize,
    mut check: impl FnMut(&ParsedResponse) -> Result<T, Failure>,
) -> Result<Corrected<T>, GenError> {
    let mut bundle = bundle;
    let mut exchanges = Vec::new();
    let mut failures = Vec::new();
    let mut calls = 0;
    loop {
        let reply = ask(gen, &bundle, &mut exchanges)?;
        calls += 1;
        let res = parse_response(&reply).map_err(|e| Failure::parse(e.to_string())).and_then(|p| check(&p).map(|v| (p, v)));
        match res {
            Ok(ok) => return Ok(Corrected { outcome: Ok(ok), failures, calls, exchanges }),
            Err(f) => {
                failures.push(f.clone());
                if calls > max_rechats {
                    return Ok(Corrected { outcome: Err(f), failures, calls, exchanges });
                }
                bundle = prompts.build_rechat(&bundle, &reply, &f.report());
            }
        }
    }
}

/// A prompt to render: kind plus operator-specific bindings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub kind: PromptKind,
    pub bindings: Bindings,
}

/// Everything needed to re-issue one expansion: an optional analysis phase
/// whose reply becomes the `reflection` binding of the synthesis phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecipe {
    pub eval: u64,
    pub op: OpKind,
    pub variant: u8,
    pub focus: usize,
    pub inputs: Vec<usize>,
    pub depth: u32,
    pub reflection: Option<Phase>,
    pub synthesis: Phase,
}

#[derive(Debug, Clone)]
pub struct Expansion {
    pub reflection: String,
    pub corrected: Corrected<Arc<Scored>>,
    /// Generator calls including the analysis phase.
    pub gen_calls: usize,
}

/// Runs a recipe against the generator and evaluator.
pub fn execute_recipe(
    gen: &dyn Generator,
    prompts: &PromptSet,
    evaluator: &Evaluator,
    recipe: &EdgeRecipe,
    max_rechats: usize,
) -> Result<Expansion, GenError> {
    let render = |phase: &Phase, b: &Bindings| prompts.render(phase.kind, recipe.depth, b).map_err(|e| GenError::Config(e.to_string()));
    let mut log = Vec::new();
    let mut bindings = recipe.synthesis.bindings.clone();
    let mut reflection = String::new();
    if let Some(r) = &recipe.reflection {
        let b = render(r, &r.bindings)?;
        reflection = parse_reflection(&ask(gen, &b, &mut log)?);
        bindings.insert("reflection".into(), reflection.clone());
    }
    let bundle = render(&recipe.synthesis, &bindings)?;
    let mut corrected = correction_loop(gen, prompts, bundle, max_rechats, |p| evaluator.evaluate(&p.code))?;
    let gen_calls = log.len() + corrected.calls;
    log.append(&mut corrected.exchanges);
    corrected.exchanges = log;
    Ok(Expansion { reflection, corrected, gen_calls })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeStats {
    pub n: usize,
    pub reference: f64,
    /// Fitness per repetition; `None` when the repetition failed.
    pub samples: Vec<Option<f64>>,
    pub mean: Option<f64>,
    /// Sample standard deviation; zero for fewer than two samples.
    pub sd: Option<f64>,
    /// Repetitions whose fitness exceeds `reference`, over `n`.
    pub exceed_fraction: Option<f64>,
}

impl EdgeStats {
    pub fn from_samples(samples: Vec<Option<f64>>, reference: f64) -> Self {
        let n = samples.len();
        let ok: Vec<f64> = samples.iter().flatten().copied().collect();
        let mean = (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64);
        let sd = mean.map(|m| {
            if ok.len() < 2 {
                0.0
            } else {
                (ok.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (ok.len() - 1) as f64).sqrt()
            }
        });
        let exceed_fraction = (n > 0).then(|| ok.iter().filter(|&&f| f > reference).count() as f64 / n as f64);
        EdgeStats { n, reference, samples, mean, sd, exceed_fraction }
    }
}

/// Re-executes one recorded transition `n` times with fresh sampling.
pub fn rerun_edge(
    gen: &dyn Generator,
    prompts: &PromptSet,
    evaluator: &Evaluator,
    recipe: &EdgeRecipe,
    n: usize,
    reference: f64,
    max_rechats: usize,
) -> EdgeStats {
    let samples = (0..n)
        .map(|i| match execute_recipe(gen, prompts, evaluator, recipe, max_rechats) {
            Ok(x) => x.corrected.outcome.ok().map(|(_, s)| s.fitness()),
            Err(e) => {
                log::warn!("repetition {i}: {e}");
                None
            }
        })
        .collect();
    EdgeStats::from_samples(samples, reference)
}
