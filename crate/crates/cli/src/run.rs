//! The search loop and its run directory.
//!
//! | file | content |
//! |---|---|
//! | `config.json` | the effective [`RunConfig`] |
//! | `run_log.jsonl` | one [`LogRecord`] per evaluation, seed first |
//! | `requests.jsonl` | one [`EdgeRecipe`] per expansion attempt |
//! | `prompts.jsonl` | every generator exchange, credentials redacted |
//! | `curves.jsonl` | FAR and sensitivity curves of every scored node |
//! | `tree_events.jsonl`, `tree.json` | tree mutation log and final export |
//! | `analysis.json`, `diversity.csv` | trajectory, phase transitions, diversity |
//! | `best.dsl`, `best_background.csv`, `best_foreground.csv` | elite program and its training catalogs |
//! | `best_eval.json` | elite scored on the held-out split |
//! | `timings.jsonl` | wall-clock per evaluation, only with `record_timings` |

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use gwevo_core::datagen::{Benchmark, Split};
use gwevo_core::parallel::{self, Execution};
use gwevo_core::pipelines::{parse_dsl, SEED_DSL};
use gwevo_core::scoring::EvalResult;
use gwevo_search::analysis::{analyze, EvalPoint};
use gwevo_search::evaluator::{Evaluator, Failure, Scored};
use gwevo_search::evolve::{choose_inputs, level_schedule, random_schedule, update_population, OpRequest, Population, Slot};
use gwevo_search::genclient::{ask, execute_recipe, redact, EdgeRecipe, Exchange, Expansion, GenError, Generator, LiveGenerator, MockGenerator, MockScript, Phase};
use gwevo_search::prompts::{parse_reflection, Bindings, CodeMode, PromptKind, PromptSet, INIT_VARIATIONS};
use gwevo_search::tree::{Candidate, NodeId, OpKind, SearchTree, TreeError, ROOT};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Backend, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Config(String),
    #[error("dataset: {0}")]
    Data(#[from] gwevo_core::Error),
    #[error("seed candidate failed: {0}")]
    Seed(Failure),
    #[error("initial variant {variant} failed after {attempts} request(s)")]
    InitFailed { variant: usize, attempts: usize },
    #[error("generator outage: {0}")]
    Outage(GenError),
    #[error("tree: {0}")]
    Tree(#[from] TreeError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// One evaluation in `run_log.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub eval: u64,
    /// 0 for the seed and the initial population, then one per expansion point.
    pub level: u32,
    /// Scheduled operator.
    pub op: OpKind,
    /// Operator actually run (a sibling crossover without siblings runs as PM).
    pub executed: OpKind,
    pub variant: u8,
    pub parent: Option<NodeId>,
    pub inputs: Vec<NodeId>,
    pub new_id: Option<NodeId>,
    pub fitness: Option<f64>,
    pub elite: NodeId,
    pub elite_fitness: f64,
    /// `ok` or `skip`.
    pub status: String,
    /// Failure classes in call order.
    pub failures: Vec<String>,
    pub rechats: usize,
    pub gen_calls: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PromptRecord {
    eval: u64,
    #[serde(flatten)]
    exchange: Exchange,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveRecord {
    pub eval: u64,
    pub node: NodeId,
    pub auc: f64,
    pub degenerate: bool,
    pub far: Vec<f64>,
    pub d_sens: Vec<f64>,
    pub thresholds: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BestEval {
    pub node: NodeId,
    pub split: Split,
    pub train_fitness: f64,
    pub result: Option<EvalResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub evaluations: u64,
    pub seed_fitness: f64,
    pub best: NodeId,
    pub best_fitness: f64,
}

struct Job {
    recipe: EdgeRecipe,
    scheduled: OpKind,
    level: u32,
}

struct JobResult {
    expansion: Expansion,
    description: String,
    summary: Vec<Exchange>,
    seconds: f64,
}

struct Logs {
    run: BufWriter<File>,
    requests: BufWriter<File>,
    prompts: BufWriter<File>,
    curves: BufWriter<File>,
    timings: Option<BufWriter<File>>,
}

impl Logs {
    fn create(dir: &Path, timings: bool) -> std::io::Result<Self> {
        let f = |n: &str| File::create(dir.join(n)).map(BufWriter::new);
        Ok(Logs {
            run: f("run_log.jsonl")?,
            requests: f("requests.jsonl")?,
            prompts: f("prompts.jsonl")?,
            curves: f("curves.jsonl")?,
            timings: if timings { Some(f("timings.jsonl")?) } else { None },
        })
    }

    fn flush(&mut self) -> std::io::Result<()> {
        for w in [&mut self.run, &mut self.requests, &mut self.prompts, &mut self.curves] {
            w.flush()?;
        }
        self.timings.as_mut().map_or(Ok(()), |w| w.flush())
    }

    fn timing(&mut self, eval: u64, seconds: f64) -> Result<(), RunError> {
        match &mut self.timings {
            Some(w) => line(w, &serde_json::json!({"eval": eval, "seconds": seconds})),
            None => Ok(()),
        }
    }
}

fn line<T: Serialize>(w: &mut impl Write, v: &T) -> Result<(), RunError> {
    serde_json::to_writer(&mut *w, v)?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Builds the generator named by the config.
pub fn make_generator(cfg: &RunConfig) -> Result<Box<dyn Generator>, RunError> {
    match cfg.backend {
        Backend::Mock => {
            let script = match &cfg.mock_script {
                Some(p) => MockScript::from_json(&fs::read_to_string(p)?).map_err(|e| RunError::Config(e.to_string()))?,
                None => MockScript::demo(cfg.seed),
            };
            Ok(Box::new(MockGenerator::new(script)))
        }
        Backend::Live => Ok(Box::new(LiveGenerator::new(cfg.generator.clone()).map_err(|e| RunError::Config(e.to_string()))?)),
    }
}

pub fn load_benchmark(cfg: &RunConfig) -> Result<Benchmark, RunError> {
    Ok(match &cfg.data_dir {
        Some(d) => Benchmark::open(d)?,
        None => Benchmark::synthetic(&cfg.dataset)?,
    })
}

pub fn prompt_set(cfg: &RunConfig) -> Result<PromptSet, RunError> {
    let mut p = PromptSet::builtin(cfg.code_mode);
    p.max_depth = cfg.tree.max_depth;
    if let Some(dir) = &cfg.templates {
        p = p.with_overrides(dir).map_err(|e| RunError::Config(e.to_string()))?;
    }
    Ok(p)
}

pub fn make_evaluator(cfg: &RunConfig, bench: Arc<Benchmark>, split: Split) -> Evaluator {
    let ev = Evaluator::new(bench, split, cfg.far_range, cfg.t_max, Execution::default());
    match (&cfg.code_mode, &cfg.executor) {
        (CodeMode::External, Some(x)) => ev.with_external(x.clone()),
        _ => ev,
    }
}

pub fn seed_code(cfg: &RunConfig, prompts: &PromptSet) -> String {
    match cfg.code_mode {
        CodeMode::Dsl => SEED_DSL.to_string(),
        CodeMode::External => prompts.template("seed_python").to_string(),
    }
}

/// Runs a full search with the generator implied by `cfg`.
pub fn run_search(cfg: &RunConfig) -> Result<RunSummary, RunError> {
    let gen = make_generator(cfg)?;
    run_search_with(cfg, gen.as_ref())
}

/// Runs a full search, writing the run directory to `cfg.output`. Partial
/// artifacts are written before an outage or an initialization failure is
/// reported.
pub fn run_search_with(cfg: &RunConfig, gen: &dyn Generator) -> Result<RunSummary, RunError> {
    cfg.validate().map_err(|e| RunError::Config(e.to_string()))?;
    let dir = cfg.output.clone();
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(cfg)?)?;
    let bench = Arc::new(load_benchmark(cfg)?);
    let prompts = prompt_set(cfg)?;
    let evaluator = make_evaluator(cfg, bench.clone(), Split::Train);
    let mut logs = Logs::create(&dir, cfg.record_timings)?;

    let seed_text = seed_code(cfg, &prompts);
    let start = Instant::now();
    let seed = evaluator.evaluate(&seed_text).map_err(RunError::Seed)?;
    let seed_secs = start.elapsed().as_secs_f64();
    let mut exchanges = Vec::new();
    let analysis = prompts
        .render(PromptKind::SeedAnalysis, 0, &Bindings::new())
        .map_err(|e| RunError::Config(e.to_string()))
        .and_then(|b| ask(gen, &b, &mut exchanges).map_err(RunError::Outage));
    let description = match analysis {
        Ok(text) => parse_reflection(&text),
        Err(e) => {
            logs.flush()?;
            return Err(e);
        }
    };
    let idea = match cfg.code_mode {
        CodeMode::Dsl => parse_dsl(&seed_text).map(|p| p.provenance).unwrap_or_default(),
        CodeMode::External => String::new(),
    };
    let root = Candidate { code: seed.code.clone(), idea, description, reflection: String::new() };
    let tree = SearchTree::new(cfg.tree, cfg.budget, root, seed.fitness())?;

    let mut run = Run {
        cfg,
        gen,
        prompts: &prompts,
        evaluator: &evaluator,
        tree,
        pop: Population::new(ROOT),
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        scores: HashMap::from([(ROOT, seed.clone())]),
        logs,
        next_eval: 1,
        points: vec![EvalPoint { eval: 0, fitness: Some(seed.fitness()), code: Some(seed.code.clone()) }],
        secret: std::env::var(&cfg.generator.api_key_env).unwrap_or_default(),
    };
    run.log_seed(&seed, seed_secs, exchanges)?;
    let outcome = run.search();
    let summary = run.finish(&dir, bench)?;
    outcome.map(|_| summary)
}

struct Run<'a> {
    cfg: &'a RunConfig,
    gen: &'a dyn Generator,
    prompts: &'a PromptSet,
    evaluator: &'a Evaluator,
    tree: SearchTree,
    pop: Population,
    rng: ChaCha8Rng,
    scores: HashMap<NodeId, Arc<Scored>>,
    logs: Logs,
    next_eval: u64,
    points: Vec<EvalPoint>,
    secret: String,
}

fn fmt_fitness(f: Option<f64>) -> String {
    f.map_or("n/a".to_string(), |f| format!("{f:.2}"))
}

impl Run<'_> {
    fn fitness(&self, id: NodeId) -> f64 {
        self.tree.node(id).fitness.unwrap_or(f64::NEG_INFINITY)
    }

    fn code(&self, id: NodeId) -> String {
        self.tree.node(id).candidate.code.clone()
    }

    fn describe(&self, id: NodeId) -> String {
        let c = &self.tree.node(id).candidate;
        if c.description.is_empty() { c.idea.clone() } else { c.description.clone() }
    }

    /// Reflection that produced the node, or its description.
    fn insight(&self, id: NodeId) -> String {
        let c = &self.tree.node(id).candidate;
        if c.reflection.is_empty() { self.describe(id) } else { c.reflection.clone() }
    }

    fn objective(&self, id: NodeId) -> String {
        fmt_fitness(self.tree.node(id).fitness)
    }

    fn log_seed(&mut self, seed: &Scored, secs: f64, exchanges: Vec<Exchange>) -> Result<(), RunError> {
        let rec = LogRecord {
            eval: 0,
            level: 0,
            op: OpKind::Seed,
            executed: OpKind::Seed,
            variant: 0,
            parent: None,
            inputs: vec![],
            new_id: Some(ROOT),
            fitness: Some(seed.fitness()),
            elite: ROOT,
            elite_fitness: seed.fitness(),
            status: "ok".into(),
            failures: vec![],
            rechats: 0,
            gen_calls: exchanges.len(),
        };
        line(&mut self.logs.run, &rec)?;
        self.write_exchanges(0, exchanges)?;
        self.write_curve(0, ROOT, &seed.result)?;
        self.logs.timing(0, secs)?;
        Ok(())
    }

    fn write_exchanges(&mut self, eval: u64, exchanges: Vec<Exchange>) -> Result<(), RunError> {
        for mut exchange in exchanges {
            if !self.secret.is_empty() {
                exchange.response = redact(&exchange.response, &self.secret);
                for t in &mut exchange.turns {
                    t.content = redact(&t.content, &self.secret);
                }
            }
            line(&mut self.logs.prompts, &PromptRecord { eval, exchange })?;
        }
        Ok(())
    }

    fn write_curve(&mut self, eval: u64, node: NodeId, r: &EvalResult) -> Result<(), RunError> {
        let rec = CurveRecord {
            eval,
            node,
            auc: r.auc,
            degenerate: r.degenerate,
            far: r.far.clone(),
            d_sens: r.d_sens.clone(),
            thresholds: r.thresholds.clone(),
        };
        line(&mut self.logs.curves, &rec)
    }

    fn search(&mut self) -> Result<(), RunError> {
        self.initialize()?;
        let mut level = 0;
        while self.tree.remaining() > 0 && !self.tree.converged() {
            let Some(focus) = self.select()? else { break };
            level += 1;
            log::info!("level {level}: expanding node {focus}, {} evaluations left, best {:.2}", self.tree.remaining(), self.tree.best_fitness());
            let mut slots: Vec<Slot> = if self.cfg.use_schedule { level_schedule() } else { random_schedule(&mut self.rng) };
            slots.truncate(self.tree.remaining() as usize);
            let elite = self.pop.elite;
            let jobs: Vec<Job> = slots
                .iter()
                .map(|&slot| {
                    let req = choose_inputs(slot, &self.tree, focus, elite, &self.cfg.population, &mut self.rng);
                    self.job(&req, focus, slot.kind, level)
                })
                .collect();
            self.run_batch(jobs)?;
            self.tree.maintenance();
        }
        Ok(())
    }

    /// Selects an expandable node, exhausting depth-capped leaves on the way.
    fn select(&mut self) -> Result<Option<NodeId>, RunError> {
        loop {
            if self.tree.is_exhausted() {
                return Ok(None);
            }
            let leaf = self.tree.select_leaf();
            match self.tree.can_expand(leaf) {
                Ok(()) => return Ok(Some(leaf)),
                Err(TreeError::Gate { .. }) => continue,
                Err(TreeError::DepthCap { .. }) => self.tree.mark_exhausted(leaf)?,
                Err(e) => return Err(e.into()),
            }
        }
    }

    /// Eight prompted variants of the seed, then two point mutations, all
    /// children of the root.
    fn initialize(&mut self) -> Result<(), RunError> {
        let n = INIT_VARIATIONS.len().min(self.tree.remaining() as usize);
        let jobs: Vec<Job> = (0..n).map(|i| self.init_job(i)).collect();
        let failed = self.run_batch(jobs)?;
        for i in failed {
            let mut attempts = 1;
            loop {
                if attempts > self.cfg.init_retries || self.tree.remaining() == 0 {
                    if self.tree.remaining() == 0 {
                        return Ok(());
                    }
                    return Err(RunError::InitFailed { variant: i + 1, attempts });
                }
                attempts += 1;
                let job = self.init_job(i);
                if self.run_batch(vec![job])?.is_empty() {
                    break;
                }
            }
        }
        let elite = self.pop.elite;
        let jobs: Vec<Job> = (0..2u8)
            .take(self.tree.remaining() as usize)
            .map(|variant| {
                let fit = |id: NodeId| self.tree.node(id).fitness.unwrap_or(f64::NEG_INFINITY);
                let focus = self.pop.sample(fit, self.cfg.population.beta, &mut self.rng);
                let req = OpRequest { kind: OpKind::PM, variant, focus, inputs: vec![focus, elite] };
                let mut job = self.job(&req, ROOT, OpKind::PM, 0);
                job.recipe.focus = ROOT;
                job
            })
            .collect();
        self.run_batch(jobs)?;
        Ok(())
    }

    fn init_job(&mut self, i: usize) -> Job {
        let b = Bindings::from([
            ("variant_index".to_string(), (i + 1).to_string()),
            ("variation".to_string(), INIT_VARIATIONS[i].to_string()),
            ("seed_description".to_string(), self.describe(ROOT)),
        ]);
        let recipe = EdgeRecipe {
            eval: 0,
            op: OpKind::Init,
            variant: i as u8,
            focus: ROOT,
            inputs: vec![ROOT],
            depth: 1,
            reflection: None,
            synthesis: Phase { kind: PromptKind::Init, bindings: b },
        };
        Job { recipe, scheduled: OpKind::Init, level: 0 }
    }

    /// Prompt recipe for an operator whose child will hang below `parent`.
    fn job(&self, req: &OpRequest, parent: NodeId, scheduled: OpKind, level: u32) -> Job {
        let depth = self.tree.node(parent).depth + 1;
        let focus = req.focus;
        let b = |pairs: Vec<(&str, String)>| -> Bindings { pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect() };
        let (reflection, synthesis) = match (req.kind, req.variant) {
            (OpKind::PC, _) => {
                let (worse, better) = (req.inputs[0], req.inputs[1]);
                (
                    Some(Phase { kind: PromptKind::PcReflection, bindings: b(vec![("code_worse", self.code(worse)), ("code_better", self.code(better))]) }),
                    Phase { kind: PromptKind::PcSynthesis, bindings: b(vec![("worse_code", self.code(worse)), ("better_code", self.code(better))]) },
                )
            }
            (OpKind::SC, _) => {
                let peers: Vec<String> = req
                    .inputs
                    .iter()
                    .enumerate()
                    .map(|(k, &id)| format!("[No.{} Brother Reflection | Score: {}]{}", k + 1, self.objective(id), self.insight(id)))
                    .collect();
                let d = self.tree.node(focus).depth;
                let father = self.tree.node(focus).parent.unwrap_or(ROOT);
                (
                    Some(Phase {
                        kind: PromptKind::ScReflection,
                        bindings: b(vec![
                            ("parent_depth", d.to_string()),
                            ("parent_reflections", peers.join("\n")),
                            ("father_depth", d.saturating_sub(1).to_string()),
                            ("father_reflection", self.insight(father)),
                        ]),
                    }),
                    Phase { kind: PromptKind::ScSynthesis, bindings: b(vec![("algorithm_description", self.describe(focus)), ("algorithm_code", self.code(focus))]) },
                )
            }
            (OpKind::PWC, v) => {
                let path = &req.inputs;
                let reflection = if v == 0 {
                    let text: Vec<String> = path
                        .iter()
                        .enumerate()
                        .map(|(k, &id)| format!("[No.{} algorithm's reflection (depth: {})]{}", k + 1, self.tree.node(id).depth, self.insight(id)))
                        .collect();
                    Phase {
                        kind: PromptKind::PwcReflection,
                        bindings: b(vec![("num_algorithms", path.len().to_string()), ("algorithm_reflections", text.join("\n"))]),
                    }
                } else {
                    let text: Vec<String> = path
                        .iter()
                        .enumerate()
                        .map(|(k, &id)| {
                            format!(
                                "[No.{} algorithm's reflection (depth: {})]\nDescription: {}\nObjective: {}\nCode:\n```\n{}\n```",
                                k + 1,
                                self.tree.node(id).depth,
                                self.describe(id),
                                self.objective(id),
                                self.code(id)
                            )
                        })
                        .collect();
                    Phase {
                        kind: PromptKind::PwcComprehensive,
                        bindings: b(vec![("num_algorithms", path.len().to_string()), ("parent_info", text.join("\n"))]),
                    }
                };
                (
                    Some(reflection),
                    Phase { kind: PromptKind::PwcSynthesis, bindings: b(vec![("algorithm_description", self.describe(focus)), ("algorithm_code", self.code(focus))]) },
                )
            }
            (_, 0) => {
                let elite = req.inputs[1];
                (
                    None,
                    Phase {
                        kind: PromptKind::PmSingle,
                        bindings: b(vec![
                            ("original_algorithm_description", self.describe(focus)),
                            ("original_algorithm_code", self.code(focus)),
                            ("original_objective_value", self.objective(focus)),
                            ("better_algorithm_description", self.describe(elite)),
                            ("better_algorithm_code", self.code(elite)),
                            ("better_objective_value", self.objective(elite)),
                            ("better_algorithm_reflection", self.insight(elite)),
                        ]),
                    },
                )
            }
            (_, _) => {
                let elite = req.inputs[1];
                (
                    Some(Phase {
                        kind: PromptKind::PmReflection,
                        bindings: b(vec![
                            ("parent_reflections", format!("[Parent 1 Reflection | Score: {}]{}", self.objective(focus), self.insight(focus))),
                            ("elite_reflection", self.insight(elite)),
                        ]),
                    }),
                    Phase {
                        kind: PromptKind::PmSynthesis,
                        bindings: b(vec![("elite_algorithm_description", self.describe(elite)), ("elite_algorithm_code", self.code(elite))]),
                    },
                )
            }
        };
        let recipe = EdgeRecipe {
            eval: 0,
            op: req.kind,
            variant: req.variant,
            focus: parent,
            inputs: req.inputs.clone(),
            depth,
            reflection,
            synthesis,
        };
        Job { recipe, scheduled, level }
    }

    fn execute(&self, job: &Job) -> Result<JobResult, GenError> {
        let start = Instant::now();
        let expansion = execute_recipe(self.gen, self.prompts, self.evaluator, &job.recipe, self.cfg.e_max)?;
        let mut summary = Vec::new();
        let mut description = String::new();
        if let Ok((parsed, scored)) = &expansion.corrected.outcome {
            if let Ok(b) = self.prompts.summarize(&parsed.design_idea, &scored.code, job.recipe.depth) {
                description = ask(self.gen, &b, &mut summary)?.trim().to_string();
            }
        }
        Ok(JobResult { expansion, description, summary, seconds: start.elapsed().as_secs_f64() })
    }

    /// Executes `jobs` (concurrently when workers > 1) and applies the results
    /// in submission order. Returns the indices of skipped jobs.
    fn run_batch(&mut self, mut jobs: Vec<Job>) -> Result<Vec<usize>, RunError> {
        for (i, j) in jobs.iter_mut().enumerate() {
            j.recipe.eval = self.next_eval + i as u64;
        }
        let exec = Execution::from_workers(self.cfg.workers);
        let this = &*self;
        let results = parallel::map(exec, &jobs, |j| this.execute(j));
        let mut skipped = Vec::new();
        for (i, (job, res)) in jobs.into_iter().zip(results).enumerate() {
            let res = res.map_err(RunError::Outage)?;
            if !self.apply(job, res)? {
                skipped.push(i);
            }
        }
        Ok(skipped)
    }

    fn apply(&mut self, job: Job, res: JobResult) -> Result<bool, RunError> {
        let eval = job.recipe.eval;
        self.next_eval = eval + 1;
        line(&mut self.logs.requests, &job.recipe)?;
        let parent = job.recipe.focus;
        let JobResult { expansion, description, summary, seconds } = res;
        let c = &expansion.corrected;
        let failures: Vec<String> = c.failures.iter().map(|f| f.label().to_string()).collect();
        let (new_id, fitness) = match &c.outcome {
            Ok((parsed, scored)) => {
                let cand = Candidate {
                    code: scored.code.clone(),
                    idea: parsed.design_idea.clone(),
                    description,
                    reflection: expansion.reflection.clone(),
                };
                let id = self.tree.expand(parent, job.recipe.op, cand)?;
                self.tree.backpropagate(id, scored.fitness())?;
                self.scores.insert(id, scored.clone());
                let tree = &self.tree;
                self.pop = update_population(&self.pop, id, |n| tree.node(n).fitness.unwrap_or(f64::NEG_INFINITY), &self.cfg.population, &mut self.rng);
                self.write_curve(eval, id, &scored.result)?;
                (Some(id), Some(scored.fitness()))
            }
            Err(f) => {
                log::warn!("eval {eval} ({} from node {parent}) skipped: {f}", job.recipe.op);
                self.tree.skip(parent)?;
                (None, None)
            }
        };
        let rec = LogRecord {
            eval,
            level: job.level,
            op: job.scheduled,
            executed: job.recipe.op,
            variant: job.recipe.variant,
            parent: Some(parent),
            inputs: job.recipe.inputs.clone(),
            new_id,
            fitness,
            elite: self.pop.elite,
            elite_fitness: self.fitness(self.pop.elite),
            status: if new_id.is_some() { "ok" } else { "skip" }.into(),
            failures,
            rechats: c.rechats(),
            gen_calls: expansion.gen_calls + summary.len(),
        };
        line(&mut self.logs.run, &rec)?;
        let mut exchanges = c.exchanges.clone();
        exchanges.extend(summary);
        self.write_exchanges(eval, exchanges)?;
        self.logs.timing(eval, seconds)?;
        self.points.push(EvalPoint { eval, fitness, code: new_id.map(|id| self.code(id)) });
        Ok(new_id.is_some())
    }

    fn finish(mut self, dir: &Path, bench: Arc<Benchmark>) -> Result<RunSummary, RunError> {
        self.logs.flush()?;
        let mut events = BufWriter::new(File::create(dir.join("tree_events.jsonl"))?);
        for e in self.tree.events() {
            line(&mut events, e)?;
        }
        events.flush()?;
        fs::write(dir.join("tree.json"), serde_json::to_string_pretty(&self.tree.export())?)?;

        let report = analyze(&self.points, self.cfg.analysis.window, self.cfg.analysis.pt_threshold);
        fs::write(dir.join("analysis.json"), serde_json::to_string_pretty(&report)?)?;
        fs::write(dir.join("diversity.csv"), report.diversity_csv())?;

        let best = self.pop.elite;
        let scored = self.scores[&best].clone();
        fs::write(dir.join("best.dsl"), format!("{}\n", scored.code))?;
        scored.background.write_csv(BufWriter::new(File::create(dir.join("best_background.csv"))?))?;
        scored.foreground.write_csv(BufWriter::new(File::create(dir.join("best_foreground.csv"))?))?;

        let split = if bench.split(Split::Test).is_empty() { Split::Train } else { Split::Test };
        let held_out = make_evaluator(self.cfg, bench, split);
        let (result, error) = match held_out.evaluate(&scored.code) {
            Ok(s) => {
                let mut r = s.result.clone();
                r.wall_time = 0.0;
                (Some(r), None)
            }
            Err(f) => (None, Some(f.to_string())),
        };
        let be = BestEval { node: best, split, train_fitness: scored.fitness(), result, error };
        fs::write(dir.join("best_eval.json"), serde_json::to_string_pretty(&be)?)?;

        Ok(RunSummary {
            dir: dir.to_path_buf(),
            evaluations: self.tree.t(),
            seed_fitness: self.scores[&ROOT].fitness(),
            best,
            best_fitness: scored.fitness(),
        })
    }
}

/// Reads a JSON-lines file.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, RunError> {
    let text = fs::read_to_string(path)?;
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| serde_json::from_str(l).map_err(RunError::from)).collect()
}
