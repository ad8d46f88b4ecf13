use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use gwevo_core::datagen::{Benchmark, Split};
use gwevo_core::pipelines::builtin;
use gwevo_cli::config::{Backend, RunConfig};
use gwevo_cli::report::{report, ReportError};
use gwevo_cli::run::{self, read_jsonl, RunError};
use gwevo_search::genclient::{rerun_edge, EdgeRecipe};
use gwevo_search::tree::TreeExport;

#[derive(Parser)]
#[command(name = "gwevo", version, about = "Tree-structured evolutionary search over gravitational-wave detection pipelines")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TreeFormat {
    Json,
    Dot,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a configuration file with every default filled in.
    InitConfig {
        #[arg(default_value = "gwevo.json")]
        path: PathBuf,
    },
    /// Render the synthetic benchmark to a directory.
    Datagen {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a search.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        budget: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        /// Use the offline generator, optionally with a script file.
        #[arg(long, num_args = 0..=1, value_name = "SCRIPT")]
        mock: Option<Option<PathBuf>>,
    },
    /// Score a program on the benchmark and print the result as JSON.
    Evaluate {
        /// Program file, or the built-in `seed` / `elite`.
        program: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset directory written by `datagen`; the synthetic benchmark otherwise.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Directory for the JSON report and the trigger catalogs.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Repeat one recorded expansion and report the spread of outcomes.
    RerunEdge {
        /// Run directory.
        run: PathBuf,
        #[arg(long)]
        eval: u64,
        #[arg(long, default_value_t = 10)]
        n: usize,
        /// Fitness to compare against; the expanded node's fitness by default.
        #[arg(long)]
        reference: Option<f64>,
        #[arg(long, num_args = 0..=1, value_name = "SCRIPT")]
        mock: Option<Option<PathBuf>>,
    },
    /// Draw figures and a summary for a run directory.
    Report {
        run: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the search tree of a run.
    ExportTree {
        run: PathBuf,
        #[arg(long, value_enum, default_value = "json")]
        format: TreeFormat,
    },
}

struct Fail(u8, String);

impl From<RunError> for Fail {
    fn from(e: RunError) -> Self {
        let code = match &e {
            RunError::Config(_) => 2,
            RunError::Outage(_) => 3,
            RunError::Seed(_) | RunError::InitFailed { .. } => 4,
            RunError::Data(_) | RunError::Tree(_) | RunError::Io(_) | RunError::Json(_) => 1,
        };
        Fail(code, e.to_string())
    }
}

impl From<ReportError> for Fail {
    fn from(e: ReportError) -> Self {
        let code = if matches!(e, ReportError::Missing { .. }) { 2 } else { 1 };
        Fail(code, e.to_string())
    }
}

fn usage<E: std::fmt::Display>(e: E) -> Fail {
    Fail(2, e.to_string())
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Fail> {
    match path {
        Some(p) => RunConfig::load(p).map_err(usage),
        None => Ok(RunConfig::default()),
    }
}

fn apply_mock(cfg: &mut RunConfig, mock: Option<Option<PathBuf>>) {
    if let Some(script) = mock {
        cfg.backend = Backend::Mock;
        if script.is_some() {
            cfg.mock_script = script;
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse().cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<(), Fail> {
    match cmd {
        Cmd::InitConfig { path } => {
            let text = serde_json::to_string_pretty(&RunConfig::default()).map_err(usage)?;
            fs::write(&path, text + "\n").map_err(usage)?;
            println!("{}", path.display());
        }
        Cmd::Datagen { config, out } => {
            let cfg = load_config(config.as_deref())?;
            let bench = Benchmark::synthetic(&cfg.dataset).map_err(|e| Fail(1, e.to_string()))?;
            bench.write(&out, Some(&cfg.dataset)).map_err(|e| Fail(1, e.to_string()))?;
            println!("{} segments written to {}", bench.all().len(), out.display());
        }
        Cmd::Run { config, out, budget, seed, workers, mock } => {
            let mut cfg = load_config(config.as_deref())?;
            cfg.output = out.unwrap_or(cfg.output);
            cfg.budget = budget.unwrap_or(cfg.budget);
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.workers = workers.unwrap_or(cfg.workers);
            apply_mock(&mut cfg, mock);
            let s = run::run_search(&cfg)?;
            println!(
                "{} evaluations, seed {:.2}, best {:.2} (node {}), artifacts in {}",
                s.evaluations,
                s.seed_fitness,
                s.best_fitness,
                s.best,
                s.dir.display()
            );
        }
        Cmd::Evaluate { program, config, data, out, split } => {
            let mut cfg = load_config(config.as_deref())?;
            if data.is_some() {
                cfg.data_dir = data;
            }
            let code = match builtin(&program) {
                Some(p) => p.canonical(),
                None => fs::read_to_string(&program).map_err(|e| usage(format!("{program}: {e}")))?,
            };
            let bench = match run::load_benchmark(&cfg) {
                Ok(b) => Arc::new(b),
                Err(e) if cfg.data_dir.is_some() => return Err(usage(e)),
                Err(e) => return Err(e.into()),
            };
            let mut split = Split::from(split);
            if bench.split(split).is_empty() {
                split = Split::Train;
            }
            let ev = run::make_evaluator(&cfg, bench, split);
            let scored = ev.evaluate(&code).map_err(|f| Fail(4, f.to_string()))?;
            let text = serde_json::to_string_pretty(&scored.result).map_err(usage)?;
            if let Some(out) = out {
                let io = |e: std::io::Error| Fail(1, e.to_string());
                fs::create_dir_all(&out).map_err(io)?;
                fs::write(out.join("evaluation.json"), format!("{text}\n")).map_err(io)?;
                scored.background.write_csv(fs::File::create(out.join("background.csv")).map_err(io)?).map_err(|e| Fail(1, e.to_string()))?;
                scored.foreground.write_csv(fs::File::create(out.join("foreground.csv")).map_err(io)?).map_err(|e| Fail(1, e.to_string()))?;
            }
            println!("{text}");
        }
        Cmd::RerunEdge { run: dir, eval, n, reference, mock } => {
            let mut cfg = load_config(Some(&dir.join("config.json")))?;
            apply_mock(&mut cfg, mock);
            let recipes: Vec<EdgeRecipe> = read_jsonl(&dir.join("requests.jsonl"))?;
            let recipe = recipes.into_iter().find(|r| r.eval == eval).ok_or_else(|| usage(format!("no request with eval {eval}")))?;
            let reference = match reference {
                Some(r) => r,
                None => {
                    let tree: TreeExport = serde_json::from_str(&fs::read_to_string(dir.join("tree.json")).map_err(usage)?).map_err(usage)?;
                    let log: Vec<run::LogRecord> = read_jsonl(&dir.join("run_log.jsonl"))?;
                    log.iter()
                        .find(|r| r.eval == eval)
                        .and_then(|r| r.new_id)
                        .and_then(|id| tree.nodes.get(id))
                        .or_else(|| tree.nodes.get(recipe.focus))
                        .and_then(|n| n.fitness)
                        .ok_or_else(|| usage("no reference fitness; pass --reference"))?
                }
            };
            let gen = run::make_generator(&cfg)?;
            let prompts = run::prompt_set(&cfg)?;
            let bench = Arc::new(run::load_benchmark(&cfg)?);
            let ev = run::make_evaluator(&cfg, bench, Split::Train);
            let stats = rerun_edge(gen.as_ref(), &prompts, &ev, &recipe, n, reference, cfg.e_max);
            println!("{}", serde_json::to_string_pretty(&stats).map_err(usage)?);
        }
        Cmd::Report { run: dir, out } => {
            let out = out.unwrap_or_else(|| dir.clone());
            for p in report(&dir, &out)? {
                println!("{}", p.display());
            }
        }
        Cmd::ExportTree { run: dir, format } => {
            let text = fs::read_to_string(dir.join("tree.json")).map_err(usage)?;
            let tree: TreeExport = serde_json::from_str(&text).map_err(usage)?;
            match format {
                TreeFormat::Json => println!("{}", serde_json::to_string_pretty(&tree).map_err(usage)?),
                TreeFormat::Dot => print!("{}", tree.to_dot()),
            }
        }
    }
    Ok(())
}
