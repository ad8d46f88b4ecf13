//! Scores the seed and elite pipelines on the default synthetic benchmark.
//!
//! cargo run --release -p gwevo-core --example compare_reference [d_max]

use std::time::Instant;

use gwevo_core::datagen::{Benchmark, DatasetConfig, Split};
use gwevo_core::parallel::Execution;
use gwevo_core::pipelines::{elite_dsl, run_dsl, seed_dsl};
use gwevo_core::scoring::{evaluate_segments, match_events, FarRange};

fn main() -> gwevo_core::Result<()> {
    let mut cfg = DatasetConfig::default();
    if let Some(d) = std::env::args().nth(1) {
        cfg.d_max = d.parse().expect("d_max must be a number");
    }
    let bench = Benchmark::synthetic(&cfg)?;
    let segs = bench.split(Split::Train);
    let truth: Vec<_> = segs.iter().flat_map(|s| s.injections.iter().copied()).collect();
    for (name, p) in [("seed", seed_dsl()), ("elite", elite_dsl())] {
        let start = Instant::now();
        let ev = evaluate_segments(&segs, bench.d_max, FarRange::default(), Execution::Parallel, |h, l| run_dsl(p, h, l))?;
        let found = match_events(&ev.foreground(), &truth).iter().filter(|m| m.is_some()).count();
        println!(
            "{name:>5}: auc {:>8.2}  matched {found}/{}  background triggers {}  ({:.1?})",
            ev.result.auc,
            truth.len(),
            ev.background().len(),
            start.elapsed()
        );
    }
    Ok(())
}
