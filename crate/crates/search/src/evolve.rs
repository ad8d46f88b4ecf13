//! Evolutionary layer over the tree: the per-level operation schedule, input
//! selection for each operator, and the elitist softmax population.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::tree::{NodeId, OpKind, SearchTree};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PopulationConfig {
    /// Population size, elite included.
    pub k: usize,
    /// Softmax selection pressure per unit of raw fitness.
    pub beta: f64,
    /// Siblings drawn for a sibling crossover.
    pub siblings: usize,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        PopulationConfig { k: 10, beta: 0.005, siblings: 3 }
    }
}

/// Operations issued at every expansion point, in order.
pub const LEVEL_SCHEDULE: [OpKind; 10] = [
    OpKind::PC,
    OpKind::PC,
    OpKind::PC,
    OpKind::PC,
    OpKind::PC,
    OpKind::PWC,
    OpKind::PWC,
    OpKind::SC,
    OpKind::PM,
    OpKind::PM,
];

/// One scheduled slot: the operator and which of its prompt variants to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub kind: OpKind,
    /// 0 or 1. PWC: reflection-based then comprehensive. PM: single-stage then
    /// two-stage. Always 0 for PC and SC.
    pub variant: u8,
}

pub fn level_schedule() -> Vec<Slot> {
    let mut seen = [0u8; 6];
    LEVEL_SCHEDULE
        .iter()
        .map(|&kind| {
            let k = kind as usize;
            let variant = seen[k];
            seen[k] += 1;
            Slot { kind, variant: if matches!(kind, OpKind::PWC | OpKind::PM) { variant } else { 0 } }
        })
        .collect()
}

/// Ablation schedule: ten slots with operators drawn uniformly.
pub fn random_schedule<R: Rng>(rng: &mut R) -> Vec<Slot> {
    const OPS: [OpKind; 4] = [OpKind::PC, OpKind::SC, OpKind::PWC, OpKind::PM];
    (0..LEVEL_SCHEDULE.len())
        .map(|_| {
            let kind = OPS[rng.random_range(0..OPS.len())];
            let variant = if matches!(kind, OpKind::PWC | OpKind::PM) { rng.random_range(0..2) } else { 0 };
            Slot { kind, variant }
        })
        .collect()
}

/// Operator inputs resolved against a tree snapshot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpRequest {
    /// Operator actually executed (a sibling crossover without siblings runs as PM).
    pub kind: OpKind,
    pub variant: u8,
    /// The expansion point; the new node becomes its child.
    pub focus: NodeId,
    /// PC: [baseline, enhanced]. SC: [focus, siblings..]. PWC: root..=focus.
    /// PM: [focus, elite].
    pub inputs: Vec<NodeId>,
}

/// Resolves the inputs of `slot` at `focus`. Only SC consumes randomness.
pub fn choose_inputs<R: Rng>(
    slot: Slot,
    tree: &SearchTree,
    focus: NodeId,
    elite: NodeId,
    cfg: &PopulationConfig,
    rng: &mut R,
) -> OpRequest {
    let req = |kind, variant, inputs| OpRequest { kind, variant, focus, inputs };
    match slot.kind {
        OpKind::PC => {
            let baseline = tree.node(focus).parent.unwrap_or(focus);
            req(OpKind::PC, 0, vec![baseline, best_at_or_above(tree, tree.node(focus).depth)])
        }
        OpKind::PWC => req(OpKind::PWC, slot.variant, tree.path(focus)),
        OpKind::SC => {
            let depth = tree.node(focus).depth;
            let others: Vec<(NodeId, f64)> = tree
                .at_depth(depth)
                .filter(|n| n.id != focus)
                .filter_map(|n| n.fitness.map(|f| (n.id, f)))
                .collect();
            if others.is_empty() || cfg.siblings == 0 {
                return req(OpKind::PM, 0, vec![focus, elite]);
            }
            let weights = sibling_weights(&others.iter().map(|o| o.1).collect::<Vec<_>>());
            let mut inputs = vec![focus];
            for _ in 0..cfg.siblings.min(others.len()) {
                inputs.push(others[draw(&weights, rng)].0);
            }
            req(OpKind::SC, 0, inputs)
        }
        OpKind::PM | OpKind::Init | OpKind::Seed => req(OpKind::PM, slot.variant, vec![focus, elite]),
    }
}

/// Best evaluated node at depth <= `depth`; ties to the lowest id.
fn best_at_or_above(tree: &SearchTree, depth: u32) -> NodeId {
    let mut best: Option<(NodeId, f64)> = None;
    for n in tree.nodes() {
        if n.depth > depth {
            continue;
        }
        if let Some(f) = n.fitness {
            if best.is_none_or(|(_, b)| f > b) {
                best = Some((n.id, f));
            }
        }
    }
    best.map_or(0, |b| b.0)
}

/// Fitness-proportional sampling weights, `f + 1e-10` normalized to sum 1.
/// Negative fitness is floored at zero.
pub fn sibling_weights(fitness: &[f64]) -> Vec<f64> {
    let raw: Vec<f64> = fitness.iter().map(|&f| f.max(0.0) + 1e-10).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w / total).collect()
}

/// Softmax over raw fitness, shifted by the maximum for stability.
pub fn softmax(fitness: &[f64], beta: f64) -> Vec<f64> {
    let top = fitness.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = fitness.iter().map(|&f| (beta * (f - top)).exp()).collect();
    let total: f64 = e.iter().sum();
    e.iter().map(|v| v / total).collect()
}

/// Index drawn with probability proportional to `weights`.
fn draw<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Population {
    /// Member ids in ascending order; always contains the elite.
    pub members: Vec<NodeId>,
    pub elite: NodeId,
}

impl Population {
    pub fn new(elite: NodeId) -> Self {
        Population { members: vec![elite], elite }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Draws one member by softmax over fitness, preferring non-elite members
    /// when any exist.
    pub fn sample<R: Rng>(&self, fitness: impl Fn(NodeId) -> f64, beta: f64, rng: &mut R) -> NodeId {
        let pool: Vec<NodeId> = match self.members.iter().copied().filter(|&m| m != self.elite).collect::<Vec<_>>() {
            v if v.is_empty() => vec![self.elite],
            v => v,
        };
        let p = softmax(&pool.iter().map(|&m| fitness(m)).collect::<Vec<_>>(), beta);
        pool[draw(&p, rng)]
    }
}

/// Adds `new` to the population. The elite is kept (and replaced only by a
/// strictly fitter newcomer); the other k-1 slots are drawn without
/// replacement by softmax over raw fitness.
pub fn update_population<R: Rng>(
    pop: &Population,
    new: NodeId,
    fitness: impl Fn(NodeId) -> f64,
    cfg: &PopulationConfig,
    rng: &mut R,
) -> Population {
    let elite = if fitness(new) > fitness(pop.elite) { new } else { pop.elite };
    let mut pool: Vec<NodeId> = pop.members.iter().copied().chain([new]).filter(|&m| m != elite).collect();
    pool.sort_unstable();
    pool.dedup();
    let slots = cfg.k.saturating_sub(1);
    let mut members = vec![elite];
    if pool.len() <= slots {
        members.extend(pool);
    } else {
        for _ in 0..slots {
            let p = softmax(&pool.iter().map(|&m| fitness(m)).collect::<Vec<_>>(), cfg.beta);
            members.push(pool.remove(draw(&p, rng)));
        }
    }
    members.sort_unstable();
    Population { members, elite }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{Candidate, TreeConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn schedule_counts_and_variants() {
        let s = level_schedule();
        assert_eq!(s.len(), 10);
        let count = |k| s.iter().filter(|x| x.kind == k).count();
        assert_eq!((count(OpKind::PC), count(OpKind::PWC), count(OpKind::SC), count(OpKind::PM)), (5, 2, 1, 2));
        assert_eq!(s, level_schedule());
        let v: Vec<u8> = s.iter().filter(|x| x.kind == OpKind::PM).map(|x| x.variant).collect();
        assert_eq!(v, [0, 1]);
    }

    #[test]
    fn softmax_odds() {
        let p = softmax(&[0.0, 3f64.ln() / 0.005], 0.005);
        assert!((p[1] / p[0] - 3.0).abs() < 1e-12);
        let u = softmax(&[1.0, 500.0, 9.0], 0.0);
        assert!(u.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn sibling_weights_are_proportional() {
        let w = sibling_weights(&[100.0, 300.0]);
        assert!((w[0] - 0.25).abs() < 1e-12 && (w[1] - 0.75).abs() < 1e-12);
    }

    fn fixture() -> SearchTree {
        let mut t = SearchTree::new(TreeConfig::default(), 100, Candidate::default(), 1.0).unwrap();
        for f in [2.0, 5.0, 3.0] {
            let id = t.expand(0, OpKind::Init, Candidate::default()).unwrap();
            t.backpropagate(id, f).unwrap();
        }
        for _ in 0..4 {
            t.select_leaf();
        }
        let id = t.expand(2, OpKind::PC, Candidate::default()).unwrap();
        t.backpropagate(id, 4.0).unwrap();
        t
    }

    #[test]
    fn inputs_per_kind() {
        let t = fixture();
        let cfg = PopulationConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let slot = |kind, variant| Slot { kind, variant };
        let pm = choose_inputs(slot(OpKind::PM, 0), &t, 4, 2, &cfg, &mut rng);
        assert_eq!(pm.inputs, vec![4, 2]);
        let pwc = choose_inputs(slot(OpKind::PWC, 1), &t, 4, 2, &cfg, &mut rng);
        assert_eq!((pwc.inputs, pwc.variant), (vec![0, 2, 4], 1));
        let pc = choose_inputs(slot(OpKind::PC, 0), &t, 1, 2, &cfg, &mut rng);
        assert_eq!(pc.inputs, vec![0, 2]);
        let sc = choose_inputs(slot(OpKind::SC, 0), &t, 1, 2, &cfg, &mut rng);
        assert_eq!(sc.kind, OpKind::SC);
        assert_eq!(sc.inputs.len(), 3);
        assert!(sc.inputs[1..].iter().all(|i| [2, 3].contains(i)));
        let lone = choose_inputs(slot(OpKind::SC, 0), &t, 4, 2, &cfg, &mut rng);
        assert_eq!((lone.kind, lone.inputs), (OpKind::PM, vec![4, 2]));
    }

    #[test]
    fn population_keeps_elite_and_size() {
        let fit = |id: NodeId| id as f64 * 10.0;
        let cfg = PopulationConfig { k: 3, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut pop = Population::new(5);
        for new in [1, 2, 3, 9, 4] {
            pop = update_population(&pop, new, fit, &cfg, &mut rng);
            assert!(pop.members.contains(&pop.elite));
            assert!(pop.len() <= 3);
        }
        assert_eq!(pop.elite, 9);
        assert_eq!(pop.len(), 3);
    }

    #[test]
    fn zero_beta_samples_uniformly() {
        let cfg = PopulationConfig { k: 2, beta: 0.0, ..Default::default() };
        let pop = Population { members: vec![0, 1, 2], elite: 0 };
        let fit = |id: NodeId| [100.0, 1.0, 50.0, 2.0][id];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut hits = [0usize; 4];
        for _ in 0..6000 {
            let p = update_population(&pop, 3, fit, &cfg, &mut rng);
            hits[p.members[1]] += 1;
        }
        for &h in &hits[1..] {
            assert!((h as f64 / 6000.0 - 1.0 / 3.0).abs() < 0.03, "{hits:?}");
        }
    }
}
