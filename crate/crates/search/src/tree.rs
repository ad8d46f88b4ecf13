//! Search tree: node store, UCT selection with budget-adaptive exploration,
//! expansion gating, discounted backpropagation under global min-max
//! normalization, pruning marks and convergence detection.
//!
//! Every node carries a backed-up value in raw fitness units. Normalized `q`
//! values are derived from it against the running fitness extrema, so a
//! change of extrema refreshes all `q` exactly (normalization is affine and
//! commutes with the discounted update).
//!
//! Every mutation is appended to an event log; [`SearchTree::replay`] rebuilds
//! the identical tree from it.

use std::fmt;

use serde::{Deserialize, Serialize};

pub type NodeId = usize;

pub const ROOT: NodeId = 0;

/// Operation that created a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OpKind {
    #[serde(rename = "seed")]
    Seed,
    #[serde(rename = "init")]
    Init,
    PC,
    SC,
    PWC,
    PM,
}

impl OpKind {
    pub fn label(self) -> &'static str {
        match self {
            OpKind::Seed => "seed",
            OpKind::Init => "init",
            OpKind::PC => "PC",
            OpKind::SC => "SC",
            OpKind::PWC => "PWC",
            OpKind::PM => "PM",
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Candidate program text with the generator's notes on it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub code: String,
    /// Brace-delimited design idea from the generating response.
    pub idea: String,
    /// Short post-generation description, used in place of code in later prompts.
    pub description: String,
    /// Reflection text that led to this candidate.
    pub reflection: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub depth: u32,
    pub op: OpKind,
    pub candidate: Candidate,
    /// Raw fitness; `None` until evaluated.
    pub fitness: Option<f64>,
    /// Backed-up value in raw fitness units.
    pub value: f64,
    /// `value` normalized against the fitness extrema, in [0, 1].
    pub q: f64,
    pub visits: u64,
    pub pruned: bool,
    /// No expandable node remains in this subtree.
    pub exhausted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeConfig {
    pub c0: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub expand_threshold: u64,
    pub max_depth: u32,
    pub prune_margin: f64,
    pub prune_min_siblings: usize,
    pub convergence_window: usize,
    pub convergence_tol: f64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            c0: 1.0,
            gamma: 0.5,
            epsilon: 1e-6,
            expand_threshold: 2,
            max_depth: 10,
            prune_margin: 0.2,
            prune_min_siblings: 3,
            convergence_window: 30,
            convergence_tol: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TreeEvent {
    Root { candidate: Candidate, fitness: f64 },
    Select { leaf: NodeId },
    Expand { parent: NodeId, op: OpKind, candidate: Candidate },
    Backpropagate { node: NodeId, fitness: f64 },
    Skip { parent: NodeId },
    Exhaust { node: NodeId },
    Maintain,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TreeError {
    #[error("node {0} does not exist")]
    UnknownNode(NodeId),
    #[error("node {node} is at the depth cap")]
    DepthCap { node: NodeId },
    #[error("node {node} has {visits} visit(s), below the expansion threshold {threshold}")]
    Gate { node: NodeId, visits: u64, threshold: u64 },
    #[error("node {0} is already evaluated")]
    AlreadyEvaluated(NodeId),
    #[error("fitness {0} is not finite")]
    NonFinite(f64),
    #[error("event log entry {index}: {reason}")]
    Replay { index: usize, reason: String },
}

/// Outcome of one maintenance pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Maintenance {
    pub pruned: Vec<NodeId>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchTree {
    pub config: TreeConfig,
    pub budget: u64,
    nodes: Vec<TreeNode>,
    q_min: f64,
    q_max: f64,
    t: u64,
    ranked: Vec<f64>,
    best_history: Vec<f64>,
    converged: bool,
    events: Vec<TreeEvent>,
}

impl SearchTree {
    /// Tree holding only the evaluated seed at depth 0. The seed evaluation
    /// does not count against the budget.
    pub fn new(config: TreeConfig, budget: u64, seed: Candidate, fitness: f64) -> Result<Self, TreeError> {
        if !fitness.is_finite() {
            return Err(TreeError::NonFinite(fitness));
        }
        let root = TreeNode {
            id: ROOT,
            parent: None,
            children: Vec::new(),
            depth: 0,
            op: OpKind::Seed,
            candidate: seed.clone(),
            fitness: Some(fitness),
            value: fitness,
            q: 0.0,
            visits: 0,
            pruned: false,
            exhausted: false,
        };
        Ok(SearchTree {
            config,
            budget,
            nodes: vec![root],
            q_min: fitness,
            q_max: fitness,
            t: 0,
            ranked: vec![fitness],
            best_history: Vec::new(),
            converged: false,
            events: vec![TreeEvent::Root { candidate: seed, fitness }],
        })
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn get(&self, id: NodeId) -> Result<&TreeNode, TreeError> {
        self.nodes.get(id).ok_or(TreeError::UnknownNode(id))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Expansion records consumed so far.
    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn remaining(&self) -> u64 {
        self.budget.saturating_sub(self.t)
    }

    pub fn extrema(&self) -> (f64, f64) {
        (self.q_min, self.q_max)
    }

    /// Every observed fitness, best first.
    pub fn ranked(&self) -> &[f64] {
        &self.ranked
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn events(&self) -> &[TreeEvent] {
        &self.events
    }

    /// c = c0 * max(1 - t/T, 0).
    pub fn exploration(&self) -> f64 {
        if self.budget == 0 {
            return 0.0;
        }
        self.config.c0 * (1.0 - self.t as f64 / self.budget as f64).max(0.0)
    }

    pub fn normalize(&self, raw: f64) -> f64 {
        (raw - self.q_min) / (self.q_max - self.q_min + self.config.epsilon)
    }

    /// Exploitation (normalized value) plus the visit-count exploration bonus.
    /// The root has no parent and scores its exploitation term only.
    pub fn uct_score(&self, id: NodeId) -> f64 {
        let n = &self.nodes[id];
        let parent_visits = n.parent.map_or(0, |p| self.nodes[p].visits);
        uct(n.q, parent_visits, n.visits, self.exploration(), self.config.epsilon)
    }

    /// Descends from the root along maximal UCT scores (ties to the lowest id)
    /// until a node without selectable children or at the depth cap, then
    /// increments visits along the path.
    pub fn select_leaf(&mut self) -> NodeId {
        let mut path = vec![ROOT];
        let mut cur = ROOT;
        while self.nodes[cur].depth < self.config.max_depth {
            let mut best: Option<(NodeId, f64)> = None;
            for &c in &self.nodes[cur].children {
                let n = &self.nodes[c];
                if n.pruned || n.exhausted {
                    continue;
                }
                let s = self.uct_score(c);
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((c, s));
                }
            }
            match best {
                Some((c, _)) => {
                    path.push(c);
                    cur = c;
                }
                None => break,
            }
        }
        for &id in &path {
            self.nodes[id].visits += 1;
        }
        self.events.push(TreeEvent::Select { leaf: cur });
        cur
    }

    /// Whether `id` may receive a child. The root is expanded by population
    /// initialization and is exempt from the visit gate.
    pub fn can_expand(&self, id: NodeId) -> Result<(), TreeError> {
        let n = self.get(id)?;
        if n.depth >= self.config.max_depth {
            return Err(TreeError::DepthCap { node: id });
        }
        if id != ROOT && n.visits < self.config.expand_threshold {
            return Err(TreeError::Gate { node: id, visits: n.visits, threshold: self.config.expand_threshold });
        }
        Ok(())
    }

    /// Appends an unevaluated child whose value starts at the parent's.
    pub fn expand(&mut self, parent: NodeId, op: OpKind, candidate: Candidate) -> Result<NodeId, TreeError> {
        self.can_expand(parent)?;
        let id = self.nodes.len();
        let p = &self.nodes[parent];
        let child = TreeNode {
            id,
            parent: Some(parent),
            children: Vec::new(),
            depth: p.depth + 1,
            op,
            candidate: candidate.clone(),
            fitness: None,
            value: p.value,
            q: p.q,
            visits: 0,
            pruned: false,
            exhausted: false,
        };
        self.nodes.push(child);
        self.nodes[parent].children.push(id);
        self.events.push(TreeEvent::Expand { parent, op, candidate });
        Ok(id)
    }

    /// Scores `node`, folds the new fitness into the extrema, propagates the
    /// discounted best-child value to every ancestor and refreshes all `q`.
    pub fn backpropagate(&mut self, node: NodeId, fitness: f64) -> Result<(), TreeError> {
        if !fitness.is_finite() {
            return Err(TreeError::NonFinite(fitness));
        }
        if self.get(node)?.fitness.is_some() {
            return Err(TreeError::AlreadyEvaluated(node));
        }
        self.q_min = self.q_min.min(fitness);
        self.q_max = self.q_max.max(fitness);
        let at = self.ranked.partition_point(|&f| f >= fitness);
        self.ranked.insert(at, fitness);

        self.nodes[node].fitness = Some(fitness);
        self.nodes[node].value = fitness;
        let gamma = self.config.gamma;
        let mut cur = self.nodes[node].parent;
        while let Some(p) = cur {
            let best_child = self.nodes[p]
                .children
                .iter()
                .map(|&c| self.nodes[c].value)
                .fold(f64::NEG_INFINITY, f64::max);
            let n = &mut self.nodes[p];
            n.value = n.value * (1.0 - gamma) + best_child * gamma;
            cur = n.parent;
        }
        self.refresh_q();

        self.t += 1;
        let best = self.best_fitness();
        self.best_history.push(best);
        self.events.push(TreeEvent::Backpropagate { node, fitness });
        Ok(())
    }

    /// Records an expansion attempt that produced no node; it still consumes budget.
    pub fn skip(&mut self, parent: NodeId) -> Result<(), TreeError> {
        self.get(parent)?;
        self.t += 1;
        self.events.push(TreeEvent::Skip { parent });
        Ok(())
    }

    /// Removes `node` from selection because nothing below it can expand, and
    /// propagates to ancestors whose children are all exhausted.
    pub fn mark_exhausted(&mut self, node: NodeId) -> Result<(), TreeError> {
        self.get(node)?;
        self.events.push(TreeEvent::Exhaust { node });
        let mut cur = Some(node);
        while let Some(id) = cur {
            self.nodes[id].exhausted = true;
            cur = self.nodes[id].parent.filter(|&p| {
                let n = &self.nodes[p];
                n.depth >= self.config.max_depth || n.children.iter().all(|&c| self.nodes[c].exhausted || self.nodes[c].pruned)
            });
        }
        Ok(())
    }

    pub fn is_exhausted(&self) -> bool {
        self.nodes[ROOT].exhausted
    }

    /// Recomputes pruning marks on leaves and the convergence flag.
    pub fn maintenance(&mut self) -> Maintenance {
        let mut pruned = Vec::new();
        for id in 1..self.nodes.len() {
            let mark = self.prunable(id);
            self.nodes[id].pruned = mark;
            if mark {
                pruned.push(id);
            }
        }
        let w = self.config.convergence_window;
        let h = &self.best_history;
        self.converged = w > 0 && h.len() > w && {
            let then = h[h.len() - 1 - w];
            let now = h[h.len() - 1];
            now - then < self.config.convergence_tol * then.abs()
        };
        self.events.push(TreeEvent::Maintain);
        Maintenance { pruned, converged: self.converged }
    }

    fn prunable(&self, id: NodeId) -> bool {
        let n = &self.nodes[id];
        if !n.children.is_empty() || n.fitness.is_none() {
            return false;
        }
        let Some(parent) = n.parent else { return false };
        let mut sib: Vec<f64> = self.nodes[parent]
            .children
            .iter()
            .filter(|&&c| c != id && self.nodes[c].fitness.is_some())
            .map(|&c| self.nodes[c].q)
            .collect();
        if sib.len() < self.config.prune_min_siblings {
            return false;
        }
        sib.sort_by(f64::total_cmp);
        let m = sib.len();
        let median = if m % 2 == 1 { sib[m / 2] } else { 0.5 * (sib[m / 2 - 1] + sib[m / 2]) };
        n.q < median - self.config.prune_margin
    }

    fn refresh_q(&mut self) {
        let (lo, span) = (self.q_min, self.q_max - self.q_min + self.config.epsilon);
        for n in &mut self.nodes {
            n.q = ((n.value - lo) / span).clamp(0.0, 1.0);
        }
    }

    pub fn best_fitness(&self) -> f64 {
        self.ranked[0]
    }

    /// Highest-fitness evaluated node; ties go to the lowest id.
    pub fn best(&self) -> NodeId {
        let mut best = ROOT;
        for n in &self.nodes {
            if let Some(f) = n.fitness {
                if f > self.nodes[best].fitness.unwrap_or(f64::NEG_INFINITY) {
                    best = n.id;
                }
            }
        }
        best
    }

    /// Node ids from the root down to `id`.
    pub fn path(&self, id: NodeId) -> Vec<NodeId> {
        let mut p = vec![id];
        let mut cur = self.nodes[id].parent;
        while let Some(c) = cur {
            p.push(c);
            cur = self.nodes[c].parent;
        }
        p.reverse();
        p
    }

    pub fn at_depth(&self, depth: u32) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(move |n| n.depth == depth)
    }

    /// Rebuilds a tree by re-applying a recorded event log. Selections are
    /// recomputed and must land on the recorded leaf.
    pub fn replay(config: TreeConfig, budget: u64, events: &[TreeEvent]) -> Result<Self, TreeError> {
        let bad = |index: usize, reason: String| TreeError::Replay { index, reason };
        let Some(TreeEvent::Root { candidate, fitness }) = events.first() else {
            return Err(bad(0, "log must start with the root".into()));
        };
        let mut tree = SearchTree::new(config, budget, candidate.clone(), *fitness)?;
        for (i, e) in events.iter().enumerate().skip(1) {
            match e {
                TreeEvent::Root { .. } => return Err(bad(i, "second root".into())),
                TreeEvent::Select { leaf } => {
                    let got = tree.select_leaf();
                    if got != *leaf {
                        return Err(bad(i, format!("selection reached {got}, log says {leaf}")));
                    }
                }
                TreeEvent::Expand { parent, op, candidate } => {
                    tree.expand(*parent, *op, candidate.clone()).map_err(|err| bad(i, err.to_string()))?;
                }
                TreeEvent::Backpropagate { node, fitness } => {
                    tree.backpropagate(*node, *fitness).map_err(|err| bad(i, err.to_string()))?
                }
                TreeEvent::Skip { parent } => tree.skip(*parent).map_err(|err| bad(i, err.to_string()))?,
                TreeEvent::Exhaust { node } => tree.mark_exhausted(*node).map_err(|err| bad(i, err.to_string()))?,
                TreeEvent::Maintain => {
                    tree.maintenance();
                }
            }
        }
        Ok(tree)
    }

    pub fn export(&self) -> TreeExport {
        TreeExport {
            budget: self.budget,
            t: self.t,
            q_min: self.q_min,
            q_max: self.q_max,
            converged: self.converged,
            best: self.best(),
            config: self.config,
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeExport {
                    id: n.id,
                    parent: n.parent,
                    depth: n.depth,
                    op: n.op,
                    fitness: n.fitness,
                    q: n.q,
                    visits: n.visits,
                    design_idea: n.candidate.idea.clone(),
                    reflection: n.candidate.reflection.clone(),
                    description: n.candidate.description.clone(),
                    code: n.candidate.code.clone(),
                    children: n.children.clone(),
                    pruned: n.pruned,
                })
                .collect(),
        }
    }
}

/// UCT with adaptive exploration constant `c` already applied.
pub fn uct(q: f64, parent_visits: u64, visits: u64, c: f64, epsilon: f64) -> f64 {
    let explore = ((parent_visits as f64 + 1.0).ln() / (visits as f64 + epsilon)).sqrt();
    q + c * explore
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeExport {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub depth: u32,
    pub op: OpKind,
    pub fitness: Option<f64>,
    pub q: f64,
    pub visits: u64,
    pub design_idea: String,
    pub reflection: String,
    pub description: String,
    pub code: String,
    pub children: Vec<NodeId>,
    pub pruned: bool,
}

/// Serialized tree for plotting and inspection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeExport {
    pub budget: u64,
    pub t: u64,
    pub q_min: f64,
    pub q_max: f64,
    pub converged: bool,
    pub best: NodeId,
    pub config: TreeConfig,
    pub nodes: Vec<NodeExport>,
}

impl TreeExport {
    /// Graphviz rendering: one box per node labelled with op and fitness.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph search {\n  node [shape=box, fontsize=10];\n");
        for n in &self.nodes {
            let fit = n.fitness.map_or("-".to_string(), |f| format!("{f:.2}"));
            let style = if n.id == self.best { ", style=bold" } else if n.pruned { ", style=dashed" } else { "" };
            s += &format!("  n{} [label=\"#{} {}\\n{}\"{}];\n", n.id, n.id, n.op, fit, style);
        }
        for n in &self.nodes {
            if let Some(p) = n.parent {
                s += &format!("  n{p} -> n{};\n", n.id);
            }
        }
        s.push_str("}\n");
        s
    }
}
