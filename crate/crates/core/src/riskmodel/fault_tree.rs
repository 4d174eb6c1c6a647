use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{check_probability, check_rate, QuantifiedRisk, Result, RiskModelError, Severity};
use crate::numeric::decimal_product;

/// Per-demand probability or a yearly rate. Fault trees only accept the former.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Likelihood {
    Probability(f64),
    Rate(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasicEvent {
    pub id: String,
    #[serde(default)]
    pub description: String,
    pub likelihood: Likelihood,
}

impl BasicEvent {
    pub fn with_probability(id: impl Into<String>, p: f64) -> Self {
        BasicEvent {
            id: id.into(),
            description: String::new(),
            likelihood: Likelihood::Probability(p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GateKind {
    And,
    Or,
    KOfN { k: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    #[serde(flatten)]
    pub kind: GateKind,
    pub children: Vec<String>,
}

impl Gate {
    pub fn and<S: Into<String>>(children: impl IntoIterator<Item = S>) -> Self {
        Gate::new(GateKind::And, children)
    }

    pub fn or<S: Into<String>>(children: impl IntoIterator<Item = S>) -> Self {
        Gate::new(GateKind::Or, children)
    }

    pub fn k_of_n<S: Into<String>>(k: usize, children: impl IntoIterator<Item = S>) -> Self {
        Gate::new(GateKind::KOfN { k }, children)
    }

    fn new<S: Into<String>>(kind: GateKind, children: impl IntoIterator<Item = S>) -> Self {
        Gate {
            kind,
            children: children.into_iter().map(Into::into).collect(),
        }
    }
}

/// Coherent fault tree over independent basic events. `top` names either a
/// gate or a basic event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultTree {
    pub top: String,
    #[serde(default)]
    pub gates: BTreeMap<String, Gate>,
    pub basic_events: Vec<BasicEvent>,
}

/// A minimal cut set: basic-event ids whose joint occurrence causes the top event.
pub type CutSet = BTreeSet<String>;

/// Fault tree plus the demand frequency and consequence that turn its
/// top-event probability into a harm rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultTreeModel {
    pub id: String,
    #[serde(default)]
    pub description: String,
    /// Demands (attempts) per year on the system the tree describes.
    pub demand_frequency: f64,
    pub severity: Severity,
    pub tree: FaultTree,
}

impl FaultTreeModel {
    pub fn validate(&self) -> Result<()> {
        check_rate(&self.id, self.demand_frequency)?;
        self.severity.validate()?;
        CompiledTree::compile(&self.tree).map(|_| ())
    }

    pub fn quantify(&self, overrides: Option<&BTreeMap<String, f64>>) -> Result<QuantifiedRisk> {
        check_rate(&self.id, self.demand_frequency)?;
        let p = eval_fault_tree(&self.tree, overrides)?;
        Ok(QuantifiedRisk::point(
            decimal_product(&[self.demand_frequency, p]),
            self.severity.clone(),
        ))
    }
}

#[derive(Debug, Clone)]
enum Node {
    Basic(usize),
    Gate {
        kind: GateKind,
        children: Vec<usize>,
    },
}

/// Index-based form of a validated tree. Basic events occupy node indices
/// `0..n_basic` in declaration order; gates follow.
#[derive(Debug, Clone)]
pub(crate) struct CompiledTree {
    nodes: Vec<Node>,
    top: usize,
    pub(crate) event_ids: Vec<String>,
    pub(crate) probabilities: Vec<f64>,
    /// Reachable nodes, children before parents.
    order: Vec<usize>,
    /// Basic events reachable from the top along more than one path.
    shared: Vec<usize>,
}

impl CompiledTree {
    pub(crate) fn compile(tree: &FaultTree) -> Result<Self> {
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut nodes = Vec::new();
        let mut event_ids = Vec::new();
        let mut probabilities = Vec::new();

        for (i, ev) in tree.basic_events.iter().enumerate() {
            if index.insert(ev.id.as_str(), i).is_some() {
                return Err(RiskModelError::DuplicateId { id: ev.id.clone() });
            }
            let p = match ev.likelihood {
                Likelihood::Probability(p) => p,
                Likelihood::Rate(_) => {
                    return Err(RiskModelError::RateInFaultTree { id: ev.id.clone() })
                }
            };
            check_probability(&ev.id, p)?;
            nodes.push(Node::Basic(i));
            event_ids.push(ev.id.clone());
            probabilities.push(p);
        }
        let n_basic = nodes.len();
        for (offset, id) in tree.gates.keys().enumerate() {
            if index.insert(id.as_str(), n_basic + offset).is_some() {
                return Err(RiskModelError::DuplicateId { id: id.clone() });
            }
        }
        for (id, gate) in &tree.gates {
            if gate.children.is_empty() {
                return Err(RiskModelError::InvalidGate {
                    gate: id.clone(),
                    reason: "gate has no children".into(),
                });
            }
            if let GateKind::KOfN { k } = gate.kind {
                if k == 0 || k > gate.children.len() {
                    return Err(RiskModelError::InvalidGate {
                        gate: id.clone(),
                        reason: format!("k = {k} outside 1..={}", gate.children.len()),
                    });
                }
            }
            let children = gate
                .children
                .iter()
                .map(|c| {
                    index
                        .get(c.as_str())
                        .copied()
                        .ok_or_else(|| RiskModelError::UnknownEventId { id: c.clone() })
                })
                .collect::<Result<Vec<_>>>()?;
            nodes.push(Node::Gate {
                kind: gate.kind,
                children,
            });
        }
        let top = *index
            .get(tree.top.as_str())
            .ok_or_else(|| RiskModelError::UnknownEventId {
                id: tree.top.clone(),
            })?;

        let name_of = |n: usize| -> String {
            if n < n_basic {
                event_ids[n].clone()
            } else {
                tree.gates
                    .keys()
                    .nth(n - n_basic)
                    .cloned()
                    .unwrap_or_default()
            }
        };
        let cyclic = |n: usize| RiskModelError::CyclicTree { node: name_of(n) };
        // The whole graph must be acyclic, not only the part under `top`.
        topological_order(&nodes, &(n_basic..nodes.len()).collect::<Vec<_>>()).map_err(cyclic)?;
        let order = topological_order(&nodes, &[top]).map_err(cyclic)?;

        // Count paths from the top (saturating at 2) to find shared events.
        let mut paths = vec![0u8; nodes.len()];
        paths[top] = 1;
        for &n in order.iter().rev() {
            if let Node::Gate { children, .. } = &nodes[n] {
                for &c in children {
                    paths[c] = paths[c].saturating_add(paths[n]).min(2);
                }
            }
        }
        let shared = (0..n_basic).filter(|&i| paths[i] >= 2).collect();

        Ok(CompiledTree {
            nodes,
            top,
            event_ids,
            probabilities,
            order,
            shared,
        })
    }

    fn index_of(&self, id: &str) -> Option<usize> {
        self.event_ids.iter().position(|e| e == id)
    }

    pub(crate) fn apply_overrides(&self, overrides: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
        let mut probs = self.probabilities.clone();
        for (id, &p) in overrides {
            let i = self
                .index_of(id)
                .ok_or_else(|| RiskModelError::UnknownEventId { id: id.clone() })?;
            check_probability(id, p)?;
            probs[i] = p;
        }
        Ok(probs)
    }

    /// Exact top-event probability. Events reachable along several paths are
    /// conditioned on (both truth values enumerated); with those fixed, the
    /// children of every gate have disjoint supports and gate algebra is exact.
    pub(crate) fn top_probability(&self, probs: &[f64]) -> f64 {
        let mut scratch = probs.to_vec();
        let mut node_p = vec![0.0; self.nodes.len()];
        self.condition(0, 1.0, &mut scratch, &mut node_p)
    }

    fn condition(&self, depth: usize, weight: f64, probs: &mut [f64], node_p: &mut [f64]) -> f64 {
        if weight == 0.0 {
            return 0.0;
        }
        if depth == self.shared.len() {
            return weight * self.gate_algebra(probs, node_p);
        }
        let ev = self.shared[depth];
        let p = probs[ev];
        probs[ev] = 1.0;
        let when_true = self.condition(depth + 1, weight * p, probs, node_p);
        probs[ev] = 0.0;
        let when_false = self.condition(depth + 1, weight * (1.0 - p), probs, node_p);
        probs[ev] = p;
        when_true + when_false
    }

    fn gate_algebra(&self, probs: &[f64], node_p: &mut [f64]) -> f64 {
        for &n in &self.order {
            node_p[n] = match &self.nodes[n] {
                Node::Basic(i) => probs[*i],
                Node::Gate { kind, children } => match kind {
                    GateKind::And => children.iter().map(|&c| node_p[c]).product(),
                    GateKind::Or => {
                        1.0 - children.iter().map(|&c| 1.0 - node_p[c]).product::<f64>()
                    }
                    GateKind::KOfN { k } => at_least_k(children.iter().map(|&c| node_p[c]), *k),
                },
            };
        }
        node_p[self.top]
    }

    /// Cut-set families per node, built bottom-up and minimized at every step.
    fn cut_sets(&self) -> Vec<Vec<usize>> {
        let mut families: Vec<Option<Vec<Vec<usize>>>> = vec![None; self.nodes.len()];
        for &n in &self.order {
            let family = match &self.nodes[n] {
                Node::Basic(i) => vec![vec![*i]],
                Node::Gate { kind, children } => {
                    let kids: Vec<&Vec<Vec<usize>>> = children
                        .iter()
                        .map(|&c| families[c].as_ref().expect("children precede parents"))
                        .collect();
                    match kind {
                        GateKind::Or => {
                            minimize(kids.iter().flat_map(|f| f.iter().cloned()).collect())
                        }
                        GateKind::And => and_families(&kids),
                        GateKind::KOfN { k } => {
                            let mut all = Vec::new();
                            for combo in combinations(kids.len(), *k) {
                                let chosen: Vec<&Vec<Vec<usize>>> =
                                    combo.iter().map(|&i| kids[i]).collect();
                                all.extend(and_families(&chosen));
                            }
                            minimize(all)
                        }
                    }
                }
            };
            families[n] = Some(family);
        }
        families[self.top].take().unwrap_or_default()
    }
}

/// Depth-first post-order from `roots`; `Err(node)` names a node on a cycle.
fn topological_order(nodes: &[Node], roots: &[usize]) -> std::result::Result<Vec<usize>, usize> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let mut marks = vec![Mark::New; nodes.len()];
    let mut order = Vec::new();
    for &root in roots {
        if marks[root] != Mark::New {
            continue;
        }
        // Explicit stack of (node, next child index) to avoid deep recursion.
        let mut stack = vec![(root, 0usize)];
        marks[root] = Mark::Active;
        while let Some((n, next)) = stack.last_mut() {
            let n = *n;
            let children: &[usize] = match &nodes[n] {
                Node::Gate { children, .. } => children,
                Node::Basic(_) => &[],
            };
            if *next < children.len() {
                let c = children[*next];
                *next += 1;
                match marks[c] {
                    Mark::New => {
                        marks[c] = Mark::Active;
                        stack.push((c, 0));
                    }
                    Mark::Active => return Err(c),
                    Mark::Done => {}
                }
            } else {
                marks[n] = Mark::Done;
                order.push(n);
                stack.pop();
            }
        }
    }
    Ok(order)
}

/// P(at least `k` of independent events occur).
fn at_least_k(probs: impl Iterator<Item = f64>, k: usize) -> f64 {
    // dist[j] = P(exactly j occurred so far)
    let mut dist = vec![1.0];
    for p in probs {
        let mut next = vec![0.0; dist.len() + 1];
        for (j, &d) in dist.iter().enumerate() {
            next[j] += d * (1.0 - p);
            next[j + 1] += d * p;
        }
        dist = next;
    }
    dist.iter().skip(k).sum()
}

fn and_families(kids: &[&Vec<Vec<usize>>]) -> Vec<Vec<usize>> {
    let mut acc: Vec<Vec<usize>> = vec![Vec::new()];
    for family in kids {
        let mut next = Vec::with_capacity(acc.len() * family.len());
        for a in &acc {
            for b in family.iter() {
                next.push(sorted_union(a, b));
            }
        }
        acc = minimize(next);
    }
    acc
}

fn sorted_union(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        if j == b.len() || (i < a.len() && a[i] < b[j]) {
            out.push(a[i]);
            i += 1;
        } else if i == a.len() || b[j] < a[i] {
            out.push(b[j]);
            j += 1;
        } else {
            out.push(a[i]);
            i += 1;
            j += 1;
        }
    }
    out
}

fn is_subset(small: &[usize], big: &[usize]) -> bool {
    let mut j = 0;
    for &x in small {
        while j < big.len() && big[j] < x {
            j += 1;
        }
        if j == big.len() || big[j] != x {
            return false;
        }
        j += 1;
    }
    true
}

/// Drops duplicates and every set that contains another set of the family.
fn minimize(mut family: Vec<Vec<usize>>) -> Vec<Vec<usize>> {
    family.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    family.dedup();
    let mut kept: Vec<Vec<usize>> = Vec::new();
    for set in family {
        if !kept.iter().any(|k| is_subset(k, &set)) {
            kept.push(set);
        }
    }
    kept
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(k);
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    go(0, n, k, &mut current, &mut out);
    out
}

/// Exact top-event probability under independent basic events.
///
/// `overrides` replaces the probabilities of the named basic events.
pub fn eval_fault_tree(tree: &FaultTree, overrides: Option<&BTreeMap<String, f64>>) -> Result<f64> {
    let compiled = CompiledTree::compile(tree)?;
    let probs = match overrides {
        Some(o) => compiled.apply_overrides(o)?,
        None => compiled.probabilities.clone(),
    };
    Ok(compiled.top_probability(&probs))
}

/// Minimal cut sets of a coherent tree, sorted.
pub fn minimal_cut_sets(tree: &FaultTree) -> Result<BTreeSet<CutSet>> {
    let compiled = CompiledTree::compile(tree)?;
    Ok(compiled
        .cut_sets()
        .into_iter()
        .map(|set| {
            set.into_iter()
                .map(|i| compiled.event_ids[i].clone())
                .collect()
        })
        .collect())
}
