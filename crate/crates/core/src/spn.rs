//! The sum-product network IR: a rooted DAG of weighted sum nodes, product
//! nodes, indicator leaves and univariate distribution leaves over
//! finite-domain variables, plus scope computation and exact evaluation of
//! the network polynomial.
//!
//! Graphs are immutable once handed out; every transformation in this crate
//! produces a new graph. Iteration order is deterministic everywhere: nodes
//! are visited in ascending id and children in declaration order, so all
//! derived outputs are reproducible.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};

/// Models are capped at this many variables so scopes fit in a bitset.
pub const MAX_VARIABLES: usize = 128;

/// Per-variable domains are capped so value sets fit in a machine word.
pub const MAX_DOMAIN: usize = 64;

/// Index of a variable within its model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub u32);

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Identifier of a node within one [`SpnGraph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A finite-domain random variable. Boolean variables use value index 0 for
/// the positive literal `x` and 1 for the negated literal `!x`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    pub name: String,
    pub domain_size: usize,
}

/// Set of variables, used for scopes.
#[derive(Clone, Copy, PartialEq, Eq, Default, Hash, PartialOrd, Ord)]
pub struct VarSet(u128);

impl VarSet {
    pub fn empty() -> Self {
        VarSet(0)
    }

    pub fn singleton(v: VarId) -> Self {
        VarSet(1u128 << v.0)
    }

    pub fn insert(&mut self, v: VarId) {
        self.0 |= 1u128 << v.0;
    }

    pub fn contains(&self, v: VarId) -> bool {
        self.0 >> v.0 & 1 == 1
    }

    pub fn union(self, other: VarSet) -> VarSet {
        VarSet(self.0 | other.0)
    }

    pub fn intersection(self, other: VarSet) -> VarSet {
        VarSet(self.0 & other.0)
    }

    pub fn difference(self, other: VarSet) -> VarSet {
        VarSet(self.0 & !other.0)
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_subset(&self, other: &VarSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = VarId> + '_ {
        (0..128u32).filter(|i| self.0 >> i & 1 == 1).map(VarId)
    }
}

impl fmt::Debug for VarSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Node payload. Sum weights live on the node, parallel to its child list.
#[derive(Debug, Clone, PartialEq)]
pub enum SpnNodeKind {
    Sum,
    Product,
    Indicator { var: VarId, value: usize },
    /// Univariate distribution leaf; `probs` sums to 1 within tolerance.
    TerminalDist { var: VarId, probs: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpnNode {
    pub kind: SpnNodeKind,
    pub children: Vec<NodeId>,
    /// Nonempty only for sum nodes; parallel to `children`.
    pub weights: Vec<f64>,
}

impl SpnNode {
    pub fn is_sum(&self) -> bool {
        matches!(self.kind, SpnNodeKind::Sum)
    }

    pub fn is_product(&self) -> bool {
        matches!(self.kind, SpnNodeKind::Product)
    }

    pub fn is_leaf(&self) -> bool {
        matches!(
            self.kind,
            SpnNodeKind::Indicator { .. } | SpnNodeKind::TerminalDist { .. }
        )
    }
}

/// Partial assignment of values to variables; unset variables are
/// marginalized by queries.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Assignment(BTreeMap<VarId, usize>);

impl Assignment {
    pub fn new() -> Self {
        Assignment(BTreeMap::new())
    }

    pub fn set(&mut self, var: VarId, value: usize) {
        self.0.insert(var, value);
    }

    pub fn with(mut self, var: VarId, value: usize) -> Self {
        self.set(var, value);
        self
    }

    pub fn get(&self, var: VarId) -> Option<usize> {
        self.0.get(&var).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (VarId, usize)> + '_ {
        self.0.iter().map(|(v, x)| (*v, *x))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Dense per-value inputs for the indicator variables, one vector per model
/// variable. Evaluating the network polynomial at one-hot inputs yields
/// coefficients; setting every input of a variable to 1 marginalizes it.
#[derive(Debug, Clone, Default)]
pub struct IndicatorValues(BTreeMap<VarId, Vec<f64>>);

impl IndicatorValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, var: VarId, values: Vec<f64>) {
        self.0.insert(var, values);
    }

    pub fn get(&self, var: VarId, value: usize) -> Option<f64> {
        self.0.get(&var).and_then(|vs| vs.get(value)).copied()
    }

    /// One-hot inputs for assigned variables, all-ones for unset ones.
    pub fn from_evidence(spn: &SpnGraph, evidence: &Assignment) -> Result<Self> {
        let mut iv = IndicatorValues::new();
        for (id, var) in spn.variables().enumerate() {
            let vid = VarId(id as u32);
            match evidence.get(vid) {
                Some(value) => {
                    if value >= var.domain_size {
                        return Err(Error::ValueOutOfRange {
                            variable: var.name.clone(),
                            value,
                        });
                    }
                    let mut one_hot = vec![0.0; var.domain_size];
                    one_hot[value] = 1.0;
                    iv.set(vid, one_hot);
                }
                None => iv.set(vid, vec![1.0; var.domain_size]),
            }
        }
        Ok(iv)
    }
}

/// Node, edge and size/height counts of the subgraph reachable from the root.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SizeMetrics {
    pub nodes: usize,
    pub edges: usize,
    /// `nodes + edges`, the size measure used by all bounds in this crate.
    pub size: usize,
    /// Length in edges of the longest root-to-leaf path.
    pub height: usize,
}

/// Scope of every reachable node.
pub type ScopeMap = BTreeMap<NodeId, VarSet>;

/// The circuit itself. See the module docs for conventions.
#[derive(Debug, Clone)]
pub struct SpnGraph {
    name: String,
    variables: Vec<Variable>,
    nodes: BTreeMap<NodeId, SpnNode>,
    root: Option<NodeId>,
    next_id: u32,
}

impl SpnGraph {
    pub fn new(name: impl Into<String>) -> Self {
        SpnGraph {
            name: name.into(),
            variables: Vec::new(),
            nodes: BTreeMap::new(),
            root: None,
            next_id: 0,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    pub fn add_variable(&mut self, name: impl Into<String>, domain_size: usize) -> Result<VarId> {
        let name = name.into();
        if self.variables.len() >= MAX_VARIABLES {
            return Err(Error::TooManyVariables(MAX_VARIABLES));
        }
        if !(2..=MAX_DOMAIN).contains(&domain_size) {
            return Err(Error::ValueOutOfRange {
                variable: name,
                value: domain_size,
            });
        }
        if self.variables.iter().any(|v| v.name == name) {
            return Err(Error::UnknownVariable(format!("duplicate variable {name}")));
        }
        self.variables.push(Variable { name, domain_size });
        Ok(VarId(self.variables.len() as u32 - 1))
    }

    /// Copies another model's variable table (used when rebuilding graphs).
    pub fn with_variables_of(name: impl Into<String>, other: &SpnGraph) -> Self {
        let mut g = SpnGraph::new(name);
        g.variables = other.variables.clone();
        g
    }

    pub(crate) fn with_variable_table(name: impl Into<String>, variables: Vec<Variable>) -> Self {
        let mut g = SpnGraph::new(name);
        g.variables = variables;
        g
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn variable(&self, var: VarId) -> &Variable {
        &self.variables[var.0 as usize]
    }

    pub fn variables(&self) -> impl Iterator<Item = &Variable> {
        self.variables.iter()
    }

    pub fn var_ids(&self) -> impl Iterator<Item = VarId> {
        (0..self.variables.len() as u32).map(VarId)
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.variables
            .iter()
            .position(|v| v.name == name)
            .map(|i| VarId(i as u32))
    }

    fn insert(&mut self, node: SpnNode) -> NodeId {
        let id = NodeId(self.next_id);
        self.next_id += 1;
        self.nodes.insert(id, node);
        id
    }

    /// Inserts a node under an explicit id (the text parser preserves
    /// document ids). Fails on duplicates.
    pub(crate) fn insert_with_id(&mut self, id: NodeId, node: SpnNode) -> Result<()> {
        if self.nodes.contains_key(&id) {
            return Err(Error::UnknownNode(id));
        }
        self.next_id = self.next_id.max(id.0 + 1);
        self.nodes.insert(id, node);
        Ok(())
    }

    fn check_child(&self, id: NodeId) -> Result<()> {
        if self.nodes.contains_key(&id) {
            Ok(())
        } else {
            Err(Error::UnknownNode(id))
        }
    }

    pub fn add_indicator(&mut self, var: VarId, value: usize) -> Result<NodeId> {
        let v = self
            .variables
            .get(var.0 as usize)
            .ok_or_else(|| Error::UnknownVariable(var.to_string()))?;
        if value >= v.domain_size {
            return Err(Error::ValueOutOfRange {
                variable: v.name.clone(),
                value,
            });
        }
        Ok(self.insert(SpnNode {
            kind: SpnNodeKind::Indicator { var, value },
            children: Vec::new(),
            weights: Vec::new(),
        }))
    }

    /// Returns an existing indicator node for `(var, value)` if any.
    pub fn find_indicator(&self, var: VarId, value: usize) -> Option<NodeId> {
        self.nodes.iter().find_map(|(id, n)| match n.kind {
            SpnNodeKind::Indicator { var: v, value: x } if v == var && x == value => Some(*id),
            _ => None,
        })
    }

    pub fn add_terminal_dist(&mut self, var: VarId, probs: Vec<f64>) -> Result<NodeId> {
        let v = self
            .variables
            .get(var.0 as usize)
            .ok_or_else(|| Error::UnknownVariable(var.to_string()))?;
        if probs.len() != v.domain_size {
            return Err(Error::DomainMismatch {
                expected: v.domain_size,
                got: probs.len(),
            });
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0)
            || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::ValueOutOfRange {
                variable: format!("distribution over {} does not sum to 1", v.name),
                value: probs.len(),
            });
        }
        Ok(self.insert(SpnNode {
            kind: SpnNodeKind::TerminalDist { var, probs },
            children: Vec::new(),
            weights: Vec::new(),
        }))
    }

    pub fn add_sum(&mut self, children: &[(NodeId, f64)]) -> Result<NodeId> {
        if children.is_empty() {
            return Err(Error::MissingRoot);
        }
        let mut seen = BTreeSet::new();
        for (c, w) in children {
            self.check_child(*c)?;
            if !w.is_finite() || *w < 0.0 {
                return Err(Error::ValueOutOfRange {
                    variable: format!("sum weight {w}"),
                    value: 0,
                });
            }
            if !seen.insert(*c) {
                return Err(Error::UnknownNode(*c));
            }
        }
        Ok(self.insert(SpnNode {
            kind: SpnNodeKind::Sum,
            children: children.iter().map(|(c, _)| *c).collect(),
            weights: children.iter().map(|(_, w)| *w).collect(),
        }))
    }

    pub fn add_product(&mut self, children: &[NodeId]) -> Result<NodeId> {
        if children.is_empty() {
            return Err(Error::MissingRoot);
        }
        let mut seen = BTreeSet::new();
        for c in children {
            self.check_child(*c)?;
            if !seen.insert(*c) {
                return Err(Error::UnknownNode(*c));
            }
        }
        Ok(self.insert(SpnNode {
            kind: SpnNodeKind::Product,
            children: children.to_vec(),
            weights: Vec::new(),
        }))
    }

    pub fn set_root(&mut self, id: NodeId) -> Result<()> {
        self.check_child(id)?;
        self.root = Some(id);
        Ok(())
    }

    pub fn root(&self) -> Result<NodeId> {
        self.root.ok_or(Error::MissingRoot)
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn node(&self, id: NodeId) -> &SpnNode {
        &self.nodes[&id]
    }

    pub fn get_node(&self, id: NodeId) -> Option<&SpnNode> {
        self.nodes.get(&id)
    }

    /// All node ids currently present, ascending.
    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    // ------------------------------------------------------------------
    // Mutation helpers for the rewrite passes. These keep the graph acyclic
    // because new edges always point at pre-existing nodes.
    // ------------------------------------------------------------------

    pub(crate) fn node_mut(&mut self, id: NodeId) -> &mut SpnNode {
        self.nodes.get_mut(&id).expect("node exists")
    }

    pub(crate) fn remove_node(&mut self, id: NodeId) {
        self.nodes.remove(&id);
    }

    /// Removes the edge `parent -> child`, returning the detached weight for
    /// sum parents.
    pub(crate) fn remove_edge(&mut self, parent: NodeId, child: NodeId) -> Option<f64> {
        let node = self.node_mut(parent);
        let idx = node.children.iter().position(|c| *c == child)?;
        node.children.remove(idx);
        if node.is_sum() {
            Some(node.weights.remove(idx))
        } else {
            None
        }
    }

    pub(crate) fn add_child(&mut self, parent: NodeId, child: NodeId) {
        debug_assert!(self.nodes.contains_key(&child));
        let node = self.node_mut(parent);
        debug_assert!(!node.is_sum());
        node.children.push(child);
    }

    pub(crate) fn add_sum_child(&mut self, parent: NodeId, child: NodeId, weight: f64) {
        debug_assert!(self.nodes.contains_key(&child));
        let node = self.node_mut(parent);
        debug_assert!(node.is_sum());
        node.children.push(child);
        node.weights.push(weight);
    }

    /// Replaces `old` with `new` in `parent`'s child list, keeping position
    /// and (for sums) the edge weight.
    pub(crate) fn replace_child(&mut self, parent: NodeId, old: NodeId, new: NodeId) {
        let node = self.node_mut(parent);
        for c in node.children.iter_mut() {
            if *c == old {
                *c = new;
            }
        }
    }

    /// Drops the edge `parent -> child`; exposed for test tooling.
    #[doc(hidden)]
    pub fn test_remove_edge(&mut self, parent: NodeId, child: NodeId) {
        self.remove_edge(parent, child);
    }

    /// Removes unreachable nodes; exposed for test tooling.
    #[doc(hidden)]
    pub fn test_prune(&mut self) -> Result<()> {
        self.remove_unreachable()?;
        Ok(())
    }

    /// Map parent -> children positions, over all present nodes.
    pub fn parents_map(&self) -> BTreeMap<NodeId, Vec<NodeId>> {
        let mut parents: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for (id, node) in &self.nodes {
            for c in &node.children {
                parents.entry(*c).or_default().push(*id);
            }
        }
        parents
    }

    /// Nodes reachable from the root.
    pub fn reachable(&self) -> Result<BTreeSet<NodeId>> {
        let root = self.root()?;
        let mut seen = BTreeSet::new();
        let mut stack = vec![root];
        while let Some(id) = stack.pop() {
            if !seen.insert(id) {
                continue;
            }
            let node = self.nodes.get(&id).ok_or(Error::UnknownNode(id))?;
            stack.extend(node.children.iter().copied());
        }
        Ok(seen)
    }

    /// Nodes reachable from `start` (the sub-circuit rooted there), including
    /// `start` itself.
    pub fn descendants(&self, start: NodeId) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![start];
        while let Some(id) = stack.pop() {
            if !seen.insert(id) {
                continue;
            }
            if let Some(node) = self.nodes.get(&id) {
                stack.extend(node.children.iter().copied());
            }
        }
        seen
    }

    /// Drops every node not reachable from the root; returns how many went.
    pub(crate) fn remove_unreachable(&mut self) -> Result<usize> {
        let keep = self.reachable()?;
        let before = self.nodes.len();
        self.nodes.retain(|id, _| keep.contains(id));
        Ok(before - self.nodes.len())
    }

    /// Children-before-parents order over the reachable subgraph, breaking
    /// ties by ascending node id. Fails if a cycle is present.
    pub fn bottom_up_order(&self) -> Result<Vec<NodeId>> {
        let reachable = self.reachable()?;
        self.bottom_up_order_of(&reachable)
    }

    pub(crate) fn bottom_up_order_of(&self, members: &BTreeSet<NodeId>) -> Result<Vec<NodeId>> {
        let mut pending: BTreeMap<NodeId, usize> = BTreeMap::new();
        let mut rev: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for id in members {
            let node = self.nodes.get(id).ok_or(Error::UnknownNode(*id))?;
            let within: Vec<_> = node
                .children
                .iter()
                .filter(|c| members.contains(c))
                .copied()
                .collect();
            pending.insert(*id, within.len());
            for c in within {
                rev.entry(c).or_default().push(*id);
            }
        }
        let mut ready: BTreeSet<NodeId> = pending
            .iter()
            .filter(|(_, n)| **n == 0)
            .map(|(id, _)| *id)
            .collect();
        let mut order = Vec::with_capacity(members.len());
        while let Some(id) = ready.iter().next().copied() {
            ready.remove(&id);
            order.push(id);
            if let Some(parents) = rev.get(&id) {
                for p in parents {
                    let n = pending.get_mut(p).expect("member");
                    *n -= 1;
                    if *n == 0 {
                        ready.insert(*p);
                    }
                }
            }
        }
        if order.len() != members.len() {
            let witness = pending
                .iter()
                .find(|(id, _)| !order.contains(id))
                .map(|(id, _)| *id)
                .unwrap_or(NodeId(0));
            return Err(Error::Cycle(witness));
        }
        Ok(order)
    }

    /// Scope of every reachable node, computed bottom-up in one pass.
    pub fn scopes(&self) -> Result<ScopeMap> {
        let order = self.bottom_up_order()?;
        let mut scopes = ScopeMap::new();
        for id in order {
            let node = &self.nodes[&id];
            let scope = match node.kind {
                SpnNodeKind::Indicator { var, .. } | SpnNodeKind::TerminalDist { var, .. } => {
                    VarSet::singleton(var)
                }
                _ => node
                    .children
                    .iter()
                    .fold(VarSet::empty(), |acc, c| acc.union(scopes[c])),
            };
            scopes.insert(id, scope);
        }
        Ok(scopes)
    }

    /// Per-node map from variable to the set of value indices whose
    /// indicators occur in the subgraph (distribution leaves contribute the
    /// values of nonzero probability). Drives the consistency check and the
    /// decomposition pass.
    pub(crate) fn value_sets(&self) -> Result<BTreeMap<NodeId, BTreeMap<VarId, u64>>> {
        let order = self.bottom_up_order()?;
        let mut sets: BTreeMap<NodeId, BTreeMap<VarId, u64>> = BTreeMap::new();
        for id in order {
            let node = &self.nodes[&id];
            let mut m: BTreeMap<VarId, u64> = BTreeMap::new();
            match &node.kind {
                SpnNodeKind::Indicator { var, value } => {
                    m.insert(*var, 1u64 << value);
                }
                SpnNodeKind::TerminalDist { var, probs } => {
                    let mask = probs
                        .iter()
                        .enumerate()
                        .filter(|(_, p)| **p != 0.0)
                        .fold(0u64, |acc, (i, _)| acc | 1u64 << i);
                    m.insert(*var, mask);
                }
                _ => {
                    for c in &node.children {
                        for (var, mask) in &sets[c] {
                            *m.entry(*var).or_insert(0) |= mask;
                        }
                    }
                }
            }
            sets.insert(id, m);
        }
        Ok(sets)
    }

    // ------------------------------------------------------------------
    // Evaluation
    // ------------------------------------------------------------------

    /// Bottom-up evaluation of the network polynomial at the given indicator
    /// inputs; returns the root value.
    pub fn evaluate(&self, inputs: &IndicatorValues) -> Result<f64> {
        self.evaluate_from(self.root()?, inputs)
    }

    /// Evaluates the sub-circuit rooted at `start`.
    pub fn evaluate_from(&self, start: NodeId, inputs: &IndicatorValues) -> Result<f64> {
        if !self.contains(start) {
            return Err(Error::UnknownNode(start));
        }
        let members = self.descendants(start);
        let order = self.bottom_up_order_of(&members)?;
        let mut vals: BTreeMap<NodeId, f64> = BTreeMap::new();
        for id in order {
            let node = &self.nodes[&id];
            let v = match &node.kind {
                SpnNodeKind::Indicator { var, value } => {
                    inputs
                        .get(*var, *value)
                        .ok_or_else(|| Error::MissingIndicator {
                            variable: self.variable(*var).name.clone(),
                            value: *value,
                        })?
                }
                SpnNodeKind::TerminalDist { var, probs } => {
                    let mut acc = 0.0;
                    for (value, p) in probs.iter().enumerate() {
                        let ind =
                            inputs
                                .get(*var, value)
                                .ok_or_else(|| Error::MissingIndicator {
                                    variable: self.variable(*var).name.clone(),
                                    value,
                                })?;
                        acc += p * ind;
                    }
                    acc
                }
                SpnNodeKind::Product => node.children.iter().map(|c| vals[c]).product(),
                SpnNodeKind::Sum => node
                    .children
                    .iter()
                    .zip(&node.weights)
                    .map(|(c, w)| w * vals[c])
                    .sum(),
            };
            vals.insert(id, v);
        }
        Ok(vals[&start])
    }

    /// Unnormalized value of the network polynomial under partial evidence:
    /// assigned variables use one-hot inputs, unassigned ones are summed out
    /// by setting all their indicators to 1. Empty evidence yields the
    /// partition function.
    pub fn query(&self, evidence: &Assignment) -> Result<f64> {
        let inputs = IndicatorValues::from_evidence(self, evidence)?;
        self.evaluate(&inputs)
    }

    /// Node, edge, size and height counts over the reachable subgraph.
    pub fn size_metrics(&self) -> Result<SizeMetrics> {
        let order = self.bottom_up_order()?;
        let mut heights: BTreeMap<NodeId, usize> = BTreeMap::new();
        let mut edges = 0usize;
        for id in &order {
            let node = &self.nodes[id];
            edges += node.children.len();
            let h = node
                .children
                .iter()
                .map(|c| heights[c] + 1)
                .max()
                .unwrap_or(0);
            heights.insert(*id, h);
        }
        let nodes = order.len();
        Ok(SizeMetrics {
            nodes,
            edges,
            size: nodes + edges,
            height: heights[&self.root()?],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testfix::two_var_demo;

    #[test]
    fn scope_of_indicator_is_its_variable() {
        let mut g = SpnGraph::new("t");
        let x1 = g.add_variable("X1", 2).unwrap();
        let i = g.add_indicator(x1, 0).unwrap();
        g.set_root(i).unwrap();
        let scopes = g.scopes().unwrap();
        assert_eq!(scopes[&i], VarSet::singleton(x1));
    }

    #[test]
    fn scope_of_product_is_union_of_children() {
        let mut g = SpnGraph::new("t");
        let x1 = g.add_variable("X1", 2).unwrap();
        let x2 = g.add_variable("X2", 2).unwrap();
        let a = g.add_indicator(x1, 0).unwrap();
        let b = g.add_indicator(x2, 1).unwrap();
        let p = g.add_product(&[a, b]).unwrap();
        g.set_root(p).unwrap();
        let scopes = g.scopes().unwrap();
        let mut want = VarSet::singleton(x1);
        want.insert(x2);
        assert_eq!(scopes[&p], want);
    }

    #[test]
    fn demo_root_scope_covers_both_variables() {
        let g = two_var_demo();
        let scopes = g.scopes().unwrap();
        assert_eq!(scopes[&g.root().unwrap()].len(), 2);
    }

    #[test]
    fn demo_evaluates_caption_values() {
        let g = two_var_demo();
        let x1 = g.var_by_name("X1").unwrap();
        let x2 = g.var_by_name("X2").unwrap();

        let mut one_hot = IndicatorValues::new();
        one_hot.set(x1, vec![1.0, 0.0]);
        one_hot.set(x2, vec![1.0, 0.0]);
        assert_eq!(g.evaluate(&one_hot).unwrap(), 594.0);

        let mut all_ones = IndicatorValues::new();
        all_ones.set(x1, vec![1.0, 1.0]);
        all_ones.set(x2, vec![1.0, 1.0]);
        assert_eq!(g.evaluate(&all_ones).unwrap(), 3500.0);

        let mut zeros = IndicatorValues::new();
        zeros.set(x1, vec![0.0, 0.0]);
        zeros.set(x2, vec![0.0, 0.0]);
        assert_eq!(g.evaluate(&zeros).unwrap(), 0.0);
    }

    #[test]
    fn query_marginalizes_unset_variables() {
        let g = two_var_demo();
        let x1 = g.var_by_name("X1").unwrap();
        let x2 = g.var_by_name("X2").unwrap();
        let e = Assignment::new().with(x1, 1).with(x2, 0);
        assert_eq!(g.query(&e).unwrap(), 306.0);
        let half = Assignment::new().with(x1, 0);
        assert_eq!(g.query(&half).unwrap(), 594.0 + 1776.0);
        assert_eq!(g.query(&Assignment::new()).unwrap(), 3500.0);
    }

    #[test]
    fn missing_indicator_input_is_an_error() {
        let g = two_var_demo();
        let x1 = g.var_by_name("X1").unwrap();
        let mut partial = IndicatorValues::new();
        partial.set(x1, vec![1.0, 1.0]);
        let err = g.evaluate(&partial).unwrap_err();
        assert_eq!(err.code(), "missing-indicator");
    }

    #[test]
    fn demo_size_metrics() {
        let g = two_var_demo();
        let m = g.size_metrics().unwrap();
        assert_eq!(m.nodes, 12);
        assert_eq!(m.edges, 17);
        assert_eq!(m.size, 29);
        assert_eq!(m.height, 3);
    }

    #[test]
    fn single_leaf_metrics() {
        let mut g = SpnGraph::new("t");
        let x = g.add_variable("X1", 2).unwrap();
        let t = g.add_terminal_dist(x, vec![0.3, 0.7]).unwrap();
        g.set_root(t).unwrap();
        let m = g.size_metrics().unwrap();
        assert_eq!((m.nodes, m.edges, m.size, m.height), (1, 0, 1, 0));
    }

    #[test]
    fn chain_height() {
        let mut g = SpnGraph::new("t");
        let x = g.add_variable("X1", 2).unwrap();
        let i = g.add_indicator(x, 0).unwrap();
        let p = g.add_product(&[i]).unwrap();
        let s = g.add_sum(&[(p, 1.0)]).unwrap();
        g.set_root(s).unwrap();
        assert_eq!(g.size_metrics().unwrap().height, 2);
    }

    #[test]
    fn parallel_sum_edges_are_rejected() {
        let mut g = SpnGraph::new("t");
        let x = g.add_variable("X1", 2).unwrap();
        let i = g.add_indicator(x, 0).unwrap();
        assert!(g.add_sum(&[(i, 1.0), (i, 2.0)]).is_err());
    }
}
