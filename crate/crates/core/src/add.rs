//! Extended algebraic decision diagrams over finite-domain variables.
//!
//! Internal variable nodes branch on hidden variables (one branch per domain
//! value); terminals hold reals or univariate distribution leaves over an
//! observable variable. During variable elimination the diagrams become
//! *symbolic*: product and weighted-sum operator nodes may appear as internal
//! nodes.
//!
//! Node identity across diagrams is the id of the source circuit node they
//! were built from; that identity drives the shared-variable case of the
//! multiplication and keeps common substructure shared rather than copied.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use crate::error::{Error, Result};
use crate::spn::{Assignment, NodeId, VarId};

/// A hidden variable, identified by the source sum node it stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HiddenId(pub NodeId);

impl fmt::Display for HiddenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "H_{}", self.0)
    }
}

/// Assignment of values to hidden variables.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HiddenAssignment(BTreeMap<HiddenId, usize>);

impl HiddenAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, h: HiddenId, value: usize) {
        self.0.insert(h, value);
    }

    pub fn with(mut self, h: HiddenId, value: usize) -> Self {
        self.set(h, value);
        self
    }

    pub fn get(&self, h: HiddenId) -> Option<usize> {
        self.0.get(&h).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (HiddenId, usize)> + '_ {
        self.0.iter().map(|(h, v)| (*h, *v))
    }
}

/// Identifier of a node within one [`Add`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AddId(pub u32);

impl fmt::Display for AddId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AddNode {
    /// Branch on a hidden variable; one child per domain value.
    Var {
        hidden: HiddenId,
        children: Vec<AddId>,
    },
    /// Real-valued terminal.
    Real(f64),
    /// Distribution leaf over an observable variable; evaluates to the
    /// probability of the assigned value. `source` is the originating
    /// circuit node, when any.
    DistLeaf {
        var: VarId,
        probs: Vec<f64>,
        source: Option<NodeId>,
    },
    /// Symbolic product of the children's values.
    OpProduct { children: Vec<AddId> },
    /// Symbolic weighted sum of the children's values.
    OpSum {
        children: Vec<AddId>,
        weights: Vec<f64>,
    },
}

impl AddNode {
    pub fn children(&self) -> &[AddId] {
        match self {
            AddNode::Var { children, .. }
            | AddNode::OpProduct { children }
            | AddNode::OpSum { children, .. } => children,
            _ => &[],
        }
    }
}

/// A decision diagram: rooted DAG plus the hidden-variable ordering it was
/// built under (the topological order of sum nodes in the source circuit).
#[derive(Debug, Clone, PartialEq)]
pub struct Add {
    nodes: BTreeMap<AddId, AddNode>,
    root: AddId,
    order: Vec<HiddenId>,
    next: u32,
}

/// Incremental builder used by the compilation and elimination passes.
#[derive(Debug, Clone)]
pub struct AddBuilder {
    nodes: BTreeMap<AddId, AddNode>,
    order: Vec<HiddenId>,
    next: u32,
}

impl AddBuilder {
    pub fn new(order: Vec<HiddenId>) -> Self {
        AddBuilder {
            nodes: BTreeMap::new(),
            order,
            next: 0,
        }
    }

    pub fn push(&mut self, node: AddNode) -> AddId {
        let id = AddId(self.next);
        self.next += 1;
        self.nodes.insert(id, node);
        id
    }

    pub fn node(&self, id: AddId) -> &AddNode {
        &self.nodes[&id]
    }

    pub fn finish(self, root: AddId) -> Add {
        debug_assert!(self.nodes.contains_key(&root));
        Add {
            nodes: self.nodes,
            root,
            order: self.order,
            next: self.next,
        }
    }
}

impl Add {
    /// Single-node diagram holding a constant.
    pub fn constant(value: f64, order: Vec<HiddenId>) -> Add {
        let mut b = AddBuilder::new(order);
        let root = b.push(AddNode::Real(value));
        b.finish(root)
    }

    pub fn root(&self) -> AddId {
        self.root
    }

    pub fn node(&self, id: AddId) -> &AddNode {
        &self.nodes[&id]
    }

    pub fn node_ids(&self) -> impl Iterator<Item = AddId> + '_ {
        self.nodes.keys().copied()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn order(&self) -> &[HiddenId] {
        &self.order
    }

    /// Node count plus edge count; the size measure used by all bounds.
    pub fn size(&self) -> usize {
        self.nodes.len() + self.nodes.values().map(|n| n.children().len()).sum::<usize>()
    }

    /// Hidden variables branched on anywhere in the diagram.
    pub fn hiddens(&self) -> BTreeSet<HiddenId> {
        self.nodes
            .values()
            .filter_map(|n| match n {
                AddNode::Var { hidden, .. } => Some(*hidden),
                _ => None,
            })
            .collect()
    }

    pub fn contains_hidden(&self, h: HiddenId) -> bool {
        self.nodes
            .values()
            .any(|n| matches!(n, AddNode::Var { hidden, .. } if *hidden == h))
    }

    /// How many variable nodes branch on `h`; a well-formed diagram built by
    /// this crate has at most one.
    pub fn hidden_occurrences(&self, h: HiddenId) -> usize {
        self.nodes
            .values()
            .filter(|n| matches!(n, AddNode::Var { hidden, .. } if *hidden == h))
            .count()
    }

    fn bottom_up_order(&self) -> Vec<AddId> {
        let mut state: BTreeMap<AddId, u8> = BTreeMap::new();
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![(self.root, false)];
        while let Some((id, expanded)) = stack.pop() {
            if expanded {
                state.insert(id, 2);
                order.push(id);
                continue;
            }
            match state.get(&id) {
                Some(_) => continue,
                None => {
                    state.insert(id, 1);
                    stack.push((id, true));
                    for c in self.nodes[&id].children() {
                        stack.push((*c, false));
                    }
                }
            }
        }
        order
    }

    /// Evaluates the diagram: variable nodes follow the branch selected by
    /// `h`, distribution leaves yield the probability of the value assigned
    /// by `x`, operator nodes combine their children.
    pub fn evaluate(&self, h: &HiddenAssignment, x: &Assignment) -> Result<f64> {
        let order = self.bottom_up_order();
        let mut vals: BTreeMap<AddId, f64> = BTreeMap::new();
        for id in order {
            let v = match &self.nodes[&id] {
                AddNode::Real(c) => *c,
                AddNode::DistLeaf { var, probs, .. } => {
                    let value = x
                        .get(*var)
                        .ok_or_else(|| Error::IncompleteAssignment(var.to_string()))?;
                    *probs.get(value).ok_or_else(|| Error::ValueOutOfRange {
                        variable: var.to_string(),
                        value,
                    })?
                }
                AddNode::Var { hidden, children } => {
                    let value = h
                        .get(*hidden)
                        .ok_or_else(|| Error::IncompleteAssignment(hidden.to_string()))?;
                    let child = children.get(value).ok_or_else(|| Error::ValueOutOfRange {
                        variable: hidden.to_string(),
                        value,
                    })?;
                    vals[child]
                }
                AddNode::OpProduct { children } => children.iter().map(|c| vals[c]).product(),
                AddNode::OpSum { children, weights } => children
                    .iter()
                    .zip(weights)
                    .map(|(c, w)| w * vals[c])
                    .sum(),
            };
            vals.insert(id, v);
        }
        Ok(vals[&self.root])
    }

    /// Weights of a decision stump (a single variable node over `h` with
    /// real-valued terminals).
    pub fn stump_weights(&self, h: HiddenId) -> Result<Vec<f64>> {
        match &self.nodes[&self.root] {
            AddNode::Var { hidden, children } if *hidden == h => children
                .iter()
                .map(|c| match &self.nodes[c] {
                    AddNode::Real(w) => Ok(*w),
                    _ => Err(Error::UnknownHidden(h.0)),
                })
                .collect(),
            _ => Err(Error::UnknownHidden(h.0)),
        }
    }
}

/// Key for the provenance of a node, used to check that substructure common
/// to two operands stays shared in their product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Provenance {
    Hidden(HiddenId),
    Leaf(NodeId),
}

impl Add {
    /// Provenance keys of all nodes carrying one.
    pub fn provenance_counts(&self) -> BTreeMap<Provenance, usize> {
        let mut m = BTreeMap::new();
        for n in self.nodes.values() {
            let key = match n {
                AddNode::Var { hidden, .. } => Some(Provenance::Hidden(*hidden)),
                AddNode::DistLeaf {
                    source: Some(s), ..
                } => Some(Provenance::Leaf(*s)),
                _ => None,
            };
            if let Some(k) = key {
                *m.entry(k).or_insert(0) += 1;
            }
        }
        m
    }
}

struct Multiplier<'a> {
    a: &'a Add,
    b: &'a Add,
    out: AddBuilder,
    memo: HashMap<(AddId, AddId), AddId>,
    copy_a: HashMap<AddId, AddId>,
    copy_b: HashMap<AddId, AddId>,
    ops: u64,
}

#[derive(Clone, Copy)]
enum Side {
    A,
    B,
}

impl<'a> Multiplier<'a> {
    fn copy(&mut self, side: Side, id: AddId) -> AddId {
        let (src, memo) = match side {
            Side::A => (self.a, &self.copy_a),
            Side::B => (self.b, &self.copy_b),
        };
        if let Some(out) = memo.get(&id) {
            return *out;
        }
        let node = src.node(id).clone();
        let rebuilt = match node {
            AddNode::Real(c) => AddNode::Real(c),
            AddNode::DistLeaf { var, probs, source } => AddNode::DistLeaf { var, probs, source },
            AddNode::Var { hidden, children } => AddNode::Var {
                hidden,
                children: children.into_iter().map(|c| self.copy(side, c)).collect(),
            },
            AddNode::OpProduct { children } => AddNode::OpProduct {
                children: children.into_iter().map(|c| self.copy(side, c)).collect(),
            },
            AddNode::OpSum { children, weights } => AddNode::OpSum {
                children: children.into_iter().map(|c| self.copy(side, c)).collect(),
                weights,
            },
        };
        let out = self.out.push(rebuilt);
        match side {
            Side::A => self.copy_a.insert(id, out),
            Side::B => self.copy_b.insert(id, out),
        };
        out
    }

    fn multiply(&mut self, x: AddId, y: AddId) -> Result<AddId> {
        if let Some(out) = self.memo.get(&(x, y)) {
            return Ok(*out);
        }
        self.ops += 1;
        let out = match (self.a.node(x), self.b.node(y)) {
            // Both branch on the same hidden variable: share the branch and
            // multiply the per-value children.
            (
                AddNode::Var {
                    hidden: ha,
                    children: ca,
                },
                AddNode::Var {
                    hidden: hb,
                    children: cb,
                },
            ) if ha == hb => {
                if ca.len() != cb.len() {
                    return Err(Error::DomainMismatch {
                        expected: ca.len(),
                        got: cb.len(),
                    });
                }
                let hidden = *ha;
                let pairs: Vec<(AddId, AddId)> =
                    ca.iter().copied().zip(cb.iter().copied()).collect();
                let mut children = Vec::with_capacity(pairs.len());
                for (cx, cy) in pairs {
                    children.push(self.multiply(cx, cy)?);
                }
                self.out.push(AddNode::Var { hidden, children })
            }
            // One side branches on a variable, the other is a product: fold
            // into the product, merging with a same-variable child if any.
            (AddNode::Var { hidden, .. }, AddNode::OpProduct { children }) => {
                let hidden = *hidden;
                let kids = children.clone();
                let matching = kids.iter().copied().find(|c| {
                    matches!(self.b.node(*c), AddNode::Var { hidden: h2, .. } if *h2 == hidden)
                });
                match matching {
                    Some(m) => {
                        let mut new_children = Vec::with_capacity(kids.len());
                        for c in kids {
                            if c == m {
                                new_children.push(self.multiply(x, c)?);
                            } else {
                                new_children.push(self.copy(Side::B, c));
                            }
                        }
                        self.out.push(AddNode::OpProduct {
                            children: new_children,
                        })
                    }
                    None => {
                        let mut new_children: Vec<AddId> =
                            kids.into_iter().map(|c| self.copy(Side::B, c)).collect();
                        new_children.push(self.copy(Side::A, x));
                        self.out.push(AddNode::OpProduct {
                            children: new_children,
                        })
                    }
                }
            }
            (AddNode::OpProduct { children }, AddNode::Var { hidden, .. }) => {
                let hidden = *hidden;
                let kids = children.clone();
                let matching = kids.iter().copied().find(|c| {
                    matches!(self.a.node(*c), AddNode::Var { hidden: h2, .. } if *h2 == hidden)
                });
                match matching {
                    Some(m) => {
                        let mut new_children = Vec::with_capacity(kids.len());
                        for c in kids {
                            if c == m {
                                new_children.push(self.multiply(c, y)?);
                            } else {
                                new_children.push(self.copy(Side::A, c));
                            }
                        }
                        self.out.push(AddNode::OpProduct {
                            children: new_children,
                        })
                    }
                    None => {
                        let mut new_children: Vec<AddId> =
                            kids.into_iter().map(|c| self.copy(Side::A, c)).collect();
                        new_children.push(self.copy(Side::B, y));
                        self.out.push(AddNode::OpProduct {
                            children: new_children,
                        })
                    }
                }
            }
            // Two products: children that branch on the same hidden variable
            // have shared structure below and must be multiplied pairwise;
            // everything else is collected. Children rooted elsewhere
            // (terminals, summed-out operators) contain no live hidden and
            // never pair.
            (AddNode::OpProduct { children: ca }, AddNode::OpProduct { children: cb }) => {
                let ca = ca.clone();
                let cb = cb.clone();
                let root_hidden_b: Vec<Option<HiddenId>> = cb
                    .iter()
                    .map(|c| match self.b.node(*c) {
                        AddNode::Var { hidden, .. } => Some(*hidden),
                        _ => None,
                    })
                    .collect();
                let mut used_b = vec![false; cb.len()];
                let mut children = Vec::with_capacity(ca.len() + cb.len());
                for c in ca {
                    let pair = match self.a.node(c) {
                        AddNode::Var { hidden, .. } => {
                            let h = *hidden;
                            root_hidden_b
                                .iter()
                                .position(|rh| *rh == Some(h))
                                .filter(|j| !used_b[*j])
                        }
                        _ => None,
                    };
                    match pair {
                        Some(j) => {
                            used_b[j] = true;
                            children.push(self.multiply(c, cb[j])?);
                        }
                        None => children.push(self.copy(Side::A, c)),
                    }
                }
                for (j, d) in cb.iter().enumerate() {
                    if !used_b[j] {
                        children.push(self.copy(Side::B, *d));
                    }
                }
                self.out.push(AddNode::OpProduct { children })
            }
            // Distinct variables, sums or terminals: a fresh product of the
            // two operands.
            _ => {
                let ca = self.copy(Side::A, x);
                let cb = self.copy(Side::B, y);
                self.out.push(AddNode::OpProduct {
                    children: vec![ca, cb],
                })
            }
        };
        self.memo.insert((x, y), out);
        Ok(out)
    }
}

/// Pointwise product of two diagrams built under the same hidden-variable
/// ordering: `out(h, x) = a(h, x) * b(h, x)`. Returns the product and the
/// number of recursive multiplication steps, which is bounded by
/// `|a| + |b|`. Adjacent product nodes in the result are merged.
pub fn multiply(a: &Add, b: &Add) -> Result<(Add, u64)> {
    if a.order != b.order {
        return Err(Error::OrderViolation);
    }
    let mut m = Multiplier {
        a,
        b,
        out: AddBuilder::new(a.order.clone()),
        memo: HashMap::new(),
        copy_a: HashMap::new(),
        copy_b: HashMap::new(),
        ops: 0,
    };
    let root = m.multiply(a.root, b.root)?;
    let merged = merge_product_chains(&m.out.finish(root));
    Ok((merged, m.ops))
}

/// Flattens nested product nodes: a product child of a product node is
/// replaced by its children. Values are unchanged.
pub fn merge_product_chains(a: &Add) -> Add {
    let mut out = AddBuilder::new(a.order.clone());
    let mut memo: HashMap<AddId, AddId> = HashMap::new();
    // Gathered flat child list of a product subtree.
    fn rewrite(
        a: &Add,
        id: AddId,
        out: &mut AddBuilder,
        memo: &mut HashMap<AddId, AddId>,
    ) -> AddId {
        if let Some(r) = memo.get(&id) {
            return *r;
        }
        let node = match a.node(id) {
            AddNode::Real(c) => AddNode::Real(*c),
            AddNode::DistLeaf { var, probs, source } => AddNode::DistLeaf {
                var: *var,
                probs: probs.clone(),
                source: *source,
            },
            AddNode::Var { hidden, children } => AddNode::Var {
                hidden: *hidden,
                children: children
                    .iter()
                    .map(|c| rewrite(a, *c, out, memo))
                    .collect(),
            },
            AddNode::OpSum { children, weights } => AddNode::OpSum {
                children: children
                    .iter()
                    .map(|c| rewrite(a, *c, out, memo))
                    .collect(),
                weights: weights.clone(),
            },
            AddNode::OpProduct { children } => {
                let mut flat = Vec::new();
                for c in children {
                    if matches!(a.node(*c), AddNode::OpProduct { .. }) {
                        let rc = rewrite(a, *c, out, memo);
                        match out.node(rc) {
                            AddNode::OpProduct { children } => flat.extend(children.clone()),
                            _ => flat.push(rc),
                        }
                    } else {
                        flat.push(rewrite(a, *c, out, memo));
                    }
                }
                AddNode::OpProduct { children: flat }
            }
        };
        let r = out.push(node);
        memo.insert(id, r);
        r
    }
    let root = rewrite(a, a.root, &mut out, &mut memo);
    prune(out.finish(root))
}

/// Drops nodes unreachable from the root.
fn prune(a: Add) -> Add {
    let mut keep = BTreeSet::new();
    let mut stack = vec![a.root];
    while let Some(id) = stack.pop() {
        if keep.insert(id) {
            stack.extend(a.node(id).children().iter().copied());
        }
    }
    let mut nodes = a.nodes;
    nodes.retain(|id, _| keep.contains(id));
    Add {
        nodes,
        root: a.root,
        order: a.order,
        next: a.next,
    }
}

/// Sums a hidden variable out of `a`. Every variable node branching on
/// `h` becomes a weighted-sum operator whose weights come from the decision
/// stump `stump`; a diagram without `h` is returned unchanged.
pub fn sum_out(a: &Add, h: HiddenId, stump: &Add) -> Result<Add> {
    if !a.contains_hidden(h) {
        return Ok(a.clone());
    }
    let weights = stump.stump_weights(h)?;
    let mut nodes = BTreeMap::new();
    for (id, node) in &a.nodes {
        let rewritten = match node {
            AddNode::Var { hidden, children } if *hidden == h => {
                if children.len() != weights.len() {
                    return Err(Error::DomainMismatch {
                        expected: children.len(),
                        got: weights.len(),
                    });
                }
                AddNode::OpSum {
                    children: children.clone(),
                    weights: weights.clone(),
                }
            }
            other => other.clone(),
        };
        nodes.insert(*id, rewritten);
    }
    Ok(Add {
        nodes,
        root: a.root,
        order: a.order.clone(),
        next: a.next,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn order() -> Vec<HiddenId> {
        vec![HiddenId(NodeId(100))]
    }

    fn h() -> HiddenId {
        HiddenId(NodeId(100))
    }

    /// Stump over the demo's root sum: weights (4/7, 6/35, 9/35).
    fn demo_hidden_stump() -> Add {
        let mut b = AddBuilder::new(order());
        let w: Vec<AddId> = [4.0 / 7.0, 6.0 / 35.0, 9.0 / 35.0]
            .iter()
            .map(|v| b.push(AddNode::Real(*v)))
            .collect();
        let root = b.push(AddNode::Var {
            hidden: h(),
            children: w,
        });
        b.finish(root)
    }

    fn leaf(b: &mut AddBuilder, var: u32, probs: [f64; 2], source: u32) -> AddId {
        b.push(AddNode::DistLeaf {
            var: VarId(var),
            probs: probs.to_vec(),
            source: Some(NodeId(source)),
        })
    }

    /// Conditional diagram for X1 in the demo's compiled network: branches
    /// 0 and 1 share the (0.6, 0.4) leaf, branch 2 holds (0.9, 0.1).
    fn demo_cpd_x1() -> Add {
        let mut b = AddBuilder::new(order());
        let a = leaf(&mut b, 0, [0.6, 0.4], 1);
        let d = leaf(&mut b, 0, [0.9, 0.1], 2);
        let root = b.push(AddNode::Var {
            hidden: h(),
            children: vec![a, a, d],
        });
        b.finish(root)
    }

    fn demo_cpd_x2() -> Add {
        let mut b = AddBuilder::new(order());
        let bb = leaf(&mut b, 1, [0.3, 0.7], 3);
        let c = leaf(&mut b, 1, [0.2, 0.8], 4);
        let root = b.push(AddNode::Var {
            hidden: h(),
            children: vec![bb, c, c],
        });
        b.finish(root)
    }

    #[test]
    fn stump_evaluation_selects_branch_weight() {
        let stump = demo_hidden_stump();
        let ha = HiddenAssignment::new().with(h(), 0);
        let v = stump.evaluate(&ha, &Assignment::new()).unwrap();
        assert!((v - 4.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn cpd_evaluation_follows_branch_and_leaf() {
        let a = demo_cpd_x1();
        let ha = HiddenAssignment::new().with(h(), 2);
        let x = Assignment::new().with(VarId(0), 0);
        assert!((a.evaluate(&ha, &x).unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn constant_diagram_evaluates_to_its_value() {
        let c = Add::constant(2.5, order());
        assert_eq!(
            c.evaluate(&HiddenAssignment::new(), &Assignment::new())
                .unwrap(),
            2.5
        );
    }

    #[test]
    fn multiply_shares_the_common_branch_variable() {
        let a1 = demo_cpd_x1();
        let a2 = demo_cpd_x2();
        let (prod, ops) = multiply(&a1, &a2).unwrap();

        // Root is the shared hidden variable over three products of leaves.
        match prod.node(prod.root()) {
            AddNode::Var { hidden, children } => {
                assert_eq!(*hidden, h());
                assert_eq!(children.len(), 3);
                for c in children {
                    assert!(matches!(prod.node(*c), AddNode::OpProduct { .. }));
                }
            }
            other => panic!("expected variable root, got {other:?}"),
        }

        // Pointwise equality over every (h, x1, x2).
        for hv in 0..3 {
            for x1 in 0..2 {
                for x2 in 0..2 {
                    let ha = HiddenAssignment::new().with(h(), hv);
                    let x = Assignment::new().with(VarId(0), x1).with(VarId(1), x2);
                    let lhs = prod.evaluate(&ha, &x).unwrap();
                    let rhs = a1.evaluate(&ha, &x).unwrap() * a2.evaluate(&ha, &x).unwrap();
                    assert!((lhs - rhs).abs() < 1e-12);
                }
            }
        }

        assert!(ops <= (a1.size() + a2.size()) as u64);
        // Shared leaves stay shared: each provenance id appears once.
        for (_, count) in prod.provenance_counts() {
            assert_eq!(count, 1);
        }
    }

    #[test]
    fn multiply_by_constant_one_is_identity_in_value() {
        let a = demo_cpd_x1();
        let one = Add::constant(1.0, order());
        let (prod, _) = multiply(&a, &one).unwrap();
        for hv in 0..3 {
            for x1 in 0..2 {
                let ha = HiddenAssignment::new().with(h(), hv);
                let x = Assignment::new().with(VarId(0), x1);
                assert!(
                    (prod.evaluate(&ha, &x).unwrap() - a.evaluate(&ha, &x).unwrap()).abs() < 1e-12
                );
            }
        }
    }

    #[test]
    fn multiply_disjoint_variables_makes_a_product_root() {
        let mut b1 = AddBuilder::new(vec![HiddenId(NodeId(1)), HiddenId(NodeId(2))]);
        let l1 = leaf(&mut b1, 0, [0.5, 0.5], 10);
        let r1 = b1.push(AddNode::Var {
            hidden: HiddenId(NodeId(1)),
            children: vec![l1, l1],
        });
        let a1 = b1.finish(r1);

        let mut b2 = AddBuilder::new(vec![HiddenId(NodeId(1)), HiddenId(NodeId(2))]);
        let l2 = leaf(&mut b2, 1, [0.4, 0.6], 11);
        let r2 = b2.push(AddNode::Var {
            hidden: HiddenId(NodeId(2)),
            children: vec![l2, l2],
        });
        let a2 = b2.finish(r2);

        let (prod, _) = multiply(&a1, &a2).unwrap();
        assert!(matches!(
            prod.node(prod.root()),
            AddNode::OpProduct { children } if children.len() == 2
        ));
    }

    #[test]
    fn multiply_rejects_mismatched_orders() {
        let a = Add::constant(1.0, vec![HiddenId(NodeId(1))]);
        let b = Add::constant(1.0, vec![HiddenId(NodeId(2))]);
        assert_eq!(multiply(&a, &b).unwrap_err().code(), "order-violation");
    }

    #[test]
    fn sum_out_replaces_branch_with_weighted_sum() {
        let a1 = demo_cpd_x1();
        let a2 = demo_cpd_x2();
        let (prod, _) = multiply(&a1, &a2).unwrap();
        let stump = demo_hidden_stump();
        let out = sum_out(&prod, h(), &stump).unwrap();
        assert!(!out.contains_hidden(h()));

        // Marginalizing the hidden variable reproduces 594/3500 at (x1, x2).
        let x = Assignment::new().with(VarId(0), 0).with(VarId(1), 0);
        let v = out.evaluate(&HiddenAssignment::new(), &x).unwrap();
        assert!((v - 594.0 / 3500.0).abs() < 1e-12);

        // And the whole table sums to 1.
        let mut total = 0.0;
        for x1 in 0..2 {
            for x2 in 0..2 {
                let x = Assignment::new().with(VarId(0), x1).with(VarId(1), x2);
                total += out.evaluate(&HiddenAssignment::new(), &x).unwrap();
            }
        }
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sum_out_without_the_variable_is_identity() {
        let a = demo_cpd_x1();
        let mut b = AddBuilder::new(order());
        let w = b.push(AddNode::Real(1.0));
        let other = HiddenId(NodeId(999));
        let root = b.push(AddNode::Var {
            hidden: other,
            children: vec![w],
        });
        let stump = b.finish(root);
        let out = sum_out(&a, other, &stump).unwrap();
        assert_eq!(out, a);
    }

    #[test]
    fn sum_out_with_point_mass_stump_substitutes_the_branch() {
        let a = demo_cpd_x1();
        let mut b = AddBuilder::new(order());
        let w1 = b.push(AddNode::Real(1.0));
        let w0 = b.push(AddNode::Real(0.0));
        let w0b = b.push(AddNode::Real(0.0));
        let root = b.push(AddNode::Var {
            hidden: h(),
            children: vec![w1, w0, w0b],
        });
        let stump = b.finish(root);
        let out = sum_out(&a, h(), &stump).unwrap();
        let x = Assignment::new().with(VarId(0), 0);
        let fixed = a
            .evaluate(&HiddenAssignment::new().with(h(), 0), &x)
            .unwrap();
        let summed = out.evaluate(&HiddenAssignment::new(), &x).unwrap();
        assert!((summed - fixed).abs() < 1e-12);
    }

    #[test]
    fn merge_flattens_nested_products() {
        let mut b = AddBuilder::new(Vec::new());
        let l1 = b.push(AddNode::Real(2.0));
        let l2 = b.push(AddNode::Real(3.0));
        let l3 = b.push(AddNode::Real(5.0));
        let inner = b.push(AddNode::OpProduct {
            children: vec![l1, l2],
        });
        let outer = b.push(AddNode::OpProduct {
            children: vec![inner, l3],
        });
        let a = b.finish(outer);
        let merged = merge_product_chains(&a);
        match merged.node(merged.root()) {
            AddNode::OpProduct { children } => assert_eq!(children.len(), 3),
            other => panic!("expected product, got {other:?}"),
        }
        let v = merged
            .evaluate(&HiddenAssignment::new(), &Assignment::new())
            .unwrap();
        assert_eq!(v, 30.0);
    }

    #[test]
    fn merge_leaves_flat_diagrams_unchanged() {
        let a = demo_cpd_x1();
        let merged = merge_product_chains(&a);
        assert_eq!(merged.size(), a.size());
    }

    #[test]
    fn merge_deeply_nested_products_evaluates_equally() {
        let mut b = AddBuilder::new(Vec::new());
        let mut cur = b.push(AddNode::Real(1.5));
        for i in 0..5 {
            let l = b.push(AddNode::Real(1.0 + i as f64));
            cur = b.push(AddNode::OpProduct {
                children: vec![cur, l],
            });
        }
        let a = b.finish(cur);
        let merged = merge_product_chains(&a);
        // No product has a product child.
        for id in merged.node_ids() {
            if let AddNode::OpProduct { children } = merged.node(id) {
                for c in children {
                    assert!(!matches!(merged.node(*c), AddNode::OpProduct { .. }));
                }
            }
        }
        let e = HiddenAssignment::new();
        let x = Assignment::new();
        assert!(
            (merged.evaluate(&e, &x).unwrap() - a.evaluate(&e, &x).unwrap()).abs() < 1e-12
        );
    }
}
