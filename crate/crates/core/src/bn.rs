//! Compilation of a normal SPN into a bipartite Bayesian network.
//!
//! One hidden variable is created per sum node, with the sum's out-degree as
//! its domain and its normalized weights as its (parentless) distribution.
//! Each observable variable gets a decision-diagram conditional distribution
//! built by walking the sub-circuit that contains it: sum nodes become
//! branch nodes on their hidden variable, product nodes pass through to the
//! unique child containing the variable, and distribution leaves become
//! diagram leaves. An edge runs from a hidden variable to an observable
//! exactly when the observable lies in the sum node's scope.

use std::collections::{BTreeMap, BTreeSet};

use crate::add::{Add, AddBuilder, AddId, AddNode, HiddenAssignment, HiddenId};
use crate::error::{Error, Result};
use crate::exec;
use crate::spn::{Assignment, NodeId, SpnGraph, SpnNodeKind, VarId, Variable};
use crate::table::JointTable;
use crate::validate::validate;
use crate::{DEFAULT_CSI_PATH_CAP, DEFAULT_HIDDEN_STATE_CAP};

/// Bipartite network: hidden variables (sources) point at observable
/// variables (sinks); every variable owns a decision-diagram CPD.
#[derive(Debug, Clone)]
pub struct BayesNet {
    name: String,
    /// Hidden variable domains, keyed by source sum node.
    hidden: BTreeMap<HiddenId, usize>,
    /// Topological order of the source sum nodes (ancestors first).
    hidden_order: Vec<HiddenId>,
    observables: Vec<Variable>,
    edges: BTreeSet<(HiddenId, VarId)>,
    cpd_hidden: BTreeMap<HiddenId, Add>,
    cpd_observable: BTreeMap<VarId, Add>,
    /// Instrumented operation count of the construction.
    build_ops: u64,
}

impl BayesNet {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn hidden_vars(&self) -> impl Iterator<Item = (HiddenId, usize)> + '_ {
        self.hidden.iter().map(|(h, d)| (*h, *d))
    }

    pub fn num_hidden(&self) -> usize {
        self.hidden.len()
    }

    pub fn hidden_domain(&self, h: HiddenId) -> Option<usize> {
        self.hidden.get(&h).copied()
    }

    pub fn hidden_order(&self) -> &[HiddenId] {
        &self.hidden_order
    }

    pub fn observables(&self) -> &[Variable] {
        &self.observables
    }

    pub fn observable_ids(&self) -> impl Iterator<Item = VarId> {
        (0..self.observables.len() as u32).map(VarId)
    }

    pub fn observable_by_name(&self, name: &str) -> Option<VarId> {
        self.observables
            .iter()
            .position(|v| v.name == name)
            .map(|i| VarId(i as u32))
    }

    pub fn edges(&self) -> impl Iterator<Item = (HiddenId, VarId)> + '_ {
        self.edges.iter().copied()
    }

    pub fn parents_of(&self, x: VarId) -> Vec<HiddenId> {
        self.edges
            .iter()
            .filter(|(_, v)| *v == x)
            .map(|(h, _)| *h)
            .collect()
    }

    pub fn cpd_hidden(&self, h: HiddenId) -> Option<&Add> {
        self.cpd_hidden.get(&h)
    }

    pub fn cpd_observable(&self, x: VarId) -> Option<&Add> {
        self.cpd_observable.get(&x)
    }

    pub fn build_ops(&self) -> u64 {
        self.build_ops
    }

    /// Nodes plus edges of the bipartite graph itself.
    pub fn graph_size(&self) -> usize {
        self.hidden.len() + self.observables.len() + self.edges.len()
    }

    /// Total size of all decision diagrams.
    pub fn total_add_size(&self) -> usize {
        self.cpd_hidden
            .values()
            .chain(self.cpd_observable.values())
            .map(Add::size)
            .sum()
    }

    pub(crate) fn from_parts(
        name: String,
        hidden: BTreeMap<HiddenId, usize>,
        hidden_order: Vec<HiddenId>,
        observables: Vec<Variable>,
        edges: BTreeSet<(HiddenId, VarId)>,
        cpd_hidden: BTreeMap<HiddenId, Add>,
        cpd_observable: BTreeMap<VarId, Add>,
    ) -> BayesNet {
        BayesNet {
            name,
            hidden,
            hidden_order,
            observables,
            edges,
            cpd_hidden,
            cpd_observable,
            build_ops: 0,
        }
    }
}

/// Decision stump for one sum node: a single branch node whose terminals are
/// the sum's outgoing weights.
pub fn build_cpd_hidden(spn: &SpnGraph, sum_node: NodeId) -> Result<Add> {
    let node = spn.get_node(sum_node).ok_or(Error::UnknownNode(sum_node))?;
    if !node.is_sum() {
        return Err(Error::UnknownHidden(sum_node));
    }
    let order = hidden_topo_order(spn)?;
    let mut b = AddBuilder::new(order);
    let terminals: Vec<AddId> = node.weights.iter().map(|w| b.push(AddNode::Real(*w))).collect();
    let root = b.push(AddNode::Var {
        hidden: HiddenId(sum_node),
        children: terminals,
    });
    Ok(b.finish(root))
}

/// Topological order (ancestors first) of the reachable sum nodes.
fn hidden_topo_order(spn: &SpnGraph) -> Result<Vec<HiddenId>> {
    let mut order: Vec<HiddenId> = spn
        .bottom_up_order()?
        .into_iter()
        .filter(|id| spn.node(*id).is_sum())
        .map(HiddenId)
        .collect();
    order.reverse();
    Ok(order)
}

struct CpdBuilder<'a> {
    spn: &'a SpnGraph,
    scopes: &'a BTreeMap<NodeId, crate::spn::VarSet>,
    builder: AddBuilder,
    cache: BTreeMap<NodeId, AddId>,
    ops: u64,
}

impl<'a> CpdBuilder<'a> {
    fn build(&mut self, node_id: NodeId, x: VarId) -> Result<AddId> {
        if let Some(hit) = self.cache.get(&node_id) {
            self.ops += 1;
            return Ok(*hit);
        }
        self.ops += 1;
        let node = self.spn.node(node_id);
        let out = match &node.kind {
            SpnNodeKind::TerminalDist { var, probs } => {
                debug_assert_eq!(*var, x);
                self.builder.push(AddNode::DistLeaf {
                    var: *var,
                    probs: probs.clone(),
                    source: Some(node_id),
                })
            }
            // A bare indicator is the point mass on its value.
            SpnNodeKind::Indicator { var, value } => {
                debug_assert_eq!(*var, x);
                let mut probs = vec![0.0; self.spn.variable(*var).domain_size];
                probs[*value] = 1.0;
                self.builder.push(AddNode::DistLeaf {
                    var: *var,
                    probs,
                    source: Some(node_id),
                })
            }
            SpnNodeKind::Sum => {
                let kids = node.children.clone();
                let mut children = Vec::with_capacity(kids.len());
                for c in kids {
                    children.push(self.build(c, x)?);
                }
                self.ops += children.len() as u64;
                self.builder.push(AddNode::Var {
                    hidden: HiddenId(node_id),
                    children,
                })
            }
            SpnNodeKind::Product => {
                // Decomposability: exactly one child contains x.
                let child = node
                    .children
                    .iter()
                    .copied()
                    .find(|c| self.scopes[c].contains(x))
                    .ok_or_else(|| Error::UnknownVariable(x.to_string()))?;
                self.build(child, x)?
            }
        };
        self.cache.insert(node_id, out);
        Ok(out)
    }
}

/// Conditional distribution of observable `x`: the sub-circuit containing
/// `x` with product nodes contracted out. The result never exceeds the
/// source circuit in size.
pub fn build_cpd_observable(spn: &SpnGraph, x: VarId) -> Result<Add> {
    build_cpd_observable_counted(spn, x).map(|(add, _)| add)
}

fn build_cpd_observable_counted(spn: &SpnGraph, x: VarId) -> Result<(Add, u64)> {
    let scopes = spn.scopes()?;
    let root = spn.root()?;
    if !scopes[&root].contains(x) {
        return Err(Error::UnknownVariable(format!(
            "{} is not in the root scope",
            spn.variable(x).name
        )));
    }
    let order = hidden_topo_order(spn)?;
    let mut cb = CpdBuilder {
        spn,
        scopes: &scopes,
        builder: AddBuilder::new(order),
        cache: BTreeMap::new(),
        ops: 0,
    };
    let r = cb.build(root, x)?;
    Ok((cb.builder.finish(r), cb.ops))
}

/// Compiles a normal SPN into its bipartite network. Errors when the input
/// is not in normal form.
pub fn to_bn(spn: &SpnGraph) -> Result<BayesNet> {
    let report = validate(spn)?;
    if !report.normal {
        let why = report
            .offending_nodes
            .first()
            .map(|(id, v)| format!("node {id}: {v}"))
            .unwrap_or_else(|| "unknown violation".into());
        return Err(Error::NotNormal(why));
    }

    let scopes = spn.scopes()?;
    let hidden_order = hidden_topo_order(spn)?;
    let mut ops: u64 = 0;

    let mut hidden = BTreeMap::new();
    let mut edges = BTreeSet::new();
    let mut cpd_hidden = BTreeMap::new();
    for h in &hidden_order {
        let node = spn.node(h.0);
        hidden.insert(*h, node.children.len());
        for x in scopes[&h.0].iter() {
            edges.insert((*h, x));
            ops += 1;
        }
        cpd_hidden.insert(*h, build_cpd_hidden(spn, h.0)?);
        ops += 1 + node.children.len() as u64;
    }

    // Observable CPDs are independent of each other and build in parallel
    // under the `parallel` feature.
    let xs: Vec<VarId> = spn.var_ids().collect();
    let built = exec::map_items(&xs, |x| build_cpd_observable_counted(spn, *x));
    let mut cpd_observable = BTreeMap::new();
    for (x, res) in xs.iter().zip(built) {
        let (add, cpd_ops) = res?;
        ops += cpd_ops;
        cpd_observable.insert(*x, add);
    }

    Ok(BayesNet {
        name: spn.name().to_string(),
        hidden,
        hidden_order,
        observables: spn.variables().cloned().collect(),
        edges,
        cpd_hidden,
        cpd_observable,
        build_ops: ops,
    })
}

/// Joint probability of a complete assignment to hidden and observable
/// variables: the product of all local distributions.
pub fn bn_joint(bn: &BayesNet, h: &HiddenAssignment, x: &Assignment) -> Result<f64> {
    for (hid, _) in bn.hidden_vars() {
        if h.get(hid).is_none() {
            return Err(Error::IncompleteAssignment(hid.to_string()));
        }
    }
    for (i, var) in bn.observables.iter().enumerate() {
        if x.get(VarId(i as u32)).is_none() {
            return Err(Error::IncompleteAssignment(var.name.clone()));
        }
    }
    let mut p = 1.0;
    for add in bn.cpd_hidden.values() {
        p *= add.evaluate(h, x)?;
    }
    for add in bn.cpd_observable.values() {
        p *= add.evaluate(h, x)?;
    }
    Ok(p)
}

fn hidden_space(bn: &BayesNet) -> usize {
    bn.hidden.values().product()
}

fn hidden_assignment_at(bn: &BayesNet, mut index: usize) -> HiddenAssignment {
    let mut h = HiddenAssignment::new();
    for (hid, dim) in bn.hidden.iter().rev() {
        h.set(*hid, index % dim);
        index /= dim;
    }
    h
}

/// Marginal probability of a complete observable assignment, by brute-force
/// summation over the hidden state space. This is the oracle the conversion
/// is checked against; it refuses state spaces beyond `cap`.
pub fn bn_marginal_capped(bn: &BayesNet, x: &Assignment, cap: usize) -> Result<f64> {
    let states = hidden_space(bn);
    if states > cap {
        return Err(Error::EnumerationCap { needed: states, cap });
    }
    let mut total = 0.0;
    for i in 0..states {
        total += bn_joint(bn, &hidden_assignment_at(bn, i), x)?;
    }
    Ok(total)
}

pub fn bn_marginal(bn: &BayesNet, x: &Assignment) -> Result<f64> {
    bn_marginal_capped(bn, x, DEFAULT_HIDDEN_STATE_CAP)
}

fn observable_dims(bn: &BayesNet) -> (Vec<VarId>, Vec<usize>, usize) {
    let vars: Vec<VarId> = bn.observable_ids().collect();
    let dims: Vec<usize> = bn.observables.iter().map(|v| v.domain_size).collect();
    let total = dims.iter().product();
    (vars, dims, total)
}

fn observable_assignment_at(vars: &[VarId], dims: &[usize], mut index: usize) -> Assignment {
    let mut a = Assignment::new();
    for (var, dim) in vars.iter().zip(dims).rev() {
        a.set(*var, index % dim);
        index /= dim;
    }
    a
}

/// Dense marginal table over all observable assignments.
pub fn bn_marginal_table(bn: &BayesNet) -> Result<JointTable> {
    let (vars, dims, total) = observable_dims(bn);
    let values = exec::map_range(total, |i| {
        bn_marginal(bn, &observable_assignment_at(&vars, &dims, i))
    });
    let values: Result<Vec<f64>> = values.into_iter().collect();
    Ok(JointTable::new(vars, dims, values?))
}

/// Sequential twin of [`bn_marginal_table`], the benchmark baseline.
pub fn bn_marginal_table_sequential(bn: &BayesNet) -> Result<JointTable> {
    let (vars, dims, total) = observable_dims(bn);
    let values = exec::map_range_seq(total, |i| {
        bn_marginal(bn, &observable_assignment_at(&vars, &dims, i))
    });
    let values: Result<Vec<f64>> = values.into_iter().collect();
    Ok(JointTable::new(vars, dims, values?))
}

/// Outcome of the context-specific-independence check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsiReport {
    pub products_checked: usize,
    pub paths_checked: usize,
    /// Largest deviation between a conditional joint over a product's scope
    /// and the product of its per-child conditionals.
    pub max_deviation: f64,
    /// True when the path cap stopped the enumeration early.
    pub capped: bool,
}

/// For every product node and every root-to-product path of sum-branch
/// selections, verifies by brute-force conditioning that the conditional
/// distribution of the product's scope factorizes over its children.
pub fn check_csi(bn: &BayesNet, spn: &SpnGraph) -> Result<CsiReport> {
    check_csi_capped(bn, spn, DEFAULT_CSI_PATH_CAP, DEFAULT_HIDDEN_STATE_CAP)
}

pub fn check_csi_capped(
    bn: &BayesNet,
    spn: &SpnGraph,
    path_cap: usize,
    state_cap: usize,
) -> Result<CsiReport> {
    let states = hidden_space(bn);
    let (vars, dims, obs_total) = observable_dims(bn);
    if states.saturating_mul(obs_total) > state_cap.saturating_mul(64) {
        return Err(Error::EnumerationCap {
            needed: states * obs_total,
            cap: state_cap * 64,
        });
    }

    // Full joint over (hidden, observable) assignments, computed once.
    let mut joint: Vec<(HiddenAssignment, Vec<f64>)> = Vec::with_capacity(states);
    for i in 0..states {
        let h = hidden_assignment_at(bn, i);
        let row: Result<Vec<f64>> = (0..obs_total)
            .map(|j| bn_joint(bn, &h, &observable_assignment_at(&vars, &dims, j)))
            .collect();
        joint.push((h, row?));
    }

    let scopes = spn.scopes()?;
    let root = spn.root()?;
    let mut report = CsiReport {
        products_checked: 0,
        paths_checked: 0,
        max_deviation: 0.0,
        capped: false,
    };

    // Depth-first path enumeration from the root; at sum nodes the branch
    // taken becomes a hidden-variable condition.
    let mut products: Vec<NodeId> = spn
        .bottom_up_order()?
        .into_iter()
        .filter(|id| spn.node(*id).is_product())
        .collect();
    products.sort();
    let parents = spn.parents_map();

    for p in products {
        report.products_checked += 1;
        // Nodes from which p is reachable, so the walk never leaves them.
        let mut above: BTreeSet<NodeId> = BTreeSet::new();
        let mut up = vec![p];
        while let Some(n) = up.pop() {
            if above.insert(n) {
                up.extend(parents.get(&n).into_iter().flatten().copied());
            }
        }
        let mut paths: Vec<HiddenAssignment> = Vec::new();
        let mut stack: Vec<(NodeId, HiddenAssignment)> = vec![(root, HiddenAssignment::new())];
        while let Some((node_id, path)) = stack.pop() {
            if report.paths_checked + paths.len() >= path_cap {
                report.capped = true;
                break;
            }
            if node_id == p {
                paths.push(path);
                continue;
            }
            let node = spn.node(node_id);
            match &node.kind {
                SpnNodeKind::Sum => {
                    for (i, c) in node.children.iter().enumerate() {
                        if above.contains(c) {
                            let mut next = path.clone();
                            next.set(HiddenId(node_id), i);
                            stack.push((*c, next));
                        }
                    }
                }
                SpnNodeKind::Product => {
                    for c in &node.children {
                        if above.contains(c) {
                            stack.push((*c, path.clone()));
                        }
                    }
                }
                _ => {}
            }
        }

        let children = spn.node(p).children.clone();
        for path in paths {
            report.paths_checked += 1;
            let consistent =
                |h: &HiddenAssignment| path.iter().all(|(hid, v)| h.get(hid) == Some(v));

            // Conditional mass of an event over a subset of observables.
            let mass_where = |pred: &dyn Fn(&Assignment) -> bool| -> f64 {
                let mut m = 0.0;
                for (h, row) in &joint {
                    if !consistent(h) {
                        continue;
                    }
                    for (j, v) in row.iter().enumerate() {
                        if pred(&observable_assignment_at(&vars, &dims, j)) {
                            m += v;
                        }
                    }
                }
                m
            };
            let cond_mass = mass_where(&|_| true);
            if cond_mass <= 0.0 {
                continue;
            }

            // Enumerate assignments of the product's scope.
            let scope_vars: Vec<VarId> = scopes[&p].iter().collect();
            let scope_dims: Vec<usize> =
                scope_vars.iter().map(|v| spn.variable(*v).domain_size).collect();
            let scope_total: usize = scope_dims.iter().product();
            for si in 0..scope_total {
                let target = observable_assignment_at(&scope_vars, &scope_dims, si);
                let matches_on = |a: &Assignment, vars: &[VarId]| {
                    vars.iter().all(|v| a.get(*v) == target.get(*v))
                };
                let joint_p = mass_where(&|a| matches_on(a, &scope_vars)) / cond_mass;
                let mut product_of_children = 1.0;
                for c in &children {
                    let child_vars: Vec<VarId> = scopes[c].iter().collect();
                    product_of_children *=
                        mass_where(&|a| matches_on(a, &child_vars)) / cond_mass;
                }
                let dev = (joint_p - product_of_children).abs();
                if dev > report.max_deviation {
                    report.max_deviation = dev;
                }
            }
        }
    }
    Ok(report)
}

/// Structural diagnostics relating circuit depth to the network's width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreewidthReport {
    /// Largest number of hidden parents over all observables.
    pub max_in_degree: usize,
    /// Lower bound on the tree-width of the moralized network.
    pub bound: usize,
    /// Half the source circuit's height, for the alternating-layer
    /// comparison.
    pub floor_half_height: usize,
}

pub fn treewidth_lower_bound(bn: &BayesNet, spn: &SpnGraph) -> Result<TreewidthReport> {
    let mut in_degree: BTreeMap<VarId, usize> = BTreeMap::new();
    for (_, x) in bn.edges() {
        *in_degree.entry(x).or_insert(0) += 1;
    }
    let max_in_degree = in_degree.values().copied().max().unwrap_or(0);
    Ok(TreewidthReport {
        max_in_degree,
        bound: max_in_degree,
        floor_half_height: spn.size_metrics()?.height / 2,
    })
}

/// Measured size of the network against the explicit linear bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BnSizeReport {
    pub graph_size: usize,
    pub total_add_size: usize,
    /// `N*|S| + |S| + 2*N*|S|` for N observables and source size `|S|`.
    pub bound_rhs: usize,
}

impl BnSizeReport {
    pub fn total(&self) -> usize {
        self.graph_size + self.total_add_size
    }

    pub fn holds(&self) -> bool {
        self.total() <= self.bound_rhs
    }
}

pub fn bn_size(bn: &BayesNet, spn: &SpnGraph) -> Result<BnSizeReport> {
    let s = spn.size_metrics()?.size;
    let n = bn.observables.len().max(1);
    Ok(BnSizeReport {
        graph_size: bn.graph_size(),
        total_add_size: bn.total_add_size(),
        bound_rhs: n * s + s + 2 * n * s,
    })
}
