//! Symbolic variable elimination over the compiled network, recovering a
//! sum-product circuit that encodes the same distribution.
//!
//! Hidden variables are eliminated in inverse topological order of their
//! source sum nodes: the factors containing the variable are multiplied and
//! the variable is summed out, turning its branch node into a weighted-sum
//! operator with the stump's weights. The final symbolic diagram contains
//! only product/sum operators and distribution leaves and materializes
//! directly as a circuit.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::add::{merge_product_chains, multiply, sum_out, Add, AddBuilder, AddId, AddNode, HiddenId};
use crate::bn::{bn_size, to_bn, BayesNet};
use crate::error::{Error, Result};
use crate::normal::to_normal;
use crate::spn::{NodeId, SpnGraph, SpnNodeKind, Variable};
use crate::validate::validate;
use crate::DEFAULT_TOLERANCE;

/// Instrumented counters of one elimination run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VeStats {
    /// Number of pairwise factor multiplications.
    pub multiplications: usize,
    /// Total recursive multiplication steps across all of them.
    pub multiply_ops: u64,
    /// Number of sum-out operations (one per hidden variable present).
    pub sumouts: usize,
    /// Largest intermediate factor size seen.
    pub max_factor_size: usize,
}

/// Copies every factor into one diagram under a product root.
fn combine_factors(factors: Vec<Add>, order: Vec<HiddenId>) -> Add {
    debug_assert!(factors.len() >= 2);
    let mut b = AddBuilder::new(order);
    let mut roots = Vec::with_capacity(factors.len());
    for f in &factors {
        let mut memo: HashMap<AddId, AddId> = HashMap::new();
        fn copy(
            f: &Add,
            id: AddId,
            b: &mut AddBuilder,
            memo: &mut HashMap<AddId, AddId>,
        ) -> AddId {
            if let Some(r) = memo.get(&id) {
                return *r;
            }
            let node = match f.node(id) {
                AddNode::Real(c) => AddNode::Real(*c),
                AddNode::DistLeaf { var, probs, source } => AddNode::DistLeaf {
                    var: *var,
                    probs: probs.clone(),
                    source: *source,
                },
                AddNode::Var { hidden, children } => AddNode::Var {
                    hidden: *hidden,
                    children: children.iter().map(|c| copy(f, *c, b, memo)).collect(),
                },
                AddNode::OpProduct { children } => AddNode::OpProduct {
                    children: children.iter().map(|c| copy(f, *c, b, memo)).collect(),
                },
                AddNode::OpSum { children, weights } => AddNode::OpSum {
                    children: children.iter().map(|c| copy(f, *c, b, memo)).collect(),
                    weights: weights.clone(),
                },
            };
            let r = b.push(node);
            memo.insert(id, r);
            r
        }
        roots.push(copy(f, f.root(), &mut b, &mut memo));
    }
    let root = b.push(AddNode::OpProduct { children: roots });
    merge_product_chains(&b.finish(root))
}

/// Runs variable elimination over the network's observable CPDs and returns
/// the final symbolic diagram.
pub fn eliminate(bn: &BayesNet) -> Result<(Add, VeStats)> {
    let mut stats = VeStats::default();
    let mut factors: Vec<Add> = bn
        .observable_ids()
        .map(|x| bn.cpd_observable(x).cloned().expect("cpd per observable"))
        .collect();
    for f in &factors {
        stats.max_factor_size = stats.max_factor_size.max(f.size());
    }

    let order: Vec<HiddenId> = bn.hidden_order().iter().rev().copied().collect();
    for h in order {
        let with_h: Vec<usize> = factors
            .iter()
            .enumerate()
            .filter(|(_, f)| f.contains_hidden(h))
            .map(|(i, _)| i)
            .collect();
        if with_h.is_empty() {
            return Err(Error::FactorlessHidden(h.0));
        }
        for i in &with_h {
            if factors[*i].hidden_occurrences(h) > 1 {
                return Err(Error::DuplicateHiddenOccurrence(h.0));
            }
        }

        let mut acc = factors[with_h[0]].clone();
        for i in with_h.iter().skip(1) {
            let (product, ops) = multiply(&acc, &factors[*i])?;
            stats.multiplications += 1;
            stats.multiply_ops += ops;
            acc = product;
        }
        if acc.hidden_occurrences(h) > 1 {
            return Err(Error::DuplicateHiddenOccurrence(h.0));
        }
        let stump = bn
            .cpd_hidden(h)
            .ok_or(Error::UnknownHidden(h.0))?;
        acc = sum_out(&acc, h, stump)?;
        stats.sumouts += 1;
        debug_assert!(!acc.contains_hidden(h));
        stats.max_factor_size = stats.max_factor_size.max(acc.size());

        // Replace the consumed factors by the new one, keeping position.
        let first = with_h[0];
        for i in with_h.into_iter().rev() {
            factors.remove(i);
        }
        factors.insert(first, acc);
    }

    let order = bn.hidden_order().to_vec();
    let result = match factors.len() {
        0 => Add::constant(1.0, order),
        1 => factors.pop().expect("one factor"),
        _ => combine_factors(factors, order),
    };
    stats.max_factor_size = stats.max_factor_size.max(result.size());
    Ok((result, stats))
}

/// Materializes a fully-eliminated symbolic diagram as a circuit: sum
/// operators become weighted sum nodes, product operators product nodes and
/// distribution leaves terminal distributions.
pub fn symbolic_to_spn(add: &Add, name: &str, variables: &[Variable]) -> Result<SpnGraph> {
    let mut g = SpnGraph::with_variable_table(name, variables.to_vec());
    let mut map: BTreeMap<AddId, NodeId> = BTreeMap::new();

    // Children-first order over the diagram.
    let mut order: Vec<AddId> = Vec::new();
    let mut state: BTreeMap<AddId, u8> = BTreeMap::new();
    let mut stack = vec![(add.root(), false)];
    while let Some((id, expanded)) = stack.pop() {
        if expanded {
            order.push(id);
            continue;
        }
        if state.insert(id, 1).is_some() {
            continue;
        }
        stack.push((id, true));
        for c in add.node(id).children() {
            stack.push((*c, false));
        }
    }

    for id in order {
        let spn_id = match add.node(id) {
            AddNode::Var { hidden, .. } => return Err(Error::ResidualHidden(hidden.0)),
            AddNode::Real(_) => {
                return Err(Error::NotNormal(
                    "symbolic diagram contains a bare real terminal".into(),
                ))
            }
            AddNode::DistLeaf { var, probs, .. } => g.add_terminal_dist(*var, probs.clone())?,
            AddNode::OpProduct { children } => {
                // A diagram may reference one shared child twice; the
                // circuit has no parallel edges, so repeat factors go
                // through a one-child product wrapper.
                let mut kids: Vec<NodeId> = Vec::with_capacity(children.len());
                for c in children {
                    let mut k = map[c];
                    while kids.contains(&k) {
                        k = g.add_product(&[k])?;
                    }
                    kids.push(k);
                }
                g.add_product(&kids)?
            }
            AddNode::OpSum { children, weights } => {
                // Duplicate branches of a shared child merge exactly by
                // adding their weights.
                let mut kids: Vec<(NodeId, f64)> = Vec::with_capacity(children.len());
                for (c, w) in children.iter().zip(weights) {
                    match kids.iter_mut().find(|(k, _)| *k == map[c]) {
                        Some((_, acc)) => *acc += *w,
                        None => kids.push((map[c], *w)),
                    }
                }
                g.add_sum(&kids)?
            }
        };
        map.insert(id, spn_id);
    }
    g.set_root(map[&add.root()])?;
    Ok(g)
}

/// Convenience: eliminate and materialize in one step.
pub fn recover(bn: &BayesNet) -> Result<(SpnGraph, VeStats)> {
    let (add, stats) = eliminate(bn)?;
    let spn = symbolic_to_spn(&add, bn.name(), bn.observables())?;
    Ok((spn, stats))
}

/// Canonical interning key of a circuit node, used for the isomorphism
/// check. Weights and probabilities compare by exact bits: both sides of the
/// round trip copy the same floats without rearithmetic.
#[derive(PartialEq, Eq, Hash)]
enum CanonKey {
    Dist(u32, Vec<u64>),
    Product(Vec<u32>),
    Sum(Vec<(u32, u64)>),
    Indicator(u32, u32),
}

/// Structural equality of two circuits up to product-chain contraction:
/// equal canonical form at the root and equally much sharing. Canonical
/// forms are computed by hash-consing bottom-up, with product children of
/// products spliced into their parents.
pub fn isomorphic_mod_product_chains(a: &SpnGraph, b: &SpnGraph) -> Result<bool> {
    fn flat_children(g: &SpnGraph, id: NodeId, out: &mut Vec<NodeId>) {
        for c in &g.node(id).children {
            if g.node(*c).is_product() {
                flat_children(g, *c, out);
            } else {
                out.push(*c);
            }
        }
    }

    // Interning both graphs in one table makes canonical ids comparable.
    let mut intern: HashMap<CanonKey, u32> = HashMap::new();
    let mut canon_root = |g: &SpnGraph| -> Result<(u32, usize)> {
        let mut ids: BTreeMap<NodeId, u32> = BTreeMap::new();
        let order = g.bottom_up_order()?;
        let parents = g.parents_map();
        let root = g.root()?;
        // A product node spliced into product parents everywhere does not
        // survive contraction; everything else does.
        let survives = |id: NodeId| -> bool {
            let node = g.node(id);
            !node.is_product()
                || id == root
                || parents
                    .get(&id)
                    .map_or(true, |ps| ps.iter().any(|p| !g.node(*p).is_product()))
        };
        for id in order.iter().copied() {
            let node = g.node(id);
            let key = match &node.kind {
                SpnNodeKind::Indicator { var, value } => {
                    CanonKey::Indicator(var.0, *value as u32)
                }
                SpnNodeKind::TerminalDist { var, probs } => {
                    CanonKey::Dist(var.0, probs.iter().map(|p| p.to_bits()).collect())
                }
                SpnNodeKind::Product => {
                    let mut kids = Vec::new();
                    flat_children(g, id, &mut kids);
                    let mut canon: Vec<u32> = kids.iter().map(|c| ids[c]).collect();
                    canon.sort_unstable();
                    CanonKey::Product(canon)
                }
                SpnNodeKind::Sum => {
                    let mut canon: Vec<(u32, u64)> = node
                        .children
                        .iter()
                        .zip(&node.weights)
                        .map(|(c, w)| (ids[c], w.to_bits()))
                        .collect();
                    canon.sort_unstable();
                    CanonKey::Sum(canon)
                }
            };
            let next = intern.len() as u32;
            let canon = *intern.entry(key).or_insert(next);
            ids.insert(id, canon);
        }
        let distinct: BTreeSet<u32> = ids
            .iter()
            .filter(|(id, _)| survives(**id))
            .map(|(_, c)| *c)
            .collect();
        Ok((ids[&root], distinct.len()))
    };
    let (ra, na) = canon_root(a)?;
    let (rb, nb) = canon_root(b)?;
    Ok(ra == rb && na == nb)
}

/// Outcome of the full round trip
/// `normalize -> compile -> eliminate -> materialize`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundTripReport {
    /// Largest absolute difference between the input's distribution and the
    /// recovered circuit's distribution.
    pub max_deviation: f64,
    pub input_size: usize,
    pub normal_size: usize,
    pub bn_graph_size: usize,
    pub bn_total_size: usize,
    pub recovered_size: usize,
    pub convert_ops: u64,
    pub multiply_ops: u64,
    pub multiplications: usize,
    pub recovered_complete: bool,
    pub recovered_decomposable: bool,
    pub recovered_normal: bool,
    /// Recovered size does not exceed the normal form's size.
    pub size_nonincreasing: bool,
    /// Measured network size within its explicit linear bound.
    pub bn_size_bound_holds: bool,
    /// Multiplication steps within `2 * N * |normal|`.
    pub multiply_ops_bound_holds: bool,
    /// Structurally equal to the normal form up to product-chain
    /// contraction (reported, not required for `pass`).
    pub isomorphic_to_normal: bool,
    pub tolerance: f64,
    pub pass: bool,
}

/// Runs the whole pipeline on a complete and consistent circuit and checks
/// every bound. Distribution equality is measured against the brute-force
/// enumeration oracle, so the input must be within the enumeration cap.
pub fn roundtrip(spn: &SpnGraph) -> Result<RoundTripReport> {
    roundtrip_with_tolerance(spn, DEFAULT_TOLERANCE)
}

pub fn roundtrip_with_tolerance(spn: &SpnGraph, tolerance: f64) -> Result<RoundTripReport> {
    let input_size = spn.size_metrics()?.size;
    let reference = spn.distribution()?;

    let (normal, _traces) = to_normal(spn)?;
    let normal_size = normal.size_metrics()?.size;
    let bn = to_bn(&normal)?;
    let size_report = bn_size(&bn, &normal)?;
    let (recovered, stats) = recover(&bn)?;

    let recovered_dist = recovered.distribution()?;
    let max_deviation = reference.max_abs_diff(&recovered_dist)?;
    let report = validate(&recovered)?;
    let recovered_size = recovered.size_metrics()?.size;

    let n = normal.num_variables().max(1) as u64;
    let ops_bound = 2 * n * normal_size as u64;

    let size_nonincreasing = recovered_size <= normal_size;
    let bn_size_bound_holds = size_report.holds();
    let multiply_ops_bound_holds = stats.multiply_ops <= ops_bound;
    let isomorphic_to_normal = isomorphic_mod_product_chains(&recovered, &normal)?;
    let pass = max_deviation <= tolerance
        && report.complete
        && report.decomposable
        && size_nonincreasing
        && bn_size_bound_holds
        && multiply_ops_bound_holds;

    Ok(RoundTripReport {
        max_deviation,
        input_size,
        normal_size,
        bn_graph_size: bn.graph_size(),
        bn_total_size: size_report.total(),
        recovered_size,
        convert_ops: bn.build_ops(),
        multiply_ops: stats.multiply_ops,
        multiplications: stats.multiplications,
        recovered_complete: report.complete,
        recovered_decomposable: report.decomposable,
        recovered_normal: report.normal,
        size_nonincreasing,
        bn_size_bound_holds,
        multiply_ops_bound_holds,
        isomorphic_to_normal,
        tolerance,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::add::HiddenAssignment;
    use crate::spn::Assignment;
    use crate::testfix::two_var_demo;

    fn demo_pipeline() -> (SpnGraph, BayesNet) {
        let (normal, _) = to_normal(&two_var_demo()).unwrap();
        let bn = to_bn(&normal).unwrap();
        (normal, bn)
    }

    #[test]
    fn eliminate_demo_yields_sum_of_products() {
        let (_, bn) = demo_pipeline();
        let (add, stats) = eliminate(&bn).unwrap();
        assert_eq!(stats.multiplications, 1);
        assert_eq!(stats.sumouts, 1);
        match add.node(add.root()) {
            AddNode::OpSum { children, weights } => {
                assert_eq!(children.len(), 3);
                assert!((weights[0] - 4.0 / 7.0).abs() < 1e-12);
                for c in children {
                    assert!(matches!(add.node(*c), AddNode::OpProduct { .. }));
                }
            }
            other => panic!("expected sum operator at root, got {other:?}"),
        }
        // Evaluates to the source distribution.
        let x = Assignment::new()
            .with(crate::spn::VarId(0), 0)
            .with(crate::spn::VarId(1), 0);
        let v = add.evaluate(&HiddenAssignment::new(), &x).unwrap();
        assert!((v - 594.0 / 3500.0).abs() < 1e-12);
    }

    #[test]
    fn eliminate_zero_hidden_network_is_a_product_of_leaves() {
        let mut g = SpnGraph::new("prod");
        let x1 = g.add_variable("X1", 2).unwrap();
        let x2 = g.add_variable("X2", 2).unwrap();
        let a = g.add_terminal_dist(x1, vec![0.3, 0.7]).unwrap();
        let b = g.add_terminal_dist(x2, vec![0.9, 0.1]).unwrap();
        let p = g.add_product(&[a, b]).unwrap();
        g.set_root(p).unwrap();
        let bn = to_bn(&g).unwrap();
        let (add, stats) = eliminate(&bn).unwrap();
        assert_eq!(stats.multiplications, 0);
        assert!(matches!(add.node(add.root()), AddNode::OpProduct { .. }));
        let recovered = symbolic_to_spn(&add, "r", bn.observables()).unwrap();
        let d = recovered.distribution().unwrap();
        assert!(g.distribution().unwrap().max_abs_diff(&d).unwrap() <= 1e-12);
    }

    #[test]
    fn recovered_demo_matches_normal_form() {
        let (normal, bn) = demo_pipeline();
        let (recovered, stats) = recover(&bn).unwrap();
        let r = validate(&recovered).unwrap();
        assert!(r.complete && r.decomposable && r.normal);
        let d0 = normal.distribution().unwrap();
        let d1 = recovered.distribution().unwrap();
        assert!(d0.max_abs_diff(&d1).unwrap() <= 1e-9);
        assert!(recovered.size_metrics().unwrap().size <= normal.size_metrics().unwrap().size);
        assert!(isomorphic_mod_product_chains(&recovered, &normal).unwrap());
        let s = normal.size_metrics().unwrap().size as u64;
        assert!(stats.multiply_ops <= 2 * 2 * s);
    }

    #[test]
    fn symbolic_to_spn_rejects_residual_hidden_variables() {
        let (_, bn) = demo_pipeline();
        let x1 = bn.cpd_observable(crate::spn::VarId(0)).unwrap();
        let err = symbolic_to_spn(x1, "bad", bn.observables()).unwrap_err();
        assert_eq!(err.code(), "residual-hidden");
    }

    #[test]
    fn symbolic_to_spn_rejects_bare_real_terminals() {
        let add = Add::constant(2.0, Vec::new());
        let err = symbolic_to_spn(&add, "bad", &[]).unwrap_err();
        assert_eq!(err.code(), "not-normal");
    }

    #[test]
    fn roundtrip_demo_passes() {
        let report = roundtrip(&two_var_demo()).unwrap();
        assert!(report.pass, "{report:?}");
        assert!(report.max_deviation <= 1e-9);
        assert!(report.size_nonincreasing);
        assert!(report.isomorphic_to_normal);
    }

    #[test]
    fn roundtrip_point_mass() {
        let mut g = SpnGraph::new("point");
        let x1 = g.add_variable("X1", 2).unwrap();
        let x2 = g.add_variable("X2", 2).unwrap();
        let i1 = g.add_indicator(x1, 0).unwrap();
        let i2 = g.add_indicator(x2, 0).unwrap();
        let inner = g.add_product(&[i1, i2]).unwrap();
        let outer = g.add_product(&[i1, inner]).unwrap();
        g.set_root(outer).unwrap();
        let report = roundtrip(&g).unwrap();
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn roundtrip_of_recovered_circuit_is_stable() {
        let (normal, bn) = demo_pipeline();
        let (recovered, _) = recover(&bn).unwrap();
        let report = roundtrip(&recovered).unwrap();
        assert!(report.pass, "{report:?}");
        assert!(report.recovered_size <= normal.size_metrics().unwrap().size);
    }

    #[test]
    fn isomorphism_detects_weight_differences() {
        let (normal, _) = to_normal(&two_var_demo()).unwrap();
        let mut other = normal.clone();
        let root = other.root().unwrap();
        other.node_mut(root).weights[0] += 0.25;
        other.node_mut(root).weights[1] -= 0.25;
        assert!(!isomorphic_mod_product_chains(&normal, &other).unwrap());
    }
}
