//! Rewrite passes that bring a complete and consistent SPN into normal form:
//! decomposable, weight-normalized, every scope-1 sum reduced to a
//! distribution leaf. Each pass preserves the encoded distribution; the
//! decomposition pass preserves the network polynomial pointwise.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::spn::{IndicatorValues, NodeId, SpnGraph, SpnNodeKind, VarId, VarSet};
use crate::validate::{validate, Violation};
use crate::WEIGHT_DRIFT_EPS;

/// Size accounting for one rewrite pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransformTrace {
    pub pass: &'static str,
    pub nodes_added: usize,
    pub nodes_removed: usize,
    pub edges_added: usize,
    pub edges_removed: usize,
    pub size_before: usize,
    pub size_after: usize,
}

impl TransformTrace {
    fn unchanged(pass: &'static str, size: usize) -> Self {
        TransformTrace {
            pass,
            nodes_added: 0,
            nodes_removed: 0,
            edges_added: 0,
            edges_removed: 0,
            size_before: size,
            size_after: size,
        }
    }

    pub fn is_noop(&self) -> bool {
        self.nodes_added == 0
            && self.nodes_removed == 0
            && self.edges_added == 0
            && self.edges_removed == 0
    }
}

/// Mutation counters for the decomposition pass.
#[derive(Default)]
struct Counters {
    nodes_added: usize,
    nodes_removed: usize,
    edges_added: usize,
    edges_removed: usize,
}

fn all_ones_inputs(g: &SpnGraph) -> IndicatorValues {
    let mut iv = IndicatorValues::new();
    for (i, var) in g.variables().enumerate() {
        iv.set(VarId(i as u32), vec![1.0; var.domain_size]);
    }
    iv
}

/// Value of every member node under all-ones indicator inputs. For a node
/// whose polynomial is a scalar multiple of a monomial this yields exactly
/// that scalar.
fn subtree_masses(
    g: &SpnGraph,
    members: &BTreeSet<NodeId>,
    inputs: &IndicatorValues,
) -> Result<BTreeMap<NodeId, f64>> {
    let order = g.bottom_up_order_of(members)?;
    let mut vals = BTreeMap::new();
    for id in order {
        let node = g.node(id);
        let v = match &node.kind {
            SpnNodeKind::Indicator { var, value } => inputs.get(*var, *value).unwrap_or(1.0),
            SpnNodeKind::TerminalDist { probs, .. } => probs.iter().sum(),
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
    Ok(vals)
}

/// Finds or creates the indicator node for `(var, value)`.
fn indicator_node(g: &mut SpnGraph, counters: &mut Counters, var: VarId, value: usize) -> NodeId {
    if let Some(id) = g.find_indicator(var, value) {
        return id;
    }
    counters.nodes_added += 1;
    g.add_indicator(var, value).expect("valid indicator")
}

/// A node computing the product of the pinned indicators of `vars`; a single
/// variable links its indicator directly instead of a one-child product.
fn monomial_node(
    g: &mut SpnGraph,
    counters: &mut Counters,
    vars: VarSet,
    star: &BTreeMap<VarId, usize>,
) -> NodeId {
    let inds: Vec<NodeId> = vars
        .iter()
        .map(|v| indicator_node(g, counters, v, star[&v]))
        .collect();
    if inds.len() == 1 {
        inds[0]
    } else {
        counters.nodes_added += 1;
        counters.edges_added += inds.len();
        g.add_product(&inds).expect("valid product")
    }
}

/// Contracts product nodes with exactly one child, repointing their parents.
/// A contraction that would duplicate a child edge under a parent is skipped
/// for that parent (the one-child wrapper stays) so the polynomial is never
/// changed.
fn contract_single_child_products(g: &mut SpnGraph) -> Result<()> {
    let mut kept = BTreeSet::new();
    loop {
        let reachable = g.reachable()?;
        let candidate = reachable.iter().copied().find(|id| {
            let n = g.node(*id);
            !kept.contains(id) && n.is_product() && n.children.len() == 1
        });
        let Some(id) = candidate else { break };
        let child = g.node(id).children[0];
        let parents = g.parents_map();
        let mut blocked = false;
        for p in parents.get(&id).cloned().unwrap_or_default() {
            if !g.contains(p) {
                continue;
            }
            if g.node(p).children.contains(&child) {
                if g.node(p).is_sum() {
                    // Parallel sum edges merge exactly by adding weights.
                    let w = g.remove_edge(p, id).expect("sum edge weight");
                    let node = g.node_mut(p);
                    let pos = node
                        .children
                        .iter()
                        .position(|c| *c == child)
                        .expect("existing edge");
                    node.weights[pos] += w;
                } else if let SpnNodeKind::Indicator { .. } = g.node(child).kind {
                    // Duplicate indicator factors are idempotent; drop the
                    // wrapper edge entirely.
                    g.remove_edge(p, id);
                } else {
                    blocked = true;
                }
            } else {
                g.replace_child(p, id, child);
            }
        }
        if g.root()? == id {
            g.set_root(child)?;
        }
        if blocked {
            // Some parent still needs the one-child wrapper to avoid a
            // duplicate edge; leave it in place.
            kept.insert(id);
            continue;
        }
        g.remove_edge(id, child);
        g.remove_node(id);
    }
    Ok(())
}

/// Inlines product children of product nodes (exact by associativity). An
/// inner product referenced by non-product parents survives for them;
/// otherwise it dies once orphaned. Requires decomposable input so inlining
/// can never duplicate a child edge.
fn flatten_product_chains(g: &mut SpnGraph) -> Result<()> {
    loop {
        let reachable = g.reachable()?;
        let mut changed = false;
        for id in reachable.iter().copied().collect::<Vec<_>>() {
            if !g.contains(id) || !g.node(id).is_product() {
                continue;
            }
            let kids = g.node(id).children.clone();
            if kids.iter().all(|c| !g.node(*c).is_product()) {
                continue;
            }
            let mut new_children: Vec<NodeId> = Vec::new();
            for c in kids {
                if g.node(c).is_product() {
                    for gc in g.node(c).children.clone() {
                        debug_assert!(!new_children.contains(&gc));
                        new_children.push(gc);
                    }
                } else {
                    new_children.push(c);
                }
            }
            g.node_mut(id).children = new_children;
            changed = true;
        }
        if !changed {
            break;
        }
        g.remove_unreachable()?;
    }
    Ok(())
}

/// Rewrites a complete and consistent SPN into a complete and decomposable
/// one with the same network polynomial.
///
/// Each non-decomposable product node `v` is fixed in inverse topological
/// order: the variables shared between its children are pinned (consistency
/// forces a single value per shared variable inside the subtree), all
/// occurrences of their indicators below `v` are disconnected, and one
/// product of those indicators is reattached to `v` directly. Subtree nodes
/// reused from outside keep their polynomial through duplicate product nodes
/// that restore the removed indicators. Disconnecting a subtree whose whole
/// scope is shared also removes its scalar mass; that scalar is reattached
/// through a single-child sum so the polynomial stays pointwise equal.
pub fn decompose(spn: &SpnGraph) -> Result<(SpnGraph, TransformTrace)> {
    let report = validate(spn)?;
    if !report.complete {
        return Err(Error::IncompleteSum(
            report.witness(Violation::IncompleteSum).expect("witness"),
        ));
    }
    if !report.consistent {
        return Err(Error::InconsistentProduct(
            report
                .witness(Violation::InconsistentProduct)
                .expect("witness"),
        ));
    }
    let before = spn.size_metrics()?;
    if report.decomposable {
        return Ok((spn.clone(), TransformTrace::unchanged("decompose", before.size)));
    }

    let mut g = spn.clone();
    let mut counters = Counters::default();
    let ones = all_ones_inputs(&g);
    let order = g.bottom_up_order()?;

    for vm in order {
        if !g.contains(vm) || !g.node(vm).is_product() {
            continue;
        }
        let reachable = g.reachable()?;
        if !reachable.contains(&vm) {
            continue;
        }
        let scopes = g.scopes()?;
        let children = g.node(vm).children.clone();
        let mut omega = VarSet::empty();
        for (i, a) in children.iter().enumerate() {
            for b in children.iter().skip(i + 1) {
                omega = omega.union(scopes[a].intersection(scopes[b]));
            }
        }
        if omega.is_empty() {
            continue;
        }

        // The single value each shared variable takes inside the subtree.
        let value_sets = g.value_sets()?;
        let mut star: BTreeMap<VarId, usize> = BTreeMap::new();
        for var in omega.iter() {
            let mask = value_sets[&vm].get(&var).copied().unwrap_or(0);
            if mask.count_ones() != 1 {
                return Err(Error::InconsistentProduct(vm));
            }
            star.insert(var, mask.trailing_zeros() as usize);
        }

        let subtree = g.descendants(vm);
        let affected: BTreeSet<NodeId> = subtree
            .iter()
            .copied()
            .filter(|n| !scopes[n].intersection(omega).is_empty())
            .collect();
        let masses = subtree_masses(&g, &subtree, &ones)?;

        // Duplicates keep the polynomials of parents outside the subtree
        // unchanged. Leaves never change, so they need none.
        let parents = g.parents_map();
        for v in &affected {
            if *v == vm || g.node(*v).is_leaf() {
                continue;
            }
            let outside: Vec<NodeId> = parents
                .get(v)
                .map(|ps| {
                    ps.iter()
                        .copied()
                        .filter(|p| !subtree.contains(p) && reachable.contains(p))
                        .collect()
                })
                .unwrap_or_default();
            if outside.is_empty() {
                continue;
            }
            let pinned = scopes[v].intersection(omega);
            let replacement = if scopes[v].is_subset(&omega) {
                // The whole subtree is shared: its polynomial is a scalar
                // times the pinned monomial.
                let mono = monomial_node(&mut g, &mut counters, pinned, &star);
                let mass = masses[v];
                if (mass - 1.0).abs() > WEIGHT_DRIFT_EPS {
                    counters.nodes_added += 1;
                    counters.edges_added += 1;
                    g.add_sum(&[(mono, mass)])?
                } else {
                    mono
                }
            } else {
                let mono: Vec<NodeId> = pinned
                    .iter()
                    .map(|x| indicator_node(&mut g, &mut counters, x, star[&x]))
                    .collect();
                let mut kids = vec![*v];
                kids.extend(mono);
                counters.nodes_added += 1;
                counters.edges_added += kids.len();
                g.add_product(&kids)?
            };
            for f in outside {
                g.replace_child(f, *v, replacement);
            }
        }

        // Disconnect every child whose whole scope is shared, bottom-up.
        // Dropping such a child from a product also drops its scalar mass,
        // which is compensated below.
        let strip_order = g.bottom_up_order_of(&affected)?;
        let mut compensations: Vec<(NodeId, f64)> = Vec::new();
        for v in strip_order {
            let kids = g.node(v).children.clone();
            let is_product = g.node(v).is_product();
            let mut dropped_mass = 1.0;
            for child in kids {
                let drop = scopes
                    .get(&child)
                    .map_or(false, |s| !s.is_empty() && s.is_subset(&omega));
                if drop {
                    g.remove_edge(v, child);
                    counters.edges_removed += 1;
                    if is_product {
                        dropped_mass *= masses.get(&child).copied().unwrap_or(1.0);
                    }
                }
            }
            if is_product && (dropped_mass - 1.0).abs() > WEIGHT_DRIFT_EPS {
                compensations.push((v, dropped_mass));
            }
        }

        // Reattach the pinned indicators to vm once.
        let mono = monomial_node(&mut g, &mut counters, omega, &star);
        g.add_child(vm, mono);
        counters.edges_added += 1;

        let parents_now = g.parents_map();
        for (v, mass) in compensations {
            counters.nodes_added += 1;
            counters.edges_added += 1;
            let s = g.add_sum(&[(v, mass)])?;
            for p in parents_now.get(&v).cloned().unwrap_or_default() {
                if g.contains(p) {
                    g.replace_child(p, v, s);
                }
            }
            if g.root()? == v {
                g.set_root(s)?;
            }
        }
    }

    let nodes_before_cleanup = g.num_nodes();
    let edges_before_cleanup: usize = g.node_ids().map(|id| g.node(id).children.len()).sum();
    g.remove_unreachable()?;
    contract_single_child_products(&mut g)?;
    flatten_product_chains(&mut g)?;
    g.remove_unreachable()?;
    let edges_after_cleanup: usize = g.node_ids().map(|id| g.node(id).children.len()).sum();
    counters.nodes_removed += nodes_before_cleanup - g.num_nodes();
    if edges_after_cleanup > edges_before_cleanup {
        counters.edges_added += edges_after_cleanup - edges_before_cleanup;
    } else {
        counters.edges_removed += edges_before_cleanup - edges_after_cleanup;
    }

    let after = g.size_metrics()?;
    debug_assert!(validate(&g)?.decomposable);
    Ok((
        g,
        TransformTrace {
            pass: "decompose",
            nodes_added: counters.nodes_added,
            nodes_removed: counters.nodes_removed,
            edges_added: counters.edges_added,
            edges_removed: counters.edges_removed,
            size_before: before.size,
            size_after: after.size,
        },
    ))
}

/// Rescales every sum node's outgoing weights to sum to 1 without changing
/// the encoded distribution or the graph structure.
///
/// One bottom-up sweep computes the total mass `val(v)` of every node under
/// all-ones inputs; each sum edge weight becomes `w * val(child) / val(sum)`.
/// A sum with zero mass has no defined normalization and is an error.
pub fn normalize_weights(spn: &SpnGraph) -> Result<SpnGraph> {
    let report = validate(spn)?;
    if !report.complete {
        return Err(Error::IncompleteSum(
            report.witness(Violation::IncompleteSum).expect("witness"),
        ));
    }
    if !report.decomposable {
        return Err(Error::NondecomposableProduct(
            report
                .witness(Violation::NondecomposableProduct)
                .expect("witness"),
        ));
    }
    let reachable = spn.reachable()?;
    let masses = subtree_masses(spn, &reachable, &all_ones_inputs(spn))?;

    let mut g = spn.clone();
    for id in reachable {
        if !g.node(id).is_sum() {
            continue;
        }
        let total = masses[&id];
        if total == 0.0 {
            return Err(Error::DegenerateSum(id));
        }
        let children = g.node(id).children.clone();
        let mut weights: Vec<f64> = g
            .node(id)
            .weights
            .iter()
            .zip(&children)
            .map(|(w, c)| w * masses[c] / total)
            .collect();
        let drift: f64 = weights.iter().sum();
        if (drift - 1.0).abs() > WEIGHT_DRIFT_EPS && drift > 0.0 {
            for w in weights.iter_mut() {
                *w /= drift;
            }
        }
        g.node_mut(id).weights = weights;
    }
    Ok(g)
}

fn reduce_terminal_sums_traced(spn: &SpnGraph) -> Result<(SpnGraph, TransformTrace)> {
    let report = validate(spn)?;
    if !report.complete || !report.decomposable {
        return Err(Error::NotNormal(
            "input must be complete and decomposable".into(),
        ));
    }
    let before = spn.size_metrics()?;
    for id in spn.bottom_up_order()? {
        let node = spn.node(id);
        if node.is_sum() {
            let total: f64 = node.weights.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::NotNormal(format!(
                    "sum node {id} has unnormalized weights; normalize first"
                )));
            }
        }
    }

    let mut g = spn.clone();
    let mut counters = Counters::default();
    let scopes = g.scopes()?;
    let order = g.bottom_up_order()?;

    // Scope-1 sums become distribution leaves whose probabilities are the
    // polynomial coefficients of the sub-circuit; deeper ones are already
    // reduced when an enclosing sum is visited.
    for id in order {
        if !g.node(id).is_sum() || scopes[&id].len() != 1 {
            continue;
        }
        let var = scopes[&id].iter().next().expect("scope-1");
        let domain = g.variable(var).domain_size;
        let mut probs = Vec::with_capacity(domain);
        for value in 0..domain {
            let mut iv = IndicatorValues::new();
            let mut one_hot = vec![0.0; domain];
            one_hot[value] = 1.0;
            iv.set(var, one_hot);
            probs.push(g.evaluate_from(id, &iv)?);
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > WEIGHT_DRIFT_EPS && total > 0.0 {
            for p in probs.iter_mut() {
                *p /= total;
            }
        }
        let node = g.node_mut(id);
        counters.edges_removed += node.children.len();
        node.children.clear();
        node.weights.clear();
        node.kind = SpnNodeKind::TerminalDist { var, probs };
    }

    // Remaining bare indicators become point masses; same polynomial, and
    // every leaf is a distribution afterwards.
    let ids: Vec<NodeId> = g.node_ids().collect();
    for id in ids {
        if let SpnNodeKind::Indicator { var, value } = g.node(id).kind {
            let domain = g.variable(var).domain_size;
            let mut probs = vec![0.0; domain];
            probs[value] = 1.0;
            g.node_mut(id).kind = SpnNodeKind::TerminalDist { var, probs };
        }
    }

    let nodes_before_prune = g.num_nodes();
    g.remove_unreachable()?;
    counters.nodes_removed += nodes_before_prune - g.num_nodes();

    let after = g.size_metrics()?;
    Ok((
        g,
        TransformTrace {
            pass: "reduce-terminal-sums",
            nodes_added: 0,
            nodes_removed: counters.nodes_removed,
            edges_added: 0,
            edges_removed: counters.edges_removed,
            size_before: before.size,
            size_after: after.size,
        },
    ))
}

/// Replaces every sum node over a single variable by a distribution leaf
/// with the sub-circuit's coefficients, and every bare indicator by a point
/// mass. Requires a complete, decomposable, weight-normalized input; output
/// size never exceeds input size.
pub fn reduce_terminal_sums(spn: &SpnGraph) -> Result<SpnGraph> {
    reduce_terminal_sums_traced(spn).map(|(g, _)| g)
}

/// Full normalization pipeline: decompose, normalize weights, reduce scope-1
/// sums. The output passes `validate` with `normal = true` and encodes the
/// same distribution as the input.
pub fn to_normal(spn: &SpnGraph) -> Result<(SpnGraph, Vec<TransformTrace>)> {
    let (g1, t1) = decompose(spn)?;
    let before = g1.size_metrics()?;
    let g2 = normalize_weights(&g1)?;
    let t2 = TransformTrace::unchanged("normalize-weights", before.size);
    let (g3, t3) = reduce_terminal_sums_traced(&g2)?;
    Ok((g3, vec![t1, t2, t3]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spn::Assignment;
    use crate::testfix::two_var_demo;

    fn nested_shared_indicator() -> SpnGraph {
        // product(I_x1, product(I_x1, I_x2)): consistent, not decomposable.
        let mut g = SpnGraph::new("nested");
        let x1 = g.add_variable("X1", 2).unwrap();
        let x2 = g.add_variable("X2", 2).unwrap();
        let i1 = g.add_indicator(x1, 0).unwrap();
        let i2 = g.add_indicator(x2, 0).unwrap();
        let inner = g.add_product(&[i1, i2]).unwrap();
        let outer = g.add_product(&[i1, inner]).unwrap();
        g.set_root(outer).unwrap();
        g
    }

    /// Non-decomposable product whose shared child is also reused by a node
    /// outside the subtree, so the pass must create a duplicate.
    fn shared_child_with_outside_parent() -> SpnGraph {
        let mut g = SpnGraph::new("shared");
        let x1 = g.add_variable("X1", 2).unwrap();
        let x2 = g.add_variable("X2", 2).unwrap();
        let x3 = g.add_variable("X3", 2).unwrap();
        let i1 = g.add_indicator(x1, 0).unwrap();
        let i2a = g.add_indicator(x2, 0).unwrap();
        let i2b = g.add_indicator(x2, 1).unwrap();
        let i3 = g.add_indicator(x3, 0).unwrap();
        let m2 = g.add_sum(&[(i2a, 3.0), (i2b, 7.0)]).unwrap();
        let vm1 = g.add_product(&[i1, i3]).unwrap();
        let vm2 = g.add_product(&[m2, i3]).unwrap();
        let vm = g.add_product(&[vm1, vm2]).unwrap();
        let other = g.add_product(&[m2, i3]).unwrap();
        let vn = g.add_sum(&[(vm2, 2.0), (other, 5.0)]).unwrap();
        let top2 = g.add_product(&[i1, vn]).unwrap();
        let root = g.add_sum(&[(vm, 1.0), (top2, 4.0)]).unwrap();
        g.set_root(root).unwrap();
        g
    }

    #[test]
    fn decompose_leaves_decomposable_input_unchanged() {
        let g = two_var_demo();
        let (out, trace) = decompose(&g).unwrap();
        assert!(trace.is_noop());
        assert_eq!(out.size_metrics().unwrap(), g.size_metrics().unwrap());
    }

    #[test]
    fn decompose_collapses_idempotent_indicators() {
        let g = nested_shared_indicator();
        let before = g.expand_polynomial().unwrap();
        assert_eq!(before.values(), &[1.0, 0.0, 0.0, 0.0]);
        let (out, _) = decompose(&g).unwrap();
        let after = out.expand_polynomial().unwrap();
        assert_eq!(after.values(), &[1.0, 0.0, 0.0, 0.0]);
        let r = validate(&out).unwrap();
        assert!(r.decomposable, "{:?}", r.offending_nodes);
    }

    #[test]
    fn decompose_rejects_inconsistent_input() {
        let mut g = SpnGraph::new("bad");
        let x1 = g.add_variable("X1", 2).unwrap();
        let a = g.add_indicator(x1, 0).unwrap();
        let b = g.add_indicator(x1, 1).unwrap();
        let p = g.add_product(&[a, b]).unwrap();
        g.set_root(p).unwrap();
        let err = decompose(&g).unwrap_err();
        assert_eq!(err.code(), "inconsistent-product");
    }

    #[test]
    fn decompose_duplicates_shared_children_for_outside_parents() {
        let g = shared_child_with_outside_parent();
        let r = validate(&g).unwrap();
        assert!(r.complete && r.consistent && !r.decomposable);
        let before = g.expand_polynomial().unwrap();
        let before_size = g.size_metrics().unwrap().size;

        let (out, trace) = decompose(&g).unwrap();
        assert!(validate(&out).unwrap().decomposable);
        assert!(trace.nodes_added > 0, "expected a duplicate node");
        let after = out.expand_polynomial().unwrap();
        assert!(before.max_abs_diff(&after).unwrap() <= 1e-9);
        assert!(out.size_metrics().unwrap().size <= 4 * before_size * before_size);
    }

    #[test]
    fn decompose_preserves_mass_of_shared_weighted_subtrees() {
        // The whole scope of a weighted mixture is shared, so disconnecting
        // it would lose its scalar mass without compensation.
        let mut g = SpnGraph::new("mass");
        let x1 = g.add_variable("X1", 2).unwrap();
        let x2 = g.add_variable("X2", 2).unwrap();
        let i1 = g.add_indicator(x1, 0).unwrap();
        let i2a = g.add_indicator(x2, 0).unwrap();
        let i2b = g.add_indicator(x2, 1).unwrap();
        let heavy = g.add_sum(&[(i1, 2.0)]).unwrap();
        let pa = g.add_product(&[heavy, i2a]).unwrap();
        let pb = g.add_product(&[i1, i2b]).unwrap();
        let mix = g.add_sum(&[(pa, 1.0), (pb, 1.0)]).unwrap();
        let vm = g.add_product(&[mix, i1]).unwrap();
        g.set_root(vm).unwrap();

        let before = g.expand_polynomial().unwrap();
        assert_eq!(before.values(), &[2.0, 1.0, 0.0, 0.0]);
        let (out, _) = decompose(&g).unwrap();
        let after = out.expand_polynomial().unwrap();
        assert!(before.max_abs_diff(&after).unwrap() <= 1e-9);
        assert!(validate(&out).unwrap().decomposable);
    }

    #[test]
    fn normalize_demo_weights() {
        let g = two_var_demo();
        let out = normalize_weights(&g).unwrap();
        let root = out.root().unwrap();
        let w = &out.node(root).weights;
        assert!((w[0] - 4.0 / 7.0).abs() < 1e-12);
        assert!((w[1] - 6.0 / 35.0).abs() < 1e-12);
        assert!((w[2] - 9.0 / 35.0).abs() < 1e-12);

        // Leaf mixtures: (6,4) -> (0.6,0.4), (6,14) -> (0.3,0.7),
        // (2,8) -> (0.2,0.8), (9,1) -> (0.9,0.1).
        let mut leaf_weights: Vec<Vec<i64>> = Vec::new();
        for id in out.node_ids() {
            let n = out.node(id);
            if n.is_sum() && id != root {
                leaf_weights
                    .push(n.weights.iter().map(|w| (w * 10.0).round() as i64).collect());
            }
        }
        leaf_weights.sort();
        assert_eq!(
            leaf_weights,
            vec![vec![2, 8], vec![3, 7], vec![6, 4], vec![9, 1]]
        );

        // Structure untouched, distribution preserved.
        assert_eq!(
            out.size_metrics().unwrap(),
            g.size_metrics().unwrap()
        );
        let d0 = g.distribution().unwrap();
        let d1 = out.distribution().unwrap();
        assert!(d0.max_abs_diff(&d1).unwrap() <= 1e-9);
        let x1 = out.var_by_name("X1").unwrap();
        let x2 = out.var_by_name("X2").unwrap();
        let a = Assignment::new().with(x1, 0).with(x2, 0);
        assert!((d1.get(&a).unwrap() - 594.0 / 3500.0).abs() <= 1e-12);
    }

    #[test]
    fn normalize_is_idempotent() {
        let once = normalize_weights(&two_var_demo()).unwrap();
        let twice = normalize_weights(&once).unwrap();
        for id in once.node_ids() {
            assert_eq!(once.node(id).weights, twice.node(id).weights);
        }
    }

    #[test]
    fn normalize_single_child_sum_weight_becomes_one() {
        let mut g = SpnGraph::new("t");
        let x = g.add_variable("X1", 2).unwrap();
        let i = g.add_indicator(x, 0).unwrap();
        let s = g.add_sum(&[(i, 5.0)]).unwrap();
        g.set_root(s).unwrap();
        let out = normalize_weights(&g).unwrap();
        assert_eq!(out.node(s).weights, vec![1.0]);
    }

    #[test]
    fn normalize_zero_mass_sum_is_degenerate() {
        let mut g = SpnGraph::new("t");
        let x = g.add_variable("X1", 2).unwrap();
        let i = g.add_indicator(x, 0).unwrap();
        let s = g.add_sum(&[(i, 0.0)]).unwrap();
        g.set_root(s).unwrap();
        assert_eq!(normalize_weights(&g).unwrap_err().code(), "degenerate-sum");
    }

    #[test]
    fn reduce_replaces_leaf_mixtures_with_distributions() {
        let normalized = normalize_weights(&two_var_demo()).unwrap();
        let out = reduce_terminal_sums(&normalized).unwrap();
        let mut dists: Vec<Vec<i64>> = Vec::new();
        for id in out.node_ids() {
            match &out.node(id).kind {
                SpnNodeKind::TerminalDist { probs, .. } => {
                    dists.push(probs.iter().map(|p| (p * 10.0).round() as i64).collect())
                }
                SpnNodeKind::Indicator { .. } => panic!("indicator survived"),
                _ => {}
            }
        }
        dists.sort();
        assert_eq!(dists, vec![vec![2, 8], vec![3, 7], vec![6, 4], vec![9, 1]]);
        assert!(out.size_metrics().unwrap().size <= normalized.size_metrics().unwrap().size);
        let r = validate(&out).unwrap();
        assert!(r.normal, "{:?}", r.offending_nodes);
    }

    #[test]
    fn reduce_without_scope_one_sums_is_identity() {
        let mut g = SpnGraph::new("t");
        let x1 = g.add_variable("X1", 2).unwrap();
        let x2 = g.add_variable("X2", 2).unwrap();
        let a = g.add_terminal_dist(x1, vec![0.6, 0.4]).unwrap();
        let b = g.add_terminal_dist(x2, vec![0.3, 0.7]).unwrap();
        let p = g.add_product(&[a, b]).unwrap();
        g.set_root(p).unwrap();
        let out = reduce_terminal_sums(&g).unwrap();
        assert_eq!(out.size_metrics().unwrap(), g.size_metrics().unwrap());
    }

    #[test]
    fn reduce_collapses_nested_scope_one_sums() {
        let mut g = SpnGraph::new("t");
        let x = g.add_variable("X1", 2).unwrap();
        let i0 = g.add_indicator(x, 0).unwrap();
        let i1 = g.add_indicator(x, 1).unwrap();
        let inner = g.add_sum(&[(i0, 0.5), (i1, 0.5)]).unwrap();
        let outer = g.add_sum(&[(inner, 0.4), (i0, 0.6)]).unwrap();
        g.set_root(outer).unwrap();
        let out = reduce_terminal_sums(&g).unwrap();
        let root = out.root().unwrap();
        match &out.node(root).kind {
            SpnNodeKind::TerminalDist { probs, .. } => {
                assert!((probs[0] - 0.8).abs() < 1e-12);
                assert!((probs[1] - 0.2).abs() < 1e-12);
            }
            other => panic!("expected distribution leaf, got {other:?}"),
        }
        assert_eq!(out.num_nodes(), 1);
    }

    #[test]
    fn to_normal_demo_matches_reduced_shape_and_distribution() {
        let g = two_var_demo();
        let (out, traces) = to_normal(&g).unwrap();
        let r = validate(&out).unwrap();
        assert!(r.normal, "{:?}", r.offending_nodes);
        let d0 = g.distribution().unwrap();
        let d1 = out.distribution().unwrap();
        assert!(d0.max_abs_diff(&d1).unwrap() <= 1e-9);
        // Root sum over three products of distribution leaves.
        let m = out.size_metrics().unwrap();
        assert_eq!((m.nodes, m.edges), (8, 9));
        assert_eq!(traces.len(), 3);
        // Partition function of a normal SPN is 1.
        assert!((out.query(&Assignment::new()).unwrap() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn to_normal_is_idempotent() {
        let (once, _) = to_normal(&two_var_demo()).unwrap();
        let (twice, traces) = to_normal(&once).unwrap();
        assert!(traces.iter().all(|t| t.is_noop()));
        assert_eq!(once.size_metrics().unwrap(), twice.size_metrics().unwrap());
    }

    #[test]
    fn to_normal_point_mass() {
        let g = nested_shared_indicator();
        let (out, _) = to_normal(&g).unwrap();
        assert!(validate(&out).unwrap().normal);
        let d = out.distribution().unwrap();
        assert_eq!(d.values(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn to_normal_bare_indicator_root_becomes_point_mass() {
        let mut g = SpnGraph::new("t");
        let x = g.add_variable("X1", 2).unwrap();
        let i = g.add_indicator(x, 1).unwrap();
        g.set_root(i).unwrap();
        let (out, _) = to_normal(&g).unwrap();
        assert!(validate(&out).unwrap().normal);
        assert_eq!(out.distribution().unwrap().values(), &[0.0, 1.0]);
    }
}
