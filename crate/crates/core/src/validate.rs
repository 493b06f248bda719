//! Structural validation: completeness, consistency, decomposability and
//! normality flags with per-node witnesses.

use std::fmt;

use crate::error::Result;
use crate::spn::{NodeId, SpnGraph, SpnNodeKind};

/// First violated property of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    /// Sum node whose children do not all share its scope.
    IncompleteSum,
    /// Product node under which some variable takes different values in
    /// different children.
    InconsistentProduct,
    /// Product node with overlapping child scopes.
    NondecomposableProduct,
    /// Sum node whose outgoing weights do not sum to 1.
    UnnormalizedSumWeights,
    /// Sum node over a single variable (reducible to a distribution leaf).
    ScopeOneSum,
    /// Bare indicator leaf; normal circuits carry distribution leaves only.
    BareIndicatorLeaf,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Violation::IncompleteSum => "incomplete-sum",
            Violation::InconsistentProduct => "inconsistent-product",
            Violation::NondecomposableProduct => "nondecomposable-product",
            Violation::UnnormalizedSumWeights => "unnormalized-sum-weights",
            Violation::ScopeOneSum => "scope-one-sum",
            Violation::BareIndicatorLeaf => "bare-indicator-leaf",
        };
        f.write_str(s)
    }
}

/// Verdict of [`validate`]. `decomposable` implies `consistent`; `normal`
/// implies `complete && decomposable`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub complete: bool,
    pub consistent: bool,
    pub decomposable: bool,
    pub normal: bool,
    /// First violated property per offending node, ascending by node id.
    pub offending_nodes: Vec<(NodeId, Violation)>,
}

impl ValidationReport {
    /// Complete and consistent circuits encode an unnormalized distribution.
    pub fn is_valid(&self) -> bool {
        self.complete && self.consistent
    }

    pub fn witness(&self, v: Violation) -> Option<NodeId> {
        self.offending_nodes
            .iter()
            .find(|(_, w)| *w == v)
            .map(|(id, _)| *id)
    }
}

/// Checks every reachable node against the structural definitions and
/// reports per-property flags. Weight sums are checked within `tolerance`.
pub fn validate_with_tolerance(spn: &SpnGraph, tolerance: f64) -> Result<ValidationReport> {
    let scopes = spn.scopes()?;
    let value_sets = spn.value_sets()?;
    let order = spn.bottom_up_order()?;

    let mut report = ValidationReport {
        complete: true,
        consistent: true,
        decomposable: true,
        normal: true,
        offending_nodes: Vec::new(),
    };

    let mut ids = order;
    ids.sort();
    for id in ids {
        let node = spn.node(id);
        let mut first: Option<Violation> = None;
        let note = |v: Violation, slot: &mut Option<Violation>| {
            if slot.is_none() {
                *slot = Some(v);
            }
        };
        match &node.kind {
            SpnNodeKind::Sum => {
                let scope = scopes[&id];
                if node.children.iter().any(|c| scopes[c] != scope) {
                    report.complete = false;
                    note(Violation::IncompleteSum, &mut first);
                }
                let total: f64 = node.weights.iter().sum();
                if (total - 1.0).abs() > tolerance {
                    report.normal = false;
                    note(Violation::UnnormalizedSumWeights, &mut first);
                }
                if scope.len() == 1 {
                    report.normal = false;
                    note(Violation::ScopeOneSum, &mut first);
                }
            }
            SpnNodeKind::Product => {
                // Pairwise checks over the children's scopes and value sets.
                let mut decomposable_here = true;
                let mut consistent_here = true;
                for (i, a) in node.children.iter().enumerate() {
                    for b in node.children.iter().skip(i + 1) {
                        let shared = scopes[a].intersection(scopes[b]);
                        if shared.is_empty() {
                            continue;
                        }
                        decomposable_here = false;
                        for var in shared.iter() {
                            let va = value_sets[a].get(&var).copied().unwrap_or(0);
                            let vb = value_sets[b].get(&var).copied().unwrap_or(0);
                            // Consistent iff both sides pin the variable to
                            // one shared value.
                            let joint = va | vb;
                            if joint.count_ones() > 1 {
                                consistent_here = false;
                            }
                        }
                    }
                }
                if !consistent_here {
                    report.consistent = false;
                    note(Violation::InconsistentProduct, &mut first);
                }
                if !decomposable_here {
                    report.decomposable = false;
                    note(Violation::NondecomposableProduct, &mut first);
                }
            }
            SpnNodeKind::Indicator { .. } => {
                report.normal = false;
                note(Violation::BareIndicatorLeaf, &mut first);
            }
            SpnNodeKind::TerminalDist { .. } => {}
        }
        if let Some(v) = first {
            report.offending_nodes.push((id, v));
        }
    }

    report.normal = report.normal && report.complete && report.decomposable;
    Ok(report)
}

/// [`validate_with_tolerance`] at the default tolerance.
pub fn validate(spn: &SpnGraph) -> Result<ValidationReport> {
    validate_with_tolerance(spn, crate::DEFAULT_TOLERANCE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spn::SpnGraph;
    use crate::testfix::two_var_demo;

    #[test]
    fn demo_is_valid_but_not_normal() {
        let r = validate(&two_var_demo()).unwrap();
        assert!(r.complete && r.consistent && r.decomposable);
        assert!(!r.normal);
        assert!(r.witness(Violation::UnnormalizedSumWeights).is_some());
    }

    #[test]
    fn shared_variable_same_value_is_consistent_not_decomposable() {
        let mut g = SpnGraph::new("t");
        let x1 = g.add_variable("X1", 2).unwrap();
        let x2 = g.add_variable("X2", 2).unwrap();
        let i1 = g.add_indicator(x1, 0).unwrap();
        let i2 = g.add_indicator(x2, 0).unwrap();
        let inner = g.add_product(&[i1, i2]).unwrap();
        let outer = g.add_product(&[i1, inner]).unwrap();
        g.set_root(outer).unwrap();
        let r = validate(&g).unwrap();
        assert!(r.consistent);
        assert!(!r.decomposable);
        assert_eq!(r.witness(Violation::NondecomposableProduct), Some(outer));
    }

    #[test]
    fn opposite_values_are_inconsistent() {
        let mut g = SpnGraph::new("t");
        let x1 = g.add_variable("X1", 2).unwrap();
        let a = g.add_indicator(x1, 0).unwrap();
        let b = g.add_indicator(x1, 1).unwrap();
        let p = g.add_product(&[a, b]).unwrap();
        g.set_root(p).unwrap();
        let r = validate(&g).unwrap();
        assert!(!r.consistent);
        assert!(!r.decomposable);
        assert_eq!(r.witness(Violation::InconsistentProduct), Some(p));
    }

    #[test]
    fn mixture_in_one_child_fixed_value_in_other_is_inconsistent() {
        let mut g = SpnGraph::new("t");
        let x1 = g.add_variable("X1", 2).unwrap();
        let a = g.add_indicator(x1, 0).unwrap();
        let b = g.add_indicator(x1, 1).unwrap();
        let mix = g.add_sum(&[(a, 0.5), (b, 0.5)]).unwrap();
        let p = g.add_product(&[mix, a]).unwrap();
        g.set_root(p).unwrap();
        let r = validate(&g).unwrap();
        assert!(!r.consistent);
    }

    #[test]
    fn incomplete_sum_is_flagged() {
        let mut g = SpnGraph::new("t");
        let x1 = g.add_variable("X1", 2).unwrap();
        let x2 = g.add_variable("X2", 2).unwrap();
        let i1 = g.add_indicator(x1, 0).unwrap();
        let i2 = g.add_indicator(x2, 0).unwrap();
        let s = g.add_sum(&[(i1, 0.5), (i2, 0.5)]).unwrap();
        g.set_root(s).unwrap();
        let r = validate(&g).unwrap();
        assert!(!r.complete);
        assert_eq!(r.witness(Violation::IncompleteSum), Some(s));
    }

    #[test]
    fn decomposable_implies_consistent() {
        for g in [two_var_demo()] {
            let r = validate(&g).unwrap();
            assert!(!r.decomposable || r.consistent);
        }
    }

    #[test]
    fn normal_fixture_passes_all_flags() {
        let mut g = SpnGraph::new("t");
        let x1 = g.add_variable("X1", 2).unwrap();
        let x2 = g.add_variable("X2", 2).unwrap();
        let a = g.add_terminal_dist(x1, vec![0.6, 0.4]).unwrap();
        let b = g.add_terminal_dist(x2, vec![0.3, 0.7]).unwrap();
        let p = g.add_product(&[a, b]).unwrap();
        let q = g.add_product(&[a, b]).unwrap();
        let s = g.add_sum(&[(p, 0.25), (q, 0.75)]).unwrap();
        g.set_root(s).unwrap();
        let r = validate(&g).unwrap();
        assert!(r.normal, "{:?}", r.offending_nodes);
    }
}
