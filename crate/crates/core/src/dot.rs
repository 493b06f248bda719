//! Graphviz export for circuits, decision diagrams and compiled networks.
//! Output is deterministic: nodes ascending by id, edges in declaration
//! order.

use crate::add::{Add, AddNode};
use crate::bn::BayesNet;
use crate::spn::{SpnGraph, SpnNodeKind};

fn fmt_weight(w: f64) -> String {
    if w == w.trunc() && w.abs() < 1e15 {
        format!("{}", w as i64)
    } else {
        format!("{w}")
    }
}

fn fmt_probs(probs: &[f64]) -> String {
    let ps: Vec<String> = probs.iter().map(|p| fmt_weight(*p)).collect();
    format!("({})", ps.join(", "))
}

/// Sum nodes render as `+`, products as `×`, indicator and distribution
/// leaves with their variable; sum-edge weights become edge labels.
pub fn spn_to_dot(g: &SpnGraph) -> String {
    let mut out = String::new();
    out.push_str(&format!("digraph \"{}\" {{\n", g.name()));
    out.push_str("  node [fontname=\"Helvetica\"];\n");
    for id in g.node_ids() {
        let line = match &g.node(id).kind {
            SpnNodeKind::Sum => format!("  n{id} [label=\"+\" shape=circle];\n"),
            SpnNodeKind::Product => format!("  n{id} [label=\"\u{d7}\" shape=circle];\n"),
            SpnNodeKind::Indicator { var, value } => format!(
                "  n{id} [label=\"{}={}\" shape=box];\n",
                g.variable(*var).name,
                value
            ),
            SpnNodeKind::TerminalDist { var, probs } => format!(
                "  n{id} [label=\"{} {}\" shape=doublecircle];\n",
                g.variable(*var).name,
                fmt_probs(probs)
            ),
        };
        out.push_str(&line);
    }
    for id in g.node_ids() {
        let node = g.node(id);
        for (i, c) in node.children.iter().enumerate() {
            if node.is_sum() {
                out.push_str(&format!(
                    "  n{id} -> n{c} [label=\"{}\"];\n",
                    fmt_weight(node.weights[i])
                ));
            } else {
                out.push_str(&format!("  n{id} -> n{c};\n"));
            }
        }
    }
    out.push_str("}\n");
    out
}

/// Variable nodes carry their hidden-variable name with value-labeled
/// out-edges; operator nodes render as `+`/`×`.
pub fn add_to_dot(a: &Add, name: &str, g: &SpnGraph) -> String {
    let mut out = String::new();
    out.push_str(&format!("digraph \"{name}\" {{\n"));
    out.push_str("  node [fontname=\"Helvetica\"];\n");
    for id in a.node_ids() {
        let line = match a.node(id) {
            AddNode::Var { hidden, .. } => {
                format!("  n{id} [label=\"{hidden}\" shape=circle];\n")
            }
            AddNode::Real(v) => format!("  n{id} [label=\"{}\" shape=box];\n", fmt_weight(*v)),
            AddNode::DistLeaf { var, probs, .. } => format!(
                "  n{id} [label=\"{} {}\" shape=doublecircle];\n",
                g.variable(*var).name,
                fmt_probs(probs)
            ),
            AddNode::OpSum { .. } => format!("  n{id} [label=\"+\" shape=circle];\n"),
            AddNode::OpProduct { .. } => format!("  n{id} [label=\"\u{d7}\" shape=circle];\n"),
        };
        out.push_str(&line);
    }
    for id in a.node_ids() {
        match a.node(id) {
            AddNode::Var { children, .. } => {
                for (value, c) in children.iter().enumerate() {
                    out.push_str(&format!("  n{id} -> n{c} [label=\"{value}\"];\n"));
                }
            }
            AddNode::OpSum { children, weights } => {
                for (c, w) in children.iter().zip(weights) {
                    out.push_str(&format!("  n{id} -> n{c} [label=\"{}\"];\n", fmt_weight(*w)));
                }
            }
            other => {
                for c in other.children() {
                    out.push_str(&format!("  n{id} -> n{c};\n"));
                }
            }
        }
    }
    out.push_str("}\n");
    out
}

/// Bipartite layout hint: hidden variables on one rank, observables on the
/// other.
pub fn bn_to_dot(bn: &BayesNet) -> String {
    let mut out = String::new();
    out.push_str(&format!("digraph \"{}\" {{\n", bn.name()));
    out.push_str("  rankdir=TB;\n  node [fontname=\"Helvetica\"];\n");
    out.push_str("  { rank=source;");
    for (h, _) in bn.hidden_vars() {
        out.push_str(&format!(" h{};", h.0));
    }
    out.push_str(" }\n  { rank=sink;");
    for v in bn.observables() {
        out.push_str(&format!(" x{};", v.name));
    }
    out.push_str(" }\n");
    for (h, domain) in bn.hidden_vars() {
        out.push_str(&format!(
            "  h{} [label=\"{h} ({domain})\" shape=circle];\n",
            h.0
        ));
    }
    for v in bn.observables() {
        out.push_str(&format!(
            "  x{} [label=\"{} ({})\" shape=box];\n",
            v.name, v.name, v.domain_size
        ));
    }
    for (h, x) in bn.edges() {
        out.push_str(&format!(
            "  h{} -> x{};\n",
            h.0,
            bn.observables()[x.0 as usize].name
        ));
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bn::to_bn;
    use crate::normal::to_normal;
    use crate::testfix::two_var_demo;

    #[test]
    fn demo_dot_shows_root_weights() {
        let dot = spn_to_dot(&two_var_demo());
        for w in ["label=\"10\"", "label=\"6\"", "label=\"9\""] {
            assert!(dot.contains(w), "missing {w} in {dot}");
        }
        assert!(dot.contains("label=\"+\""));
        assert!(dot.contains("label=\"\u{d7}\""));
    }

    #[test]
    fn bn_dot_has_rank_hints() {
        let (normal, _) = to_normal(&two_var_demo()).unwrap();
        let bn = to_bn(&normal).unwrap();
        let dot = bn_to_dot(&bn);
        assert!(dot.contains("rank=source"));
        assert!(dot.contains("rank=sink"));
    }

    #[test]
    fn stump_dot_labels_value_edges() {
        let (normal, _) = to_normal(&two_var_demo()).unwrap();
        let bn = to_bn(&normal).unwrap();
        let (h, _) = bn.hidden_vars().next().unwrap();
        let dot = add_to_dot(bn.cpd_hidden(h).unwrap(), "stump", &normal);
        assert!(dot.contains("label=\"0\"") && dot.contains("label=\"2\""));
    }

    #[test]
    fn dot_output_is_deterministic() {
        let g = two_var_demo();
        assert_eq!(spn_to_dot(&g), spn_to_dot(&g));
    }
}
