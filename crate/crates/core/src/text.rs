//! Line-oriented text formats for circuits, decision diagrams and compiled
//! networks.
//!
//! One record per line, `#` starts a comment. Circuit documents:
//!
//! ```text
//! spn <name>
//! var <name> <domain_size>
//! node <id> sum | node <id> prod
//! node <id> ind <var> <value_index>
//! node <id> dist <var> <p0> <p1> ...
//! edge <parent_id> <child_id> [weight]   # weight required on sum edges
//! root <id>
//! ```
//!
//! Network bundles start with `bn <name>` and carry `hidden H_<id> <domain>`,
//! `obs <var>`, `edge H_<id> <var>`, one `order H_...` line, and one
//! `add H_<id>`/`add <var>` section per variable using the same node/edge
//! records plus the `var H_<id>`, `real <v>`, `opsum` and `opprod` node
//! kinds.
//!
//! For Boolean variables value index 0 is the positive literal and 1 the
//! negated one; evidence accepts `X1=0`, `X1=x1` and `X1=!x1`. Serializers
//! emit a canonical form: nodes ascending by id, edges grouped by parent in
//! child-declaration order, reals with 17 significant digits so parsing a
//! serialized document reproduces the values exactly.

use std::collections::{BTreeMap, BTreeSet};

use crate::add::{Add, AddBuilder, AddId, AddNode, HiddenId};
use crate::bn::BayesNet;
use crate::error::{Error, Result};
use crate::spn::{Assignment, NodeId, SpnGraph, SpnNode, SpnNodeKind, VarId, Variable};

fn real(v: f64) -> String {
    format!("{:.16e}", v)
}

struct Record<'a> {
    line: usize,
    tokens: Vec<&'a str>,
}

fn records(text: &str) -> Vec<Record<'_>> {
    text.lines()
        .enumerate()
        .filter_map(|(i, raw)| {
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                None
            } else {
                Some(Record {
                    line: i + 1,
                    tokens: body.split_whitespace().collect(),
                })
            }
        })
        .collect()
}

fn parse_usize(r: &Record, token: &str, what: &str) -> Result<usize> {
    token
        .parse::<usize>()
        .map_err(|_| Error::parse(r.line, "bad-number", format!("invalid {what} `{token}`")))
}

fn parse_f64(r: &Record, token: &str, what: &str) -> Result<f64> {
    let v = token
        .parse::<f64>()
        .map_err(|_| Error::parse(r.line, "bad-number", format!("invalid {what} `{token}`")))?;
    if !v.is_finite() {
        return Err(Error::parse(
            r.line,
            "bad-number",
            format!("non-finite {what} `{token}`"),
        ));
    }
    Ok(v)
}

fn parse_node_id(r: &Record, token: &str) -> Result<NodeId> {
    token
        .parse::<u32>()
        .map(NodeId)
        .map_err(|_| Error::parse(r.line, "bad-number", format!("invalid node id `{token}`")))
}

fn parse_hidden_id(r: &Record, token: &str) -> Result<HiddenId> {
    token
        .strip_prefix("H_")
        .and_then(|rest| rest.parse::<u32>().ok())
        .map(|n| HiddenId(NodeId(n)))
        .ok_or_else(|| {
            Error::parse(
                r.line,
                "bad-record",
                format!("invalid hidden variable `{token}`, expected H_<id>"),
            )
        })
}

// ---------------------------------------------------------------------
// Circuit documents
// ---------------------------------------------------------------------

/// Parses a circuit document. Diagnostics carry the 1-based source line and
/// a distinct code per failure mode.
pub fn parse_spn(text: &str) -> Result<SpnGraph> {
    let recs = records(text);
    let Some(first) = recs.first() else {
        return Err(Error::parse(1, "missing-header", "empty document"));
    };
    if first.tokens[0] != "spn" || first.tokens.len() != 2 {
        return Err(Error::parse(
            first.line,
            "missing-header",
            "expected `spn <name>` as the first record",
        ));
    }
    let mut g = SpnGraph::new(first.tokens[1]);

    struct EdgeRec {
        line: usize,
        parent: NodeId,
        child: NodeId,
        weight: Option<f64>,
    }
    let mut node_lines: BTreeMap<NodeId, usize> = BTreeMap::new();
    let mut edges: Vec<EdgeRec> = Vec::new();
    let mut root: Option<(NodeId, usize)> = None;

    // Variables resolve in declaration order; nodes and edges may forward
    // reference, so they assemble after the full read.
    let mut pending_nodes: Vec<(usize, NodeId, Vec<&str>)> = Vec::new();
    for r in recs.iter().skip(1) {
        match r.tokens[0] {
            "var" => {
                if r.tokens.len() != 3 {
                    return Err(Error::parse(r.line, "bad-record", "expected `var <name> <domain>`"));
                }
                let name = r.tokens[1];
                let domain = parse_usize(r, r.tokens[2], "domain size")?;
                if g.var_by_name(name).is_some() {
                    return Err(Error::parse(
                        r.line,
                        "duplicate-variable",
                        format!("variable {name} already declared"),
                    ));
                }
                if !(2..=crate::spn::MAX_DOMAIN).contains(&domain) {
                    return Err(Error::parse(
                        r.line,
                        "domain-out-of-range",
                        format!("domain size {domain} is outside 2..={}", crate::spn::MAX_DOMAIN),
                    ));
                }
                g.add_variable(name, domain).map_err(|e| {
                    Error::parse(r.line, "too-many-variables", e.to_string())
                })?;
            }
            "node" => {
                if r.tokens.len() < 3 {
                    return Err(Error::parse(r.line, "bad-record", "expected `node <id> <kind> ...`"));
                }
                let id = parse_node_id(r, r.tokens[1])?;
                if node_lines.contains_key(&id) {
                    return Err(Error::parse(
                        r.line,
                        "duplicate-id",
                        format!("node {id} already declared"),
                    ));
                }
                node_lines.insert(id, r.line);
                pending_nodes.push((r.line, id, r.tokens[2..].to_vec()));
            }
            "edge" => {
                if !(3..=4).contains(&r.tokens.len()) {
                    return Err(Error::parse(
                        r.line,
                        "bad-record",
                        "expected `edge <parent> <child> [weight]`",
                    ));
                }
                let parent = parse_node_id(r, r.tokens[1])?;
                let child = parse_node_id(r, r.tokens[2])?;
                let weight = match r.tokens.get(3) {
                    Some(t) => Some(parse_f64(r, t, "weight")?),
                    None => None,
                };
                edges.push(EdgeRec {
                    line: r.line,
                    parent,
                    child,
                    weight,
                });
            }
            "root" => {
                if r.tokens.len() != 2 {
                    return Err(Error::parse(r.line, "bad-record", "expected `root <id>`"));
                }
                if root.is_some() {
                    return Err(Error::parse(r.line, "duplicate-root", "root already declared"));
                }
                root = Some((parse_node_id(r, r.tokens[1])?, r.line));
            }
            other => {
                return Err(Error::parse(
                    r.line,
                    "bad-record",
                    format!("unknown record `{other}`"),
                ))
            }
        }
    }

    // Materialize nodes now that all variables are known.
    for (line, id, kind_tokens) in pending_nodes {
        let kind = match kind_tokens[0] {
            "sum" => SpnNodeKind::Sum,
            "prod" => SpnNodeKind::Product,
            "ind" => {
                if kind_tokens.len() != 3 {
                    return Err(Error::parse(line, "bad-record", "expected `node <id> ind <var> <value>`"));
                }
                let var = g.var_by_name(kind_tokens[1]).ok_or_else(|| {
                    Error::parse(line, "unknown-variable", format!("unknown variable {}", kind_tokens[1]))
                })?;
                let value = kind_tokens[2].parse::<usize>().map_err(|_| {
                    Error::parse(line, "bad-number", format!("invalid value index `{}`", kind_tokens[2]))
                })?;
                if value >= g.variable(var).domain_size {
                    return Err(Error::parse(
                        line,
                        "value-out-of-range",
                        format!("value {value} out of range for {}", kind_tokens[1]),
                    ));
                }
                SpnNodeKind::Indicator { var, value }
            }
            "dist" => {
                if kind_tokens.len() < 3 {
                    return Err(Error::parse(line, "bad-record", "expected `node <id> dist <var> <p...>`"));
                }
                let var = g.var_by_name(kind_tokens[1]).ok_or_else(|| {
                    Error::parse(line, "unknown-variable", format!("unknown variable {}", kind_tokens[1]))
                })?;
                let probs: Result<Vec<f64>> = kind_tokens[2..]
                    .iter()
                    .map(|t| {
                        t.parse::<f64>().map_err(|_| {
                            Error::parse(line, "bad-number", format!("invalid probability `{t}`"))
                        })
                    })
                    .collect();
                let probs = probs?;
                if probs.len() != g.variable(var).domain_size
                    || probs.iter().any(|p| !p.is_finite() || *p < 0.0)
                    || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9
                {
                    return Err(Error::parse(
                        line,
                        "bad-distribution",
                        format!("probabilities for {} must be nonnegative, match the domain and sum to 1", kind_tokens[1]),
                    ));
                }
                SpnNodeKind::TerminalDist { var, probs }
            }
            other => {
                return Err(Error::parse(
                    line,
                    "bad-record",
                    format!("unknown node kind `{other}`"),
                ))
            }
        };
        g.insert_with_id(
            id,
            SpnNode {
                kind,
                children: Vec::new(),
                weights: Vec::new(),
            },
        )
        .map_err(|_| Error::parse(line, "duplicate-id", format!("node {id} already declared")))?;
    }

    // Attach edges in declaration order.
    let mut seen_edges: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
    for e in edges {
        if !g.contains(e.parent) {
            return Err(Error::parse(e.line, "unknown-node", format!("unknown node {}", e.parent)));
        }
        if !g.contains(e.child) {
            return Err(Error::parse(e.line, "unknown-node", format!("unknown node {}", e.child)));
        }
        if !seen_edges.insert((e.parent, e.child)) {
            return Err(Error::parse(
                e.line,
                "parallel-edge",
                format!("duplicate edge {} -> {}", e.parent, e.child),
            ));
        }
        match (&g.node(e.parent).kind, e.weight) {
            (SpnNodeKind::Sum, Some(w)) => {
                if w < 0.0 {
                    return Err(Error::parse(e.line, "negative-weight", format!("negative weight {w}")));
                }
                g.add_sum_child(e.parent, e.child, w);
            }
            (SpnNodeKind::Sum, None) => {
                return Err(Error::parse(
                    e.line,
                    "missing-weight",
                    format!("sum edge {} -> {} needs a weight", e.parent, e.child),
                ))
            }
            (SpnNodeKind::Product, None) => g.add_child(e.parent, e.child),
            (SpnNodeKind::Product, Some(_)) => {
                return Err(Error::parse(
                    e.line,
                    "weight-on-nonsum-edge",
                    format!("product edge {} -> {} cannot carry a weight", e.parent, e.child),
                ))
            }
            (_, _) => {
                return Err(Error::parse(
                    e.line,
                    "leaf-parent",
                    format!("leaf node {} cannot have children", e.parent),
                ))
            }
        }
    }

    let Some((root_id, root_line)) = root else {
        return Err(Error::parse(
            recs.last().map(|r| r.line).unwrap_or(1),
            "missing-root",
            "no root record",
        ));
    };
    if !g.contains(root_id) {
        return Err(Error::parse(root_line, "unknown-node", format!("unknown root {root_id}")));
    }
    g.set_root(root_id).expect("root checked");

    // Structural checks: arity, acyclicity, reachability, variable use.
    for id in g.node_ids().collect::<Vec<_>>() {
        let node = g.node(id);
        if (node.is_sum() || node.is_product()) && node.children.is_empty() {
            return Err(Error::parse(
                node_lines[&id],
                "childless-node",
                format!("node {id} has no children"),
            ));
        }
    }
    let all: BTreeSet<NodeId> = g.node_ids().collect();
    if let Err(Error::Cycle(witness)) = g.bottom_up_order_of(&all) {
        // Report a back edge on the cycle: the latest-declared edge whose
        // endpoints both sit on it.
        let cycle_line = seen_edges
            .iter()
            .filter(|(p, c)| g.descendants(*c).contains(p))
            .map(|(p, c)| {
                edges_line(text, *p, *c).unwrap_or(node_lines[&witness])
            })
            .max()
            .unwrap_or(node_lines[&witness]);
        return Err(Error::parse(
            cycle_line,
            "cycle",
            format!("cycle through node {witness}"),
        ));
    }
    let reachable = g.reachable()?;
    if let Some(extra) = all.difference(&reachable).next() {
        return Err(Error::parse(
            node_lines[extra],
            "unreachable-node",
            format!("node {extra} is not reachable from the root"),
        ));
    }
    let mut used = BTreeSet::new();
    for id in g.node_ids() {
        match g.node(id).kind {
            SpnNodeKind::Indicator { var, .. } | SpnNodeKind::TerminalDist { var, .. } => {
                used.insert(var);
            }
            _ => {}
        }
    }
    for var in g.var_ids() {
        if !used.contains(&var) {
            return Err(Error::parse(
                first.line,
                "unused-variable",
                format!("variable {} is declared but never used", g.variable(var).name),
            ));
        }
    }
    Ok(g)
}

fn edges_line(text: &str, parent: NodeId, child: NodeId) -> Option<usize> {
    for r in records(text) {
        if r.tokens[0] == "edge"
            && r.tokens.get(1) == Some(&parent.to_string().as_str())
            && r.tokens.get(2) == Some(&child.to_string().as_str())
        {
            return Some(r.line);
        }
    }
    None
}

/// Canonical text form; `parse_spn(serialize_spn(g))` reproduces `g` and
/// serializing a parsed canonical document is byte-identical.
pub fn serialize_spn(g: &SpnGraph) -> String {
    let mut out = String::new();
    out.push_str(&format!("spn {}\n", g.name()));
    for v in g.variables() {
        out.push_str(&format!("var {} {}\n", v.name, v.domain_size));
    }
    for id in g.node_ids() {
        let node = g.node(id);
        match &node.kind {
            SpnNodeKind::Sum => out.push_str(&format!("node {id} sum\n")),
            SpnNodeKind::Product => out.push_str(&format!("node {id} prod\n")),
            SpnNodeKind::Indicator { var, value } => {
                out.push_str(&format!("node {id} ind {} {value}\n", g.variable(*var).name))
            }
            SpnNodeKind::TerminalDist { var, probs } => {
                let ps: Vec<String> = probs.iter().map(|p| real(*p)).collect();
                out.push_str(&format!(
                    "node {id} dist {} {}\n",
                    g.variable(*var).name,
                    ps.join(" ")
                ));
            }
        }
    }
    for id in g.node_ids() {
        let node = g.node(id);
        for (i, c) in node.children.iter().enumerate() {
            if node.is_sum() {
                out.push_str(&format!("edge {id} {c} {}\n", real(node.weights[i])));
            } else {
                out.push_str(&format!("edge {id} {c}\n"));
            }
        }
    }
    if let Ok(root) = g.root() {
        out.push_str(&format!("root {root}\n"));
    }
    out
}

// ---------------------------------------------------------------------
// Decision-diagram sections and network bundles
// ---------------------------------------------------------------------

/// Serializes one decision diagram as an `add` section labeled `owner`.
pub fn serialize_add(add: &Add, owner: &str, vars: &[Variable]) -> String {
    let mut out = String::new();
    out.push_str(&format!("add {owner}\n"));
    for id in add.node_ids() {
        match add.node(id) {
            AddNode::Var { hidden, .. } => out.push_str(&format!("node {id} var {hidden}\n")),
            AddNode::Real(v) => out.push_str(&format!("node {id} real {}\n", real(*v))),
            AddNode::DistLeaf { var, probs, .. } => {
                let ps: Vec<String> = probs.iter().map(|p| real(*p)).collect();
                out.push_str(&format!(
                    "node {id} dist {} {}\n",
                    vars[var.0 as usize].name,
                    ps.join(" ")
                ));
            }
            AddNode::OpSum { .. } => out.push_str(&format!("node {id} opsum\n")),
            AddNode::OpProduct { .. } => out.push_str(&format!("node {id} opprod\n")),
        }
    }
    for id in add.node_ids() {
        match add.node(id) {
            AddNode::OpSum { children, weights } => {
                for (c, w) in children.iter().zip(weights) {
                    out.push_str(&format!("edge {id} {c} {}\n", real(*w)));
                }
            }
            other => {
                for c in other.children() {
                    out.push_str(&format!("edge {id} {c}\n"));
                }
            }
        }
    }
    out.push_str(&format!("root {}\n", add.root()));
    out
}

/// Canonical bundle: network graph, elimination order, then one `add`
/// section per hidden (ascending) and observable (declaration order).
pub fn serialize_bn(bn: &BayesNet) -> String {
    let mut out = String::new();
    out.push_str(&format!("bn {}\n", bn.name()));
    for (h, domain) in bn.hidden_vars() {
        out.push_str(&format!("hidden {h} {domain}\n"));
    }
    for v in bn.observables() {
        out.push_str(&format!("obs {}\n", v.name));
    }
    for (h, x) in bn.edges() {
        out.push_str(&format!("edge {h} {}\n", bn.observables()[x.0 as usize].name));
    }
    let order: Vec<String> = bn.hidden_order().iter().map(|h| h.to_string()).collect();
    out.push_str(&format!("order {}\n", order.join(" ")).replace("order \n", "order\n"));
    for (h, _) in bn.hidden_vars() {
        if let Some(add) = bn.cpd_hidden(h) {
            out.push_str(&serialize_add(add, &h.to_string(), bn.observables()));
        }
    }
    for x in bn.observable_ids() {
        if let Some(add) = bn.cpd_observable(x) {
            out.push_str(&serialize_add(
                add,
                &bn.observables()[x.0 as usize].name,
                bn.observables(),
            ));
        }
    }
    out
}

/// Parses a network bundle produced by [`serialize_bn`] (or written by
/// hand in the same format).
pub fn parse_bn(text: &str) -> Result<BayesNet> {
    let recs = records(text);
    let Some(first) = recs.first() else {
        return Err(Error::parse(1, "missing-header", "empty document"));
    };
    if first.tokens[0] != "bn" || first.tokens.len() != 2 {
        return Err(Error::parse(
            first.line,
            "missing-header",
            "expected `bn <name>` as the first record",
        ));
    }
    let name = first.tokens[1].to_string();

    let mut hidden: BTreeMap<HiddenId, usize> = BTreeMap::new();
    let mut obs_names: Vec<String> = Vec::new();
    let mut edges_raw: Vec<(usize, HiddenId, String)> = Vec::new();
    let mut order: Option<(usize, Vec<HiddenId>)> = None;

    // An `add` header starts a section; everything until the next header
    // belongs to it.
    struct RawAdd<'a> {
        line: usize,
        owner: &'a str,
        body: Vec<Record<'a>>,
    }
    let mut adds: Vec<RawAdd> = Vec::new();
    let mut in_add = false;

    for r in recs.iter().skip(1) {
        if r.tokens[0] == "add" {
            if r.tokens.len() != 2 {
                return Err(Error::parse(r.line, "bad-record", "expected `add <owner>`"));
            }
            adds.push(RawAdd {
                line: r.line,
                owner: r.tokens[1],
                body: Vec::new(),
            });
            in_add = true;
            continue;
        }
        if in_add && matches!(r.tokens[0], "node" | "edge" | "root") {
            adds.last_mut().expect("open section").body.push(Record {
                line: r.line,
                tokens: r.tokens.clone(),
            });
            continue;
        }
        match r.tokens[0] {
            "hidden" => {
                if r.tokens.len() != 3 {
                    return Err(Error::parse(r.line, "bad-record", "expected `hidden H_<id> <domain>`"));
                }
                let h = parse_hidden_id(r, r.tokens[1])?;
                let domain = parse_usize(r, r.tokens[2], "domain size")?;
                if hidden.insert(h, domain).is_some() {
                    return Err(Error::parse(r.line, "duplicate-id", format!("hidden {h} already declared")));
                }
            }
            "obs" => {
                if r.tokens.len() != 2 {
                    return Err(Error::parse(r.line, "bad-record", "expected `obs <var>`"));
                }
                if obs_names.iter().any(|n| n == r.tokens[1]) {
                    return Err(Error::parse(
                        r.line,
                        "duplicate-variable",
                        format!("observable {} already declared", r.tokens[1]),
                    ));
                }
                obs_names.push(r.tokens[1].to_string());
            }
            "edge" => {
                if r.tokens.len() != 3 {
                    return Err(Error::parse(r.line, "bad-record", "expected `edge H_<id> <var>`"));
                }
                let h = parse_hidden_id(r, r.tokens[1])?;
                edges_raw.push((r.line, h, r.tokens[2].to_string()));
            }
            "order" => {
                if order.is_some() {
                    return Err(Error::parse(r.line, "duplicate-root", "order already declared"));
                }
                let ids: Result<Vec<HiddenId>> =
                    r.tokens[1..].iter().map(|t| parse_hidden_id(r, t)).collect();
                order = Some((r.line, ids?));
            }
            other => {
                return Err(Error::parse(
                    r.line,
                    "bad-record",
                    format!("unknown record `{other}`"),
                ))
            }
        }
    }

    let var_id = |name: &str, line: usize| -> Result<VarId> {
        obs_names
            .iter()
            .position(|n| n == name)
            .map(|i| VarId(i as u32))
            .ok_or_else(|| Error::parse(line, "unknown-variable", format!("unknown observable {name}")))
    };

    let mut edges: BTreeSet<(HiddenId, VarId)> = BTreeSet::new();
    for (line, h, xname) in edges_raw {
        if !hidden.contains_key(&h) {
            return Err(Error::parse(line, "unknown-hidden", format!("unknown hidden {h}")));
        }
        edges.insert((h, var_id(&xname, line)?));
    }

    let (order_line, hidden_order) = match order {
        Some(o) => o,
        None => {
            if hidden.is_empty() {
                (first.line, Vec::new())
            } else {
                return Err(Error::parse(first.line, "missing-order", "no order record"));
            }
        }
    };
    {
        let in_order: BTreeSet<HiddenId> = hidden_order.iter().copied().collect();
        let declared: BTreeSet<HiddenId> = hidden.keys().copied().collect();
        if in_order.len() != hidden_order.len() || in_order != declared {
            return Err(Error::parse(
                order_line,
                "bad-order",
                "order must mention each hidden variable exactly once",
            ));
        }
    }

    // Assemble the decision diagrams.
    let mut cpd_hidden: BTreeMap<HiddenId, Add> = BTreeMap::new();
    let mut cpd_observable: BTreeMap<VarId, Add> = BTreeMap::new();
    let mut domains: BTreeMap<VarId, (usize, usize)> = BTreeMap::new(); // var -> (domain, line)
    for section in &adds {
        let add = parse_add_section(section.body.as_slice(), &hidden_order, &hidden, &|n, l| {
            var_id(n, l)
        }, &mut domains)?;
        if let Ok(h) = parse_hidden_id(
            &Record {
                line: section.line,
                tokens: vec!["add", section.owner],
            },
            section.owner,
        ) {
            if !hidden.contains_key(&h) {
                return Err(Error::parse(section.line, "unknown-hidden", format!("unknown hidden {h}")));
            }
            if cpd_hidden.insert(h, add).is_some() {
                return Err(Error::parse(section.line, "duplicate-cpd", format!("second cpd for {h}")));
            }
        } else {
            let x = var_id(section.owner, section.line)?;
            if cpd_observable.insert(x, add).is_some() {
                return Err(Error::parse(
                    section.line,
                    "duplicate-cpd",
                    format!("second cpd for {}", section.owner),
                ));
            }
        }
    }
    for h in hidden.keys() {
        if !cpd_hidden.contains_key(h) {
            return Err(Error::parse(first.line, "missing-cpd", format!("no cpd for {h}")));
        }
    }
    for (i, n) in obs_names.iter().enumerate() {
        if !cpd_observable.contains_key(&VarId(i as u32)) {
            return Err(Error::parse(first.line, "missing-cpd", format!("no cpd for {n}")));
        }
    }

    // Observable domains come from the distribution leaves.
    let mut observables = Vec::with_capacity(obs_names.len());
    for (i, n) in obs_names.iter().enumerate() {
        let Some((domain, _)) = domains.get(&VarId(i as u32)) else {
            return Err(Error::parse(
                first.line,
                "missing-domain",
                format!("no distribution leaf fixes the domain of {n}"),
            ));
        };
        observables.push(Variable {
            name: n.clone(),
            domain_size: *domain,
        });
    }

    Ok(BayesNet::from_parts(
        name,
        hidden,
        hidden_order,
        observables,
        edges,
        cpd_hidden,
        cpd_observable,
    ))
}

fn parse_add_section(
    body: &[Record<'_>],
    order: &[HiddenId],
    hidden: &BTreeMap<HiddenId, usize>,
    var_id: &dyn Fn(&str, usize) -> Result<VarId>,
    domains: &mut BTreeMap<VarId, (usize, usize)>,
) -> Result<Add> {
    enum Pending {
        Var(HiddenId),
        Real(f64),
        Dist(VarId, Vec<f64>),
        OpSum,
        OpProduct,
    }
    let mut nodes: BTreeMap<AddId, (usize, Pending)> = BTreeMap::new();
    let mut edges: Vec<(usize, AddId, AddId, Option<f64>)> = Vec::new();
    let mut root: Option<(usize, AddId)> = None;

    for r in body {
        match r.tokens[0] {
            "node" => {
                if r.tokens.len() < 3 {
                    return Err(Error::parse(r.line, "bad-record", "expected `node <id> <kind> ...`"));
                }
                let id = AddId(r.tokens[1].parse::<u32>().map_err(|_| {
                    Error::parse(r.line, "bad-number", format!("invalid node id `{}`", r.tokens[1]))
                })?);
                let pending = match r.tokens[2] {
                    "var" => {
                        if r.tokens.len() != 4 {
                            return Err(Error::parse(r.line, "bad-record", "expected `node <id> var H_<id>`"));
                        }
                        let h = parse_hidden_id(r, r.tokens[3])?;
                        if !hidden.contains_key(&h) {
                            return Err(Error::parse(r.line, "unknown-hidden", format!("unknown hidden {h}")));
                        }
                        Pending::Var(h)
                    }
                    "real" => {
                        if r.tokens.len() != 4 {
                            return Err(Error::parse(r.line, "bad-record", "expected `node <id> real <v>`"));
                        }
                        Pending::Real(parse_f64(r, r.tokens[3], "terminal value")?)
                    }
                    "dist" => {
                        if r.tokens.len() < 4 {
                            return Err(Error::parse(r.line, "bad-record", "expected `node <id> dist <var> <p...>`"));
                        }
                        let var = var_id(r.tokens[3], r.line)?;
                        let probs: Result<Vec<f64>> = r.tokens[4..]
                            .iter()
                            .map(|t| parse_f64(r, t, "probability"))
                            .collect();
                        let probs = probs?;
                        if probs.is_empty() || probs.iter().any(|p| *p < 0.0) {
                            return Err(Error::parse(r.line, "bad-distribution", "probabilities must be nonnegative"));
                        }
                        match domains.get(&var) {
                            Some((d, _)) if *d != probs.len() => {
                                return Err(Error::parse(
                                    r.line,
                                    "domain-mismatch",
                                    format!("distribution arity {} disagrees with earlier {}", probs.len(), d),
                                ))
                            }
                            None => {
                                domains.insert(var, (probs.len(), r.line));
                            }
                            _ => {}
                        }
                        Pending::Dist(var, probs)
                    }
                    "opsum" => Pending::OpSum,
                    "opprod" => Pending::OpProduct,
                    other => {
                        return Err(Error::parse(
                            r.line,
                            "bad-record",
                            format!("unknown node kind `{other}`"),
                        ))
                    }
                };
                if nodes.insert(id, (r.line, pending)).is_some() {
                    return Err(Error::parse(r.line, "duplicate-id", format!("node {id} already declared")));
                }
            }
            "edge" => {
                if !(3..=4).contains(&r.tokens.len()) {
                    return Err(Error::parse(r.line, "bad-record", "expected `edge <parent> <child> [weight]`"));
                }
                let p = AddId(r.tokens[1].parse::<u32>().map_err(|_| {
                    Error::parse(r.line, "bad-number", format!("invalid node id `{}`", r.tokens[1]))
                })?);
                let c = AddId(r.tokens[2].parse::<u32>().map_err(|_| {
                    Error::parse(r.line, "bad-number", format!("invalid node id `{}`", r.tokens[2]))
                })?);
                let w = match r.tokens.get(3) {
                    Some(t) => Some(parse_f64(r, t, "weight")?),
                    None => None,
                };
                edges.push((r.line, p, c, w));
            }
            "root" => {
                if r.tokens.len() != 2 {
                    return Err(Error::parse(r.line, "bad-record", "expected `root <id>`"));
                }
                if root.is_some() {
                    return Err(Error::parse(r.line, "duplicate-root", "root already declared"));
                }
                root = Some((
                    r.line,
                    AddId(r.tokens[1].parse::<u32>().map_err(|_| {
                        Error::parse(r.line, "bad-number", format!("invalid node id `{}`", r.tokens[1]))
                    })?),
                ));
            }
            other => {
                return Err(Error::parse(
                    r.line,
                    "bad-record",
                    format!("unknown record `{other}`"),
                ))
            }
        }
    }

    // Attach children in declaration order, then materialize.
    let mut children: BTreeMap<AddId, Vec<(AddId, Option<f64>)>> = BTreeMap::new();
    for (line, p, c, w) in edges {
        if !nodes.contains_key(&p) || !nodes.contains_key(&c) {
            return Err(Error::parse(line, "unknown-node", "edge references an undeclared node"));
        }
        children.entry(p).or_default().push((c, w));
    }
    let Some((_, root_id)) = root else {
        return Err(Error::parse(
            body.last().map(|r| r.line).unwrap_or(1),
            "missing-root",
            "add section has no root",
        ));
    };

    let mut b = AddBuilder::new(order.to_vec());
    let mut id_map: BTreeMap<AddId, AddId> = BTreeMap::new();
    // Children-first assembly over declared ids.
    let mut remaining: Vec<AddId> = nodes.keys().copied().collect();
    let mut guard = 0usize;
    while !remaining.is_empty() {
        guard += 1;
        if guard > nodes.len() * nodes.len() + 4 {
            return Err(Error::parse(
                nodes[&remaining[0]].0,
                "cycle",
                format!("cycle through node {}", remaining[0]),
            ));
        }
        remaining.retain(|id| {
            let kids = children.get(id).cloned().unwrap_or_default();
            if !kids.iter().all(|(c, _)| id_map.contains_key(c)) {
                return true;
            }
            let (line, pending) = &nodes[id];
            let node = match pending {
                Pending::Var(h) => AddNode::Var {
                    hidden: *h,
                    children: kids.iter().map(|(c, _)| id_map[c]).collect(),
                },
                Pending::Real(v) => AddNode::Real(*v),
                Pending::Dist(var, probs) => AddNode::DistLeaf {
                    var: *var,
                    probs: probs.clone(),
                    source: None,
                },
                Pending::OpSum => {
                    if kids.iter().any(|(_, w)| w.is_none()) {
                        // Handled below; placeholder never stored.
                        AddNode::OpSum {
                            children: Vec::new(),
                            weights: Vec::new(),
                        }
                    } else {
                        AddNode::OpSum {
                            children: kids.iter().map(|(c, _)| id_map[c]).collect(),
                            weights: kids.iter().map(|(_, w)| w.expect("checked")).collect(),
                        }
                    }
                }
                Pending::OpProduct => AddNode::OpProduct {
                    children: kids.iter().map(|(c, _)| id_map[c]).collect(),
                },
            };
            let _ = line;
            let new_id = b.push(node);
            id_map.insert(*id, new_id);
            false
        });
    }
    // Weight discipline per parent kind.
    for (p, kids) in &children {
        match &nodes[p].1 {
            Pending::OpSum => {
                if let Some((c, None)) = kids.iter().find(|(_, w)| w.is_none()) {
                    return Err(Error::parse(
                        nodes[p].0,
                        "missing-weight",
                        format!("sum edge {p} -> {c} needs a weight"),
                    ));
                }
            }
            _ => {
                if let Some((c, Some(_))) = kids.iter().find(|(_, w)| w.is_some()) {
                    return Err(Error::parse(
                        nodes[p].0,
                        "weight-on-nonsum-edge",
                        format!("edge {p} -> {c} cannot carry a weight"),
                    ));
                }
            }
        }
    }
    let Some(mapped_root) = id_map.get(&root_id) else {
        return Err(Error::parse(1, "unknown-node", format!("unknown root {root_id}")));
    };
    Ok(b.finish(*mapped_root))
}

// ---------------------------------------------------------------------
// Evidence
// ---------------------------------------------------------------------

/// Parses `X1=0,X2=1` style evidence. Boolean variables also accept the
/// positive literal (`X1=x1`, value 0) and the negated one (`X1=!x1`,
/// value 1).
pub fn parse_evidence(spn: &SpnGraph, text: &str) -> Result<Assignment> {
    let mut a = Assignment::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let Some((name, value)) = part.split_once('=') else {
            return Err(Error::parse(1, "bad-record", format!("expected VAR=value, got `{part}`")));
        };
        let var = spn
            .var_by_name(name.trim())
            .ok_or_else(|| Error::UnknownVariable(name.trim().to_string()))?;
        let value = value.trim();
        let domain = spn.variable(var).domain_size;
        let index = if let Ok(i) = value.parse::<usize>() {
            i
        } else {
            let lower = spn.variable(var).name.to_lowercase();
            if domain == 2 && value == lower {
                0
            } else if domain == 2 && value == format!("!{lower}") {
                1
            } else {
                return Err(Error::ValueOutOfRange {
                    variable: spn.variable(var).name.clone(),
                    value: usize::MAX,
                });
            }
        };
        if index >= domain {
            return Err(Error::ValueOutOfRange {
                variable: spn.variable(var).name.clone(),
                value: index,
            });
        }
        a.set(var, index);
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bn::{bn_marginal_table, to_bn};
    use crate::normal::to_normal;
    use crate::testfix::two_var_demo;

    #[test]
    fn demo_roundtrips_through_text() {
        let g = two_var_demo();
        let text = serialize_spn(&g);
        let parsed = parse_spn(&text).unwrap();
        assert_eq!(serialize_spn(&parsed), text);
        assert_eq!(
            parsed.expand_polynomial().unwrap().values(),
            g.expand_polynomial().unwrap().values()
        );
    }

    #[test]
    fn forward_references_resolve() {
        let text = "spn fwd\nvar X1 2\nedge 1 0\nnode 1 sum\nnode 0 ind X1 0\nedge 1 0 2.5\n";
        // First edge line lacks a weight for a sum parent.
        let err = parse_spn(text).unwrap_err();
        assert_eq!(err.code(), "missing-weight");
        let good = "spn fwd\nvar X1 2\nedge 1 0 2.5\nnode 1 sum\nnode 0 ind X1 0\nroot 1\n";
        let g = parse_spn(good).unwrap();
        assert_eq!(g.num_nodes(), 2);
    }

    #[test]
    fn distinct_diagnostics() {
        let cases: Vec<(&str, &str)> = vec![
            ("", "missing-header"),
            ("var X1 2\n", "missing-header"),
            ("spn t\nvar X1 2\nvar X1 2\n", "duplicate-variable"),
            ("spn t\nvar X1 1\n", "domain-out-of-range"),
            ("spn t\nvar X1 2\nnode 0 ind X1 0\nnode 0 ind X1 1\nroot 0\n", "duplicate-id"),
            ("spn t\nvar X1 2\nnode 0 ind X2 0\nroot 0\n", "unknown-variable"),
            ("spn t\nvar X1 2\nnode 0 ind X1 5\nroot 0\n", "value-out-of-range"),
            ("spn t\nvar X1 2\nnode 0 dist X1 0.5 0.4\nroot 0\n", "bad-distribution"),
            ("spn t\nvar X1 2\nnode 0 ind X1 0\nedge 1 0\nroot 0\n", "unknown-node"),
            ("spn t\nvar X1 2\nnode 0 ind X1 0\nnode 1 prod\nedge 1 0\nedge 1 0\nroot 1\n", "parallel-edge"),
            ("spn t\nvar X1 2\nnode 0 ind X1 0\nnode 1 sum\nedge 1 0\nroot 1\n", "missing-weight"),
            ("spn t\nvar X1 2\nnode 0 ind X1 0\nnode 1 prod\nedge 1 0 2.0\nroot 1\n", "weight-on-nonsum-edge"),
            ("spn t\nvar X1 2\nnode 0 ind X1 0\nnode 1 sum\nedge 1 0 -1.0\nroot 1\n", "negative-weight"),
            ("spn t\nvar X1 2\nnode 0 ind X1 0\nnode 1 ind X1 1\nedge 0 1\nroot 0\n", "leaf-parent"),
            ("spn t\nvar X1 2\nnode 0 ind X1 0\n", "missing-root"),
            ("spn t\nvar X1 2\nnode 0 ind X1 0\nroot 0\nroot 0\n", "duplicate-root"),
            ("spn t\nvar X1 2\nnode 0 sum\nroot 0\n", "childless-node"),
            ("spn t\nvar X1 2\nnode 0 ind X1 0\nnode 1 prod\nnode 2 prod\nedge 1 2\nedge 2 1\nroot 0\n", "cycle"),
            ("spn t\nvar X1 2\nnode 0 ind X1 0\nnode 1 ind X1 1\nroot 0\n", "unreachable-node"),
            ("spn t\nvar X1 2\nvar X2 2\nnode 0 ind X1 0\nroot 0\n", "unused-variable"),
            ("spn t\nvar X1 2\nnode 0 ind X1 0\nwhat 1 2\nroot 0\n", "bad-record"),
            ("spn t\nvar X1 2\nnode 0 ind X1 zero\nroot 0\n", "bad-number"),
        ];
        for (text, code) in cases {
            let err = parse_spn(text).unwrap_err();
            assert_eq!(err.code(), code, "document: {text:?} -> {err}");
        }
    }

    #[test]
    fn cycle_diagnostic_names_an_edge_line() {
        let text = "spn t\nvar X1 2\nnode 0 ind X1 0\nnode 1 prod\nnode 2 prod\nedge 1 2\nedge 2 1\nroot 0\n";
        match parse_spn(text).unwrap_err() {
            Error::Parse { line, .. } => assert!(line == 6 || line == 7),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn bn_bundle_roundtrips_and_preserves_marginals() {
        let (normal, _) = to_normal(&two_var_demo()).unwrap();
        let bn = to_bn(&normal).unwrap();
        let text = serialize_bn(&bn);
        let parsed = parse_bn(&text).unwrap();
        assert_eq!(serialize_bn(&parsed), text);
        let want = bn_marginal_table(&bn).unwrap();
        let got = bn_marginal_table(&parsed).unwrap();
        assert!(want.max_abs_diff(&got).unwrap() <= 1e-12);
    }

    #[test]
    fn shared_add_nodes_serialize_once() {
        let (normal, _) = to_normal(&two_var_demo()).unwrap();
        let bn = to_bn(&normal).unwrap();
        let x1 = bn.observable_by_name("X1").unwrap();
        let section = serialize_add(bn.cpd_observable(x1).unwrap(), "X1", bn.observables());
        // Two distinct leaves plus the branch node: branches 0 and 1 share
        // one leaf, so only three node records appear.
        assert_eq!(section.lines().filter(|l| l.starts_with("node ")).count(), 3);
        assert_eq!(section.lines().filter(|l| l.starts_with("edge ")).count(), 3);
    }

    #[test]
    fn evidence_sugar_for_booleans() {
        let g = two_var_demo();
        let x1 = g.var_by_name("X1").unwrap();
        let x2 = g.var_by_name("X2").unwrap();
        let a = parse_evidence(&g, "X1=0,X2=1").unwrap();
        assert_eq!((a.get(x1), a.get(x2)), (Some(0), Some(1)));
        let b = parse_evidence(&g, "X1=x1, X2=!x2").unwrap();
        assert_eq!((b.get(x1), b.get(x2)), (Some(0), Some(1)));
        assert!(parse_evidence(&g, "X3=0").is_err());
        assert!(parse_evidence(&g, "X1=7").is_err());
    }
}
