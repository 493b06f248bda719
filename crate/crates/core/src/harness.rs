//! Seeded random instance generation and sweep drivers.
//!
//! The generator builds complete and decomposable circuits by recursive
//! scope partitioning (products split the variable set, sums mix children of
//! identical scope, with occasional reuse of existing subcircuits to create
//! DAG sharing). A second mode injects a shared pinned indicator under a
//! product node so consistency holds but decomposability fails.

use std::collections::BTreeMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec;
use crate::normal::to_normal;
use crate::spn::{NodeId, SpnGraph, SpnNodeKind, VarId, VarSet};
use crate::validate::validate;
use crate::ve::{roundtrip_with_tolerance, RoundTripReport};
use crate::{bn, ve};

/// Target structure of a generated instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenMode {
    /// Complete and decomposable by construction.
    Decomposable,
    /// Complete and consistent, decomposability broken by injected shared
    /// indicators.
    ConsistentNondecomposable,
}

/// Generator configuration; the seed fully determines the output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenConfig {
    pub num_vars: usize,
    pub target_nodes: usize,
    pub max_fanout: usize,
    pub seed: u64,
    pub mode: GenMode,
}

impl GenConfig {
    pub fn decomposable(num_vars: usize, target_nodes: usize, seed: u64) -> Self {
        GenConfig {
            num_vars,
            target_nodes,
            max_fanout: 3,
            seed,
            mode: GenMode::Decomposable,
        }
    }

    pub fn consistent_nondecomposable(num_vars: usize, target_nodes: usize, seed: u64) -> Self {
        GenConfig {
            num_vars,
            target_nodes,
            max_fanout: 3,
            seed,
            mode: GenMode::ConsistentNondecomposable,
        }
    }
}

/// Weights are drawn uniform on (0, 1] so no sum node has zero mass.
fn weight(rng: &mut ChaCha8Rng) -> f64 {
    1.0 - rng.gen::<f64>()
}

struct Gen<'a> {
    g: SpnGraph,
    rng: &'a mut ChaCha8Rng,
    max_fanout: usize,
    /// Subcircuits by scope, for reuse at sum nodes.
    by_scope: BTreeMap<VarSet, Vec<NodeId>>,
    vars: Vec<VarId>,
}

impl<'a> Gen<'a> {
    fn leaf_mixture(&mut self, var: VarId) -> NodeId {
        let domain = self.g.variable(var).domain_size;
        let children: Vec<(NodeId, f64)> = (0..domain)
            .map(|v| {
                let ind = self
                    .g
                    .find_indicator(var, v)
                    .unwrap_or_else(|| self.g.add_indicator(var, v).expect("indicator"));
                (ind, weight(self.rng))
            })
            .collect();
        let s = self.g.add_sum(&children).expect("mixture");
        self.by_scope
            .entry(VarSet::singleton(var))
            .or_default()
            .push(s);
        s
    }

    /// Splits `vars` into 2..=max_fanout nonempty blocks uniformly.
    fn partition(&mut self, vars: &[VarId]) -> Vec<Vec<VarId>> {
        let blocks = self.rng.gen_range(2..=self.max_fanout.min(vars.len()).max(2));
        loop {
            let mut out: Vec<Vec<VarId>> = vec![Vec::new(); blocks];
            for v in vars {
                out[self.rng.gen_range(0..blocks)].push(*v);
            }
            out.retain(|b| !b.is_empty());
            if out.len() >= 2 {
                return out;
            }
        }
    }

    fn build_over(&mut self, vars: &[VarId], allow_reuse: bool) -> NodeId {
        if vars.len() == 1 {
            let scope = VarSet::singleton(vars[0]);
            if allow_reuse && self.rng.gen_bool(0.3) {
                if let Some(existing) = self.by_scope.get(&scope) {
                    if !existing.is_empty() {
                        let i = self.rng.gen_range(0..existing.len());
                        return existing[i];
                    }
                }
            }
            return self.leaf_mixture(vars[0]);
        }

        let mut scope = VarSet::empty();
        for v in vars {
            scope.insert(*v);
        }
        if allow_reuse && self.rng.gen_bool(0.25) {
            if let Some(existing) = self.by_scope.get(&scope) {
                if !existing.is_empty() {
                    let i = self.rng.gen_range(0..existing.len());
                    return existing[i];
                }
            }
        }

        // A sum of products over the same variable set.
        let arity = self.rng.gen_range(2..=self.max_fanout);
        let mut children = Vec::with_capacity(arity);
        for _ in 0..arity {
            let blocks = self.partition(vars);
            let parts: Vec<NodeId> = blocks
                .iter()
                .map(|b| self.build_over(b, true))
                .collect();
            let p = self.g.add_product(&parts).expect("product");
            children.push((p, weight(self.rng)));
        }
        // Distinct children only; a sum may not repeat a child edge.
        children.dedup_by_key(|(id, _)| *id);
        let s = self.g.add_sum(&children).expect("sum");
        self.by_scope.entry(scope).or_default().push(s);
        s
    }
}

fn min_nodes(num_vars: usize) -> usize {
    if num_vars == 1 {
        3
    } else {
        3 * num_vars + 2
    }
}

/// Generates a seeded random circuit with the configured structure.
/// Instances validate as their mode promises: `Decomposable` yields
/// complete + decomposable circuits, `ConsistentNondecomposable` complete +
/// consistent + non-decomposable ones.
pub fn generate(config: &GenConfig) -> Result<SpnGraph> {
    if config.num_vars == 0 || config.num_vars > 16 {
        return Err(Error::InfeasibleConfig(format!(
            "num_vars must be in 1..=16, got {}",
            config.num_vars
        )));
    }
    if config.max_fanout < 2 {
        return Err(Error::InfeasibleConfig("max_fanout must be at least 2".into()));
    }
    if config.target_nodes < min_nodes(config.num_vars) {
        return Err(Error::InfeasibleConfig(format!(
            "target_nodes {} is below the minimum {} for {} variables",
            config.target_nodes,
            min_nodes(config.num_vars),
            config.num_vars
        )));
    }
    if config.mode == GenMode::ConsistentNondecomposable && config.num_vars < 2 {
        return Err(Error::InfeasibleConfig(
            "injection needs at least two variables".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut g = SpnGraph::new(format!("gen-{}", config.seed));
    let vars: Vec<VarId> = (0..config.num_vars)
        .map(|i| g.add_variable(format!("X{}", i + 1), 2).expect("variable"))
        .collect();

    let mut gen = Gen {
        g,
        rng: &mut rng,
        max_fanout: config.max_fanout,
        by_scope: BTreeMap::new(),
        vars: vars.clone(),
    };

    let root = if vars.len() == 1 {
        gen.leaf_mixture(vars[0])
    } else {
        // Grow extra mixture components under the root until the target
        // size is reached.
        let first = gen.build_over(&vars, false);
        let mut components = vec![(first, weight(gen.rng))];
        loop {
            gen.g.set_root(first).expect("root");
            let have = gen.g.num_nodes();
            if have >= config.target_nodes {
                break;
            }
            let extra = {
                let blocks = gen.partition(&vars.clone());
                let parts: Vec<NodeId> = blocks
                    .iter()
                    .map(|b| gen.build_over(b, true))
                    .collect();
                gen.g.add_product(&parts).expect("product")
            };
            components.push((extra, weight(gen.rng)));
        }
        if components.len() == 1 {
            components[0].0
        } else {
            gen.g.add_sum(&components).expect("root sum")
        }
    };
    let mut g = gen.g;
    g.set_root(root)?;
    g.remove_unreachable()?;

    if config.mode == GenMode::ConsistentNondecomposable {
        inject_shared_indicators(&mut g, &mut rng)?;
    }

    let report = validate(&g)?;
    debug_assert!(report.complete, "generator must produce complete circuits");
    match config.mode {
        GenMode::Decomposable => debug_assert!(report.decomposable),
        GenMode::ConsistentNondecomposable => {
            debug_assert!(report.consistent && !report.decomposable)
        }
    }
    Ok(g)
}

/// Breaks decomposability while keeping completeness and consistency: pick a
/// product `p` with children `a`, `b` and a variable `X` in `b`'s scope, pin
/// `X` to one value everywhere (replacing its leaf mixtures by the bare
/// indicator), and multiply that indicator into `a`'s branch of `p`. With
/// some probability the pinned subtree is also linked under another sum of
/// equal scope, so the decomposition pass must duplicate it.
fn inject_shared_indicators(g: &mut SpnGraph, rng: &mut ChaCha8Rng) -> Result<()> {
    let scopes = g.scopes()?;
    let candidates: Vec<NodeId> = g
        .bottom_up_order()?
        .into_iter()
        .filter(|id| {
            let n = g.node(*id);
            n.is_product() && n.children.len() >= 2
        })
        .collect();
    if candidates.is_empty() {
        return Err(Error::InfeasibleConfig(
            "no product node available for injection".into(),
        ));
    }

    let sites = rng.gen_range(1..=3usize.min(candidates.len()));
    let mut used_vars: Vec<VarId> = Vec::new();
    let mut injected = 0usize;
    let mut order: Vec<NodeId> = candidates;
    for _ in 0..order.len() {
        if injected >= sites {
            break;
        }
        let p = order.remove(rng.gen_range(0..order.len()));
        let children = g.node(p).children.clone();
        let a_idx = rng.gen_range(0..children.len());
        let b_idx = (a_idx + 1 + rng.gen_range(0..children.len() - 1)) % children.len();
        let (a, b) = (children[a_idx], children[b_idx]);
        let choices: Vec<VarId> = scopes[&b]
            .iter()
            .filter(|v| !used_vars.contains(v))
            .collect();
        let Some(&x) = choices.get(rng.gen_range(0..choices.len().max(1)).min(choices.len().saturating_sub(1))) else {
            continue;
        };
        used_vars.push(x);
        let pinned = rng.gen_range(0..g.variable(x).domain_size);

        // Pin X globally: every scope-{X} sum becomes the bare indicator.
        let ind = g
            .find_indicator(x, pinned)
            .unwrap_or_else(|| g.add_indicator(x, pinned).expect("indicator"));
        let mixtures: Vec<NodeId> = g
            .node_ids()
            .filter(|id| {
                *id != ind
                    && scopes.get(id).map_or(false, |s| *s == VarSet::singleton(x))
            })
            .collect();
        let parents = g.parents_map();
        for m in mixtures {
            for parent in parents.get(&m).cloned().unwrap_or_default() {
                if g.contains(parent) && !g.node(parent).children.contains(&ind) {
                    g.replace_child(parent, m, ind);
                }
            }
        }

        // Multiply the pinned indicator into a's branch of p.
        let wrapper = g.add_product(&[a, ind])?;
        g.replace_child(p, a, wrapper);

        // Occasionally share b under another sum of identical scope so the
        // decomposition pass must exercise its duplicate-creation path.
        if rng.gen_bool(0.6) {
            let subtree = g.descendants(p);
            let hosts: Vec<NodeId> = g
                .node_ids()
                .filter(|id| {
                    !subtree.contains(id)
                        && g.node(*id).is_sum()
                        && scopes.get(id).map_or(false, |s| *s == scopes[&b])
                        && !g.node(*id).children.contains(&b)
                })
                .collect();
            if !hosts.is_empty() {
                let host = hosts[rng.gen_range(0..hosts.len())];
                g.add_sum_child(host, b, weight(rng));
            }
        }
        injected += 1;
    }
    if injected == 0 {
        return Err(Error::InfeasibleConfig(
            "injection found no usable site".into(),
        ));
    }
    g.remove_unreachable()?;
    Ok(())
}

/// A deterministic deep circuit whose sum and product layers alternate along
/// the longest path; `height` must be odd and at least 3. The longest path
/// runs root sum, product, sum, ..., leaf mixture, indicator.
pub fn alternating_spn(height: usize) -> Result<SpnGraph> {
    if height < 3 || height % 2 == 0 {
        return Err(Error::InfeasibleConfig(
            "alternating circuits need an odd height of at least 3".into(),
        ));
    }
    let peels = (height - 3) / 2;
    let num_vars = peels + 2;
    let mut g = SpnGraph::new(format!("alternating-{height}"));
    let vars: Vec<VarId> = (0..num_vars)
        .map(|i| g.add_variable(format!("X{}", i + 1), 2).expect("variable"))
        .collect();

    let mixture = |g: &mut SpnGraph, var: VarId, w0: f64, w1: f64| -> NodeId {
        let i0 = g.add_indicator(var, 0).expect("indicator");
        let i1 = g.add_indicator(var, 1).expect("indicator");
        g.add_sum(&[(i0, w0), (i1, w1)]).expect("mixture")
    };

    // Bottom pair: a sum over two products of leaf mixtures.
    let last = vars[num_vars - 1];
    let prev = vars[num_vars - 2];
    let pa = {
        let l1 = mixture(&mut g, prev, 3.0, 7.0);
        let l2 = mixture(&mut g, last, 6.0, 4.0);
        g.add_product(&[l1, l2]).expect("product")
    };
    let pb = {
        let l1 = mixture(&mut g, prev, 5.0, 5.0);
        let l2 = mixture(&mut g, last, 2.0, 8.0);
        g.add_product(&[l1, l2]).expect("product")
    };
    let mut current = g.add_sum(&[(pa, 2.0), (pb, 3.0)]).expect("sum");

    // Each level peels one variable off through a product layer.
    for peel in (0..peels).rev() {
        let var = vars[peel];
        let p1 = {
            let l = mixture(&mut g, var, 4.0, 6.0);
            g.add_product(&[l, current]).expect("product")
        };
        let p2 = {
            let l = mixture(&mut g, var, 9.0, 1.0);
            g.add_product(&[l, current]).expect("product")
        };
        current = g.add_sum(&[(p1, 5.0), (p2, 4.0)]).expect("sum");
    }
    g.set_root(current)?;
    debug_assert_eq!(g.size_metrics()?.height, height);
    Ok(g)
}

/// Per-instance outcome of a sweep; failures are recorded, never thrown.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub config: GenConfig,
    pub report: Option<RoundTripReport>,
    pub error: Option<String>,
}

impl SweepOutcome {
    pub fn passed(&self) -> bool {
        self.report.as_ref().map_or(false, |r| r.pass)
    }
}

/// Aggregated sweep result.
#[derive(Debug, Clone)]
pub struct SweepReport {
    pub outcomes: Vec<SweepOutcome>,
    pub passes: usize,
    pub failures: usize,
    pub worst_deviation: f64,
}

fn run_one(config: &GenConfig, tolerance: f64) -> SweepOutcome {
    let result = generate(config).and_then(|g| roundtrip_with_tolerance(&g, tolerance));
    match result {
        Ok(report) => SweepOutcome {
            config: *config,
            report: Some(report),
            error: None,
        },
        Err(e) => SweepOutcome {
            config: *config,
            report: None,
            error: Some(e.to_string()),
        },
    }
}

fn aggregate(outcomes: Vec<SweepOutcome>) -> SweepReport {
    let passes = outcomes.iter().filter(|o| o.passed()).count();
    let failures = outcomes.len() - passes;
    let worst_deviation = outcomes
        .iter()
        .filter_map(|o| o.report.as_ref().map(|r| r.max_deviation))
        .fold(0.0, f64::max);
    SweepReport {
        outcomes,
        passes,
        failures,
        worst_deviation,
    }
}

/// Generates every configured instance and runs the full round trip on it,
/// in parallel under the `parallel` feature.
pub fn sweep_roundtrip(configs: &[GenConfig], tolerance: f64) -> SweepReport {
    aggregate(exec::map_items(configs, |c| run_one(c, tolerance)))
}

/// Sequential twin of [`sweep_roundtrip`], the benchmark baseline.
pub fn sweep_roundtrip_sequential(configs: &[GenConfig], tolerance: f64) -> SweepReport {
    aggregate(exec::map_items_seq(configs, |c| run_one(c, tolerance)))
}

/// One row of the size/time scaling probe.
#[derive(Debug, Clone, Copy)]
pub struct ScalingRow {
    pub target_nodes: usize,
    pub num_vars: usize,
    /// Size of the normal form actually compiled.
    pub normal_size: usize,
    /// Measured network size (graph plus all decision diagrams).
    pub bn_size: usize,
    /// Explicit bound `3*N*|S| + |S|`.
    pub bn_bound: usize,
    pub convert_ops: u64,
    pub convert_ops_bound: u64,
    pub ve_multiply_ops: u64,
    pub ve_ops_bound: u64,
    /// `bn_size / (N * |S|)`.
    pub ratio: f64,
}

impl ScalingRow {
    pub fn within_bounds(&self) -> bool {
        self.bn_size <= self.bn_bound
            && self.convert_ops <= self.convert_ops_bound
            && self.ve_multiply_ops <= self.ve_ops_bound
    }
}

/// Generates decomposable circuits of increasing size at fixed variable
/// count, compiles and recovers each, and reports measured sizes and
/// operation counts against their explicit linear bounds.
pub fn scaling_probe(sizes: &[usize], num_vars: usize, seed: u64) -> Result<Vec<ScalingRow>> {
    let mut rows = Vec::with_capacity(sizes.len());
    for (i, target) in sizes.iter().enumerate() {
        let config = GenConfig {
            num_vars,
            target_nodes: *target,
            max_fanout: 3,
            seed: seed.wrapping_add(i as u64),
            mode: GenMode::Decomposable,
        };
        let g = generate(&config)?;
        let (normal, _) = to_normal(&g)?;
        let s = normal.size_metrics()?.size;
        let n = normal.num_variables().max(1);
        let net = bn::to_bn(&normal)?;
        let size_report = bn::bn_size(&net, &normal)?;
        let (_, stats) = ve::eliminate(&net)?;
        rows.push(ScalingRow {
            target_nodes: *target,
            num_vars: n,
            normal_size: s,
            bn_size: size_report.total(),
            bn_bound: 3 * n * s + s,
            convert_ops: net.build_ops(),
            convert_ops_bound: 4 * (n as u64) * (s as u64),
            ve_multiply_ops: stats.multiply_ops,
            ve_ops_bound: 2 * (n as u64) * (s as u64),
            ratio: size_report.total() as f64 / (n * s) as f64,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::serialize_spn;

    #[test]
    fn decomposable_mode_validates_by_construction() {
        let g = generate(&GenConfig::decomposable(4, 30, 7)).unwrap();
        let r = validate(&g).unwrap();
        assert!(r.complete && r.decomposable, "{:?}", r.offending_nodes);
    }

    #[test]
    fn nondecomposable_mode_validates_by_construction() {
        let g = generate(&GenConfig::consistent_nondecomposable(4, 30, 7)).unwrap();
        let r = validate(&g).unwrap();
        assert!(r.complete && r.consistent && !r.decomposable);
    }

    #[test]
    fn identical_seeds_serialize_identically() {
        let c = GenConfig::decomposable(5, 40, 99);
        let a = serialize_spn(&generate(&c).unwrap());
        let b = serialize_spn(&generate(&c).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn different_seeds_differ() {
        let a = serialize_spn(&generate(&GenConfig::decomposable(5, 40, 1)).unwrap());
        let b = serialize_spn(&generate(&GenConfig::decomposable(5, 40, 2)).unwrap());
        assert_ne!(a, b);
    }

    #[test]
    fn infeasible_config_is_rejected() {
        let err = generate(&GenConfig::decomposable(8, 5, 0)).unwrap_err();
        assert_eq!(err.code(), "infeasible-config");
    }

    #[test]
    fn generated_sizes_track_target() {
        let g = generate(&GenConfig::decomposable(6, 80, 3)).unwrap();
        assert!(g.num_nodes() >= 80);
    }

    #[test]
    fn alternating_circuit_has_requested_height() {
        let g = alternating_spn(9).unwrap();
        assert_eq!(g.size_metrics().unwrap().height, 9);
        let r = validate(&g).unwrap();
        assert!(r.complete && r.decomposable);
        assert_eq!(alternating_spn(4).unwrap_err().code(), "infeasible-config");
    }

    #[test]
    fn sweep_records_failures_instead_of_throwing() {
        let configs = vec![
            GenConfig::decomposable(3, 20, 5),
            GenConfig::decomposable(8, 5, 5), // infeasible
        ];
        let report = sweep_roundtrip(&configs, 1e-9);
        assert_eq!(report.outcomes.len(), 2);
        assert_eq!(report.passes, 1);
        assert_eq!(report.failures, 1);
        assert!(report.outcomes[1].error.is_some());
    }

    #[test]
    fn empty_sweep_is_empty() {
        let report = sweep_roundtrip(&[], 1e-9);
        assert!(report.outcomes.is_empty());
        assert_eq!(report.passes, 0);
    }

    #[test]
    fn scaling_probe_rows_stay_within_bounds() {
        let rows = scaling_probe(&[60, 120], 6, 11).unwrap();
        assert_eq!(rows.len(), 2);
        for row in rows {
            assert!(row.within_bounds(), "{row:?}");
        }
    }
}
