//! A toolkit for sum-product networks (SPNs) and their Bayesian-network form.
//!
//! The pipeline implemented here:
//!
//! 1. [`spn`] — the circuit IR: a rooted DAG of weighted sum nodes, product
//!    nodes, indicator leaves and univariate distribution leaves, together
//!    with exact evaluation of the network polynomial and brute-force
//!    enumeration oracles.
//! 2. [`normal`] — rewrite passes that bring any complete and consistent SPN
//!    into normal form (decomposable, weight-normalized, scope-1 sums reduced
//!    to distribution leaves) without changing the encoded distribution.
//! 3. [`bn`] — compilation of a normal SPN into a bipartite Bayesian network
//!    whose conditional distributions are algebraic decision diagrams
//!    ([`add`]), one hidden variable per sum node.
//! 4. [`ve`] — symbolic variable elimination over those decision diagrams,
//!    which recovers a sum-product circuit encoding the same distribution.
//!
//! Every transformation is checked against enumeration oracles in the test
//! suite; [`harness`] provides seeded random instance generators and sweep
//! drivers, [`text`] a line-oriented interchange format, and [`dot`] Graphviz
//! export. The `spnkit` binary exposes the pipeline as subcommands.
//!
//! With the default `parallel` feature the enumeration oracles and sweep
//! drivers fan out over rayon; without it they run sequentially with the
//! same results.

pub mod add;
pub mod bn;
pub mod dot;
pub mod error;
mod exec;
pub mod harness;
pub mod normal;
pub mod spn;
pub mod table;
pub mod text;
pub mod validate;
pub mod ve;

pub use error::{Error, Result};
pub use spn::{Assignment, IndicatorValues, NodeId, SizeMetrics, SpnGraph, VarId, VarSet, Variable};
pub use table::JointTable;
pub use validate::{validate, ValidationReport, Violation};

/// Absolute tolerance used by all distribution-equality checks.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// Brute-force oracles refuse models with more than this many variables.
pub const DEFAULT_MAX_ENUM_VARS: usize = 16;

/// Cap on the joint hidden state space enumerated by [`bn::bn_marginal`].
pub const DEFAULT_HIDDEN_STATE_CAP: usize = 1 << 16;

/// Cap on the number of root-to-product paths enumerated by [`bn::check_csi`].
pub const DEFAULT_CSI_PATH_CAP: usize = 10_000;

/// Weight vectors are renormalized when floating-point drift exceeds this.
pub(crate) const WEIGHT_DRIFT_EPS: f64 = 1e-12;

#[cfg(test)]
pub(crate) mod testfix {
    use crate::spn::SpnGraph;

    /// The running two-variable example: a complete, consistent and
    /// decomposable SPN with unnormalized weights whose polynomial expands to
    /// coefficients (594, 1776, 306, 824) and partition function 3500.
    pub fn two_var_demo() -> SpnGraph {
        let mut g = SpnGraph::new("demo");
        let x1 = g.add_variable("X1", 2).unwrap();
        let x2 = g.add_variable("X2", 2).unwrap();
        let i1 = g.add_indicator(x1, 0).unwrap();
        let i1n = g.add_indicator(x1, 1).unwrap();
        let i2 = g.add_indicator(x2, 0).unwrap();
        let i2n = g.add_indicator(x2, 1).unwrap();
        let sa = g.add_sum(&[(i1, 6.0), (i1n, 4.0)]).unwrap();
        let sb = g.add_sum(&[(i2, 6.0), (i2n, 14.0)]).unwrap();
        let sc = g.add_sum(&[(i2, 2.0), (i2n, 8.0)]).unwrap();
        let sd = g.add_sum(&[(i1, 9.0), (i1n, 1.0)]).unwrap();
        let p1 = g.add_product(&[sa, sb]).unwrap();
        let p2 = g.add_product(&[sa, sc]).unwrap();
        let p3 = g.add_product(&[sd, sc]).unwrap();
        let root = g.add_sum(&[(p1, 10.0), (p2, 6.0), (p3, 9.0)]).unwrap();
        g.set_root(root).unwrap();
        g
    }
}
