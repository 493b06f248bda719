//! Dense joint tables over complete assignments, and the brute-force
//! enumeration oracles built on them.
//!
//! The table index is mixed-radix with the first model variable most
//! significant and value indices ascending, so for Boolean variables
//! (value 0 = positive literal) the flat order of a two-variable table is
//! `(x1 x2, x1 !x2, !x1 x2, !x1 !x2)`.

use crate::error::{Error, Result};
use crate::exec;
use crate::spn::{Assignment, IndicatorValues, SpnGraph, VarId};
use crate::DEFAULT_MAX_ENUM_VARS;

/// Hard cap on table entries regardless of the variable-count cap.
const MAX_TABLE_ENTRIES: usize = 1 << 24;

/// Dense map from complete assignments to reals.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    vars: Vec<VarId>,
    dims: Vec<usize>,
    values: Vec<f64>,
}

impl JointTable {
    pub(crate) fn new(vars: Vec<VarId>, dims: Vec<usize>, values: Vec<f64>) -> Self {
        debug_assert_eq!(vars.len(), dims.len());
        debug_assert_eq!(values.len(), dims.iter().product::<usize>());
        JointTable { vars, dims, values }
    }

    pub fn vars(&self) -> &[VarId] {
        &self.vars
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, index: usize) -> f64 {
        self.values[index]
    }

    /// Decodes a flat index into a complete assignment.
    pub fn assignment_at(&self, mut index: usize) -> Assignment {
        let mut a = Assignment::new();
        for (var, dim) in self.vars.iter().zip(&self.dims).rev() {
            a.set(*var, index % dim);
            index /= dim;
        }
        a
    }

    /// Flat index of a complete assignment.
    pub fn index_of(&self, assignment: &Assignment) -> Result<usize> {
        let mut index = 0usize;
        for (var, dim) in self.vars.iter().zip(&self.dims) {
            let v = assignment
                .get(*var)
                .ok_or_else(|| Error::IncompleteAssignment(var.to_string()))?;
            if v >= *dim {
                return Err(Error::ValueOutOfRange {
                    variable: var.to_string(),
                    value: v,
                });
            }
            index = index * dim + v;
        }
        Ok(index)
    }

    pub fn get(&self, assignment: &Assignment) -> Result<f64> {
        Ok(self.values[self.index_of(assignment)?])
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Divides by the total mass; errors when the mass is zero.
    pub fn normalized(&self) -> Result<JointTable> {
        let z = self.sum();
        if z <= 0.0 {
            return Err(Error::DegenerateDistribution);
        }
        Ok(JointTable {
            vars: self.vars.clone(),
            dims: self.dims.clone(),
            values: self.values.iter().map(|v| v / z).collect(),
        })
    }

    /// Largest absolute entry-wise difference. Both tables must cover the
    /// same variables in the same order.
    pub fn max_abs_diff(&self, other: &JointTable) -> Result<f64> {
        if self.vars != other.vars || self.dims != other.dims {
            return Err(Error::OrderViolation);
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

fn enum_dims(spn: &SpnGraph, max_vars: usize) -> Result<(Vec<VarId>, Vec<usize>, usize)> {
    let vars: Vec<VarId> = spn.var_ids().collect();
    if vars.len() > max_vars {
        return Err(Error::EnumerationCap {
            needed: vars.len(),
            cap: max_vars,
        });
    }
    let dims: Vec<usize> = vars.iter().map(|v| spn.variable(*v).domain_size).collect();
    let total: usize = dims.iter().product();
    if total > MAX_TABLE_ENTRIES {
        return Err(Error::EnumerationCap {
            needed: total,
            cap: MAX_TABLE_ENTRIES,
        });
    }
    Ok((vars, dims, total))
}

fn one_hot_inputs(vars: &[VarId], dims: &[usize], mut index: usize) -> IndicatorValues {
    let mut iv = IndicatorValues::new();
    for (var, dim) in vars.iter().zip(dims).rev() {
        let value = index % dim;
        index /= dim;
        let mut row = vec![0.0; *dim];
        row[value] = 1.0;
        iv.set(*var, row);
    }
    iv
}

impl SpnGraph {
    /// Unnormalized coefficient table of the network polynomial, one entry
    /// per complete assignment, obtained by evaluating at every one-hot
    /// indicator setting. `O(d^N)`; refuses models beyond the cap.
    pub fn expand_polynomial(&self) -> Result<JointTable> {
        self.expand_polynomial_capped(DEFAULT_MAX_ENUM_VARS)
    }

    pub fn expand_polynomial_capped(&self, max_vars: usize) -> Result<JointTable> {
        let (vars, dims, total) = enum_dims(self, max_vars)?;
        let values = exec::map_range(total, |i| self.evaluate(&one_hot_inputs(&vars, &dims, i)));
        let values: Result<Vec<f64>> = values.into_iter().collect();
        Ok(JointTable::new(vars, dims, values?))
    }

    /// Sequential twin of [`SpnGraph::expand_polynomial`]; used as the
    /// baseline in benchmarks.
    pub fn expand_polynomial_sequential(&self) -> Result<JointTable> {
        let (vars, dims, total) = enum_dims(self, DEFAULT_MAX_ENUM_VARS)?;
        let values =
            exec::map_range_seq(total, |i| self.evaluate(&one_hot_inputs(&vars, &dims, i)));
        let values: Result<Vec<f64>> = values.into_iter().collect();
        Ok(JointTable::new(vars, dims, values?))
    }

    /// The distribution encoded by the circuit: the coefficient table divided
    /// by the partition function. This is the brute-force oracle every
    /// transformation is checked against.
    pub fn distribution(&self) -> Result<JointTable> {
        self.distribution_capped(DEFAULT_MAX_ENUM_VARS)
    }

    pub fn distribution_capped(&self, max_vars: usize) -> Result<JointTable> {
        self.expand_polynomial_capped(max_vars)?.normalized()
    }

    pub fn distribution_sequential(&self) -> Result<JointTable> {
        self.expand_polynomial_sequential()?.normalized()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testfix::two_var_demo;

    #[test]
    fn demo_coefficients_match_caption() {
        let g = two_var_demo();
        let t = g.expand_polynomial().unwrap();
        assert_eq!(t.values(), &[594.0, 1776.0, 306.0, 824.0]);
        assert_eq!(t.sum(), 3500.0);
    }

    #[test]
    fn two_factor_expansion() {
        // (I_x1 + 9 I_!x1)(4 I_x2 + 6 I_!x2) expands to (4, 6, 36, 54).
        let mut g = SpnGraph::new("t");
        let x1 = g.add_variable("X1", 2).unwrap();
        let x2 = g.add_variable("X2", 2).unwrap();
        let i1 = g.add_indicator(x1, 0).unwrap();
        let i1n = g.add_indicator(x1, 1).unwrap();
        let i2 = g.add_indicator(x2, 0).unwrap();
        let i2n = g.add_indicator(x2, 1).unwrap();
        let s1 = g.add_sum(&[(i1, 1.0), (i1n, 9.0)]).unwrap();
        let s2 = g.add_sum(&[(i2, 4.0), (i2n, 6.0)]).unwrap();
        let p = g.add_product(&[s1, s2]).unwrap();
        g.set_root(p).unwrap();
        let t = g.expand_polynomial().unwrap();
        assert_eq!(t.values(), &[4.0, 6.0, 36.0, 54.0]);
    }

    #[test]
    fn single_indicator_coefficients() {
        let mut g = SpnGraph::new("t");
        let x1 = g.add_variable("X1", 2).unwrap();
        let i = g.add_indicator(x1, 0).unwrap();
        g.set_root(i).unwrap();
        let t = g.expand_polynomial().unwrap();
        assert_eq!(t.values(), &[1.0, 0.0]);
    }

    #[test]
    fn demo_distribution_normalizes() {
        let g = two_var_demo();
        let d = g.distribution().unwrap();
        let x1 = g.var_by_name("X1").unwrap();
        let x2 = g.var_by_name("X2").unwrap();
        let a = Assignment::new().with(x1, 0).with(x2, 0);
        assert!((d.get(&a).unwrap() - 594.0 / 3500.0).abs() < 1e-12);
        assert!((d.sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn terminal_leaf_distribution_is_identity() {
        let mut g = SpnGraph::new("t");
        let x = g.add_variable("X1", 2).unwrap();
        let t = g.add_terminal_dist(x, vec![0.3, 0.7]).unwrap();
        g.set_root(t).unwrap();
        let d = g.distribution().unwrap();
        assert_eq!(d.values(), &[0.3, 0.7]);
    }

    #[test]
    fn zero_mass_distribution_is_degenerate() {
        let mut g = SpnGraph::new("t");
        let x = g.add_variable("X1", 2).unwrap();
        let i = g.add_indicator(x, 0).unwrap();
        let s = g.add_sum(&[(i, 0.0)]).unwrap();
        g.set_root(s).unwrap();
        let err = g.distribution().unwrap_err();
        assert_eq!(err.code(), "degenerate-distribution");
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let mut g = SpnGraph::new("t");
        let mut leaves = Vec::new();
        for i in 0..17 {
            let x = g.add_variable(format!("X{i}"), 2).unwrap();
            leaves.push(g.add_terminal_dist(x, vec![0.5, 0.5]).unwrap());
        }
        let p = g.add_product(&leaves).unwrap();
        g.set_root(p).unwrap();
        assert_eq!(
            g.distribution().unwrap_err().code(),
            "enumeration-cap"
        );
    }

    #[test]
    fn partial_evidence_query_matches_coefficient_sums() {
        let g = two_var_demo();
        let t = g.expand_polynomial().unwrap();
        let x1 = g.var_by_name("X1").unwrap();
        for v in 0..2 {
            let e = Assignment::new().with(x1, v);
            let want: f64 = (0..t.len())
                .filter(|i| t.assignment_at(*i).get(x1) == Some(v))
                .map(|i| t.at(i))
                .sum();
            assert!((g.query(&e).unwrap() - want).abs() < 1e-9);
        }
    }
}
