//! Dense row-major state-by-action tables and the policy type built on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on row sums of a policy.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Smallest probability the solver keeps in a policy row. Used whenever a
/// logarithm or a dual coordinate of a policy entry has to be evaluated.
pub const POLICY_FLOOR: f64 = 1e-300;

/// A dense `rows x cols` table stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Table {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "table of {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Frobenius norm of `self - other`.
    pub fn frobenius_distance(&self, other: &Table) -> f64 {
        debug_assert_eq!(self.data.len(), other.data.len());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    fn same_shape(&self, other: &Table) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }
}

/// A row-stochastic policy table `pi[s][a]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Policy(Table);

impl Policy {
    /// Wraps a table after checking it is row-stochastic with positive entries.
    pub fn new(table: Table) -> Result<Self> {
        check_stochastic(&table, true)?;
        Ok(Self(table))
    }

    /// Wraps a table without checks. Used by update rules that produce
    /// stochastic rows by construction.
    pub(crate) fn from_table_unchecked(table: Table) -> Self {
        Self(table)
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Self(Table::filled(
            num_states,
            num_actions,
            1.0 / num_actions as f64,
        ))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Table::from_rows(rows)?)
    }

    pub fn num_states(&self) -> usize {
        self.0.rows()
    }

    pub fn num_actions(&self) -> usize {
        self.0.cols()
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.0.get(s, a)
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        self.0.row(s)
    }

    pub fn table(&self) -> &Table {
        &self.0
    }

    pub fn into_table(self) -> Table {
        self.0
    }

    /// Relative change `||new - self||_F / ||self||_F`.
    pub fn relative_change(&self, new: &Policy) -> f64 {
        self.0.frobenius_distance(&new.0) / self.0.frobenius_norm()
    }

    /// Checks row sums against [`ROW_SUM_TOL`] and strict positivity.
    pub fn check(&self) -> Result<()> {
        check_stochastic(&self.0, true)
    }

    pub(crate) fn check_shape(&self, other: &Table) -> Result<()> {
        if self.0.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "policy is {}x{}, table is {}x{}",
                self.0.rows(),
                self.0.cols(),
                other.rows(),
                other.cols()
            )))
        }
    }
}

pub(crate) fn check_stochastic(table: &Table, strictly_positive: bool) -> Result<()> {
    for s in 0..table.rows() {
        let row = table.row(s);
        if let Some(a) = row
            .iter()
            .position(|&p| !p.is_finite() || p < 0.0 || (strictly_positive && p <= 0.0))
        {
            return Err(Error::InvalidPolicy(format!(
                "entry ({s}, {a}) = {} is not a positive probability",
                row[a]
            )));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::InvalidPolicy(format!("row {s} sums to {sum}")));
        }
    }
    Ok(())
}
