//! The extension of the symbol algebra by the compacts, checked through
//! tail norms: `Op` is multiplicative and `*`-preserving modulo compacts, and
//! on fiber-constant symbols it is lifted by multiplication operators.

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::numerics::{compact_tail_norm, CircleGrid, FourierOperator};
use crate::partition::CutFunction;
use crate::quantize::{multiplication_operator, op_quantize, padded_product, t_quantize};
use crate::symbols::SymbolExpr;

pub const DEFAULT_TOL_COMPACT: f64 = 1e-3;

/// Tail norms of the symbol-map and commutator defects over a cutoff list.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtensionDefectProfile {
    pub cutoffs: Vec<usize>,
    /// `||(Op(a) Op(b) - Op(ab)) (I - P_K)||`.
    pub symbol_tail: Vec<f64>,
    /// `||[Op(a), Op(b)] (I - P_K)||`.
    pub commutator_tail: Vec<f64>,
    /// Both tails at `K = N / 2`.
    pub half_cutoff_tail: (f64, f64),
    pub pass: bool,
}

fn tails(op: &FourierOperator, cutoffs: &[usize]) -> Result<Vec<f64>> {
    cutoffs.iter().map(|&k| compact_tail_norm(op, k)).collect()
}

/// Symbol-map defect and commutator tails of two homogeneous symbols.
/// Products are formed on a padded grid, so only the genuine defect remains.
pub fn symbol_map_defect(
    a: &SymbolExpr,
    b: &SymbolExpr,
    theta: &CutFunction,
    grid: &CircleGrid,
    cutoffs: &[usize],
    tol_compact: f64,
) -> Result<ExtensionDefectProfile> {
    let pad = a.degree() + b.degree() + 1;
    let ab = padded_product(grid, pad, |g| Ok((op_quantize(a, theta, g)?, op_quantize(b, theta, g)?)))?;
    let ba = padded_product(grid, pad, |g| Ok((op_quantize(b, theta, g)?, op_quantize(a, theta, g)?)))?;
    let symbol_defect = &ab - &op_quantize(&a.pointwise_mul(b)?, theta, grid)?;
    let commutator = &ab - &ba;
    let half = grid.cutoff() / 2;
    let half_cutoff_tail = (compact_tail_norm(&symbol_defect, half)?, compact_tail_norm(&commutator, half)?);
    Ok(ExtensionDefectProfile {
        cutoffs: cutoffs.to_vec(),
        symbol_tail: tails(&symbol_defect, cutoffs)?,
        commutator_tail: tails(&commutator, cutoffs)?,
        half_cutoff_tail,
        pass: half_cutoff_tail.0 < tol_compact && half_cutoff_tail.1 < tol_compact,
    })
}

/// `||(Op(c) - pi(c)) (I - P_K)||` at `K = r_0 + deg c`; zero by construction.
pub fn lifting_check(c: &SymbolExpr, theta: &CutFunction, grid: &CircleGrid) -> Result<f64> {
    let coeff = c.fiber_constant_loop().ok_or(LabError::NotFiberConstant)?;
    let diff = &op_quantize(c, theta, grid)? - &multiplication_operator(&coeff, grid)?;
    let cutoff = (theta.first_full_mode() + coeff.degree()).min(grid.cutoff());
    compact_tail_norm(&diff, cutoff)
}

/// Tails of `Op(a)^* - Op(a^*)`.
pub fn adjoint_tail(a: &SymbolExpr, theta: &CutFunction, grid: &CircleGrid, cutoffs: &[usize]) -> Result<Vec<f64>> {
    let diff = &op_quantize(a, theta, grid)?.adjoint() - &op_quantize(&a.adjoint(), theta, grid)?;
    tails(&diff, cutoffs)
}

/// Tails of `T_t(g)`; vanishing-00 symbols land in the compacts.
pub fn ideal_tail(g: &SymbolExpr, t: f64, grid: &CircleGrid, cutoffs: &[usize]) -> Result<Vec<f64>> {
    tails(&t_quantize(g, t, grid)?, cutoffs)
}

/// Whether every entry is at most half its predecessor, with values at the
/// rounding floor `floor` counted as converged.
pub fn halves_or_better(values: &[f64], floor: f64) -> bool {
    values.windows(2).all(|w| w[1] <= floor || w[1] <= 0.5 * w[0])
}
