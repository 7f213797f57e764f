//! Banded block operators on `l^2(Z) (x) H`, the inverse map `I_0` built from
//! the dyadic partition, and the homotopy `Psi_s` between `Op(a) (x) e_00`
//! and the block-diagonalized quantization.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::numerics::{operator_norm, vector_norm, CircleGrid, FourierOperator, C64, ZERO};
use crate::partition::{CutFunction, DyadicPartition};
use crate::quantize::{op_quantize, t_quantize};
use crate::symbols::{smash, Profile, SymbolExpr};

/// Block operator `sum_{ij} X_ij (x) e_ij` with `i, j` in `[-L, L]`; only
/// nonzero blocks are stored.
#[derive(Debug, Clone)]
pub struct BlockOperator {
    levels: i64,
    grid: CircleGrid,
    blocks: BTreeMap<(i64, i64), FourierOperator>,
}

impl BlockOperator {
    pub fn zeros(levels: i64, grid: &CircleGrid) -> Self {
        Self { levels, grid: *grid, blocks: BTreeMap::new() }
    }

    pub fn levels(&self) -> i64 {
        self.levels
    }

    pub fn grid(&self) -> &CircleGrid {
        &self.grid
    }

    fn check_index(&self, i: i64) -> Result<()> {
        if i.abs() > self.levels {
            return Err(LabError::IndexOutOfRange { index: i, levels: self.levels });
        }
        Ok(())
    }

    /// Stores `op` at `(i, j)`; zero blocks are dropped.
    pub fn insert(&mut self, i: i64, j: i64, op: FourierOperator) -> Result<()> {
        self.check_index(i)?;
        self.check_index(j)?;
        if op.grid() != &self.grid {
            return Err(LabError::DimensionMismatch("block lives on a different grid".into()));
        }
        if op.is_zero() {
            self.blocks.remove(&(i, j));
        } else {
            self.blocks.insert((i, j), op);
        }
        Ok(())
    }

    pub fn block(&self, i: i64, j: i64) -> Option<&FourierOperator> {
        self.blocks.get(&(i, j))
    }

    /// Block `(i, j)`, materializing zeros.
    pub fn block_or_zero(&self, i: i64, j: i64) -> FourierOperator {
        self.block(i, j).cloned().unwrap_or_else(|| FourierOperator::zeros(&self.grid))
    }

    pub fn nonzero_blocks(&self) -> impl Iterator<Item = (&(i64, i64), &FourierOperator)> {
        self.blocks.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Every stored block satisfies `|i - j| <= 1`.
    pub fn is_banded(&self) -> bool {
        self.blocks.keys().all(|(i, j)| (i - j).abs() <= 1)
    }

    pub fn adjoint(&self) -> Self {
        let blocks = self.blocks.iter().map(|(&(i, j), b)| ((j, i), b.adjoint())).collect();
        Self { levels: self.levels, grid: self.grid, blocks }
    }

    /// Difference on the larger of the two index ranges.
    pub fn difference(&self, other: &Self) -> Result<Self> {
        if self.grid != other.grid {
            return Err(LabError::DimensionMismatch("block operators on different grids".into()));
        }
        let mut out = Self::zeros(self.levels.max(other.levels), &self.grid);
        let keys: std::collections::BTreeSet<(i64, i64)> =
            self.blocks.keys().chain(other.blocks.keys()).copied().collect();
        for (i, j) in keys {
            let diff = &self.block_or_zero(i, j) - &other.block_or_zero(i, j);
            out.insert(i, j, diff)?;
        }
        Ok(out)
    }

    /// Applies to a vector given block by block; missing blocks are zero.
    pub fn apply(&self, input: &BTreeMap<i64, Vec<C64>>) -> Result<BTreeMap<i64, Vec<C64>>> {
        let mut out: BTreeMap<i64, Vec<C64>> = BTreeMap::new();
        for (&(i, j), b) in &self.blocks {
            if let Some(v) = input.get(&j) {
                let w = b.apply(v)?;
                let slot = out.entry(i).or_insert_with(|| vec![ZERO; self.grid.dim()]);
                for (s, x) in slot.iter_mut().zip(w) {
                    *s += x;
                }
            }
        }
        Ok(out)
    }

    /// Spectral norm by power iteration on `X^* X` from a fixed start vector.
    pub fn norm(&self) -> Result<f64> {
        if self.is_zero() {
            return Ok(0.0);
        }
        let adj = self.adjoint();
        let d = self.grid.dim();
        let mut v: BTreeMap<i64, Vec<C64>> = (-self.levels..=self.levels)
            .map(|i| {
                let col = (0..d)
                    .map(|q| {
                        let x = (q as f64 + 1.0) * 0.754_877_666 + i as f64 * 0.569_840_291;
                        C64::new(x.sin(), (1.3 * x).cos())
                    })
                    .collect();
                (i, col)
            })
            .collect();
        let mut estimate = 0.0;
        for _ in 0..2000 {
            let len = block_vector_norm(&v);
            if len == 0.0 {
                return Ok(0.0);
            }
            for col in v.values_mut() {
                col.iter_mut().for_each(|z| *z /= len);
            }
            let next = adj.apply(&self.apply(&v)?)?;
            let value = block_vector_norm(&next).sqrt();
            let done = (value - estimate).abs() <= 1e-12 * value;
            estimate = value;
            v = next;
            if done {
                break;
            }
        }
        Ok(estimate)
    }
}

/// Euclidean norm of a block vector.
pub fn block_vector_norm(v: &BTreeMap<i64, Vec<C64>>) -> f64 {
    v.values().map(|col| vector_norm(col).powi(2)).sum::<f64>().sqrt()
}

fn gamma(partition: &Arc<DyadicPartition>, index: i64) -> Profile {
    Profile::Gamma { partition: Arc::clone(partition), index }
}

fn product(factors: Vec<Profile>) -> Profile {
    factors.iter().fold(Profile::Const(1.0), |acc, f| acc.times(f))
}

/// `I_0(a)`: block `(i, j)` is `T_{2^i}(smash(gamma_0 gamma_{j-i}, a))` for `|i - j| <= 1`.
pub fn i0_block_operator(
    a: &SymbolExpr,
    partition: &Arc<DyadicPartition>,
    levels: i64,
    grid: &CircleGrid,
) -> Result<BlockOperator> {
    check_levels(levels)?;
    if partition.s() != 1.0 {
        return Err(LabError::InvalidParameter("I_0 uses the undeformed partition s = 1".into()));
    }
    let mut out = BlockOperator::zeros(levels, grid);
    for i in -levels..=levels {
        for j in (i - 1).max(-levels)..=(i + 1).min(levels) {
            let f = product(vec![gamma(partition, 0), gamma(partition, j - i)]);
            let op = t_quantize(&smash(&f, a)?, 2f64.powi(i as i32), grid)?;
            out.insert(i, j, op)?;
        }
    }
    Ok(out)
}

fn check_levels(levels: i64) -> Result<()> {
    if levels < 2 {
        return Err(LabError::InvalidParameter(format!("block range L = {levels} must be >= 2")));
    }
    Ok(())
}

/// `T_1(gamma_i^s gamma_j^s theta (x) a)`.
fn weighted_block(
    a: &SymbolExpr,
    partition: &Arc<DyadicPartition>,
    i: i64,
    j: i64,
    theta: Option<&CutFunction>,
    grid: &CircleGrid,
) -> Result<FourierOperator> {
    let mut factors = vec![gamma(partition, i), gamma(partition, j)];
    if let Some(theta) = theta {
        factors.push(Profile::Theta(*theta));
    }
    t_quantize(&smash(&product(factors), a)?, 1.0, grid)
}

/// `Psi_s(a) = sum_ij T_1(gamma_i^s gamma_j^s theta (x) a) (x) e_ij`; `s = 0`
/// gives `Op(a) (x) e_00`.
pub fn psi_s(
    a: &SymbolExpr,
    s: f64,
    theta: &CutFunction,
    levels: i64,
    grid: &CircleGrid,
) -> Result<BlockOperator> {
    check_levels(levels)?;
    let mut out = BlockOperator::zeros(levels, grid);
    if s == 0.0 {
        out.insert(0, 0, op_quantize(a, theta, grid)?)?;
        return Ok(out);
    }
    let partition = Arc::new(DyadicPartition::build(s, levels)?);
    for i in -levels..=levels {
        for j in (i - 1).max(-levels)..=(i + 1).min(levels) {
            out.insert(i, j, weighted_block(a, &partition, i, j, Some(theta), grid)?)?;
        }
    }
    Ok(out)
}

/// `||T_1((gamma_0^s)^2 theta (x) a) f - Op(a) f||`.
pub fn equ1_defect(a: &SymbolExpr, s: f64, f: &[C64], theta: &CutFunction, grid: &CircleGrid) -> Result<f64> {
    let partition = Arc::new(DyadicPartition::build(s, 2)?);
    let block = weighted_block(a, &partition, 0, 0, Some(theta), grid)?;
    let op = op_quantize(a, theta, grid)?;
    let lhs = block.apply(f)?;
    let rhs = op.apply(f)?;
    let diff: Vec<C64> = lhs.iter().zip(&rhs).map(|(x, y)| x - y).collect();
    Ok(vector_norm(&diff))
}

/// `||T_1(gamma_i^s gamma_j^s theta (x) a) f||` for `(i, j) != (0, 0)`.
#[allow(clippy::too_many_arguments)]
pub fn equ2_defect(
    a: &SymbolExpr,
    s: f64,
    i: i64,
    j: i64,
    f: &[C64],
    theta: &CutFunction,
    grid: &CircleGrid,
) -> Result<f64> {
    if (i, j) == (0, 0) {
        return Err(LabError::InvalidParameter("equ2 excludes the (0, 0) block".into()));
    }
    if (i - j).abs() > 1 {
        return Err(LabError::InvalidParameter(format!("blocks ({i}, {j}) are not adjacent")));
    }
    let partition = Arc::new(DyadicPartition::build(s, i.abs().max(j.abs()).max(2))?);
    let block = weighted_block(a, &partition, i, j, Some(theta), grid)?;
    Ok(vector_norm(&block.apply(f)?))
}

/// `Psi_s(a)` applied to `f` placed in block 0.
pub fn psi_apply(
    a: &SymbolExpr,
    s: f64,
    f: &[C64],
    theta: &CutFunction,
    levels: i64,
    grid: &CircleGrid,
) -> Result<BTreeMap<i64, Vec<C64>>> {
    let psi = psi_s(a, s, theta, levels, grid)?;
    psi.apply(&BTreeMap::from([(0, f.to_vec())]))
}

/// Distance between two block vectors.
pub fn block_vector_distance(x: &BTreeMap<i64, Vec<C64>>, y: &BTreeMap<i64, Vec<C64>>) -> f64 {
    let keys: std::collections::BTreeSet<i64> = x.keys().chain(y.keys()).copied().collect();
    keys.into_iter()
        .map(|k| match (x.get(&k), y.get(&k)) {
            (Some(u), Some(v)) => u.iter().zip(v).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>(),
            (Some(u), None) | (None, Some(u)) => vector_norm(u).powi(2),
            (None, None) => 0.0,
        })
        .sum::<f64>()
        .sqrt()
}

/// Lowest block index whose modes all lie beyond `K`.
pub fn tail_start(cutoff: usize) -> i64 {
    (cutoff.max(1) as f64).log2().floor() as i64 + 1
}

/// Pieces of the comparison between `Psi_1` and `I_0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EndpointReport {
    pub levels: i64,
    pub cutoff: usize,
    /// Sum of blockwise norms of `Psi_1 - I_0` over `max(|i|, |j|) >= i_0(K)`,
    /// with `I_0` taken over every block that meets the grid.
    pub aggregate: f64,
    /// `max ||T_1(gamma_i gamma_j theta a) - T_1(gamma_i gamma_j a)||` over `i >= log2(2 r_0)`.
    pub theta_identity: f64,
    /// `max ||T_{2^i}(gamma_0 gamma_{j-i} a) - T_1(gamma_i gamma_j a)||` over all blocks.
    pub translation_identity: f64,
}

/// Largest block index whose support still meets the modes `|n| <= N`.
pub fn active_levels(grid: &CircleGrid) -> i64 {
    (grid.cutoff() as f64).log2().ceil() as i64 + 2
}

/// Modulo-compact distance between `Psi_1(a)` truncated at `L` and `I_0(a)`.
pub fn endpoint_defect(
    a: &SymbolExpr,
    levels: i64,
    cutoff: usize,
    theta: &CutFunction,
    grid: &CircleGrid,
) -> Result<EndpointReport> {
    check_levels(levels)?;
    let full = active_levels(grid).max(levels);
    let partition = Arc::new(DyadicPartition::build(1.0, full + 1)?);
    let reference = i0_block_operator(a, &partition, full, grid)?;
    let psi = psi_s(a, 1.0, theta, levels, grid)?;
    let diff = psi.difference(&reference)?;
    let start = tail_start(cutoff);
    let mut aggregate = 0.0;
    for (&(i, j), block) in diff.nonzero_blocks() {
        if i.abs().max(j.abs()) >= start {
            aggregate += operator_norm(block);
        }
    }
    let theta_start = (2.0 * theta.r0()).log2().ceil() as i64;
    let mut theta_identity = 0.0f64;
    let mut translation_identity = 0.0f64;
    for i in -full..=full {
        for j in (i - 1).max(-full)..=(i + 1).min(full) {
            let plain = weighted_block(a, &partition, i, j, None, grid)?;
            if i >= theta_start {
                let cut = weighted_block(a, &partition, i, j, Some(theta), grid)?;
                theta_identity = theta_identity.max(cut.max_abs_diff(&plain));
            }
            translation_identity = translation_identity.max(reference.block_or_zero(i, j).max_abs_diff(&plain));
        }
    }
    Ok(EndpointReport { levels, cutoff, aggregate, theta_identity, translation_identity })
}

/// `||X_ij - X_ji^*||` per block `(i, j)` with `i <= j`, for checking
/// self-adjointness of `Psi_s(a)` at `a = a^*`.
pub fn self_adjointness_by_block(psi: &BlockOperator) -> BTreeMap<(i64, i64), f64> {
    let mut out = BTreeMap::new();
    for (&(i, j), block) in psi.nonzero_blocks() {
        if i <= j {
            let mirror = psi.block_or_zero(j, i).adjoint();
            out.insert((i, j), operator_norm(&(block - &mirror)));
        }
    }
    out
}
