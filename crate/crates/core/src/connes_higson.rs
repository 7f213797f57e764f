//! Connes-Higson asymptotic morphism for the pseudodifferential extension,
//! built from a diagonal quasicentral approximate unit, and its extension to
//! the whole of `C_0(T*S^1)` through multiplication operators.

use crate::error::{LabError, Result};
use crate::numerics::{operator_norm, CircleGrid, FourierOperator, C64};
use crate::partition::{smooth_step, CutFunction};
use crate::quantize::{multiplication_operator, op_quantize, padded_product, t_quantize};
use crate::symbols::{smash, Profile, SymbolExpr, Term};

/// `kappa(v) = 1 / v - 1`, a decreasing homeomorphism `(0, 1] -> [0, inf)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Reparametrization;

impl Reparametrization {
    pub fn kappa(&self, v: f64) -> f64 {
        1.0 / v - 1.0
    }

    pub fn kappa_inv(&self, r: f64) -> f64 {
        1.0 / (1.0 + r)
    }

    /// `(f o kappa)(v)`, extended by `f(inf) = 0` at `v = 0`.
    pub fn compose(&self, f: &Profile, v: f64) -> f64 {
        if v <= 0.0 {
            0.0
        } else {
            f.eval(self.kappa(v))
        }
    }
}

/// Diagonal approximate unit `u_t = m_t(|n| / t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ApproximateUnit {
    /// `m = kappa^{-1}`, so that `(f o kappa)(u_t) = f(|n| / t)`.
    Canonical,
    /// `kappa^{-1}(r) (1 - S((r - R t) / (R t)))`: finite rank at every `t`,
    /// norm-convergent to the canonical unit.
    FiniteRank { reach: f64 },
}

impl Default for ApproximateUnit {
    fn default() -> Self {
        ApproximateUnit::Canonical
    }
}

impl ApproximateUnit {
    /// Profile `m_t(r)`, with `r = |n| / t`.
    pub fn profile(&self, r: f64, t: f64) -> f64 {
        let base = Reparametrization.kappa_inv(r);
        match *self {
            ApproximateUnit::Canonical => base,
            ApproximateUnit::FiniteRank { reach } => {
                let cut = reach * t;
                base * (1.0 - smooth_step((r - cut) / cut))
            }
        }
    }

    fn diagonal(&self, t: f64, grid: &CircleGrid, weight: impl Fn(f64) -> f64) -> FourierOperator {
        FourierOperator::mode_diagonal(grid, |n| C64::new(weight(self.profile(n.abs() as f64 / t, t)), 0.0))
    }

    /// `u_t` on the grid.
    pub fn operator(&self, t: f64, grid: &CircleGrid) -> Result<FourierOperator> {
        check_t(t)?;
        Ok(self.diagonal(t, grid, |v| v))
    }

    /// `(f o kappa)(u_t)`, computed entrywise on the diagonal.
    pub fn functional_calculus(
        &self,
        f: &Profile,
        kappa: &Reparametrization,
        t: f64,
        grid: &CircleGrid,
    ) -> Result<FourierOperator> {
        check_t(t)?;
        Ok(self.diagonal(t, grid, |v| kappa.compose(f, v)))
    }
}

fn check_t(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(LabError::InvalidParameter(format!("t = {t} must be positive")));
    }
    Ok(())
}

fn check_origin(f: &Profile) -> Result<()> {
    let v = f.eval(0.0);
    if v.abs() > 1e-14 {
        return Err(LabError::NonzeroAtOrigin(v));
    }
    Ok(())
}

/// `||[u_t, Op(a)]||`.
pub fn quasicentrality_defect(
    unit: &ApproximateUnit,
    t: f64,
    a: &SymbolExpr,
    theta: &CutFunction,
    grid: &CircleGrid,
) -> Result<f64> {
    let u = unit.operator(t, grid)?;
    let op = op_quantize(a, theta, grid)?;
    Ok(operator_norm(&(&(&u * &op) - &(&op * &u))))
}

/// `CH_t(f (x) d) = Op(d) (f o kappa)(u_t)`.
pub fn ch_apply(
    f: &Profile,
    d: &SymbolExpr,
    t: f64,
    kappa: &Reparametrization,
    unit: &ApproximateUnit,
    theta: &CutFunction,
    grid: &CircleGrid,
) -> Result<FourierOperator> {
    check_origin(f)?;
    let op = op_quantize(d, theta, grid)?;
    Ok(&op * &unit.functional_calculus(f, kappa, t, grid)?)
}

/// `pi(c) (g o kappa)(u_t)` for a fiber-constant `c`; `g(0)` is unrestricted.
pub fn ch_extended_apply(
    g: &Profile,
    c: &SymbolExpr,
    t: f64,
    kappa: &Reparametrization,
    unit: &ApproximateUnit,
    grid: &CircleGrid,
) -> Result<FourierOperator> {
    let coeff = c.fiber_constant_loop().ok_or(LabError::NotFiberConstant)?;
    let pi = multiplication_operator(&coeff, grid)?;
    Ok(&pi * &unit.functional_calculus(g, kappa, t, grid)?)
}

/// The symbol `g(|xi|) c(x)` matched by the extended branch.
pub fn extended_symbol(g: &Profile, c: &SymbolExpr) -> Result<SymbolExpr> {
    let coeff = c.fiber_constant_loop().ok_or(LabError::NotFiberConstant)?;
    let radial = Profile::Abs(Box::new(g.clone()));
    if !radial.vanishes_at_infinity() {
        return Err(LabError::NotVanishingAtInfinity);
    }
    let class = if radial.support_bound().is_some() {
        crate::symbols::SymbolClass::CompactSupport
    } else {
        crate::symbols::SymbolClass::FullC0
    };
    SymbolExpr::new(c.size(), vec![Term { coeff, profile: radial }], class)
}

/// `||CH_t(f (x) d) - T_t(smash(f, d))||`.
pub fn ch_vs_t(
    f: &Profile,
    d: &SymbolExpr,
    t: f64,
    unit: &ApproximateUnit,
    theta: &CutFunction,
    grid: &CircleGrid,
) -> Result<f64> {
    let ch = ch_apply(f, d, t, &Reparametrization, unit, theta, grid)?;
    let tq = t_quantize(&smash(f, d)?, t, grid)?;
    Ok(operator_norm(&(&ch - &tq)))
}

/// `||CH_t(g (x) c) - T_t(g(|xi|) c(x))||` for the extended branch.
pub fn ch_extended_vs_t(
    g: &Profile,
    c: &SymbolExpr,
    t: f64,
    unit: &ApproximateUnit,
    grid: &CircleGrid,
) -> Result<f64> {
    let ch = ch_extended_apply(g, c, t, &Reparametrization, unit, grid)?;
    let tq = t_quantize(&extended_symbol(g, c)?, t, grid)?;
    Ok(operator_norm(&(&ch - &tq)))
}

/// `||ch_apply(f, c, t) - ch_extended_apply(f, c, t)||` on the common domain.
pub fn branch_compatibility(
    f: &Profile,
    c: &SymbolExpr,
    t: f64,
    unit: &ApproximateUnit,
    theta: &CutFunction,
    grid: &CircleGrid,
) -> Result<f64> {
    let lhs = ch_apply(f, c, t, &Reparametrization, unit, theta, grid)?;
    let rhs = ch_extended_apply(f, c, t, &Reparametrization, unit, grid)?;
    Ok(operator_norm(&(&lhs - &rhs)))
}

/// `||CH_t(ff' (x) dd') - CH_t(f (x) d) CH_t(f' (x) d')||`.
#[allow(clippy::too_many_arguments)]
pub fn ch_multiplicativity_defect(
    f: &Profile,
    d: &SymbolExpr,
    f2: &Profile,
    d2: &SymbolExpr,
    t: f64,
    unit: &ApproximateUnit,
    theta: &CutFunction,
    grid: &CircleGrid,
) -> Result<f64> {
    let kappa = Reparametrization;
    let joint = ch_apply(&f.times(f2), &d.pointwise_mul(d2)?, t, &kappa, unit, theta, grid)?;
    let pad = d.degree() + d2.degree() + 1;
    let prod = padded_product(grid, pad, |g| {
        Ok((ch_apply(f, d, t, &kappa, unit, theta, g)?, ch_apply(f2, d2, t, &kappa, unit, theta, g)?))
    })?;
    Ok(operator_norm(&(&joint - &prod)))
}
