//! Quantization of symbols to Fourier matrices.
//!
//! Entries use the left (Kohn-Nirenberg) ordering: column mode `m` is first
//! weighted by the fiber value at `m / t`, then multiplied by the `x`-dependent
//! coefficients. For a separable term `c(x) rho(xi)` the `(n, m)` block is
//! `c_{n-m} rho(m / t)`.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::error::{LabError, Result};
use crate::numerics::{CircleGrid, FourierOperator, C64, ZERO};
use crate::partition::{smooth_step, CutFunction};
use crate::symbols::{MatLoop, SymbolExpr, Term};

fn check_t(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(LabError::InvalidParameter(format!("t = {t} must be positive")));
    }
    Ok(())
}

fn check_size(a: &SymbolExpr, grid: &CircleGrid) -> Result<()> {
    if a.size() != grid.block() {
        return Err(LabError::DimensionMismatch(format!(
            "{0}x{0} symbol on a grid with block size {1}",
            a.size(),
            grid.block()
        )));
    }
    Ok(())
}

/// Adds `weight(m) * c_{n-m}` into every block `(n, m)` inside the grid.
fn accumulate_band(op: &mut FourierOperator, coeff: &MatLoop, weight: impl Fn(i64) -> f64) {
    let grid = *op.grid();
    let k = grid.block();
    for m in grid.modes() {
        let w = weight(m);
        if w == 0.0 {
            continue;
        }
        for (q, c) in coeff.modes() {
            let n = m + q;
            if !grid.contains_mode(n) {
                continue;
            }
            for col in 0..k {
                for row in 0..k {
                    let v = c[(row, col)];
                    if v != ZERO {
                        op.add_to_entry(n, row, m, col, v * w);
                    }
                }
            }
        }
    }
}

/// `T_t(a)`: column mode `m` weighted by `a(x, m / t)`.
pub fn t_quantize(a: &SymbolExpr, t: f64, grid: &CircleGrid) -> Result<FourierOperator> {
    check_t(t)?;
    check_size(a, grid)?;
    let mut op = FourierOperator::zeros(grid);
    for Term { coeff, profile } in a.terms() {
        accumulate_band(&mut op, &coeff, |m| profile.eval(m as f64 / t));
    }
    Ok(op)
}

/// `Op(a)`: column mode `m` weighted by `a_{sign m}(x) theta(|m|)`; column 0 vanishes.
pub fn op_quantize(a: &SymbolExpr, theta: &CutFunction, grid: &CircleGrid) -> Result<FourierOperator> {
    check_size(a, grid)?;
    let (plus, minus) = a.require_homogeneous()?;
    let mut op = FourierOperator::zeros(grid);
    accumulate_band(&mut op, &plus, |m| if m > 0 { theta.eval(m as f64) } else { 0.0 });
    accumulate_band(&mut op, &minus, |m| if m < 0 { theta.eval(m as f64) } else { 0.0 });
    Ok(op)
}

/// `pi(c)`: multiplication by the loop `c`, exact blocks `c_{n-m}`.
pub fn multiplication_operator(c: &MatLoop, grid: &CircleGrid) -> Result<FourierOperator> {
    if c.size() != grid.block() {
        return Err(LabError::DimensionMismatch(format!(
            "{0}x{0} loop on a grid with block size {1}",
            c.size(),
            grid.block()
        )));
    }
    if c.degree() > grid.cutoff() {
        return Err(LabError::DegreeTooLarge { degree: c.degree(), cutoff: grid.cutoff() });
    }
    let mut op = FourierOperator::zeros(grid);
    accumulate_band(&mut op, c, |_| 1.0);
    Ok(op)
}

/// Runs `build` on a grid padded by `pad` modes and compresses the product
/// of the two results back, so that no intermediate mode is truncated.
pub fn padded_product(
    grid: &CircleGrid,
    pad: usize,
    build: impl Fn(&CircleGrid) -> Result<(FourierOperator, FourierOperator)>,
) -> Result<FourierOperator> {
    let big = grid.padded(pad);
    let (x, y) = build(&big)?;
    (&x * &y).compress(grid)
}

/// `T_t(a) T_t(b)` without truncation artifacts at the mode boundary.
pub fn t_quantize_product(a: &SymbolExpr, b: &SymbolExpr, t: f64, grid: &CircleGrid) -> Result<FourierOperator> {
    padded_product(grid, a.degree() + b.degree() + 1, |g| Ok((t_quantize(a, t, g)?, t_quantize(b, t, g)?)))
}

/// `||T_t(ab) - T_t(a) T_t(b)||`.
pub fn multiplicativity_defect(a: &SymbolExpr, b: &SymbolExpr, t: f64, grid: &CircleGrid) -> Result<f64> {
    let ab = t_quantize(&a.pointwise_mul(b)?, t, grid)?;
    let prod = t_quantize_product(a, b, t, grid)?;
    Ok(crate::numerics::operator_norm(&(&ab - &prod)))
}

/// `||T_t(a)^* - T_t(a^*)||`.
pub fn adjoint_defect(a: &SymbolExpr, t: f64, grid: &CircleGrid) -> Result<f64> {
    let lhs = t_quantize(a, t, grid)?.adjoint();
    let rhs = t_quantize(&a.adjoint(), t, grid)?;
    Ok(crate::numerics::operator_norm(&(&lhs - &rhs)))
}

/// Cutoff `1 - S((d - plateau) / ramp)` in the circular distance `d` to a chart center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialCutoff {
    pub plateau: f64,
    pub ramp: f64,
}

impl RadialCutoff {
    pub fn eval(&self, d: f64) -> f64 {
        if d <= self.plateau {
            1.0
        } else {
            1.0 - smooth_step((d - self.plateau) / self.ramp)
        }
    }

    /// Distance beyond which the cutoff vanishes.
    pub fn reach(&self) -> f64 {
        self.plateau + self.ramp
    }
}

/// An arc `|x - center| < half_width` with its partition function `phi` and
/// plateau function `psi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chart {
    pub center: f64,
    pub half_width: f64,
    pub phi: RadialCutoff,
    pub psi: RadialCutoff,
}

/// Circular distance to `center`, in `[0, pi]`.
fn circular_distance(x: f64, center: f64) -> f64 {
    let d = (x - center).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

impl Chart {
    pub fn phi_at(&self, x: f64) -> f64 {
        self.phi.eval(circular_distance(x, self.center))
    }

    pub fn psi_at(&self, x: f64) -> f64 {
        self.psi.eval(circular_distance(x, self.center))
    }
}

/// Finite atlas of the circle with a subordinate partition of unity.
#[derive(Debug, Clone, PartialEq)]
pub struct Atlas {
    charts: Vec<Chart>,
}

impl Atlas {
    /// Arcs of length `3 pi / 2` centered at `0` and `pi`.
    pub fn two_arcs() -> Self {
        let phi = RadialCutoff { plateau: 3.0 * PI / 8.0, ramp: PI / 4.0 };
        let psi = RadialCutoff { plateau: 5.0 * PI / 8.0, ramp: PI / 16.0 };
        let chart = |center| Chart { center, half_width: 3.0 * PI / 4.0, phi, psi };
        Self { charts: vec![chart(0.0), chart(PI)] }
    }

    /// The whole circle as one chart with `phi = psi = 1`.
    pub fn single_chart() -> Self {
        let one = RadialCutoff { plateau: PI, ramp: 1.0 };
        Self { charts: vec![Chart { center: 0.0, half_width: PI, phi: one, psi: one }] }
    }

    pub fn from_charts(charts: Vec<Chart>) -> Self {
        Self { charts }
    }

    pub fn charts(&self) -> &[Chart] {
        &self.charts
    }

    /// Checks the partition and plateau identities at the grid points.
    pub fn validate(&self, grid: &CircleGrid) -> Result<()> {
        if self.charts.is_empty() {
            return Err(LabError::InvalidAtlas("no charts".into()));
        }
        let spacing = 2.0 * PI / grid.samples() as f64;
        for (i, ch) in self.charts.iter().enumerate() {
            let steps = ch.center / spacing;
            if (steps - steps.round()).abs() > 1e-9 {
                return Err(LabError::InvalidAtlas(format!("chart {i} center is not a grid point")));
            }
            if self.charts.len() > 1 && ch.half_width >= PI {
                return Err(LabError::InvalidAtlas(format!("chart {i} covers the whole circle")));
            }
            if ch.psi.reach() > ch.half_width + 1e-12 && ch.half_width < PI {
                return Err(LabError::InvalidAtlas(format!("psi of chart {i} leaves the chart")));
            }
        }
        for x in grid.points() {
            let mut total = 0.0;
            for (i, ch) in self.charts.iter().enumerate() {
                let (phi, psi) = (ch.phi_at(x), ch.psi_at(x));
                if phi < 0.0 {
                    return Err(LabError::InvalidAtlas(format!("phi of chart {i} is negative")));
                }
                if (psi * phi - phi).abs() > 1e-13 {
                    return Err(LabError::InvalidAtlas(format!("psi phi != phi on chart {i} at x = {x}")));
                }
                total += phi;
            }
            if (total - 1.0).abs() > 1e-13 {
                return Err(LabError::InvalidAtlas(format!("partition sums to {total} at x = {x}")));
            }
        }
        Ok(())
    }
}

impl Default for Atlas {
    fn default() -> Self {
        Self::two_arcs()
    }
}

/// Ratio between the chart box and the circle; the box keeps the circle's spacing.
const BOX_PERIODS: usize = 4;

struct FftPair {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl FftPair {
    fn new(planner: &mut FftPlanner<f64>, len: usize) -> Self {
        Self { forward: planner.plan_fft_forward(len), inverse: planner.plan_fft_inverse(len) }
    }
}

/// Chart-assembled quantization `f -> sum_k T_{psi_k a, t}(phi_k f)`.
///
/// Each chart works in its arc coordinate `y = x - center`, extended by zero
/// to a periodic box `BOX_PERIODS` times longer than the circle with the same
/// spacing, so the fiber variable is sampled at `xi = l / BOX_PERIODS`.
pub fn t_quantize_charts(a: &SymbolExpr, t: f64, atlas: &Atlas, grid: &CircleGrid) -> Result<FourierOperator> {
    check_t(t)?;
    check_size(a, grid)?;
    atlas.validate(grid)?;
    let terms = a.terms();
    let j = grid.samples();
    let big = BOX_PERIODS * j;
    let half = big / 2;
    let h = 2.0 * PI / j as f64;
    let mut planner = FftPlanner::new();
    let boxed = FftPair::new(&mut planner, big);
    let circle = FftPair::new(&mut planner, j);
    let xi: Vec<f64> = (0..big)
        .map(|l| if l < half { l as f64 } else { l as f64 - big as f64 } / BOX_PERIODS as f64)
        .collect();
    let mut op = FourierOperator::zeros(grid);
    let k = grid.block();
    let max_deg = terms.iter().map(|t| t.coeff.degree()).max().unwrap_or(0) as i64;
    let reach = grid.cutoff() as i64 + max_deg;

    for chart in atlas.charts() {
        let shift = (chart.center / h).round() as i64;
        // box index for circle sample x_jj, and the chart coordinate y in [-pi, pi)
        let slots: Vec<(usize, f64)> = (0..j)
            .map(|jj| {
                let q = (jj as i64 - shift).rem_euclid(j as i64);
                let q = if q >= (j / 2) as i64 { q - j as i64 } else { q };
                (q.rem_euclid(big as i64) as usize, q as f64 * h)
            })
            .collect();
        let phi: Vec<f64> = (0..j).map(|jj| chart.phi_at(grid.point(jj))).collect();
        let psi: Vec<f64> = (0..j).map(|jj| chart.psi_at(grid.point(jj))).collect();
        let weights: Vec<Vec<f64>> =
            terms.iter().map(|term| xi.iter().map(|&z| term.profile.eval(z / t)).collect()).collect();

        let mut buf = vec![ZERO; big];
        let mut filtered = vec![ZERO; big];
        let mut back = vec![ZERO; j];
        for m in grid.modes() {
            buf.iter_mut().for_each(|z| *z = ZERO);
            for (jj, &(slot, _)) in slots.iter().enumerate() {
                if phi[jj] != 0.0 {
                    buf[slot] = C64::from_polar(phi[jj], m as f64 * grid.point(jj));
                }
            }
            boxed.forward.process(&mut buf);
            for (term, w) in terms.iter().zip(&weights) {
                for ((f, b), &wl) in filtered.iter_mut().zip(&buf).zip(w) {
                    *f = *b * wl;
                }
                boxed.inverse.process(&mut filtered);
                let norm = 1.0 / big as f64;
                for (jj, &(slot, _)) in slots.iter().enumerate() {
                    back[jj] = filtered[slot] * (psi[jj] * norm);
                }
                circle.forward.process(&mut back);
                let coeff_of = |p: i64| back[p.rem_euclid(j as i64) as usize] / j as f64;
                for n in grid.modes() {
                    for (q, c) in term.coeff.modes() {
                        let p = n - q;
                        if p.abs() > reach {
                            continue;
                        }
                        let u = coeff_of(p);
                        if u == ZERO {
                            continue;
                        }
                        for col in 0..k {
                            for row in 0..k {
                                let v = c[(row, col)];
                                if v != ZERO {
                                    op.add_to_entry(n, row, m, col, v * u);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(op)
}

/// `||t_quantize_charts(a, t) - t_quantize(a, t)||`.
pub fn chart_defect(a: &SymbolExpr, t: f64, atlas: &Atlas, grid: &CircleGrid) -> Result<f64> {
    let charts = t_quantize_charts(a, t, atlas, grid)?;
    let global = t_quantize(a, t, grid)?;
    Ok(crate::numerics::operator_norm(&(&charts - &global)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{compact_tail_norm, operator_norm};
    use crate::symbols::{Profile, SymbolClass};
    use faer::Mat;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_loop(rng: &mut ChaCha8Rng, size: usize, degree: i64) -> MatLoop {
        let modes: Vec<(i64, Mat<C64>)> = (-degree..=degree)
            .map(|n| {
                (n, Mat::from_fn(size, size, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))))
            })
            .collect();
        MatLoop::from_modes(size, &modes)
    }

    fn bump(rng: &mut ChaCha8Rng, size: usize) -> SymbolExpr {
        SymbolExpr::new(
            size,
            vec![
                Term { coeff: random_loop(rng, size, 2), profile: Profile::Bump { center: 0.5, half_width: 2.0 } },
                Term { coeff: random_loop(rng, size, 1), profile: Profile::RationalDecay { scale: 1.5 } },
            ],
            SymbolClass::FullC0,
        )
        .unwrap()
    }

    #[test]
    fn fiber_only_symbol_is_diagonal() {
        let grid = CircleGrid::with_cutoff(16, 2).unwrap();
        let rho = Profile::RationalDecay { scale: 2.0 };
        let a = SymbolExpr::new(2, vec![Term { coeff: MatLoop::identity(2), profile: rho.clone() }], SymbolClass::FullC0)
            .unwrap();
        let op = t_quantize(&a, 3.0, &grid).unwrap();
        let expected = FourierOperator::mode_diagonal(&grid, |n| C64::new(rho.eval(n as f64 / 3.0), 0.0));
        assert_eq!(op.max_abs_diff(&expected), 0.0);
    }

    #[test]
    fn fiber_independent_symbol_is_toeplitz() {
        let grid = CircleGrid::with_cutoff(12, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = random_loop(&mut rng, 1, 3);
        let a = SymbolExpr::fiber_independent(c.clone());
        let pi = multiplication_operator(&c, &grid).unwrap();
        for t in [0.5, 1.0, 7.0] {
            assert_eq!(t_quantize(&a, t, &grid).unwrap().max_abs_diff(&pi), 0.0);
        }
        assert_eq!(pi.entry(5, 0, 3, 0), c.coeff(2).unwrap()[(0, 0)]);
        assert!(t_quantize(&a, 0.0, &grid).is_err());
        assert!(t_quantize(&a, -1.0, &grid).is_err());
    }

    #[test]
    fn translation_invariance() {
        let grid = CircleGrid::with_cutoff(24, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = bump(&mut rng, 2);
        for t in [1.0, 4.0, 10.0] {
            for s in [0.5, 2.0, 3.0] {
                let lhs = t_quantize(&a, t * s, &grid).unwrap();
                let rhs = t_quantize(&a.dilate(s).unwrap(), t, &grid).unwrap();
                assert!(lhs.max_abs_diff(&rhs) < 1e-13);
            }
        }
    }

    #[test]
    fn linearity() {
        let grid = CircleGrid::with_cutoff(10, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (a, b) = (bump(&mut rng, 1), bump(&mut rng, 1));
        let alpha = C64::new(0.3, -1.2);
        let lhs = t_quantize(&a.scale(alpha).add(&b).unwrap(), 2.0, &grid).unwrap();
        let rhs = &t_quantize(&a, 2.0, &grid).unwrap().scale(alpha) + &t_quantize(&b, 2.0, &grid).unwrap();
        assert!(lhs.max_abs_diff(&rhs) < 1e-14);
    }

    #[test]
    fn op_examples() {
        let grid = CircleGrid::with_cutoff(20, 2).unwrap();
        let theta = CutFunction::default();
        let unit = op_quantize(&SymbolExpr::unit(2), &theta, &grid).unwrap();
        let expected = FourierOperator::mode_diagonal(&grid, |n| C64::new(theta.eval(n as f64), 0.0));
        assert_eq!(unit.max_abs_diff(&expected), 0.0);

        let sign = SymbolExpr::homogeneous(MatLoop::identity(2), MatLoop::identity(2).scale(C64::new(-1.0, 0.0))).unwrap();
        let op = op_quantize(&sign, &theta, &grid).unwrap();
        let expected =
            FourierOperator::mode_diagonal(&grid, |n| C64::new(n.signum() as f64 * theta.eval(n as f64), 0.0));
        assert_eq!(op.max_abs_diff(&expected), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let c = random_loop(&mut rng, 2, 3);
        let op = op_quantize(&SymbolExpr::fiber_constant(c.clone()), &theta, &grid).unwrap();
        let diff = &op - &multiplication_operator(&c, &grid).unwrap();
        for n in grid.modes() {
            for m in grid.modes() {
                if m.unsigned_abs() as usize >= theta.first_full_mode() {
                    assert_eq!(diff.entry(n, 0, m, 1), ZERO);
                }
            }
        }
        let bad = bump(&mut rng, 2);
        assert!(matches!(op_quantize(&bad, &theta, &grid), Err(LabError::WrongClass { .. })));
    }

    #[test]
    fn multiplication_examples() {
        let grid = CircleGrid::with_cutoff(20, 2).unwrap();
        assert_eq!(
            multiplication_operator(&MatLoop::identity(2), &grid).unwrap().max_abs_diff(&FourierOperator::identity(&grid)),
            0.0
        );
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let c = random_loop(&mut rng, 2, 2);
        let d = random_loop(&mut rng, 2, 3);
        let pc = multiplication_operator(&c, &grid).unwrap();
        assert_eq!(pc.adjoint().max_abs_diff(&multiplication_operator(&c.adjoint(), &grid).unwrap()), 0.0);
        let prod = &pc * &multiplication_operator(&d, &grid).unwrap();
        let diff = &prod - &multiplication_operator(&c.mul(&d).unwrap(), &grid).unwrap();
        // the truncation defect lives on the boundary band only
        let inner = grid.truncated(20 - 5).unwrap();
        assert!(operator_norm(&diff.compress(&inner).unwrap()) < 1e-13);
        assert!(operator_norm(&diff) > 1e-3);
        assert!((compact_tail_norm(&diff, 20 - 5).unwrap() - operator_norm(&diff)).abs() < 1e-12);
        let huge = MatLoop::monomial(2, 21);
        assert!(matches!(multiplication_operator(&huge, &grid), Err(LabError::DegreeTooLarge { .. })));
    }

    #[test]
    fn atlas_identities() {
        let grid = CircleGrid::with_cutoff(32, 1).unwrap();
        Atlas::two_arcs().validate(&grid).unwrap();
        Atlas::single_chart().validate(&grid).unwrap();
        let mut bad = Atlas::two_arcs();
        bad.charts[1].phi.plateau = 0.2;
        assert!(matches!(bad.validate(&grid), Err(LabError::InvalidAtlas(_))));
    }

    #[test]
    fn chart_examples() {
        let grid = CircleGrid::with_cutoff(16, 1).unwrap();
        let zero = SymbolExpr::zero(1, SymbolClass::CompactSupport);
        assert!(t_quantize_charts(&zero, 2.0, &Atlas::two_arcs(), &grid).unwrap().is_zero());

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = SymbolExpr::fiber_independent(random_loop(&mut rng, 1, 2));
        let charts = t_quantize_charts(&a, 3.0, &Atlas::single_chart(), &grid).unwrap();
        assert!(charts.max_abs_diff(&t_quantize(&a, 3.0, &grid).unwrap()) < 1e-13);
    }

    #[test]
    fn chart_defect_decays() {
        let grid = CircleGrid::with_cutoff(32, 1).unwrap();
        let a = SymbolExpr::new(
            1,
            vec![Term {
                coeff: MatLoop::from_modes(1, &[(1, Mat::identity(1, 1)), (0, Mat::identity(1, 1))]),
                profile: Profile::Bump { center: 0.0, half_width: 4.0 },
            }],
            SymbolClass::CompactSupport,
        )
        .unwrap();
        let d: Vec<f64> = [1.0, 4.0, 16.0]
            .iter()
            .map(|&t| chart_defect(&a, t, &Atlas::two_arcs(), &grid).unwrap())
            .collect();
        assert!(d[1] < d[0] && d[2] < d[1], "{d:?}");
    }
}
