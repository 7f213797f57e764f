//! Smooth steps and the dyadic partitions `{gamma_i^s}` with
//! `sum_i (gamma_i^s)^2 = 1`.
//!
//! Every bump is the square root of a telescoped difference of smooth steps
//! on the `u = log2 x` axis: `(gamma_i^s)^2(2^u) = S(u - c_{i-1}) - S(u - c_i)`.
//! The cut sequence is
//!
//! ```text
//! c_i = 1/s - 1 + i    (i >= 0)
//! c_i = -1/s + i + 1   (i <= -1)
//! ```
//!
//! so `gamma_0^s` has support `[2^{-1/s}, 2^{1/s}]` and plateau
//! `[2^{1-1/s}, 2^{1/s-1}]`, the outer bumps are unit-width dyadic shells and
//! `s = 1` reduces to `c_i = i`. Bump `i` lives near `2^i`:
//! `gamma_i(x) = gamma_0(x / 2^i)` for `s = 1`.

use crate::error::{LabError, Result};

fn flat_exp(u: f64) -> f64 {
    if u > 0.0 {
        (-1.0 / u).exp()
    } else {
        0.0
    }
}

/// `S(u) = e(u) / (e(u) + e(1 - u))` with `e(u) = exp(-1/u)` for `u > 0`.
/// Exactly 0 for `u <= 0` and exactly 1 for `u >= 1`.
pub fn smooth_step(u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    if u >= 1.0 {
        return 1.0;
    }
    let a = flat_exp(u);
    let b = flat_exp(1.0 - u);
    a / (a + b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DyadicPartition {
    s: f64,
    levels: i64,
    /// `cuts[i + levels + 1]` is `c_i` for `i` in `[-levels - 1, levels]`.
    cuts: Vec<f64>,
}

fn cut(s: f64, i: i64) -> f64 {
    let inv = 1.0 / s;
    if i >= 0 {
        inv - 1.0 + i as f64
    } else {
        -inv + i as f64 + 1.0
    }
}

impl DyadicPartition {
    /// Partition with indices `i` in `[-levels, levels]`.
    pub fn build(s: f64, levels: i64) -> Result<Self> {
        if !(s > 0.0 && s <= 1.0) {
            return Err(LabError::InvalidParameter(format!("partition parameter s = {s} outside (0, 1]")));
        }
        if levels < 2 {
            return Err(LabError::InvalidParameter(format!("partition needs L >= 2, got {levels}")));
        }
        let cuts = (-levels - 1..=levels).map(|i| cut(s, i)).collect();
        Ok(Self { s, levels, cuts })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn levels(&self) -> i64 {
        self.levels
    }

    fn cut(&self, i: i64) -> f64 {
        self.cuts[(i + self.levels + 1) as usize]
    }

    fn check(&self, i: i64) -> Result<()> {
        if i.abs() > self.levels {
            Err(LabError::IndexOutOfRange { index: i, levels: self.levels })
        } else {
            Ok(())
        }
    }

    /// `(gamma_i)^2(x)`; callers guarantee `|i| <= L`.
    pub(crate) fn squared_unchecked(&self, i: i64, x: f64) -> f64 {
        if !(x > 0.0) {
            return 0.0;
        }
        let u = x.log2();
        (smooth_step(u - self.cut(i - 1)) - smooth_step(u - self.cut(i))).max(0.0)
    }

    pub fn eval_gamma_squared(&self, i: i64, x: f64) -> Result<f64> {
        self.check(i)?;
        Ok(self.squared_unchecked(i, x))
    }

    pub fn eval_gamma(&self, i: i64, x: f64) -> Result<f64> {
        Ok(self.eval_gamma_squared(i, x)?.sqrt())
    }

    /// Open support `(lo, hi)` of `gamma_i` on the positive half-line.
    pub fn support(&self, i: i64) -> Result<(f64, f64)> {
        self.check(i)?;
        Ok((self.cut(i - 1).exp2(), (self.cut(i) + 1.0).exp2()))
    }

    /// Range of `x` on which the truncated family sums to one.
    pub fn covered_range(&self) -> (f64, f64) {
        ((self.cut(-self.levels - 1) + 1.0).exp2(), self.cut(self.levels).exp2())
    }

    /// Closed plateau on which `gamma_0 = 1`.
    pub fn plateau(&self) -> (f64, f64) {
        ((self.cut(-1) + 1.0).exp2(), self.cut(0).exp2())
    }

    /// `sum_i gamma_i(x)^2` over the truncated index range.
    pub fn sum_of_squares(&self, x: f64) -> f64 {
        (-self.levels..=self.levels).map(|i| self.squared_unchecked(i, x)).sum()
    }
}

/// Cutting function `theta(r) = S(r / r0)`: zero at the origin, equal to one
/// for `r >= r0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutFunction {
    r0: f64,
}

impl CutFunction {
    pub fn new(r0: f64) -> Result<Self> {
        if !(r0 > 0.0 && r0.is_finite()) {
            return Err(LabError::InvalidParameter(format!("cut radius r0 = {r0} must be positive")));
        }
        Ok(Self { r0 })
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn eval(&self, r: f64) -> f64 {
        smooth_step(r.abs() / self.r0)
    }

    /// Smallest integer mode from which `theta = 1`.
    pub fn first_full_mode(&self) -> usize {
        self.r0.ceil() as usize
    }
}

impl Default for CutFunction {
    fn default() -> Self {
        Self { r0: 4.0 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_samples(lo: f64, hi: f64, count: usize) -> Vec<f64> {
        let (a, b) = (lo.log2(), hi.log2());
        (0..count).map(|q| (a + (b - a) * q as f64 / (count - 1) as f64).exp2()).collect()
    }

    #[test]
    fn smooth_step_basics() {
        assert_eq!(smooth_step(-0.3), 0.0);
        assert_eq!(smooth_step(0.0), 0.0);
        assert_eq!(smooth_step(1.0), 1.0);
        assert_eq!(smooth_step(7.0), 1.0);
        assert!((smooth_step(0.5) - 0.5).abs() < 1e-15);
        let mut prev = 0.0;
        for q in 0..=1000 {
            let u = q as f64 / 1000.0;
            let v = smooth_step(u);
            assert!(v >= prev);
            assert!((v + smooth_step(1.0 - u) - 1.0).abs() < 1e-13);
            prev = v;
        }
    }

    #[test]
    fn unit_partition_sums_to_one() {
        let p = DyadicPartition::build(1.0, 6).unwrap();
        let worst = log_samples(2f64.powi(-5), 2f64.powi(5), 1000)
            .into_iter()
            .map(|x| (p.sum_of_squares(x) - 1.0).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-12, "{worst}");
    }

    #[test]
    fn unit_partition_adjacency_and_support() {
        let p = DyadicPartition::build(1.0, 6).unwrap();
        for x in log_samples(2f64.powi(-7), 2f64.powi(7), 1000) {
            assert_eq!(p.eval_gamma(0, x).unwrap() * p.eval_gamma(2, x).unwrap(), 0.0);
        }
        let (lo, hi) = p.support(0).unwrap();
        assert!((lo - 0.5).abs() < 1e-15 && (hi - 2.0).abs() < 1e-15);
        assert_eq!(p.eval_gamma(0, 0.5).unwrap(), 0.0);
        assert_eq!(p.eval_gamma(0, 2.0).unwrap(), 0.0);
        assert_eq!(p.eval_gamma(0, 5.0).unwrap(), 0.0);
    }

    #[test]
    fn gamma_zero_at_one() {
        // Recipe: gamma_0(1)^2 = S(0 - c_{-1}) - S(0 - c_0) = S(1) - S(0) = 1.
        let p = DyadicPartition::build(1.0, 3).unwrap();
        assert_eq!(p.eval_gamma(0, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn unit_family_is_dilated() {
        let p = DyadicPartition::build(1.0, 5).unwrap();
        for x in log_samples(0.1, 10.0, 200) {
            let a = p.eval_gamma(1, x).unwrap();
            let b = p.eval_gamma(0, x / 2.0).unwrap();
            assert!((a - b).abs() < 1e-12);
            let c = p.eval_gamma(3, x).unwrap();
            let d = p.eval_gamma(0, x / 8.0).unwrap();
            assert!((c - d).abs() < 1e-12);
        }
    }

    #[test]
    fn deformed_plateau_and_supports() {
        let p = DyadicPartition::build(0.25, 4).unwrap();
        assert_eq!(p.eval_gamma(0, 8.0).unwrap(), 1.0);
        assert_eq!(p.eval_gamma(0, 1.0 / 8.0).unwrap(), 1.0);
        let (lo, hi) = p.support(0).unwrap();
        assert!((lo - 2f64.powi(-4)).abs() < 1e-15 && (hi - 16.0).abs() < 1e-12);
        let (lo, hi) = p.support(1).unwrap();
        assert!((lo - 8.0).abs() < 1e-12 && (hi - 32.0).abs() < 1e-12);
        let (lo, hi) = p.support(-1).unwrap();
        assert!((lo - 2f64.powi(-5)).abs() < 1e-15 && (hi - 2f64.powi(-3)).abs() < 1e-15);
        for x in log_samples(1.0, 500.0, 300) {
            let a = p.eval_gamma(3, x).unwrap();
            let b = p.eval_gamma(1, x / 4.0).unwrap();
            assert!((a - b).abs() < 1e-12);
            let c = p.eval_gamma(-2, x / 100.0).unwrap();
            let d = p.eval_gamma(-1, 2.0 * x / 100.0).unwrap();
            assert!((c - d).abs() < 1e-12);
        }
    }

    #[test]
    fn deformed_partitions_sum_to_one() {
        for &s in &[1.0, 0.5, 0.25, 0.125] {
            let p = DyadicPartition::build(s, 4).unwrap();
            let (lo, hi) = p.covered_range();
            for x in log_samples(lo, hi, 1000) {
                assert!((p.sum_of_squares(x) - 1.0).abs() < 1e-12, "s = {s}, x = {x}");
            }
            for i in -4..=4i64 {
                for j in -4..=4i64 {
                    if (i - j).abs() >= 2 {
                        for x in log_samples(lo / 4.0, hi * 4.0, 300) {
                            assert_eq!(p.eval_gamma(i, x).unwrap() * p.eval_gamma(j, x).unwrap(), 0.0);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn outer_bumps_leave_every_mode_set() {
        // For fixed i != 0 the sup over integer modes |m| <= N vanishes as s -> 0.
        let n = 256;
        let sup = |s: f64, i: i64| {
            let p = DyadicPartition::build(s, 3).unwrap();
            (0..=n).map(|m| p.eval_gamma(i, m as f64).unwrap()).fold(0.0, f64::max)
        };
        for &i in &[-1i64, 1, 2] {
            assert!(sup(1.0, i) > 0.5 || i < 0);
            assert_eq!(sup(1.0 / 10.0, i), 0.0);
        }
    }

    #[test]
    fn errors() {
        assert!(DyadicPartition::build(0.0, 3).is_err());
        assert!(DyadicPartition::build(1.5, 3).is_err());
        assert!(DyadicPartition::build(0.5, 1).is_err());
        let p = DyadicPartition::build(1.0, 3).unwrap();
        assert_eq!(p.eval_gamma(4, 1.0), Err(LabError::IndexOutOfRange { index: 4, levels: 3 }));
        assert_eq!(p.eval_gamma(0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn cut_function() {
        let theta = CutFunction::default();
        assert_eq!(theta.eval(0.0), 0.0);
        assert_eq!(theta.eval(4.0), 1.0);
        assert_eq!(theta.eval(100.0), 1.0);
        assert!(theta.eval(2.0) > 0.0 && theta.eval(2.0) < 1.0);
        assert_eq!(theta.first_full_mode(), 4);
        assert!(CutFunction::new(0.0).is_err());
    }
}
