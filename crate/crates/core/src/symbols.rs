//! Symbols on the cotangent bundle of the circle, `T*S^1 = S^1 x R`, with
//! values in `k x k` complex matrices.
//!
//! A symbol is a finite sum of separable terms `c(x) rho(xi)` where `c` is a
//! matrix-valued trigonometric polynomial ([`MatLoop`]) and `rho` a real
//! radial profile from a fixed vocabulary ([`Profile`]). Order-zero
//! homogeneous symbols are stored as their two restrictions to the cosphere
//! bundle, which on the circle is the pair of loops `xi = +1` and `xi = -1`.

use std::fmt;
use std::sync::Arc;

use faer::Mat;

use crate::error::{LabError, Result};
use crate::numerics::{CircleGrid, C64, ZERO};
use crate::partition::{smooth_step, CutFunction, DyadicPartition};

/// Matrix-valued trigonometric polynomial `sum_{|n| <= d} C_n e^{i n x}`.
#[derive(Clone, PartialEq)]
pub struct MatLoop {
    size: usize,
    degree: usize,
    coeffs: Vec<Mat<C64>>,
}

impl fmt::Debug for MatLoop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MatLoop").field("size", &self.size).field("degree", &self.degree).finish()
    }
}

impl MatLoop {
    pub fn zero(size: usize) -> Self {
        Self { size, degree: 0, coeffs: vec![Mat::zeros(size, size)] }
    }

    pub fn constant(matrix: Mat<C64>) -> Self {
        assert_eq!(matrix.nrows(), matrix.ncols(), "loop coefficients must be square");
        Self { size: matrix.nrows(), degree: 0, coeffs: vec![matrix] }
    }

    pub fn identity(size: usize) -> Self {
        Self::constant(Mat::identity(size, size))
    }

    /// `e^{i n x} I_k`.
    pub fn monomial(size: usize, n: i64) -> Self {
        Self::from_modes(size, &[(n, Mat::identity(size, size))])
    }

    /// Scalar trigonometric polynomial times a fixed matrix: `c(x) M`.
    pub fn scalar_times(coefficients: &[(i64, C64)], matrix: &Mat<C64>) -> Self {
        let modes: Vec<(i64, Mat<C64>)> =
            coefficients.iter().map(|&(n, c)| (n, scaled(matrix, c))).collect();
        Self::from_modes(matrix.nrows(), &modes)
    }

    /// Sums the given `(mode, coefficient)` pairs; repeated modes add up.
    pub fn from_modes(size: usize, modes: &[(i64, Mat<C64>)]) -> Self {
        let degree = modes.iter().map(|(n, _)| n.unsigned_abs() as usize).max().unwrap_or(0);
        let mut coeffs = vec![Mat::zeros(size, size); 2 * degree + 1];
        for (n, m) in modes {
            assert_eq!((m.nrows(), m.ncols()), (size, size), "coefficient size mismatch");
            let slot = &mut coeffs[(*n + degree as i64) as usize];
            *slot = &*slot + m;
        }
        Self { size, degree, coeffs }.trimmed()
    }

    fn trimmed(mut self) -> Self {
        while self.degree > 0 {
            let lo_zero = is_zero_matrix(&self.coeffs[0]);
            let hi_zero = is_zero_matrix(&self.coeffs[2 * self.degree]);
            if !(lo_zero && hi_zero) {
                break;
            }
            self.coeffs.pop();
            self.coeffs.remove(0);
            self.degree -= 1;
        }
        self
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Coefficient of `e^{i n x}`, `None` outside the degree range.
    pub fn coeff(&self, n: i64) -> Option<&Mat<C64>> {
        if n.unsigned_abs() as usize > self.degree {
            None
        } else {
            Some(&self.coeffs[(n + self.degree as i64) as usize])
        }
    }

    pub fn modes(&self) -> impl Iterator<Item = (i64, &Mat<C64>)> {
        let d = self.degree as i64;
        self.coeffs.iter().enumerate().map(move |(q, m)| (q as i64 - d, m))
    }

    pub fn eval(&self, x: f64) -> Mat<C64> {
        let mut out = Mat::zeros(self.size, self.size);
        for (n, c) in self.modes() {
            let phase = C64::from_polar(1.0, n as f64 * x);
            out = &out + &scaled(c, phase);
        }
        out
    }

    pub fn is_constant(&self) -> bool {
        self.degree == 0
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_size(other)?;
        let modes: Vec<(i64, Mat<C64>)> =
            self.modes().chain(other.modes()).map(|(n, m)| (n, m.clone())).collect();
        Ok(Self::from_modes(self.size, &modes))
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self {
            size: self.size,
            degree: self.degree,
            coeffs: self.coeffs.iter().map(|c| scaled(c, factor)).collect(),
        }
        .trimmed()
    }

    /// Pointwise product (convolution of coefficients).
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_size(other)?;
        let mut modes = Vec::with_capacity(self.coeffs.len() * other.coeffs.len());
        for (n, a) in self.modes() {
            if is_zero_matrix(a) {
                continue;
            }
            for (m, b) in other.modes() {
                modes.push((n + m, a * b));
            }
        }
        Ok(Self::from_modes(self.size, &modes))
    }

    /// Pointwise conjugate transpose: coefficient `n` becomes `C_{-n}^*`.
    pub fn adjoint(&self) -> Self {
        let d = self.degree as i64;
        let coeffs = (-d..=d).map(|n| self.coeff(-n).unwrap().adjoint().to_owned()).collect();
        Self { size: self.size, degree: self.degree, coeffs }
    }

    /// Places `self` at block `(row, col)` of a `blocks x blocks` block loop.
    pub fn embed_block(&self, blocks: usize, row: usize, col: usize) -> Self {
        let size = self.size * blocks;
        let coeffs = self
            .coeffs
            .iter()
            .map(|c| {
                let mut big = Mat::zeros(size, size);
                big.as_mut()
                    .submatrix_mut(row * self.size, col * self.size, self.size, self.size)
                    .copy_from(c.as_ref());
                big
            })
            .collect();
        Self { size, degree: self.degree, coeffs }.trimmed()
    }

    /// `sup_x ||c(x)||` estimated on the grid points.
    pub fn sup_norm(&self, grid: &CircleGrid) -> f64 {
        grid.points()
            .iter()
            .map(|&x| crate::numerics::matrix_norm(&self.eval(x)).unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max)
    }

    fn check_size(&self, other: &Self) -> Result<()> {
        if self.size != other.size {
            return Err(LabError::DimensionMismatch(format!(
                "{0}x{0} loop against {1}x{1} loop",
                self.size, other.size
            )));
        }
        Ok(())
    }
}

pub fn scaled(m: &Mat<C64>, factor: C64) -> Mat<C64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * factor)
}

pub fn is_zero_matrix(m: &Mat<C64>) -> bool {
    m.col_iter().all(|c| c.iter().all(|z| *z == ZERO))
}

/// Which half of the fiber a [`Profile::HalfLine`] indicator selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Plus,
    Minus,
}

/// Real profile `rho(xi)` in the fiber variable.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Const(f64),
    /// `xi^p`; only meaningful inside products that decay.
    Monomial(u32),
    /// `S((xi - start) / width)`; a negative width gives a descending step.
    SmoothStep { start: f64, width: f64 },
    /// Equal to 1 on `|xi - center| <= half_width / 2`, zero outside `half_width`.
    Bump { center: f64, half_width: f64 },
    /// `1 / (1 + (xi / scale)^2)`.
    RationalDecay { scale: f64 },
    /// `theta(|xi|)`.
    Theta(CutFunction),
    /// `gamma_i(|xi|)` of a dyadic partition.
    Gamma { partition: Arc<DyadicPartition>, index: i64 },
    /// Indicator of `xi > 0` or `xi < 0`; zero at `xi = 0`.
    HalfLine(Side),
    /// `cos(l)^cos_power sin(l)^sin_power` with `l = (pi / 2) S(|xi| / reach)`.
    Rotation { reach: f64, cos_power: u32, sin_power: u32 },
    /// `rho(|xi|)`.
    Abs(Box<Profile>),
    /// `rho(xi / s)`.
    Dilate { inner: Box<Profile>, s: f64 },
    Product(Vec<Profile>),
}

impl Profile {
    pub fn eval(&self, xi: f64) -> f64 {
        match self {
            Profile::Const(c) => *c,
            Profile::Monomial(p) => xi.powi(*p as i32),
            Profile::SmoothStep { start, width } => smooth_step((xi - start) / width),
            Profile::Bump { center, half_width } => {
                smooth_step(2.0 * (1.0 - (xi - center).abs() / half_width))
            }
            Profile::RationalDecay { scale } => {
                let r = xi / scale;
                1.0 / (1.0 + r * r)
            }
            Profile::Theta(theta) => theta.eval(xi),
            Profile::Gamma { partition, index } => partition.squared_unchecked(*index, xi.abs()).sqrt(),
            Profile::HalfLine(Side::Plus) => {
                if xi > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Profile::HalfLine(Side::Minus) => {
                if xi < 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Profile::Rotation { reach, cos_power, sin_power } => {
                let angle = std::f64::consts::FRAC_PI_2 * smooth_step(xi.abs() / reach);
                let (s, c) = angle.sin_cos();
                // cos(pi/2) is not exactly zero in floating point
                let c = if angle == std::f64::consts::FRAC_PI_2 { 0.0 } else { c };
                c.powi(*cos_power as i32) * s.powi(*sin_power as i32)
            }
            Profile::Abs(inner) => inner.eval(xi.abs()),
            Profile::Dilate { inner, s } => inner.eval(xi / s),
            Profile::Product(factors) => {
                let mut acc = 1.0;
                for f in factors {
                    acc *= f.eval(xi);
                    if acc == 0.0 {
                        break;
                    }
                }
                acc
            }
        }
    }

    /// Product with flattening and half-line bookkeeping.
    pub fn times(&self, other: &Profile) -> Profile {
        let mut factors = Vec::new();
        for p in [self, other] {
            match p {
                Profile::Product(fs) => factors.extend(fs.iter().cloned()),
                Profile::Const(c) if *c == 1.0 => {}
                q => factors.push(q.clone()),
            }
        }
        let plus = factors.iter().any(|f| *f == Profile::HalfLine(Side::Plus));
        let minus = factors.iter().any(|f| *f == Profile::HalfLine(Side::Minus));
        if plus && minus || factors.iter().any(|f| *f == Profile::Const(0.0)) {
            return Profile::Const(0.0);
        }
        let mut seen_side = false;
        factors.retain(|f| {
            if matches!(f, Profile::HalfLine(_)) {
                let keep = !seen_side;
                seen_side = true;
                keep
            } else {
                true
            }
        });
        match factors.len() {
            0 => Profile::Const(1.0),
            1 => factors.pop().unwrap(),
            _ => Profile::Product(factors),
        }
    }

    /// `rho(xi / s)`, with dilation-invariant profiles passed through.
    pub fn dilated(&self, s: f64) -> Profile {
        match self {
            Profile::Const(_) | Profile::HalfLine(_) => self.clone(),
            Profile::Dilate { inner, s: r } => Profile::Dilate { inner: inner.clone(), s: r * s },
            Profile::Product(fs) => Profile::Product(fs.iter().map(|f| f.dilated(s)).collect()),
            _ => Profile::Dilate { inner: Box::new(self.clone()), s },
        }
    }

    /// Radius outside which the profile vanishes identically, if any.
    pub fn support_bound(&self) -> Option<f64> {
        match self {
            Profile::Const(c) if *c == 0.0 => Some(0.0),
            Profile::Bump { center, half_width } => Some(center.abs() + half_width.abs()),
            Profile::Gamma { partition, index } => partition.support(*index).ok().map(|(_, hi)| hi),
            Profile::Rotation { reach, cos_power, .. } if *cos_power > 0 => Some(*reach),
            Profile::Abs(inner) => inner.support_bound(),
            Profile::Dilate { inner, s } => inner.support_bound().map(|r| r * s),
            Profile::Product(fs) => fs.iter().filter_map(Profile::support_bound).reduce(f64::min),
            _ => None,
        }
    }

    /// Polynomial decay order toward `+inf` (`toward_plus`) or `-inf`:
    /// positive means decay like `|xi|^-order`, infinity means eventually zero,
    /// zero means bounded and not decaying, negative means growth.
    fn decay_order(&self, toward_plus: bool) -> f64 {
        match self {
            Profile::Const(c) => {
                if *c == 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
            Profile::Monomial(p) => -(*p as f64),
            Profile::SmoothStep { width, .. } => {
                if (*width > 0.0) != toward_plus {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
            Profile::Bump { .. } | Profile::Gamma { .. } => f64::INFINITY,
            Profile::RationalDecay { .. } => 2.0,
            Profile::Theta(_) => 0.0,
            Profile::HalfLine(side) => {
                if (*side == Side::Plus) != toward_plus {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
            Profile::Rotation { cos_power, .. } => {
                if *cos_power > 0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
            Profile::Abs(inner) => inner.decay_order(true),
            Profile::Dilate { inner, s } => inner.decay_order(toward_plus == (*s > 0.0)),
            Profile::Product(fs) => fs.iter().map(|f| f.decay_order(toward_plus)).sum(),
        }
    }

    /// Whether `rho(xi) -> 0` as `xi -> +inf` and as `xi -> -inf`.
    pub fn vanishes_at_infinity(&self) -> bool {
        self.decay_order(true) > 0.0 && self.decay_order(false) > 0.0
    }

    /// Whether the profile stays bounded in both directions.
    pub fn is_bounded(&self) -> bool {
        self.decay_order(true) >= 0.0 && self.decay_order(false) >= 0.0
    }

    /// Whether `rho(r) -> 0` as `r -> +inf` (the radial condition).
    pub fn vanishes_toward_plus(&self) -> bool {
        self.decay_order(true) > 0.0
    }
}

/// The four function classes the symbol calculus distinguishes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SymbolClass {
    /// Compactly supported in `xi`.
    CompactSupport,
    /// Vanishing at the zero section and at infinity.
    Vanishing00,
    /// Vanishing at infinity.
    FullC0,
    /// Order-zero homogeneous in `xi`.
    HomogeneousZero,
}

impl fmt::Display for SymbolClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            SymbolClass::CompactSupport => "compact-support",
            SymbolClass::Vanishing00 => "vanishing-00",
            SymbolClass::FullC0 => "C0",
            SymbolClass::HomogeneousZero => "homogeneous order-zero",
        };
        f.write_str(name)
    }
}

/// One separable term `c(x) rho(xi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub coeff: MatLoop,
    pub profile: Profile,
}

#[derive(Debug, Clone, PartialEq)]
enum Body {
    Terms(Vec<Term>),
    Homogeneous { plus: MatLoop, minus: MatLoop },
}

/// Evaluable symbol `a(x, xi)` with `k x k` matrix values and a class tag.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolExpr {
    size: usize,
    body: Body,
    class: SymbolClass,
}

const ORIGIN_TOL: f64 = 1e-14;

impl SymbolExpr {
    /// Separable symbol; the class invariants are checked on the profiles.
    pub fn new(size: usize, terms: Vec<Term>, class: SymbolClass) -> Result<Self> {
        for term in &terms {
            if term.coeff.size() != size {
                return Err(LabError::DimensionMismatch(format!(
                    "term of size {} in a symbol of size {size}",
                    term.coeff.size()
                )));
            }
            let p = &term.profile;
            let ok = match class {
                SymbolClass::CompactSupport => p.support_bound().is_some(),
                SymbolClass::FullC0 => p.vanishes_at_infinity(),
                SymbolClass::Vanishing00 => p.vanishes_at_infinity() && p.eval(0.0).abs() <= ORIGIN_TOL,
                SymbolClass::HomogeneousZero => matches!(p, Profile::Const(_) | Profile::HalfLine(_)),
            };
            if !ok {
                return Err(LabError::WrongClass {
                    expected: class.to_string(),
                    found: format!("term with profile {p:?}"),
                });
            }
        }
        let terms = terms.into_iter().filter(|t| t.profile != Profile::Const(0.0)).collect();
        Ok(Self { size, body: Body::Terms(terms), class })
    }

    /// Homogeneous symbol from its restrictions to `xi = +1` and `xi = -1`.
    pub fn homogeneous(plus: MatLoop, minus: MatLoop) -> Result<Self> {
        plus.check_size(&minus)?;
        Ok(Self { size: plus.size(), body: Body::Homogeneous { plus, minus }, class: SymbolClass::HomogeneousZero })
    }

    /// The unit of the symbol algebra.
    pub fn unit(size: usize) -> Self {
        Self::homogeneous(MatLoop::identity(size), MatLoop::identity(size)).unwrap()
    }

    /// Fiber-constant homogeneous symbol `c(x)`.
    pub fn fiber_constant(c: MatLoop) -> Self {
        Self::homogeneous(c.clone(), c).unwrap()
    }

    pub fn zero(size: usize, class: SymbolClass) -> Self {
        match class {
            SymbolClass::HomogeneousZero => Self::homogeneous(MatLoop::zero(size), MatLoop::zero(size)).unwrap(),
            _ => Self { size, body: Body::Terms(Vec::new()), class },
        }
    }

    /// `rho(|xi|)`-weighted homogeneous symbol `a(x, xi) rho(|xi|)`; the
    /// class is inferred from the radial profile, which must vanish at infinity.
    pub fn radially_weighted(a: &SymbolExpr, radial: &Profile) -> Result<Self> {
        let (plus, minus) = a.require_homogeneous()?;
        let weight = Profile::Abs(Box::new(radial.clone()));
        let class = if weight.support_bound().is_some() {
            SymbolClass::CompactSupport
        } else if weight.eval(0.0).abs() <= ORIGIN_TOL {
            SymbolClass::Vanishing00
        } else {
            SymbolClass::FullC0
        };
        if !weight.vanishes_at_infinity() {
            return Err(LabError::NotVanishingAtInfinity);
        }
        if plus == minus {
            return Self::new(a.size, vec![Term { coeff: plus, profile: weight }], class);
        }
        // distinct halves are only continuous across xi = 0 when the weight vanishes there
        if weight.eval(0.0).abs() > ORIGIN_TOL {
            return Err(LabError::WrongClass {
                expected: class.to_string(),
                found: "distinct cosphere loops under a weight nonzero at xi = 0".into(),
            });
        }
        let terms = vec![
            Term { coeff: plus, profile: weight.times(&Profile::HalfLine(Side::Plus)) },
            Term { coeff: minus, profile: weight.times(&Profile::HalfLine(Side::Minus)) },
        ];
        Self::new(a.size, terms, class)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn class(&self) -> SymbolClass {
        self.class
    }

    /// `(a_+, a_-)` for homogeneous symbols.
    pub fn homogeneous_parts(&self) -> Option<(MatLoop, MatLoop)> {
        match &self.body {
            Body::Homogeneous { plus, minus } => Some((plus.clone(), minus.clone())),
            Body::Terms(ts) if self.class == SymbolClass::HomogeneousZero => {
                let mut plus = MatLoop::zero(self.size);
                let mut minus = MatLoop::zero(self.size);
                for t in ts {
                    let (p, m) = (t.profile.eval(1.0), t.profile.eval(-1.0));
                    plus = plus.add(&t.coeff.scale(C64::new(p, 0.0))).ok()?;
                    minus = minus.add(&t.coeff.scale(C64::new(m, 0.0))).ok()?;
                }
                Some((plus, minus))
            }
            Body::Terms(_) => None,
        }
    }

    pub(crate) fn require_homogeneous(&self) -> Result<(MatLoop, MatLoop)> {
        self.homogeneous_parts().ok_or_else(|| LabError::WrongClass {
            expected: SymbolClass::HomogeneousZero.to_string(),
            found: self.class.to_string(),
        })
    }

    /// The fiber-constant loop `c` when `a_+ = a_- = c`.
    pub fn fiber_constant_loop(&self) -> Option<MatLoop> {
        let (plus, minus) = self.homogeneous_parts()?;
        (plus == minus).then_some(plus)
    }

    /// `c(x)` for every `xi`, including the zero section.
    pub fn fiber_independent(c: MatLoop) -> Self {
        let size = c.size();
        let terms = vec![Term { coeff: c, profile: Profile::Const(1.0) }];
        Self { size, body: Body::Terms(terms), class: SymbolClass::HomogeneousZero }
    }

    /// All terms, homogeneous symbols expanded through half-line indicators.
    pub fn terms(&self) -> Vec<Term> {
        match &self.body {
            Body::Terms(ts) => ts.clone(),
            Body::Homogeneous { plus, minus } => vec![
                Term { coeff: plus.clone(), profile: Profile::HalfLine(Side::Plus) },
                Term { coeff: minus.clone(), profile: Profile::HalfLine(Side::Minus) },
            ],
        }
    }

    /// Largest trigonometric degree over the terms.
    pub fn degree(&self) -> usize {
        self.terms().iter().map(|t| t.coeff.degree()).max().unwrap_or(0)
    }

    /// Pointwise value; homogeneous symbols evaluate to zero on the zero section.
    pub fn eval(&self, x: f64, xi: f64) -> Mat<C64> {
        match &self.body {
            Body::Homogeneous { plus, minus } => {
                if xi > 0.0 {
                    plus.eval(x)
                } else if xi < 0.0 {
                    minus.eval(x)
                } else {
                    Mat::zeros(self.size, self.size)
                }
            }
            Body::Terms(ts) => {
                let mut out = Mat::zeros(self.size, self.size);
                for t in ts {
                    let w = t.profile.eval(xi);
                    if w != 0.0 {
                        out = &out + &scaled(&t.coeff.eval(x), C64::new(w, 0.0));
                    }
                }
                out
            }
        }
    }

    /// `a_s(x, xi) = a(x, xi / s)`.
    pub fn dilate(&self, s: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(LabError::InvalidParameter(format!("dilation s = {s} must be positive")));
        }
        let body = match &self.body {
            Body::Homogeneous { .. } => self.body.clone(),
            Body::Terms(ts) => Body::Terms(
                ts.iter()
                    .map(|t| Term { coeff: t.coeff.clone(), profile: t.profile.dilated(s) })
                    .collect(),
            ),
        };
        Ok(Self { size: self.size, body, class: self.class })
    }

    pub fn adjoint(&self) -> Self {
        let body = match &self.body {
            Body::Homogeneous { plus, minus } => Body::Homogeneous { plus: plus.adjoint(), minus: minus.adjoint() },
            Body::Terms(ts) => Body::Terms(
                ts.iter().map(|t| Term { coeff: t.coeff.adjoint(), profile: t.profile.clone() }).collect(),
            ),
        };
        Self { size: self.size, body, class: self.class }
    }

    /// Exact pointwise matrix product. Class tags combine to the more
    /// restrictive of the two (compact support wins, then vanishing-00,
    /// then C0, then homogeneous).
    pub fn pointwise_mul(&self, other: &Self) -> Result<Self> {
        if self.size != other.size {
            return Err(LabError::DimensionMismatch(format!(
                "symbols of size {} and {}",
                self.size, other.size
            )));
        }
        if let (Body::Homogeneous { plus: a, minus: b }, Body::Homogeneous { plus: c, minus: d }) =
            (&self.body, &other.body)
        {
            return Self::homogeneous(a.mul(c)?, b.mul(d)?);
        }
        let mut terms = Vec::new();
        for s in self.terms() {
            for o in other.terms() {
                let profile = s.profile.times(&o.profile);
                if profile == Profile::Const(0.0) {
                    continue;
                }
                terms.push(Term { coeff: s.coeff.mul(&o.coeff)?, profile });
            }
        }
        let class = self.class.min(other.class);
        Ok(Self { size: self.size, body: Body::Terms(terms), class })
    }

    /// Sum of two symbols of compatible classes.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.size != other.size {
            return Err(LabError::DimensionMismatch(format!(
                "symbols of size {} and {}",
                self.size, other.size
            )));
        }
        match (&self.body, &other.body) {
            (Body::Homogeneous { plus: a, minus: b }, Body::Homogeneous { plus: c, minus: d }) => {
                Self::homogeneous(a.add(c)?, b.add(d)?)
            }
            (Body::Terms(s), Body::Terms(o)) => {
                use SymbolClass::*;
                let class = match (self.class, other.class) {
                    (a, b) if a == b => a,
                    _ => FullC0,
                };
                let mut terms = s.clone();
                terms.extend(o.iter().cloned());
                Ok(Self { size: self.size, body: Body::Terms(terms), class })
            }
            _ if self.class == other.class => {
                let mut terms = self.terms();
                terms.extend(other.terms());
                Ok(Self { size: self.size, body: Body::Terms(terms), class: self.class })
            }
            _ => Err(LabError::WrongClass {
                expected: self.class.to_string(),
                found: other.class.to_string(),
            }),
        }
    }

    pub fn scale(&self, factor: C64) -> Self {
        let body = match &self.body {
            Body::Homogeneous { plus, minus } => Body::Homogeneous { plus: plus.scale(factor), minus: minus.scale(factor) },
            Body::Terms(ts) => Body::Terms(
                ts.iter().map(|t| Term { coeff: t.coeff.scale(factor), profile: t.profile.clone() }).collect(),
            ),
        };
        Self { size: self.size, body, class: self.class }
    }

    /// `max(sup |a_+|, sup |a_-|)` for homogeneous symbols, otherwise the max
    /// over at most 128 grid points and the fiber samples `xi = m / 16` with
    /// `|xi|` up to the joint support bound of the terms, or 64 without one.
    pub fn sup_norm(&self, grid: &CircleGrid) -> f64 {
        match &self.body {
            Body::Homogeneous { plus, minus } => plus.sup_norm(grid).max(minus.sup_norm(grid)),
            Body::Terms(terms) => {
                let reach = terms
                    .iter()
                    .map(|t| t.profile.support_bound())
                    .try_fold(0.0f64, |acc, b| b.map(|b| acc.max(b)))
                    .unwrap_or(64.0);
                let lim = (16.0 * reach).ceil() as i64;
                let points = grid.points();
                let stride = points.len().div_ceil(128);
                let mut best = 0.0f64;
                for m in -lim..=lim {
                    let xi = m as f64 / 16.0;
                    for x in points.iter().step_by(stride) {
                        let v = self.eval(*x, xi);
                        let norm = if self.size == 1 {
                            v[(0, 0)].norm()
                        } else {
                            crate::numerics::matrix_norm(&v).unwrap_or(0.0)
                        };
                        best = best.max(norm);
                    }
                }
                best
            }
        }
    }
}

/// `g(x, xi) = f(|xi|) a_{sign xi}(x)`: the identification of the suspension
/// of the cosphere algebra with symbols vanishing at the zero section and at
/// infinity.
pub fn smash(f: &Profile, a: &SymbolExpr) -> Result<SymbolExpr> {
    let (plus, minus) = a.require_homogeneous()?;
    let at_zero = f.eval(0.0);
    if at_zero.abs() > ORIGIN_TOL {
        return Err(LabError::NonzeroAtOrigin(at_zero));
    }
    if !f.vanishes_toward_plus() {
        return Err(LabError::NotVanishingAtInfinity);
    }
    let radial = Profile::Abs(Box::new(f.clone()));
    let terms = vec![
        Term { coeff: plus, profile: radial.times(&Profile::HalfLine(Side::Plus)) },
        Term { coeff: minus, profile: radial.times(&Profile::HalfLine(Side::Minus)) },
    ];
    SymbolExpr::new(a.size(), terms, SymbolClass::Vanishing00)
}

/// Scalar helper: `1` as a `1 x 1` matrix.
pub fn scalar_matrix(value: C64) -> Mat<C64> {
    Mat::from_fn(1, 1, |_, _| value)
}
