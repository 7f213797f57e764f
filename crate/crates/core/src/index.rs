//! Two routes to the index of an elliptic order-zero operator on the circle:
//! kernel counting for `Op(sigma)`, and the trace pairing of `T_t` with the
//! clutching projection of `sigma`. Both are checked against the winding
//! numbers of the two cosphere loops.
//!
//! Sign convention: `index = w_- - w_+`, where `w_+-` is the winding of
//! `det sigma(x, +-1)`. For `sigma_+ = e^{ix}`, `sigma_- = 1` the kernel of
//! `Op(sigma)` is spanned by the zero mode and the cokernel by modes 0 and 1,
//! so the index is `-1`.

use std::f64::consts::PI;

use faer::Mat;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::numerics::{dense_svd, hermitian_eigenvalues, matrix_singular_values, CircleGrid, FourierOperator, C64, ONE, ZERO};
use crate::partition::CutFunction;
use crate::quantize::{op_quantize, t_quantize};
use crate::symbols::{scaled, MatLoop, Profile, Side, SymbolClass, SymbolExpr, Term};

/// Global sign in `analytic_index = INDEX_SIGN * (w_- - w_+)`, fixed by the
/// kernel count on `sigma = (e^{ix}, 1)`.
pub const INDEX_SIGN: i64 = 1;

/// Orientation of the trace pairing relative to the kernel count, fixed on
/// the same calibration symbol.
pub const HIGSON_ORIENTATION: f64 = 1.0;

/// Default half-width in `xi` of the clutching rotation.
pub const DEFAULT_REACH: f64 = 0.75;

/// Determinant by partial-pivot elimination.
pub fn determinant(m: &Mat<C64>) -> C64 {
    let n = m.nrows();
    let mut a = m.clone();
    let mut det = ONE;
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[(i, col)].norm().total_cmp(&a[(j, col)].norm())).unwrap();
        if a[(pivot, col)] == ZERO {
            return ZERO;
        }
        if pivot != col {
            for c in 0..n {
                let tmp = a[(col, c)];
                a[(col, c)] = a[(pivot, c)];
                a[(pivot, c)] = tmp;
            }
            det = -det;
        }
        let p = a[(col, col)];
        det *= p;
        for r in col + 1..n {
            let factor = a[(r, col)] / p;
            if factor != ZERO {
                for c in col..n {
                    let v = a[(col, c)];
                    a[(r, c)] -= factor * v;
                }
            }
        }
    }
    det
}

/// Winding number of a closed sampled loop `z_0, ..., z_{J-1}` (the segment
/// back to `z_0` is included).
pub fn winding_number(samples: &[C64], points: &[f64]) -> Result<i64> {
    let scale = samples.iter().map(|z| z.norm()).fold(0.0, f64::max);
    for (z, &x) in samples.iter().zip(points) {
        if !(z.norm() > 1e-12 * scale.max(1e-300)) {
            return Err(LabError::NonInvertible { x });
        }
    }
    let mut total = 0.0;
    for q in 0..samples.len() {
        let next = samples[(q + 1) % samples.len()];
        let step = (next / samples[q]).arg();
        if step.abs() >= PI * (1.0 - 1e-12) {
            return Err(LabError::Undersampled { x: points[q], step });
        }
        total += step;
    }
    Ok((total / (2.0 * PI)).round() as i64)
}

/// Winding of `det c(x)` sampled at the grid points.
pub fn loop_winding(c: &MatLoop, grid: &CircleGrid) -> Result<i64> {
    let points = grid.points();
    let dets: Vec<C64> = points.iter().map(|&x| determinant(&c.eval(x))).collect();
    winding_number(&dets, &points)
}

/// `(w_+, w_-)` of a homogeneous symbol.
pub fn windings(sigma: &SymbolExpr, grid: &CircleGrid) -> Result<(i64, i64)> {
    let (plus, minus) = sigma.require_homogeneous()?;
    Ok((loop_winding(&plus, grid)?, loop_winding(&minus, grid)?))
}

/// `INDEX_SIGN * (w_- - w_+)`.
pub fn analytic_index(sigma: &SymbolExpr, grid: &CircleGrid) -> Result<i64> {
    let (wp, wm) = windings(sigma, grid)?;
    Ok(INDEX_SIGN * (wm - wp))
}

/// Kernel and cokernel dimensions of `Op(sigma)` localized away from the
/// truncation boundary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelCount {
    pub kernel: usize,
    pub cokernel: usize,
    /// Small singular values discarded as truncation artifacts.
    pub boundary: usize,
    pub smallest_kept: f64,
    pub largest_counted: f64,
}

impl KernelCount {
    pub fn index(&self) -> i64 {
        self.kernel as i64 - self.cokernel as i64
    }
}

/// Required ratio between the smallest uncounted and largest counted singular value.
pub const GAP_RATIO: f64 = 1e3;

fn interior_dimension(vectors: &Mat<C64>, columns: &[usize], grid: &CircleGrid) -> Result<usize> {
    if columns.is_empty() {
        return Ok(0);
    }
    let interior: Vec<usize> = (0..grid.dim())
        .filter(|&i| grid.mode_of(i).0.unsigned_abs() as usize <= grid.cutoff() / 2)
        .collect();
    let restricted = Mat::from_fn(interior.len(), columns.len(), |i, j| vectors[(interior[i], columns[j])]);
    let cosines = matrix_singular_values(&restricted)?;
    if let Some(c) = cosines.iter().find(|&&c| c > 0.1 && c < 0.9) {
        return Err(LabError::NoSpectralGap(format!(
            "near-kernel vector is neither interior nor boundary localized (overlap {c:.3})"
        )));
    }
    Ok(cosines.iter().filter(|&&c| c >= 0.9).count())
}

/// Fredholm index of `Op(sigma)` by SVD kernel counting. Singular values below
/// `eps_rank` count; a gap of `GAP_RATIO` to the rest is required, and vectors
/// supported near the mode cutoff are discarded as truncation artifacts.
pub fn fredholm_index_svd(
    sigma: &SymbolExpr,
    theta: &CutFunction,
    grid: &CircleGrid,
    eps_rank: f64,
) -> Result<KernelCount> {
    if !(eps_rank > 0.0) {
        return Err(LabError::InvalidParameter(format!("eps_rank = {eps_rank} must be positive")));
    }
    let junction = theta.first_full_mode() + sigma.degree();
    if grid.cutoff() < 2 * junction {
        return Err(LabError::NoSpectralGap(format!(
            "cutoff {} cannot separate the junction modes |n| <= {junction} from the truncation boundary",
            grid.cutoff()
        )));
    }
    let op = op_quantize(sigma, theta, grid)?;
    let svd = dense_svd(op.matrix())?;
    let small: Vec<usize> = (0..svd.s.len()).filter(|&i| svd.s[i] < eps_rank).collect();
    let largest_counted = small.iter().map(|&i| svd.s[i]).fold(0.0, f64::max);
    let smallest_kept = svd.s.iter().copied().filter(|&s| s >= eps_rank).fold(f64::INFINITY, f64::min);
    if !small.is_empty() && smallest_kept < GAP_RATIO * largest_counted {
        return Err(LabError::NoSpectralGap(format!(
            "counted singular value {largest_counted:.3e} against uncounted {smallest_kept:.3e}"
        )));
    }
    let kernel = interior_dimension(&svd.v, &small, grid)?;
    let cokernel = interior_dimension(&svd.u, &small, grid)?;
    Ok(KernelCount {
        kernel,
        cokernel,
        boundary: 2 * small.len() - kernel - cokernel,
        smallest_kept,
        largest_counted,
    })
}

/// Unitary part `c (c^* c)^{-1/2}` of an invertible loop, as a trigonometric
/// polynomial of degree at most `max_degree`. Unitary loops pass through exactly.
pub fn unitary_part(c: &MatLoop, grid: &CircleGrid, max_degree: usize) -> Result<MatLoop> {
    let k = c.size();
    let points = grid.points();
    let mut unitary = true;
    let mut samples = Vec::with_capacity(points.len());
    for &x in &points {
        let v = c.eval(x);
        let gram = &v * v.adjoint();
        let defect = (0..k)
            .flat_map(|i| (0..k).map(move |j| (i, j)))
            .map(|(i, j)| (gram[(i, j)] - if i == j { ONE } else { ZERO }).norm())
            .fold(0.0, f64::max);
        unitary &= defect < 1e-12;
        let svd = dense_svd(&v)?;
        if svd.s.last().copied().unwrap_or(0.0) < 1e-12 * svd.s[0].max(1e-300) {
            return Err(LabError::NonInvertible { x });
        }
        samples.push(&svd.u * svd.v.adjoint());
    }
    if unitary {
        return Ok(c.clone());
    }
    let j = points.len();
    let degree = max_degree.min(grid.cutoff()) as i64;
    let mut modes = Vec::new();
    for n in -degree..=degree {
        let coeff = Mat::from_fn(k, k, |r, col| {
            let mut acc = ZERO;
            for (q, s) in samples.iter().enumerate() {
                acc += s[(r, col)] * C64::from_polar(1.0, -(n as f64) * points[q]);
            }
            acc / j as f64
        });
        if coeff.col_iter().any(|col| col.iter().any(|z| z.norm() > 1e-15)) {
            modes.push((n, coeff));
        }
    }
    Ok(MatLoop::from_modes(k, &modes))
}

/// Clutching projection `p_sigma = p_0 + q` over `T*S^1`, `2k x 2k`.
///
/// On each half-line the Whitehead rotation `W(l)` joins `1` to
/// `diag(u, u^*)` as `l` runs over `[0, pi/2]`, with `l = (pi/2) S(|xi| / reach)`;
/// `p_sigma = W p_0 W^*` equals `p_0` at the zero section and for `|xi| >= reach`.
#[derive(Debug, Clone)]
pub struct BottProjection {
    pub p0: Mat<C64>,
    /// `p_sigma - p_0`, compactly supported in `0 < |xi| < reach`.
    pub difference: SymbolExpr,
    pub reach: f64,
}

impl BottProjection {
    pub fn eval(&self, x: f64, xi: f64) -> Mat<C64> {
        &self.p0 + &self.difference.eval(x, xi)
    }
}

fn side_terms(u: &MatLoop, side: Side, reach: f64) -> Result<Vec<Term>> {
    let k = u.size();
    let id = MatLoop::identity(k);
    let minus_one = C64::new(-1.0, 0.0);
    let ustar = u.adjoint();
    let diag = u.add(&ustar)?.add(&id.scale(C64::new(-2.0, 0.0)))?;
    let off1 = u.add(&id.scale(minus_one))?;
    let u2 = u.mul(u)?;
    let off3 = u2.add(&u.scale(minus_one))?;
    let q22 = diag.scale(minus_one).embed_block(2, 1, 1);
    let c2s2 = diag.embed_block(2, 0, 0).add(&q22)?;
    let c3s = off1.embed_block(2, 0, 1).add(&off1.adjoint().embed_block(2, 1, 0))?;
    let cs3 = off3.embed_block(2, 0, 1).add(&off3.adjoint().embed_block(2, 1, 0))?;
    let half = Profile::HalfLine(side);
    let rot = |cos_power, sin_power| Profile::Rotation { reach, cos_power, sin_power }.times(&half);
    Ok(vec![
        Term { coeff: c2s2, profile: rot(2, 2) },
        Term { coeff: c3s, profile: rot(3, 1) },
        Term { coeff: cs3, profile: rot(1, 3) },
    ])
}

/// Clutching projection of an invertible homogeneous symbol.
pub fn bott_projection(sigma: &SymbolExpr, reach: f64, grid: &CircleGrid, max_degree: usize) -> Result<BottProjection> {
    if !(reach > 0.0 && reach.is_finite()) {
        return Err(LabError::InvalidParameter(format!("reach = {reach} must be positive")));
    }
    let (plus, minus) = sigma.require_homogeneous()?;
    let k = sigma.size();
    let up = unitary_part(&plus, grid, max_degree)?;
    let um = unitary_part(&minus, grid, max_degree)?;
    let mut terms = side_terms(&up, Side::Plus, reach)?;
    terms.extend(side_terms(&um, Side::Minus, reach)?);
    let difference = SymbolExpr::new(2 * k, terms, SymbolClass::CompactSupport)?;
    let p0 = Mat::from_fn(2 * k, 2 * k, |i, j| if i == j && i < k { ONE } else { ZERO });
    Ok(BottProjection { p0, difference, reach })
}

/// One point of the trace pairing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    pub t: f64,
    /// `Tr chi(H_t) - rank(p_0)` with `chi` the indicator of `(1/2, inf)`, oriented.
    pub trace: f64,
    /// `Tr g(H_t) - rank(p_0)` with `g(l) = 3 l^2 - 2 l^3`, oriented; converges
    /// to `trace` as `H_t` approaches a projection.
    pub smooth_trace: f64,
    /// Number of retained modes `|n| <= M`.
    pub active_cutoff: usize,
}

/// Trace pairing of `T_t` with `[p_sigma] - [p_0]`, on the modes that the
/// compactly supported difference reaches. `H_t` is the Hermitian part of
/// `p_0 (x) 1 + T_t(p_sigma - p_0)`.
pub fn higson_trace_index(bott: &BottProjection, t: f64, grid: &CircleGrid) -> Result<TracePoint> {
    let size = bott.difference.size();
    let reach_modes = (bott.reach * t).ceil() as usize + bott.difference.degree() + 1;
    let active = reach_modes.min(grid.cutoff());
    let local = CircleGrid::new(active, grid.samples(), size)?;
    let q = t_quantize(&bott.difference, t, &local)?;
    let k = size / 2;
    let base = FourierOperator::from_matrix(
        &local,
        Mat::from_fn(local.dim(), local.dim(), |i, j| {
            if i == j && local.mode_of(i).1 < k {
                ONE
            } else {
                ZERO
            }
        }),
    )?;
    let x = &base + &q;
    let herm = Mat::from_fn(local.dim(), local.dim(), |i, j| (x.matrix()[(i, j)] + x.matrix()[(j, i)].conj()) * 0.5);
    let eigen = hermitian_eigenvalues(&herm)?;
    let rank = (local.mode_count() * k) as f64;
    let smooth: f64 = eigen.iter().map(|&l| 3.0 * l * l - 2.0 * l * l * l).sum::<f64>() - rank;
    let count = eigen.iter().filter(|&&l| l > 0.5).count() as f64 - rank;
    Ok(TracePoint {
        t,
        trace: HIGSON_ORIENTATION * count,
        smooth_trace: HIGSON_ORIENTATION * smooth,
        active_cutoff: active,
    })
}

/// `Some(n)` when `value` is within `tol` of the integer `n`.
pub fn round_if_close(value: f64, tol: f64) -> Option<i64> {
    let r = value.round();
    ((value - r).abs() <= tol).then_some(r as i64)
}

/// Parameters of an index comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexParams {
    pub cutoff: usize,
    pub samples: usize,
    pub t_list: Vec<f64>,
    pub eps_rank: f64,
    pub reach: f64,
    /// Traces at `t >= converged_from` must lie within `convergence_tol` of the limit.
    pub converged_from: f64,
    pub convergence_tol: f64,
    pub max_degree: usize,
}

impl IndexParams {
    pub fn new(cutoff: usize, samples: usize) -> Self {
        Self {
            cutoff,
            samples,
            t_list: (0..=8).map(|k| 2f64.powi(k)).collect(),
            eps_rank: 1e-6,
            reach: DEFAULT_REACH,
            converged_from: 64.0,
            convergence_tol: 0.1,
            max_degree: 32,
        }
    }
}

/// Agreement flags, derived from the other report fields only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Agreement {
    pub fredholm_analytic: bool,
    pub higson_analytic: bool,
    pub higson_converged: bool,
    pub all: bool,
}

/// All index quantities of one symbol.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexReport {
    pub symbol: String,
    pub windings: (i64, i64),
    pub analytic_index: i64,
    pub fredholm_index: Option<i64>,
    pub kernel: Option<KernelCount>,
    pub higson_trace: Vec<TracePoint>,
    pub higson_index: Option<i64>,
    pub agreement: Agreement,
    /// Reasons a quantity could not be determined; empty when conclusive.
    pub inconclusive: Vec<String>,
    pub params: IndexParams,
}

impl IndexReport {
    pub fn conclusive(&self) -> bool {
        self.inconclusive.is_empty()
    }
}

fn agreement(
    analytic: i64,
    fredholm: Option<i64>,
    higson: Option<i64>,
    trace: &[TracePoint],
    params: &IndexParams,
) -> Agreement {
    let fredholm_analytic = fredholm == Some(analytic);
    let higson_analytic = higson == Some(analytic);
    let higson_converged = higson.is_some_and(|h| {
        trace
            .iter()
            .filter(|p| p.t >= params.converged_from)
            .all(|p| (p.trace - h as f64).abs() <= params.convergence_tol)
    });
    Agreement {
        fredholm_analytic,
        higson_analytic,
        higson_converged,
        all: fredholm_analytic && higson_analytic && higson_converged,
    }
}

/// Index report; an undetermined quantity marks the report inconclusive
/// instead of failing.
pub fn index_report(label: &str, sigma: &SymbolExpr, theta: &CutFunction, params: &IndexParams) -> Result<IndexReport> {
    let grid = CircleGrid::new(params.cutoff, params.samples, sigma.size())?;
    let w = windings(sigma, &grid)?;
    let analytic = INDEX_SIGN * (w.1 - w.0);
    let mut inconclusive = Vec::new();
    let kernel = match fredholm_index_svd(sigma, theta, &grid, params.eps_rank) {
        Ok(k) => Some(k),
        Err(e @ LabError::NoSpectralGap(_)) => {
            inconclusive.push(format!("fredholm: {e}"));
            None
        }
        Err(e) => return Err(e),
    };
    let fredholm = kernel.as_ref().map(KernelCount::index);
    let bott = bott_projection(sigma, params.reach, &grid, params.max_degree)?;
    let trace = params
        .t_list
        .iter()
        .map(|&t| higson_trace_index(&bott, t, &grid))
        .collect::<Result<Vec<_>>>()?;
    let last = trace.iter().max_by(|a, b| a.t.total_cmp(&b.t));
    let higson = last.and_then(|p| round_if_close(p.trace, 0.25));
    if higson.is_none() {
        inconclusive.push(format!(
            "higson: trace {:.4} at the largest t is not within 0.25 of an integer",
            last.map_or(f64::NAN, |p| p.trace)
        ));
    }
    let agreement = agreement(analytic, fredholm, higson, &trace, params);
    Ok(IndexReport {
        symbol: label.to_string(),
        windings: w,
        analytic_index: analytic,
        fredholm_index: fredholm,
        kernel,
        higson_trace: trace,
        higson_index: higson,
        agreement,
        inconclusive,
        params: params.clone(),
    })
}

/// `sigma_+ = e^{i w_+ x} I_k`, `sigma_- = e^{i w_- x} I_k`.
pub fn monomial_symbol(size: usize, plus: i64, minus: i64) -> SymbolExpr {
    SymbolExpr::homogeneous(MatLoop::monomial(size, plus), MatLoop::monomial(size, minus)).unwrap()
}

/// Pointwise projection defects `max(|p^2 - p|, |p^* - p|, |tr p - k|)` at the given points.
pub fn projection_defects(bott: &BottProjection, points: &[(f64, f64)]) -> (f64, f64, f64) {
    let k = bott.p0.nrows() / 2;
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    for &(x, xi) in points {
        let p = bott.eval(x, xi);
        let sq = &p * &p;
        let adj = p.adjoint().to_owned();
        let mut idem = 0.0f64;
        let mut herm = 0.0f64;
        let mut tr = ZERO;
        for i in 0..p.nrows() {
            tr += p[(i, i)];
            for j in 0..p.ncols() {
                idem = idem.max((sq[(i, j)] - p[(i, j)]).norm());
                herm = herm.max((adj[(i, j)] - p[(i, j)]).norm());
            }
        }
        worst.0 = worst.0.max(idem);
        worst.1 = worst.1.max(herm);
        worst.2 = worst.2.max((tr - C64::new(k as f64, 0.0)).norm());
    }
    worst
}

/// `c(x) h(x)` with `h = a + b cos x` a positive scalar loop.
pub fn times_positive(c: &MatLoop, a: f64, b: f64) -> MatLoop {
    let k = c.size();
    let id = Mat::<C64>::identity(k, k);
    let h = MatLoop::from_modes(
        k,
        &[(0, scaled(&id, C64::new(a, 0.0))), (1, scaled(&id, C64::new(b / 2.0, 0.0))), (-1, scaled(&id, C64::new(b / 2.0, 0.0)))],
    );
    c.mul(&h).unwrap()
}
