//! Batch runner: every verification as a subcommand, driven by a TOML config,
//! writing CSV or JSON.
//!
//! Exit codes: 0 when every criterion holds, 1 when a criterion fails or an
//! index report is inconclusive, 2 on a config, I/O or computation error.
//! Floats are printed with 12 significant digits and rows are sorted by their
//! sweep key, so identical configs give byte-identical output.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::connes_higson::{ch_extended_vs_t, ch_vs_t, ApproximateUnit};
use crate::error::LabError;
use crate::index::{fredholm_index_svd, index_report, monomial_symbol, IndexParams, IndexReport, DEFAULT_REACH};
use crate::inverse_ch::{endpoint_defect, equ1_defect, equ2_defect};
use crate::numerics::{operator_norm, CircleGrid, C64, ZERO};
use crate::partition::{CutFunction, DyadicPartition};
use crate::quantize::{adjoint_defect, chart_defect, multiplicativity_defect, t_quantize, Atlas};
use crate::symbols::{MatLoop, Profile, SymbolExpr};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("computation: {0}")]
    Lab(#[from] LabError),
}

type CliResult<T> = std::result::Result<T, CliError>;

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "psido-lab", version, about = "Order-zero operators on the circle: defect sweeps and index comparison")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML config; every field has a default.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Worker threads for sweep points.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Multiplicativity, adjoint, chart and small-t defects of `T_t`.
    DefectSweep,
    /// Kernel-count, winding and trace-pairing indices.
    IndexCompare,
    /// Connes-Higson maps against `T_t`.
    ChCompare,
    /// Homotopy defects and endpoint identities.
    HomotopyVerify,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

// ---------------------------------------------------------------- config

/// Scalar loop `sum c_n e^{inx}` times `I_k` as `[[n, re, im], ...]`, or one
/// such loop per diagonal entry.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum LoopSpec {
    Scalar(Vec<[f64; 3]>),
    Diagonal(Vec<Vec<[f64; 3]>>),
}

fn scalar_modes(modes: &[[f64; 3]]) -> CliResult<Vec<(i64, C64)>> {
    modes
        .iter()
        .map(|&[n, re, im]| {
            if n.fract() != 0.0 {
                return Err(config_err(format!("mode index {n} is not an integer")));
            }
            Ok((n as i64, C64::new(re, im)))
        })
        .collect()
}

impl LoopSpec {
    pub fn build(&self, size: usize) -> CliResult<MatLoop> {
        match self {
            LoopSpec::Scalar(modes) => Ok(MatLoop::scalar_times(&scalar_modes(modes)?, &Mat::identity(size, size))),
            LoopSpec::Diagonal(entries) => {
                if entries.len() != size {
                    return Err(config_err(format!("diagonal loop has {} entries for block size {size}", entries.len())));
                }
                let mut by_mode: BTreeMap<i64, Mat<C64>> = BTreeMap::new();
                for (r, modes) in entries.iter().enumerate() {
                    for (n, c) in scalar_modes(modes)? {
                        by_mode.entry(n).or_insert_with(|| Mat::zeros(size, size))[(r, r)] += c;
                    }
                }
                let modes: Vec<(i64, Mat<C64>)> = by_mode.into_iter().collect();
                Ok(MatLoop::from_modes(size, &modes))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSpec {
    Const { value: f64 },
    Monomial { power: u32 },
    SmoothStep { start: f64, width: f64 },
    Bump { center: f64, half_width: f64 },
    RationalDecay { scale: f64 },
    Product { factors: Vec<ProfileSpec> },
}

impl ProfileSpec {
    pub fn build(&self) -> CliResult<Profile> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(config_err(format!("profile {name} = {v} must be positive")))
            }
        };
        Ok(match self {
            ProfileSpec::Const { value } => Profile::Const(*value),
            ProfileSpec::Monomial { power } => Profile::Monomial(*power),
            ProfileSpec::SmoothStep { start, width } => {
                if *width == 0.0 {
                    return Err(config_err("smooth_step width must be nonzero"));
                }
                Profile::SmoothStep { start: *start, width: *width }
            }
            ProfileSpec::Bump { center, half_width } => {
                positive("half_width", *half_width)?;
                Profile::Bump { center: *center, half_width: *half_width }
            }
            ProfileSpec::RationalDecay { scale } => {
                positive("scale", *scale)?;
                Profile::RationalDecay { scale: *scale }
            }
            ProfileSpec::Product { factors } => factors
                .iter()
                .map(ProfileSpec::build)
                .collect::<CliResult<Vec<_>>>()?
                .iter()
                .fold(Profile::Const(1.0), |acc, f| acc.times(f)),
        })
    }
}

/// Symbol vocabulary of the config file.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SymbolSpec {
    Unit,
    Zero,
    /// `(e^{i plus x}, e^{i minus x}) I_k`.
    Windings { plus: i64, minus: i64 },
    Homogeneous { plus: LoopSpec, minus: LoopSpec },
    FiberConstant { coeff: LoopSpec },
    /// Homogeneous symbol weighted by `profile(|xi|)`.
    Radial { plus: LoopSpec, minus: LoopSpec, profile: ProfileSpec },
}

impl SymbolSpec {
    pub fn build(&self, size: usize) -> CliResult<SymbolExpr> {
        Ok(match self {
            SymbolSpec::Unit => SymbolExpr::unit(size),
            SymbolSpec::Zero => SymbolExpr::zero(size, crate::symbols::SymbolClass::HomogeneousZero),
            SymbolSpec::Windings { plus, minus } => monomial_symbol(size, *plus, *minus),
            SymbolSpec::Homogeneous { plus, minus } => SymbolExpr::homogeneous(plus.build(size)?, minus.build(size)?)?,
            SymbolSpec::FiberConstant { coeff } => SymbolExpr::fiber_constant(coeff.build(size)?),
            SymbolSpec::Radial { plus, minus, profile } => SymbolExpr::radially_weighted(
                &SymbolExpr::homogeneous(plus.build(size)?, minus.build(size)?)?,
                &profile.build()?,
            )?,
        })
    }
}

fn fiber_loop(modes: &[[f64; 3]]) -> LoopSpec {
    LoopSpec::Scalar(modes.to_vec())
}

fn radial(modes: &[[f64; 3]], profile: ProfileSpec) -> SymbolSpec {
    SymbolSpec::Radial { plus: fiber_loop(modes), minus: fiber_loop(modes), profile }
}

fn powers_of_two(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|k| 2f64.powi(k)).collect()
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub cutoff: usize,
    /// Defaults to `4 N + 4`.
    pub samples: Option<usize>,
    pub block: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { cutoff: 256, samples: None, block: 1 }
    }
}

impl GridConfig {
    pub fn grid(&self) -> CliResult<CircleGrid> {
        let samples = self.samples.unwrap_or(4 * self.cutoff + 4);
        CircleGrid::new(self.cutoff, samples, self.block).map_err(config_err)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Largest admissible asymptotic log-log slope of a decaying defect.
    pub decay_slope: f64,
    /// Largest admissible final/initial ratio of a decaying defect.
    pub decay_ratio: f64,
    /// Values at or below this are exact zeros up to rounding.
    pub floor: f64,
    /// `||T_t(g)|| / sup |g|` bound at the smallest t.
    pub vanishing_fraction: f64,
    /// Bound on equ2 defects once the block supports leave the test band.
    pub equ2: f64,
    /// Bound on the endpoint identities.
    pub identity: f64,
    pub eps_rank: f64,
    /// Distance of the trace pairing to its integer for `t >= 2^6`.
    pub higson: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            decay_slope: -0.8,
            decay_ratio: 0.05,
            floor: 1e-13,
            vanishing_fraction: 1e-3,
            equ2: 1e-6,
            identity: 1e-13,
            eps_rank: 1e-6,
            higson: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct DefectSweepConfig {
    pub t_list: Vec<f64>,
    pub chart_t_list: Vec<f64>,
    pub small_t_list: Vec<f64>,
    pub a: SymbolSpec,
    pub b: SymbolSpec,
    pub chart: SymbolSpec,
    /// Symbol vanishing at the zero section and at infinity.
    pub vanishing: SymbolSpec,
}

impl Default for DefectSweepConfig {
    fn default() -> Self {
        let base = [[1.0, 1.0, 0.0], [0.0, 0.5, 0.0]];
        Self {
            t_list: powers_of_two(0, 8),
            chart_t_list: powers_of_two(2, 8),
            small_t_list: powers_of_two(-6, -1),
            a: radial(&base, ProfileSpec::RationalDecay { scale: 0.25 }),
            b: radial(&[[-2.0, 1.0, 0.0], [1.0, 0.3, 0.0]], ProfileSpec::RationalDecay { scale: 0.5 }),
            chart: radial(&base, ProfileSpec::Bump { center: 0.0, half_width: 1.0 }),
            vanishing: radial(
                &base,
                ProfileSpec::Product {
                    factors: vec![
                        ProfileSpec::Monomial { power: 2 },
                        ProfileSpec::RationalDecay { scale: 1.0 },
                        ProfileSpec::RationalDecay { scale: 1.0 },
                        ProfileSpec::RationalDecay { scale: 1.0 },
                    ],
                },
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct NamedSymbol {
    pub name: String,
    pub symbol: SymbolSpec,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexCompareConfig {
    pub symbols: Vec<NamedSymbol>,
    pub t_list: Vec<f64>,
    pub reach: f64,
    /// Also require equal indices at `2 N` and at `eps_rank / 10`.
    pub check_stability: bool,
}

impl Default for IndexCompareConfig {
    fn default() -> Self {
        let symbols = [(0, 0), (1, 0), (0, 1), (2, -1)]
            .iter()
            .map(|&(plus, minus)| NamedSymbol {
                name: format!("windings_{plus}_{minus}"),
                symbol: SymbolSpec::Windings { plus, minus },
            })
            .collect();
        Self { symbols, t_list: powers_of_two(0, 8), reach: DEFAULT_REACH, check_stability: true }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum UnitSpec {
    Canonical,
    FiniteRank { reach: f64 },
}

impl UnitSpec {
    fn build(&self) -> CliResult<ApproximateUnit> {
        match *self {
            UnitSpec::Canonical => Ok(ApproximateUnit::Canonical),
            UnitSpec::FiniteRank { reach } if reach > 0.0 && reach.is_finite() => {
                Ok(ApproximateUnit::FiniteRank { reach })
            }
            UnitSpec::FiniteRank { reach } => Err(config_err(format!("unit reach {reach} must be positive"))),
        }
    }

    fn label(&self) -> &'static str {
        match self {
            UnitSpec::Canonical => "canonical",
            UnitSpec::FiniteRank { .. } => "finite_rank",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ChCase {
    pub name: String,
    /// Suspension profile, vanishing at 0 and at infinity.
    pub f: ProfileSpec,
    pub d: SymbolSpec,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExtendedCase {
    pub name: String,
    /// Profile vanishing at infinity; its value at 0 is unrestricted.
    pub g: ProfileSpec,
    /// Fiber-constant coefficient.
    pub c: LoopSpec,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChCompareConfig {
    pub t_list: Vec<f64>,
    pub units: Vec<UnitSpec>,
    pub cases: Vec<ChCase>,
    pub extended: Vec<ExtendedCase>,
}

impl Default for ChCompareConfig {
    fn default() -> Self {
        let decay = |scale| ProfileSpec::RationalDecay { scale };
        let r = |power| ProfileSpec::Monomial { power };
        let product = |factors| ProfileSpec::Product { factors };
        Self {
            t_list: powers_of_two(2, 8),
            units: vec![UnitSpec::Canonical, UnitSpec::FiniteRank { reach: 0.25 }],
            cases: vec![
                ChCase {
                    name: "rational".into(),
                    f: product(vec![r(1), decay(1.0)]),
                    d: SymbolSpec::Homogeneous {
                        plus: fiber_loop(&[[1.0, 1.0, 0.0]]),
                        minus: fiber_loop(&[[0.0, 1.0, 0.0]]),
                    },
                },
                ChCase {
                    name: "bump".into(),
                    f: product(vec![r(1), ProfileSpec::Bump { center: 0.0, half_width: 3.0 }]),
                    d: SymbolSpec::Homogeneous {
                        plus: fiber_loop(&[[0.0, 1.0, 0.0], [1.0, 0.5, 0.0]]),
                        minus: fiber_loop(&[[-1.0, 1.0, 0.0]]),
                    },
                },
                ChCase {
                    name: "quadratic".into(),
                    f: product(vec![r(2), decay(1.0), decay(1.0)]),
                    d: SymbolSpec::Windings { plus: 2, minus: -1 },
                },
            ],
            extended: vec![
                ExtendedCase {
                    name: "ext_rational".into(),
                    g: decay(1.0),
                    c: fiber_loop(&[[1.0, 1.0, 0.0], [0.0, 0.5, 0.0]]),
                },
                ExtendedCase {
                    name: "ext_bump".into(),
                    g: ProfileSpec::Bump { center: 0.0, half_width: 2.0 },
                    c: fiber_loop(&[[-1.0, 0.7, 0.0]]),
                },
            ],
        }
    }
}

/// Test vector `e^{i phase m} / (1 + |m|)` on `|m| <= band`.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct VectorSpec {
    pub band: i64,
    pub phase: f64,
}

impl VectorSpec {
    pub fn build(&self, grid: &CircleGrid) -> Vec<C64> {
        (0..grid.dim())
            .map(|q| {
                let (m, _) = grid.mode_of(q);
                if m.abs() <= self.band {
                    C64::from_polar(1.0 / (1.0 + m.abs() as f64), self.phase * m as f64)
                } else {
                    ZERO
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct HomotopyConfig {
    pub symbol: SymbolSpec,
    pub s_list: Vec<f64>,
    pub vectors: Vec<VectorSpec>,
    pub equ2_vector: VectorSpec,
    pub equ2_blocks: Vec<[i64; 2]>,
    pub levels: Vec<i64>,
    /// Mode cutoff `K` of the compact part in the endpoint aggregate.
    pub compact_cutoff: usize,
    pub r0: f64,
}

impl Default for HomotopyConfig {
    fn default() -> Self {
        Self {
            symbol: SymbolSpec::Homogeneous { plus: fiber_loop(&[[1.0, 1.0, 0.0]]), minus: fiber_loop(&[[0.0, 1.0, 0.0]]) },
            s_list: vec![0.5, 1.0 / 3.0, 0.25, 1.0 / 6.0, 0.125],
            vectors: vec![
                VectorSpec { band: 60, phase: 0.3 },
                VectorSpec { band: 120, phase: -0.7 },
                VectorSpec { band: 200, phase: 1.1 },
            ],
            equ2_vector: VectorSpec { band: 6, phase: 0.3 },
            equ2_blocks: vec![[1, 1], [1, 0], [-1, 0]],
            levels: vec![4, 6, 8],
            compact_cutoff: 8,
            r0: 4.0,
        }
    }
}

/// Whole experiment config; each subcommand reads its own section.
#[derive(Debug, Clone, PartialEq, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    pub tolerances: Tolerances,
    pub defect_sweep: DefectSweepConfig,
    pub index_compare: IndexCompareConfig,
    pub ch_compare: ChCompareConfig,
    pub homotopy_verify: HomotopyConfig,
}

fn check_positive_list(name: &str, values: &[f64]) -> CliResult<()> {
    if values.is_empty() || values.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(config_err(format!("{name} must be a non-empty list of positive numbers")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let config: Self = toml::from_str(text).map_err(config_err)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Schema checks that need no computation.
    pub fn validate(&self) -> CliResult<()> {
        self.grid.grid()?;
        let d = &self.defect_sweep;
        check_positive_list("defect_sweep.t_list", &d.t_list)?;
        check_positive_list("defect_sweep.chart_t_list", &d.chart_t_list)?;
        check_positive_list("defect_sweep.small_t_list", &d.small_t_list)?;
        check_positive_list("index_compare.t_list", &self.index_compare.t_list)?;
        check_positive_list("ch_compare.t_list", &self.ch_compare.t_list)?;
        let h = &self.homotopy_verify;
        if h.s_list.is_empty() || h.s_list.iter().any(|&s| !(s > 0.0 && s <= 1.0)) {
            return Err(config_err("homotopy_verify.s_list must lie in (0, 1]"));
        }
        if h.levels.iter().any(|&l| l < 2) || h.levels.is_empty() {
            return Err(config_err("homotopy_verify.levels must be >= 2"));
        }
        if h.equ2_blocks.iter().any(|&[i, j]| (i, j) == (0, 0) || (i - j).abs() > 1) {
            return Err(config_err("homotopy_verify.equ2_blocks must be adjacent and exclude (0, 0)"));
        }
        let t = &self.tolerances;
        for (name, v) in [("eps_rank", t.eps_rank), ("floor", t.floor), ("decay_ratio", t.decay_ratio)] {
            if !(v > 0.0) {
                return Err(config_err(format!("tolerances.{name} must be positive")));
            }
        }
        if !(self.index_compare.reach > 0.0) {
            return Err(config_err("index_compare.reach must be positive"));
        }
        let names: std::collections::BTreeSet<&str> = self
            .ch_compare
            .cases
            .iter()
            .map(|c| c.name.as_str())
            .chain(self.ch_compare.extended.iter().map(|c| c.name.as_str()))
            .collect();
        if names.len() != self.ch_compare.cases.len() + self.ch_compare.extended.len() {
            return Err(config_err("ch_compare case names must be unique"));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------- criteria

/// Strictly decreasing until the rounding floor, then staying at it; the
/// final value is at most `ratio` times the initial one or at the floor.
pub fn decays(values: &[f64], ratio: f64, floor: f64) -> bool {
    if values.len() < 2 {
        return false;
    }
    let ordered = values.windows(2).all(|w| w[1] <= floor || w[1] < w[0]);
    let last = values[values.len() - 1];
    ordered && (last <= floor || last <= ratio * values[0])
}

/// Least-squares slope of `log v` against `log t` over the upper half of the
/// sweep; `-inf` once the values reach the floor.
pub fn asymptotic_slope(ts: &[f64], values: &[f64], floor: f64) -> f64 {
    let n = ts.len();
    let start = n / 2;
    let pts: Vec<(f64, f64)> = ts[start..].iter().zip(&values[start..]).map(|(&t, &v)| (t, v)).collect();
    if pts.iter().any(|&(_, v)| v <= floor) {
        return f64::NEG_INFINITY;
    }
    if pts.len() < 2 {
        return f64::NAN;
    }
    let m = pts.len() as f64;
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

/// One named pass/fail verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), pass, detail: detail.into() }
    }
}

// ---------------------------------------------------------------- output

pub fn fmt_float(x: f64) -> String {
    format!("{x:.11e}")
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Float(x) => fmt_float(*x),
            Cell::Int(n) => n.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Float(x) => rounded_number(*x),
            Cell::Int(n) => Value::from(*n),
            Cell::Text(s) => Value::from(s.clone()),
            Cell::Empty => Value::Null,
        }
    }
}

/// Result table; rows are emitted in the order given, which callers sort.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.iter().map(Cell::csv).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let map: serde_json::Map<String, Value> =
                    self.columns.iter().cloned().zip(row.iter().map(Cell::json)).collect();
                Value::Object(map)
            })
            .collect();
        let mut out = serde_json::to_string_pretty(&Value::Array(rows)).expect("json of plain values");
        out.push('\n');
        out
    }

    /// Column by name as floats; empty cells are skipped.
    pub fn column(&self, name: &str) -> Vec<f64> {
        let Some(c) = self.columns.iter().position(|n| n == name) else {
            return Vec::new();
        };
        self.rows
            .iter()
            .filter_map(|r| match r[c] {
                Cell::Float(x) => Some(x),
                _ => None,
            })
            .collect()
    }
}

fn rounded_number(x: f64) -> Value {
    fmt_float(x).parse::<f64>().ok().and_then(serde_json::Number::from_f64).map_or(Value::Null, Value::Number)
}

/// Rounds every float in a JSON tree to 12 significant digits.
pub fn round_json(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => rounded_number(n.as_f64().unwrap()),
        Value::Array(items) => Value::Array(items.into_iter().map(round_json).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

/// Output of one subcommand.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub table: Table,
    /// Structured output used for `--format json` when present.
    pub json: Option<Value>,
    pub verdicts: Vec<Verdict>,
}

impl RunOutput {
    pub fn pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn render(&self, format: Format) -> String {
        match (format, &self.json) {
            (Format::Json, Some(v)) => {
                let mut s = serde_json::to_string_pretty(&round_json(v.clone())).expect("json of plain values");
                s.push('\n');
                s
            }
            (Format::Json, None) => self.table.to_json(),
            (Format::Csv, _) => self.table.to_csv(),
        }
    }
}

fn sorted_floats(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn series_detail(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(" ")
}

// ---------------------------------------------------------------- subcommands

pub fn run_defect_sweep(config: &ExperimentConfig) -> CliResult<RunOutput> {
    let grid = config.grid.grid()?;
    let k = config.grid.block;
    let d = &config.defect_sweep;
    let tol = &config.tolerances;
    let a = d.a.build(k)?;
    let b = d.b.build(k)?;
    let chart = d.chart.build(k)?;
    let g = d.vanishing.build(k)?;
    let atlas = Atlas::default();
    atlas.validate(&grid)?;

    let all_t = sorted_floats(&[d.t_list.clone(), d.chart_t_list.clone(), d.small_t_list.clone()].concat());
    let contains = |list: &[f64], t: f64| list.iter().any(|&s| s == t);
    let rows: Vec<[Option<f64>; 4]> = all_t
        .par_iter()
        .map(|&t| -> CliResult<[Option<f64>; 4]> {
            let main = contains(&d.t_list, t);
            Ok([
                if main { Some(multiplicativity_defect(&a, &b, t, &grid)?) } else { None },
                if main { Some(adjoint_defect(&a, t, &grid)?) } else { None },
                if contains(&d.chart_t_list, t) { Some(chart_defect(&chart, t, &atlas, &grid)?) } else { None },
                if contains(&d.small_t_list, t) { Some(operator_norm(&t_quantize(&g, t, &grid)?)) } else { None },
            ])
        })
        .collect::<CliResult<_>>()?;

    let columns = ["t", "mult_defect", "adjoint_defect", "chart_defect", "t0_norm"];
    let table = Table {
        columns: columns.iter().map(|s| s.to_string()).collect(),
        rows: all_t
            .iter()
            .zip(&rows)
            .map(|(&t, r)| {
                std::iter::once(Cell::Float(t)).chain(r.iter().map(|v| v.map_or(Cell::Empty, Cell::Float))).collect()
            })
            .collect(),
    };

    let series = |col: usize, list: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let ts = sorted_floats(list);
        let vs = ts.iter().map(|t| rows[all_t.iter().position(|s| s == t).unwrap()][col].unwrap()).collect();
        (ts, vs)
    };
    let mut verdicts = Vec::new();
    for (col, name) in [(0, "mult_defect"), (1, "adjoint_defect")] {
        let (ts, vs) = series(col, &d.t_list);
        let slope = asymptotic_slope(&ts, &vs, tol.floor);
        let pass = decays(&vs, tol.decay_ratio, tol.floor) && slope <= tol.decay_slope;
        verdicts.push(Verdict::new(name, pass, format!("slope {slope:.3}; {}", series_detail(&vs))));
    }
    let (_, vs) = series(2, &d.chart_t_list);
    verdicts.push(Verdict::new("chart_defect", decays(&vs, tol.decay_ratio, tol.floor), series_detail(&vs)));
    // small-t norms are read from the largest t downward
    let (_, mut vs) = series(3, &d.small_t_list);
    vs.reverse();
    let sup = g.sup_norm(&grid);
    let last = *vs.last().unwrap();
    let ordered = vs.windows(2).all(|w| w[1] <= tol.floor || w[1] < w[0]);
    let pass = ordered && last <= tol.vanishing_fraction * sup.max(tol.floor);
    verdicts.push(Verdict::new("t0_norm", pass, format!("sup {sup:.3e}; {}", series_detail(&vs))));
    Ok(RunOutput { table, json: None, verdicts })
}

/// Index report plus the stability reruns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexComparison {
    pub report: IndexReport,
    pub fredholm_doubled_cutoff: Option<i64>,
    pub higson_doubled_cutoff: Option<i64>,
    pub fredholm_tenth_eps: Option<i64>,
    pub stable: bool,
}

pub fn run_index_compare(config: &ExperimentConfig) -> CliResult<RunOutput> {
    let c = &config.index_compare;
    let tol = &config.tolerances;
    let k = config.grid.block;
    let grid = config.grid.grid()?;
    let theta = CutFunction::default();
    let params_at = |cutoff: usize, samples: usize, eps_rank: f64| IndexParams {
        t_list: sorted_floats(&c.t_list),
        eps_rank,
        reach: c.reach,
        convergence_tol: tol.higson,
        ..IndexParams::new(cutoff, samples)
    };
    let mut names: Vec<&NamedSymbol> = c.symbols.iter().collect();
    names.sort_by(|x, y| x.name.cmp(&y.name));
    let results: Vec<IndexComparison> = names
        .par_iter()
        .map(|named| -> CliResult<IndexComparison> {
            let sigma = named.symbol.build(k)?;
            let params = params_at(grid.cutoff(), grid.samples(), tol.eps_rank);
            let report = index_report(&named.name, &sigma, &theta, &params)?;
            let (mut fd, mut hd, mut fe, mut stable) = (None, None, None, true);
            if c.check_stability {
                let doubled = params_at(2 * grid.cutoff(), 2 * grid.samples(), tol.eps_rank);
                let big = index_report(&named.name, &sigma, &theta, &doubled)?;
                fd = big.fredholm_index;
                hd = big.higson_index;
                fe = match fredholm_index_svd(&sigma, &theta, &grid, tol.eps_rank / 10.0) {
                    Ok(kc) => Some(kc.index()),
                    Err(LabError::NoSpectralGap(_)) => None,
                    Err(e) => return Err(e.into()),
                };
                stable = report.fredholm_index.is_some()
                    && fd == report.fredholm_index
                    && fe == report.fredholm_index
                    && hd == report.higson_index;
            }
            Ok(IndexComparison {
                report,
                fredholm_doubled_cutoff: fd,
                higson_doubled_cutoff: hd,
                fredholm_tenth_eps: fe,
                stable,
            })
        })
        .collect::<CliResult<_>>()?;

    let opt = |v: Option<i64>| v.map_or(Cell::Empty, Cell::Int);
    let columns = [
        "symbol", "w_plus", "w_minus", "analytic_index", "fredholm_index", "higson_index", "higson_trace_max_t",
        "agree", "stable", "inconclusive",
    ];
    let mut rows = Vec::new();
    let mut verdicts = Vec::new();
    for r in &results {
        let rep = &r.report;
        let last = rep.higson_trace.last().map_or(Cell::Empty, |p| Cell::Float(p.smooth_trace));
        rows.push(vec![
            Cell::Text(rep.symbol.clone()),
            Cell::Int(rep.windings.0),
            Cell::Int(rep.windings.1),
            Cell::Int(rep.analytic_index),
            opt(rep.fredholm_index),
            opt(rep.higson_index),
            last,
            Cell::Int(rep.agreement.all as i64),
            Cell::Int(r.stable as i64),
            Cell::Text(rep.inconclusive.join("; ").replace(',', ";")),
        ]);
        let pass = rep.conclusive() && rep.agreement.all && r.stable;
        let detail = if rep.conclusive() {
            format!(
                "analytic {} fredholm {:?} higson {:?} stable {}",
                rep.analytic_index, rep.fredholm_index, rep.higson_index, r.stable
            )
        } else {
            format!("inconclusive: {}", rep.inconclusive.join("; "))
        };
        verdicts.push(Verdict::new(format!("index {}", rep.symbol), pass, detail));
    }
    let json = serde_json::to_value(&results).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(RunOutput {
        table: Table { columns: columns.iter().map(|s| s.to_string()).collect(), rows },
        json: Some(json),
        verdicts,
    })
}

pub fn run_ch_compare(config: &ExperimentConfig) -> CliResult<RunOutput> {
    let grid = config.grid.grid()?;
    let k = config.grid.block;
    let c = &config.ch_compare;
    let tol = &config.tolerances;
    let theta = CutFunction::default();
    let ts = sorted_floats(&c.t_list);
    let units: Vec<(ApproximateUnit, &str)> =
        c.units.iter().map(|u| Ok((u.build()?, u.label()))).collect::<CliResult<_>>()?;

    enum Job {
        Pair(Profile, SymbolExpr),
        Extended(Profile, SymbolExpr),
    }
    let mut jobs: Vec<(String, Job)> = Vec::new();
    for case in &c.cases {
        jobs.push((case.name.clone(), Job::Pair(case.f.build()?, case.d.build(k)?)));
    }
    for case in &c.extended {
        jobs.push((case.name.clone(), Job::Extended(case.g.build()?, SymbolExpr::fiber_constant(case.c.build(k)?))));
    }
    jobs.sort_by(|x, y| x.0.cmp(&y.0));

    let mut columns = vec!["t".to_string()];
    let mut series: Vec<Vec<f64>> = Vec::new();
    for (name, job) in &jobs {
        for (unit, label) in &units {
            let values: Vec<f64> = ts
                .par_iter()
                .map(|&t| -> CliResult<f64> {
                    Ok(match job {
                        Job::Pair(f, d) => ch_vs_t(f, d, t, unit, &theta, &grid)?,
                        Job::Extended(g, cst) => ch_extended_vs_t(g, cst, t, unit, &grid)?,
                    })
                })
                .collect::<CliResult<_>>()?;
            columns.push(format!("{name}_{label}"));
            series.push(values);
        }
    }
    let rows = ts
        .iter()
        .enumerate()
        .map(|(q, &t)| std::iter::once(Cell::Float(t)).chain(series.iter().map(|s| Cell::Float(s[q]))).collect())
        .collect();
    let verdicts = columns[1..]
        .iter()
        .zip(&series)
        .map(|(name, vs)| Verdict::new(name.clone(), decays(vs, tol.decay_ratio, tol.floor), series_detail(vs)))
        .collect();
    Ok(RunOutput { table: Table { columns, rows }, json: None, verdicts })
}

pub fn run_homotopy_verify(config: &ExperimentConfig) -> CliResult<RunOutput> {
    let grid = config.grid.grid()?;
    let k = config.grid.block;
    let h = &config.homotopy_verify;
    let tol = &config.tolerances;
    let theta = CutFunction::new(h.r0)?;
    let a = h.symbol.build(k)?;
    let mut s_desc = sorted_floats(&h.s_list);
    s_desc.reverse();

    // (check, case, param) -> value, so the rows come out sorted
    let mut values: BTreeMap<(String, String, String), (f64, f64)> = BTreeMap::new();
    let mut verdicts = Vec::new();
    for (v, spec) in h.vectors.iter().enumerate() {
        let f = spec.build(&grid);
        let series: Vec<f64> =
            s_desc.par_iter().map(|&s| equ1_defect(&a, s, &f, &theta, &grid)).collect::<Result<_, _>>()?;
        let case = format!("vector{v}");
        for (&s, &d) in s_desc.iter().zip(&series) {
            values.insert(("equ1".into(), case.clone(), fmt_float(s)), (s, d));
        }
        let ordered = series.windows(2).all(|w| w[1] <= tol.floor || w[1] < w[0]);
        verdicts.push(Verdict::new(format!("equ1 {case}"), ordered, series_detail(&series)));
    }

    let narrow = h.equ2_vector.build(&grid);
    let band = h.equ2_vector.band as f64;
    for &[i, j] in &h.equ2_blocks {
        let case = format!("block_{i}_{j}");
        let mut pass = true;
        let mut migrated = 0;
        for &s in &s_desc {
            let d = equ2_defect(&a, s, i, j, &narrow, &theta, &grid)?;
            values.insert(("equ2".into(), case.clone(), fmt_float(s)), (s, d));
            let p = DyadicPartition::build(s, i.abs().max(j.abs()).max(2))?;
            let lower = p.support(i)?.0.max(p.support(j)?.0);
            if lower > band {
                migrated += 1;
                pass &= d < tol.equ2;
            }
        }
        verdicts.push(Verdict::new(format!("equ2 {case}"), pass, format!("{migrated} migrated s values")));
    }

    let mut levels = h.levels.clone();
    levels.sort_unstable();
    levels.dedup();
    let reports =
        levels.par_iter().map(|&l| endpoint_defect(&a, l, h.compact_cutoff, &theta, &grid)).collect::<Result<Vec<_>, _>>()?;
    let mut aggregate = Vec::new();
    let mut identity = 0.0f64;
    let mut theta_exact = true;
    for r in &reports {
        let key = fmt_float(r.levels as f64);
        values.insert(("endpoint".into(), "aggregate".into(), key.clone()), (r.levels as f64, r.aggregate));
        values.insert(("endpoint".into(), "theta_identity".into(), key.clone()), (r.levels as f64, r.theta_identity));
        values.insert(
            ("endpoint".into(), "translation_identity".into(), key),
            (r.levels as f64, r.translation_identity),
        );
        aggregate.push(r.aggregate);
        identity = identity.max(r.translation_identity);
        theta_exact &= r.theta_identity == 0.0;
    }
    let ordered = aggregate.windows(2).all(|w| w[1] <= tol.floor || w[1] < w[0]);
    verdicts.push(Verdict::new("endpoint aggregate", ordered, series_detail(&aggregate)));
    verdicts.push(Verdict::new("endpoint theta identity", theta_exact, "exact zero required"));
    verdicts.push(Verdict::new("endpoint translation identity", identity <= tol.identity, format!("{identity:.3e}")));

    // param keys are formatted floats; order them numerically within a case
    let mut rows: Vec<(String, String, f64, f64)> =
        values.into_iter().map(|((check, case, _), (param, value))| (check, case, param, value)).collect();
    rows.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.total_cmp(&y.2)));
    let table = Table {
        columns: ["check", "case", "param", "value"].iter().map(|s| s.to_string()).collect(),
        rows: rows
            .into_iter()
            .map(|(check, case, param, value)| vec![Cell::Text(check), Cell::Text(case), Cell::Float(param), Cell::Float(value)])
            .collect(),
    };
    Ok(RunOutput { table, json: None, verdicts })
}

pub fn run(command: Command, config: &ExperimentConfig) -> CliResult<RunOutput> {
    match command {
        Command::DefectSweep => run_defect_sweep(config),
        Command::IndexCompare => run_index_compare(config),
        Command::ChCompare => run_ch_compare(config),
        Command::HomotopyVerify => run_homotopy_verify(config),
    }
}

fn default_format(command: Command) -> Format {
    match command {
        Command::IndexCompare => Format::Json,
        _ => Format::Csv,
    }
}

fn execute(cli: &Cli) -> CliResult<bool> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(config_err("--threads must be at least 1"));
        }
        // a second initialization in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let output = run(cli.command, &config)?;
    let text = output.render(cli.format.unwrap_or_else(|| default_format(cli.command)));
    match &cli.out {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    let mut err = std::io::stderr();
    for v in &output.verdicts {
        let _ = writeln!(err, "{} {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.name, v.detail);
    }
    Ok(output.pass())
}

/// Parses arguments, runs the subcommand and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
