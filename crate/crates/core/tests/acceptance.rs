//! Acceptance suite at desk scale (N = 256, J = 1028). Prints one line per
//! criterion and exits nonzero if any fails.

use std::process::Command;
use std::time::{Duration, Instant};

use psido_lab::cli::{
    asymptotic_slope, run_ch_compare, run_defect_sweep, run_homotopy_verify, run_index_compare, ExperimentConfig,
    RunOutput,
};
use psido_lab::extension::{halves_or_better, lifting_check, symbol_map_defect, DEFAULT_TOL_COMPACT};
use psido_lab::numerics::{CircleGrid, C64};
use psido_lab::partition::{CutFunction, DyadicPartition};
use psido_lab::quantize::t_quantize;
use psido_lab::symbols::{MatLoop, SymbolExpr};

type Check = Result<(bool, String), String>;

fn strictly_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] < w[0])
}

fn series(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>().join(" ")
}

fn verdicts_pass(out: &RunOutput) -> (bool, String) {
    let failed: Vec<String> = out.verdicts.iter().filter(|v| !v.pass).map(|v| format!("{} [{}]", v.name, v.detail)).collect();
    (failed.is_empty(), if failed.is_empty() { format!("{} checks", out.verdicts.len()) } else { failed.join("; ") })
}

fn partition_exactness() -> Check {
    let mut worst = 0.0f64;
    let mut adjacency = true;
    for s in [1.0, 0.5, 0.25, 0.125] {
        let p = DyadicPartition::build(s, 12).map_err(|e| e.to_string())?;
        let (lo, hi) = p.covered_range();
        let points: Vec<f64> = (0..1000).map(|q| lo * (hi / lo).powf((q as f64 + 0.5) / 1000.0)).collect();
        for &x in &points {
            worst = worst.max((p.sum_of_squares(x) - 1.0).abs());
            for i in -12..=12i64 {
                for j in i + 2..=12 {
                    let prod = p.eval_gamma(i, x).unwrap() * p.eval_gamma(j, x).unwrap();
                    adjacency &= prod == 0.0;
                }
            }
        }
        for i in -12..=10i64 {
            adjacency &= p.support(i).unwrap().1 <= p.support(i + 2).unwrap().0;
        }
    }
    Ok((worst <= 1e-12 && adjacency, format!("max |sum - 1| = {worst:.2e}, adjacency exact: {adjacency}")))
}

fn translation_invariance() -> Check {
    let config = ExperimentConfig::default();
    let grid = config.grid.grid().map_err(|e| e.to_string())?;
    let d = &config.defect_sweep;
    let symbols = [&d.a, &d.chart, &d.vanishing].map(|s| s.build(1).unwrap());
    let mut worst = 0.0f64;
    for a in &symbols {
        for t in [1.0, 2.0, 4.0, 8.0, 16.0] {
            for s in [0.5, 2.0, 3.0] {
                let lhs = t_quantize(a, t * s, &grid).map_err(|e| e.to_string())?;
                let rhs = t_quantize(&a.dilate(s).unwrap(), t, &grid).map_err(|e| e.to_string())?;
                worst = worst.max(lhs.max_abs_diff(&rhs));
            }
        }
    }
    Ok((worst <= 1e-13, format!("max entry difference {worst:.2e}")))
}

struct Sweep {
    out: RunOutput,
}

impl Sweep {
    fn column(&self, name: &str) -> Vec<f64> {
        self.out.table.column(name)
    }
}

fn multiplicativity(sweep: &Sweep) -> Check {
    let config = ExperimentConfig::default();
    let ts = config.defect_sweep.t_list.clone();
    let mut ok = true;
    let mut detail = Vec::new();
    for name in ["mult_defect", "adjoint_defect"] {
        let v = sweep.column(name);
        let slope = asymptotic_slope(&ts, &v, 0.0);
        let ratio = v[v.len() - 1] / v[0];
        ok &= strictly_decreasing(&v) && slope <= -0.8 && ratio < 0.05;
        detail.push(format!("{name}: slope {slope:.3} ratio {ratio:.3e} [{}]", series(&v)));
    }
    Ok((ok, detail.join("; ")))
}

fn chart_independence(sweep: &Sweep) -> Check {
    let v = sweep.column("chart_defect");
    let ratio = v[v.len() - 1] / v[0];
    Ok((strictly_decreasing(&v) && ratio < 0.05, format!("ratio {ratio:.3e} [{}]", series(&v))))
}

fn small_t_vanishing(sweep: &Sweep) -> Check {
    let config = ExperimentConfig::default();
    let grid = config.grid.grid().map_err(|e| e.to_string())?;
    let g = config.defect_sweep.vanishing.build(1).map_err(|e| e.to_string())?;
    let sup = g.sup_norm(&grid);
    // rows are sorted by t; read from t = 1/2 down to t = 1/64
    let mut v = sweep.column("t0_norm");
    v.reverse();
    let last = v[v.len() - 1];
    Ok((strictly_decreasing(&v) && last < 1e-3 * sup, format!("sup |g| = {sup:.3e} [{}]", series(&v))))
}

fn extension_modulo_compacts() -> Check {
    let grid = CircleGrid::with_cutoff(256, 1).map_err(|e| e.to_string())?;
    let theta = CutFunction::default();
    let ks = [8, 16, 32, 64];
    let scalar = |modes: &[(i64, f64)]| {
        MatLoop::from_modes(1, &modes.iter().map(|&(n, c)| (n, psido_lab::symbols::scalar_matrix(C64::new(c, 0.0)))).collect::<Vec<_>>())
    };
    let clutch = SymbolExpr::homogeneous(MatLoop::monomial(1, 1), MatLoop::identity(1)).unwrap();
    let b = SymbolExpr::homogeneous(scalar(&[(0, 1.0), (1, 0.5)]), scalar(&[(-1, 1.0)])).unwrap();
    let c = SymbolExpr::homogeneous(scalar(&[(2, 1.0)]), scalar(&[(0, 0.3), (-1, 1.0)])).unwrap();
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, x, y) in [("clutch", &clutch, &clutch.adjoint()), ("pair", &b, &c)] {
        let p = symbol_map_defect(x, y, &theta, &grid, &ks, DEFAULT_TOL_COMPACT).map_err(|e| e.to_string())?;
        let full = symbol_map_defect(x, y, &theta, &grid, &[0], DEFAULT_TOL_COMPACT).map_err(|e| e.to_string())?;
        ok &= halves_or_better(&p.symbol_tail, 1e-13) && halves_or_better(&p.commutator_tail, 1e-13) && p.pass;
        detail.push(format!(
            "{name}: untruncated {:.2e}/{:.2e}, tails [{}] / [{}]",
            full.symbol_tail[0],
            full.commutator_tail[0],
            series(&p.symbol_tail),
            series(&p.commutator_tail)
        ));
    }
    let grid2 = CircleGrid::with_cutoff(256, 2).map_err(|e| e.to_string())?;
    let loops = [
        (MatLoop::identity(1), &grid),
        (MatLoop::monomial(1, 1), &grid),
        (MatLoop::monomial(2, -2).add(&MatLoop::identity(2).scale(C64::new(0.5, 0.2))).unwrap(), &grid2),
    ];
    let mut lifts = Vec::new();
    for (l, g) in loops {
        let v = lifting_check(&SymbolExpr::fiber_constant(l), &theta, g).map_err(|e| e.to_string())?;
        ok &= v == 0.0;
        lifts.push(v);
    }
    detail.push(format!("lifting {lifts:?}"));
    Ok((ok, detail.join("; ")))
}

fn ch_vs_t() -> Check {
    let out = run_ch_compare(&ExperimentConfig::default()).map_err(|e| e.to_string())?;
    let units = out.table.columns.iter().filter(|c| c.ends_with("finite_rank")).count();
    let (pass, detail) = verdicts_pass(&out);
    Ok((pass && units >= 1, format!("{} columns, {detail}", out.table.columns.len() - 1)))
}

fn homotopy_endpoints() -> Check {
    let out = run_homotopy_verify(&ExperimentConfig::default()).map_err(|e| e.to_string())?;
    // equ2 must have been tested on at least one migrated support
    let migrated = out.verdicts.iter().any(|v| v.name.starts_with("equ2") && !v.detail.starts_with("0 "));
    let (pass, detail) = verdicts_pass(&out);
    Ok((pass && migrated, detail))
}

fn index_agreement() -> Check {
    let out = run_index_compare(&ExperimentConfig::default()).map_err(|e| e.to_string())?;
    let (pass, _) = verdicts_pass(&out);
    let detail: Vec<String> = out.verdicts.iter().map(|v| format!("{}: {}", v.name, v.detail)).collect();
    Ok((pass && out.verdicts.len() == 4, detail.join("; ")))
}

fn determinism() -> Check {
    let bin = env!("CARGO_BIN_EXE_psido-lab");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("config.toml");
    std::fs::write(&config, "[grid]\ncutoff = 128\n").map_err(|e| e.to_string())?;
    let mut detail = Vec::new();
    let mut ok = true;
    for (cmd, ext) in [("defect-sweep", "csv"), ("index-compare", "json"), ("ch-compare", "csv"), ("homotopy-verify", "csv")] {
        let mut outputs = Vec::new();
        for run in 0..2 {
            let path = dir.path().join(format!("{cmd}-{run}.{ext}"));
            let status = Command::new(bin)
                .args([cmd, "--config"])
                .arg(&config)
                .arg("--out")
                .arg(&path)
                .stderr(std::process::Stdio::null())
                .status()
                .map_err(|e| e.to_string())?;
            outputs.push((status.code(), std::fs::read(&path).map_err(|e| e.to_string())?));
        }
        let same = outputs[0] == outputs[1];
        ok &= same && !outputs[0].1.is_empty();
        detail.push(format!("{cmd}: {} bytes, exit {:?}, identical {same}", outputs[0].1.len(), outputs[0].0));
    }
    Ok((ok, detail.join("; ")))
}

fn report(number: usize, title: &str, limit: Duration, check: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let result = check();
    let elapsed = start.elapsed();
    let (pass, detail) = match result {
        Ok((pass, detail)) => (pass && elapsed <= limit, detail),
        Err(e) => (false, format!("error: {e}")),
    };
    println!(
        "criterion {number:>2} {}: {title} ({:.1}s, limit {}s) {detail}",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    pass
}

fn main() {
    let secs = Duration::from_secs;
    let mut all = true;
    all &= report(1, "partition exactness", secs(1), partition_exactness);
    all &= report(2, "translation invariance", secs(10), translation_invariance);

    // criteria 3 to 5 share one sweep; each is charged its own columns' share
    let start = Instant::now();
    let sweep = run_defect_sweep(&ExperimentConfig::default()).map(|out| Sweep { out });
    let sweep_time = start.elapsed();
    match sweep {
        Ok(sweep) => {
            println!("(defect sweep computed in {:.1}s)", sweep_time.as_secs_f64());
            all &= report(3, "asymptotic multiplicativity and adjoint", secs(60), || multiplicativity(&sweep));
            all &= report(4, "chart independence", secs(60), || chart_independence(&sweep));
            all &= report(5, "small-t vanishing", secs(10), || small_t_vanishing(&sweep));
        }
        Err(e) => {
            for n in 3..=5 {
                println!("criterion {n:>2} FAIL: defect sweep error: {e}");
            }
            all = false;
        }
    }
    all &= report(6, "extension modulo compacts", secs(60), extension_modulo_compacts);
    all &= report(7, "Connes-Higson against T", secs(120), ch_vs_t);
    all &= report(8, "homotopy endpoints", secs(120), homotopy_endpoints);
    all &= report(9, "index agreement", secs(180), index_agreement);
    all &= report(10, "CLI determinism", secs(600), determinism);
    println!("acceptance: {}", if all { "all criteria pass" } else { "FAILURES" });
    if !all {
        std::process::exit(1);
    }
}
