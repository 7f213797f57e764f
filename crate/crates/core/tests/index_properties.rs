use psido_lab::index::{
    analytic_index, bott_projection, fredholm_index_svd, higson_trace_index, index_report, monomial_symbol,
    times_positive, IndexParams, DEFAULT_REACH,
};
use psido_lab::numerics::{CircleGrid, C64};
use psido_lab::partition::CutFunction;
use psido_lab::symbols::{MatLoop, SymbolExpr};

const PAIRS: [(i64, i64); 5] = [(0, 0), (1, 0), (0, 1), (2, -1), (-1, 2)];

fn fredholm(sigma: &SymbolExpr, n: usize, eps: f64) -> i64 {
    let grid = CircleGrid::with_cutoff(n, sigma.size()).unwrap();
    fredholm_index_svd(sigma, &CutFunction::default(), &grid, eps).unwrap().index()
}

#[test]
fn adjoint_antisymmetry() {
    for (p, m) in PAIRS {
        let sigma = monomial_symbol(1, p, m);
        assert_eq!(fredholm(&sigma.adjoint(), 64, 1e-6), -fredholm(&sigma, 64, 1e-6));
    }
}

#[test]
fn multiplicativity() {
    for (p, m) in PAIRS {
        for (q, r) in PAIRS {
            let product = monomial_symbol(1, p, m).pointwise_mul(&monomial_symbol(1, q, r)).unwrap();
            assert_eq!(fredholm(&product, 64, 1e-6), fredholm(&monomial_symbol(1, p, m), 64, 1e-6) + fredholm(&monomial_symbol(1, q, r), 64, 1e-6));
        }
    }
}

#[test]
fn positive_perturbation_keeps_the_index() {
    let grid = CircleGrid::with_cutoff(128, 1).unwrap();
    for (p, m) in PAIRS {
        let sigma = monomial_symbol(1, p, m);
        let (plus, minus) = sigma.homogeneous_parts().unwrap();
        let perturbed =
            SymbolExpr::homogeneous(times_positive(&plus, 2.0, 1.0), times_positive(&minus, 2.0, 1.0)).unwrap();
        assert_eq!(fredholm(&perturbed, 128, 1e-6), fredholm(&sigma, 128, 1e-6));
        assert_eq!(analytic_index(&perturbed, &grid).unwrap(), analytic_index(&sigma, &grid).unwrap());
    }
}

#[test]
fn stable_under_doubling_and_threshold() {
    for (p, m) in PAIRS {
        let sigma = monomial_symbol(1, p, m);
        let base = fredholm(&sigma, 64, 1e-6);
        assert_eq!(fredholm(&sigma, 128, 1e-6), base);
        assert_eq!(fredholm(&sigma, 64, 1e-7), base);
    }
}

#[test]
fn matrix_valued_symbol_agrees() {
    let plus = MatLoop::monomial(1, 1).embed_block(2, 0, 0).add(&MatLoop::identity(1).embed_block(2, 1, 1)).unwrap();
    let minus = MatLoop::identity(1).embed_block(2, 0, 0).add(&MatLoop::monomial(1, -1).embed_block(2, 1, 1)).unwrap();
    let sigma = SymbolExpr::homogeneous(plus, minus).unwrap();
    let params = IndexParams { t_list: vec![32.0, 64.0], ..IndexParams::new(64, 260) };
    let report = index_report("diag", &sigma, &CutFunction::default(), &params).unwrap();
    assert_eq!(report.analytic_index, -2);
    assert_eq!(report.fredholm_index, Some(-2));
    assert_eq!(report.higson_index, Some(-2));
    assert!(report.agreement.all, "{report:?}");
}

#[test]
fn non_unitary_symbol_uses_its_unitary_part() {
    let grid = CircleGrid::with_cutoff(64, 1).unwrap();
    let plus = MatLoop::monomial(1, 2).add(&MatLoop::monomial(1, 1).scale(C64::new(0.4, 0.0))).unwrap();
    let sigma = SymbolExpr::homogeneous(plus, MatLoop::identity(1)).unwrap();
    assert_eq!(analytic_index(&sigma, &grid).unwrap(), -2);
    assert_eq!(fredholm(&sigma, 64, 1e-6), -2);
    let bott = bott_projection(&sigma, DEFAULT_REACH, &grid, 32).unwrap();
    assert_eq!(higson_trace_index(&bott, 64.0, &grid).unwrap().trace, -2.0);
}
