use eigencoupler::potential::Potential;
use eigencoupler::spectral::tridiag::{eigensolve_tridiagonal, SymTridiagonal};
use eigencoupler::spectral::{build_generator, cross_validate, decompose, Grid};
use proptest::prelude::*;

#[test]
fn ou_spectrum_is_integers() {
    let p = Potential::preset("ou").unwrap();
    let g = Grid::new(8.0, 2000).unwrap();
    let dec = decompose(&build_generator(&p, 0.5, &g).unwrap(), 4).unwrap();
    for k in 1..=4 {
        let rel = (dec.eigenvalues[k] - k as f64).abs() / k as f64;
        assert!(rel < 1e-3, "k = {k}: {}", dec.eigenvalues[k]);
    }
}

#[test]
fn generator_and_schrodinger_routes_agree() {
    let p = Potential::preset("double_well").unwrap();
    let g = Grid::auto(&p, 0.1, 4000).unwrap();
    for (k, (a, b)) in cross_validate(&p, 0.1, &g, 4).unwrap().into_iter().enumerate().skip(1) {
        assert!((a - b).abs() <= 1e-4 * a.abs(), "k = {k}: {a} vs {b}");
    }
}

#[test]
fn second_order_grid_convergence() {
    let p = Potential::preset("double_well").unwrap();
    let lambda1 = |n: usize| {
        let g = Grid::new(2.5, n).unwrap();
        decompose(&build_generator(&p, 0.1, &g).unwrap(), 1).unwrap().eigenvalues[1]
    };
    let (a, b, c) = (lambda1(501), lambda1(1001), lambda1(2001));
    let ratio = (a - b) / (b - c);
    assert!((3.5..=4.5).contains(&ratio), "{ratio}");
}

#[test]
fn eigenfunction_sup_norm_is_stable_under_refinement() {
    let p = Potential::preset("double_well").unwrap();
    let sup = |n: usize| {
        let g = Grid::auto(&p, 0.1, n).unwrap();
        decompose(&build_generator(&p, 0.1, &g).unwrap(), 1).unwrap().sup_norm(1)
    };
    let (a, b) = (sup(1000), sup(2000));
    assert!((a - b).abs() < 1e-2 * b, "{a} vs {b}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_tridiagonal_eigenpairs(
        diag in prop::collection::vec(-5.0f64..5.0, 2..60),
        seed_off in prop::collection::vec(-3.0f64..3.0, 60),
    ) {
        let n = diag.len();
        let t = SymTridiagonal::new(diag, seed_off[..n - 1].to_vec()).unwrap();
        let k = n.min(6);
        let pairs = eigensolve_tridiagonal(&t, k).unwrap();
        prop_assert_eq!(pairs.len(), k);
        for w in pairs.windows(2) {
            prop_assert!(w[0].value <= w[1].value);
        }
        for e in &pairs {
            prop_assert!(t.residual(e.value, &e.vector) <= 1e-9 * t.norm().max(1.0));
        }
    }
}
