use eigencoupler::potential::{domains_of_attraction, find_critical_points, validate_assumptions, Potential};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Root of a continuous function on a sign-changing bracket.
fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa = f(a);
    assert!(fa * f(b) < 0.0);
    for _ in 0..200 {
        let c = 0.5 * (a + b);
        if (f(c) > 0.0) == (fa > 0.0) {
            a = c;
        } else {
            b = c;
        }
    }
    0.5 * (a + b)
}

#[test]
fn tilted_double_well_matches_bisection() {
    let p = Potential::preset("tilted_double_well").unwrap();
    let cubic = |x: f64| x * x * x - x + 0.1;
    let left = bisect(cubic, -2.0, -0.5);
    let mid = bisect(cubic, 0.0, 0.5);
    let right = bisect(cubic, 0.5, 2.0);
    assert!((left + 1.0466).abs() < 1e-4 && (mid - 0.10103).abs() < 1e-4 && (right - 0.9456).abs() < 1e-4);
    assert_eq!(p.minima().len(), 2);
    assert!((p.minima()[0] - left).abs() < 1e-10);
    assert!((p.minima()[1] - right).abs() < 1e-10);
    assert_eq!(p.maxima().len(), 1);
    assert!((p.maxima()[0] - mid).abs() < 1e-10);
    let part = domains_of_attraction(&p);
    assert_eq!(part.boundaries.len(), 1);
    assert!((part.boundaries[0] - mid).abs() < 1e-10);
}

#[test]
fn triple_well_critical_points() {
    // F' = x (x^2 - 1)(x^2 - 3).
    let p = Potential::preset("triple_well").unwrap();
    let s3 = 3f64.sqrt();
    let want_min = [-s3, 0.0, s3];
    for (a, b) in p.minima().iter().zip(want_min) {
        assert!((a - b).abs() < 1e-10);
    }
    for (a, b) in p.maxima().iter().zip([-1.0, 1.0]) {
        assert!((a - b).abs() < 1e-10);
    }
    let part = domains_of_attraction(&p);
    assert_eq!(part.domain_of(0.5), Some(1));
    let (a, b) = part.intervals[1];
    assert!((a + 1.0).abs() < 1e-10 && (b - 1.0).abs() < 1e-10);
}

/// Coefficients of `F` with `F' = c * prod (x - r)` and `F(0) = 0`.
fn integrate_roots(c: f64, roots: &[f64]) -> Vec<f64> {
    let mut d = vec![c];
    for &r in roots {
        let mut next = vec![0.0; d.len() + 1];
        for (k, &a) in d.iter().enumerate() {
            next[k + 1] += a;
            next[k] -= r * a;
        }
        d = next;
    }
    let mut f = vec![0.0];
    f.extend(d.iter().enumerate().map(|(k, a)| a / (k + 1) as f64));
    f
}

fn spaced_roots() -> impl Strategy<Value = Vec<f64>> {
    prop_oneof![Just(3usize), Just(5usize)].prop_flat_map(|k| {
        (prop::collection::vec(0.3f64..1.2, k), -2.5f64..-1.0).prop_map(|(gaps, start)| {
            let mut r = vec![start];
            for g in &gaps[1..] {
                let last = *r.last().unwrap();
                r.push(last + g);
            }
            r
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn even_degree_polynomials_are_admissible(roots in spaced_roots(), c in 0.2f64..3.0) {
        let p = Potential::polynomial(integrate_roots(c, &roots)).unwrap();
        prop_assert!(p.degree() >= 4 && p.degree().is_multiple_of(2));
        prop_assert!(validate_assumptions(&p).passed);
        let (minima, maxima) = find_critical_points(&p, (-10.0, 10.0)).unwrap();
        prop_assert_eq!(minima.len(), maxima.len() + 1);
        for (k, m) in minima.iter().enumerate() {
            prop_assert!((m - roots[2 * k]).abs() < 1e-7);
        }
        for (k, m) in maxima.iter().enumerate() {
            prop_assert!((m - roots[2 * k + 1]).abs() < 1e-7);
            prop_assert!(minima[k] < *m && *m < minima[k + 1]);
        }
    }
}

#[test]
fn domains_agree_with_gradient_flow() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for name in ["double_well", "tilted_double_well", "triple_well"] {
        let p = Potential::preset(name).unwrap();
        let part = domains_of_attraction(&p);
        let mut tested = 0;
        while tested < 1000 {
            let x: f64 = rng.random_range(-2.5..2.5);
            if p.maxima().iter().any(|m| (m - x).abs() < 1e-2) {
                continue;
            }
            let mut phi = x;
            let landed = loop {
                if let Some(j) = p.minima().iter().position(|m| (m - phi).abs() < 1e-3) {
                    break j;
                }
                phi -= 1e-3 * p.grad(phi);
            };
            assert_eq!(part.domain_of(x), Some(landed), "{name}: x = {x}");
            tested += 1;
        }
    }
}
