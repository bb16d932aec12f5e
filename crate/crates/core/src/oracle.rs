//! Exact finite-state checks: distributions evolved under the joint generator
//! by uniformization, and mean hitting times by linear solves.

use serde::Serialize;

use crate::coupling::CouplingModel;
use crate::sparse::SparseGenerator;
use crate::spectral::DiscreteGenerator;
use crate::{Error, Result};

/// Default Poisson tail tolerance for uniformization.
pub const DEFAULT_TOLERANCE: f64 = 1e-12;

/// Chain states with less Y-mass than this are skipped.
pub const MIN_STATE_MASS: f64 = 1e-14;

/// Poisson weights `P(N = k)`, `N ~ Poisson(rate)`, for `k` in `left..=right`,
/// normalized over the kept range. The truncated mass is below `tol`.
pub fn poisson_weights(rate: f64, tol: f64) -> (usize, Vec<f64>) {
    if rate <= 0.0 {
        return (0, vec![1.0]);
    }
    let mode = rate.floor() as usize;
    // Relative weights, w(mode) = 1. Cutting where the relative weight drops
    // below tol * 1e-3 leaves a normalized tail far below tol.
    let cut = tol * 1e-3;
    let mut right = vec![1.0];
    let mut w = 1.0;
    let mut k = mode;
    loop {
        w *= rate / (k + 1) as f64;
        k += 1;
        if w < cut {
            break;
        }
        right.push(w);
    }
    let mut left = Vec::new();
    let mut w = 1.0;
    for k in (1..=mode).rev() {
        w *= k as f64 / rate;
        if w < cut {
            break;
        }
        left.push(w);
    }
    let start = mode - left.len();
    left.reverse();
    left.extend(right);
    let total: f64 = left.iter().sum();
    left.iter_mut().for_each(|v| *v /= total);
    (start, left)
}

/// `nu0 exp(B t)` by uniformization with `P = I + B / Lambda`.
pub fn evolve_distribution(b: &SparseGenerator, nu0: &[f64], t: f64, tol: f64) -> Result<Vec<f64>> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidInput(format!("time must be nonnegative, got {t}")));
    }
    if nu0.len() != b.len() {
        return Err(Error::InvalidInput("distribution length does not match generator".into()));
    }
    let lambda = b.max_exit_rate();
    if lambda == 0.0 || t == 0.0 {
        return Ok(nu0.to_vec());
    }
    let (left, weights) = poisson_weights(lambda * t, tol);
    let p = uniformized(b, lambda);
    let mut v = nu0.to_vec();
    let mut next = vec![0.0; v.len()];
    let mut acc = vec![0.0; v.len()];
    for k in 0..left + weights.len() {
        if k >= left {
            let w = weights[k - left];
            acc.iter_mut().zip(&v).for_each(|(a, x)| *a += w * x);
        }
        if k + 1 < left + weights.len() {
            step_left(&p, &v, &mut next);
            std::mem::swap(&mut v, &mut next);
        }
    }
    Ok(acc)
}

/// Evolves through increasing `times`, reusing each result as the next start.
pub fn evolve_at_times(b: &SparseGenerator, nu0: &[f64], times: &[f64], tol: f64) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(times.len());
    let mut current = nu0.to_vec();
    let mut t_prev = 0.0;
    for &t in times {
        if t < t_prev {
            return Err(Error::InvalidInput("times must be nondecreasing".into()));
        }
        current = evolve_distribution(b, &current, t - t_prev, tol)?;
        out.push(current.clone());
        t_prev = t;
    }
    Ok(out)
}

fn uniformized(b: &SparseGenerator, lambda: f64) -> SparseGenerator {
    let rows = (0..b.len())
        .map(|i| {
            b.row(i)
                .map(|(c, v)| if c == i { (c, 1.0 + v / lambda) } else { (c, v / lambda) })
                .collect()
        })
        .collect();
    SparseGenerator::from_rows(rows).expect("same sparsity as a valid matrix")
}

fn step_left(p: &SparseGenerator, v: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    for (i, &vi) in v.iter().enumerate() {
        if vi != 0.0 {
            for (c, w) in p.row(i) {
                out[c] += vi * w;
            }
        }
    }
}

/// Total-variation distance between two nonnegative vectors, each normalized
/// by its own sum.
pub fn tv(a: &[f64], b: &[f64]) -> f64 {
    let sa: f64 = a.iter().sum();
    let sb: f64 = b.iter().sum();
    0.5 * a.iter().zip(b).map(|(x, y)| (x / sa - y / sb).abs()).sum::<f64>()
}

/// One `(t, j)` entry of a conditional-law check.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionalEntry {
    pub t: f64,
    pub state: usize,
    pub mass: f64,
    /// `None` when the state is skipped for lack of mass.
    pub tv: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionalLawReport {
    pub max_tv: f64,
    pub entries: Vec<ConditionalEntry>,
    pub notes: Vec<String>,
    /// Largest `|sum(nu_t) - 1|` seen.
    pub mass_drift: f64,
}

/// Compares the law of `X(t)` given `Y(t) = j` under `nu exp(B t)` with
/// `alpha_j w` for every `t` and every `j` with positive mass.
pub fn check_conditional_law(
    b: &SparseGenerator,
    model: &CouplingModel,
    p: &[f64],
    times: &[f64],
) -> Result<ConditionalLawReport> {
    let nu0 = model.initial_law(p);
    let evolved = evolve_at_times(b, &nu0, times, DEFAULT_TOLERANCE)?;
    let s = model.states();
    let n = model.nodes.len();
    let mut entries = Vec::new();
    let mut notes = Vec::new();
    let mut max_tv: f64 = 0.0;
    let mut mass_drift: f64 = 0.0;
    for (&t, nu) in times.iter().zip(&evolved) {
        mass_drift = mass_drift.max((nu.iter().sum::<f64>() - 1.0).abs());
        for j in 0..s {
            let column: Vec<f64> = (0..n).map(|l| nu[l * s + j]).collect();
            let mass: f64 = column.iter().sum();
            if mass < MIN_STATE_MASS {
                notes.push(format!("t = {t}: state {j} skipped (mass {mass:.2e})"));
                entries.push(ConditionalEntry { t, state: j, mass, tv: None });
                continue;
            }
            let d = tv(&column, model.conditional_density(j));
            max_tv = max_tv.max(d);
            entries.push(ConditionalEntry { t, state: j, mass, tv: Some(d) });
        }
    }
    Ok(ConditionalLawReport { max_tv, entries, notes, mass_drift })
}

#[derive(Debug, Clone, Serialize)]
pub struct MarginalReport {
    pub max_l1: f64,
    /// `(t, joint marginal, p exp(Qt))`.
    pub entries: Vec<(f64, Vec<f64>, Vec<f64>)>,
}

/// Compares the chain marginal of `nu0 exp(B t)` with `p exp(Q t)`.
pub fn check_y_marginal(
    b: &SparseGenerator,
    nu0: &[f64],
    q: &[Vec<f64>],
    p: &[f64],
    times: &[f64],
) -> Result<MarginalReport> {
    let s = q.len();
    let qs = SparseGenerator::from_dense(q)?;
    let joint = evolve_at_times(b, nu0, times, DEFAULT_TOLERANCE)?;
    let chain = evolve_at_times(&qs, p, times, DEFAULT_TOLERANCE)?;
    let mut max_l1: f64 = 0.0;
    let mut entries = Vec::new();
    for ((&t, nu), pt) in times.iter().zip(&joint).zip(chain) {
        let mut marginal = vec![0.0; s];
        for (idx, v) in nu.iter().enumerate() {
            marginal[idx % s] += v;
        }
        let l1: f64 = marginal.iter().zip(&pt).map(|(a, b)| (a - b).abs()).sum();
        max_l1 = max_l1.max(l1);
        entries.push((t, marginal, pt));
    }
    Ok(MarginalReport { max_l1, entries })
}

/// Expected hitting time of `target` from every state of a dense generator
/// (0 on the target).
pub fn mean_exit_times_chain(q: &[Vec<f64>], target: &[bool]) -> Result<Vec<f64>> {
    let n = q.len();
    if target.len() != n || !target.iter().any(|&t| t) {
        return Err(Error::InvalidInput("target must be a nonempty subset of the states".into()));
    }
    let free: Vec<usize> = (0..n).filter(|&i| !target[i]).collect();
    let mut u = vec![0.0; n];
    if free.is_empty() {
        return Ok(u);
    }
    let k = free.len();
    let a = nalgebra::DMatrix::from_fn(k, k, |r, c| q[free[r]][free[c]]);
    let rhs = nalgebra::DVector::from_element(k, -1.0);
    let sol = a
        .full_piv_lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("target unreachable from some state".into()))?;
    if sol.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Singular("target unreachable from some state".into()));
    }
    for (r, &i) in free.iter().enumerate() {
        u[i] = sol[r];
    }
    Ok(u)
}

/// Expected hitting time of the target nodes for the discretized diffusion,
/// by the Thomas algorithm on `A_h u = -1` with `u = 0` on the target.
pub fn mean_exit_times_diffusion(gen: &DiscreteGenerator, target: &[bool]) -> Result<Vec<f64>> {
    let n = gen.len();
    if target.len() != n || !target.iter().any(|&t| t) {
        return Err(Error::InvalidInput("target must be a nonempty set of nodes".into()));
    }
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for i in 0..n {
        if target[i] {
            diag[i] = 1.0;
        } else {
            // Rows scaled by the exit rate keep the elimination well balanced.
            let out = gen.birth[i] + gen.death[i];
            if i > 0 {
                lower[i] = gen.death[i] / out;
            }
            if i + 1 < n {
                upper[i] = gen.birth[i] / out;
            }
            diag[i] = -1.0;
            rhs[i] = -1.0 / out;
        }
    }
    for i in 1..n {
        let f = lower[i] / diag[i - 1];
        diag[i] -= f * upper[i - 1];
        rhs[i] -= f * rhs[i - 1];
        if !(diag[i].abs() > 1e-300) {
            return Err(Error::Singular(format!("target unreachable (zero pivot at node {i})")));
        }
    }
    let mut u = vec![0.0; n];
    u[n - 1] = rhs[n - 1] / diag[n - 1];
    for i in (0..n - 1).rev() {
        u[i] = (rhs[i] - upper[i] * u[i + 1]) / diag[i];
    }
    if u.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Singular("target unreachable from some node".into()));
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{synth_generator, ChainSpec, InitialLaw, Scaling, Shape};
    use crate::coupling::{build_coupling, build_joint_generator};
    use crate::potential::Potential;
    use crate::spectral::{build_generator, decompose, Grid};

    #[test]
    fn poisson_weights_match_pmf() {
        let (left, w) = poisson_weights(3.0, 1e-12);
        assert_eq!(left, 0);
        let mut fact = 1.0;
        for (k, v) in w.iter().enumerate().take(10) {
            if k > 0 {
                fact *= k as f64;
            }
            let pmf = (-3.0f64).exp() * 3.0f64.powi(k as i32) / fact;
            assert!((v - pmf).abs() < 1e-14, "k = {k}");
        }
        let (left, w) = poisson_weights(1e5, 1e-12);
        assert!(left > 90_000 && left + w.len() < 110_000);
        let mean: f64 = w.iter().enumerate().map(|(i, v)| (left + i) as f64 * v).sum();
        assert!((mean - 1e5).abs() < 1e-6 * 1e5);
    }

    #[test]
    fn two_state_closed_form() {
        let b = SparseGenerator::from_dense(&[vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap();
        assert_eq!(evolve_distribution(&b, &[1.0, 0.0], 0.0, 1e-12).unwrap(), vec![1.0, 0.0]);
        let v = evolve_distribution(&b, &[1.0, 0.0], 1.0, 1e-12).unwrap();
        let e = (-2.0f64).exp();
        assert!((v[0] - 0.5 * (1.0 + e)).abs() < 1e-10);
        assert!((v[1] - 0.5 * (1.0 - e)).abs() < 1e-10);
        let zero = SparseGenerator::from_dense(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(evolve_distribution(&zero, &[0.3, 0.7], 5.0, 1e-12).unwrap(), vec![0.3, 0.7]);
    }

    fn setup(kappa: f64) -> (CouplingModel, SparseGenerator, ChainSpec) {
        let p = Potential::preset("double_well").unwrap();
        let g = Grid::auto(&p, 0.1, 120).unwrap();
        let gen = build_generator(&p, 0.1, &g).unwrap();
        let dec = decompose(&gen, 1).unwrap();
        let q = synth_generator(&dec.eigenvalues[1..], &Shape::TwoState { theta: 0.25 }).unwrap();
        let spec = ChainSpec::build(q, &dec, kappa, Scaling::Budget, &InitialLaw::Stationary).unwrap();
        let model = build_coupling(&dec, &spec).unwrap();
        let b = build_joint_generator(&model, &gen).unwrap();
        (model, b, spec)
    }

    #[test]
    fn constructed_stationary_law_is_invariant() {
        let (model, b, _) = setup(0.9);
        let residual = b.apply_left(&model.nu);
        let worst = residual.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let scale = b.max_exit_rate();
        assert!(worst <= 1e-13 * scale, "{worst:e}");
        let out = evolve_distribution(&b, &model.nu, 3.0, 1e-12).unwrap();
        let diff = out.iter().zip(&model.nu).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff <= 1e-10);
    }

    #[test]
    fn conditional_law_and_marginal_hold() {
        let (model, b, spec) = setup(0.9);
        let r = check_conditional_law(&b, &model, &[1.0, 0.0], &[0.0, 0.5, 4.0]).unwrap();
        assert!(r.max_tv <= 1e-8, "{}", r.max_tv);
        assert!(r.mass_drift <= 1e-12);
        // Y(0) = 0 surely, so state 1 is skipped at t = 0.
        assert_eq!(r.notes.len(), 1);
        let nu0 = model.initial_law(&[1.0, 0.0]);
        let m = check_y_marginal(&b, &nu0, &spec.q, &[1.0, 0.0], &[0.0, 1.0, 4.0]).unwrap();
        assert!(m.max_l1 <= 1e-8, "{}", m.max_l1);
        assert!((m.entries[0].1[0] - 1.0).abs() < 1e-14 && m.entries[0].2 == vec![1.0, 0.0]);
    }

    #[test]
    fn decoupled_case_keeps_gibbs_weights() {
        let (model, b, _) = setup(0.0);
        let r = check_conditional_law(&b, &model, &[0.5, 0.5], &[0.3, 2.0]).unwrap();
        assert!(r.max_tv <= 1e-12);
    }

    #[test]
    fn chain_mean_hitting_times() {
        let q = vec![vec![-0.4, 0.4], vec![0.6, -0.6]];
        let u = mean_exit_times_chain(&q, &[false, true]).unwrap();
        assert!((u[0] - 2.5).abs() < 1e-14 && u[1] == 0.0);
        // Birth-death on {0,1,2} with target {2}: hand-solved 2x2 system
        //   -a u0 + a u1 = -1,  b u0 - (b + c) u1 = -1.
        let (a, b, c) = (1.0, 2.0, 0.5);
        let q = vec![vec![-a, a, 0.0], vec![b, -(b + c), c], vec![0.0, 3.0, -3.0]];
        let u = mean_exit_times_chain(&q, &[false, false, true]).unwrap();
        let u1 = (1.0 + b / a) / c;
        let u0 = u1 + 1.0 / a;
        assert!((u[0] - u0).abs() < 1e-12 && (u[1] - u1).abs() < 1e-12);
        let q = vec![vec![-1.0, 1.0, 0.0], vec![1.0, -1.0, 0.0], vec![0.0, 1.0, -1.0]];
        assert!(mean_exit_times_chain(&q, &[false, false, true]).is_err());
    }

    #[test]
    fn diffusion_hitting_times_match_birth_death_sum() {
        // Independent route: E_i[tau_K] = sum_{j=i}^{K-1} (sum_{l<=j} w_l) / (w_j a_j).
        let p = Potential::preset("double_well").unwrap();
        let g = Grid::auto(&p, 0.15, 300).unwrap();
        let gen = build_generator(&p, 0.15, &g).unwrap();
        let k = g.nearest(0.5);
        let target: Vec<bool> = (0..gen.len()).map(|i| i >= k).collect();
        let u = mean_exit_times_diffusion(&gen, &target).unwrap();
        let mut cum = 0.0;
        let mut partial = vec![0.0; k];
        for j in 0..k {
            cum += gen.weights[j];
            partial[j] = cum / (gen.weights[j] * gen.birth[j]);
        }
        for i in (0..k).step_by(17) {
            let want: f64 = partial[i..].iter().sum();
            assert!((u[i] - want).abs() <= 1e-9 * want, "node {i}: {} vs {want}", u[i]);
        }
        assert!(u[k..].iter().all(|&v| v == 0.0));
    }
}
