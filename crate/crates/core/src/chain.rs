//! Target Markov chains with a prescribed spectrum and the eigenvector scaling
//! that keeps every coupling weight positive.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::spectral::tridiag::{eigensolve_tridiagonal, SymTridiagonal};
use crate::spectral::SpectralDecomposition;
use crate::{Error, Result};

/// Relative tolerance for matching chain and diffusion eigenvalues.
pub const EIGENVALUE_MATCH_TOLERANCE: f64 = 1e-6;

const SYNTH_MAX_ITERATIONS: usize = 200;
const SYNTH_TOLERANCE: f64 = 1e-10;
const SYNTH_TARGET: f64 = 1e-13;
const SYNTH_STARTS: usize = 64;

/// Family from which the generator is synthesized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// Two states, `Q_01 = theta * lambda_1`, `Q_10 = (1 - theta) * lambda_1`.
    TwoState { theta: f64 },
    /// Birth-death chain on `{0..m}` with the given stationary law
    /// (uniform when `None`).
    BirthDeath { stationary: Option<Vec<f64>> },
}

/// How the eigenvector scales `c_k` are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// `c_k = kappa / (m * |xi_hat|_inf * |eta_k|_inf)`.
    #[default]
    Budget,
    /// `m = 1` only: fraction `kappa` of the exact positivity boundary.
    MaximizeFirst,
}

/// Initial law of the chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialLaw {
    #[default]
    Uniform,
    Stationary,
    Point(usize),
    Explicit(Vec<f64>),
}

/// Chain generator together with its scaled right eigenvectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainSpec {
    /// Generator, row-major, `(m+1) x (m+1)`.
    pub q: Vec<Vec<f64>>,
    /// `lambda_0 = 0, lambda_1, ..., lambda_m` of the chain itself (the spectrum
    /// of `Q` is their negation).
    pub eigenvalues: Vec<f64>,
    /// Unit sup-norm eigenvectors, first entry positive, `k = 1..m`.
    pub xi_hat: Vec<Vec<f64>>,
    pub scales: Vec<f64>,
    /// `xi^(k) = c_k * xi_hat^(k)`, `k = 1..m`.
    pub xi: Vec<Vec<f64>>,
    pub p: Vec<f64>,
    pub kappa: f64,
    /// Smallest `alpha_i(x_l)` over the grid.
    pub min_alpha: f64,
}

impl ChainSpec {
    pub fn m(&self) -> usize {
        self.q.len() - 1
    }

    pub fn q_matrix(&self) -> DMatrix<f64> {
        to_matrix(&self.q)
    }

    /// `xi^(0) = 1` followed by the scaled eigenvectors.
    pub fn xi_with_constant(&self) -> Vec<Vec<f64>> {
        std::iter::once(vec![1.0; self.q.len()]).chain(self.xi.iter().cloned()).collect()
    }

    /// Builds a spec from an explicit generator and a decomposition.
    pub fn build(
        q: Vec<Vec<f64>>,
        dec: &SpectralDecomposition,
        kappa: f64,
        scaling: Scaling,
        initial: &InitialLaw,
    ) -> Result<Self> {
        check_square_generator(&q)?;
        let m = q.len() - 1;
        if dec.m() < m {
            return Err(Error::InvalidInput(format!(
                "decomposition has {} nontrivial eigenfunctions, chain needs {m}",
                dec.m()
            )));
        }
        let eta: Vec<&[f64]> = (1..=m).map(|k| dec.eigenfunctions[k].as_slice()).collect();
        let scaled = scaled_eigenvectors(&q, &dec.eigenvalues[1..=m], &eta, kappa, scaling)?;
        let p = resolve_initial(&q, initial)?;
        Ok(Self {
            q,
            eigenvalues: scaled.eigenvalues,
            xi_hat: scaled.xi_hat,
            scales: scaled.scales,
            xi: scaled.xi,
            p,
            kappa,
            min_alpha: scaled.min_alpha,
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("chain spec is plain data")
    }
}

pub(crate) fn to_matrix(q: &[Vec<f64>]) -> DMatrix<f64> {
    let n = q.len();
    DMatrix::from_fn(n, n, |i, j| q[i][j])
}

fn check_square_generator(q: &[Vec<f64>]) -> Result<()> {
    if q.len() < 2 || q.iter().any(|row| row.len() != q.len()) {
        return Err(Error::InvalidInput("Q must be square with at least two states".into()));
    }
    if q.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("Q has non-finite entries".into()));
    }
    Ok(())
}

/// Synthesizes a generator whose nonzero eigenvalues are `-lambdas`.
pub fn synth_generator(lambdas: &[f64], shape: &Shape) -> Result<Vec<Vec<f64>>> {
    if lambdas.is_empty() {
        return Err(Error::InvalidInput("need at least one nonzero eigenvalue".into()));
    }
    if lambdas.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(Error::InvalidInput(format!("eigenvalues must be positive: {lambdas:?}")));
    }
    if lambdas.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput(format!("eigenvalues must be nondecreasing: {lambdas:?}")));
    }
    match shape {
        Shape::TwoState { theta } => {
            if lambdas.len() != 1 {
                return Err(Error::InvalidInput(format!(
                    "two_state needs m = 1, got m = {}",
                    lambdas.len()
                )));
            }
            if !(*theta > 0.0 && *theta < 1.0) {
                return Err(Error::InvalidInput(format!("theta must lie in (0, 1), got {theta}")));
            }
            let l = lambdas[0];
            let q01 = theta * l;
            let q10 = (1.0 - theta) * l;
            Ok(vec![vec![-q01, q01], vec![q10, -q10]])
        }
        Shape::BirthDeath { stationary } => {
            let m = lambdas.len();
            let pi = match stationary {
                Some(pi) => {
                    if pi.len() != m + 1 || pi.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                        return Err(Error::InvalidInput(format!(
                            "stationary law must have {} positive entries",
                            m + 1
                        )));
                    }
                    let s: f64 = pi.iter().sum();
                    pi.iter().map(|v| v / s).collect()
                }
                None => vec![1.0 / (m + 1) as f64; m + 1],
            };
            birth_death(lambdas, &pi)
        }
    }
}

/// Symmetrized birth-death matrix for conductances `c_i = pi_i a_i = pi_{i+1} b_{i+1}`.
fn birth_death_symmetric(c: &[f64], pi: &[f64]) -> SymTridiagonal {
    let n = pi.len();
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n - 1];
    for i in 0..n - 1 {
        diag[i] += c[i] / pi[i];
        diag[i + 1] += c[i] / pi[i + 1];
        off[i] = -c[i] / (pi[i] * pi[i + 1]).sqrt();
    }
    SymTridiagonal { diag, off }
}

/// Nonzero eigenvalues, their eigenvectors and relative residuals.
fn bd_spectrum(c: &[f64], pi: &[f64], lambdas: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>, Vec<f64>)> {
    let s = birth_death_symmetric(c, pi);
    let pairs = eigensolve_tridiagonal(&s, pi.len())?;
    let mu: Vec<f64> = pairs[1..].iter().map(|p| p.value).collect();
    let vecs = pairs[1..].iter().map(|p| p.vector.clone()).collect();
    let r = mu.iter().zip(lambdas).map(|(a, b)| (a - b) / b).collect();
    Ok((mu, vecs, r))
}

fn birth_death(lambdas: &[f64], pi: &[f64]) -> Result<Vec<Vec<f64>>> {
    let m = lambdas.len();
    if lambdas.windows(2).any(|w| w[1] <= w[0] * (1.0 + 1e-12)) {
        return Err(Error::InfeasibleSpectrum(format!(
            "birth-death spectra are simple, got repeated eigenvalues {lambdas:?}"
        )));
    }
    let max_lambda = lambdas[m - 1];
    // First start is mildly asymmetric: symmetric starts can sit on the fold of
    // the reflection-invariant spectrum map and never leave it.
    let base: Vec<f64> = (0..m)
        .map(|i| pi[i].min(pi[i + 1]) * (1.0 + 0.1 * i as f64 / m as f64))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0xb1d);
    let mut best: Option<Fit> = None;
    for start in 0..SYNTH_STARTS {
        let mut c = base.clone();
        if start > 0 {
            c.iter_mut().for_each(|v| *v *= rng.random_range(-2.0f64..2.0).exp());
        }
        let (mu, _, _) = bd_spectrum(&c, pi, lambdas)?;
        let scale = lambdas.iter().sum::<f64>() / mu.iter().sum::<f64>();
        c.iter_mut().for_each(|v| *v *= scale);
        let fit = levenberg_marquardt(c, pi, lambdas)?;
        if fit.residual <= SYNTH_TOLERANCE * max_lambda {
            return Ok(birth_death_generator(&fit.c, pi));
        }
        if best.as_ref().is_none_or(|b| fit.residual < b.residual) {
            best = Some(fit);
        }
    }
    let best = best.expect("at least one start");
    if best.stalled {
        Err(Error::InfeasibleSpectrum(format!(
            "no birth-death chain with stationary law {pi:?} matches {lambdas:?}; \
             best of {SYNTH_STARTS} starts stalls at residual {:.3e} (eigenvalues {:?})",
            best.residual, best.mu
        )))
    } else {
        Err(Error::SynthesisDiverged { iterations: SYNTH_MAX_ITERATIONS, residual: best.residual })
    }
}

struct Fit {
    c: Vec<f64>,
    mu: Vec<f64>,
    residual: f64,
    stalled: bool,
}

/// Levenberg-Marquardt on log-conductances against relative eigenvalue errors.
fn levenberg_marquardt(mut c: Vec<f64>, pi: &[f64], lambdas: &[f64]) -> Result<Fit> {
    let m = lambdas.len();
    let max_lambda = lambdas[m - 1];
    let abs_residual =
        |mu: &[f64]| mu.iter().zip(lambdas).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let cost = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();
    let (mut mu, mut vecs, mut r) = bd_spectrum(&c, pi, lambdas)?;
    let mut damping = 1e-3;
    for _ in 0..SYNTH_MAX_ITERATIONS {
        if abs_residual(&mu) <= SYNTH_TARGET * max_lambda {
            break;
        }
        // d mu_k / d ln c_i = c_i (v_i / sqrt(pi_i) - v_{i+1} / sqrt(pi_{i+1}))^2
        let jac = DMatrix::from_fn(m, m, |k, i| {
            let v = &vecs[k];
            let d = v[i] / pi[i].sqrt() - v[i + 1] / pi[i + 1].sqrt();
            c[i] * d * d / lambdas[k]
        });
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * DMatrix::from_column_slice(m, 1, &r);
        let current = cost(&r);
        let mut improved = false;
        while damping < 1e12 {
            let mut lhs = jtj.clone();
            for i in 0..m {
                lhs[(i, i)] += damping * jtj[(i, i)].max(1e-300);
            }
            let Some(step) = lhs.lu().solve(&(-&grad)) else {
                damping *= 10.0;
                continue;
            };
            let trial: Vec<f64> = (0..m).map(|i| c[i] * step[i].clamp(-2.0, 2.0).exp()).collect();
            let (tmu, tvecs, tr) = bd_spectrum(&trial, pi, lambdas)?;
            if cost(&tr) < current {
                c = trial;
                mu = tmu;
                vecs = tvecs;
                r = tr;
                damping = (damping / 3.0).max(1e-12);
                improved = true;
                break;
            }
            damping *= 4.0;
        }
        if !improved {
            let residual = abs_residual(&mu);
            return Ok(Fit { c, mu, residual, stalled: true });
        }
    }
    let residual = abs_residual(&mu);
    Ok(Fit { c, mu, residual, stalled: false })
}

fn birth_death_generator(c: &[f64], pi: &[f64]) -> Vec<Vec<f64>> {
    let n = pi.len();
    let mut q = vec![vec![0.0; n]; n];
    for i in 0..n - 1 {
        q[i][i + 1] = c[i] / pi[i];
        q[i + 1][i] = c[i] / pi[i + 1];
    }
    for (i, row) in q.iter_mut().enumerate() {
        row[i] = -(0..n).filter(|&j| j != i).map(|j| row[j]).sum::<f64>();
    }
    q
}

/// Output of [`scaled_eigenvectors`].
#[derive(Debug, Clone)]
pub struct ScaledEigenvectors {
    /// Eigenvalues of `-Q`, with `lambda_0` set to exactly 0.
    pub eigenvalues: Vec<f64>,
    pub xi_hat: Vec<Vec<f64>>,
    pub scales: Vec<f64>,
    pub xi: Vec<Vec<f64>>,
    pub min_alpha: f64,
}

/// Right eigenvectors of `Q` for `-lambda_k`, scaled so that
/// `alpha_i = 1 + sum_k xi_i^(k) eta_k` stays at least `1 - kappa`.
pub fn scaled_eigenvectors(
    q: &[Vec<f64>],
    lambdas: &[f64],
    eta: &[&[f64]],
    kappa: f64,
    scaling: Scaling,
) -> Result<ScaledEigenvectors> {
    check_square_generator(q)?;
    let m = q.len() - 1;
    if lambdas.len() != m || eta.len() != m {
        return Err(Error::InvalidInput(format!(
            "need {m} eigenvalues and eigenfunctions, got {} and {}",
            lambdas.len(),
            eta.len()
        )));
    }
    if !(0.0..1.0).contains(&kappa) {
        return Err(Error::InvalidInput(format!("kappa must lie in [0, 1), got {kappa}")));
    }
    if scaling == Scaling::MaximizeFirst && m != 1 {
        return Err(Error::InvalidInput("maximize-first scaling requires m = 1".into()));
    }
    let chain_eigs = chain_eigenvalues(q)?;
    let mut xi_hat = Vec::with_capacity(m);
    for (k, &lambda) in lambdas.iter().enumerate() {
        let chain = chain_eigs[k + 1];
        if (chain - lambda).abs() > EIGENVALUE_MATCH_TOLERANCE * lambda {
            return Err(Error::EigenvalueMismatch { k: k + 1, chain, diffusion: lambda });
        }
        if k > 0 && (chain_eigs[k + 1] - chain_eigs[k]).abs() <= 1e-9 * chain {
            return Err(Error::DefectiveEigenvector(chain));
        }
        let v = right_eigenvector(q, chain)?;
        let residual = generator_residual(q, &v, chain);
        if residual > 1e-10 * chain {
            return Err(Error::DefectiveEigenvector(chain));
        }
        xi_hat.push(v);
    }

    let sup = |v: &[f64]| v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let scales: Vec<f64> = match scaling {
        Scaling::Budget => (0..m)
            .map(|k| kappa / (m as f64 * sup(&xi_hat[k]) * sup(eta[k])))
            .collect(),
        Scaling::MaximizeFirst => {
            let worst = xi_hat[0]
                .iter()
                .flat_map(|xi| eta[0].iter().map(move |e| -xi * e))
                .fold(0.0f64, f64::max);
            if worst <= 0.0 {
                return Err(Error::InvalidInput("eta_1 does not change sign".into()));
            }
            vec![kappa / worst]
        }
    };
    let xi: Vec<Vec<f64>> = xi_hat
        .iter()
        .zip(&scales)
        .map(|(v, c)| v.iter().map(|x| x * c).collect())
        .collect();
    let n = eta[0].len();
    let mut min_alpha = f64::INFINITY;
    for i in 0..=m {
        for l in 0..n {
            let a = 1.0 + (0..m).map(|k| xi[k][i] * eta[k][l]).sum::<f64>();
            min_alpha = min_alpha.min(a);
        }
    }
    if min_alpha <= 0.0 {
        return Err(Error::NonPositiveAlpha(min_alpha));
    }
    let mut eigenvalues = chain_eigs;
    eigenvalues[0] = 0.0;
    Ok(ScaledEigenvectors { eigenvalues, xi_hat, scales, xi, min_alpha })
}

/// Eigenvalues of `-Q` sorted ascending (the first is 0 up to rounding).
pub fn chain_eigenvalues(q: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mat = -to_matrix(q);
    let schur = mat.schur();
    let mut eigs: Vec<f64> = match schur.eigenvalues() {
        Some(e) => e.iter().copied().collect(),
        None => {
            let complex = schur.complex_eigenvalues();
            let worst = complex.iter().fold(0.0f64, |a, z| a.max(z.im.abs()));
            return Err(Error::InvalidInput(format!(
                "Q has complex spectrum (max |Im| = {worst:.3e})"
            )));
        }
    };
    eigs.sort_by(f64::total_cmp);
    Ok(eigs)
}

/// Null vector of `Q + lambda I` by full-pivot elimination, then normalized to
/// unit sup norm with a positive first nonzero entry.
fn right_eigenvector(q: &[Vec<f64>], lambda: f64) -> Result<Vec<f64>> {
    let n = q.len();
    let mut a = to_matrix(q);
    for i in 0..n {
        a[(i, i)] += lambda;
    }
    let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut cols: Vec<usize> = (0..n).collect();
    for step in 0..n - 1 {
        let (mut pr, mut pc, mut best) = (step, step, 0.0);
        for r in step..n {
            for c in step..n {
                if a[(r, c)].abs() > best {
                    best = a[(r, c)].abs();
                    pr = r;
                    pc = c;
                }
            }
        }
        if best <= 1e-9 * scale {
            // Rank below n - 1: eigenvalue is repeated.
            return Err(Error::DefectiveEigenvector(lambda));
        }
        a.swap_rows(step, pr);
        a.swap_columns(step, pc);
        cols.swap(step, pc);
        for r in step + 1..n {
            let f = a[(r, step)] / a[(step, step)];
            if f != 0.0 {
                for c in step..n {
                    let v = a[(step, c)];
                    a[(r, c)] -= f * v;
                }
            }
        }
    }
    // Back substitution with the last (pivoted) unknown set to 1.
    let mut y = vec![0.0; n];
    y[n - 1] = 1.0;
    for r in (0..n - 1).rev() {
        let s: f64 = (r + 1..n).map(|c| a[(r, c)] * y[c]).sum();
        y[r] = -s / a[(r, r)];
    }
    let mut v = vec![0.0; n];
    for (pos, &col) in cols.iter().enumerate() {
        v[col] = y[pos];
    }
    let sup = v.iter().fold(0.0f64, |s, x| s.max(x.abs()));
    let first = v.iter().copied().find(|x| x.abs() > 1e-12 * sup).unwrap_or(1.0);
    let sign = first.signum() / sup;
    Ok(v.into_iter().map(|x| x * sign).collect())
}

fn generator_residual(q: &[Vec<f64>], v: &[f64], lambda: f64) -> f64 {
    q.iter()
        .zip(v)
        .map(|(row, vi)| (row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() + lambda * vi).abs())
        .fold(0.0, f64::max)
}

/// Stationary law of an irreducible generator.
pub fn stationary_distribution(q: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = q.len();
    // Solve pi Q = 0 with the last equation replaced by sum(pi) = 1.
    let mut a = to_matrix(q).transpose();
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = nalgebra::DVector::zeros(n);
    b[n - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Singular("Q has no unique stationary law".into()))?;
    Ok(pi.iter().copied().collect())
}

fn resolve_initial(q: &[Vec<f64>], initial: &InitialLaw) -> Result<Vec<f64>> {
    let n = q.len();
    let p = match initial {
        InitialLaw::Uniform => vec![1.0 / n as f64; n],
        InitialLaw::Stationary => stationary_distribution(q)?,
        InitialLaw::Point(i) => {
            if *i >= n {
                return Err(Error::InvalidInput(format!("initial state {i} outside 0..{n}")));
            }
            let mut p = vec![0.0; n];
            p[*i] = 1.0;
            p
        }
        InitialLaw::Explicit(p) => p.clone(),
    };
    check_distribution(&p, n)?;
    Ok(p)
}

pub(crate) fn check_distribution(p: &[f64], n: usize) -> Result<()> {
    if p.len() != n || p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidInput(format!("initial law must have {n} nonnegative entries")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!("initial law sums to {s}, not 1")));
    }
    Ok(())
}

/// Result of [`validate_chain`].
#[derive(Debug, Clone, Serialize)]
pub struct ChainReport {
    pub failures: Vec<String>,
    pub irreducible: bool,
    pub stationary: Option<Vec<f64>>,
    /// `|Q xi^(k) + lambda_k xi^(k)|_inf / lambda_k` per eigenvector.
    pub eigen_residuals: Vec<f64>,
}

impl ChainReport {
    pub fn is_valid(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn require(&self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid chain: {}", self.failures.join("; "))))
        }
    }
}

/// Checks generator structure and eigen relations of `spec`.
pub fn validate_chain(spec: &ChainSpec) -> ChainReport {
    let mut failures = Vec::new();
    let q = &spec.q;
    if let Err(e) = check_square_generator(q) {
        return ChainReport { failures: vec![e.to_string()], irreducible: false, stationary: None, eigen_residuals: vec![] };
    }
    let n = q.len();
    for (i, row) in q.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if i != j && v < 0.0 {
                failures.push(format!("Q[{i}][{j}] = {v} is negative"));
            }
        }
        let sum: f64 = row.iter().sum();
        let scale = row.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
        if sum.abs() > 1e-12 * scale {
            failures.push(format!("row {i} sums to {sum:e}"));
        }
    }
    let irreducible = strongly_connected(q);
    if !irreducible {
        failures.push("positive-rate graph is not strongly connected".into());
    }
    let mut eigen_residuals = Vec::new();
    for (k, xi) in spec.xi_hat.iter().enumerate() {
        let lambda = spec.eigenvalues.get(k + 1).copied().unwrap_or(f64::NAN);
        let r = generator_residual(q, xi, lambda) / lambda;
        if !(r <= 1e-10) {
            failures.push(format!("eigenvector {} residual {r:.3e} exceeds 1e-10 lambda", k + 1));
        }
        eigen_residuals.push(r);
    }
    if let Err(e) = check_distribution(&spec.p, n) {
        failures.push(e.to_string());
    }
    let stationary = if irreducible { stationary_distribution(q).ok() } else { None };
    ChainReport { failures, irreducible, stationary, eigen_residuals }
}

fn strongly_connected(q: &[Vec<f64>]) -> bool {
    let n = q.len();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let rate = if forward { q[i][j] } else { q[j][i] };
                if j != i && rate > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}
