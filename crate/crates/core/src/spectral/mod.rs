//! Discretized diffusion generator `A = eps d^2/dx^2 - F' d/dx` and its
//! low-lying spectrum.
//!
//! Two routes are provided. The reversible birth-death discretization is the
//! authoritative one: its eigenvectors make the signed measures `eta_k * w`
//! satisfy the discrete eigen-identity exactly. The Schrödinger route
//! `-d^2/dx^2 + V_eps` is an independent cross-check of the eigenvalues,
//! since `lambda_k = eps * lambda_hat_k`.

pub mod tridiag;

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::potential::Potential;
use tridiag::{eigensolve_tridiagonal, eigenvalues_tridiagonal, SymTridiagonal};

/// Gibbs mass allowed outside the truncation interval.
pub const TAIL_TOLERANCE: f64 = 1e-12;

/// Default number of grid nodes.
pub const DEFAULT_NODES: usize = 2000;

/// Uniform grid on `[-L, L]` with `n` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid {
    pub half_width: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(half_width: f64, n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidGrid(format!("need at least 3 nodes, got {n}")));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidGrid(format!("half width {half_width} must be positive")));
        }
        Ok(Self { half_width, n })
    }

    /// Smallest `L` holding every critical point inside and leaving at most
    /// `TAIL_TOLERANCE` Gibbs weight at `+-L`.
    pub fn auto(potential: &Potential, eps: f64, n: usize) -> Result<Self> {
        check_eps(eps)?;
        let fmin = potential.min_value();
        // Test the same expression `validate` uses so rounding cannot disagree.
        let small = |x: f64| (-(potential.eval(x) - fmin) / eps).exp() <= TAIL_TOLERANCE;
        let outer = potential
            .minima()
            .iter()
            .chain(potential.maxima())
            .map(|x| x.abs())
            .fold(0.0, f64::max);
        // F is monotone beyond the outermost critical point on each side.
        let solve_side = |sign: f64| {
            let mut lo = outer;
            let mut hi = outer + 1.0;
            while !small(sign * hi) {
                hi *= 2.0;
            }
            if small(sign * lo) {
                return lo;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if small(sign * mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        };
        let half_width = solve_side(1.0).max(solve_side(-1.0)).max(outer * 1.05 + 1e-3);
        let grid = Self::new(half_width, n)?;
        grid.validate(potential, eps)?;
        Ok(grid)
    }

    /// Checks the truncation-safety and critical-point containment invariants.
    pub fn validate(&self, potential: &Potential, eps: f64) -> Result<()> {
        let l = self.half_width;
        let fmin = potential.min_value();
        for x in [-l, l] {
            let tail = (-(potential.eval(x) - fmin) / eps).exp();
            if tail > TAIL_TOLERANCE {
                return Err(Error::InvalidGrid(format!(
                    "Gibbs weight exp(-(F({x}) - min F)/eps) = {tail:.3e} exceeds {TAIL_TOLERANCE:e}; increase L"
                )));
            }
        }
        for &c in potential.minima().iter().chain(potential.maxima()) {
            if c.abs() >= l {
                return Err(Error::InvalidGrid(format!("critical point {c} outside (-{l}, {l})")));
            }
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.n - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Index of the node nearest `x`, clamped to the grid.
    pub fn nearest(&self, x: f64) -> usize {
        let pos = ((x + self.half_width) / self.spacing()).round();
        pos.clamp(0.0, (self.n - 1) as f64) as usize
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("noise level eps = {eps} must be positive")))
    }
}

/// Reversible birth-death discretization of the diffusion generator.
#[derive(Debug, Clone, Serialize)]
pub struct DiscreteGenerator {
    pub eps: f64,
    pub spacing: f64,
    pub nodes: Vec<f64>,
    #[serde(skip)]
    pub f_values: Vec<f64>,
    /// Rate of `i -> i+1`.
    pub birth: Vec<f64>,
    /// Rate of `i -> i-1`.
    pub death: Vec<f64>,
    /// Stationary probability vector.
    pub weights: Vec<f64>,
    /// Node used to fix eigenvector signs (nearest the leftmost minimum).
    pub reference_node: usize,
    #[serde(skip)]
    pub grid: Option<Grid>,
    #[serde(skip)]
    pub potential: Option<Potential>,
}

/// Builds the generator on a validated grid.
pub fn build_generator(potential: &Potential, eps: f64, grid: &Grid) -> Result<DiscreteGenerator> {
    check_eps(eps)?;
    grid.validate(potential, eps)?;
    let nodes = grid.nodes();
    let f_values: Vec<f64> = nodes.iter().map(|&x| potential.eval(x)).collect();
    let reference = grid.nearest(potential.minima()[0]);
    let mut gen = DiscreteGenerator::from_values(nodes, f_values, eps, reference)?;
    gen.grid = Some(*grid);
    gen.potential = Some(potential.clone());
    Ok(gen)
}

impl DiscreteGenerator {
    /// Builds the generator from potential values on equally spaced nodes.
    ///
    /// Rates are `a_i = (eps/h^2) exp(-(F_{i+1} - F_i)/(2 eps))` and
    /// `b_i = (eps/h^2) exp(-(F_{i-1} - F_i)/(2 eps))`, reflecting at the ends.
    pub fn from_values(nodes: Vec<f64>, f_values: Vec<f64>, eps: f64, reference_node: usize) -> Result<Self> {
        check_eps(eps)?;
        let n = nodes.len();
        if n < 2 || f_values.len() != n {
            return Err(Error::InvalidInput("need at least two nodes with matching values".into()));
        }
        let spacing = nodes[1] - nodes[0];
        let scale = eps / (spacing * spacing);
        let mut birth = vec![0.0; n];
        let mut death = vec![0.0; n];
        for i in 0..n - 1 {
            let half_diff = (f_values[i + 1] - f_values[i]) / (2.0 * eps);
            birth[i] = scale * (-half_diff).exp();
            death[i + 1] = scale * half_diff.exp();
        }
        if birth.iter().chain(&death).any(|r| !r.is_finite()) {
            return Err(Error::InvalidGrid("rate overflow; refine the grid or shrink L".into()));
        }

        // Weights by the detailed-balance recursion from the lowest node, so
        // that w_i a_i = w_{i+1} b_{i+1} holds up to a single rounding.
        let start = f_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        let mut w = vec![0.0; n];
        w[start] = 1.0;
        for i in start + 1..n {
            w[i] = w[i - 1] * birth[i - 1] / death[i];
        }
        for i in (0..start).rev() {
            w[i] = w[i + 1] * death[i + 1] / birth[i];
        }
        let total: f64 = w.iter().sum();
        let weights: Vec<f64> = w.iter().map(|x| x / total).collect();
        if weights.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::InvalidGrid(
                "stationary weights underflow at the grid ends; shrink L".into(),
            ));
        }
        Ok(Self {
            eps,
            spacing,
            nodes,
            f_values,
            birth,
            death,
            weights,
            reference_node: reference_node.min(n - 1),
            grid: None,
            potential: None,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `(A f)_i = a_i (f_{i+1} - f_i) + b_i (f_{i-1} - f_i)`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut s = 0.0;
                if i + 1 < n {
                    s += self.birth[i] * (f[i + 1] - f[i]);
                }
                if i > 0 {
                    s += self.death[i] * (f[i - 1] - f[i]);
                }
                s
            })
            .collect()
    }

    /// Dense matrix; only sensible for small grids.
    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            if i + 1 < n {
                a[(i, i + 1)] = self.birth[i];
            }
            if i > 0 {
                a[(i, i - 1)] = self.death[i];
            }
            a[(i, i)] = -(self.birth[i] + self.death[i]);
        }
        a
    }

    /// Edge conductances `w_i a_i`, the weights of the Dirichlet form.
    pub fn conductances(&self) -> Vec<f64> {
        (0..self.len() - 1)
            .map(|i| self.weights[i] * self.birth[i])
            .collect()
    }

    /// Dirichlet form `sum_i w_i a_i (f_{i+1} - f_i)(g_{i+1} - g_i) = -<f, A g>_w`.
    pub fn dirichlet_form(&self, f: &[f64], g: &[f64]) -> f64 {
        self.conductances()
            .iter()
            .enumerate()
            .map(|(i, c)| c * (f[i + 1] - f[i]) * (g[i + 1] - g[i]))
            .sum()
    }

    /// Symmetrization `D^{1/2} (-A) D^{-1/2}` with `D = diag(w)`.
    pub fn symmetrized(&self) -> SymTridiagonal {
        let n = self.len();
        let diag = (0..n).map(|i| self.birth[i] + self.death[i]).collect();
        let off = (0..n - 1)
            .map(|i| -(self.birth[i] * self.death[i + 1]).sqrt())
            .collect();
        SymTridiagonal { diag, off }
    }

    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(f.iter().zip(g))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }
}

/// `-d^2/dx^2 + V_eps` on the grid with Dirichlet boundaries.
pub fn build_schrodinger(potential: &Potential, eps: f64, grid: &Grid) -> Result<SymTridiagonal> {
    check_eps(eps)?;
    grid.validate(potential, eps)?;
    let h = grid.spacing();
    let inv_h2 = 1.0 / (h * h);
    let diag = grid
        .nodes()
        .iter()
        .map(|&x| 2.0 * inv_h2 + potential.schrodinger_potential(x, eps))
        .collect();
    let off = vec![-inv_h2; grid.n - 1];
    SymTridiagonal::new(diag, off)
}

/// Lowest `count` eigenvalues `lambda_hat_k` of the Schrödinger operator.
pub fn schrodinger_eigenvalues(potential: &Potential, eps: f64, grid: &Grid, count: usize) -> Result<Vec<f64>> {
    let h = build_schrodinger(potential, eps, grid)?;
    Ok(eigenvalues_tridiagonal(&h, count))
}

/// Low-lying spectrum of the discrete generator.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralDecomposition {
    pub eps: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// `lambda_0 = 0 < lambda_1 <= ... <= lambda_m`.
    pub eigenvalues: Vec<f64>,
    /// `eta_k` on the grid, unit norm in `L^2(w)`, `eta_0 = 1`.
    pub eigenfunctions: Vec<Vec<f64>>,
    /// `w_k,i = eta_k(x_i) w_i`.
    pub signed_measures: Vec<Vec<f64>>,
    /// Schrödinger-route values `lambda_hat_k`, when a potential is attached.
    pub schrodinger_eigs: Option<Vec<f64>>,
    /// Raw eigenvalue computed for the constant mode before it is pinned to 0.
    pub lambda0_computed: f64,
}

impl SpectralDecomposition {
    /// Number of nonzero modes `m`.
    pub fn m(&self) -> usize {
        self.eigenvalues.len() - 1
    }

    pub fn sup_norm(&self, k: usize) -> f64 {
        self.eigenfunctions[k]
            .iter()
            .map(|x| x.abs())
            .fold(0.0, f64::max)
    }

    /// `eta_k` at an arbitrary point by linear interpolation, clamped at the ends.
    pub fn interpolate(&self, k: usize, x: f64) -> f64 {
        interpolate_uniform(&self.nodes, &self.eigenfunctions[k], x)
    }

    /// CSV with columns `x, weight, eta_0, ..., eta_m`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header: Vec<String> = (0..self.eigenfunctions.len()).map(|k| format!("eta_{k}")).collect();
        writeln!(out, "x,weight,{}", header.join(","))?;
        for (i, x) in self.nodes.iter().enumerate() {
            write!(out, "{x:.12e},{:.12e}", self.weights[i])?;
            for eta in &self.eigenfunctions {
                write!(out, ",{:.12e}", eta[i])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Eigenvalue summary for JSON export.
    pub fn summary(&self) -> serde_json::Value {
        serde_json::json!({
            "eps": self.eps,
            "n": self.nodes.len(),
            "half_width": -self.nodes[0],
            "eigenvalues": self.eigenvalues,
            "schrodinger_eigenvalues": self.schrodinger_eigs,
            "eps_times_schrodinger": self.schrodinger_eigs.as_ref().map(|v| v.iter().map(|x| x * self.eps).collect::<Vec<_>>()),
            "lambda0_computed": self.lambda0_computed,
            "eta_sup_norms": (0..self.eigenfunctions.len()).map(|k| self.sup_norm(k)).collect::<Vec<_>>(),
        })
    }
}

pub(crate) fn interpolate_uniform(nodes: &[f64], values: &[f64], x: f64) -> f64 {
    let n = nodes.len();
    let h = nodes[1] - nodes[0];
    let pos = (x - nodes[0]) / h;
    if pos <= 0.0 {
        return values[0];
    }
    if pos >= (n - 1) as f64 {
        return values[n - 1];
    }
    let i = pos as usize;
    let s = pos - i as f64;
    values[i] + s * (values[i + 1] - values[i])
}

/// Computes `lambda_0..lambda_m` and `eta_0..eta_m`.
///
/// The symmetrized matrix is eigensolved, vectors are mapped back by
/// `D^{-1/2}`, made orthonormal against the exact constant mode in `L^2(w)`,
/// and finally rotated by a Rayleigh-Ritz step in the Dirichlet form, which
/// resolves exponentially small eigenvalues to full relative precision.
pub fn decompose(gen: &DiscreteGenerator, m: usize) -> Result<SpectralDecomposition> {
    let n = gen.len();
    if m + 1 > n {
        return Err(Error::InvalidInput(format!("m + 1 = {} exceeds grid size {n}", m + 1)));
    }
    let sym = gen.symmetrized();
    let pairs = eigensolve_tridiagonal(&sym, m + 1)?;
    let sqrt_w: Vec<f64> = gen.weights.iter().map(|w| w.sqrt()).collect();
    let mut etas: Vec<Vec<f64>> = pairs
        .iter()
        .map(|p| p.vector.iter().zip(&sqrt_w).map(|(v, s)| v / s).collect())
        .collect();

    let norm0 = gen.inner(&etas[0], &etas[0]);
    let lambda0_computed = gen.dirichlet_form(&etas[0], &etas[0]) / norm0;
    etas[0] = vec![1.0; n];

    // Orthonormalize eta_1..eta_m against eta_0 = 1 and each other.
    for k in 1..=m {
        for _ in 0..2 {
            for j in 0..k {
                let c = gen.inner(&etas[k], &etas[j]);
                let (head, tail) = etas.split_at_mut(k);
                tail[0].iter_mut().zip(&head[j]).for_each(|(x, y)| *x -= c * y);
            }
        }
        let norm = gen.inner(&etas[k], &etas[k]).sqrt();
        etas[k].iter_mut().for_each(|x| *x /= norm);
    }

    let mut eigenvalues = vec![0.0];
    if m > 0 {
        let mut stiffness = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let v = gen.dirichlet_form(&etas[i + 1], &etas[j + 1]);
                stiffness[(i, j)] = v;
                stiffness[(j, i)] = v;
            }
        }
        let ritz = SymmetricEigen::new(stiffness);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| ritz.eigenvalues[a].total_cmp(&ritz.eigenvalues[b]));
        let basis: Vec<Vec<f64>> = etas[1..].to_vec();
        for (slot, &col) in order.iter().enumerate() {
            let mut v = vec![0.0; n];
            for (j, b) in basis.iter().enumerate() {
                let c = ritz.eigenvectors[(j, col)];
                v.iter_mut().zip(b).for_each(|(x, y)| *x += c * y);
            }
            etas[slot + 1] = v;
            eigenvalues.push(ritz.eigenvalues[col]);
        }

        let lambda1 = eigenvalues[1];
        if !(lambda1 > 0.0) || lambda0_computed.abs() > 1e-8 * lambda1 {
            return Err(Error::Truncation {
                lambda0: lambda0_computed,
                lambda1: 1e-8 * lambda1,
            });
        }
    }

    for eta in etas.iter_mut().skip(1) {
        let anchor = eta[gen.reference_node];
        let sign = if anchor.abs() > 1e-12 {
            anchor.signum()
        } else {
            eta.iter()
                .find(|x| x.abs() > 1e-12)
                .map(|x| x.signum())
                .unwrap_or(1.0)
        };
        if sign < 0.0 {
            eta.iter_mut().for_each(|x| *x = -*x);
        }
    }

    let signed_measures = etas
        .iter()
        .map(|eta| eta.iter().zip(&gen.weights).map(|(e, w)| e * w).collect())
        .collect();

    let schrodinger_eigs = match (&gen.potential, &gen.grid) {
        (Some(p), Some(g)) => Some(schrodinger_eigenvalues(p, gen.eps, g, m + 1)?),
        _ => None,
    };

    Ok(SpectralDecomposition {
        eps: gen.eps,
        nodes: gen.nodes.clone(),
        weights: gen.weights.clone(),
        eigenvalues,
        eigenfunctions: etas,
        signed_measures,
        schrodinger_eigs,
        lambda0_computed,
    })
}

/// Maximum over `trials` random `f` and `k >= 1` of
/// `|sum (A f) w_k + lambda_k sum f w_k| / ||f||_inf`.
pub fn verify_eigen_identity(dec: &SpectralDecomposition, gen: &DiscreteGenerator, trials: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let f: Vec<f64> = (0..gen.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        worst = worst.max(eigen_identity_residual(dec, gen, &f));
    }
    worst
}

/// The eigen-identity residual for one test vector `f`.
pub fn eigen_identity_residual(dec: &SpectralDecomposition, gen: &DiscreteGenerator, f: &[f64]) -> f64 {
    let af = gen.apply(f);
    let sup = f.iter().map(|x| x.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    (1..dec.eigenvalues.len())
        .map(|k| {
            let wk = &dec.signed_measures[k];
            let lhs: f64 = af.iter().zip(wk).map(|(a, w)| a * w).sum();
            let rhs: f64 = f.iter().zip(wk).map(|(a, w)| a * w).sum();
            (lhs + dec.eigenvalues[k] * rhs).abs() / sup
        })
        .fold(0.0, f64::max)
}

/// Pairs `(lambda_k, eps * lambda_hat_k)` from the two independent routes.
pub fn cross_validate(potential: &Potential, eps: f64, grid: &Grid, count: usize) -> Result<Vec<(f64, f64)>> {
    let gen = build_generator(potential, eps, grid)?;
    let dec = decompose(&gen, count - 1)?;
    let hat = schrodinger_eigenvalues(potential, eps, grid, count)?;
    Ok(dec
        .eigenvalues
        .iter()
        .zip(hat)
        .map(|(&l, h)| (l, eps * h))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn double_well(eps: f64, n: usize) -> (Potential, Grid, DiscreteGenerator) {
        let p = Potential::preset("double_well").unwrap();
        let g = Grid::auto(&p, eps, n).unwrap();
        let gen = build_generator(&p, eps, &g).unwrap();
        (p, g, gen)
    }

    #[test]
    fn two_node_flat_generator() {
        let gen = DiscreteGenerator::from_values(vec![0.0, 1.0], vec![0.0, 0.0], 1.0, 0).unwrap();
        let a = gen.dense();
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]));
        assert_eq!(gen.weights, vec![0.5, 0.5]);
    }

    #[test]
    fn rejects_bad_eps_and_grid() {
        let p = Potential::preset("double_well").unwrap();
        let g = Grid::new(3.0, 100).unwrap();
        assert!(build_generator(&p, 0.0, &g).is_err());
        assert!(build_generator(&p, -0.1, &g).is_err());
        assert!(Grid::new(3.0, 2).is_err());
        // Too narrow: Gibbs tail not negligible.
        assert!(build_generator(&p, 0.1, &Grid::new(1.5, 100).unwrap()).is_err());
    }

    #[test]
    fn auto_grid_meets_tail_invariant() {
        let p = Potential::preset("tilted_double_well").unwrap();
        let g = Grid::auto(&p, 0.1, 500).unwrap();
        for x in [-g.half_width, g.half_width] {
            assert!((-(p.eval(x) - p.min_value()) / 0.1).exp() <= TAIL_TOLERANCE);
        }
        // Smallest such L: slightly less fails.
        assert!(Grid::new(g.half_width * 0.999, 500).unwrap().validate(&p, 0.1).is_err());
    }

    #[test]
    fn symmetric_potential_gives_symmetric_generator() {
        let (_, _, gen) = double_well(0.1, 301);
        let n = gen.len();
        for i in 0..n {
            assert!((gen.weights[i] - gen.weights[n - 1 - i]).abs() <= 1e-12 * gen.weights[i]);
            assert!((gen.birth[i] - gen.death[n - 1 - i]).abs() <= 1e-12 * gen.birth[i].max(1.0));
        }
    }

    #[test]
    fn detailed_balance_and_row_sums() {
        let (_, _, gen) = double_well(0.07, 800);
        for i in 0..gen.len() - 1 {
            let left = gen.weights[i] * gen.birth[i];
            let right = gen.weights[i + 1] * gen.death[i + 1];
            assert!((left - right).abs() <= 1e-15 * left, "i={i}");
        }
        let ones = vec![1.0; gen.len()];
        assert!(gen.apply(&ones).iter().all(|&x| x == 0.0));
        assert!((gen.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn harmonic_schrodinger_diagonal() {
        let p = Potential::preset("ou").unwrap();
        let eps = 0.3;
        let g = Grid::new(6.0, 41).unwrap();
        let h = build_schrodinger(&p, eps, &g).unwrap();
        let inv_h2 = 1.0 / g.spacing().powi(2);
        for (i, x) in g.nodes().iter().enumerate() {
            let v = x * x / (4.0 * eps * eps) - 1.0 / (2.0 * eps);
            assert!((h.diag[i] - 2.0 * inv_h2 - v).abs() < 1e-9);
        }
    }

    #[test]
    fn double_well_ground_state_energy_vanishes_at_second_order() {
        // The 3-point Laplacian shifts lambda_hat_0 by about -(h^2/12) int V^2 psi_0^2,
        // which is -(h^2/12) * 75 in the harmonic approximation of each well at eps = 0.1.
        let p = Potential::preset("double_well").unwrap();
        let coarse = Grid::new(3.0, 2001).unwrap();
        let fine = Grid::new(3.0, 4001).unwrap();
        let e_coarse = schrodinger_eigenvalues(&p, 0.1, &coarse, 1).unwrap()[0];
        let e_fine = schrodinger_eigenvalues(&p, 0.1, &fine, 1).unwrap()[0];
        let predicted = -coarse.spacing().powi(2) / 12.0 * 75.0;
        assert!(e_coarse.abs() <= 1e-4, "lambda_hat_0 = {e_coarse}");
        assert!((e_coarse / predicted - 1.0).abs() < 0.15, "{e_coarse} vs {predicted}");
        let ratio = e_coarse / e_fine;
        assert!((3.9..4.1).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn decomposition_invariants() {
        let (_, _, gen) = double_well(0.1, 1000);
        let dec = decompose(&gen, 3).unwrap();
        assert_eq!(dec.eigenvalues[0], 0.0);
        assert!(dec.eigenfunctions[0].iter().all(|&x| x == 1.0));
        assert!(dec.eigenvalues[1] > 0.0);
        for w in dec.eigenvalues.windows(2) {
            assert!(w[0] <= w[1]);
        }
        for j in 0..=3 {
            for k in 0..=3 {
                let ip = gen.inner(&dec.eigenfunctions[j], &dec.eigenfunctions[k]);
                let expected = if j == k { 1.0 } else { 0.0 };
                assert!((ip - expected).abs() < 1e-12, "({j},{k}) -> {ip}");
            }
        }
        for k in 1..=3 {
            let mass: f64 = dec.signed_measures[k].iter().sum();
            assert!(mass.abs() < 1e-13, "k={k}: {mass}");
        }
        // eta_1 is positive at the left minimum.
        assert!(dec.eigenfunctions[1][gen.reference_node] > 0.0);
    }

    #[test]
    fn eigen_identity_for_constants_and_eigenvectors() {
        let (_, _, gen) = double_well(0.1, 600);
        let dec = decompose(&gen, 2).unwrap();
        let ones = vec![3.0; gen.len()];
        assert!(eigen_identity_residual(&dec, &gen, &ones) < 1e-13);
        for k in 1..=2 {
            let r = eigen_identity_residual(&dec, &gen, &dec.eigenfunctions[k].clone());
            assert!(r <= 1e-10, "k={k}: {r}");
        }
        assert!(verify_eigen_identity(&dec, &gen, 100) <= 1e-8);
    }

    #[test]
    fn eigenvector_residuals_are_small() {
        let (_, _, gen) = double_well(0.1, 600);
        let dec = decompose(&gen, 2).unwrap();
        for k in 1..=2 {
            let a_eta = gen.apply(&dec.eigenfunctions[k]);
            // Residual weighted by sqrt(w): the natural norm of the symmetric problem.
            let r = a_eta
                .iter()
                .zip(&dec.eigenfunctions[k])
                .zip(&gen.weights)
                .map(|((a, e), w)| ((a + dec.eigenvalues[k] * e) * w.sqrt()).abs())
                .fold(0.0, f64::max);
            assert!(r < 1e-9, "k={k}: {r}");
        }
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let (_, _, gen) = double_well(0.2, 50);
        let dec = decompose(&gen, 1).unwrap();
        let mut buf = Vec::new();
        dec.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x,weight,eta_0,eta_1"));
        assert_eq!(lines.count(), 50);
    }
}
