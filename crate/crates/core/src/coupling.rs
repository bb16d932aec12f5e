//! Coupled-generator objects on the grid: `alpha_i`, `q_ij`, the joint
//! generator on grid x states, and the initial law.
//!
//! Since `alpha_i >= 1 - kappa` and `alpha_j` is bounded on the grid, every
//! `q_ij` is bounded, so the local-martingale caveat of the continuum
//! construction does not arise here.

use std::io::Write;

use rand::Rng;
use serde::Serialize;

use crate::chain::{check_distribution, ChainSpec, EIGENVALUE_MATCH_TOLERANCE};
use crate::sparse::SparseGenerator;
use crate::spectral::{DiscreteGenerator, SpectralDecomposition};
use crate::{Error, Result};

/// Tolerance on `sum_l alpha_i(x_l) w_l = 1`.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

/// Product state space size limit.
pub const MAX_JOINT_STATES: usize = 1_000_000;

/// Grid-sampled coupling objects.
#[derive(Debug, Clone, Serialize)]
pub struct CouplingModel {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// `eta_1..eta_m` on the grid.
    pub eta: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    /// `xi^(1)..xi^(m)`.
    pub xi: Vec<Vec<f64>>,
    /// `alpha[i][l] = alpha_i(x_l)`.
    pub alpha: Vec<Vec<f64>>,
    /// `rates[i][j][l] = q_ij(x_l)`, zero for `i == j`.
    pub rates: Vec<Vec<Vec<f64>>>,
    pub joint_dim: usize,
    pub p: Vec<f64>,
    /// Initial law over product states, index `l * (m+1) + i`.
    pub nu: Vec<f64>,
    /// `cond[i][l] = alpha_i(x_l) w_l`.
    pub cond: Vec<Vec<f64>>,
    #[serde(skip)]
    cdf: Vec<Vec<f64>>,
}

/// Checked construction from a decomposition and a chain.
pub fn build_coupling(dec: &SpectralDecomposition, spec: &ChainSpec) -> Result<CouplingModel> {
    let m = spec.m();
    if dec.m() < m {
        return Err(Error::InvalidInput(format!(
            "decomposition has {} modes, chain needs {m}",
            dec.m()
        )));
    }
    if spec.xi.len() != m {
        return Err(Error::InvalidInput("chain spec lacks scaled eigenvectors".into()));
    }
    for k in 1..=m {
        let (chain, diffusion) = (spec.eigenvalues[k], dec.eigenvalues[k]);
        if !((chain - diffusion).abs() <= EIGENVALUE_MATCH_TOLERANCE * diffusion) {
            return Err(Error::EigenvalueMismatch { k, chain, diffusion });
        }
    }
    let model = CouplingModel::assemble(
        dec.nodes.clone(),
        dec.weights.clone(),
        dec.eigenfunctions[1..=m].to_vec(),
        spec.q.clone(),
        spec.xi.clone(),
        spec.p.clone(),
    )?;
    let min_alpha = model.min_alpha();
    if !(min_alpha > 0.0) {
        return Err(Error::NonPositiveAlpha(min_alpha));
    }
    for (i, c) in model.cond.iter().enumerate() {
        let mass: f64 = c.iter().sum();
        if !((mass - 1.0).abs() <= NORMALIZATION_TOLERANCE) {
            return Err(Error::Normalization { state: i, mass });
        }
    }
    Ok(model)
}

impl CouplingModel {
    /// Unchecked assembly. Performs no eigenvalue, positivity or
    /// normalization checks, so it can build deliberately broken models.
    pub fn assemble(
        nodes: Vec<f64>,
        weights: Vec<f64>,
        eta: Vec<Vec<f64>>,
        q: Vec<Vec<f64>>,
        xi: Vec<Vec<f64>>,
        p: Vec<f64>,
    ) -> Result<Self> {
        let states = q.len();
        let n = nodes.len();
        let m = states - 1;
        if eta.len() != m || xi.len() != m || weights.len() != n {
            return Err(Error::InvalidInput("inconsistent coupling dimensions".into()));
        }
        if eta.iter().any(|e| e.len() != n) || xi.iter().any(|v| v.len() != states) {
            return Err(Error::InvalidInput("inconsistent coupling dimensions".into()));
        }
        check_distribution(&p, states)?;
        let joint_dim = n * states;
        if joint_dim > MAX_JOINT_STATES {
            return Err(Error::TooLarge(joint_dim));
        }
        let alpha: Vec<Vec<f64>> = (0..states)
            .map(|i| {
                (0..n)
                    .map(|l| 1.0 + (0..m).map(|k| xi[k][i] * eta[k][l]).sum::<f64>())
                    .collect()
            })
            .collect();
        let rates = (0..states)
            .map(|i| {
                (0..states)
                    .map(|j| {
                        if i == j {
                            vec![0.0; n]
                        } else {
                            (0..n).map(|l| q[i][j] * alpha[j][l] / alpha[i][l]).collect()
                        }
                    })
                    .collect()
            })
            .collect();
        let cond: Vec<Vec<f64>> = alpha
            .iter()
            .map(|a| a.iter().zip(&weights).map(|(a, w)| a * w).collect())
            .collect();
        let cdf = cond.iter().map(|c| cumulative(c)).collect();
        let mut model = Self {
            nodes,
            weights,
            eta,
            q,
            xi,
            alpha,
            rates,
            joint_dim,
            p: vec![],
            nu: vec![],
            cond,
            cdf,
        };
        model.nu = model.initial_law(&p);
        model.p = p;
        Ok(model)
    }

    pub fn states(&self) -> usize {
        self.q.len()
    }

    pub fn m(&self) -> usize {
        self.q.len() - 1
    }

    pub fn spacing(&self) -> f64 {
        self.nodes[1] - self.nodes[0]
    }

    /// Product index of `(node l, state i)`.
    pub fn index(&self, l: usize, i: usize) -> usize {
        l * self.states() + i
    }

    pub fn min_alpha(&self) -> f64 {
        self.alpha.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    /// `nu(l, i) = p_i alpha_i(x_l) w_l`.
    pub fn initial_law(&self, p: &[f64]) -> Vec<f64> {
        let s = self.states();
        let mut nu = vec![0.0; self.nodes.len() * s];
        for (l, chunk) in nu.chunks_mut(s).enumerate() {
            for (i, v) in chunk.iter_mut().enumerate() {
                *v = p[i] * self.cond[i][l];
            }
        }
        nu
    }

    /// Reference law of `X(t)` given `Y(t) = j`.
    pub fn conditional_density(&self, j: usize) -> &[f64] {
        &self.cond[j]
    }

    /// Writes `eta_k(x)` for every `k` into `out` by linear interpolation.
    pub fn eta_at(&self, x: f64, out: &mut [f64]) {
        let n = self.nodes.len();
        let pos = (x - self.nodes[0]) / self.spacing();
        let (i, s) = if pos <= 0.0 {
            (0, 0.0)
        } else if pos >= (n - 1) as f64 {
            (n - 2, 1.0)
        } else {
            let i = pos as usize;
            (i, pos - i as f64)
        };
        for (o, e) in out.iter_mut().zip(&self.eta) {
            *o = e[i] + s * (e[i + 1] - e[i]);
        }
    }

    /// `alpha_i(x)` from interpolated eigenfunctions.
    pub fn alpha_from_eta(&self, i: usize, eta: &[f64]) -> f64 {
        1.0 + self.xi.iter().zip(eta).map(|(xi, e)| xi[i] * e).sum::<f64>()
    }

    /// `q_ij(x) = Q_ij alpha_j(x) / alpha_i(x)` off the grid.
    pub fn rate_at(&self, i: usize, j: usize, x: f64) -> f64 {
        let mut eta = vec![0.0; self.eta.len()];
        self.eta_at(x, &mut eta);
        self.q[i][j] * self.alpha_from_eta(j, &eta) / self.alpha_from_eta(i, &eta)
    }

    /// Inverse-CDF draw of `(x0, y0)` from `p_i alpha(i, dx)`, uniformly
    /// jittered within the grid cell of width `h`.
    pub fn sample_initial<R: Rng + ?Sized>(&self, p: &[f64], rng: &mut R) -> (f64, usize) {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut y = p.len() - 1;
        for (i, &pi) in p.iter().enumerate() {
            acc += pi;
            if u < acc {
                y = i;
                break;
            }
        }
        while p[y] == 0.0 && y > 0 {
            y -= 1;
        }
        (self.sample_position(y, rng), y)
    }

    /// Draw from `alpha_y(x_l) w_l` with cell jitter.
    pub fn sample_position<R: Rng + ?Sized>(&self, y: usize, rng: &mut R) -> f64 {
        let cdf = &self.cdf[y];
        let total = cdf[cdf.len() - 1];
        let u: f64 = rng.random::<f64>() * total;
        let l = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
        let jitter: f64 = rng.random::<f64>() - 0.5;
        self.nodes[l] + jitter * self.spacing()
    }

    /// CSV with columns `x, weight, eta_k.., alpha_i.., q_ij..`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let s = self.states();
        let mut header = vec!["x".to_string(), "weight".to_string()];
        header.extend((1..=self.m()).map(|k| format!("eta_{k}")));
        header.extend((0..s).map(|i| format!("alpha_{i}")));
        let pairs: Vec<(usize, usize)> =
            (0..s).flat_map(|i| (0..s).filter(move |&j| j != i).map(move |j| (i, j))).collect();
        header.extend(pairs.iter().map(|(i, j)| format!("q_{i}{j}")));
        writeln!(out, "{}", header.join(","))?;
        for l in 0..self.nodes.len() {
            let mut row = vec![format!("{:.12e}", self.nodes[l]), format!("{:.12e}", self.weights[l])];
            row.extend(self.eta.iter().map(|e| format!("{:.12e}", e[l])));
            row.extend(self.alpha.iter().map(|a| format!("{:.12e}", a[l])));
            row.extend(pairs.iter().map(|&(i, j)| format!("{:.12e}", self.rates[i][j][l])));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn summary(&self) -> serde_json::Value {
        let s = self.states();
        let mut sup = serde_json::Map::new();
        for i in 0..s {
            for j in (0..s).filter(|&j| j != i) {
                let v = self.rates[i][j].iter().copied().fold(0.0, f64::max);
                sup.insert(format!("q_{i}{j}"), v.into());
            }
        }
        serde_json::json!({
            "states": s,
            "nodes": self.nodes.len(),
            "joint_dim": self.joint_dim,
            "min_alpha": self.min_alpha(),
            "max_alpha": self.alpha.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max),
            "rate_sup_norms": sup,
            "p": self.p,
        })
    }
}

fn cumulative(v: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    v.iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect()
}

/// Joint generator `B` on product states `(l, i)`: the diffusion acts in `l`
/// for each fixed `i`, and `(l, i) -> (l, j)` jumps at rate `q_ij(x_l)`.
pub fn build_joint_generator(model: &CouplingModel, gen: &DiscreteGenerator) -> Result<SparseGenerator> {
    let n = gen.len();
    if n != model.nodes.len() {
        return Err(Error::InvalidInput("coupling and generator grids differ".into()));
    }
    let s = model.states();
    if n * s > MAX_JOINT_STATES {
        return Err(Error::TooLarge(n * s));
    }
    let mut rows = Vec::with_capacity(n * s);
    for l in 0..n {
        for i in 0..s {
            let mut row = Vec::with_capacity(s + 2);
            if l > 0 {
                row.push((model.index(l - 1, i), gen.death[l]));
            }
            for j in (0..s).filter(|&j| j != i) {
                row.push((model.index(l, j), model.rates[i][j][l]));
            }
            if l + 1 < n {
                row.push((model.index(l + 1, i), gen.birth[l]));
            }
            // Diagonal last, so summing a row in storage order gives exactly 0.
            let out: f64 = row.iter().map(|(_, v)| v).sum();
            row.push((model.index(l, i), -out));
            rows.push(row);
        }
    }
    SparseGenerator::from_rows(rows)
}
