//! Estimators and checks over simulated ensembles.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;

use crate::coupling::CouplingModel;
use crate::oracle::{mean_exit_times_chain, mean_exit_times_diffusion};
use crate::potential::{DomainPartition, Potential};
use crate::simulate::TrajectoryRecord;
use crate::spectral::DiscreteGenerator;
use crate::{Error, Result};

const Z95: f64 = 1.96;

/// Point estimate with standard error and normal 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateWithCI {
    pub point: f64,
    pub se: f64,
    pub n: usize,
    pub lo: f64,
    pub hi: f64,
}

impl EstimateWithCI {
    pub fn new(point: f64, se: f64, n: usize) -> Self {
        let se = se.max(0.0);
        Self { point, se, n, lo: point - Z95 * se, hi: point + Z95 * se }
    }

    /// Sample mean with the standard error of the mean.
    pub fn mean(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("no samples".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Ok(Self::new(mean, (var / n).sqrt(), values.len()))
    }

    /// Binomial proportion.
    pub fn proportion(successes: usize, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("no trials".into()));
        }
        let p = successes as f64 / n as f64;
        Ok(Self::new(p, (p * (1.0 - p) / n as f64).sqrt(), n))
    }

    /// `|point - value| <= k * se`.
    pub fn within(&self, value: f64, k: f64) -> bool {
        (self.point - value).abs() <= k * self.se
    }
}

/// Kolmogorov-Smirnov test against an exponential law with fitted mean.
#[derive(Debug, Clone, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub n: usize,
    pub mean: f64,
    /// `1.36 / sqrt(n)`, which ignores that the mean was estimated.
    pub critical_standard: f64,
    /// 95% quantile of the statistic under parametric resampling.
    pub critical_bootstrap: f64,
    pub resamples: usize,
    pub rejected: bool,
}

pub const KS_RESAMPLES: usize = 2000;
pub const KS_MIN_SAMPLES: usize = 30;

fn ks_statistic_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    sorted
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let f = 1.0 - (-x / mean).exp();
            (f - k as f64 / n).max((k + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

pub fn ks_exponential(samples: &[f64], resamples: usize, seed: u64) -> Result<KsResult> {
    if samples.len() < KS_MIN_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "need at least {KS_MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if let Some(bad) = samples.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidInput(format!("samples must be positive, found {bad}")));
    }
    if resamples == 0 {
        return Err(Error::InvalidInput("need at least one resample".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let statistic = ks_statistic_sorted(&sorted);
    let n = samples.len();
    // The statistic is scale-free, so resampling from Exp(1) suffices.
    let mut boot: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let mut s: Vec<f64> = (0..n).map(|_| rng.sample(Exp1)).collect();
            s.sort_by(f64::total_cmp);
            ks_statistic_sorted(&s)
        })
        .collect();
    boot.sort_by(f64::total_cmp);
    let idx = ((0.95 * resamples as f64).ceil() as usize).clamp(1, resamples) - 1;
    let critical_bootstrap = boot[idx];
    Ok(KsResult {
        statistic,
        n,
        mean: sorted.iter().sum::<f64>() / n as f64,
        critical_standard: 1.36 / (n as f64).sqrt(),
        critical_bootstrap,
        resamples,
        rejected: statistic > critical_bootstrap,
    })
}

/// Domain of attraction associated with each chain state: the domain
/// carrying most of the state's conditional mass `alpha_j(x) w(x)`.
pub fn state_domains(model: &CouplingModel, partition: &DomainPartition) -> Vec<usize> {
    (0..model.states())
        .map(|j| {
            let mut mass = vec![0.0; partition.len()];
            for (l, &x) in model.nodes.iter().enumerate() {
                if let Some(d) = partition.domain_of(x) {
                    mass[d] += model.cond[j][l];
                }
            }
            (0..mass.len()).max_by(|&a, &b| mass[a].total_cmp(&mass[b])).unwrap_or(0)
        })
        .collect()
}

/// Exact `sum over x_l in D of alpha_j(x_l) w_l`.
pub fn oracle_tracking(model: &CouplingModel, partition: &DomainPartition, state: usize, domain: usize) -> f64 {
    model
        .nodes
        .iter()
        .zip(&model.cond[state])
        .filter(|(x, _)| partition.domain_of(**x) == Some(domain))
        .map(|(_, c)| c)
        .sum()
}

/// Tracking of one chain state.
#[derive(Debug, Clone, Serialize)]
pub struct TrackingRow {
    pub state: usize,
    pub domain: usize,
    /// Paths with `Y(t) = state`.
    pub conditioned: usize,
    /// `None` when no path is in `state` at time `t`.
    pub estimate: Option<EstimateWithCI>,
    pub oracle: f64,
}

/// `P(X(t) in D_j | Y(t) = j)` from `(X(t), Y(t))` samples.
pub fn tracking_from_samples(
    samples: &[(f64, usize)],
    model: &CouplingModel,
    partition: &DomainPartition,
) -> Vec<TrackingRow> {
    let domains = state_domains(model, partition);
    domains
        .iter()
        .enumerate()
        .map(|(j, &d)| {
            let xs: Vec<f64> = samples.iter().filter(|s| s.1 == j).map(|s| s.0).collect();
            let hits = xs.iter().filter(|&&x| partition.domain_of(x) == Some(d)).count();
            TrackingRow {
                state: j,
                domain: d,
                conditioned: xs.len(),
                estimate: EstimateWithCI::proportion(hits, xs.len()).ok(),
                oracle: oracle_tracking(model, partition, j, d),
            }
        })
        .collect()
}

/// `(X(t), Y(t))` from records; `t` must be a sample time of every record.
pub fn snapshot(records: &[TrajectoryRecord], t: f64) -> Result<Vec<(f64, usize)>> {
    records
        .iter()
        .map(|r| {
            let step = r.stride as f64 * r.dt;
            let k = (t / step).round();
            if t < 0.0 || (k * step - t).abs() > 1e-9 * step.max(t) || k as usize >= r.x.len() {
                return Err(Error::InvalidInput(format!(
                    "t = {t} is not a sample time of path {} (horizon {})",
                    r.path_id,
                    r.horizon()
                )));
            }
            Ok((r.x[k as usize], r.y_at(t)))
        })
        .collect()
}

pub fn tracking_probability(
    records: &[TrajectoryRecord],
    model: &CouplingModel,
    partition: &DomainPartition,
    t: f64,
) -> Result<Vec<TrackingRow>> {
    Ok(tracking_from_samples(&snapshot(records, t)?, model, partition))
}

/// Total variation between binned samples and a probability vector on
/// equispaced `nodes`. Bins span the grid cells `[x_0 - h/2, x_last + h/2]`;
/// each node's mass is split over bins by overlap and samples outside the
/// range are counted in the edge bins.
pub fn tv_distance(samples: &[f64], reference: &[f64], nodes: &[f64], bins: usize) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("no samples".into()));
    }
    if bins < 2 {
        return Err(Error::InvalidInput("need at least 2 bins".into()));
    }
    if nodes.len() < 2 || reference.len() != nodes.len() {
        return Err(Error::InvalidInput("reference and nodes must match, length >= 2".into()));
    }
    let h = nodes[1] - nodes[0];
    let lo = nodes[0] - 0.5 * h;
    let width = (nodes[nodes.len() - 1] + 0.5 * h - lo) / bins as f64;
    let total: f64 = reference.iter().sum();
    let mut diff = vec![0.0; bins];
    for (&x, &w) in nodes.iter().zip(reference) {
        let (a, b) = (x - 0.5 * h - lo, x + 0.5 * h - lo);
        let first = ((a / width).floor().max(0.0) as usize).min(bins - 1);
        let last = ((b / width).ceil() as usize).clamp(first + 1, bins);
        for (k, d) in diff.iter_mut().enumerate().take(last).skip(first) {
            let overlap = (b.min((k + 1) as f64 * width) - a.max(k as f64 * width)).max(0.0);
            *d -= w / total * overlap / h;
        }
    }
    let unit = 1.0 / samples.len() as f64;
    for &s in samples {
        let k = ((s - lo) / width).floor().clamp(0.0, (bins - 1) as f64) as usize;
        diff[k] += unit;
    }
    Ok((0.5 * diff.iter().map(|d| d.abs()).sum::<f64>()).min(1.0))
}

/// TV between the X histogram of paths with `Y = state` and `alpha_state w`.
pub fn conditional_tv(samples: &[(f64, usize)], model: &CouplingModel, state: usize, bins: usize) -> Result<f64> {
    let xs: Vec<f64> = samples.iter().filter(|s| s.1 == state).map(|s| s.0).collect();
    tv_distance(&xs, &model.cond[state], &model.nodes, bins)
}

/// Half the distance from `x` to the nearest local maximum of `F`, or the
/// distance to the nearest other minimum when `F` has a single well.
pub fn default_rho(potential: &Potential, x: f64) -> f64 {
    let d = potential.maxima().iter().map(|m| (m - x).abs()).fold(f64::INFINITY, f64::min);
    if d.is_finite() {
        0.5 * d
    } else {
        0.5
    }
}

/// One `(i, j)` row of the rate-match table.
#[derive(Debug, Clone, Serialize)]
pub struct RateRow {
    pub from: usize,
    pub to: usize,
    /// Exact `E^i[tau_j]` for the chain.
    pub chain: f64,
    /// Monte Carlo mean time for X from `x_i` to reach `B_rho(x_j)`.
    pub mc: EstimateWithCI,
    /// Paths that did not arrive before the horizon; if nonzero, `mc` is a
    /// lower bound with censored paths counted at the horizon.
    pub censored: usize,
    /// Same mean time for the grid generator, by a linear solve.
    pub diffusion: f64,
    pub chain_over_mc: f64,
    pub chain_over_diffusion: f64,
}

/// Mean transition times of Y against hitting times of X.
#[derive(Debug, Clone, Serialize)]
pub struct RateMatchReport {
    /// Target balls are centred at the destination minimum `x_j`.
    pub target: String,
    pub rho: Vec<f64>,
    pub minima: Vec<f64>,
    pub rows: Vec<RateRow>,
    pub warnings: Vec<String>,
}

impl RateMatchReport {
    pub fn to_table(&self) -> String {
        let mut s = format!("target: {}\n", self.target);
        let _ = writeln!(
            s,
            "{:>4} {:>4} {:>12} {:>12} {:>10} {:>8} {:>12} {:>10} {:>10}",
            "i", "j", "chain", "mc", "mc_se", "cens", "diffusion", "chain/mc", "chain/diff"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:>4} {:>4} {:>12.5e} {:>12.5e} {:>10.3e} {:>8} {:>12.5e} {:>10.4} {:>10.4}",
                r.from, r.to, r.chain, r.mc.point, r.mc.se, r.censored, r.diffusion, r.chain_over_mc, r.chain_over_diffusion
            );
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }
}

/// Builds the table. `minima[j]` is the minimum paired with chain state `j`
/// and `rho[j]` the radius around it. `hitting(i, j, (a, b))` must return
/// per-path first hitting times of `[a, b]` for X started at `minima[i]`,
/// `None` for paths censored at `horizon`.
pub fn rate_match_report<H>(
    q: &[Vec<f64>],
    gen: &DiscreteGenerator,
    minima: &[f64],
    rho: &[f64],
    horizon: f64,
    mut hitting: H,
) -> Result<RateMatchReport>
where
    H: FnMut(usize, usize, (f64, f64)) -> Result<Vec<Option<f64>>>,
{
    let s = q.len();
    if minima.len() != s || rho.len() != s {
        return Err(Error::InvalidInput("need one minimum and one radius per chain state".into()));
    }
    if rho.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::InvalidInput("radii must be positive".into()));
    }
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for j in 0..s {
        let ball = (minima[j] - rho[j], minima[j] + rho[j]);
        let target_states: Vec<bool> = (0..s).map(|k| k == j).collect();
        let chain = mean_exit_times_chain(q, &target_states)?;
        let target_nodes: Vec<bool> = gen.nodes.iter().map(|x| (ball.0..=ball.1).contains(x)).collect();
        if !target_nodes.iter().any(|&b| b) {
            return Err(Error::InvalidInput(format!("B_rho(x_{j}) contains no grid node")));
        }
        let diff = mean_exit_times_diffusion(gen, &target_nodes)?;
        for i in (0..s).filter(|&i| i != j) {
            let times = hitting(i, j, ball)?;
            let censored = times.iter().filter(|t| t.is_none()).count();
            let values: Vec<f64> = times.iter().map(|t| t.unwrap_or(horizon)).collect();
            let mc = EstimateWithCI::mean(&values)?;
            if censored > 0 {
                warnings.push(format!(
                    "({i}, {j}): {censored} of {} paths censored at T = {horizon}; MC mean {:.4e} is a lower bound",
                    times.len(),
                    mc.point
                ));
            }
            let diffusion = interpolate_nodes(&gen.nodes, &diff, minima[i]);
            rows.push(RateRow {
                from: i,
                to: j,
                chain: chain[i],
                mc,
                censored,
                diffusion,
                chain_over_mc: chain[i] / mc.point,
                chain_over_diffusion: chain[i] / diffusion,
            });
        }
    }
    rows.sort_by_key(|r| (r.from, r.to));
    Ok(RateMatchReport {
        target: "B_rho(x_j), ball around the destination minimum".into(),
        rho: rho.to_vec(),
        minima: minima.to_vec(),
        rows,
        warnings,
    })
}

fn interpolate_nodes(nodes: &[f64], values: &[f64], x: f64) -> f64 {
    let h = nodes[1] - nodes[0];
    let pos = ((x - nodes[0]) / h).clamp(0.0, (nodes.len() - 1) as f64);
    let i = (pos.floor() as usize).min(nodes.len() - 2);
    let s = pos - i as f64;
    (1.0 - s) * values[i] + s * values[i + 1]
}
