//! Acceptance criteria, each at its stated tolerance. Run with
//! `cargo test --release --test acceptance -- --nocapture` to see the report.

use std::time::Instant;

use eigencoupler::coupling::{build_joint_generator, CouplingModel};
use eigencoupler::oracle::{check_conditional_law, check_y_marginal, mean_exit_times_chain};
use eigencoupler::pipeline::{Pipeline, PipelineOptions};
use eigencoupler::potential::Potential;
use eigencoupler::simulate::{
    simulate_ensemble_with, simulate_y_given_x, EnsembleConfig, HittingTime, InitialCondition, Snapshots, XPath,
};
use eigencoupler::spectral::{build_generator, cross_validate, decompose, Grid};
use eigencoupler::stats::{
    conditional_tv, default_rho, ks_exponential, rate_match_report, state_domains, tracking_from_samples,
    KS_RESAMPLES,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TIMES: [f64; 3] = [0.1, 1.0, 10.0];

struct Outcome {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn run(id: usize, name: &'static str, f: impl FnOnce() -> Result<(bool, String), String>) -> Outcome {
    let start = Instant::now();
    let (pass, detail) = match std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)) {
        Ok(Ok(r)) => r,
        Ok(Err(e)) => (false, format!("error: {e}")),
        Err(_) => (false, "panicked".into()),
    };
    let detail = format!("{detail} [{:.1} s]", start.elapsed().as_secs_f64());
    let o = Outcome { id, name, pass, detail };
    println!("{} C{} {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.id, o.name, o.detail);
    o
}

fn e<T: std::fmt::Display>(x: T) -> String {
    x.to_string()
}

fn base_pipeline(eps: f64, n: usize) -> Result<Pipeline, String> {
    Pipeline::preset("double_well", eps, n, &PipelineOptions::default()).map_err(e)
}

fn c1_conditional_law() -> Result<(bool, String), String> {
    let start = Instant::now();
    let pl = base_pipeline(0.1, 200)?;
    let b = pl.joint_generator().map_err(e)?;
    let r = check_conditional_law(&b, &pl.model, &pl.spec.p, &TIMES).map_err(e)?;
    let secs = start.elapsed().as_secs_f64();
    Ok((r.max_tv <= 1e-8 && secs < 10.0, format!("max TV = {:.3e} (<= 1e-8), runtime {secs:.2} s (< 10 s)", r.max_tv)))
}

fn c2_marginal() -> Result<(bool, String), String> {
    let pl = base_pipeline(0.1, 200)?;
    let b = pl.joint_generator().map_err(e)?;
    let nu0 = pl.model.initial_law(&pl.spec.p);
    let r = check_y_marginal(&b, &nu0, &pl.spec.q, &pl.spec.p, &TIMES).map_err(e)?;
    Ok((r.max_l1 <= 1e-8, format!("max l1 = {:.3e} (<= 1e-8)", r.max_l1)))
}

fn c3_cross_validation() -> Result<(bool, String), String> {
    let start = Instant::now();
    let p = Potential::preset("double_well").map_err(e)?;
    let g = Grid::auto(&p, 0.1, 4000).map_err(e)?;
    let pairs = cross_validate(&p, 0.1, &g, 4).map_err(e)?;
    let rel: Vec<f64> = pairs[1..].iter().map(|(a, b)| (a - b).abs() / a.abs()).collect();
    let worst = rel.iter().copied().fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    Ok((
        worst <= 1e-4 && secs < 30.0,
        format!(
            "k = 1..3 rel. errors {:?} (<= 1e-4); k = 0: lambda_0 = 0 vs eps*lambda_hat_0 = {:.2e}; runtime {secs:.2} s (< 30 s)",
            rel.iter().map(|r| format!("{r:.2e}")).collect::<Vec<_>>(),
            pairs[0].1
        ),
    ))
}

fn c4_ou() -> Result<(bool, String), String> {
    let p = Potential::preset("ou").map_err(e)?;
    let g = Grid::new(8.0, 2000).map_err(e)?;
    let dec = decompose(&build_generator(&p, 0.5, &g).map_err(e)?, 4).map_err(e)?;
    let rel: Vec<f64> = (1..=4).map(|k| (dec.eigenvalues[k] - k as f64).abs() / k as f64).collect();
    let worst = rel.iter().copied().fold(0.0, f64::max);
    Ok((worst <= 1e-3, format!("max rel. error {worst:.3e} over k = 1..4 (<= 1e-3)")))
}

fn c5_mc_conditional_law() -> Result<(bool, String), String> {
    let start = Instant::now();
    let pl = base_pipeline(0.1, 2000)?;
    let cfg = EnsembleConfig {
        n_paths: 20_000,
        dt: 1e-4,
        horizon: 5.0,
        eps: 0.1,
        seed: 42,
        initial: InitialCondition::Coupled { p: pl.spec.p.clone() },
        bound: 10.0 * pl.grid.half_width,
        allow_large_dt: false,
    };
    let last = (cfg.horizon / cfg.dt).round() as usize;
    let snaps = simulate_ensemble_with(&pl.potential, Some(&pl.model), &cfg, |_| Snapshots::new(vec![last]))
        .map_err(e)?;
    let samples: Vec<(f64, usize)> = snaps.into_iter().map(|s| s[0]).collect();
    let tvs: Vec<f64> = (0..pl.model.states())
        .map(|j| conditional_tv(&samples, &pl.model, j, 50))
        .collect::<Result<_, _>>()
        .map_err(e)?;
    let secs = start.elapsed().as_secs_f64();
    let worst = tvs.iter().copied().fold(0.0, f64::max);
    Ok((
        worst <= 0.05 && secs < 300.0,
        format!("TV per state {tvs:.4?} (<= 0.05, 50 bins), runtime {secs:.1} s (< 300 s)"),
    ))
}

fn c6_exponential_holding() -> Result<(bool, String), String> {
    let pl = base_pipeline(0.1, 200)?;
    let model = CouplingModel::assemble(
        pl.model.nodes.clone(),
        pl.model.weights.clone(),
        pl.model.eta.clone(),
        vec![vec![-1.0, 1.0], vec![1.0, -1.0]],
        vec![vec![0.0, 0.0]],
        vec![0.5, 0.5],
    )
    .map_err(e)?;
    let path = XPath { dt: 1.0, x: vec![-1.0; 12_001] };
    let mut passed = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rec = simulate_y_given_x(&path, &model, 0, &mut rng);
        let h = rec.holding_times(0);
        if h.len() < 5000 {
            return Err(format!("seed {seed}: only {} holding times", h.len()));
        }
        let ks = ks_exponential(&h[..5000], KS_RESAMPLES, 1000 + seed).map_err(e)?;
        passed += usize::from(!ks.rejected);
    }
    Ok((passed >= 18, format!("{passed} of 20 seeds below the 5% bootstrap critical value (>= 18)")))
}

fn c7_tracking() -> Result<(bool, String), String> {
    let mut oracle: Vec<Vec<f64>> = Vec::new();
    let mut worst_z: f64 = 0.0;
    for (k, eps) in [0.15, 0.1, 0.07].into_iter().enumerate() {
        let pl = base_pipeline(eps, 2000)?;
        let cfg = EnsembleConfig {
            n_paths: 20_000,
            dt: 1e-3,
            horizon: 2.0,
            eps,
            seed: 42 + k as u64,
            initial: InitialCondition::Coupled { p: pl.spec.p.clone() },
            bound: 10.0 * pl.grid.half_width,
            allow_large_dt: false,
        };
        let last = (cfg.horizon / cfg.dt).round() as usize;
        let snaps = simulate_ensemble_with(&pl.potential, Some(&pl.model), &cfg, |_| Snapshots::new(vec![last]))
            .map_err(e)?;
        let samples: Vec<(f64, usize)> = snaps.into_iter().map(|s| s[0]).collect();
        let rows = tracking_from_samples(&samples, &pl.model, &pl.partition);
        for r in &rows {
            let est = r.estimate.ok_or(format!("eps = {eps}: state {} never occupied", r.state))?;
            worst_z = worst_z.max((est.point - r.oracle).abs() / est.se);
        }
        oracle.push(rows.iter().map(|r| r.oracle).collect());
    }
    let monotone = (0..oracle[0].len()).all(|j| oracle.windows(2).all(|w| w[1][j] >= w[0][j]));
    Ok((
        monotone && worst_z <= 3.0,
        format!("oracle values at eps = 0.15, 0.10, 0.07: {oracle:.5?} (nondecreasing: {monotone}); max |MC - oracle| / SE = {worst_z:.2} (<= 3)"),
    ))
}

fn rate_table(pl: &Pipeline, seed: u64) -> Result<eigencoupler::stats::RateMatchReport, String> {
    let domains = state_domains(&pl.model, &pl.partition);
    let minima: Vec<f64> = domains.iter().map(|&d| pl.potential.minima()[d]).collect();
    let rho: Vec<f64> = minima.iter().map(|&x| default_rho(&pl.potential, x)).collect();
    let horizon = 400.0;
    rate_match_report(&pl.spec.q, &pl.generator, &minima, &rho, horizon, |i, _, (a, b)| {
        let cfg = EnsembleConfig {
            n_paths: 2000,
            dt: 1e-3,
            horizon,
            eps: pl.eps,
            seed: seed + i as u64,
            initial: InitialCondition::Fixed { x0: minima[i], y0: 0 },
            bound: 10.0 * pl.grid.half_width,
            allow_large_dt: false,
        };
        simulate_ensemble_with(&pl.potential, None, &cfg, |_| HittingTime::new(a, b))
    })
    .map_err(e)
}

fn c8_rate_match() -> Result<(bool, String), String> {
    let pl = base_pipeline(0.15, 2000)?;
    let q = &pl.spec.q;
    let t01 = mean_exit_times_chain(q, &[false, true]).map_err(e)?[0];
    let exact_ok = (t01 - 1.0 / q[0][1]).abs() <= 1e-12 * t01;
    let rep = rate_table(&pl, 7)?;
    let again = rate_table(&pl, 7)?;
    let deterministic = serde_json::to_string(&rep).map_err(e)? == serde_json::to_string(&again).map_err(e)?;
    let mut agree = true;
    let mut parts = Vec::new();
    for r in &rep.rows {
        agree &= r.censored == 0 && r.mc.within(r.diffusion, 3.0);
        parts.push(format!(
            "({},{}) MC {:.3} +/- {:.3} vs A_h {:.3}, censored {}",
            r.from, r.to, r.mc.point, r.mc.se, r.diffusion, r.censored
        ));
    }
    Ok((
        exact_ok && agree && deterministic,
        format!(
            "E^0[tau_1^Y] = {t01:.6} vs 1/Q_01 = {:.6}; {}; deterministic: {deterministic}",
            1.0 / q[0][1],
            parts.join("; ")
        ),
    ))
}

fn c9_negative_controls() -> Result<(bool, String), String> {
    let pl = base_pipeline(0.1, 200)?;
    let m = &pl.model;
    let run_broken = |eta: Vec<Vec<f64>>, q: Vec<Vec<f64>>, xi: Vec<Vec<f64>>| -> Result<f64, String> {
        let broken = CouplingModel::assemble(m.nodes.clone(), m.weights.clone(), eta, q, xi, m.p.clone()).map_err(e)?;
        let b = build_joint_generator(&broken, &pl.generator).map_err(e)?;
        Ok(check_conditional_law(&b, &broken, &m.p, &TIMES).map_err(e)?.max_tv)
    };
    let mut xi = m.xi.clone();
    xi[0][0] *= 1.01;
    let tv_xi = run_broken(m.eta.clone(), m.q.clone(), xi)?;
    let q: Vec<Vec<f64>> = m.q.iter().map(|r| r.iter().map(|v| v * 1.1).collect()).collect();
    let tv_lambda = run_broken(m.eta.clone(), q, m.xi.clone())?;
    let eta: Vec<Vec<f64>> = m.eta.iter().map(|r| r.iter().map(|v| v + 0.01).collect()).collect();
    let tv_norm = run_broken(eta, m.q.clone(), m.xi.clone())?;
    Ok((
        tv_xi > 1e-4 && tv_lambda > 1e-4 && tv_norm > 1e-4,
        format!(
            "max TV with xi_0 * 1.01: {tv_xi:.3e}; Q * 1.1: {tv_lambda:.3e}; eta_1 + 0.01: {tv_norm:.3e} (each > 1e-4)"
        ),
    ))
}

#[test]
fn acceptance() {
    let outcomes = [
        run(1, "exact conditional law", c1_conditional_law),
        run(2, "chain marginal", c2_marginal),
        run(3, "spectral cross-validation", c3_cross_validation),
        run(4, "OU spectrum", c4_ou),
        run(5, "Monte Carlo conditional law", c5_mc_conditional_law),
        run(6, "exponential holding times", c6_exponential_holding),
        run(7, "tracking trend", c7_tracking),
        run(8, "rate match", c8_rate_match),
        run(9, "negative controls", c9_negative_controls),
    ];
    let failed: Vec<String> = outcomes.iter().filter(|o| !o.pass).map(|o| format!("C{} {}", o.id, o.name)).collect();
    println!("{} of {} criteria passed", outcomes.len() - failed.len(), outcomes.len());
    assert!(failed.is_empty(), "failed: {failed:?}");
}
