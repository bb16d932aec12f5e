//! Monte Carlo paths: Euler-Maruyama for X and the time-change construction
//! of Y given X, with one unit-rate clock per ordered pair of chain states.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::coupling::CouplingModel;
use crate::potential::Potential;
use crate::{Error, Result};

/// Largest step accepted without override: `1e-2 / max |F''|` over minima.
pub fn dt_bound(potential: &Potential) -> f64 {
    1e-2 / potential.max_curvature_at_minima()
}

/// Enforces [`dt_bound`], downgrading to a warning when `allow` is set.
pub fn check_dt(potential: &Potential, dt: f64, allow: bool) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    let bound = dt_bound(potential);
    if dt > bound {
        if allow {
            log::warn!("dt = {dt:e} exceeds the stability bound {bound:e}; continuing by request");
        } else {
            return Err(Error::StepTooLarge { dt, bound });
        }
    }
    Ok(())
}

fn step_count(dt: f64, horizon: f64) -> Result<usize> {
    if !(dt > 0.0) || !(horizon >= dt) || !horizon.is_finite() {
        return Err(Error::InvalidInput(format!("need 0 < dt <= T, got dt = {dt}, T = {horizon}")));
    }
    Ok((horizon / dt).round() as usize)
}

/// A sampled X path at times `k * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct XPath {
    pub dt: f64,
    pub x: Vec<f64>,
}

/// Euler-Maruyama for `dX = -F'(X) dt + sqrt(2 eps) dW`.
pub fn simulate_x<R: Rng + ?Sized>(
    potential: &Potential,
    eps: f64,
    x0: f64,
    dt: f64,
    horizon: f64,
    bound: f64,
    rng: &mut R,
) -> Result<XPath> {
    if !(eps >= 0.0) {
        return Err(Error::InvalidInput(format!("eps must be nonnegative, got {eps}")));
    }
    let steps = step_count(dt, horizon)?;
    let noise = (2.0 * eps * dt).sqrt();
    let mut x = Vec::with_capacity(steps + 1);
    let mut cur = x0;
    x.push(cur);
    for k in 1..=steps {
        cur = em_step(potential, cur, dt, noise, rng);
        if !(cur.abs() <= bound) {
            return Err(Error::BlowUp { t: k as f64 * dt, x: cur.abs() });
        }
        x.push(cur);
    }
    Ok(XPath { dt, x })
}

#[inline]
fn em_step<R: Rng + ?Sized>(potential: &Potential, x: f64, dt: f64, noise: f64, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    x - potential.grad(x) * dt + noise * z
}

/// A jump of Y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Jump {
    pub t: f64,
    pub x: f64,
    pub from: usize,
    pub to: usize,
}

/// A coupled path: grid samples of `(X, Y)` every `stride * dt`, plus every
/// jump of Y at its exact (interpolated) time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub path_id: usize,
    pub seed: u64,
    pub dt: f64,
    pub stride: usize,
    pub x: Vec<f64>,
    /// Y at the grid sample times (value after any jump at that instant).
    pub y: Vec<usize>,
    pub jumps: Vec<Jump>,
    /// Residual exponential budgets of the internal clocks, index `i * (m+1) + j`.
    pub internal_clocks: Vec<f64>,
}

impl TrajectoryRecord {
    pub fn sample_time(&self, k: usize) -> f64 {
        (k * self.stride) as f64 * self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.sample_time(self.x.len() - 1)
    }

    /// `(t, x, y)` rows: grid samples merged with jump times.
    pub fn rows(&self) -> Vec<(f64, f64, usize)> {
        let mut out = Vec::with_capacity(self.x.len() + self.jumps.len());
        let mut jumps = self.jumps.iter().peekable();
        for k in 0..self.x.len() {
            let t = self.sample_time(k);
            while let Some(j) = jumps.next_if(|j| j.t < t) {
                out.push((j.t, j.x, j.to));
            }
            out.push((t, self.x[k], self.y[k]));
        }
        out.extend(jumps.map(|j| (j.t, j.x, j.to)));
        out
    }

    /// Keeps every `stride`-th grid sample; jumps are kept in full.
    pub fn thin(&self, stride: usize) -> Self {
        let stride = stride.max(1);
        let mut out = self.clone();
        out.stride = self.stride * stride;
        out.x = self.x.iter().copied().step_by(stride).collect();
        out.y = self.y.iter().copied().step_by(stride).collect();
        out
    }

    /// Y at an arbitrary time.
    pub fn y_at(&self, t: f64) -> usize {
        let mut y = self.y[0];
        for j in &self.jumps {
            if j.t <= t {
                y = j.to;
            } else {
                break;
            }
        }
        y
    }

    /// Holding times of Y in `state`, completed sojourns only.
    pub fn holding_times(&self, state: usize) -> Vec<f64> {
        let mut out = Vec::new();
        let mut entered = if self.y[0] == state { Some(0.0) } else { None };
        for j in &self.jumps {
            if j.from == state {
                if let Some(t0) = entered.take() {
                    out.push(j.t - t0);
                }
            }
            if j.to == state {
                entered = Some(j.t);
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,x,y")?;
        for (t, x, y) in self.rows() {
            writeln!(out, "{t:.9e},{x:.12e},{y}")?;
        }
        Ok(())
    }
}

/// Long-format CSV `path_id,t,x,y` over several records.
pub fn write_long_csv<W: Write>(records: &[TrajectoryRecord], mut out: W) -> Result<()> {
    writeln!(out, "path_id,t,x,y")?;
    for r in records {
        for (t, x, y) in r.rows() {
            writeln!(out, "{},{t:.9e},{x:.12e},{y}", r.path_id)?;
        }
    }
    Ok(())
}

/// Jump log CSV `path_id,t,from,to`.
pub fn write_jump_log<W: Write>(records: &[TrajectoryRecord], mut out: W) -> Result<()> {
    writeln!(out, "path_id,t,from,to")?;
    for r in records {
        for j in &r.jumps {
            writeln!(out, "{},{:.12e},{},{}", r.path_id, j.t, j.from, j.to)?;
        }
    }
    Ok(())
}

/// Receives events of one path as it is generated.
pub trait Observer {
    type Output;
    fn start(&mut self, _x0: f64, _y0: usize) {}
    /// After step `k` (time `k * dt`), with Y already updated.
    fn step(&mut self, _k: usize, _t: f64, _x: f64, _y: usize) {}
    fn jump(&mut self, _jump: Jump) {}
    /// Lets the driver stop early.
    fn done(&self) -> bool {
        false
    }
    fn finish(self, clocks: &[f64]) -> Self::Output;
}

/// Builds a [`TrajectoryRecord`], keeping grid samples every `stride` steps.
#[derive(Debug, Clone)]
pub struct Recorder {
    record: TrajectoryRecord,
}

impl Recorder {
    pub fn new(path_id: usize, seed: u64, dt: f64, stride: usize) -> Self {
        Self {
            record: TrajectoryRecord {
                path_id,
                seed,
                dt,
                stride: stride.max(1),
                x: vec![],
                y: vec![],
                jumps: vec![],
                internal_clocks: vec![],
            },
        }
    }
}

impl Observer for Recorder {
    type Output = TrajectoryRecord;
    fn start(&mut self, x0: f64, y0: usize) {
        self.record.x.push(x0);
        self.record.y.push(y0);
    }
    fn step(&mut self, k: usize, _t: f64, x: f64, y: usize) {
        if k.is_multiple_of(self.record.stride) {
            self.record.x.push(x);
            self.record.y.push(y);
        }
    }
    fn jump(&mut self, jump: Jump) {
        self.record.jumps.push(jump);
    }
    fn finish(mut self, clocks: &[f64]) -> TrajectoryRecord {
        self.record.internal_clocks = clocks.to_vec();
        self.record
    }
}

/// `(X, Y)` at chosen step indices (index 0 is the initial point).
#[derive(Debug, Clone)]
pub struct Snapshots {
    steps: Vec<usize>,
    values: Vec<(f64, usize)>,
}

impl Snapshots {
    pub fn new(mut steps: Vec<usize>) -> Self {
        steps.sort_unstable();
        Self { steps, values: vec![] }
    }

    fn record(&mut self, k: usize, x: f64, y: usize) {
        while self.values.len() < self.steps.len() && self.steps[self.values.len()] == k {
            self.values.push((x, y));
        }
    }
}

impl Observer for Snapshots {
    type Output = Vec<(f64, usize)>;
    fn start(&mut self, x0: f64, y0: usize) {
        self.record(0, x0, y0);
    }
    fn step(&mut self, k: usize, _t: f64, x: f64, y: usize) {
        self.record(k, x, y);
    }
    fn finish(self, _: &[f64]) -> Self::Output {
        self.values
    }
}

/// First time X enters the closed interval `[a, b]`, refined by linear
/// interpolation between grid samples. Stops the path once hit.
#[derive(Debug, Clone)]
pub struct HittingTime {
    a: f64,
    b: f64,
    prev: (f64, f64),
    hit: Option<f64>,
}

impl HittingTime {
    pub fn new(a: f64, b: f64) -> Self {
        Self { a, b, prev: (0.0, f64::NAN), hit: None }
    }
}

impl Observer for HittingTime {
    type Output = Option<f64>;
    fn start(&mut self, x0: f64, _: usize) {
        if (self.a..=self.b).contains(&x0) {
            self.hit = Some(0.0);
        }
        self.prev = (0.0, x0);
    }
    fn step(&mut self, _k: usize, t: f64, x: f64, _y: usize) {
        if self.hit.is_none() {
            if (self.a..=self.b).contains(&x) {
                self.hit = Some(crossing_time(self.prev, (t, x), self.a, self.b));
            }
            self.prev = (t, x);
        }
    }
    fn done(&self) -> bool {
        self.hit.is_some()
    }
    fn finish(self, _: &[f64]) -> Option<f64> {
        self.hit
    }
}

fn crossing_time((t0, x0): (f64, f64), (t1, x1): (f64, f64), a: f64, b: f64) -> f64 {
    let edge = if x0 < a { a } else { b };
    let s = ((edge - x0) / (x1 - x0)).clamp(0.0, 1.0);
    t0 + s * (t1 - t0)
}

/// Y driven by per-pair clocks along a given X path.
struct YEngine<'a> {
    model: &'a CouplingModel,
    state: usize,
    budgets: Vec<f64>,
    eta_start: Vec<f64>,
    eta_end: Vec<f64>,
    rates_start: Vec<f64>,
    rates_end: Vec<f64>,
}

impl<'a> YEngine<'a> {
    fn new<R: Rng + ?Sized>(model: &'a CouplingModel, y0: usize, x0: f64, rng: &mut R) -> Self {
        let s = model.states();
        let budgets = (0..s * s).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let m = model.m();
        let mut engine = Self {
            model,
            state: y0,
            budgets,
            eta_start: vec![0.0; m],
            eta_end: vec![0.0; m],
            rates_start: vec![0.0; s],
            rates_end: vec![0.0; s],
        };
        model.eta_at(x0, &mut engine.eta_start);
        engine
    }

    fn rates(model: &CouplingModel, i: usize, eta: &[f64], out: &mut [f64]) {
        let ai = model.alpha_from_eta(i, eta);
        for (j, o) in out.iter_mut().enumerate() {
            let q = model.q[i][j];
            *o = if j == i || q == 0.0 { 0.0 } else { q * model.alpha_from_eta(j, eta) / ai };
        }
    }

    /// Advances Y over `[t0, t1]` while X moves linearly from `x0` to `x1`.
    fn advance<R: Rng + ?Sized, O: Observer>(
        &mut self,
        (mut t0, mut x0): (f64, f64),
        (t1, x1): (f64, f64),
        rng: &mut R,
        obs: &mut O,
    ) {
        let s = self.model.states();
        self.model.eta_at(x1, &mut self.eta_end);
        loop {
            let i = self.state;
            Self::rates(self.model, i, &self.eta_start, &mut self.rates_start);
            Self::rates(self.model, i, &self.eta_end, &mut self.rates_end);
            let span = t1 - t0;
            // First clock to run out, with the depleting integral linear in time.
            let mut first: Option<(usize, f64)> = None;
            for j in 0..s {
                let inc = 0.5 * span * (self.rates_start[j] + self.rates_end[j]);
                let budget = self.budgets[i * s + j];
                if inc > 0.0 && budget <= inc {
                    let frac = budget / inc;
                    if first.is_none_or(|(_, f)| frac < f) {
                        first = Some((j, frac));
                    }
                }
            }
            match first {
                None => {
                    for j in 0..s {
                        self.budgets[i * s + j] -= 0.5 * span * (self.rates_start[j] + self.rates_end[j]);
                    }
                    std::mem::swap(&mut self.eta_start, &mut self.eta_end);
                    return;
                }
                Some((to, frac)) => {
                    for j in 0..s {
                        if j != to {
                            self.budgets[i * s + j] -= frac * 0.5 * span * (self.rates_start[j] + self.rates_end[j]);
                        }
                    }
                    self.budgets[i * s + to] = rng.sample(Exp1);
                    let t = t0 + frac * span;
                    let x = x0 + frac * (x1 - x0);
                    obs.jump(Jump { t, x, from: i, to });
                    self.state = to;
                    t0 = t;
                    x0 = x;
                    self.model.eta_at(x, &mut self.eta_start);
                }
            }
        }
    }
}

/// Runs Y along a stored X path and records the coupled trajectory.
pub fn simulate_y_given_x<R: Rng + ?Sized>(
    path: &XPath,
    model: &CouplingModel,
    y0: usize,
    rng: &mut R,
) -> TrajectoryRecord {
    let mut obs = Recorder::new(0, 0, path.dt, 1);
    obs.start(path.x[0], y0);
    let mut engine = YEngine::new(model, y0, path.x[0], rng);
    for k in 1..path.x.len() {
        let t0 = (k - 1) as f64 * path.dt;
        let t1 = k as f64 * path.dt;
        engine.advance((t0, path.x[k - 1]), (t1, path.x[k]), rng, &mut obs);
        obs.step(k, t1, path.x[k], engine.state);
    }
    let clocks = engine.budgets.clone();
    obs.finish(&clocks)
}

/// Where a path starts.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialCondition {
    /// `(X(0), Y(0))` drawn from `p_i alpha(i, dx)`.
    Coupled { p: Vec<f64> },
    Fixed { x0: f64, y0: usize },
}

/// Parameters of an ensemble run.
#[derive(Debug, Clone, Serialize)]
pub struct EnsembleConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub horizon: f64,
    pub eps: f64,
    pub seed: u64,
    pub initial: InitialCondition,
    /// Blow-up guard on `|X|`, normally `10 L`.
    pub bound: f64,
    pub allow_large_dt: bool,
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::InvalidInput("n_paths must be at least 1".into()));
        }
        step_count(self.dt, self.horizon)?;
        if !(self.eps >= 0.0) {
            return Err(Error::InvalidInput(format!("eps must be nonnegative, got {}", self.eps)));
        }
        if !(self.bound > 0.0) {
            return Err(Error::InvalidInput("blow-up bound must be positive".into()));
        }
        Ok(())
    }
}

/// Independent generators for path `index`: initial draw, X noise, Y clocks.
pub fn path_rngs(seed: u64, index: usize) -> (ChaCha8Rng, ChaCha8Rng, ChaCha8Rng) {
    let make = |k: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream(3 * index as u64 + k);
        r
    };
    (make(0), make(1), make(2))
}

/// Simulates one coupled path, streaming events to `obs`. Without a model
/// Y stays at its initial state.
#[allow(clippy::too_many_arguments)]
pub fn run_path<O: Observer>(
    potential: &Potential,
    model: Option<&CouplingModel>,
    cfg: &EnsembleConfig,
    index: usize,
    mut obs: O,
) -> Result<O::Output> {
    let steps = step_count(cfg.dt, cfg.horizon)?;
    let (mut rng_init, mut rng_x, mut rng_y) = path_rngs(cfg.seed, index);
    let (x0, y0) = match (&cfg.initial, model) {
        (InitialCondition::Coupled { p }, Some(m)) => m.sample_initial(p, &mut rng_init),
        (InitialCondition::Coupled { .. }, None) => {
            return Err(Error::InvalidInput("coupled initial law needs a coupling model".into()))
        }
        (InitialCondition::Fixed { x0, y0 }, _) => (*x0, *y0),
    };
    obs.start(x0, y0);
    let mut engine = model.map(|m| YEngine::new(m, y0, x0, &mut rng_y));
    let noise = (2.0 * cfg.eps * cfg.dt).sqrt();
    let mut x = x0;
    for k in 1..=steps {
        if obs.done() {
            break;
        }
        let t0 = (k - 1) as f64 * cfg.dt;
        let t1 = k as f64 * cfg.dt;
        let next = em_step(potential, x, cfg.dt, noise, &mut rng_x);
        if !(next.abs() <= cfg.bound) {
            return Err(Error::BlowUp { t: t1, x: next.abs() });
        }
        let y = match engine.as_mut() {
            Some(e) => {
                e.advance((t0, x), (t1, next), &mut rng_y, &mut obs);
                e.state
            }
            None => y0,
        };
        x = next;
        obs.step(k, t1, x, y);
    }
    let clocks = engine.map(|e| e.budgets).unwrap_or_default();
    Ok(obs.finish(&clocks))
}

/// Runs `cfg.n_paths` paths in parallel, one observer per path. Results are
/// in path order and independent of scheduling.
pub fn simulate_ensemble_with<O, F>(
    potential: &Potential,
    model: Option<&CouplingModel>,
    cfg: &EnsembleConfig,
    make: F,
) -> Result<Vec<O::Output>>
where
    O: Observer,
    O::Output: Send,
    F: Fn(usize) -> O + Sync,
{
    cfg.validate()?;
    check_dt(potential, cfg.dt, cfg.allow_large_dt)?;
    let results: Vec<Result<O::Output>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| run_path(potential, model, cfg, i, make(i)))
        .collect();
    let mut out = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => out.push(v),
            Err(e) => failures.push((i, e.to_string())),
        }
    }
    if failures.is_empty() {
        Ok(out)
    } else {
        Err(Error::Ensemble(failures))
    }
}

/// Full coupled records, grid samples thinned by `stride`.
pub fn simulate_ensemble(
    potential: &Potential,
    model: Option<&CouplingModel>,
    cfg: &EnsembleConfig,
    stride: usize,
) -> Result<Vec<TrajectoryRecord>> {
    simulate_ensemble_with(potential, model, cfg, |i| Recorder::new(i, cfg.seed, cfg.dt, stride))
}

/// Region for hitting and exit times.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    /// Closed interval `[a, b]` for X.
    Interval(f64, f64),
    /// Set of chain states for Y.
    States(Vec<usize>),
}

/// `inf { t >= 0 : process in region }` within the record, or `None`.
/// X uses the grid samples with linear-interpolated boundary crossing; Y uses
/// exact jump times.
pub fn first_hitting_time(record: &TrajectoryRecord, region: &Region) -> Option<f64> {
    match region {
        Region::Interval(a, b) => {
            let inside = |x: f64| (*a..=*b).contains(&x);
            if inside(record.x[0]) {
                return Some(0.0);
            }
            (1..record.x.len()).find(|&k| inside(record.x[k])).map(|k| {
                crossing_time(
                    (record.sample_time(k - 1), record.x[k - 1]),
                    (record.sample_time(k), record.x[k]),
                    *a,
                    *b,
                )
            })
        }
        Region::States(set) => {
            if set.contains(&record.y[0]) {
                return Some(0.0);
            }
            record.jumps.iter().find(|j| set.contains(&j.to)).map(|j| j.t)
        }
    }
}

/// First time the process leaves `region`, or `None`.
pub fn first_exit_time(record: &TrajectoryRecord, region: &Region) -> Option<f64> {
    match region {
        Region::Interval(a, b) => {
            let outside = |x: f64| x < *a || x > *b;
            if outside(record.x[0]) {
                return Some(0.0);
            }
            (1..record.x.len()).find(|&k| outside(record.x[k])).map(|k| {
                let (x0, x1) = (record.x[k - 1], record.x[k]);
                let edge = if x1 > *b { *b } else { *a };
                let s = ((edge - x0) / (x1 - x0)).clamp(0.0, 1.0);
                record.sample_time(k - 1) + s * record.stride as f64 * record.dt
            })
        }
        Region::States(set) => {
            if !set.contains(&record.y[0]) {
                return Some(0.0);
            }
            record.jumps.iter().find(|j| !set.contains(&j.to)).map(|j| j.t)
        }
    }
}
