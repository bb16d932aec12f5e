//! Experiment configuration: JSON in, validated and fully resolved out.
//!
//! Parsing walks the JSON tree by hand so that every problem is reported at
//! once, each with its key path.

use std::collections::BTreeSet;

use eigencoupler::chain::{InitialLaw, Scaling};
use eigencoupler::potential::Potential;
use eigencoupler::simulate::{check_dt, dt_bound};
use eigencoupler::spectral::Grid;
use serde::Serialize;
use serde_json::{Map, Value};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum PotentialConfig {
    Preset(String),
    Coefficients(Vec<f64>),
}

impl PotentialConfig {
    pub fn build(&self) -> eigencoupler::Result<Potential> {
        match self {
            Self::Preset(name) => Potential::preset(name),
            Self::Coefficients(c) => Potential::polynomial(c.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum EpsilonConfig {
    Single(f64),
    Sweep(Vec<f64>),
}

impl EpsilonConfig {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Self::Single(e) => vec![*e],
            Self::Sweep(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridConfig {
    pub n: usize,
    pub half_width: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainShape {
    /// Two-state chain for two minima, well-mass birth-death otherwise.
    Auto,
    TwoState,
    BirthDeath,
    WellMasses,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainConfig {
    pub shape: ChainShape,
    pub theta: f64,
    pub kappa: f64,
    pub scaling: Scaling,
    pub initial: InitialLaw,
    /// Explicit generator; overrides `shape`.
    pub q: Option<Vec<Vec<f64>>>,
    /// Stationary law for `birth_death`; uniform when absent.
    pub stationary: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationConfig {
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub allow_large_dt: bool,
    /// Fixed start; paths start from the coupled initial law when absent.
    pub x0: Option<f64>,
    pub y0: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleConfig {
    pub n: usize,
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsConfig {
    pub bins: usize,
    pub rho: Option<f64>,
    pub rate_paths: usize,
    pub rate_horizon: f64,
    /// Defaults to `min(1e-3, stability bound)` of the potential.
    pub rate_dt: Option<f64>,
    pub ks_resamples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumConfig {
    /// Eigenpairs beyond `lambda_0`; defaults to `max(m, 4)`.
    pub modes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputConfig {
    pub directory: String,
    pub formats: Vec<String>,
    /// Paths whose full trajectories are written by `simulate`.
    pub trajectory_paths: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub potential: PotentialConfig,
    pub epsilon: EpsilonConfig,
    pub grid: GridConfig,
    pub chain: ChainConfig,
    pub simulation: SimulationConfig,
    pub oracle: OracleConfig,
    pub stats: StatsConfig,
    pub spectrum: SpectrumConfig,
    pub outputs: OutputConfig,
}

impl ExperimentConfig {
    pub fn eps(&self) -> f64 {
        self.epsilon.values()[0]
    }

    /// One config per epsilon value.
    pub fn sub_configs(&self) -> Vec<ExperimentConfig> {
        self.epsilon
            .values()
            .into_iter()
            .map(|e| ExperimentConfig { epsilon: EpsilonConfig::Single(e), ..self.clone() })
            .collect()
    }

    pub fn grid_for(&self, potential: &Potential, eps: f64) -> eigencoupler::Result<Grid> {
        grid_for(&self.grid, potential, eps, self.grid.n)
    }

    pub fn rate_dt(&self, potential: &Potential) -> f64 {
        self.stats.rate_dt.unwrap_or_else(|| dt_bound(potential).min(1e-3))
    }

    pub fn oracle_grid_for(&self, potential: &Potential, eps: f64) -> eigencoupler::Result<Grid> {
        grid_for(&self.grid, potential, eps, self.oracle.n)
    }
}

fn grid_for(g: &GridConfig, potential: &Potential, eps: f64, n: usize) -> eigencoupler::Result<Grid> {
    match g.half_width {
        Some(l) => {
            let grid = Grid::new(l, n)?;
            grid.validate(potential, eps)?;
            Ok(grid)
        }
        None => Grid::auto(potential, eps, n),
    }
}

const FORMATS: [&str; 3] = ["csv", "json", "svg"];

struct Obj<'a> {
    map: Option<&'a Map<String, Value>>,
    path: String,
    seen: BTreeSet<&'static str>,
}

impl<'a> Obj<'a> {
    fn new(v: Option<&'a Value>, path: &str, errs: &mut Vec<String>) -> Self {
        let map = match v {
            None => None,
            Some(Value::Object(m)) => Some(m),
            Some(_) => {
                errs.push(format!("{path}: expected an object"));
                None
            }
        };
        Self { map, path: path.to_string(), seen: BTreeSet::new() }
    }

    fn key(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.path)
        }
    }

    fn get(&mut self, key: &'static str) -> (Option<&'a Value>, String) {
        self.seen.insert(key);
        (self.map.and_then(|m| m.get(key)).filter(|v| !v.is_null()), self.key(key))
    }

    fn finish(self, errs: &mut Vec<String>) {
        if let Some(m) = self.map {
            for k in m.keys() {
                if !self.seen.contains(k.as_str()) {
                    errs.push(format!("{}: unknown key", self.key(k)));
                }
            }
        }
    }

    fn f64(&mut self, key: &'static str, default: f64, errs: &mut Vec<String>) -> f64 {
        let (v, path) = self.get(key);
        v.map_or(default, |v| as_f64(v, &path, errs).unwrap_or(default))
    }

    fn opt_f64(&mut self, key: &'static str, errs: &mut Vec<String>) -> Option<f64> {
        let (v, path) = self.get(key);
        v.and_then(|v| as_f64(v, &path, errs))
    }

    fn usize(&mut self, key: &'static str, default: usize, errs: &mut Vec<String>) -> usize {
        self.opt_usize(key, errs).unwrap_or(default)
    }

    fn opt_usize(&mut self, key: &'static str, errs: &mut Vec<String>) -> Option<usize> {
        let (v, path) = self.get(key);
        v.and_then(|v| match v.as_u64() {
            Some(u) => Some(u as usize),
            None => {
                errs.push(format!("{path}: expected a nonnegative integer, got {v}"));
                None
            }
        })
    }

    fn bool(&mut self, key: &'static str, default: bool, errs: &mut Vec<String>) -> bool {
        let (v, path) = self.get(key);
        v.map_or(default, |v| {
            v.as_bool().unwrap_or_else(|| {
                errs.push(format!("{path}: expected true or false, got {v}"));
                default
            })
        })
    }

    fn string(&mut self, key: &'static str, default: &str, errs: &mut Vec<String>) -> String {
        let (v, path) = self.get(key);
        v.map_or(default.to_string(), |v| match v.as_str() {
            Some(s) => s.to_string(),
            None => {
                errs.push(format!("{path}: expected a string, got {v}"));
                default.to_string()
            }
        })
    }
}

fn as_f64(v: &Value, path: &str, errs: &mut Vec<String>) -> Option<f64> {
    match v.as_f64() {
        Some(x) => Some(x),
        None => {
            errs.push(format!("{path}: expected a number, got {v}"));
            None
        }
    }
}

fn f64_list(v: &Value, path: &str, errs: &mut Vec<String>) -> Option<Vec<f64>> {
    let Some(items) = v.as_array() else {
        errs.push(format!("{path}: expected an array of numbers"));
        return None;
    };
    let before = errs.len();
    let out: Vec<f64> = items
        .iter()
        .enumerate()
        .filter_map(|(i, x)| as_f64(x, &format!("{path}[{i}]"), errs))
        .collect();
    (errs.len() == before).then_some(out)
}

fn check(cond: bool, errs: &mut Vec<String>, msg: impl FnOnce() -> String) {
    if !cond {
        errs.push(msg());
    }
}

/// Parses a JSON document, returning every problem found.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, Vec<String>> {
    let root: Value = serde_json::from_str(text).map_err(|e| vec![format!("config is not valid JSON: {e}")])?;
    let mut errs = Vec::new();
    let mut top = Obj::new(Some(&root), "", &mut errs);

    let (v, path) = top.get("potential");
    let potential = match v {
        None => {
            errs.push("potential: required".into());
            None
        }
        Some(Value::String(s)) => Some(PotentialConfig::Preset(s.clone())),
        Some(v @ Value::Array(_)) => f64_list(v, &path, &mut errs).map(PotentialConfig::Coefficients),
        Some(v @ Value::Object(_)) => {
            let mut o = Obj::new(Some(v), &path, &mut errs);
            let (preset, _) = o.get("preset");
            let (coeffs, cpath) = o.get("coefficients");
            let out = match (preset, coeffs) {
                (Some(Value::String(s)), None) => Some(PotentialConfig::Preset(s.clone())),
                (None, Some(c)) => f64_list(c, &cpath, &mut errs).map(PotentialConfig::Coefficients),
                _ => {
                    errs.push(format!("{path}: give exactly one of \"preset\" (string) or \"coefficients\""));
                    None
                }
            };
            o.finish(&mut errs);
            out
        }
        Some(v) => {
            errs.push(format!("{path}: expected a preset name, coefficient array or object, got {v}"));
            None
        }
    };

    let (v, path) = top.get("epsilon");
    let epsilon = match v {
        None => {
            errs.push("epsilon: required".into());
            None
        }
        Some(Value::Array(_)) => f64_list(v.unwrap(), &path, &mut errs).map(EpsilonConfig::Sweep),
        Some(v) => as_f64(v, &path, &mut errs).map(EpsilonConfig::Single),
    };
    if let Some(e) = &epsilon {
        let vals = e.values();
        check(!vals.is_empty(), &mut errs, || "epsilon: sweep list is empty".into());
        for (i, x) in vals.iter().enumerate() {
            let p = if matches!(e, EpsilonConfig::Sweep(_)) { format!("epsilon[{i}]") } else { "epsilon".into() };
            check(*x > 0.0 && x.is_finite(), &mut errs, || format!("{p}: must be positive, got {x}"));
        }
    }

    let (v, path) = top.get("grid");
    let mut o = Obj::new(v, &path, &mut errs);
    let grid = GridConfig { n: o.usize("n", 2000, &mut errs), half_width: o.opt_f64("half_width", &mut errs) };
    o.finish(&mut errs);
    check(grid.n >= 3, &mut errs, || format!("grid.n: need at least 3 nodes, got {}", grid.n));
    if let Some(l) = grid.half_width {
        check(l > 0.0 && l.is_finite(), &mut errs, || format!("grid.half_width: must be positive, got {l}"));
    }

    let (v, path) = top.get("chain");
    let mut o = Obj::new(v, &path, &mut errs);
    let shape_name = o.string("shape", "auto", &mut errs);
    let shape = match shape_name.as_str() {
        "auto" => ChainShape::Auto,
        "two_state" => ChainShape::TwoState,
        "birth_death" => ChainShape::BirthDeath,
        "well_masses" => ChainShape::WellMasses,
        other => {
            errs.push(format!(
                "chain.shape: unknown shape \"{other}\" (auto, two_state, birth_death, well_masses)"
            ));
            ChainShape::Auto
        }
    };
    let theta = o.f64("theta", 0.5, &mut errs);
    let kappa = o.f64("kappa", 0.9, &mut errs);
    let scaling_name = o.string("scaling", "budget", &mut errs);
    let scaling = match scaling_name.as_str() {
        "budget" => Scaling::Budget,
        "maximize_first" => Scaling::MaximizeFirst,
        other => {
            errs.push(format!("chain.scaling: unknown scaling \"{other}\" (budget, maximize_first)"));
            Scaling::Budget
        }
    };
    let (v, ipath) = o.get("initial");
    let initial = match v {
        None => InitialLaw::Uniform,
        Some(Value::String(s)) if s == "uniform" => InitialLaw::Uniform,
        Some(Value::String(s)) if s == "stationary" => InitialLaw::Stationary,
        Some(v @ Value::Array(_)) => f64_list(v, &ipath, &mut errs).map_or(InitialLaw::Uniform, InitialLaw::Explicit),
        Some(Value::Object(m)) if m.len() == 1 && m.contains_key("point") => match m["point"].as_u64() {
            Some(i) => InitialLaw::Point(i as usize),
            None => {
                errs.push(format!("{ipath}.point: expected a state index"));
                InitialLaw::Uniform
            }
        },
        Some(Value::Object(m)) if m.len() == 1 && m.contains_key("explicit") => {
            f64_list(&m["explicit"], &format!("{ipath}.explicit"), &mut errs)
                .map_or(InitialLaw::Uniform, InitialLaw::Explicit)
        }
        Some(v) => {
            errs.push(format!(
                "{ipath}: expected \"uniform\", \"stationary\", {{\"point\": i}} or a probability vector, got {v}"
            ));
            InitialLaw::Uniform
        }
    };
    let (v, qpath) = o.get("q");
    let q = v.and_then(|v| {
        let rows = v.as_array().map(|rows| {
            rows.iter()
                .enumerate()
                .map(|(i, r)| f64_list(r, &format!("{qpath}[{i}]"), &mut errs))
                .collect::<Option<Vec<_>>>()
        });
        match rows {
            Some(r) => r,
            None => {
                errs.push(format!("{qpath}: expected a matrix (array of rows)"));
                None
            }
        }
    });
    let (v, spath) = o.get("stationary");
    let stationary = v.and_then(|v| f64_list(v, &spath, &mut errs));
    o.finish(&mut errs);
    check(theta > 0.0 && theta < 1.0, &mut errs, || format!("chain.theta: must lie in (0, 1), got {theta}"));
    check((0.0..1.0).contains(&kappa), &mut errs, || format!("chain.kappa: must lie in [0, 1), got {kappa}"));
    if let Some(q) = &q {
        let s = q.len();
        check(s >= 2, &mut errs, || "chain.q: need at least 2 states".into());
        for (i, row) in q.iter().enumerate() {
            if row.len() != s {
                errs.push(format!("chain.q[{i}]: expected {s} entries, got {}", row.len()));
                continue;
            }
            let sum: f64 = row.iter().sum();
            let scale = row.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
            check(sum.abs() <= 1e-12 * scale, &mut errs, || format!("chain.q[{i}]: row sums to {sum:e}, not 0"));
            for (j, v) in row.iter().enumerate() {
                check(i == j || *v >= 0.0, &mut errs, || format!("chain.q[{i}][{j}]: negative rate {v}"));
            }
        }
    }
    if let Some(pi) = &stationary {
        let sum: f64 = pi.iter().sum();
        check(pi.iter().all(|&v| v > 0.0), &mut errs, || "chain.stationary: entries must be positive".into());
        check((sum - 1.0).abs() <= 1e-12, &mut errs, || format!("chain.stationary: sums to {sum}, not 1"));
    }

    let (v, path) = top.get("simulation");
    let mut o = Obj::new(v, &path, &mut errs);
    let simulation = SimulationConfig {
        dt: o.f64("dt", 1e-4, &mut errs),
        horizon: o.f64("horizon", 10.0, &mut errs),
        n_paths: o.usize("n_paths", 20_000, &mut errs),
        seed: o.opt_usize("seed", &mut errs).map_or(42, |s| s as u64),
        allow_large_dt: o.bool("allow_large_dt", false, &mut errs),
        x0: o.opt_f64("x0", &mut errs),
        y0: o.usize("y0", 0, &mut errs),
    };
    o.finish(&mut errs);
    let s = &simulation;
    check(s.dt > 0.0 && s.dt.is_finite(), &mut errs, || format!("simulation.dt: must be positive, got {}", s.dt));
    check(s.horizon >= s.dt && s.horizon.is_finite(), &mut errs, || {
        format!("simulation.horizon: must be at least dt, got {}", s.horizon)
    });
    check(s.n_paths >= 1, &mut errs, || "simulation.n_paths: must be at least 1".into());

    let (v, path) = top.get("oracle");
    let mut o = Obj::new(v, &path, &mut errs);
    let n = o.usize("n", 200, &mut errs);
    let (tv, tpath) = o.get("times");
    let times = tv.and_then(|v| f64_list(v, &tpath, &mut errs)).unwrap_or_else(|| vec![0.1, 1.0, 10.0]);
    o.finish(&mut errs);
    check(n >= 3, &mut errs, || format!("oracle.n: need at least 3 nodes, got {n}"));
    check(times.iter().all(|t| *t >= 0.0 && t.is_finite()), &mut errs, || {
        "oracle.times: times must be nonnegative".into()
    });
    let oracle = OracleConfig { n, times };

    let (v, path) = top.get("stats");
    let mut o = Obj::new(v, &path, &mut errs);
    let stats = StatsConfig {
        bins: o.usize("bins", 50, &mut errs),
        rho: o.opt_f64("rho", &mut errs),
        rate_paths: o.usize("rate_paths", 2000, &mut errs),
        rate_horizon: o.f64("rate_horizon", 400.0, &mut errs),
        rate_dt: o.opt_f64("rate_dt", &mut errs),
        ks_resamples: o.usize("ks_resamples", 2000, &mut errs),
    };
    o.finish(&mut errs);
    check(stats.bins >= 2, &mut errs, || "stats.bins: need at least 2".into());
    if let Some(r) = stats.rho {
        check(r > 0.0, &mut errs, || format!("stats.rho: must be positive, got {r}"));
    }
    check(stats.rate_horizon > 0.0, &mut errs, || "stats.rate_horizon: must be positive".into());
    if let Some(dt) = stats.rate_dt {
        check(dt > 0.0 && stats.rate_horizon >= dt, &mut errs, || "stats: need 0 < rate_dt <= rate_horizon".into());
    }
    check(stats.rate_paths >= 1, &mut errs, || "stats.rate_paths: must be at least 1".into());
    check(stats.ks_resamples >= 1, &mut errs, || "stats.ks_resamples: must be at least 1".into());

    let (v, path) = top.get("spectrum");
    let mut o = Obj::new(v, &path, &mut errs);
    let spectrum = SpectrumConfig { modes: o.opt_usize("modes", &mut errs) };
    o.finish(&mut errs);

    let (v, path) = top.get("outputs");
    let mut o = Obj::new(v, &path, &mut errs);
    let directory = o.string("directory", "out", &mut errs);
    let (fv, fpath) = o.get("formats");
    let formats = match fv {
        None => FORMATS.iter().map(|s| s.to_string()).collect(),
        Some(v) => match v.as_array() {
            Some(items) => items
                .iter()
                .enumerate()
                .filter_map(|(i, f)| match f.as_str() {
                    Some(s) if FORMATS.contains(&s) => Some(s.to_string()),
                    _ => {
                        errs.push(format!("{fpath}[{i}]: expected one of csv, json, svg, got {f}"));
                        None
                    }
                })
                .collect(),
            None => {
                errs.push(format!("{fpath}: expected an array"));
                vec![]
            }
        },
    };
    let outputs = OutputConfig {
        directory,
        formats,
        trajectory_paths: o.usize("trajectory_paths", 100, &mut errs),
        stride: o.usize("stride", 100, &mut errs),
    };
    o.finish(&mut errs);
    check(outputs.stride >= 1, &mut errs, || "outputs.stride: must be at least 1".into());
    top.finish(&mut errs);

    let (Some(potential), Some(epsilon)) = (potential, epsilon) else {
        return Err(errs);
    };
    let cfg = ExperimentConfig {
        potential,
        epsilon,
        grid,
        chain: ChainConfig { shape, theta, kappa, scaling, initial, q, stationary },
        simulation,
        oracle,
        stats,
        spectrum,
        outputs,
    };
    validate_semantics(&cfg, &mut errs);
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(errs)
    }
}

/// Module preconditions that need the built potential.
fn validate_semantics(cfg: &ExperimentConfig, errs: &mut Vec<String>) {
    let potential = match cfg.potential.build() {
        Ok(p) => p,
        Err(e) => {
            errs.push(format!("potential: {e}"));
            return;
        }
    };
    let states = potential.m() + 1;
    for eps in cfg.epsilon.values().into_iter().filter(|e| *e > 0.0) {
        if let Err(e) = cfg.grid_for(&potential, eps) {
            errs.push(format!("grid (epsilon = {eps}): {e}"));
        }
        if let Err(e) = cfg.oracle_grid_for(&potential, eps) {
            errs.push(format!("oracle.n (epsilon = {eps}): {e}"));
        }
    }
    if cfg.simulation.dt > 0.0 {
        if let Err(e) = check_dt(&potential, cfg.simulation.dt, cfg.simulation.allow_large_dt) {
            errs.push(format!("simulation.dt: {e}; set simulation.allow_large_dt to override"));
        }
        if let Err(e) = check_dt(&potential, cfg.rate_dt(&potential), cfg.simulation.allow_large_dt) {
            errs.push(format!("stats.rate_dt: {e}"));
        }
    }
    if cfg.simulation.y0 >= states {
        errs.push(format!("simulation.y0: state {} out of range for {states} states", cfg.simulation.y0));
    }
    if let Some(q) = &cfg.chain.q {
        if q.len() != states {
            errs.push(format!("chain.q: potential has {states} minima, q has {} states", q.len()));
        }
    }
    if let Some(pi) = &cfg.chain.stationary {
        if pi.len() != states {
            errs.push(format!("chain.stationary: expected {states} entries, got {}", pi.len()));
        }
    }
    match &cfg.chain.initial {
        InitialLaw::Point(i) if *i >= states => {
            errs.push(format!("chain.initial.point: state {i} out of range for {states} states"))
        }
        InitialLaw::Explicit(p) if p.len() != states || (p.iter().sum::<f64>() - 1.0).abs() > 1e-12 => {
            errs.push(format!("chain.initial: expected a probability vector of length {states}"))
        }
        _ => {}
    }
    if cfg.chain.shape == ChainShape::TwoState && states != 2 && cfg.chain.q.is_none() {
        errs.push(format!("chain.shape: two_state needs exactly 2 minima, potential has {states}"));
    }
    if cfg.chain.scaling == Scaling::MaximizeFirst && states != 2 {
        errs.push("chain.scaling: maximize_first is defined for two states only".into());
    }
}
