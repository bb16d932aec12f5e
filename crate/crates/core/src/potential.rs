//! Polynomial potentials, their critical structure and domains of attraction.
//!
//! Only polynomials of even degree with a positive leading coefficient are
//! admitted, which makes the growth exponents exact functions of the degree.

use serde::Serialize;

use crate::error::{Error, Result};

/// Roots of `F'` are located to this absolute tolerance.
pub const ROOT_TOLERANCE: f64 = 1e-12;

/// Critical points with `|F''| < DEGENERACY_THRESHOLD` are rejected.
pub const DEGENERACY_THRESHOLD: f64 = 1e-9;

/// A smooth confining polynomial potential `F`.
#[derive(Debug, Clone, Serialize)]
pub struct Potential {
    /// Coefficients, lowest degree first.
    coefficients: Vec<f64>,
    #[serde(skip)]
    gradient: Vec<f64>,
    #[serde(skip)]
    hessian: Vec<f64>,
    minima: Vec<f64>,
    maxima: Vec<f64>,
}

impl Potential {
    /// Builds a potential from coefficients (lowest degree first) and
    /// locates its critical points.
    pub fn polynomial(coefficients: Vec<f64>) -> Result<Self> {
        let coefficients = trim(coefficients);
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite coefficient".into()));
        }
        let degree = coefficients.len().saturating_sub(1);
        if degree < 2 || !degree.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "potential must have even degree >= 2, got degree {degree}"
            )));
        }
        if coefficients[degree] <= 0.0 {
            return Err(Error::InvalidInput(
                "leading coefficient must be positive".into(),
            ));
        }
        let gradient = derivative(&coefficients);
        let hessian = derivative(&gradient);
        let (minima, maxima) = critical_points_of(&gradient, &hessian, None)?;
        Ok(Self {
            coefficients,
            gradient,
            hessian,
            minima,
            maxima,
        })
    }

    /// Built-in presets: `double_well`, `tilted_double_well`, `triple_well`
    /// and the single-well `ou` (alias `harmonic`).
    pub fn preset(name: &str) -> Result<Self> {
        let coefficients = match name {
            // (x^2 - 1)^2 / 4
            "double_well" => vec![0.25, 0.0, -0.5, 0.0, 0.25],
            "tilted_double_well" => vec![0.25, 0.1, -0.5, 0.0, 0.25],
            // x^6/6 - x^4 + 3x^2/2: minima {-sqrt 3, 0, sqrt 3}, maxima {-1, 1}
            "triple_well" => vec![0.0, 0.0, 1.5, 0.0, -1.0, 0.0, 1.0 / 6.0],
            "ou" | "harmonic" => vec![0.0, 0.0, 0.5],
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown potential preset '{other}'"
                )))
            }
        };
        Self::polynomial(coefficients)
    }

    pub const PRESETS: [&'static str; 4] = ["double_well", "tilted_double_well", "triple_well", "ou"];

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn eval(&self, x: f64) -> f64 {
        horner(&self.coefficients, x)
    }

    pub fn grad(&self, x: f64) -> f64 {
        horner(&self.gradient, x)
    }

    pub fn hessian(&self, x: f64) -> f64 {
        horner(&self.hessian, x)
    }

    /// Ordered local minima `x_0 < ... < x_m`.
    pub fn minima(&self) -> &[f64] {
        &self.minima
    }

    /// Ordered local maxima (separatrix points in one dimension).
    pub fn maxima(&self) -> &[f64] {
        &self.maxima
    }

    /// Number of wells minus one, i.e. `m`.
    pub fn m(&self) -> usize {
        self.minima.len() - 1
    }

    /// Symbolic growth exponents `(a1, a2)`; `|F'|^2` has degree `2(deg - 1)`.
    pub fn growth_exponents(&self) -> (f64, f64) {
        let a = 2.0 * (self.degree() as f64 - 1.0);
        (a, a)
    }

    /// Global minimum value of `F` over its local minima.
    pub fn min_value(&self) -> f64 {
        self.minima
            .iter()
            .map(|&x| self.eval(x))
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest `|F''|` over the local minima.
    pub fn max_curvature_at_minima(&self) -> f64 {
        self.minima
            .iter()
            .map(|&x| self.hessian(x).abs())
            .fold(0.0, f64::max)
    }

    /// Schrödinger potential `V_eps = |F'|^2 / (4 eps^2) - F'' / (2 eps)`.
    pub fn schrodinger_potential(&self, x: f64, eps: f64) -> f64 {
        let g = self.grad(x);
        g * g / (4.0 * eps * eps) - self.hessian(x) / (2.0 * eps)
    }
}

fn trim(mut c: Vec<f64>) -> Vec<f64> {
    while c.len() > 1 && c.last() == Some(&0.0) {
        c.pop();
    }
    c
}

pub(crate) fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
}

pub(crate) fn derivative(c: &[f64]) -> Vec<f64> {
    if c.len() <= 1 {
        return vec![0.0];
    }
    c.iter()
        .enumerate()
        .skip(1)
        .map(|(k, &a)| k as f64 * a)
        .collect()
}

/// Cauchy bound: every real root of `c` lies in `[-R, R]`.
fn cauchy_bound(c: &[f64]) -> f64 {
    let lead = *c.last().unwrap();
    1.0 + c[..c.len() - 1]
        .iter()
        .map(|a| (a / lead).abs())
        .fold(0.0, f64::max)
}

fn bisect(c: &[f64], mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = horner(c, lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= ROOT_TOLERANCE || mid <= lo || mid >= hi {
            break;
        }
        let fm = horner(c, mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Real roots of a polynomial in `(lo, hi)`, isolated through the roots of
/// its derivative so that close root pairs cannot be skipped.
fn real_roots(c: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let c = trim(c.to_vec());
    let degree = c.len() - 1;
    if degree == 0 {
        return Vec::new();
    }
    if degree == 1 {
        let r = -c[0] / c[1];
        return if r > lo && r < hi { vec![r] } else { Vec::new() };
    }
    let mut breaks = vec![lo];
    breaks.extend(real_roots(&derivative(&c), lo, hi));
    breaks.push(hi);
    let mut roots = Vec::new();
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (fa, fb) = (horner(&c, a), horner(&c, b));
        if fa == 0.0 {
            if a > lo && roots.last() != Some(&a) {
                roots.push(a);
            }
            continue;
        }
        if fb == 0.0 {
            if b < hi {
                roots.push(b);
            }
            continue;
        }
        if (fa < 0.0) != (fb < 0.0) {
            roots.push(bisect(&c, a, b));
        }
    }
    roots
}

fn critical_points_of(
    gradient: &[f64],
    hessian: &[f64],
    bracket: Option<(f64, f64)>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let bound = cauchy_bound(gradient);
    let (mut lo, mut hi) = bracket.unwrap_or((-1.0, 1.0));
    // Widen until the bracket holds every real root and F' changes sign across it.
    while !(lo < -bound && hi > bound && horner(gradient, lo) < 0.0 && horner(gradient, hi) > 0.0) {
        lo = 2.0 * lo.min(-1.0);
        hi = 2.0 * hi.max(1.0);
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidInput("could not bracket critical points".into()));
        }
    }

    // Extrema of F' that touch zero are double roots, i.e. degenerate critical points of F.
    let scale = 1.0 + gradient.iter().map(|a| a.abs()).fold(0.0, f64::max);
    for r in real_roots(hessian, lo, hi) {
        if horner(gradient, r).abs() <= 1e-12 * scale {
            return Err(Error::DegenerateCriticalPoint {
                x: r,
                curvature: horner(hessian, r),
            });
        }
    }

    let mut minima = Vec::new();
    let mut maxima = Vec::new();
    for r in real_roots(gradient, lo, hi) {
        let curvature = horner(hessian, r);
        if curvature.abs() < DEGENERACY_THRESHOLD {
            return Err(Error::DegenerateCriticalPoint { x: r, curvature });
        }
        if curvature > 0.0 {
            minima.push(r);
        } else {
            maxima.push(r);
        }
    }
    if minima.is_empty() {
        return Err(Error::NoMinima);
    }
    Ok((minima, maxima))
}

/// Locates and classifies all critical points of `F` by bisection on the
/// sign-change intervals of `F'`. The bracket is widened automatically.
pub fn find_critical_points(potential: &Potential, bracket: (f64, f64)) -> Result<(Vec<f64>, Vec<f64>)> {
    critical_points_of(&potential.gradient, &potential.hessian, Some(bracket))
}

/// Open intervals `D_j` bounded by consecutive maxima, one per minimum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainPartition {
    pub boundaries: Vec<f64>,
    pub intervals: Vec<(f64, f64)>,
}

impl DomainPartition {
    /// Index of the domain containing `x`, or `None` on a separatrix point.
    pub fn domain_of(&self, x: f64) -> Option<usize> {
        self.intervals.iter().position(|&(a, b)| x > a && x < b)
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }
}

/// In one dimension `D_j` is the interval between the maxima adjacent to `x_j`.
pub fn domains_of_attraction(potential: &Potential) -> DomainPartition {
    let maxima = potential.maxima().to_vec();
    let mut edges = Vec::with_capacity(maxima.len() + 2);
    edges.push(f64::NEG_INFINITY);
    edges.extend(maxima.iter().copied());
    edges.push(f64::INFINITY);
    let intervals = edges.windows(2).map(|w| (w[0], w[1])).collect();
    DomainPartition {
        boundaries: maxima,
        intervals,
    }
}

/// Fitted certificate `c1 |x|^lo - c2 <= g(x) <= c3 |x|^hi + c4`.
#[derive(Debug, Clone, Serialize)]
pub struct InequalityAudit {
    pub name: String,
    pub lower_exponent: f64,
    pub upper_exponent: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub degree: usize,
    pub a1: f64,
    pub a2: f64,
    /// `a2 < 2 a1 - 2`, equivalent to `deg > 2`.
    pub exponent_condition: bool,
    pub audits: Vec<InequalityAudit>,
    pub radius_range: (f64, f64),
    pub note: String,
    pub passed: bool,
}

impl AssumptionReport {
    /// Fails unless the potential is admissible for the coupling pipeline.
    pub fn require(&self) -> Result<()> {
        if self.passed {
            return Ok(());
        }
        let failed: Vec<_> = self
            .audits
            .iter()
            .filter(|a| !a.passed)
            .map(|a| a.name.as_str())
            .collect();
        Err(Error::AssumptionViolated(format!(
            "degree {} gives a1 = a2 = {}; a2 < 2 a1 - 2 is {}; failed audits: {:?}",
            self.degree, self.a1, self.exponent_condition, failed
        )))
    }
}

const AUDIT_RADII: (f64, f64) = (10.0, 1e4);
const AUDIT_EPSILONS: [f64; 4] = [0.05, 0.1, 0.2, 0.5];

fn audit<G: Fn(f64) -> f64>(name: String, lower: f64, upper: f64, g: G) -> InequalityAudit {
    let n = 241;
    let (r0, r1) = AUDIT_RADII;
    let mut samples = Vec::with_capacity(2 * n);
    for k in 0..n {
        let r = r0 * (r1 / r0).powf(k as f64 / (n - 1) as f64);
        for x in [r, -r] {
            samples.push((r, g(x)));
        }
    }
    let ratios_lo: Vec<f64> = samples.iter().map(|&(r, v)| v / r.powf(lower)).collect();
    let ratios_hi: Vec<f64> = samples.iter().map(|&(r, v)| v / r.powf(upper)).collect();
    let min_lo = ratios_lo.iter().copied().fold(f64::INFINITY, f64::min);
    let max_hi = ratios_hi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let c1 = 0.5 * min_lo;
    let c3 = 2.0 * max_hi;
    let c2 = 1.0 + samples
        .iter()
        .map(|&(r, v)| c1 * r.powf(lower) - v)
        .fold(0.0, f64::max);
    let c4 = 1.0 + samples
        .iter()
        .map(|&(r, v)| v - c3 * r.powf(upper))
        .fold(0.0, f64::max);
    // Over the top decade the normalized ratios must have settled, otherwise
    // the exponent is wrong.
    let top = samples.len() - 2 * ((n - 1) / 3);
    let settled = |ratios: &[f64]| {
        let tail = &ratios[top..];
        let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        lo > 0.0 && hi / lo < 1.1
    };
    let passed = min_lo > 0.0
        && c1.is_finite()
        && c3.is_finite()
        && settled(&ratios_lo)
        && settled(&ratios_hi);
    InequalityAudit {
        name,
        lower_exponent: lower,
        upper_exponent: upper,
        c1,
        c2,
        c3,
        c4,
        passed,
    }
}

/// Audits the growth assumptions: the exponent condition symbolically, the
/// sandwich bounds numerically on `|x|` in `[10, 1e4]`.
pub fn validate_assumptions(potential: &Potential) -> AssumptionReport {
    let (a1, a2) = potential.growth_exponents();
    let exponent_condition = a2 < 2.0 * a1 - 2.0;
    let mut audits = vec![
        audit("|F'|^2".into(), a1, a2, |x| potential.grad(x).powi(2)),
        audit("(|F'| - 2F'')^2".into(), a1, a2, |x| {
            (potential.grad(x).abs() - 2.0 * potential.hessian(x)).powi(2)
        }),
        audit("|F|".into(), a1 / 2.0 + 1.0, a2 / 2.0 + 1.0, |x| {
            potential.eval(x).abs()
        }),
    ];
    for eps in AUDIT_EPSILONS {
        audits.push(audit(format!("V_eps (eps = {eps})"), a1, a2, |x| {
            potential.schrodinger_potential(x, eps)
        }));
    }
    let passed = exponent_condition && audits.iter().all(|a| a.passed);
    AssumptionReport {
        degree: potential.degree(),
        a1,
        a2,
        exponent_condition,
        audits,
        radius_range: AUDIT_RADII,
        note: "sandwich constants checked on |x| in [10, 1e4]".into(),
        passed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn double_well_critical_points() {
        let p = Potential::preset("double_well").unwrap();
        let (mins, maxs) = (p.minima(), p.maxima());
        assert_eq!(mins.len(), 2);
        assert!((mins[0] + 1.0).abs() < 1e-12 && (mins[1] - 1.0).abs() < 1e-12);
        assert_eq!(maxs.len(), 1);
        assert!(maxs[0].abs() < 1e-12);
        assert!((p.eval(0.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn harmonic_has_single_minimum() {
        let p = Potential::preset("ou").unwrap();
        assert_eq!(p.minima().len(), 1);
        assert!(p.minima()[0].abs() < 1e-12);
        assert!(p.maxima().is_empty());
    }

    #[test]
    fn explicit_bracket_is_widened() {
        let p = Potential::preset("triple_well").unwrap();
        let (mins, maxs) = find_critical_points(&p, (-0.1, 0.1)).unwrap();
        assert_eq!(mins.len(), 3);
        assert_eq!(maxs.len(), 2);
        assert!((mins[2] - 3f64.sqrt()).abs() < 1e-12);
        assert!((maxs[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_critical_point_rejected() {
        // F = x^4 has F''(0) = 0.
        let err = Potential::polynomial(vec![0.0, 0.0, 0.0, 0.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::DegenerateCriticalPoint { .. }));
        // F' = (x - 1)^2 (x + 2) touches zero at x = 1.
        // F = x^4/4 - 3x^2/2 + 2x
        let err = Potential::polynomial(vec![0.0, 2.0, -1.5, 0.0, 0.25]).unwrap_err();
        assert!(matches!(err, Error::DegenerateCriticalPoint { .. }), "{err}");
    }

    #[test]
    fn odd_degree_or_negative_lead_rejected() {
        assert!(Potential::polynomial(vec![0.0, 0.0, 0.0, 1.0]).is_err());
        assert!(Potential::polynomial(vec![0.0, 0.0, -1.0]).is_err());
        assert!(Potential::polynomial(vec![1.0]).is_err());
        assert!(Potential::preset("quintuple_well").is_err());
    }

    #[test]
    fn domains() {
        let p = Potential::preset("double_well").unwrap();
        let d = domains_of_attraction(&p);
        assert_eq!(d.intervals.len(), 2);
        assert_eq!(d.intervals[0].0, f64::NEG_INFINITY);
        assert!(d.intervals[0].1.abs() < 1e-12);
        assert_eq!(d.intervals[1].1, f64::INFINITY);
        assert_eq!(d.domain_of(-0.3), Some(0));
        assert_eq!(d.domain_of(7.0), Some(1));

        let t = domains_of_attraction(&Potential::preset("triple_well").unwrap());
        let (a, b) = t.intervals[1];
        assert!((a + 1.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12);

        let s = domains_of_attraction(&Potential::preset("ou").unwrap());
        assert_eq!(s.intervals, vec![(f64::NEG_INFINITY, f64::INFINITY)]);
    }

    #[test]
    fn assumption_exponents() {
        let dw = validate_assumptions(&Potential::preset("double_well").unwrap());
        assert_eq!((dw.a1, dw.a2), (6.0, 6.0));
        assert!(dw.exponent_condition && dw.passed, "{dw:?}");

        let ou = validate_assumptions(&Potential::preset("ou").unwrap());
        assert_eq!((ou.a1, ou.a2), (2.0, 2.0));
        assert!(!ou.exponent_condition);
        assert!(ou.require().is_err());

        let tw = validate_assumptions(&Potential::preset("triple_well").unwrap());
        assert_eq!((tw.a1, tw.a2), (10.0, 10.0));
        assert!(tw.passed);
    }

    #[test]
    fn schrodinger_potential_of_harmonic() {
        let p = Potential::preset("ou").unwrap();
        for &(x, eps) in &[(0.3, 0.1), (-2.0, 0.5), (1.0, 1.0)] {
            let expected = x * x / (4.0 * eps * eps) - 1.0 / (2.0 * eps);
            assert!((p.schrodinger_potential(x, eps) - expected).abs() < 1e-12);
        }
    }
}
