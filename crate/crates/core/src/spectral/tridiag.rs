//! Sturm-sequence bisection and inverse iteration for symmetric tridiagonal
//! matrices.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Symmetric tridiagonal matrix stored by its diagonal and off-diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || off.len() + 1 != diag.len() {
            return Err(Error::InvalidInput(format!(
                "tridiagonal shape mismatch: {} diagonal, {} off-diagonal entries",
                diag.len(),
                off.len()
            )));
        }
        Ok(Self { diag, off })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Gershgorin interval containing the whole spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let left = if i > 0 { self.off[i - 1].abs() } else { 0.0 };
            let right = if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - left - right);
            hi = hi.max(self.diag[i] + left + right);
        }
        (lo, hi)
    }

    /// Infinity norm, an upper bound on the spectral radius.
    pub fn norm(&self) -> f64 {
        let (lo, hi) = self.gershgorin();
        lo.abs().max(hi.abs())
    }

    pub fn mul(&self, v: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * v[i];
                if i > 0 {
                    s += self.off[i - 1] * v[i - 1];
                }
                if i + 1 < n {
                    s += self.off[i] * v[i + 1];
                }
                s
            })
            .collect()
    }

    /// `||T v - lambda v||_inf`.
    pub fn residual(&self, value: f64, v: &[f64]) -> f64 {
        self.mul(v)
            .iter()
            .zip(v)
            .map(|(tv, x)| (tv - value * x).abs())
            .fold(0.0, f64::max)
    }
}

/// Number of eigenvalues strictly below `x`, from the signs of the LDL^T pivots.
pub fn sturm_count(t: &SymTridiagonal, x: f64) -> usize {
    let pivmin = f64::MIN_POSITIVE
        * t.off
            .iter()
            .map(|e| e * e)
            .fold(1.0, f64::max);
    let mut count = 0;
    let mut q = t.diag[0] - x;
    if q.abs() < pivmin {
        q = -pivmin;
    }
    if q < 0.0 {
        count += 1;
    }
    for i in 1..t.len() {
        q = (t.diag[i] - x) - t.off[i - 1] * t.off[i - 1] / q;
        if q.abs() < pivmin {
            q = -pivmin;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// The `k`-th smallest eigenvalue (0-based) by bisection on the count function,
/// run until the bracket can no longer shrink.
pub fn bisect_eigenvalue(t: &SymTridiagonal, k: usize) -> f64 {
    let (mut lo, mut hi) = t.gershgorin();
    let pad = f64::EPSILON * (lo.abs().max(hi.abs()) + 1.0);
    lo -= pad;
    hi += pad;
    // Stricter than 1e-12 * ||T||: stop only when the bracket is one ulp wide.
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(t, mid) <= k {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// LU factorization with partial pivoting of a (shifted) tridiagonal matrix.
struct TridiagLu {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagLu {
    fn factor(t: &SymTridiagonal, shift: f64) -> Self {
        let n = t.len();
        let mut dl = t.off.clone();
        let mut d: Vec<f64> = t.diag.iter().map(|x| x - shift).collect();
        let mut du = t.off.clone();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] != 0.0 {
                    let fact = dl[i] / d[i];
                    dl[i] = fact;
                    d[i + 1] -= fact * du[i];
                }
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] *= -fact;
                }
                swapped[i] = true;
            }
        }
        // An exactly singular shift is replaced by a tiny pivot, as in LAPACK's inverse iteration.
        let tiny = f64::EPSILON * t.norm().max(f64::MIN_POSITIVE);
        for p in d.iter_mut() {
            if p.abs() < tiny {
                *p = if *p < 0.0 { -tiny } else { tiny };
            }
        }
        Self {
            dl,
            d,
            du,
            du2,
            swapped,
        }
    }

    fn solve(&self, b: &mut [f64]) {
        let n = self.d.len();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                b.swap(i, i + 1);
            }
            b[i + 1] -= self.dl[i] * b[i];
        }
        b[n - 1] /= self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
    }
}

/// An eigenvalue with its unit-norm eigenvector.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let norm = dot(v, v).sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
}

fn orthogonalize(v: &mut [f64], basis: &[EigenPair]) {
    // Two passes of classical Gram-Schmidt.
    for _ in 0..2 {
        for b in basis {
            let c = dot(v, &b.vector);
            v.iter_mut().zip(&b.vector).for_each(|(x, y)| *x -= c * y);
        }
    }
}

const MAX_INVERSE_ITERATIONS: usize = 50;

fn inverse_iteration(t: &SymTridiagonal, value: f64, index: usize, found: &[EigenPair]) -> Result<EigenPair> {
    let n = t.len();
    let norm = t.norm().max(f64::MIN_POSITIVE);
    let jitter = 1e-10 * value.abs().max(f64::EPSILON * norm);
    let lu = TridiagLu::factor(t, value + jitter);

    // Deterministic start vector with no special structure.
    let mut state = 0x9E37_79B9_7F4A_7C15u64 ^ (index as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    let mut v: Vec<f64> = (0..n)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect();
    orthogonalize(&mut v, found);
    normalize(&mut v);

    let mut residual = f64::INFINITY;
    for iteration in 1..=MAX_INVERSE_ITERATIONS {
        lu.solve(&mut v);
        orthogonalize(&mut v, found);
        normalize(&mut v);
        residual = t.residual(value, &v);
        if iteration >= 2 && residual <= 1e-10 * norm {
            break;
        }
    }
    if residual > 1e-9 * norm || !residual.is_finite() {
        return Err(Error::InverseIterationFailed {
            eigenvalue: value,
            residual,
        });
    }
    Ok(EigenPair {
        value,
        vector: v,
        residual,
    })
}

/// The `k_max` smallest eigenpairs, eigenvalues by bisection and vectors by
/// inverse iteration with reorthogonalization against earlier vectors.
pub fn eigensolve_tridiagonal(t: &SymTridiagonal, k_max: usize) -> Result<Vec<EigenPair>> {
    if k_max > t.len() {
        return Err(Error::InvalidInput(format!(
            "requested {k_max} eigenpairs of a {}x{} matrix",
            t.len(),
            t.len()
        )));
    }
    let values: Vec<f64> = (0..k_max)
        .into_par_iter()
        .map(|k| bisect_eigenvalue(t, k))
        .collect();
    let mut pairs: Vec<EigenPair> = Vec::with_capacity(k_max);
    for (k, &value) in values.iter().enumerate() {
        let pair = inverse_iteration(t, value, k, &pairs)?;
        pairs.push(pair);
    }
    Ok(pairs)
}

/// Eigenvalues only.
pub fn eigenvalues_tridiagonal(t: &SymTridiagonal, k_max: usize) -> Vec<f64> {
    (0..k_max.min(t.len()))
        .into_par_iter()
        .map(|k| bisect_eigenvalue(t, k))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_closed_form() {
        let t = SymTridiagonal::new(vec![2.0, 2.0], vec![-1.0]).unwrap();
        let pairs = eigensolve_tridiagonal(&t, 2).unwrap();
        assert!((pairs[0].value - 1.0).abs() < 1e-14);
        assert!((pairs[1].value - 3.0).abs() < 1e-14);
        let v = &pairs[0].vector;
        assert!((v[0].abs() - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((v[0] - v[1]).abs() < 1e-12);
    }

    #[test]
    fn three_by_three_closed_form() {
        let t = SymTridiagonal::new(vec![2.0; 3], vec![-1.0; 2]).unwrap();
        let pairs = eigensolve_tridiagonal(&t, 3).unwrap();
        let s = 2f64.sqrt();
        for (p, e) in pairs.iter().zip([2.0 - s, 2.0, 2.0 + s]) {
            assert!((p.value - e).abs() < 1e-14, "{} vs {e}", p.value);
            assert!(p.residual < 1e-12);
        }
    }

    #[test]
    fn sturm_count_brackets() {
        let t = SymTridiagonal::new(vec![1.0, 3.0], vec![-1.0]).unwrap();
        assert_eq!(sturm_count(&t, 0.0), 0);
        assert_eq!(sturm_count(&t, 1.0), 1);
        assert_eq!(sturm_count(&t, 4.0), 2);
    }

    #[test]
    fn exactly_degenerate_eigenvalues_give_orthogonal_vectors() {
        // Block diagonal: two identical 2x2 blocks.
        let t = SymTridiagonal::new(vec![2.0; 4], vec![-1.0, 0.0, -1.0]).unwrap();
        let pairs = eigensolve_tridiagonal(&t, 4).unwrap();
        assert!((pairs[0].value - 1.0).abs() < 1e-14 && (pairs[1].value - 1.0).abs() < 1e-14);
        assert!(dot(&pairs[0].vector, &pairs[1].vector).abs() < 1e-12);
        for p in &pairs {
            assert!(p.residual < 1e-12);
        }
    }

    #[test]
    fn clean_chain_spectrum() {
        let n = 60;
        let t = SymTridiagonal::new(vec![0.0; n], vec![-1.0; n - 1]).unwrap();
        let values = eigenvalues_tridiagonal(&t, n);
        for (k, v) in values.iter().enumerate() {
            let j = (n - k) as f64;
            let exact = 2.0 * (j * std::f64::consts::PI / (n as f64 + 1.0)).cos();
            assert!((v - exact).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn too_many_requested() {
        let t = SymTridiagonal::new(vec![1.0], vec![]).unwrap();
        assert!(eigensolve_tridiagonal(&t, 2).is_err());
        assert!(SymTridiagonal::new(vec![1.0, 2.0], vec![]).is_err());
    }
}
