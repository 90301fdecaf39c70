//! Discrete Schrodinger operator on the half line.
//!
//! Forward dynamics with discrete time, the response vector, the connecting
//! matrix built two ways (from the response vector and from a spectral
//! measure), the Krein equation and its reproducing kernel, the direct
//! kernel and Hermite-Biehler function from the spectral solution, and the
//! recovery of the potential from the connecting matrix.
//!
//! Sign convention: iterating the dynamics gives `u^delta_{1,2} = +b_1`, so
//! the Goursat diagonal is `w_{n,n} = b_1 + ... + b_n`.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::Serialize;

use crate::debranges::{EntireEvaluator, KernelEvaluator, KernelProvenance};
use crate::measures::SpectralMeasure;
use crate::{c64, Complex64, Error, Result};

/// Floor of the tolerance on the unit diagonal of the triangular factor in
/// [`recover_potential`]; see [`unit_diagonal_tolerance`].
pub const UNIT_DIAGONAL_TOL: f64 = 1e-8;

/// Tolerance for the unit-diagonal test: `max(1e-8, 16 eps cond_2(C))`.
///
/// The connecting matrix is a Gram matrix of a unit-triangular map, so its
/// condition number grows quickly with `T`; rounding in `C` alone then
/// perturbs the factor by about `eps cond(C)`.
pub fn unit_diagonal_tolerance(c: &ConnectingMatrix) -> f64 {
    let ev = nalgebra::SymmetricEigen::new(c.entries.clone()).eigenvalues;
    let (lo, hi) = ev.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if lo <= 0.0 {
        return UNIT_DIAGONAL_TOL;
    }
    UNIT_DIAGONAL_TOL.max(16.0 * f64::EPSILON * hi / lo)
}

/// `T_k(lambda)` from `T_{t+1} + T_{t-1} = lambda T_t`, `T_0 = 0`, `T_1 = 1`.
pub fn chebyshev_t(k: usize, lambda: Complex64) -> Complex64 {
    let (mut prev, mut cur) = (c64(0.0, 0.0), c64(1.0, 0.0));
    if k == 0 {
        return prev;
    }
    for _ in 1..k {
        let next = lambda * cur - prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `[T_0(lambda), ..., T_kmax(lambda)]`.
pub fn chebyshev_table(kmax: usize, lambda: Complex64) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(kmax + 1);
    out.push(c64(0.0, 0.0));
    if kmax >= 1 {
        out.push(c64(1.0, 0.0));
    }
    for t in 1..kmax {
        let next = lambda * out[t] - out[t - 1];
        out.push(next);
    }
    out
}

/// Real potential `b_1, b_2, ...`, zero beyond the stored range.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct PotentialSeq(Vec<f64>);

impl PotentialSeq {
    pub fn new(b: Vec<f64>) -> Result<Self> {
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("potential sequence"));
        }
        Ok(Self(b))
    }

    pub fn zero(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    /// `b_n` for `n >= 1`.
    pub fn get(&self, n: usize) -> f64 {
        if n == 0 {
            return 0.0;
        }
        self.0.get(n - 1).copied().unwrap_or(0.0)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `phi_0(z), ..., phi_nmax(z)` from `phi_{n+1} = (z - b_n) phi_n - phi_{n-1}`,
/// `phi_0 = 0`, `phi_1 = 1`.
pub fn phi_values(b: &PotentialSeq, nmax: usize, z: Complex64) -> Vec<Complex64> {
    phi_with_derivative(b, nmax, z).0
}

/// Values and `z`-derivatives of `phi_0..phi_nmax`.
pub fn phi_with_derivative(
    b: &PotentialSeq,
    nmax: usize,
    z: Complex64,
) -> (Vec<Complex64>, Vec<Complex64>) {
    let mut phi = vec![c64(0.0, 0.0); nmax + 1];
    let mut dphi = vec![c64(0.0, 0.0); nmax + 1];
    if nmax >= 1 {
        phi[1] = c64(1.0, 0.0);
    }
    for n in 1..nmax {
        let a = z - b.get(n);
        phi[n + 1] = a * phi[n] - phi[n - 1];
        dphi[n + 1] = phi[n] + a * dphi[n] - dphi[n - 1];
    }
    (phi, dphi)
}

/// Solution table `u[t][n] = u_{n,t}` for `0 <= t <= t_max`, `0 <= n <= t_max + 1`.
#[derive(Debug, Clone)]
pub struct WaveField {
    u: Vec<Vec<Complex64>>,
}

impl WaveField {
    pub fn get(&self, n: usize, t: usize) -> Complex64 {
        self.u
            .get(t)
            .and_then(|row| row.get(n))
            .copied()
            .unwrap_or(c64(0.0, 0.0))
    }

    pub fn t_max(&self) -> usize {
        self.u.len() - 1
    }

    /// The state `(u_{1,t}, ..., u_{t,t})`.
    pub fn state(&self, t: usize) -> Vec<Complex64> {
        (1..=t).map(|n| self.get(n, t)).collect()
    }
}

/// March `u_{n,t+1} = u_{n+1,t} + u_{n-1,t} + b_n u_{n,t} - u_{n,t-1}` with
/// `u_{n,-1} = u_{n,0} = 0` for `n >= 1` and `u_{0,t} = f_t` (zero past the
/// end of `f`).
pub fn forward(b: &PotentialSeq, f: &[Complex64], t_max: usize) -> WaveField {
    let width = t_max + 2;
    let control = |t: usize| f.get(t).copied().unwrap_or(c64(0.0, 0.0));
    let mut u = Vec::with_capacity(t_max + 1);
    let mut first = vec![c64(0.0, 0.0); width];
    first[0] = control(0);
    u.push(first);
    let mut prev = vec![c64(0.0, 0.0); width];
    for t in 0..t_max {
        let cur = &u[t];
        let mut next = vec![c64(0.0, 0.0); width];
        next[0] = control(t + 1);
        // u_{n,t} vanishes for n > t
        for n in 1..=(t + 1).min(width - 1) {
            let right = if n + 1 < width { cur[n + 1] } else { c64(0.0, 0.0) };
            next[n] = right + cur[n - 1] + cur[n] * b.get(n) - prev[n];
        }
        prev = cur.clone();
        u.push(next);
    }
    WaveField { u }
}

/// Response vector `r_0, ..., r_{2T-2}` with `r_0 = 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ResponseVector(Vec<f64>);

impl ResponseVector {
    /// Wrap externally supplied response data; enforces `r_0 = 1`.
    pub fn new(r: Vec<f64>) -> Result<Self> {
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("response vector"));
        }
        match r.first() {
            Some(&r0) if r0 == 1.0 => Ok(Self(r)),
            Some(&r0) => Err(Error::InconsistentData(format!(
                "invariant r_0 = 1 violated (r_0 = {r0})"
            ))),
            None => Err(Error::InvalidInput("empty response vector".into())),
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `(R f)_t = sum_{s=0}^{t-1} r_s f_{t-1-s}` for `t = 1..=T`.
    pub fn apply(&self, f: &[Complex64], t: usize) -> Vec<Complex64> {
        (1..=t)
            .map(|tt| {
                (0..tt)
                    .filter(|&s| s < self.0.len() && tt - 1 - s < f.len())
                    .map(|s| f[tt - 1 - s] * self.0[s])
                    .sum()
            })
            .collect()
    }
}

/// `r_k = u^delta_{1,k+1}`, `k = 0..=2T-2`.
pub fn response(b: &PotentialSeq, t: usize) -> Result<ResponseVector> {
    if t == 0 {
        return Err(Error::InvalidInput("T must be at least 1".into()));
    }
    let field = forward(b, &[c64(1.0, 0.0)], 2 * t - 1);
    let r = (0..=2 * t - 2).map(|k| field.get(1, k + 1).re).collect();
    ResponseVector::new(r)
}

/// Connecting matrix `C^T`; row `i` pairs with the control sample `f_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectingMatrix {
    entries: DMatrix<f64>,
}

impl ConnectingMatrix {
    pub fn from_matrix(entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() || entries.nrows() == 0 {
            return Err(Error::InvalidInput("connecting matrix must be square and non-empty".into()));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("connecting matrix"));
        }
        let n = entries.nrows();
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (entries[(i, j)], entries[(j, i)]);
                if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                    return Err(Error::InconsistentData(format!(
                        "connecting matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { entries })
    }

    /// `C_{ij} = sum_{k=0}^{T - max(i,j)} r_{|i-j| + 2k}` with 1-based `i, j`.
    pub fn from_response(r: &ResponseVector, t: usize) -> Result<Self> {
        if t == 0 {
            return Err(Error::InvalidInput("T must be at least 1".into()));
        }
        if r.len() < 2 * t - 1 {
            return Err(Error::LengthMismatch {
                expected: 2 * t - 1,
                actual: r.len(),
            });
        }
        let rv = r.as_slice();
        let entries = DMatrix::from_fn(t, t, |i0, j0| {
            let (i, j) = (i0 + 1, j0 + 1);
            let d = i.abs_diff(j);
            (0..=t - i.max(j)).map(|k| rv[d + 2 * k]).sum()
        });
        Ok(Self { entries })
    }

    /// `C_{l+1,m+1} = int T_{T-l} T_{T-m} d rho`; requires truncation `N > T`.
    pub fn from_measure(m: &SpectralMeasure, t: usize) -> Result<Self> {
        if t == 0 {
            return Err(Error::InvalidInput("T must be at least 1".into()));
        }
        if !(m.truncation() > t as f64) {
            return Err(Error::TruncationTooShort {
                n: m.truncation(),
                t: t as f64,
            });
        }
        let mut entries = DMatrix::<f64>::zeros(t, t);
        for &(x, w) in m.atoms() {
            let tab = chebyshev_table(t, c64(x, 0.0));
            for l in 0..t {
                for mm in 0..t {
                    entries[(l, mm)] += w * tab[t - l].re * tab[t - mm].re;
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// `(C f, g) = sum_i conj((C f)_i) g_i`.
    pub fn form(&self, f: &[Complex64], g: &[Complex64]) -> Complex64 {
        let n = self.dim();
        let mut acc = c64(0.0, 0.0);
        for i in 0..n {
            let cf: Complex64 = (0..n).map(|j| f[j] * self.entries[(i, j)]).sum();
            acc += cf.conj() * g[i];
        }
        acc
    }
}

/// `W^T` as a `T x T` matrix: column `j` is the state `u^{e_j}_{n,T}`,
/// `n = 1..T`, produced by a forward solve with the unit control `e_j`.
pub fn control_matrix(b: &PotentialSeq, t: usize) -> DMatrix<f64> {
    let mut w = DMatrix::<f64>::zeros(t, t);
    for j in 0..t {
        let mut f = vec![c64(0.0, 0.0); t];
        f[j] = c64(1.0, 0.0);
        let field = forward(b, &f, t);
        for n in 1..=t {
            w[(n - 1, j)] = field.get(n, t).re;
        }
    }
    w
}

/// Solution `j^z` of the Krein equation.
#[derive(Debug, Clone, PartialEq)]
pub struct KreinSolutionD {
    pub j: Vec<Complex64>,
    pub z: Complex64,
}

/// Cholesky factorization of a connecting matrix, shared by Krein solves at
/// many points.
#[derive(Clone)]
pub struct KreinFactor {
    chol: Arc<Cholesky<f64, Dyn>>,
    t: usize,
}

impl KreinFactor {
    pub fn new(c: &ConnectingMatrix) -> Result<Self> {
        let chol = Cholesky::new(c.entries.clone())
            .ok_or(Error::NotPositiveDefinite("Cholesky of C^T failed"))?;
        Ok(Self {
            chol: Arc::new(chol),
            t: c.dim(),
        })
    }

    pub fn dim(&self) -> usize {
        self.t
    }

    /// Solve `C j = conj((T_T(z), ..., T_1(z)))`.
    pub fn solve(&self, z: Complex64) -> KreinSolutionD {
        let t = self.t;
        let tab = chebyshev_table(t, z);
        let rhs: Vec<Complex64> = (0..t).map(|l| tab[t - l].conj()).collect();
        KreinSolutionD {
            j: solve_complex(&self.chol, &rhs),
            z,
        }
    }

    /// `J_z(lambda)` through the Krein solution.
    pub fn kernel(&self, z: Complex64, lambda: Complex64) -> Complex64 {
        kernel_krein(&self.solve(z), lambda)
    }

    pub fn evaluator(&self) -> KernelEvaluator {
        let me = self.clone();
        KernelEvaluator::new(KernelProvenance::FromKrein, move |z, xi| me.kernel(z, xi))
    }
}

fn solve_complex(chol: &Cholesky<f64, Dyn>, rhs: &[Complex64]) -> Vec<Complex64> {
    let re = chol.solve(&DVector::from_iterator(rhs.len(), rhs.iter().map(|v| v.re)));
    let im = chol.solve(&DVector::from_iterator(rhs.len(), rhs.iter().map(|v| v.im)));
    re.iter().zip(im.iter()).map(|(&a, &b)| c64(a, b)).collect()
}

/// One-shot Krein solve; factor once with [`KreinFactor`] for many `z`.
pub fn krein_solve(c: &ConnectingMatrix, z: Complex64) -> Result<KreinSolutionD> {
    Ok(KreinFactor::new(c)?.solve(z))
}

/// `J_z(lambda) = sum_{k=1}^T T_k(lambda) j^z_{T-k}`.
pub fn kernel_krein(sol: &KreinSolutionD, lambda: Complex64) -> Complex64 {
    let t = sol.j.len();
    let tab = chebyshev_table(t, lambda);
    (1..=t).map(|k| tab[k] * sol.j[t - k]).sum()
}

/// `J_z(xi) = sum_{i=1}^N conj(phi_i(z)) phi_i(xi)`.
pub fn kernel_direct(b: &PotentialSeq, n: usize, z: Complex64, xi: Complex64) -> Complex64 {
    let pz = phi_values(b, n, z);
    let px = phi_values(b, n, xi);
    (1..=n).map(|i| pz[i].conj() * px[i]).sum()
}

pub fn kernel_direct_evaluator(b: &PotentialSeq, n: usize) -> KernelEvaluator {
    let b = b.clone();
    KernelEvaluator::new(KernelProvenance::FromDirectSum, move |z, xi| {
        kernel_direct(&b, n, z, xi)
    })
}

/// `E(z) = phi_N(z) - i phi_{N+1}(z)`.
pub fn e_direct(b: &PotentialSeq, n: usize) -> Result<EntireEvaluator> {
    if n == 0 {
        return Err(Error::InvalidInput("N must be at least 1".into()));
    }
    let b = b.clone();
    Ok(EntireEvaluator::new(format!("discrete E, N={n}"), move |z| {
        let (phi, dphi) = phi_with_derivative(&b, n + 1, z);
        let i = c64(0.0, 1.0);
        (phi[n] - i * phi[n + 1], dphi[n] - i * dphi[n + 1])
    }))
}

/// Recover `b_1..b_{T-1}` from `C^T`.
///
/// Reversing the control order makes `W` unit upper-triangular with the
/// Goursat kernel above the diagonal, so the Cholesky factor of the
/// reversed matrix is `W` itself and its first superdiagonal holds
/// `w_{n,n} = b_1 + ... + b_n`.
pub fn recover_potential(c: &ConnectingMatrix, t: usize) -> Result<PotentialSeq> {
    if c.dim() != t {
        return Err(Error::LengthMismatch {
            expected: t,
            actual: c.dim(),
        });
    }
    let reversed = DMatrix::from_fn(t, t, |i, j| c.entries[(t - 1 - i, t - 1 - j)]);
    let chol = Cholesky::new(reversed)
        .ok_or(Error::NotPositiveDefinite("Cholesky of reversed C^T failed"))?;
    let upper = chol.l().transpose();
    let tol = unit_diagonal_tolerance(c);
    for n in 0..t {
        let d = upper[(n, n)];
        if (d - 1.0).abs() > tol {
            return Err(Error::InconsistentData(format!(
                "triangular factor diagonal {d} at {n} deviates from 1"
            )));
        }
    }
    let mut b = Vec::with_capacity(t.saturating_sub(1));
    let mut prev = 0.0;
    for n in 0..t.saturating_sub(1) {
        let w_nn = upper[(n, n + 1)];
        b.push(w_nn - prev);
        prev = w_nn;
    }
    PotentialSeq::new(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::jacobi_truncated_measure;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seq(b: &[f64]) -> PotentialSeq {
        PotentialSeq::new(b.to_vec()).unwrap()
    }

    fn delta() -> Vec<Complex64> {
        vec![c64(1.0, 0.0)]
    }

    #[test]
    fn chebyshev_values() {
        let l = c64(0.7, -0.2);
        assert_eq!(chebyshev_t(0, l), c64(0.0, 0.0));
        assert_eq!(chebyshev_t(1, l), c64(1.0, 0.0));
        assert_eq!(chebyshev_t(2, l), l);
        assert!((chebyshev_t(3, l) - (l * l - 1.0)).norm() < 1e-15);
        assert_eq!(chebyshev_t(4, c64(2.0, 0.0)), c64(4.0, 0.0));
        let tab = chebyshev_table(6, l);
        for (k, v) in tab.iter().enumerate() {
            assert_eq!(*v, chebyshev_t(k, l));
        }
    }

    #[test]
    fn chebyshev_is_second_kind_at_double_argument() {
        // T_k(2 cos a) = sin(k a) / sin(a)
        let a: f64 = 0.37;
        for k in 0..8 {
            let v = chebyshev_t(k, c64(2.0 * a.cos(), 0.0)).re;
            assert!((v - (k as f64 * a).sin() / a.sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn free_delta_travels_on_the_diagonal() {
        let f = forward(&PotentialSeq::zero(0), &delta(), 8);
        for t in 0..=8 {
            for n in 0..=9 {
                let expected = if n == t { 1.0 } else { 0.0 };
                assert_eq!(f.get(n, t), c64(expected, 0.0), "n={n} t={t}");
            }
        }
    }

    #[test]
    fn hand_recurrence_entries() {
        let b1 = 0.37;
        let f = forward(&seq(&[b1, -0.8, 0.2]), &delta(), 4);
        assert_eq!(f.get(1, 2).re, b1);
        assert!((f.get(1, 3).re - b1 * b1).abs() < 1e-15);
    }

    #[test]
    fn finite_speed() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f: Vec<Complex64> = (0..12).map(|_| c64(rng.random(), rng.random())).collect();
        let field = forward(&seq(&b), &f, 12);
        for t in 0..=12 {
            for n in t + 1..=13 {
                assert_eq!(field.get(n, t), c64(0.0, 0.0));
            }
        }
    }

    #[test]
    fn response_examples() {
        let r = response(&PotentialSeq::zero(10), 6).unwrap();
        assert_eq!(r.as_slice()[0], 1.0);
        assert!(r.as_slice()[1..].iter().all(|&v| v == 0.0));
        let (b1, b2) = (0.41, -0.3);
        let r = response(&seq(&[b1, b2, 0.7]), 3).unwrap();
        assert_eq!(r.len(), 5);
        assert_eq!(r.as_slice()[1], b1);
        assert!((r.as_slice()[2] - b1 * b1).abs() < 1e-15);
        assert!(response(&seq(&[]), 0).is_err());
    }

    #[test]
    fn response_vector_invariant() {
        assert!(ResponseVector::new(vec![1.0, 0.2]).is_ok());
        let err = ResponseVector::new(vec![0.9, 0.2]).unwrap_err();
        assert!(err.to_string().contains("r_0 = 1"));
        assert!(ResponseVector::new(vec![]).is_err());
    }

    #[test]
    fn response_operator_is_a_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let t = 7;
        let b: Vec<f64> = (0..t).map(|_| rng.random_range(-1.0..1.0)).collect();
        let pot = seq(&b);
        let r = response(&pot, t).unwrap();
        for _ in 0..5 {
            let f: Vec<Complex64> = (0..t).map(|_| c64(rng.random(), 0.0)).collect();
            let field = forward(&pot, &f, t);
            let conv = r.apply(&f, t);
            for tt in 1..=t {
                assert!((field.get(1, tt) - conv[tt - 1]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn connecting_examples() {
        let (r1, r2) = (0.3, -0.45);
        let r = ResponseVector::new(vec![1.0, r1, r2]).unwrap();
        let c = ConnectingMatrix::from_response(&r, 2).unwrap();
        assert_eq!(c.matrix(), &DMatrix::from_row_slice(2, 2, &[1.0 + r2, r1, r1, 1.0]));

        let r = response(&PotentialSeq::zero(5), 5).unwrap();
        let c = ConnectingMatrix::from_response(&r, 5).unwrap();
        assert_eq!(c.matrix(), &DMatrix::identity(5, 5));

        let b1 = 0.6;
        let r = response(&seq(&[b1]), 2).unwrap();
        let c = ConnectingMatrix::from_response(&r, 2).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0 + b1 * b1, b1, b1, 1.0]);
        assert!((c.matrix() - &expected).abs().max() < 1e-15);
        let w = control_matrix(&seq(&[b1]), 2);
        assert!((w.transpose() * &w - expected).abs().max() < 1e-15);

        let short = ResponseVector::new(vec![1.0, 0.0]).unwrap();
        assert!(ConnectingMatrix::from_response(&short, 2).is_err());
    }

    #[test]
    fn connecting_bottom_right_block() {
        let r = ResponseVector::new(vec![1.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let c = ConnectingMatrix::from_response(&r, 4).unwrap();
        let m = c.matrix();
        assert_eq!(m[(2, 2)], 1.2);
        assert_eq!(m[(2, 3)], 0.1);
        assert_eq!(m[(3, 2)], 0.1);
        assert_eq!(m[(3, 3)], 1.0);
        assert_eq!(m[(0, 0)], 1.0 + 0.2 + 0.4 + 0.6);
    }

    #[test]
    fn connecting_from_measure_examples() {
        let m = jacobi_truncated_measure(&PotentialSeq::zero(2), 2).unwrap();
        let c = ConnectingMatrix::from_measure(&m, 1).unwrap();
        assert!((c.matrix()[(0, 0)] - 1.0).abs() < 1e-15);

        let m = jacobi_truncated_measure(&PotentialSeq::zero(3), 3).unwrap();
        let c = ConnectingMatrix::from_measure(&m, 2).unwrap();
        assert!((c.matrix() - DMatrix::identity(2, 2)).abs().max() < 1e-14);

        let m = jacobi_truncated_measure(&PotentialSeq::zero(2), 2).unwrap();
        assert!(matches!(
            ConnectingMatrix::from_measure(&m, 2),
            Err(Error::TruncationTooShort { .. })
        ));
    }

    #[test]
    fn dual_route_on_random_potential() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let b: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let pot = seq(&b);
        let t = 5;
        let cr = ConnectingMatrix::from_response(&response(&pot, t).unwrap(), t).unwrap();
        let cm = ConnectingMatrix::from_measure(&jacobi_truncated_measure(&pot, 12).unwrap(), t).unwrap();
        assert!((cr.matrix() - cm.matrix()).abs().max() <= 1e-10);
    }

    #[test]
    fn measure_substitution_is_truncation_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let b: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
        let pot = seq(&b);
        let t = 6;
        let c7 = ConnectingMatrix::from_measure(&jacobi_truncated_measure(&pot, 7).unwrap(), t).unwrap();
        let c20 = ConnectingMatrix::from_measure(&jacobi_truncated_measure(&pot, 20).unwrap(), t).unwrap();
        assert!((c7.matrix() - c20.matrix()).abs().max() <= 1e-10);
    }

    #[test]
    fn krein_examples() {
        let c = ConnectingMatrix::from_matrix(DMatrix::identity(2, 2)).unwrap();
        let z = c64(0.3, 1.7);
        let sol = krein_solve(&c, z).unwrap();
        assert_eq!(sol.j, vec![z.conj(), c64(1.0, 0.0)]);
        let j_z = kernel_krein(&sol, c64(-0.4, 0.2));
        assert!((j_z - (c64(1.0, 0.0) + z.conj() * c64(-0.4, 0.2))).norm() < 1e-15);

        let one = ConnectingMatrix::from_matrix(DMatrix::identity(1, 1)).unwrap();
        assert_eq!(krein_solve(&one, c64(5.0, -2.0)).unwrap().j, vec![c64(1.0, 0.0)]);

        let pot = seq(&[0.4, -0.9, 0.1, 0.5]);
        let c = ConnectingMatrix::from_response(&response(&pot, 4).unwrap(), 4).unwrap();
        let sol = krein_solve(&c, c64(0.8, 0.0)).unwrap();
        assert!(sol.j.iter().all(|v| v.im == 0.0));
    }

    #[test]
    fn free_kernel_is_chebyshev_sum() {
        let t = 5;
        let f = KreinFactor::new(&ConnectingMatrix::from_matrix(DMatrix::identity(t, t)).unwrap()).unwrap();
        let (z, l) = (c64(0.2, 0.9), c64(-1.1, 0.3));
        let expected: Complex64 = (1..=t).map(|k| chebyshev_t(k, z.conj()) * chebyshev_t(k, l)).sum();
        assert!((f.kernel(z, l) - expected).norm() < 1e-13);
    }

    #[test]
    fn direct_kernel_examples() {
        let pot = PotentialSeq::zero(0);
        assert_eq!(kernel_direct(&pot, 1, c64(0.0, 2.0), c64(0.0, 2.0)), c64(1.0, 0.0));
        let (z, xi) = (c64(0.3, 0.4), c64(1.2, -0.7));
        let expected: Complex64 = (1..=4).map(|k| chebyshev_t(k, z).conj() * chebyshev_t(k, xi)).sum();
        assert!((kernel_direct(&pot, 4, z, xi) - expected).norm() < 1e-13);
        let d = kernel_direct(&seq(&[0.3, -0.2]), 3, c64(0.5, 1.0), c64(0.5, 1.0));
        assert!(d.re > 0.0 && d.im.abs() < 1e-15);
    }

    #[test]
    fn direct_e_examples() {
        let e = e_direct(&PotentialSeq::zero(0), 1).unwrap();
        let z = c64(0.7, -1.2);
        assert!((e.value(z) - (c64(1.0, 0.0) - c64(0.0, 1.0) * z)).norm() < 1e-15);
        let b1 = 0.35;
        let e = e_direct(&seq(&[b1]), 1).unwrap();
        assert!((e.value(z) - (c64(1.0, 0.0) - c64(0.0, 1.0) * (z - b1))).norm() < 1e-15);
        let (_, d) = e.eval(z);
        assert!((d - c64(0.0, -1.0)).norm() < 1e-15);
        assert!(e_direct(&seq(&[]), 0).is_err());
    }

    #[test]
    fn recovery_examples() {
        let c = ConnectingMatrix::from_matrix(DMatrix::identity(4, 4)).unwrap();
        assert_eq!(recover_potential(&c, 4).unwrap().as_slice(), &[0.0, 0.0, 0.0]);

        let r = ResponseVector::new(vec![1.0, 0.5, 0.25]).unwrap();
        let c = ConnectingMatrix::from_response(&r, 2).unwrap();
        assert_eq!(c.matrix(), &DMatrix::from_row_slice(2, 2, &[1.25, 0.5, 0.5, 1.0]));
        let b = recover_potential(&c, 2).unwrap();
        assert!((b.as_slice()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn recovery_rejects_inconsistent_data() {
        let c = ConnectingMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0])).unwrap();
        assert!(matches!(recover_potential(&c, 2), Err(Error::InconsistentData(_))));
        let c = ConnectingMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).unwrap();
        assert!(matches!(recover_potential(&c, 2), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn recovery_at_sixteen_is_conditioning_limited() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..20 {
            let t = 16;
            let b: Vec<f64> = (0..t - 1).map(|_| rng.random_range(-1.0..1.0)).collect();
            let c = ConnectingMatrix::from_response(&response(&seq(&b), t).unwrap(), t).unwrap();
            let tol = unit_diagonal_tolerance(&c);
            let rec = recover_potential(&c, t).unwrap();
            for (x, y) in rec.as_slice().iter().zip(&b) {
                assert!((x - y).abs() <= 100.0 * tol, "{x} vs {y}, tol {tol}");
            }
        }
    }

    proptest! {
        #[test]
        fn recovery_roundtrip(b in prop::collection::vec(-1.0f64..1.0, 1..10)) {
            let t = b.len() + 1;
            let pot = seq(&b);
            let c = ConnectingMatrix::from_response(&response(&pot, t).unwrap(), t).unwrap();
            let rec = recover_potential(&c, t).unwrap();
            for (x, y) in rec.as_slice().iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-8);
            }
        }

        #[test]
        fn gram_identity(b in prop::collection::vec(-1.0f64..1.0, 1..16)) {
            let t = b.len();
            let pot = seq(&b);
            let c = ConnectingMatrix::from_response(&response(&pot, t).unwrap(), t).unwrap();
            let w = control_matrix(&pot, t);
            let gram = w.transpose() * &w;
            let scale = c.matrix().abs().max().max(1.0);
            prop_assert!((c.matrix() - gram).abs().max() <= 1e-12 * scale);
        }

        #[test]
        fn special_control_reaches_conjugate_solution(
            b in prop::collection::vec(-1.0f64..1.0, 2..10),
            re in -2.0f64..2.0,
            im in -2.0f64..2.0,
        ) {
            let t = b.len();
            let pot = seq(&b);
            let z = c64(re, im);
            let c = ConnectingMatrix::from_response(&response(&pot, t).unwrap(), t).unwrap();
            let sol = krein_solve(&c, z).unwrap();
            let state = forward(&pot, &sol.j, t).state(t);
            let phi = phi_values(&pot, t, z.conj());
            for n in 1..=t {
                prop_assert!((state[n - 1] - phi[n]).norm() <= 1e-9 * (1.0 + phi[n].norm()));
            }
        }

        #[test]
        fn diagonal_positivity(
            b in prop::collection::vec(-1.0f64..1.0, 1..10),
            re in -3.0f64..3.0,
            im in 0.05f64..3.0,
        ) {
            let t = b.len();
            let pot = seq(&b);
            let c = ConnectingMatrix::from_response(&response(&pot, t).unwrap(), t).unwrap();
            let f = KreinFactor::new(&c).unwrap();
            for z in [c64(re, im), c64(re, -im)] {
                let k = f.kernel(z, z);
                prop_assert!(k.re > 0.0);
                prop_assert!(k.im.abs() <= 1e-9 * k.re);
            }
        }
    }
}
