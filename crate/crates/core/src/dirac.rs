//! Half-line Dirac system `i u_t + J u_x + V u = 0`, `u_1(0, t) = f(t)`,
//! with `J = [[0, 1], [-1, 0]]` and `V = [[p, q], [q, -p]]`.
//!
//! The solver works in the Riemann invariants `alpha = (u_1 - i u_2) / 2`
//! (moving right) and `beta = (u_1 + i u_2) / 2` (moving left):
//!
//! ```text
//! alpha_t + alpha_x = (q + i p) beta
//! beta_t  - beta_x  = (i p - q) alpha
//! ```
//!
//! On the unit-CFL grid each new value sits at the end of one
//! characteristic of each family, and the coupling is integrated by the
//! trapezoid rule, which leaves a 2x2 linear solve per node.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::Serialize;

use crate::debranges::{EntireEvaluator, KernelEvaluator, KernelProvenance};
use crate::grid::{hat_samples, simpson, trapezoid, Potential, UniformGrid};
use crate::{c64, Complex64, Error, Result};

/// A two-component state value `(u_1, u_2)`.
pub type Pair = [Complex64; 2];

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// `V = [[p, q], [q, -p]]`.
#[derive(Debug, Clone)]
pub struct MatrixPotential {
    pub p: Potential,
    pub q: Potential,
}

impl MatrixPotential {
    pub fn new(p: Potential, q: Potential) -> Self {
        Self { p, q }
    }

    pub fn zero() -> Self {
        Self::new(Potential::zero(), Potential::zero())
    }

    /// The off-diagonal potential `V = [[0, q], [q, 0]]`.
    pub fn off_diagonal(q: Potential) -> Self {
        Self::new(Potential::zero(), q)
    }
}

/// A pair of controls `(f_1, f_2)` driving `u^{f_1} + v^{f_2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedControl {
    pub f1: Vec<Complex64>,
    pub f2: Vec<Complex64>,
}

impl ExtendedControl {
    pub fn new(f1: Vec<Complex64>, f2: Vec<Complex64>) -> Result<Self> {
        if f1.len() != f2.len() {
            return Err(Error::LengthMismatch {
                expected: f1.len(),
                actual: f2.len(),
            });
        }
        Ok(Self { f1, f2 })
    }

    pub fn zero(len: usize) -> Self {
        Self {
            f1: vec![c64(0.0, 0.0); len],
            f2: vec![c64(0.0, 0.0); len],
        }
    }

    pub fn len(&self) -> usize {
        self.f1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f1.is_empty()
    }
}

/// Solution table `u[k][i] = (u_1, u_2)(i h, k h)`.
#[derive(Debug, Clone)]
pub struct DiracSolution {
    step: f64,
    u: Vec<Vec<Pair>>,
}

impl DiracSolution {
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn get(&self, i: usize, k: usize) -> Pair {
        self.u
            .get(k)
            .and_then(|row| row.get(i))
            .copied()
            .unwrap_or([c64(0.0, 0.0); 2])
    }

    pub fn state(&self, k: usize, nodes: usize) -> Vec<Pair> {
        (0..nodes).map(|i| self.get(i, k)).collect()
    }
}

struct Marched {
    alpha: Vec<Complex64>,
    beta: Vec<Complex64>,
    boundary_beta: Vec<Complex64>,
    table: Vec<Vec<Pair>>,
}

fn to_pair(a: Complex64, b: Complex64) -> Pair {
    [a + b, I * (a - b)]
}

fn march(v: &MatrixPotential, f: &[Complex64], step: f64, steps: usize, keep: bool) -> Result<Marched> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidInput(format!("step must be positive, got {step}")));
    }
    let width = steps + 2;
    let half = 0.5 * step;
    // half-step coupling coefficients for the alpha and beta equations
    let mut ca = Vec::with_capacity(width);
    let mut cb = Vec::with_capacity(width);
    for i in 0..width {
        let x = i as f64 * step;
        let (p, q) = (v.p.at(x), v.q.at(x));
        if !(p.is_finite() && q.is_finite()) {
            return Err(Error::NonFinite("matrix potential samples"));
        }
        ca.push(c64(q, p) * half);
        cb.push(c64(-q, p) * half);
    }
    let control = |k: usize| f.get(k).copied().unwrap_or(c64(0.0, 0.0));
    let zero = c64(0.0, 0.0);
    let mut alpha = vec![zero; width];
    let mut beta = vec![zero; width];
    alpha[0] = control(0);
    let mut boundary_beta = Vec::with_capacity(steps + 1);
    boundary_beta.push(zero);
    let mut table = Vec::new();
    let snapshot = |a: &[Complex64], b: &[Complex64]| -> Vec<Pair> {
        a.iter().zip(b).map(|(&x, &y)| to_pair(x, y)).collect()
    };
    if keep {
        table.push(snapshot(&alpha, &beta));
    }
    let mut next_a = vec![zero; width];
    let mut next_b = vec![zero; width];
    for k in 0..steps {
        let reach = (k + 2).min(width - 1);
        let fk = control(k + 1);
        // boundary: alpha = f - beta, beta from the characteristic out of (1, k)
        let r2 = beta[1] + cb[1] * alpha[1];
        let b0 = (r2 + cb[0] * fk) / (c64(1.0, 0.0) + cb[0]);
        next_b[0] = b0;
        next_a[0] = fk - b0;
        for i in 1..=reach {
            let r1 = alpha[i - 1] + ca[i - 1] * beta[i - 1];
            if i == k + 1 {
                // new front node: beta vanishes on the front itself and the
                // jump of alpha must not feed back into it
                next_b[i] = zero;
                next_a[i] = r1;
            } else if i + 1 < width {
                let r2 = beta[i + 1] + cb[i + 1] * alpha[i + 1];
                let b = (r2 + cb[i] * r1) / (c64(1.0, 0.0) - ca[i] * cb[i]);
                next_b[i] = b;
                next_a[i] = r1 + ca[i] * b;
            } else {
                next_b[i] = zero;
                next_a[i] = r1;
            }
        }
        std::mem::swap(&mut alpha, &mut next_a);
        std::mem::swap(&mut beta, &mut next_b);
        boundary_beta.push(beta[0]);
        if keep {
            table.push(snapshot(&alpha, &beta));
        }
    }
    Ok(Marched {
        alpha,
        beta,
        boundary_beta,
        table,
    })
}

/// Forward solve from rest with control samples `f[k] = f(k h)`.
pub fn dirac_forward(v: &MatrixPotential, f: &[Complex64], step: f64, steps: usize) -> Result<DiracSolution> {
    let m = march(v, f, step, steps, true)?;
    Ok(DiracSolution { step, u: m.table })
}

/// Adjoint solve through `v^g = conj(u^{conj g})`.
pub fn dirac_adjoint_forward(v: &MatrixPotential, g: &[Complex64], step: f64, steps: usize) -> Result<DiracSolution> {
    let conj_g: Vec<Complex64> = g.iter().map(|x| x.conj()).collect();
    let mut sol = dirac_forward(v, &conj_g, step, steps)?;
    for row in sol.u.iter_mut() {
        for pair in row.iter_mut() {
            *pair = [pair[0].conj(), pair[1].conj()];
        }
    }
    Ok(sol)
}

fn horizon_grid(t: f64, points: usize) -> Result<UniformGrid> {
    if points < 3 {
        return Err(Error::InvalidInput(format!(
            "continuous systems need at least 3 grid points, got {points}"
        )));
    }
    UniformGrid::new(t, points)
}

fn final_state(v: &MatrixPotential, f: &[Complex64], step: f64, steps: usize, nodes: usize) -> Result<Vec<Pair>> {
    let m = march(v, f, step, steps, false)?;
    Ok((0..nodes).map(|i| to_pair(m.alpha[i], m.beta[i])).collect())
}

/// `W^T(f_1, f_2) = u^{f_1}(., T) + v^{f_2}(., T)` on the nodes of `[0, T]`.
pub fn extended_state(v: &MatrixPotential, ec: &ExtendedControl, t: f64, points: usize) -> Result<Vec<Pair>> {
    let grid = horizon_grid(t, points)?;
    let (h, k) = (grid.step(), grid.intervals());
    let u = final_state(v, &ec.f1, h, k, points)?;
    let conj_f2: Vec<Complex64> = ec.f2.iter().map(|x| x.conj()).collect();
    let w = final_state(v, &conj_f2, h, k, points)?;
    Ok(u.iter()
        .zip(&w)
        .map(|(a, b)| [a[0] + b[0].conj(), a[1] + b[1].conj()])
        .collect())
}

/// `int_0^T (conj(a(x)), b(x))_{C^2} dx` by the trapezoid rule.
pub fn pair_inner(a: &[Pair], b: &[Pair], step: f64) -> Complex64 {
    let vals: Vec<Complex64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x[0].conj() * y[0] + x[1].conj() * y[1])
        .collect();
    trapezoid(&vals, step)
}

/// Regular part of the response kernel on `[0, 2T]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResponseKernelD {
    pub step: f64,
    pub r: Vec<Complex64>,
}

/// Heaviside probe: `u_2(0, t) = i + int_0^t r`, and with
/// `u_2(0, t) = i (1 - 2 beta(0, t))` this gives `r = -2i d/dt beta(0, t)`.
pub fn response_kernel_dirac(v: &MatrixPotential, t: f64, points: usize) -> Result<ResponseKernelD> {
    let grid = horizon_grid(t, points)?;
    let h = grid.step();
    let last = 2 * grid.intervals();
    let ones = vec![c64(1.0, 0.0); last + 2];
    let b = march(v, &ones, h, last + 1, false)?.boundary_beta;
    let scale = -I / h;
    let mut r = vec![c64(0.0, 0.0); last + 1];
    for k in 1..=last {
        r[k] = (b[k + 1] - b[k - 1]) * scale;
    }
    // the first step cannot resolve beta(0, h), so r(0) is extrapolated
    r[0] = if last >= 3 { r[1] * 3.0 - r[2] * 3.0 + r[3] } else { r[1] };
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("Dirac response kernel"));
    }
    Ok(ResponseKernelD { step: h, r })
}

/// Block connecting operator `(C a)(t) = 2 a(t) + int_0^T c(t, s) a(s) ds`.
#[derive(Debug, Clone)]
pub struct ConnectingOpD {
    grid: UniformGrid,
    /// `2n x 2n` kernel values, component-major: rows `0..n` are `a_1`.
    kernel: DMatrix<Complex64>,
    weights: Vec<f64>,
}

impl ConnectingOpD {
    /// Kernel blocks
    /// `c11 = -i [r(t-s) - conj r(s-t)]`, `c12 = -i conj r(2T-t-s)`,
    /// `c21 = i r(2T-t-s)`, `c22 = i [conj r(t-s) - r(s-t)]`, with
    /// `r(tau) = 0` for `tau < 0` and the mean `r(0)/2` on the diagonal.
    pub fn build(rk: &ResponseKernelD, t: f64, points: usize) -> Result<Self> {
        let grid = horizon_grid(t, points)?;
        if (rk.step - grid.step()).abs() > 1e-12 * grid.step() {
            return Err(Error::InvalidInput(format!(
                "response step {} does not match grid step {}",
                rk.step,
                grid.step()
            )));
        }
        let k = grid.intervals();
        if rk.r.len() < 2 * k + 1 {
            return Err(Error::LengthMismatch {
                expected: 2 * k + 1,
                actual: rk.r.len(),
            });
        }
        let r = &rk.r;
        let causal = |i: usize, j: usize| -> Complex64 {
            match i.cmp(&j) {
                std::cmp::Ordering::Greater => r[i - j],
                std::cmp::Ordering::Equal => r[0] * 0.5,
                std::cmp::Ordering::Less => c64(0.0, 0.0),
            }
        };
        let n = points;
        let kernel = DMatrix::from_fn(2 * n, 2 * n, |row, col| {
            let (bi, i) = (row / n, row % n);
            let (bj, j) = (col / n, col % n);
            let far = r[2 * k - i - j];
            match (bi, bj) {
                (0, 0) => -I * (causal(i, j) - causal(j, i).conj()),
                (0, 1) => -I * far.conj(),
                (1, 0) => I * far,
                _ => I * (causal(i, j).conj() - causal(j, i)),
            }
        });
        Ok(Self {
            grid,
            kernel,
            weights: grid.trapezoid_weights(),
        })
    }

    pub fn grid(&self) -> UniformGrid {
        self.grid
    }

    pub fn kernel(&self) -> &DMatrix<Complex64> {
        &self.kernel
    }

    /// `2 I + W^{1/2} K W^{1/2}`, Hermitian.
    pub fn symmetric_matrix(&self) -> DMatrix<Complex64> {
        let n = self.weights.len();
        let sw: Vec<f64> = self.weights.iter().map(|w| w.sqrt()).collect();
        DMatrix::from_fn(2 * n, 2 * n, |a, b| {
            let id = if a == b { 2.0 } else { 0.0 };
            self.kernel[(a, b)] * (sw[a % n] * sw[b % n]) + id
        })
    }

    pub fn apply(&self, a: &ExtendedControl) -> ExtendedControl {
        let n = self.weights.len();
        let stacked: Vec<Complex64> = a.f1.iter().chain(&a.f2).copied().collect();
        let out: Vec<Complex64> = (0..2 * n)
            .map(|row| {
                stacked[row] * 2.0
                    + (0..2 * n)
                        .map(|col| self.kernel[(row, col)] * stacked[col] * self.weights[col % n])
                        .sum::<Complex64>()
            })
            .collect();
        ExtendedControl {
            f1: out[..n].to_vec(),
            f2: out[n..].to_vec(),
        }
    }

    /// `(C a, b) = int (conj((C a)(t)), b(t))_{C^2} dt`.
    pub fn form(&self, a: &ExtendedControl, b: &ExtendedControl) -> Complex64 {
        let ca = self.apply(a);
        let mut acc = c64(0.0, 0.0);
        for (i, &w) in self.weights.iter().enumerate() {
            acc += (ca.f1[i].conj() * b.f1[i] + ca.f2[i].conj() * b.f2[i]) * w;
        }
        acc
    }

    pub fn factor(&self) -> Result<DiracKrein> {
        let chol = Cholesky::new(self.symmetric_matrix())
            .ok_or(Error::NotPositiveDefinite("Cholesky of the Dirac connecting operator failed"))?;
        Ok(DiracKrein {
            chol: Arc::new(chol),
            grid: self.grid,
            weights: self.weights.clone(),
        })
    }
}

/// Factored Dirac connecting operator.
#[derive(Clone)]
pub struct DiracKrein {
    chol: Arc<Cholesky<Complex64, Dyn>>,
    grid: UniformGrid,
    weights: Vec<f64>,
}

impl DiracKrein {
    /// Solve `C j = conj((i e^{iz(T-s)}, -i e^{-iz(T-s)}))`.
    pub fn solve(&self, z: Complex64) -> ExtendedControl {
        let t = self.grid.length();
        let n = self.weights.len();
        let sw: Vec<f64> = self.weights.iter().map(|w| w.sqrt()).collect();
        let nodes = self.grid.nodes();
        let rhs = DVector::from_iterator(
            2 * n,
            (0..2 * n).map(|row| {
                let s = nodes[row % n];
                let v = if row < n {
                    I * (I * z * (t - s)).exp()
                } else {
                    -I * (-I * z * (t - s)).exp()
                };
                v.conj() * sw[row % n]
            }),
        );
        let y = self.chol.solve(&rhs);
        ExtendedControl {
            f1: (0..n).map(|i| y[i] / sw[i]).collect(),
            f2: (0..n).map(|i| y[n + i] / sw[i]).collect(),
        }
    }

    pub fn grid(&self) -> UniformGrid {
        self.grid
    }

    pub fn kernel(&self, z: Complex64, lambda: Complex64) -> Complex64 {
        kernel_krein_dirac(&self.solve(z), lambda, self.grid)
    }

    pub fn evaluator(&self) -> KernelEvaluator {
        let me = self.clone();
        KernelEvaluator::new(KernelProvenance::FromKrein, move |z, l| me.kernel(z, l))
    }
}

/// `F(lambda) = int_0^T (i e^{i lambda (T-s)} a_1(s) - i e^{-i lambda (T-s)} a_2(s)) ds`.
pub fn fourier_of_control(a: &ExtendedControl, lambda: Complex64, grid: UniformGrid) -> Complex64 {
    let t = grid.length();
    let vals: Vec<Complex64> = grid
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            I * (I * lambda * (t - s)).exp() * a.f1[i] - I * (-I * lambda * (t - s)).exp() * a.f2[i]
        })
        .collect();
    trapezoid(&vals, grid.step())
}

/// `J_z(lambda)` from the Krein solution.
pub fn kernel_krein_dirac(j: &ExtendedControl, lambda: Complex64, grid: UniformGrid) -> Complex64 {
    fourier_of_control(j, lambda, grid)
}

/// `theta(N, z)` and its `z`-derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaSolution {
    pub theta: Pair,
    pub theta_z: Pair,
}

fn theta_rhs(p: f64, q: f64, z: Complex64, y: [Complex64; 4]) -> [Complex64; 4] {
    let (zp, zm) = (z + p, z - p);
    [
        y[0] * q - zp * y[1],
        zm * y[0] - y[1] * q,
        y[2] * q - zp * y[3] - y[1],
        zm * y[2] - y[3] * q + y[0],
    ]
}

/// RK4 for `theta_x = -J (z - V) theta`, `theta(0) = (0, 1)`, with the
/// `z`-differentiated system; the state at every node.
pub fn theta_trajectory(v: &MatrixPotential, n: f64, z: Complex64, steps: usize) -> Vec<ThetaSolution> {
    let h = n / steps as f64;
    let zero = c64(0.0, 0.0);
    let mut y = [zero, c64(1.0, 0.0), zero, zero];
    let pack = |y: [Complex64; 4]| ThetaSolution {
        theta: [y[0], y[1]],
        theta_z: [y[2], y[3]],
    };
    let add = |y: [Complex64; 4], k: [Complex64; 4], s: f64| {
        [y[0] + k[0] * s, y[1] + k[1] * s, y[2] + k[2] * s, y[3] + k[3] * s]
    };
    let mut out = Vec::with_capacity(steps + 1);
    out.push(pack(y));
    for i in 0..steps {
        let x = i as f64 * h;
        let (p0, q0) = (v.p.at(x), v.q.at(x));
        let (pm, qm) = (v.p.at(x + 0.5 * h), v.q.at(x + 0.5 * h));
        let (p1, q1) = (v.p.at(x + h), v.q.at(x + h));
        let k1 = theta_rhs(p0, q0, z, y);
        let k2 = theta_rhs(pm, qm, z, add(y, k1, 0.5 * h));
        let k3 = theta_rhs(pm, qm, z, add(y, k2, 0.5 * h));
        let k4 = theta_rhs(p1, q1, z, add(y, k3, h));
        for c in 0..4 {
            y[c] += (k1[c] + (k2[c] + k3[c]) * 2.0 + k4[c]) * (h / 6.0);
        }
        out.push(pack(y));
    }
    out
}

pub fn theta_ode(v: &MatrixPotential, n: f64, z: Complex64, steps: usize) -> ThetaSolution {
    *theta_trajectory(v, n, z, steps).last().expect("trajectory is never empty")
}

/// `E(z) = theta_1(N, z) - i theta_2(N, z)`.
pub fn e_direct_dirac(v: &MatrixPotential, n: f64, steps: usize) -> EntireEvaluator {
    let v = v.clone();
    EntireEvaluator::new(format!("Dirac E, N={n}"), move |z| {
        let s = theta_ode(&v, n, z, steps);
        (s.theta[0] - I * s.theta[1], s.theta_z[0] - I * s.theta_z[1])
    })
}

/// `J_z(xi) = int_0^N (conj theta(x, z), theta(x, xi)) dx`.
pub fn kernel_direct_dirac(v: &MatrixPotential, n: f64, z: Complex64, xi: Complex64, steps: usize) -> Complex64 {
    let a = theta_trajectory(v, n, z, steps);
    let b = theta_trajectory(v, n, xi, steps);
    let vals: Vec<Complex64> = a
        .iter()
        .zip(&b)
        .map(|(u, w)| u.theta[0].conj() * w.theta[0] + u.theta[1].conj() * w.theta[1])
        .collect();
    let h = n / steps as f64;
    if vals.len() % 2 == 1 {
        simpson(&vals, h)
    } else {
        trapezoid(&vals, h)
    }
}

pub fn kernel_direct_dirac_evaluator(v: &MatrixPotential, n: f64, steps: usize) -> KernelEvaluator {
    let v = v.clone();
    KernelEvaluator::new(KernelProvenance::FromDirectSum, move |z, xi| {
        kernel_direct_dirac(&v, n, z, xi, steps)
    })
}

/// `int_0^T W(x) . theta(x, lambda) dx` for a state sampled on the nodes of
/// `[0, T]` (bilinear pairing).
pub fn fourier_of_state(v: &MatrixPotential, state: &[Pair], lambda: Complex64, grid: UniformGrid) -> Complex64 {
    let traj = theta_trajectory(v, grid.length(), lambda, grid.intervals());
    let vals: Vec<Complex64> = state
        .iter()
        .zip(&traj)
        .map(|(w, th)| w[0] * th.theta[0] + w[1] * th.theta[1])
        .collect();
    trapezoid(&vals, grid.step())
}

/// Response kernel, connecting operator and factorization in one call.
pub fn krein_pipeline(v: &MatrixPotential, t: f64, points: usize) -> Result<(ResponseKernelD, ConnectingOpD, DiracKrein)> {
    let rk = response_kernel_dirac(v, t, points)?;
    let c = ConnectingOpD::build(&rk, t, points)?;
    let f = c.factor()?;
    Ok((rk, c, f))
}

/// Interior hat controls in each component: centers `j T / count` for
/// `j = 1..count`, half-width `T / count`.
pub fn hat_controls(grid: &UniformGrid, count: usize) -> Vec<ExtendedControl> {
    let t = grid.length();
    let zero = vec![c64(0.0, 0.0); grid.points()];
    let mut out = Vec::new();
    for j in 1..count {
        let hat: Vec<Complex64> = hat_samples(grid, j as f64 * t / count as f64, t / count as f64)
            .into_iter()
            .map(|x| c64(x, 0.0))
            .collect();
        out.push(ExtendedControl {
            f1: hat.clone(),
            f2: zero.clone(),
        });
        out.push(ExtendedControl {
            f1: zero.clone(),
            f2: hat,
        });
    }
    out
}

/// Comparison of the formula-built form `(C a_k, a_l)` with the Gram form
/// `(W a_k, W a_l)` over a family of extended controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GramComparison {
    /// `max |(C a_k, a_l) - (W a_k, W a_l)|`.
    pub max_error: f64,
    /// `max |(C a_k, a_l) - 2 (a_k, a_l)|`, the size of the non-identity part.
    pub scale: f64,
    /// `max_error / scale`, or `max_error` when the scale vanishes.
    pub relative: f64,
}

pub fn gram_comparison(v: &MatrixPotential, c: &ConnectingOpD, controls: &[ExtendedControl]) -> Result<GramComparison> {
    let grid = c.grid();
    let states = controls
        .iter()
        .map(|a| extended_state(v, a, grid.length(), grid.points()))
        .collect::<Result<Vec<_>>>()?;
    let w = grid.trapezoid_weights();
    let (mut max_error, mut scale) = (0.0f64, 0.0f64);
    for (k, a) in controls.iter().enumerate() {
        let ca = c.apply(a);
        for (l, b) in controls.iter().enumerate() {
            let mut formula = c64(0.0, 0.0);
            let mut identity = c64(0.0, 0.0);
            for i in 0..w.len() {
                formula += (ca.f1[i].conj() * b.f1[i] + ca.f2[i].conj() * b.f2[i]) * w[i];
                identity += (a.f1[i].conj() * b.f1[i] + a.f2[i].conj() * b.f2[i]) * (2.0 * w[i]);
            }
            let gram = pair_inner(&states[k], &states[l], grid.step());
            max_error = max_error.max((formula - gram).norm());
            scale = scale.max((formula - identity).norm());
        }
    }
    let relative = if scale > 0.0 { max_error / scale } else { max_error };
    Ok(GramComparison {
        max_error,
        scale,
        relative,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_v() -> MatrixPotential {
        MatrixPotential::off_diagonal(Potential::sine(0.3))
    }

    #[test]
    fn free_transport_is_exact() {
        let h = 0.02;
        let f: Vec<Complex64> = (0..80).map(|k| c64((k as f64 * 0.1).cos(), k as f64 * h)).collect();
        let sol = dirac_forward(&MatrixPotential::zero(), &f, h, 60).unwrap();
        for k in 0..=60 {
            for i in 0..=61 {
                let fv = if i <= k { f[k - i] } else { c64(0.0, 0.0) };
                assert_eq!(sol.get(i, k), [fv, I * fv], "i={i} k={k}");
            }
        }
        let none = dirac_forward(&sample_v(), &[], h, 20).unwrap();
        assert!(none.state(20, 22).iter().all(|p| p[0].norm() == 0.0 && p[1].norm() == 0.0));
    }

    #[test]
    fn adjoint_relation() {
        let h = 0.05;
        let g: Vec<Complex64> = (0..21).map(|k| c64(1.0, 0.1 * k as f64)).collect();
        let v = sample_v();
        let adj = dirac_adjoint_forward(&v, &g, h, 20).unwrap();
        let conj_g: Vec<Complex64> = g.iter().map(|x| x.conj()).collect();
        let fwd = dirac_forward(&v, &conj_g, h, 20).unwrap();
        for k in 0..=20 {
            for i in 0..=20 {
                let (a, b) = (adj.get(i, k), fwd.get(i, k));
                assert_eq!(a, [b[0].conj(), b[1].conj()]);
            }
        }
        let free = dirac_adjoint_forward(&MatrixPotential::zero(), &g, h, 20).unwrap();
        assert_eq!(free.get(3, 10), [g[7], -I * g[7]]);
    }

    #[test]
    fn extended_state_examples() {
        let grid = UniformGrid::new(1.0, 21).unwrap();
        let f: Vec<Complex64> = grid.nodes().iter().map(|&s| c64(s * s, 0.0)).collect();
        let zero = vec![c64(0.0, 0.0); 21];
        let v0 = MatrixPotential::zero();
        let st = extended_state(&v0, &ExtendedControl::new(f.clone(), zero.clone()).unwrap(), 1.0, 21).unwrap();
        for (i, p) in st.iter().enumerate() {
            assert_eq!(*p, [f[20 - i], I * f[20 - i]]);
        }
        let st = extended_state(&v0, &ExtendedControl::new(f.clone(), f.clone()).unwrap(), 1.0, 21).unwrap();
        for (i, p) in st.iter().enumerate() {
            assert_eq!(*p, [f[20 - i] * 2.0, c64(0.0, 0.0)]);
        }
        let st = extended_state(&sample_v(), &ExtendedControl::zero(21), 1.0, 21).unwrap();
        assert!(st.iter().all(|p| p[0].norm() == 0.0 && p[1].norm() == 0.0));
        assert!(ExtendedControl::new(f, vec![]).is_err());
    }

    #[test]
    fn dirac_self_convergence() {
        let value = |m: usize| {
            let h = 1.0 / (m - 1) as f64;
            let f: Vec<Complex64> = (0..m).map(|k| c64((k as f64 * h).powi(2), 0.0)).collect();
            dirac_forward(&MatrixPotential::new(Potential::constant(0.4), Potential::sine(0.7)), &f, h, m - 1)
                .unwrap()
                .get((m - 1) / 2, m - 1)[1]
        };
        let (a, b, c) = (value(101), value(201), value(401));
        let ratio = (a - b).norm() / (b - c).norm();
        assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn free_response_and_connecting() {
        let rk = response_kernel_dirac(&MatrixPotential::zero(), 1.0, 41).unwrap();
        assert!(rk.r.iter().all(|v| v.norm() == 0.0));
        let c = ConnectingOpD::build(&rk, 1.0, 41).unwrap();
        assert_eq!(c.symmetric_matrix(), DMatrix::identity(82, 82) * c64(2.0, 0.0));
    }

    #[test]
    fn connecting_is_hermitian() {
        let rk = response_kernel_dirac(&MatrixPotential::new(Potential::constant(0.2), Potential::sine(0.3)), 1.0, 31).unwrap();
        let c = ConnectingOpD::build(&rk, 1.0, 31).unwrap();
        assert_eq!(c.kernel(), &c.kernel().adjoint());
    }

    #[test]
    fn free_krein_solution() {
        let (_, _, f) = krein_pipeline(&MatrixPotential::zero(), 1.0, 21).unwrap();
        let j = f.solve(c64(0.0, 0.0));
        assert!(j.f1.iter().all(|v| (v - c64(0.0, -0.5)).norm() < 1e-14));
        assert!(j.f2.iter().all(|v| (v - c64(0.0, 0.5)).norm() < 1e-14));
        assert!((f.kernel(c64(0.0, 0.0), c64(0.0, 0.0)) - 1.0).norm() < 1e-14);
        let z = c64(1.2, -0.4);
        let j = f.solve(z);
        let s = f.grid().nodes()[7];
        assert!((j.f1[7] - (I * (I * z * (1.0 - s)).exp()).conj() * 0.5).norm() < 1e-13);
    }

    #[test]
    fn theta_closed_forms() {
        let z = c64(1.3, 0.2);
        let v0 = MatrixPotential::zero();
        for (k, s) in theta_trajectory(&v0, 1.0, z, 400).iter().enumerate() {
            let x = k as f64 / 400.0;
            assert!((s.theta[0] + (z * x).sin()).norm() < 1e-9);
            assert!((s.theta[1] - (z * x).cos()).norm() < 1e-9);
        }
        assert_eq!(theta_ode(&v0, 2.0, c64(0.0, 0.0), 10).theta, [c64(0.0, 0.0), c64(1.0, 0.0)]);
        for s in theta_trajectory(&v0, 2.0, c64(2.5, 0.0), 400) {
            assert!((s.theta[0] * s.theta[0] + s.theta[1] * s.theta[1] - 1.0).norm() < 1e-9);
        }
    }

    #[test]
    fn free_e_is_exponential() {
        let e = e_direct_dirac(&MatrixPotential::zero(), 1.0, 400);
        for z in [c64(0.3, 0.5), c64(-2.0, 1.5), c64(4.0, -0.2)] {
            let expected = -I * (-I * z).exp();
            let (v, d) = e.eval(z);
            assert!((v - expected).norm() < 1e-8);
            assert!((d - (-I) * (-I) * (-I * z).exp()).norm() < 1e-8);
            assert!((v.norm() - z.im.exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn direct_kernel_examples() {
        let v0 = MatrixPotential::zero();
        assert!((kernel_direct_dirac(&v0, 1.5, c64(0.0, 0.0), c64(0.0, 0.0), 100) - 1.5).norm() < 1e-13);
        let v = sample_v();
        let (z, xi) = (c64(0.4, 0.9), c64(-1.0, 0.2));
        let a = kernel_direct_dirac(&v, 1.0, z, xi, 400);
        let b = kernel_direct_dirac(&v, 1.0, xi, z, 400);
        assert!((a - b.conj()).norm() < 1e-12);
        assert!(kernel_direct_dirac(&v, 1.0, z, z, 400).re > 0.0);
    }

    #[test]
    fn kernel_from_e_matches_direct_kernel() {
        let v = MatrixPotential::new(Potential::constant(0.1), Potential::sine(0.3));
        let e = e_direct_dirac(&v, 1.0, 2000);
        for (z, xi) in [(c64(0.4, 1.0), c64(-1.2, 0.3)), (c64(2.0, -0.5), c64(2.0, 0.5))] {
            let a = crate::debranges::kernel_from_e(&e, z, xi);
            let b = kernel_direct_dirac(&v, 1.0, z, xi, 2000);
            assert!((a - b).norm() < 1e-9 * (1.0 + b.norm()), "{a} vs {b}");
        }
    }

    #[test]
    fn special_control_reaches_theta() {
        let v = sample_v();
        let z = c64(1.5, 0.5);
        let mut errs = Vec::new();
        for m in [101, 201] {
            let (_, _, f) = krein_pipeline(&v, 1.0, m).unwrap();
            let j = f.solve(z);
            let state = extended_state(&v, &j, 1.0, m).unwrap();
            let traj = theta_trajectory(&v, 1.0, z.conj(), m - 1);
            let err = state
                .iter()
                .zip(&traj)
                .map(|(u, th)| (u[0] - th.theta[0]).norm().max((u[1] - th.theta[1]).norm()))
                .fold(0.0, f64::max);
            errs.push(err);
        }
        assert!(errs[1] < 1e-5, "{errs:?}");
        assert!((3.0..5.0).contains(&(errs[0] / errs[1])), "{errs:?}");
    }

    #[test]
    fn fourier_of_state_matches_control_side() {
        let v = sample_v();
        let grid = UniformGrid::new(1.0, 201).unwrap();
        let a = ExtendedControl::new(
            grid.nodes().iter().map(|&s| c64((3.0 * s).sin(), s)).collect(),
            grid.nodes().iter().map(|&s| c64(s * s, -0.5)).collect(),
        )
        .unwrap();
        let state = extended_state(&v, &a, 1.0, 201).unwrap();
        for lambda in [0.5, -1.3, 2.0] {
            let lam = c64(lambda, 0.0);
            let d = fourier_of_state(&v, &state, lam, grid) - fourier_of_control(&a, lam, grid);
            assert!(d.norm() < 1e-3, "{d}");
        }
        let v0 = MatrixPotential::zero();
        let state = extended_state(&v0, &a, 1.0, 201).unwrap();
        for lambda in [0.5, -1.3, 2.0] {
            let lam = c64(lambda, 0.0);
            let d = fourier_of_state(&v0, &state, lam, grid) - fourier_of_control(&a, lam, grid);
            assert!(d.norm() < 1e-9, "{d}");
        }
    }

    #[test]
    fn gram_matches_formula() {
        let v = sample_v();
        let mut rel = Vec::new();
        for m in [101, 201] {
            let (_, c, _) = krein_pipeline(&v, 1.0, m).unwrap();
            let controls = hat_controls(&c.grid(), 4);
            rel.push(gram_comparison(&v, &c, &controls).unwrap().relative);
        }
        assert!(rel[1] < 1e-4, "{rel:?}");
        assert!((3.0..5.0).contains(&(rel[0] / rel[1])), "{rel:?}");
    }
}
