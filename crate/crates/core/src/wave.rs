//! Half-line wave equation `u_tt - u_xx + q u = 0` with boundary control
//! `u(0, t) = f(t)` and the De Branges space of the operator
//! `-phi'' + q phi`.
//!
//! The forward solver is leapfrog on a characteristic-aligned grid
//! (`dx = dt = h`), which transports exactly when `q = 0`. Controls, Krein
//! solutions and response samples all live on nodes `k * h`.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::debranges::{EntireEvaluator, KernelEvaluator, KernelProvenance};
use crate::grid::{cumulative_trapezoid, simpson, trapezoid, Potential, UniformGrid};
use crate::{c64, Complex64, Error, Result};

const SERIES_TERMS: usize = 18;

/// `sin(sqrt(z) s) / sqrt(z)` and its `z`-derivative.
///
/// Uses the even power series while `|z| s^2 <= 1` and the closed form with
/// the principal root beyond; the function is even in `sqrt(z)` so the
/// branch does not matter.
pub fn sinc_entire(s: f64, z: Complex64) -> (Complex64, Complex64) {
    if z.norm() * s * s <= 1.0 {
        sinc_series(s, z)
    } else {
        sinc_closed(s, z)
    }
}

fn sinc_series(s: f64, z: Complex64) -> (Complex64, Complex64) {
    // c_m = (-1)^m s^{2m+1} / (2m+1)!, summed by Horner in z
    let mut coeffs = Vec::with_capacity(SERIES_TERMS);
    let mut c = s;
    for m in 0..SERIES_TERMS {
        coeffs.push(c);
        c *= -s * s / (((2 * m + 2) * (2 * m + 3)) as f64);
    }
    let mut value = c64(0.0, 0.0);
    let mut deriv = c64(0.0, 0.0);
    for (m, &c) in coeffs.iter().enumerate().rev() {
        value = value * z + c;
        if m > 0 {
            deriv = deriv * z + c * m as f64;
        }
    }
    (value, deriv)
}

fn sinc_closed(s: f64, z: Complex64) -> (Complex64, Complex64) {
    let w = z.sqrt();
    let v = (w * s).sin() / w;
    let d = (c64(s, 0.0) * (w * s).cos() - v) / (z * 2.0);
    (v, d)
}

/// Characteristic-aligned grid for a time horizon: `points` nodes on
/// `[0, T]` fix the step `h = T / (points - 1)`.
fn horizon_grid(t: f64, points: usize) -> Result<UniformGrid> {
    if points < 3 {
        return Err(Error::InvalidInput(format!(
            "continuous systems need at least 3 grid points, got {points}"
        )));
    }
    UniformGrid::new(t, points)
}

/// Leapfrog solution table, `u[k][i] = u(i h, k h)`.
#[derive(Debug, Clone)]
pub struct WaveSolution {
    step: f64,
    u: Vec<Vec<Complex64>>,
}

impl WaveSolution {
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn steps(&self) -> usize {
        self.u.len() - 1
    }

    pub fn get(&self, i: usize, k: usize) -> Complex64 {
        self.u
            .get(k)
            .and_then(|row| row.get(i))
            .copied()
            .unwrap_or(c64(0.0, 0.0))
    }

    /// `u(x_i, t_k)` for `i = 0..=nodes-1`.
    pub fn state(&self, k: usize, nodes: usize) -> Vec<Complex64> {
        (0..nodes).map(|i| self.get(i, k)).collect()
    }
}

/// March `u_i^{k+1} = u_{i+1}^k + u_{i-1}^k - u_i^{k-1} - h^2 q_i u_i^k` from
/// rest, with `u_0^k = f[k]` (zero past the end of `f`). The potential term
/// is halved on the characteristic `x = t`.
pub fn wave_forward(q: &Potential, f: &[Complex64], step: f64, steps: usize) -> Result<WaveSolution> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidInput(format!("step must be positive, got {step}")));
    }
    let width = steps + 2;
    let h2q: Vec<f64> = (0..width).map(|i| step * step * q.at(i as f64 * step)).collect();
    if h2q.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("potential samples"));
    }
    let control = |k: usize| f.get(k).copied().unwrap_or(c64(0.0, 0.0));
    let mut u: Vec<Vec<Complex64>> = Vec::with_capacity(steps + 1);
    let mut first = vec![c64(0.0, 0.0); width];
    first[0] = control(0);
    u.push(first);
    let zero_row = vec![c64(0.0, 0.0); width];
    for k in 0..steps {
        let cur = &u[k];
        let prev = if k == 0 { &zero_row } else { &u[k - 1] };
        let mut next = vec![c64(0.0, 0.0); width];
        next[0] = control(k + 1);
        for i in 1..=(k + 1).min(width - 2) {
            // on the front i = k only the half of the cell behind it is
            // nonzero, which matters when the control jumps at t = 0
            let source = if i == k { cur[i] * (0.5 * h2q[i]) } else { cur[i] * h2q[i] };
            next[i] = cur[i - 1] + (cur[i + 1] - prev[i]) - source;
        }
        u.push(next);
    }
    Ok(WaveSolution { step, u })
}

/// State `u^f(x_i, T)` on the nodes of `[0, T]`.
pub fn wave_state(q: &Potential, f: &[Complex64], t: f64, points: usize) -> Result<Vec<Complex64>> {
    let grid = horizon_grid(t, points)?;
    let sol = wave_forward(q, f, grid.step(), grid.intervals())?;
    Ok(sol.state(grid.intervals(), points))
}

/// `int_0^T conj(u^f(x, T)) u^g(x, T) dx` by forward solves and the
/// trapezoid rule.
pub fn state_gram(
    q: &Potential,
    f: &[Complex64],
    g: &[Complex64],
    t: f64,
    points: usize,
) -> Result<Complex64> {
    let grid = horizon_grid(t, points)?;
    let uf = wave_state(q, f, t, points)?;
    let ug = wave_state(q, g, t, points)?;
    let prod: Vec<Complex64> = uf.iter().zip(&ug).map(|(a, b)| a.conj() * b).collect();
    Ok(trapezoid(&prod, grid.step()))
}

/// Response kernel samples `r(k h)` and `p(k h) = 1/2 int_0^{kh} r` for
/// `0 <= k h <= 2T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseKernelS {
    step: f64,
    r: Vec<f64>,
    p: Vec<f64>,
}

impl ResponseKernelS {
    pub fn from_samples(step: f64, r: Vec<f64>) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::InvalidInput(format!("step must be positive, got {step}")));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("response kernel"));
        }
        let p = cumulative_trapezoid(&r, step).into_iter().map(|v| 0.5 * v).collect();
        Ok(Self { step, r, p })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }
}

/// Polynomial extrapolation through `(xs[k], ys[k])` evaluated at `x`.
fn lagrange(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for (i, (&xi, &yi)) in xs.iter().zip(ys).enumerate() {
        let mut basis = 1.0;
        for (j, &xj) in xs.iter().enumerate() {
            if i != j {
                basis *= (x - xj) / (xi - xj);
            }
        }
        acc += yi * basis;
    }
    acc
}

/// Response kernel on `[0, 2T]` from the ramp control `f(t) = t`:
/// `r = d^2/dt^2 [u_x(0, t) + 1]`.
///
/// Leapfrog at unit CFL splits into two sublattices (`i + k` even or odd)
/// whose O(h^2) errors differ, and a second difference in time would
/// amplify that mismatch by `1/h^2`. Every stencil below therefore stays on
/// the sublattice of `(0, t_k)`: `u_x` from nodes `0, 2h, 4h` and the time
/// difference with step `2h`. The stencil reaches the wave front for
/// `t < 6h`; those leading samples are extrapolated.
pub fn response_kernel(q: &Potential, t: f64, points: usize) -> Result<ResponseKernelS> {
    let grid = horizon_grid(t, points)?;
    let h = grid.step();
    let last = 2 * grid.intervals();
    let steps = last + 2;
    // the ramp is scaled by 1/h so free transport stays in exact integers
    let ramp: Vec<Complex64> = (0..=steps).map(|k| c64(k as f64, 0.0)).collect();
    let sol = wave_forward(q, &ramp, h, steps)?;
    let g: Vec<f64> = (0..=steps)
        .map(|k| {
            let ux = (-3.0 * sol.get(0, k).re + 4.0 * sol.get(2, k).re - sol.get(4, k).re) / 4.0;
            ux + 1.0
        })
        .collect();
    const FIRST: usize = 6;
    let mut r = vec![0.0; last + 1];
    for k in FIRST.min(last + 1)..=last {
        r[k] = (g[k + 2] - 2.0 * g[k] + g[k - 2]) / (4.0 * h * h);
    }
    let known: Vec<usize> = (FIRST..=last).take(4).collect();
    if known.is_empty() {
        return Err(Error::InvalidInput(format!(
            "grid too coarse for response extraction: {points} points"
        )));
    }
    let xs: Vec<f64> = known.iter().map(|&k| k as f64).collect();
    let ys: Vec<f64> = known.iter().map(|&k| r[k]).collect();
    for (k, slot) in r.iter_mut().enumerate().take(FIRST.min(last + 1)) {
        *slot = lagrange(&xs, &ys, k as f64);
    }
    ResponseKernelS::from_samples(h, r)
}

/// Independent route for the response kernel: solve the Goursat problem
/// `w_ss - w_xx + q w = 0` on `0 < x < s` with `w(x, x) = -1/2 int_0^x q`
/// and `w(0, s) = 0`, then `r(s) = w_x(0, s)`.
///
/// The problem is marched in characteristic coordinates `(s + x, s - x)`
/// on a grid twice as fine as the wave grid; returns samples at the wave
/// nodes of `[0, 2T]`.
pub fn goursat_response(q: &Potential, t: f64, points: usize) -> Result<Vec<f64>> {
    let grid = horizon_grid(t, points)?;
    let delta = 0.5 * grid.step();
    // s-nodes n * delta up to 2T
    let n_max = 4 * grid.intervals();
    let a_max = n_max + 2;
    let coef = delta * delta / 16.0;
    // q at x = k delta / 2, k = a - b
    let qx: Vec<f64> = (0..=a_max).map(|k| q.at(0.5 * k as f64 * delta)).collect();
    if qx.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("potential samples"));
    }
    // rows indexed by b; row b stores a = b..=a_max
    let mut w: Vec<Vec<f64>> = Vec::with_capacity(a_max + 1);
    w.push(
        (0..=a_max)
            .map(|a| -0.5 * q.integral(0.5 * a as f64 * delta))
            .collect(),
    );
    for b in 1..=a_max {
        let mut row = vec![0.0; a_max + 1 - b];
        let below = &w[b - 1];
        // row[a - b]; w(a, b-1) = below[a - b + 1]
        for a in b + 1..=a_max {
            let w_left = row[a - 1 - b];
            let w_down = below[a - b + 1];
            let w_diag = below[a - b];
            let rhs = w_left + w_down - w_diag
                - coef * (qx[a - 1 - b] * w_left + qx[a - b + 1] * w_down + qx[a - b] * w_diag);
            row[a - b] = rhs / (1.0 + coef * qx[a - b]);
        }
        w.push(row);
    }
    let at = |a: usize, b: usize| w[b][a - b];
    // w_x(0, n delta) with x-step delta: x = delta <-> (n+1, n-1), x = 2 delta <-> (n+2, n-2)
    let mut fine = vec![0.0; n_max + 1];
    fine[0] = -0.5 * qx[0];
    for (n, slot) in fine.iter_mut().enumerate().skip(2) {
        *slot = (4.0 * at(n + 1, n - 1) - at(n + 2, n - 2)) / (2.0 * delta);
    }
    if n_max >= 4 {
        fine[1] = lagrange(&[0.0, 2.0, 3.0, 4.0], &[fine[0], fine[2], fine[3], fine[4]], 1.0);
    }
    Ok(fine.into_iter().step_by(2).collect())
}

/// Connecting operator `(C f)(t) = f(t) + int_0^T c(t, s) f(s) ds` with
/// `c(t, s) = p(2T - t - s) - p(|t - s|)`, discretized by Nystrom on the
/// trapezoid nodes of `[0, T]`.
#[derive(Debug, Clone)]
pub struct ConnectingOpS {
    grid: UniformGrid,
    kernel: DMatrix<f64>,
    weights: Vec<f64>,
}

impl ConnectingOpS {
    pub fn build(rk: &ResponseKernelS, t: f64, points: usize) -> Result<Self> {
        let grid = horizon_grid(t, points)?;
        if (rk.step() - grid.step()).abs() > 1e-12 * grid.step() {
            return Err(Error::InvalidInput(format!(
                "response step {} does not match grid step {}",
                rk.step(),
                grid.step()
            )));
        }
        let k = grid.intervals();
        if rk.p().len() < 2 * k + 1 {
            return Err(Error::LengthMismatch {
                expected: 2 * k + 1,
                actual: rk.p().len(),
            });
        }
        let p = rk.p();
        let kernel = DMatrix::from_fn(points, points, |i, j| p[2 * k - i - j] - p[i.abs_diff(j)]);
        Ok(Self {
            grid,
            kernel,
            weights: grid.trapezoid_weights(),
        })
    }

    pub fn grid(&self) -> UniformGrid {
        self.grid
    }

    /// Kernel values `c(t_i, t_j)`.
    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Symmetrized Nystrom matrix `I + W^{1/2} K W^{1/2}`.
    pub fn symmetric_matrix(&self) -> DMatrix<f64> {
        let n = self.weights.len();
        let sw: Vec<f64> = self.weights.iter().map(|w| w.sqrt()).collect();
        DMatrix::from_fn(n, n, |i, j| {
            let id = if i == j { 1.0 } else { 0.0 };
            id + sw[i] * self.kernel[(i, j)] * sw[j]
        })
    }

    /// `(C f)(t_i)`.
    pub fn apply(&self, f: &[Complex64]) -> Vec<Complex64> {
        let n = self.weights.len();
        (0..n)
            .map(|i| {
                f[i] + (0..n)
                    .map(|j| f[j] * (self.kernel[(i, j)] * self.weights[j]))
                    .sum::<Complex64>()
            })
            .collect()
    }

    /// `(C f, g) = int conj((C f)(t)) g(t) dt`.
    pub fn form(&self, f: &[Complex64], g: &[Complex64]) -> Complex64 {
        self.apply(f)
            .iter()
            .zip(g)
            .zip(&self.weights)
            .map(|((a, b), &w)| a.conj() * b * w)
            .sum()
    }

    pub fn factor(&self) -> Result<WaveKrein> {
        let chol = Cholesky::new(self.symmetric_matrix())
            .ok_or(Error::NotPositiveDefinite("Cholesky of the wave connecting operator failed"))?;
        Ok(WaveKrein {
            chol: Arc::new(chol),
            grid: self.grid,
            weights: self.weights.clone(),
        })
    }
}

/// Factored connecting operator, shared by Krein solves at many `z`.
#[derive(Clone)]
pub struct WaveKrein {
    chol: Arc<Cholesky<f64, Dyn>>,
    grid: UniformGrid,
    weights: Vec<f64>,
}

impl WaveKrein {
    /// Samples of `j_z` solving `C j_z = conj(sin(sqrt(z)(T - s)) / sqrt(z))`.
    pub fn solve(&self, z: Complex64) -> Vec<Complex64> {
        let t = self.grid.length();
        let nodes = self.grid.nodes();
        let sw: Vec<f64> = self.weights.iter().map(|w| w.sqrt()).collect();
        let rhs: Vec<Complex64> = nodes
            .iter()
            .zip(&sw)
            .map(|(&s, &w)| sinc_entire(t - s, z).0.conj() * w)
            .collect();
        let n = rhs.len();
        let re = self.chol.solve(&DVector::from_iterator(n, rhs.iter().map(|v| v.re)));
        let im = self.chol.solve(&DVector::from_iterator(n, rhs.iter().map(|v| v.im)));
        (0..n).map(|i| c64(re[i], im[i]) / sw[i]).collect()
    }

    pub fn grid(&self) -> UniformGrid {
        self.grid
    }

    pub fn kernel(&self, z: Complex64, mu: Complex64) -> Complex64 {
        kernel_krein_wave(&self.solve(z), mu, self.grid)
    }

    pub fn evaluator(&self) -> KernelEvaluator {
        let me = self.clone();
        KernelEvaluator::new(KernelProvenance::FromKrein, move |z, mu| me.kernel(z, mu))
    }
}

/// `J_z(mu) = int_0^T sin(sqrt(mu)(T - s)) / sqrt(mu) j_z(s) ds`.
pub fn kernel_krein_wave(j: &[Complex64], mu: Complex64, grid: UniformGrid) -> Complex64 {
    fourier_of_control(j, mu, grid)
}

/// `F(mu) = int_0^T sin(sqrt(mu)(T - s)) / sqrt(mu) f(s) ds`, the image of a
/// control in the De Branges space.
pub fn fourier_of_control(f: &[Complex64], mu: Complex64, grid: UniformGrid) -> Complex64 {
    let t = grid.length();
    let vals: Vec<Complex64> = grid
        .nodes()
        .iter()
        .zip(f)
        .map(|(&s, &fv)| sinc_entire(t - s, mu).0 * fv)
        .collect();
    trapezoid(&vals, grid.step())
}

/// `phi(N, z)`, `phi'(N, z)` and their `z`-derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiSolution {
    pub phi: Complex64,
    pub dphi: Complex64,
    pub phi_z: Complex64,
    pub dphi_z: Complex64,
}

fn phi_rhs(qv: f64, z: Complex64, y: [Complex64; 4]) -> [Complex64; 4] {
    let a = c64(qv, 0.0) - z;
    [y[1], a * y[0], y[3], a * y[2] - y[0]]
}

/// RK4 for `-phi'' + q phi = z phi`, `phi(0) = 0`, `phi'(0) = 1`, together
/// with the `z`-differentiated system; returns the state at every node.
pub fn phi_trajectory(q: &Potential, n: f64, z: Complex64, steps: usize) -> Vec<PhiSolution> {
    let h = n / steps as f64;
    let mut y = [c64(0.0, 0.0), c64(1.0, 0.0), c64(0.0, 0.0), c64(0.0, 0.0)];
    let pack = |y: [Complex64; 4]| PhiSolution {
        phi: y[0],
        dphi: y[1],
        phi_z: y[2],
        dphi_z: y[3],
    };
    let mut out = Vec::with_capacity(steps + 1);
    out.push(pack(y));
    let add = |y: [Complex64; 4], k: [Complex64; 4], s: f64| {
        [y[0] + k[0] * s, y[1] + k[1] * s, y[2] + k[2] * s, y[3] + k[3] * s]
    };
    for i in 0..steps {
        let x = i as f64 * h;
        let (q0, qm, q1) = (q.at(x), q.at(x + 0.5 * h), q.at(x + h));
        let k1 = phi_rhs(q0, z, y);
        let k2 = phi_rhs(qm, z, add(y, k1, 0.5 * h));
        let k3 = phi_rhs(qm, z, add(y, k2, 0.5 * h));
        let k4 = phi_rhs(q1, z, add(y, k3, h));
        for c in 0..4 {
            y[c] += (k1[c] + (k2[c] + k3[c]) * 2.0 + k4[c]) * (h / 6.0);
        }
        out.push(pack(y));
    }
    out
}

pub fn phi_ode(q: &Potential, n: f64, z: Complex64, steps: usize) -> PhiSolution {
    *phi_trajectory(q, n, z, steps).last().expect("trajectory is never empty")
}

/// Default RK4 step count for `[0, N]`.
pub fn default_ode_steps(n: f64) -> usize {
    2 * ((n * 1000.0).ceil() as usize).max(200)
}

/// `E(z) = phi(N, z) + i phi'(N, z)`.
pub fn e_direct_wave(q: &Potential, n: f64, steps: usize) -> EntireEvaluator {
    let q = q.clone();
    let i = c64(0.0, 1.0);
    EntireEvaluator::new(format!("wave E, N={n}"), move |z| {
        let s = phi_ode(&q, n, z, steps);
        (s.phi + i * s.dphi, s.phi_z + i * s.dphi_z)
    })
}

fn integrate_nodes(vals: &[Complex64], h: f64) -> Complex64 {
    if vals.len() % 2 == 1 {
        simpson(vals, h)
    } else {
        trapezoid(vals, h)
    }
}

/// `J_z(xi) = int_0^N conj(phi(x, z)) phi(x, xi) dx` along RK4 trajectories.
pub fn kernel_direct_wave(q: &Potential, n: f64, z: Complex64, xi: Complex64, steps: usize) -> Complex64 {
    let a = phi_trajectory(q, n, z, steps);
    let b = phi_trajectory(q, n, xi, steps);
    let vals: Vec<Complex64> = a.iter().zip(&b).map(|(u, v)| u.phi.conj() * v.phi).collect();
    integrate_nodes(&vals, n / steps as f64)
}

pub fn kernel_direct_wave_evaluator(q: &Potential, n: f64, steps: usize) -> KernelEvaluator {
    let q = q.clone();
    KernelEvaluator::new(KernelProvenance::FromDirectSum, move |z, xi| {
        kernel_direct_wave(&q, n, z, xi, steps)
    })
}

/// Full dynamical pipeline: response kernel, connecting operator and its
/// factorization.
pub fn krein_pipeline(q: &Potential, t: f64, points: usize) -> Result<(ResponseKernelS, ConnectingOpS, WaveKrein)> {
    let rk = response_kernel(q, t, points)?;
    let c = ConnectingOpS::build(&rk, t, points)?;
    let f = c.factor()?;
    Ok((rk, c, f))
}
