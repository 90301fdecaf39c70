//! System-agnostic De Branges machinery: the reproducing kernel generated by
//! a Hermite-Biehler function, the inverse construction of `E` from a
//! kernel, and the axiom diagnostics for the discrete polynomial spaces.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::discrete::{chebyshev_t, ConnectingMatrix, KreinFactor};
use crate::measures::SpectralMeasure;
use crate::{c64, Complex64, Error, Result};

/// Below this distance between `conj(z)` and `xi` the kernel formula switches
/// to its derivative limit.
pub const DIAGONAL_THRESHOLD: f64 = 1e-8;

type EntireFn = Arc<dyn Fn(Complex64) -> (Complex64, Complex64) + Send + Sync>;

/// An entire function evaluated together with its derivative.
#[derive(Clone)]
pub struct EntireEvaluator {
    label: String,
    f: EntireFn,
}

impl EntireEvaluator {
    pub fn new<F>(label: impl Into<String>, f: F) -> Self
    where
        F: Fn(Complex64) -> (Complex64, Complex64) + Send + Sync + 'static,
    {
        Self {
            label: label.into(),
            f: Arc::new(f),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `(E(z), E'(z))`.
    pub fn eval(&self, z: Complex64) -> (Complex64, Complex64) {
        (self.f)(z)
    }

    pub fn value(&self, z: Complex64) -> Complex64 {
        (self.f)(z).0
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        let inner = self.f.clone();
        Self::new(format!("{factor}*{}", self.label), move |z| {
            let (v, d) = inner(z);
            (v * factor, d * factor)
        })
    }
}

impl fmt::Debug for EntireEvaluator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EntireEvaluator({})", self.label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelProvenance {
    FromE,
    FromKrein,
    FromDirectSum,
}

type KernelFn = Arc<dyn Fn(Complex64, Complex64) -> Complex64 + Send + Sync>;

/// A reproducing kernel `(z, xi) -> J_z(xi)`.
#[derive(Clone)]
pub struct KernelEvaluator {
    provenance: KernelProvenance,
    f: KernelFn,
}

impl KernelEvaluator {
    pub fn new<F>(provenance: KernelProvenance, f: F) -> Self
    where
        F: Fn(Complex64, Complex64) -> Complex64 + Send + Sync + 'static,
    {
        Self {
            provenance,
            f: Arc::new(f),
        }
    }

    /// The kernel generated by `E` through [`kernel_from_e`].
    pub fn from_e(e: EntireEvaluator) -> Self {
        Self::new(KernelProvenance::FromE, move |z, xi| kernel_from_e(&e, z, xi))
    }

    pub fn provenance(&self) -> KernelProvenance {
        self.provenance
    }

    pub fn eval(&self, z: Complex64, xi: Complex64) -> Complex64 {
        (self.f)(z, xi)
    }

    /// `d/dxi J_z(xi)` from a Cauchy integral on a small circle; the kernel
    /// is entire in its second argument.
    pub fn derivative(&self, z: Complex64, xi: Complex64) -> Complex64 {
        cauchy_derivative(|w| self.eval(z, w), xi)
    }
}

impl fmt::Debug for KernelEvaluator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KernelEvaluator({:?})", self.provenance)
    }
}

fn cauchy_derivative<F: Fn(Complex64) -> Complex64>(f: F, at: Complex64) -> Complex64 {
    const NODES: usize = 32;
    let radius = 0.05 * (1.0 + at.norm());
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..NODES {
        let w = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / NODES as f64);
        acc += f(at + w * radius) / w;
    }
    acc / (NODES as f64 * radius)
}

/// `J_z(xi) = [conj(E(z)) E(xi) - E(conj z) conj(E(conj xi))] / (2i (conj z - xi))`.
///
/// Near `xi = conj z` the removable singularity is resolved with the
/// derivative supplied by the evaluator.
pub fn kernel_from_e(e: &EntireEvaluator, z: Complex64, xi: Complex64) -> Complex64 {
    let two_i = c64(0.0, 2.0);
    let zc = z.conj();
    let (ez, dez) = e.eval(z);
    let (ezc, dezc) = e.eval(zc);
    if (zc - xi).norm() < DIAGONAL_THRESHOLD {
        // limit xi -> conj z
        return (ez.conj() * dezc - ezc * dez.conj()) / (-two_i);
    }
    let exi = e.value(xi);
    let exic = e.value(xi.conj());
    (ez.conj() * exi - ezc * exic.conj()) / (two_i * (zc - xi))
}

/// Outcome of a Hermite-Biehler grid test.
#[derive(Debug, Clone, Serialize)]
pub struct HbReport {
    pub label: String,
    pub points: usize,
    /// `min |E(z)|^2 - |E(conj z)|^2` over the grid.
    pub min_gap: f64,
    /// `min J_z(z)` over the grid.
    pub min_diagonal: f64,
    pub pass: bool,
}

/// Check `|E(z)| > |E(conj z)|` and `J_z(z) > 0` on points of the open upper
/// half-plane.
pub fn hb_check(e: &EntireEvaluator, grid: &[Complex64]) -> Result<HbReport> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty Hermite-Biehler grid".into()));
    }
    if let Some(z) = grid.iter().find(|z| !(z.im > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "grid point {z} is not in the upper half-plane"
        )));
    }
    let mut min_gap = f64::INFINITY;
    let mut min_diagonal = f64::INFINITY;
    for &z in grid {
        let gap = e.value(z).norm_sqr() - e.value(z.conj()).norm_sqr();
        let diag = kernel_from_e(e, z, z);
        if !gap.is_finite() || !diag.re.is_finite() {
            return Err(Error::NonFinite("entire function evaluation"));
        }
        min_gap = min_gap.min(gap);
        min_diagonal = min_diagonal.min(diag.re);
    }
    Ok(HbReport {
        label: e.label().to_string(),
        points: grid.len(),
        min_gap,
        min_diagonal,
        pass: min_gap > 0.0 && min_diagonal > 0.0,
    })
}

/// `nx x ny` grid over `[x_lo, x_hi] x (y_lo, y_hi]`, the lower edge
/// excluded.
pub fn upper_half_plane_grid(
    (x_lo, x_hi): (f64, f64),
    (y_lo, y_hi): (f64, f64),
    nx: usize,
    ny: usize,
) -> Vec<Complex64> {
    let mut pts = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        let x = if nx == 1 {
            0.5 * (x_lo + x_hi)
        } else {
            x_lo + (x_hi - x_lo) * i as f64 / (nx - 1) as f64
        };
        for j in 1..=ny {
            let y = y_lo + (y_hi - y_lo) * j as f64 / ny as f64;
            pts.push(c64(x, y));
        }
    }
    pts
}

/// The 10 x 10 grid over `[-5, 5] x (0.1, 5]` used for all system checks.
pub fn standard_grid() -> Vec<Complex64> {
    upper_half_plane_grid((-5.0, 5.0), (0.1, 5.0), 10, 10)
}

/// Recover a Hermite-Biehler function from a reproducing kernel.
///
/// The candidate `sqrt(pi) (1 - iz) K(i, z) / sqrt(K(i, i))` reproduces the
/// kernel only up to a positive constant under the measure inner product;
/// the constant is fixed at `z0 = i` and returned alongside `E`.
pub fn e_from_kernel(k: &KernelEvaluator) -> Result<(EntireEvaluator, f64)> {
    let i = c64(0.0, 1.0);
    let kii = k.eval(i, i);
    if !kii.re.is_finite() {
        return Err(Error::NonFinite("kernel at i"));
    }
    if !(kii.re > 0.0) {
        return Err(Error::InvalidInput(format!(
            "K(i, i) = {kii} is not positive"
        )));
    }
    let norm = (std::f64::consts::PI / kii.re).sqrt();
    let kernel = k.clone();
    let candidate = EntireEvaluator::new("E from kernel", move |z| {
        let kz = kernel.eval(i, z);
        let dkz = kernel.derivative(i, z);
        let lin = Complex64::new(1.0, 0.0) - i * z;
        (lin * kz * norm, (lin * dkz - i * kz) * norm)
    });
    let regenerated = kernel_from_e(&candidate, i, i);
    let c = kii.re / regenerated.re;
    if !c.is_finite() || c <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "calibration constant {c} is not positive; not a reproducing kernel"
        )));
    }
    Ok((candidate.scaled(Complex64::new(c.sqrt(), 0.0)), c))
}

/// Result of the axiom diagnostics for the discrete space span{T_1..T_T}.
#[derive(Debug, Clone, Serialize)]
pub struct AxiomReport {
    pub samples: usize,
    /// max over samples of `|F(w)| / (sqrt(K(w,w)) ||F||)`; at most 1.
    pub max_evaluation_ratio: f64,
    /// max relative deviation `| ||F#|| - ||F|| | / ||F||`.
    pub max_conjugation_defect: f64,
    /// max relative deviation of the Blaschke-modified norm.
    pub max_blaschke_defect: f64,
    pub pass: bool,
}

/// Tolerance for the norm identities in [`axioms_check_discrete`].
pub const AXIOM_TOL: f64 = 1e-10;

/// Verify the De Branges axioms on random elements of the discrete space.
///
/// Each sample is a control `f` of length `T`, giving
/// `F(lambda) = sum_k T_k(lambda) f_{T-k}`. The Blaschke check uses
/// `F_w = (lambda - w) P` with `P` built from the first `T - 1` entries, so
/// `F_w` has the zero `w` by construction. Norms are taken against `measure`
/// (which must come from a truncation `N > T`), the evaluation bound uses the
/// Krein kernel built from the same measure.
pub fn axioms_check_discrete(
    t: usize,
    measure: &SpectralMeasure,
    samples: &[Vec<Complex64>],
    omega: Complex64,
) -> Result<AxiomReport> {
    if t == 0 {
        return Err(Error::InvalidInput("T must be at least 1".into()));
    }
    let c = ConnectingMatrix::from_measure(measure, t)?;
    let factor = KreinFactor::new(&c)?;
    let k_ww = factor.kernel(omega, omega).re;

    let norm = |g: &dyn Fn(Complex64) -> Complex64| -> f64 {
        measure
            .integrate(|x| g(c64(x, 0.0)).norm_sqr())
            .sqrt()
    };
    let poly = |f: &[Complex64], lambda: Complex64| -> Complex64 {
        let n = f.len();
        (1..=n).map(|k| chebyshev_t(k, lambda) * f[n - k]).sum()
    };

    let mut max_ratio: f64 = 0.0;
    let mut max_conj: f64 = 0.0;
    let mut max_blaschke: f64 = 0.0;
    for f in samples {
        if f.len() != t {
            return Err(Error::LengthMismatch {
                expected: t,
                actual: f.len(),
            });
        }
        let nf = norm(&|l| poly(f, l));
        if nf > 0.0 {
            let ratio = poly(f, omega).norm() / (k_ww.sqrt() * nf);
            max_ratio = max_ratio.max(ratio);
            let nsharp = norm(&|l| poly(f, l.conj()).conj());
            max_conj = max_conj.max((nsharp - nf).abs() / nf);
        }
        if t >= 2 {
            let p = &f[1..];
            let fw = |l: Complex64| (l - omega) * poly(p, l);
            let gw = |l: Complex64| (l - omega.conj()) * poly(p, l);
            let n_f = norm(&fw);
            if n_f > 0.0 {
                let n_g = norm(&gw);
                max_blaschke = max_blaschke.max((n_g - n_f).abs() / n_f);
            }
        }
    }
    Ok(AxiomReport {
        samples: samples.len(),
        max_evaluation_ratio: max_ratio,
        max_conjugation_defect: max_conj,
        max_blaschke_defect: max_blaschke,
        pass: max_ratio <= 1.0 + AXIOM_TOL && max_conj <= AXIOM_TOL && max_blaschke <= AXIOM_TOL,
    })
}
