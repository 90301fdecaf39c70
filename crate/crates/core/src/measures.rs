//! Truncated spectral measures.
//!
//! Each system is cut off at `N` with a Dirichlet condition there, which
//! turns the spectral measure into a finite sum of point masses. For
//! quantities that only see the dynamics up to time `T < N` the truncated
//! measure can replace the true one.

use serde::{Deserialize, Serialize};

use crate::dirac::MatrixPotential;
use crate::discrete::{chebyshev_t, PotentialSeq};
use crate::grid::Potential;
use crate::tridiag;
use crate::{Complex64, Error, Result};

/// Relative tolerance under which two eigenvalues are merged.
const MERGE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemTag {
    Discrete,
    Schrodinger,
    Dirac,
}

/// Finite atomic measure: strictly increasing nodes, positive weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralMeasure {
    atoms: Vec<(f64, f64)>,
    system: SystemTag,
    #[serde(rename = "N")]
    truncation: f64,
}

impl SpectralMeasure {
    /// Build from unsorted `(node, weight)` pairs; sorts, merges near-equal
    /// nodes and rejects non-positive weights.
    pub fn new(mut atoms: Vec<(f64, f64)>, system: SystemTag, truncation: f64) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidInput("measure without atoms".into()));
        }
        if atoms.iter().any(|(x, w)| !x.is_finite() || !w.is_finite()) {
            return Err(Error::NonFinite("measure atoms"));
        }
        if let Some((x, w)) = atoms.iter().find(|(_, w)| *w <= 0.0) {
            return Err(Error::InvalidInput(format!(
                "non-positive weight {w} at node {x}"
            )));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (x, w) in atoms {
            match merged.last_mut() {
                Some(last) if (x - last.0).abs() <= MERGE_TOL * x.abs().max(last.0.abs()).max(1.0) => {
                    last.1 += w;
                }
                _ => merged.push((x, w)),
            }
        }
        Ok(Self {
            atoms: merged,
            system,
            truncation,
        })
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        self.atoms.iter().map(|a| a.0)
    }

    pub fn system(&self) -> SystemTag {
        self.system
    }

    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    /// `sum_k w_k g(lambda_k)`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, g: F) -> f64 {
        self.atoms.iter().map(|&(x, w)| w * g(x)).sum()
    }

    pub fn integrate_complex<F: Fn(f64) -> Complex64>(&self, g: F) -> Complex64 {
        self.atoms.iter().map(|&(x, w)| g(x) * w).sum()
    }

    /// Cumulative mass of atoms with `lo < node <= hi`.
    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        self.atoms
            .iter()
            .filter(|a| a.0 > lo && a.0 <= hi)
            .map(|a| a.1)
            .sum()
    }
}

/// Measure of the `N x N` Jacobi matrix with diagonal `b_1..b_N` and unit
/// off-diagonal (Dirichlet condition `phi_{N+1} = 0`).
pub fn jacobi_truncated_measure(b: &PotentialSeq, n: usize) -> Result<SpectralMeasure> {
    if n == 0 {
        return Err(Error::InvalidInput("truncation N must be at least 1".into()));
    }
    let diag: Vec<f64> = (1..=n).map(|k| b.get(k)).collect();
    let off = vec![1.0; n - 1];
    let ev = tridiag::eigen(&diag, &off, &[0])?;
    let mut atoms = Vec::with_capacity(n);
    for (k, &lambda) in ev.values.iter().enumerate() {
        let w = ev.rows[0][k].powi(2);
        if w <= 0.0 {
            return Err(Error::InconsistentData(format!(
                "eigenvector for {lambda} has vanishing first component"
            )));
        }
        atoms.push((lambda, w));
    }
    SpectralMeasure::new(atoms, SystemTag::Discrete, n as f64)
}

/// Measure of `-phi'' + q phi` on `(0, N)` with `phi(0) = phi(N) = 0`,
/// discretized by the three-point stencil on `m` nodes. Weights normalize
/// the eigenfunctions to `phi'(0) = 1`.
pub fn schrodinger_truncated_measure(q: &Potential, n: f64, m: usize) -> Result<SpectralMeasure> {
    if m < 3 {
        return Err(Error::InvalidInput(format!("need at least 3 grid points, got {m}")));
    }
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::InvalidInput(format!("truncation must be positive, got {n}")));
    }
    let h = n / (m - 1) as f64;
    let inv_h2 = 1.0 / (h * h);
    let diag: Vec<f64> = (1..m - 1).map(|i| 2.0 * inv_h2 + q.at(i as f64 * h)).collect();
    if diag.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("potential samples"));
    }
    let off = vec![-inv_h2; m - 3];
    let ev = tridiag::eigen(&diag, &off, &[0])?;
    let scale = 1.0 / (h * h * h);
    let atoms = ev
        .values
        .iter()
        .zip(&ev.rows[0])
        .map(|(&lambda, &v1)| (lambda, v1 * v1 * scale))
        .filter(|a| a.1 > 0.0)
        .collect();
    SpectralMeasure::new(atoms, SystemTag::Schrodinger, n)
}

/// Measure of `J U' + V U = z U` on `(0, N)` with `U_1(0) = U_1(N) = 0`.
///
/// Staggered grid: `U_1` at integer nodes, `U_2` at half nodes, interleaved
/// so the matrix is tridiagonal. Weights normalize `theta_2 = 1` at the
/// first half node, the same point where the three-point Schrodinger
/// measure reads `phi'(0)`; the square of the free staggered operator is
/// then exactly the three-point Laplacian, weights included.
pub fn dirac_truncated_measure(v: &MatrixPotential, n: f64, m: usize) -> Result<SpectralMeasure> {
    if m < 3 {
        return Err(Error::InvalidInput(format!("need at least 3 grid points, got {m}")));
    }
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::InvalidInput(format!("truncation must be positive, got {n}")));
    }
    let h = n / (m - 1) as f64;
    let size = 2 * m - 3;
    // position 2j -> U_2 at (j + 1/2) h, position 2i - 1 -> U_1 at i h
    let mut diag = Vec::with_capacity(size);
    for pos in 0..size {
        if pos % 2 == 0 {
            let x = (pos / 2) as f64 * h + 0.5 * h;
            diag.push(-v.p.at(x));
        } else {
            let x = (pos / 2 + 1) as f64 * h;
            diag.push(v.p.at(x));
        }
    }
    let mut off = Vec::with_capacity(size - 1);
    for pos in 0..size - 1 {
        if pos % 2 == 0 {
            // U_2 at (j + 1/2) h with U_1 at (j + 1) h
            let j = pos / 2;
            let mid = (j as f64 + 0.75) * h;
            off.push(-1.0 / h + 0.5 * v.q.at(mid));
        } else {
            // U_1 at i h with U_2 at (i + 1/2) h
            let i = pos / 2 + 1;
            let mid = (i as f64 + 0.25) * h;
            off.push(1.0 / h + 0.5 * v.q.at(mid));
        }
    }
    if diag.iter().chain(&off).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("matrix potential samples"));
    }
    let ev = tridiag::eigen(&diag, &off, &[0, 2])?;
    let atoms = ev
        .values
        .iter()
        .enumerate()
        .map(|(k, &z)| {
            let theta2_first = ev.rows[0][k];
            (z, theta2_first * theta2_first / h)
        })
        .filter(|a| a.1 > 0.0)
        .collect();
    SpectralMeasure::new(atoms, SystemTag::Dirac, n)
}

/// `sum_k w_k conj(F(lambda_k)) G(lambda_k)`.
pub fn measure_inner_product(
    m: &SpectralMeasure,
    f: &[Complex64],
    g: &[Complex64],
) -> Result<Complex64> {
    if f.len() != m.len() {
        return Err(Error::LengthMismatch {
            expected: m.len(),
            actual: f.len(),
        });
    }
    if g.len() != m.len() {
        return Err(Error::LengthMismatch {
            expected: m.len(),
            actual: g.len(),
        });
    }
    Ok(m
        .atoms
        .iter()
        .zip(f.iter().zip(g))
        .map(|(&(_, w), (fv, gv))| fv.conj() * gv * w)
        .sum())
}

/// `r_{k-1} = int T_k d rho`.
pub fn response_from_measure(m: &SpectralMeasure, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidInput("response index k must be at least 1".into()));
    }
    Ok(m.integrate(|x| chebyshev_t(k, Complex64::new(x, 0.0)).re))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete::phi_values;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seq(b: &[f64]) -> PotentialSeq {
        PotentialSeq::new(b.to_vec()).unwrap()
    }

    #[test]
    fn free_two_site_measure() {
        let m = jacobi_truncated_measure(&seq(&[0.0, 0.0]), 2).unwrap();
        let a = m.atoms();
        assert_eq!(a.len(), 2);
        assert!((a[0].0 + 1.0).abs() < 1e-14 && (a[0].1 - 0.5).abs() < 1e-14);
        assert!((a[1].0 - 1.0).abs() < 1e-14 && (a[1].1 - 0.5).abs() < 1e-14);
    }

    #[test]
    fn single_site_measure() {
        let m = jacobi_truncated_measure(&seq(&[0.0]), 1).unwrap();
        assert_eq!(m.atoms(), &[(0.0, 1.0)]);
    }

    #[test]
    fn moments_match_matrix_powers() {
        let b = [0.3, -0.2];
        let m = jacobi_truncated_measure(&seq(&b), 2).unwrap();
        let h = DMatrix::from_row_slice(2, 2, &[0.3, 1.0, 1.0, -0.2]);
        let mut power = DMatrix::<f64>::identity(2, 2);
        for k in 0..3 {
            let moment = m.integrate(|x| x.powi(k));
            assert!((moment - power[(0, 0)]).abs() < 1e-13, "moment {k}");
            power = &power * &h;
        }
        assert!((m.integrate(|x| x) - 0.3).abs() < 1e-14);
    }

    #[test]
    fn jacobi_parseval_on_random_sequences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 9;
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let pot = seq(&b);
        let m = jacobi_truncated_measure(&pot, n).unwrap();
        for _ in 0..10 {
            let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lhs: f64 = u.iter().map(|x| x * x).sum();
            let rhs = m.integrate(|lambda| {
                let phi = phi_values(&pot, n, Complex64::new(lambda, 0.0));
                let fu: f64 = (1..=n).map(|k| u[k - 1] * phi[k].re).sum();
                fu * fu
            });
            assert!((lhs - rhs).abs() <= 1e-10 * lhs, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn jacobi_rejects_zero_truncation() {
        assert!(jacobi_truncated_measure(&seq(&[]), 0).is_err());
    }

    #[test]
    fn response_moments() {
        let m = jacobi_truncated_measure(&seq(&[0.0, 0.0]), 2).unwrap();
        assert!((response_from_measure(&m, 1).unwrap() - 1.0).abs() < 1e-14);
        assert!(response_from_measure(&m, 2).unwrap().abs() < 1e-14);
        let b = [0.37, -0.5, 0.2, 0.9];
        let m = jacobi_truncated_measure(&seq(&b), 4).unwrap();
        assert!((response_from_measure(&m, 2).unwrap() - 0.37).abs() < 1e-13);
        assert!(response_from_measure(&m, 0).is_err());
    }

    #[test]
    fn inner_product_examples() {
        let one = Complex64::new(1.0, 0.0);
        let m = SpectralMeasure::new(vec![(0.0, 1.0)], SystemTag::Discrete, 1.0).unwrap();
        assert_eq!(measure_inner_product(&m, &[one], &[one]).unwrap(), one);
        let m = jacobi_truncated_measure(&seq(&[0.0, 0.0]), 2).unwrap();
        let lam: Vec<Complex64> = m.nodes().map(|x| Complex64::new(x, 0.0)).collect();
        let v = measure_inner_product(&m, &lam, &lam).unwrap();
        assert!((v - one).norm() < 1e-14);
        assert!(measure_inner_product(&m, &lam, &[one]).is_err());
    }

    #[test]
    fn construction_merges_and_validates() {
        let m = SpectralMeasure::new(
            vec![(1.0, 0.25), (-1.0, 0.5), (1.0 + 1e-14, 0.25)],
            SystemTag::Discrete,
            2.0,
        )
        .unwrap();
        assert_eq!(m.len(), 2);
        assert!((m.atoms()[1].1 - 0.5).abs() < 1e-15);
        assert!(SpectralMeasure::new(vec![(0.0, 0.0)], SystemTag::Discrete, 1.0).is_err());
        assert!(SpectralMeasure::new(vec![], SystemTag::Discrete, 1.0).is_err());
    }

    #[test]
    fn measure_json_layout() {
        let m = jacobi_truncated_measure(&seq(&[0.0]), 1).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(json, r#"{"atoms":[[0.0,1.0]],"system":"discrete","N":1.0}"#);
    }

    #[test]
    fn free_schrodinger_lowest_node() {
        let m = schrodinger_truncated_measure(&Potential::zero(), std::f64::consts::PI, 801).unwrap();
        let first = m.atoms()[0].0;
        assert!((first - 1.0).abs() < 1e-5, "{first}");
        assert!(m.atoms().iter().all(|a| a.1 > 0.0));
    }

    #[test]
    fn free_schrodinger_weak_limit() {
        // int e^{-l} sqrt(l)/pi dl = 1/(2 sqrt(pi))
        let exact = 0.5 / std::f64::consts::PI.sqrt();
        let m = schrodinger_truncated_measure(&Potential::zero(), 40.0, 4001).unwrap();
        let approx = m.integrate(|x| (-x).exp());
        assert!((approx - exact).abs() < 2e-3 * exact, "{approx} vs {exact}");
    }

    #[test]
    fn schrodinger_rejects_small_grids() {
        assert!(schrodinger_truncated_measure(&Potential::zero(), 1.0, 2).is_err());
    }

    #[test]
    fn free_dirac_nodes_and_symmetry() {
        let v = MatrixPotential::zero();
        let m = dirac_truncated_measure(&v, std::f64::consts::PI, 1201).unwrap();
        let atoms = m.atoms();
        let mid = atoms.len() / 2;
        assert!(atoms[mid].0.abs() < 1e-10);
        for k in 1..=3 {
            let node = atoms[mid + k].0;
            assert!((node - k as f64).abs() < 1e-4, "{node}");
            let mirror = atoms[mid - k];
            assert!((mirror.0 + node).abs() < 1e-10);
            assert!((mirror.1 - atoms[mid + k].1).abs() < 1e-10);
            // free weights are 1/N
            assert!((atoms[mid + k].1 - 1.0 / std::f64::consts::PI).abs() < 1e-4);
        }
        assert!(atoms.iter().all(|a| a.1 > 0.0));
    }
}
