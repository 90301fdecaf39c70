//! The Dirac system with `V = [[0, q], [q, 0]]` and `q(0) = 0` sits inside
//! the Schrodinger picture with `Q = q' + q^2`.
//!
//! Each check here runs both pipelines independently and reports how far
//! apart they land. Nothing is asserted; the numbers go into a
//! [`BridgeReport`].

use serde::Serialize;

use crate::dirac::{self, ExtendedControl, MatrixPotential};
use crate::grid::{Potential, UniformGrid};
use crate::measures::{dirac_truncated_measure, schrodinger_truncated_measure};
use crate::wave;
use crate::{c64, Complex64, Error, Result};

/// Largest accepted `|q(0)|`.
pub const Q0_TOL: f64 = 1e-10;

/// Response relation passes when the error is below `RESPONSE_CONST * h * (1 + max|r_S|)`.
pub const RESPONSE_CONST: f64 = 0.1;

/// Isometry passes when the relative error is below `ISOMETRY_CONST * h`.
pub const ISOMETRY_CONST: f64 = 0.1;

/// Measure relation passes when the relative cumulative error is below
/// `MEASURE_CONST * lambda_max * h^2`, the size of the eigenvalue error of
/// the three-point stencil.
pub const MEASURE_CONST: f64 = 2.0;

/// Minimal decay factor accepted as first order between two levels that
/// halve the step.
pub const FIRST_ORDER_RATIO: f64 = 1.5;

/// `Q = q' + q^2` sampled on `grid`, with `q'` from centered differences
/// and second-order one-sided differences at the ends.
pub fn schrodinger_potential(q: &Potential, grid: UniformGrid) -> Result<Potential> {
    let q0 = q.at(0.0);
    if q0.abs() > Q0_TOL {
        return Err(Error::InvalidInput(format!(
            "the Dirac potential must vanish at the boundary, got q(0) = {q0:e}"
        )));
    }
    let h = grid.step();
    let vals: Vec<f64> = grid.nodes().iter().map(|&x| q.at(x)).collect();
    let n = vals.len();
    let big: Vec<f64> = (0..n)
        .map(|k| {
            let dq = if k == 0 {
                (-3.0 * vals[0] + 4.0 * vals[1] - vals[2]) / (2.0 * h)
            } else if k == n - 1 {
                (3.0 * vals[k] - 4.0 * vals[k - 1] + vals[k - 2]) / (2.0 * h)
            } else {
                (vals[k + 1] - vals[k - 1]) / (2.0 * h)
            };
            dq + vals[k] * vals[k]
        })
        .collect();
    Potential::from_samples(h, big)
}

/// Sampling grid for `Q` covering everything the wave solver touches on
/// the horizon `T`.
fn potential_grid(t: f64, points: usize) -> Result<UniformGrid> {
    let step = t / (points - 1) as f64;
    let cells = 4 * (points - 1) + 8;
    UniformGrid::new(step * 0.5 * cells as f64, cells + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PotentialMapReport {
    pub q0: f64,
    pub step: f64,
    /// `max |Q_h - Q_{h/2}|` on the shared nodes, an estimate of the
    /// differencing error.
    pub max_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Maps `q` on `[0, length]` at two resolutions and compares them.
pub fn potential_map_check(q: &Potential, length: f64, points: usize) -> Result<PotentialMapReport> {
    let coarse_grid = UniformGrid::new(length, points)?;
    let fine_grid = UniformGrid::new(length, 2 * points - 1)?;
    let coarse = schrodinger_potential(q, coarse_grid)?;
    let fine = schrodinger_potential(q, fine_grid)?;
    let nodes = coarse_grid.nodes();
    let max_error = nodes
        .iter()
        .map(|&x| (coarse.at(x) - fine.at(x)).abs())
        .fold(0.0, f64::max);
    let scale = nodes.iter().map(|&x| coarse.at(x).abs()).fold(1.0, f64::max);
    let h = coarse_grid.step();
    let tolerance = h * h * scale;
    Ok(PotentialMapReport {
        q0: q.at(0.0),
        step: h,
        max_error,
        tolerance,
        pass: max_error <= tolerance,
    })
}

/// One refinement level of a report-valued check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Level {
    pub points: usize,
    pub step: f64,
    pub error: f64,
}

/// Errors at each level and the decay between successive ones.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementReport {
    pub levels: Vec<Level>,
    pub ratios: Vec<f64>,
    pub max_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn decay_ratios(levels: &[Level]) -> Vec<f64> {
    levels
        .windows(2)
        .map(|w| {
            if w[1].error == 0.0 {
                if w[0].error == 0.0 {
                    f64::INFINITY
                } else {
                    f64::MAX
                }
            } else {
                w[0].error / w[1].error
            }
        })
        .collect()
}

/// An error of exactly zero at every level passes without a ratio.
fn refinement_pass(levels: &[Level], ratios: &[f64], tolerance: f64) -> bool {
    let last = levels.last().map_or(0.0, |l| l.error);
    let decays = ratios.iter().all(|&r| r >= FIRST_ORDER_RATIO);
    last <= tolerance && (decays || levels.iter().all(|l| l.error == 0.0))
}

/// `max_t |r_S(t) - i r_D'(t)|` over `(0, 2T)` at one resolution, together
/// with `max |r_S|`.
pub fn response_relation_error(q: &Potential, t: f64, points: usize) -> Result<(f64, f64)> {
    let big = schrodinger_potential(q, potential_grid(t, points)?)?;
    let rs = wave::response_kernel(&big, t, points)?;
    let rd = dirac::response_kernel_dirac(&MatrixPotential::off_diagonal(q.clone()), t, points)?;
    let h = rd.step;
    let n = rd.r.len().min(rs.r().len());
    let i = c64(0.0, 1.0);
    let mut err: f64 = 0.0;
    for k in 1..n - 1 {
        let d = (rd.r[k + 1] - rd.r[k - 1]) / (2.0 * h);
        err = err.max((c64(rs.r()[k], 0.0) - i * d).norm());
    }
    let scale = rs.r().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok((err, scale))
}

/// Response relation at each grid in `points` (coarse to fine).
pub fn response_relation_check(q: &Potential, t: f64, points: &[usize]) -> Result<RefinementReport> {
    if points.is_empty() {
        return Err(Error::InvalidInput("no refinement levels given".into()));
    }
    let mut levels = Vec::with_capacity(points.len());
    let mut scale = 0.0f64;
    for &m in points {
        let (error, s) = response_relation_error(q, t, m)?;
        scale = scale.max(s);
        levels.push(Level {
            points: m,
            step: t / (m - 1) as f64,
            error,
        });
    }
    let ratios = decay_ratios(&levels);
    let h = levels.last().map_or(0.0, |l| l.step);
    let tolerance = RESPONSE_CONST * h * (1.0 + scale);
    Ok(RefinementReport {
        pass: refinement_pass(&levels, &ratios, tolerance),
        max_error: levels.last().map_or(0.0, |l| l.error),
        levels,
        ratios,
        tolerance,
    })
}

/// `(LHS, RHS)` with `LHS = 1/4 (C_D (f, f), (f, f))` and `RHS = (C_S f, f)`.
pub fn isometry_sides(q: &Potential, f: &[f64], t: f64) -> Result<(f64, f64)> {
    let points = f.len();
    let big = schrodinger_potential(q, potential_grid(t, points)?)?;
    let rs = wave::response_kernel(&big, t, points)?;
    let cs = wave::ConnectingOpS::build(&rs, t, points)?;
    let rd = dirac::response_kernel_dirac(&MatrixPotential::off_diagonal(q.clone()), t, points)?;
    let cd = dirac::ConnectingOpD::build(&rd, t, points)?;
    let fc: Vec<Complex64> = f.iter().map(|&v| c64(v, 0.0)).collect();
    let ec = ExtendedControl::new(fc.clone(), fc.clone())?;
    let lhs = cd.form(&ec, &ec) * 0.25;
    let rhs = cs.form(&fc, &fc);
    Ok((lhs.re, rhs.re))
}

fn relative(lhs: f64, rhs: f64) -> f64 {
    let diff = (lhs - rhs).abs();
    if diff == 0.0 {
        0.0
    } else {
        diff / rhs.abs().max(f64::MIN_POSITIVE)
    }
}

/// Isometry at each grid in `points` for the control `f` given as a
/// function on `[0, T]`.
pub fn embedding_isometry_check<F>(q: &Potential, f: F, t: f64, points: &[usize]) -> Result<RefinementReport>
where
    F: Fn(f64) -> f64,
{
    if points.is_empty() {
        return Err(Error::InvalidInput("no refinement levels given".into()));
    }
    let mut levels = Vec::with_capacity(points.len());
    for &m in points {
        let grid = UniformGrid::new(t, m)?;
        let samples: Vec<f64> = grid.nodes().iter().map(|&s| f(s)).collect();
        let (lhs, rhs) = isometry_sides(q, &samples, t)?;
        levels.push(Level {
            points: m,
            step: grid.step(),
            error: relative(lhs, rhs),
        });
    }
    let ratios = decay_ratios(&levels);
    let tolerance = ISOMETRY_CONST * levels.last().map_or(0.0, |l| l.step);
    Ok(RefinementReport {
        pass: refinement_pass(&levels, &ratios, tolerance),
        max_error: levels.last().map_or(0.0, |l| l.error),
        levels,
        ratios,
        tolerance,
    })
}

/// The function generated by `-1/2 (f, f)` is `alpha * F_S(alpha^2)` where
/// `F_S` is the Schrodinger image of `f`; returns the largest relative gap
/// over `alphas`.
pub fn embedded_function_error(f: &[f64], t: f64, alphas: &[f64]) -> Result<f64> {
    let grid = UniformGrid::new(t, f.len())?;
    let half: Vec<Complex64> = f.iter().map(|&v| c64(-0.5 * v, 0.0)).collect();
    let ec = ExtendedControl::new(half.clone(), half)?;
    let fc: Vec<Complex64> = f.iter().map(|&v| c64(v, 0.0)).collect();
    let mut worst: f64 = 0.0;
    for &a in alphas {
        let dirac_side = dirac::fourier_of_control(&ec, c64(a, 0.0), grid);
        let schr_side = wave::fourier_of_control(&fc, c64(a * a, 0.0), grid) * a;
        let scale = schr_side.norm().max(1.0);
        worst = worst.max((dirac_side - schr_side).norm() / scale);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureRelationReport {
    #[serde(rename = "N")]
    pub truncation: f64,
    pub points: usize,
    pub thresholds: Vec<f64>,
    /// `rho_S(lambda_j)`.
    pub schrodinger: Vec<f64>,
    /// `int_{|alpha| <= sqrt(lambda_j)} alpha^2 d rho_D`.
    pub dirac_symmetric: Vec<f64>,
    /// `int_{0 < alpha <= sqrt(lambda_j)} alpha^2 d rho_D`.
    pub dirac_literal: Vec<f64>,
    /// Mean of `dirac_literal / schrodinger` over thresholds with mass.
    pub literal_ratio: f64,
    /// Largest relative gap between `schrodinger` and `dirac_symmetric`.
    pub max_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Cumulative comparison of the truncated measures on `(0, N)` with `m`
/// nodes, at thresholds between consecutive Schrodinger eigenvalues up to
/// `window`.
pub fn measure_relation_check(q: &Potential, n: f64, m: usize, window: f64) -> Result<MeasureRelationReport> {
    let grid = UniformGrid::new(n, m)?;
    let big = schrodinger_potential(q, grid)?;
    let ms = schrodinger_truncated_measure(&big, n, m)?;
    let md = dirac_truncated_measure(&MatrixPotential::off_diagonal(q.clone()), n, m)?;
    let nodes: Vec<f64> = ms.nodes().collect();
    let mut thresholds = Vec::new();
    if let Some(&first) = nodes.first() {
        if first > 0.0 {
            thresholds.push(0.5 * first);
        }
    }
    for w in nodes.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        if mid > window {
            break;
        }
        if mid > 0.0 {
            thresholds.push(mid);
        }
    }
    let dirac_mass = |lam: f64, symmetric: bool| -> f64 {
        let r = lam.sqrt();
        md.atoms()
            .iter()
            .filter(|a| a.0 <= r && if symmetric { a.0 >= -r } else { a.0 > 0.0 })
            .map(|a| a.0 * a.0 * a.1)
            .sum()
    };
    let schrodinger: Vec<f64> = thresholds.iter().map(|&l| ms.mass_between(f64::NEG_INFINITY, l)).collect();
    let dirac_symmetric: Vec<f64> = thresholds.iter().map(|&l| dirac_mass(l, true)).collect();
    let dirac_literal: Vec<f64> = thresholds.iter().map(|&l| dirac_mass(l, false)).collect();
    // masses below this floor count as empty
    let floor = 1e-12 * schrodinger.iter().fold(1.0f64, |m, &s| m.max(s));
    let max_error = schrodinger
        .iter()
        .zip(&dirac_symmetric)
        .map(|(&s, &d)| (d - s).abs() / s.abs().max(floor))
        .fold(0.0, f64::max);
    let with_mass: Vec<f64> = schrodinger
        .iter()
        .zip(&dirac_literal)
        .filter(|(&s, _)| s > floor)
        .map(|(&s, &d)| d / s)
        .collect();
    let literal_ratio = if with_mass.is_empty() {
        0.0
    } else {
        with_mass.iter().sum::<f64>() / with_mass.len() as f64
    };
    let lam_max = thresholds.last().copied().unwrap_or(0.0);
    let h = grid.step();
    let tolerance = MEASURE_CONST * lam_max.max(1.0) * h * h;
    Ok(MeasureRelationReport {
        truncation: n,
        points: m,
        thresholds,
        schrodinger,
        dirac_symmetric,
        dirac_literal,
        literal_ratio,
        pass: max_error <= tolerance,
        max_error,
        tolerance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsometryReport {
    #[serde(flatten)]
    pub refinement: RefinementReport,
    /// Relative gap between the embedded Dirac function and
    /// `alpha F_S(alpha^2)`.
    pub embedded_max_error: f64,
}

/// The four bridge diagnostics for one `q`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BridgeReport {
    pub potential_map: PotentialMapReport,
    pub response_relation: RefinementReport,
    pub measure_relation: MeasureRelationReport,
    pub isometry: IsometryReport,
}

impl BridgeReport {
    pub fn pass(&self) -> bool {
        self.potential_map.pass
            && self.response_relation.pass
            && self.measure_relation.pass
            && self.isometry.refinement.pass
            && self.isometry.embedded_max_error <= EMBEDDED_TOL
    }
}

/// Agreement required between the two images of an embedded control; both
/// sides use the same quadrature so only rounding separates them.
pub const EMBEDDED_TOL: f64 = 1e-10;

/// Resolution settings for [`bridge_report`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BridgeSettings {
    pub horizon: f64,
    pub levels: Vec<usize>,
    pub measure_truncation: f64,
    pub measure_points: usize,
    pub measure_window: f64,
}

impl Default for BridgeSettings {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            levels: vec![101, 201],
            measure_truncation: 20.0,
            measure_points: 801,
            measure_window: 25.0,
        }
    }
}

/// The bump `sin^2(pi s / T)` used as the test control.
pub fn default_control(t: f64) -> impl Fn(f64) -> f64 {
    move |s: f64| (std::f64::consts::PI * s / t).sin().powi(2)
}

pub fn bridge_report(q: &Potential, settings: &BridgeSettings) -> Result<BridgeReport> {
    let t = settings.horizon;
    let finest = *settings
        .levels
        .iter()
        .max()
        .ok_or_else(|| Error::InvalidInput("no refinement levels given".into()))?;
    let potential_map = potential_map_check(q, t, finest)?;
    let response_relation = response_relation_check(q, t, &settings.levels)?;
    let measure_relation = measure_relation_check(
        q,
        settings.measure_truncation,
        settings.measure_points,
        settings.measure_window,
    )?;
    let f = default_control(t);
    let refinement = embedding_isometry_check(q, &f, t, &settings.levels)?;
    let grid = UniformGrid::new(t, finest)?;
    let samples: Vec<f64> = grid.nodes().iter().map(|&s| f(s)).collect();
    let alphas: Vec<f64> = (0..=20).map(|k| -5.0 + 0.5 * k as f64).collect();
    let embedded_max_error = embedded_function_error(&samples, t, &alphas)?;
    Ok(BridgeReport {
        potential_map,
        response_relation,
        measure_relation,
        isometry: IsometryReport {
            refinement,
            embedded_max_error,
        },
    })
}
