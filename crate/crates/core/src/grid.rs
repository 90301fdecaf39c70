//! Uniform grids, trapezoid weights and sampled scalar potentials.

use std::fmt;
use std::sync::Arc;

use crate::{Error, Result};

/// Uniform grid on `[0, length]` with `points` nodes, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    length: f64,
    points: usize,
}

impl UniformGrid {
    pub fn new(length: f64, points: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidInput(format!(
                "grid length must be positive, got {length}"
            )));
        }
        if points < 2 {
            return Err(Error::InvalidInput(format!(
                "grid needs at least 2 points, got {points}"
            )));
        }
        Ok(Self { length, points })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn points(&self) -> usize {
        self.points
    }

    /// Number of intervals, `points - 1`.
    pub fn intervals(&self) -> usize {
        self.points - 1
    }

    pub fn step(&self) -> f64 {
        self.length / self.intervals() as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        if k == self.intervals() {
            self.length
        } else {
            k as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.points).map(|k| self.node(k)).collect()
    }

    /// Composite trapezoid weights: `h/2` at the ends, `h` inside.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let h = self.step();
        let mut w = vec![h; self.points];
        w[0] = 0.5 * h;
        w[self.points - 1] = 0.5 * h;
        w
    }

    /// The grid over `[0, factor * length]` with the same step.
    pub fn extended(&self, factor: usize) -> Self {
        Self {
            length: self.length * factor as f64,
            points: self.intervals() * factor + 1,
        }
    }
}

/// Trapezoid rule for samples at unit-spaced nodes scaled by `step`.
pub fn trapezoid<T>(values: &[T], step: f64) -> T
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Default,
{
    match values.len() {
        0 => T::default(),
        1 => T::default(),
        n => {
            let inner = values[1..n - 1]
                .iter()
                .fold(T::default(), |acc, &v| acc + v);
            (inner + (values[0] + values[n - 1]) * 0.5) * step
        }
    }
}

/// Composite Simpson rule; `values.len()` must be odd.
pub fn simpson<T>(values: &[T], step: f64) -> T
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Default,
{
    let n = values.len();
    debug_assert!(n % 2 == 1, "simpson needs an even number of intervals");
    if n < 3 {
        return T::default();
    }
    let mut acc = values[0] + values[n - 1];
    for (k, &v) in values.iter().enumerate().take(n - 1).skip(1) {
        acc = acc + v * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * (step / 3.0)
}

/// Running trapezoid integral, `out[k] = int_0^{k h} values`.
pub fn cumulative_trapezoid(values: &[f64], step: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for k in 0..values.len() {
        if k > 0 {
            acc += 0.5 * step * (values[k - 1] + values[k]);
        }
        out.push(acc);
    }
    out
}

/// Hat function samples on the grid nodes: 1 at `center`, falling linearly
/// to 0 at distance `half_width`.
pub fn hat_samples(grid: &UniformGrid, center: f64, half_width: f64) -> Vec<f64> {
    grid.nodes()
        .iter()
        .map(|&x| (1.0 - (x - center).abs() / half_width).max(0.0))
        .collect()
}

type ProfileFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Source {
    Analytic { label: String, f: ProfileFn },
    Samples { step: f64, values: Vec<f64> },
}

/// A real scalar potential on the half line.
///
/// Either an analytic profile or samples on a uniform grid starting at 0;
/// sampled potentials are linearly interpolated and zero-extended beyond the
/// last sample.
#[derive(Clone)]
pub struct Potential {
    source: Source,
}

impl Potential {
    pub fn zero() -> Self {
        Self::analytic("zero", |_| 0.0)
    }

    pub fn constant(c: f64) -> Self {
        Self::analytic(format!("{c}"), move |_| c)
    }

    /// `q(x) = slope * x`.
    pub fn linear(slope: f64) -> Self {
        Self::analytic(format!("{slope}*x"), move |x| slope * x)
    }

    /// `q(x) = amplitude * sin(x)`.
    pub fn sine(amplitude: f64) -> Self {
        Self::analytic(format!("{amplitude}*sin(x)"), move |x| amplitude * x.sin())
    }

    pub fn analytic<F>(label: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            source: Source::Analytic {
                label: label.into(),
                f: Arc::new(f),
            },
        }
    }

    /// Samples `values[k] = q(k * step)`.
    pub fn from_samples(step: f64, values: Vec<f64>) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::InvalidInput(format!(
                "sample step must be positive, got {step}"
            )));
        }
        if values.is_empty() {
            return Err(Error::InvalidInput("potential has no samples".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("potential samples"));
        }
        Ok(Self {
            source: Source::Samples { step, values },
        })
    }

    pub fn is_sampled(&self) -> bool {
        matches!(self.source, Source::Samples { .. })
    }

    pub fn at(&self, x: f64) -> f64 {
        match &self.source {
            Source::Analytic { f, .. } => f(x),
            Source::Samples { step, values } => {
                if x < 0.0 {
                    return values[0];
                }
                let s = x / step;
                let k = s.floor() as usize;
                if k + 1 >= values.len() {
                    if k + 1 == values.len() && (s - k as f64) < 1e-12 {
                        values[k]
                    } else {
                        0.0
                    }
                } else {
                    let frac = s - k as f64;
                    values[k] * (1.0 - frac) + values[k + 1] * frac
                }
            }
        }
    }

    /// Values at `k * step` for `k = 0..count`.
    pub fn sample(&self, step: f64, count: usize) -> Vec<f64> {
        (0..count).map(|k| self.at(k as f64 * step)).collect()
    }

    /// `int_0^x q`, exact for sampled potentials, composite Simpson otherwise.
    pub fn integral(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match &self.source {
            Source::Analytic { f, .. } => {
                let n = 2 * ((x * 256.0).ceil() as usize).max(16);
                let h = x / n as f64;
                let vals: Vec<f64> = (0..=n).map(|k| f(k as f64 * h)).collect();
                simpson(&vals, h)
            }
            Source::Samples { step, values } => {
                let end = x.min(step * (values.len() - 1) as f64);
                let full = (end / step).floor() as usize;
                let mut acc: f64 = (0..full)
                    .map(|k| 0.5 * step * (values[k] + values[k + 1]))
                    .sum();
                let rest = end - full as f64 * step;
                if rest > 0.0 {
                    acc += 0.5 * rest * (values[full] + self.at(end));
                }
                acc
            }
        }
    }
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.source {
            Source::Analytic { label, .. } => write!(f, "Potential({label})"),
            Source::Samples { step, values } => {
                write!(f, "Potential(samples: {} @ {step})", values.len())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_weights_sum_to_length() {
        let g = UniformGrid::new(2.5, 11).unwrap();
        let w = g.trapezoid_weights();
        assert!((w.iter().sum::<f64>() - 2.5).abs() < 1e-14);
        assert_eq!(w[0], 0.5 * g.step());
        assert_eq!(w[5], g.step());
        assert_eq!(g.node(10), 2.5);
    }

    #[test]
    fn grid_rejects_degenerate_input() {
        assert!(UniformGrid::new(0.0, 10).is_err());
        assert!(UniformGrid::new(1.0, 1).is_err());
    }

    #[test]
    fn simpson_is_exact_for_cubics() {
        let h = 0.1;
        let vals: Vec<f64> = (0..=10).map(|k| (k as f64 * h).powi(3)).collect();
        assert!((simpson(&vals, h) - 0.25).abs() < 1e-14);
    }

    #[test]
    fn sampled_potential_interpolates_and_zero_extends() {
        let q = Potential::from_samples(0.5, vec![0.0, 1.0, 3.0]).unwrap();
        assert!((q.at(0.25) - 0.5).abs() < 1e-15);
        assert!((q.at(0.75) - 2.0).abs() < 1e-15);
        assert_eq!(q.at(1.0), 3.0);
        assert_eq!(q.at(1.5), 0.0);
        // trapezoid of the interpolant: 0.25*(0+1) + 0.25*(1+3)
        assert!((q.integral(1.0) - 1.25).abs() < 1e-12);
    }

    #[test]
    fn sampled_potential_rejects_nan() {
        assert!(Potential::from_samples(0.1, vec![0.0, f64::NAN]).is_err());
    }

    #[test]
    fn analytic_integral() {
        let q = Potential::sine(1.0);
        assert!((q.integral(1.0) - (1.0 - 1f64.cos())).abs() < 1e-12);
    }
}
