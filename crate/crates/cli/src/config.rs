use bc_debranges::dirac::MatrixPotential;
use bc_debranges::discrete::PotentialSeq;
use bc_debranges::grid::Potential;
use bc_debranges::{c64, Complex64};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum System {
    Discrete,
    Wave,
    Dirac,
    Bridge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Output {
    Response,
    Connecting,
    Krein,
    Kernel,
    Hb,
    Recover,
    Validate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Builtin {
    Zero,
    Linear,
    Sin,
}

/// A named profile, plain samples, or separate `p` and `q` samples for
/// the Dirac system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PotentialSpec {
    Named(Builtin),
    Samples(Vec<f64>),
    Matrix { p: Vec<f64>, q: Vec<f64> },
}

impl Default for PotentialSpec {
    fn default() -> Self {
        PotentialSpec::Named(Builtin::Zero)
    }
}

/// Experiment description. Optional fields are filled in by
/// [`ExperimentConfig::resolve`], and the resolved form is what reports
/// embed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: System,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    #[serde(default)]
    pub potential: PotentialSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_samples: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<Vec<Output>>,
    /// Externally supplied discrete response vector, replacing the one
    /// computed from the potential.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<Vec<f64>>,
}

pub const DEFAULT_DISCRETE_T: f64 = 4.0;
pub const DEFAULT_CONTINUOUS_T: f64 = 1.0;
pub const DEFAULT_GRID_POINTS: usize = 201;
pub const MAX_DISCRETE_T: f64 = 64.0;

fn default_z_samples() -> Vec<[f64; 2]> {
    vec![[1.0, 1.0], [0.0, 2.0], [-1.0, 0.5]]
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Input(format!("config: {e}")))
    }

    /// Fills defaults and checks the invariants.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        let t = self.t.unwrap_or(match self.system {
            System::Discrete => DEFAULT_DISCRETE_T,
            _ => DEFAULT_CONTINUOUS_T,
        });
        if !(t.is_finite() && t > 0.0) {
            return Err(CliError::Input(format!("T must be positive, got {t}")));
        }
        if self.system == System::Discrete && (t.fract() != 0.0 || t > MAX_DISCRETE_T) {
            return Err(CliError::Input(format!(
                "discrete T must be an integer between 1 and {MAX_DISCRETE_T}, got {t}"
            )));
        }
        self.t = Some(t);
        if self.system != System::Discrete {
            let m = self.grid_points.unwrap_or(DEFAULT_GRID_POINTS);
            if m < 3 {
                return Err(CliError::Input(format!("grid_points must be at least 3, got {m}")));
            }
            self.grid_points = Some(m);
        } else if self.grid_points.is_some() {
            return Err(CliError::Input("grid_points does not apply to the discrete system".into()));
        }
        if self.amplitude.is_none() && matches!(self.potential, PotentialSpec::Named(_)) {
            self.amplitude = Some(1.0);
        }
        if let Some(a) = self.amplitude {
            if !a.is_finite() {
                return Err(CliError::Input("amplitude must be finite".into()));
            }
        }
        match &self.potential {
            PotentialSpec::Samples(v) if v.iter().any(|x| !x.is_finite()) => {
                return Err(CliError::Input("potential samples must be finite".into()));
            }
            PotentialSpec::Samples(v) if self.system != System::Discrete && v.len() < 2 => {
                return Err(CliError::Input("a sampled continuous potential needs at least 2 values".into()));
            }
            PotentialSpec::Matrix { p, q } => {
                if self.system != System::Dirac {
                    return Err(CliError::Input("{p, q} potentials only apply to the Dirac system".into()));
                }
                if p.len() != q.len() || p.len() < 2 {
                    return Err(CliError::Input("p and q need the same length, at least 2".into()));
                }
                if p.iter().chain(q).any(|x| !x.is_finite()) {
                    return Err(CliError::Input("potential samples must be finite".into()));
                }
            }
            _ => {}
        }
        if self.response.is_some() && self.system != System::Discrete {
            return Err(CliError::Input("a response override only applies to the discrete system".into()));
        }
        let z = self.z_samples.take().unwrap_or_else(default_z_samples);
        if z.iter().flatten().any(|v| !v.is_finite()) {
            return Err(CliError::Input("z_samples must be finite".into()));
        }
        self.z_samples = Some(z);
        let mut outputs = self.outputs.take().unwrap_or_else(|| match self.system {
            System::Discrete => vec![Output::Response, Output::Connecting, Output::Recover],
            System::Wave | System::Dirac => vec![Output::Response, Output::Kernel, Output::Hb],
            System::Bridge => Vec::new(),
        });
        outputs.sort();
        outputs.dedup();
        if self.system != System::Discrete && outputs.contains(&Output::Recover) {
            return Err(CliError::Input("recover is only available for the discrete system".into()));
        }
        if self.system == System::Bridge && outputs.iter().any(|o| *o != Output::Validate) {
            return Err(CliError::Input("the bridge system only accepts the validate output".into()));
        }
        self.outputs = Some(outputs);
        Ok(self)
    }

    pub fn horizon(&self) -> f64 {
        self.t.expect("resolved")
    }

    pub fn discrete_t(&self) -> usize {
        self.horizon() as usize
    }

    pub fn points(&self) -> usize {
        self.grid_points.expect("resolved")
    }

    pub fn outputs(&self) -> &[Output] {
        self.outputs.as_deref().unwrap_or(&[])
    }

    pub fn wants(&self, o: Output) -> bool {
        self.outputs().contains(&o)
    }

    pub fn z_points(&self) -> Vec<Complex64> {
        self.z_samples
            .as_deref()
            .unwrap_or(&[])
            .iter()
            .map(|&[re, im]| c64(re, im))
            .collect()
    }

    fn amp(&self) -> f64 {
        self.amplitude.unwrap_or(1.0)
    }

    /// `b_1, ..., b_T`; named profiles are sampled at `n / T`.
    pub fn discrete_potential(&self) -> Result<PotentialSeq, CliError> {
        let t = self.discrete_t();
        let values = match &self.potential {
            PotentialSpec::Named(name) => {
                let profile = self.profile(*name);
                (1..=t).map(|n| profile.at(n as f64 / t as f64)).collect()
            }
            PotentialSpec::Samples(v) => v.clone(),
            PotentialSpec::Matrix { .. } => unreachable!("rejected by resolve"),
        };
        Ok(PotentialSeq::new(values)?)
    }

    fn profile(&self, name: Builtin) -> Potential {
        let a = self.amp();
        match name {
            Builtin::Zero => Potential::zero(),
            Builtin::Linear => Potential::linear(a),
            Builtin::Sin => Potential::sine(a),
        }
    }

    /// Scalar potential on the half line; samples span `[0, T]`.
    pub fn scalar_potential(&self) -> Result<Potential, CliError> {
        match &self.potential {
            PotentialSpec::Named(name) => Ok(self.profile(*name)),
            PotentialSpec::Samples(v) => {
                let step = self.horizon() / (v.len() - 1) as f64;
                Ok(Potential::from_samples(step, v.clone())?)
            }
            PotentialSpec::Matrix { .. } => unreachable!("rejected by resolve"),
        }
    }

    /// Plain profiles and samples go to the off-diagonal entry `q`.
    pub fn matrix_potential(&self) -> Result<MatrixPotential, CliError> {
        match &self.potential {
            PotentialSpec::Matrix { p, q } => {
                let step = self.horizon() / (p.len() - 1) as f64;
                Ok(MatrixPotential::new(
                    Potential::from_samples(step, p.clone())?,
                    Potential::from_samples(step, q.clone())?,
                ))
            }
            _ => Ok(MatrixPotential::off_diagonal(self.scalar_potential()?)),
        }
    }
}
