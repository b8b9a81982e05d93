//! JSON experiment specifications.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ArModel, InitialDistribution, Innovation, MaModel, Model, ModelError, SurvivalConvention};
use crate::operator::ProcessKind;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("order {order} does not match {found} coefficients")]
    OrderMismatch { order: usize, found: usize },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for ConfigError {
    fn from(e: serde_json::Error) -> Self {
        // serde_json appends " at line L column C"; keep just the message.
        let full = e.to_string();
        let message = match full.rfind(" at line ") {
            Some(i) => full[..i].to_string(),
            None => full,
        };
        ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message,
        }
    }
}

/// A process as written in experiment files:
/// `{"process", "order", "coeffs", "innovation", "initial", "convention"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub process: ProcessKind,
    /// Defaults to the number of coefficients.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    pub coeffs: Vec<f64>,
    pub innovation: Innovation,
    /// AR only; i.i.d. draws from the innovation when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialDistribution>,
    #[serde(default)]
    pub convention: SurvivalConvention,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let spec: Self = serde_json::from_str(text)?;
        spec.to_model()?;
        Ok(spec)
    }

    pub fn to_model(&self) -> Result<Model, ConfigError> {
        if let Some(order) = self.order {
            if order != self.coeffs.len() {
                return Err(ConfigError::OrderMismatch {
                    order,
                    found: self.coeffs.len(),
                });
            }
        }
        Ok(match self.process {
            ProcessKind::Ar => {
                let initial = self.initial.clone().unwrap_or(InitialDistribution::Iid {
                    innovation: self.innovation,
                });
                Model::Ar(ArModel::new(self.coeffs.clone(), self.innovation, initial, self.convention)?)
            }
            ProcessKind::Ma => {
                if self.initial.is_some() {
                    return Err(ConfigError::Invalid("MA processes take no initial law".into()));
                }
                Model::Ma(MaModel::new(self.coeffs.clone(), self.innovation, self.convention)?)
            }
        })
    }

    pub fn from_model(model: &Model) -> Self {
        let (process, initial) = match model {
            Model::Ar(ar) => (ProcessKind::Ar, Some(ar.initial().clone())),
            Model::Ma(_) => (ProcessKind::Ma, None),
        };
        Self {
            process,
            order: Some(model.order()),
            coeffs: model.coeffs().to_vec(),
            innovation: *model.innovation(),
            initial,
            convention: model.convention(),
        }
    }

    pub fn with_coeffs(&self, coeffs: Vec<f64>) -> Self {
        let initial = match &self.initial {
            Some(InitialDistribution::StationaryAr1Gaussian { .. }) if coeffs.len() == 1 => {
                Some(InitialDistribution::StationaryAr1Gaussian { a1: coeffs[0] })
            }
            other => other.clone(),
        };
        Self {
            order: None,
            coeffs,
            initial,
            ..self.clone()
        }
    }
}

/// Horizon grid: an explicit list or an arithmetic range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HorizonSpec {
    List(Vec<usize>),
    Range {
        #[serde(default)]
        from: usize,
        to: usize,
        #[serde(default = "one")]
        step: usize,
    },
}

fn one() -> usize {
    1
}

impl HorizonSpec {
    pub fn to_vec(&self) -> Vec<usize> {
        match self {
            HorizonSpec::List(v) => v.clone(),
            HorizonSpec::Range { from, to, step } => (*from..=*to).step_by((*step).max(1)).collect(),
        }
    }
}
