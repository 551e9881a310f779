//! Parametric reference populations.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::Gaussian;
use crate::rng::RandomStream;
use crate::schema::{Feature, FeatureKind, FeatureSchema};

/// Marginal law of one feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum Law {
    Uniform { low: f64, high: f64 },
    Normal { mean: f64, sd: f64 },
    Bernoulli { p: f64 },
}

impl Law {
    pub fn validate(&self, feature: &str) -> Result<()> {
        let bad = |reason: &str| {
            Err(Error::InvalidLaw {
                feature: feature.to_string(),
                reason: reason.to_string(),
            })
        };
        match *self {
            Law::Uniform { low, high } if !(low.is_finite() && high.is_finite() && low < high) => {
                bad("uniform needs finite low < high")
            }
            Law::Normal { mean, sd } if !(mean.is_finite() && sd.is_finite() && sd > 0.0) => {
                bad("normal needs a finite mean and sd > 0")
            }
            Law::Bernoulli { p } if !(0.0..=1.0).contains(&p) => bad("bernoulli needs p in [0, 1]"),
            _ => Ok(()),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Law::Uniform { low, high } => 0.5 * (low + high),
            Law::Normal { mean, .. } => mean,
            Law::Bernoulli { p } => p,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Law::Uniform { low, high } => (high - low).powi(2) / 12.0,
            Law::Normal { sd, .. } => sd * sd,
            Law::Bernoulli { p } => p * (1.0 - p),
        }
    }

    pub fn sample(&self, stream: &mut RandomStream) -> f64 {
        match *self {
            Law::Uniform { low, high } => low + (high - low) * stream.random::<f64>(),
            Law::Normal { mean, sd } => mean + sd * stream.sample::<f64, _>(StandardNormal),
            Law::Bernoulli { p } => f64::from(u8::from(stream.random::<f64>() < p)),
        }
    }

    /// Schema kind implied by the law.
    pub fn kind(&self) -> FeatureKind {
        match self {
            Law::Bernoulli { .. } => FeatureKind::Binary,
            _ => FeatureKind::Continuous,
        }
    }
}

/// Per-feature laws, independent unless a joint Gaussian covariance is given.
#[derive(Debug, Clone)]
pub struct ParametricSpec {
    schema: Arc<FeatureSchema>,
    laws: Vec<Law>,
    joint: Option<Gaussian>,
    joint_factor: Option<DMatrix<f64>>,
}

impl ParametricSpec {
    pub fn independent(schema: Arc<FeatureSchema>, laws: Vec<Law>) -> Result<Self> {
        Self::build(schema, laws, None)
    }

    /// All laws must be normal, and the covariance diagonal must equal `sd^2`.
    pub fn joint_gaussian(
        schema: Arc<FeatureSchema>,
        laws: Vec<Law>,
        covariance: DMatrix<f64>,
    ) -> Result<Self> {
        Self::build(schema, laws, Some(covariance))
    }

    /// Schema with one feature per `(name, law)`, kinds implied by the laws.
    pub fn schema_for(named: &[(String, Law)]) -> Result<FeatureSchema> {
        FeatureSchema::new(
            named
                .iter()
                .map(|(name, law)| Feature {
                    name: name.clone(),
                    kind: law.kind(),
                })
                .collect(),
        )
    }

    fn build(
        schema: Arc<FeatureSchema>,
        laws: Vec<Law>,
        covariance: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        if laws.len() != schema.len() {
            return Err(Error::Schema(format!(
                "{} laws for {} features",
                laws.len(),
                schema.len()
            )));
        }
        for (j, law) in laws.iter().enumerate() {
            law.validate(schema.name(j))?;
            if matches!(law, Law::Bernoulli { .. }) && !schema.kind(j).is_discrete() {
                return Err(Error::InvalidLaw {
                    feature: schema.name(j).to_string(),
                    reason: "bernoulli law on a continuous feature".into(),
                });
            }
        }
        let (joint, joint_factor) = match covariance {
            None => (None, None),
            Some(cov) => {
                let mut mean = Vec::with_capacity(laws.len());
                for (j, law) in laws.iter().enumerate() {
                    let Law::Normal { mean: mu, sd } = *law else {
                        return Err(Error::InvalidLaw {
                            feature: schema.name(j).to_string(),
                            reason: "a joint covariance requires normal laws".into(),
                        });
                    };
                    if cov.nrows() == laws.len()
                        && cov.ncols() == laws.len()
                        && (cov[(j, j)] - sd * sd).abs() > 1e-9 * sd * sd
                    {
                        return Err(Error::InvalidLaw {
                            feature: schema.name(j).to_string(),
                            reason: format!(
                                "covariance diagonal {} != sd^2 {}",
                                cov[(j, j)],
                                sd * sd
                            ),
                        });
                    }
                    mean.push(mu);
                }
                let g = Gaussian::new(DVector::from_vec(mean), cov)?;
                g.validate()?;
                let f = g.factor();
                (Some(g), Some(f))
            }
        };
        Ok(Self {
            schema,
            laws,
            joint,
            joint_factor,
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn schema_arc(&self) -> &Arc<FeatureSchema> {
        &self.schema
    }

    pub fn law(&self, j: usize) -> &Law {
        &self.laws[j]
    }

    pub fn laws(&self) -> &[Law] {
        &self.laws
    }

    pub fn law_by_name(&self, name: &str) -> Result<&Law> {
        Ok(&self.laws[self.schema.require(name)?])
    }

    pub fn joint(&self) -> Option<&Gaussian> {
        self.joint.as_ref()
    }

    pub fn is_independent(&self) -> bool {
        self.joint.is_none()
    }

    pub fn sample_row(&self, stream: &mut RandomStream) -> Vec<f64> {
        match (&self.joint, &self.joint_factor) {
            (Some(g), Some(l)) => {
                let z = DVector::from_fn(l.ncols(), |_, _| stream.sample::<f64, _>(StandardNormal));
                (&g.mean + l * z).iter().copied().collect()
            }
            _ => self.laws.iter().map(|law| law.sample(stream)).collect(),
        }
    }

    pub fn sample(&self, count: usize, stream: &mut RandomStream) -> Vec<Vec<f64>> {
        (0..count).map(|_| self.sample_row(stream)).collect()
    }
}
