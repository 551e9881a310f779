//! Feature schema and local observations.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureKind {
    Continuous,
    Binary,
    /// Values are level indices `0..levels.len()`.
    Categorical {
        levels: Vec<String>,
    },
}

impl FeatureKind {
    /// Discrete kinds are conditioned on by exact match rather than a kernel.
    pub fn is_discrete(&self) -> bool {
        !matches!(self, FeatureKind::Continuous)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
}

/// Ordered, uniquely named feature list; position is the feature index.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSchema {
    features: Vec<Feature>,
    index: HashMap<String, usize>,
}

impl FeatureSchema {
    pub fn new(features: Vec<Feature>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Schema("at least one feature is required".into()));
        }
        let mut index = HashMap::with_capacity(features.len());
        for (i, f) in features.iter().enumerate() {
            if f.name.is_empty() {
                return Err(Error::Schema(format!("feature {i} has an empty name")));
            }
            if index.insert(f.name.clone(), i).is_some() {
                return Err(Error::Schema(format!(
                    "duplicate feature name `{}`",
                    f.name
                )));
            }
            if let FeatureKind::Categorical { levels } = &f.kind {
                if levels.is_empty() {
                    return Err(Error::Schema(format!(
                        "categorical `{}` has no levels",
                        f.name
                    )));
                }
            }
        }
        Ok(Self { features, index })
    }

    /// Schema of continuous features with the given names.
    pub fn continuous<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        Self::new(
            names
                .iter()
                .map(|n| Feature {
                    name: n.as_ref().to_string(),
                    kind: FeatureKind::Continuous,
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn feature(&self, index: usize) -> &Feature {
        &self.features[index]
    }

    pub fn name(&self, index: usize) -> &str {
        &self.features[index].name
    }

    pub fn kind(&self, index: usize) -> &FeatureKind {
        &self.features[index].kind
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::UnknownFeature(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.name.as_str())
    }

    /// Checks that a value is admissible for feature `index`.
    pub fn check_value(&self, index: usize, value: f64) -> Result<()> {
        let f = &self.features[index];
        let ok = value.is_finite()
            && match &f.kind {
                FeatureKind::Continuous => true,
                FeatureKind::Binary => value == 0.0 || value == 1.0,
                FeatureKind::Categorical { levels } => {
                    value >= 0.0 && value.fract() == 0.0 && (value as usize) < levels.len()
                }
            };
        if ok {
            Ok(())
        } else {
            Err(Error::Schema(format!(
                "value {value} is not admissible for feature `{}`",
                f.name
            )))
        }
    }
}

/// A complete assignment of values to the schema's features.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    values: Vec<f64>,
}

impl Instance {
    pub fn new(schema: &FeatureSchema, values: Vec<f64>) -> Result<Self> {
        if values.len() < schema.len() {
            return Err(Error::MissingFeature(schema.name(values.len()).to_string()));
        }
        if values.len() > schema.len() {
            return Err(Error::Schema(format!(
                "instance has {} values but the schema has {} features",
                values.len(),
                schema.len()
            )));
        }
        for (i, v) in values.iter().enumerate() {
            schema.check_value(i, *v)?;
        }
        Ok(Self { values })
    }

    pub fn from_named(schema: &FeatureSchema, named: &BTreeMap<String, f64>) -> Result<Self> {
        for name in named.keys() {
            schema.require(name)?;
        }
        let values = schema
            .names()
            .map(|n| {
                named
                    .get(n)
                    .copied()
                    .ok_or_else(|| Error::MissingFeature(n.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(schema, values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, index: usize) -> f64 {
        self.values[index]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}
