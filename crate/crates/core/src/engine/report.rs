use serde::Serialize;

use crate::error::{Error, Result};
use crate::refdist::{ExactKind, Mode, ReferenceDistribution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttributionMode {
    Marginal,
    Conditional,
    Asymmetric,
    Causal,
}

impl AttributionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AttributionMode::Marginal => "marginal",
            AttributionMode::Conditional => "conditional",
            AttributionMode::Asymmetric => "asymmetric",
            AttributionMode::Causal => "causal",
        }
    }

    /// Mode tag for symmetric attributions under `refd`.
    pub fn of(refd: &ReferenceDistribution) -> Self {
        match refd.mode() {
            Mode::Marginal => AttributionMode::Marginal,
            Mode::ConditionalEmpirical | Mode::ConditionalGaussian => AttributionMode::Conditional,
            Mode::InterventionalDag => AttributionMode::Causal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Estimator {
    Exact {
        backend: ExactKind,
        quadrature_order: usize,
    },
    Sampled {
        permutations: usize,
        reference_draws: usize,
        seed: u64,
    },
}

impl Estimator {
    pub fn label(&self) -> &'static str {
        match self {
            Estimator::Exact { .. } => "exact",
            Estimator::Sampled { .. } => "sampled",
        }
    }
}

/// Per-feature attributions at one instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributionReport {
    pub mode: AttributionMode,
    pub estimator: Estimator,
    /// How dropped features were imputed.
    pub reference: String,
    pub features: Vec<String>,
    pub instance: Vec<f64>,
    /// `f(x)`.
    pub prediction: f64,
    /// `phi_0 = v(empty set)`.
    pub base: f64,
    pub phi: Vec<f64>,
    /// Standard errors of `phi`, sampled estimators only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub standard_errors: Option<Vec<f64>>,
}

impl AttributionReport {
    pub fn phi_of(&self, feature: &str) -> Option<f64> {
        self.features
            .iter()
            .position(|f| f == feature)
            .map(|j| self.phi[j])
    }

    /// `f(x) - phi_0 - sum phi_j`.
    pub fn efficiency_residual(&self) -> f64 {
        let mut s = crate::numeric::CompensatedSum::default();
        s.add(self.prediction);
        s.add(-self.base);
        for p in &self.phi {
            s.add(-p);
        }
        s.value()
    }

    /// Flat table with columns `feature, phi, se, mode, backend`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::InvalidArgument(e.to_string());
        w.write_record(["feature", "phi", "se", "mode", "backend"])
            .map_err(err)?;
        for (j, name) in self.features.iter().enumerate() {
            let se = self
                .standard_errors
                .as_ref()
                .map(|s| s[j].to_string())
                .unwrap_or_default();
            w.write_record([
                name.as_str(),
                &self.phi[j].to_string(),
                &se,
                self.mode.as_str(),
                self.estimator.label(),
            ])
            .map_err(err)?;
        }
        w.write_record([
            "(base)",
            &self.base.to_string(),
            "",
            self.mode.as_str(),
            self.estimator.label(),
        ])
        .map_err(err)?;
        let bytes = w
            .into_inner()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}
