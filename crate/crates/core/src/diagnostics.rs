//! Audits built on the engine: counterfactual-fairness screening, marginal vs
//! conditional comparisons and checks of the Shapley axioms.

use std::fmt::Write as _;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::coalition::Coalition;
use crate::data::Source;
use crate::engine::{exact_shapley, AttributionReport, ExactOptions};
use crate::error::{Error, Result};
use crate::expr::{parse_model, ModelExpr};
use crate::refdist::{Mode, ReferenceDistribution};
use crate::rng::RandomStream;

/// Caveat attached to every passing screen.
pub const PASS_CAVEAT: &str = "PASS is a necessary condition only — not a fairness certificate. \
Zero marginal attribution of the sensitive feature on this population does not show that the \
model is counterfactually fair: the sensitive feature can still act through the model when the \
population lacks variation in it or through features that depend on it.";

/// Caveat attached to every failing screen.
pub const FAIL_CAVEAT: &str = "FAIL: the sensitive feature receives nonzero marginal attribution, \
so the necessary condition for counterfactual fairness is violated. The per-instance values show \
where.";

/// Rows screened when no explicit instances are given.
pub const DEFAULT_SCREEN_CAP: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "FAIL-NECESSARY-CONDITION")]
    FailNecessaryCondition,
    #[serde(rename = "PASS-NECESSARY-CONDITION")]
    PassNecessaryCondition,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::FailNecessaryCondition => "FAIL-NECESSARY-CONDITION",
            Verdict::PassNecessaryCondition => "PASS-NECESSARY-CONDITION",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FairnessOptions {
    pub tolerance: f64,
    pub seed: u64,
    /// Largest number of rows screened; larger populations are subsampled.
    pub max_instances: usize,
    pub exact: ExactOptions,
}

impl Default for FairnessOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            seed: 0,
            max_instances: DEFAULT_SCREEN_CAP,
            exact: ExactOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FairnessScreenResult {
    pub sensitive: String,
    pub tolerance: f64,
    pub instances: Vec<Vec<f64>>,
    /// Exact marginal attribution of the sensitive feature, per instance.
    pub phi_sensitive: Vec<f64>,
    pub max_abs_phi: f64,
    pub verdict: Verdict,
    pub caveat: String,
}

impl FairnessScreenResult {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "counterfactual fairness screen: {}", self.sensitive);
        let _ = writeln!(out, "verdict: {}", self.verdict.as_str());
        let _ = writeln!(out, "tolerance: {:e}", self.tolerance);
        let _ = writeln!(out, "instances: {}", self.instances.len());
        let _ = writeln!(out, "max |phi|: {:e}", self.max_abs_phi);
        let _ = writeln!(out, "{:>6}  {:>14}  instance", "row", "phi");
        for (k, (x, p)) in self.instances.iter().zip(&self.phi_sensitive).enumerate() {
            let _ = writeln!(out, "{k:>6}  {p:>14.6e}  {x:?}");
        }
        let _ = writeln!(out, "caveat: {}", self.caveat);
        out
    }
}

/// Instances for population-level audits: every dataset row when there are at
/// most `cap`, otherwise `cap` rows chosen without replacement; `cap` draws
/// for parametric sources.
pub fn audit_instances(source: &Source, cap: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut stream = RandomStream::new(seed, "audit-instances", 0);
    match source {
        Source::Dataset(ds) if ds.n_rows() <= cap => ds.rows().map(<[f64]>::to_vec).collect(),
        Source::Dataset(ds) => {
            let mut picked = index::sample(&mut stream, ds.n_rows(), cap).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|i| ds.row(i).to_vec()).collect()
        }
        Source::Parametric(spec) => spec.sample(cap, &mut stream),
    }
}

/// Screens `model` for a necessary condition of counterfactual fairness: the
/// exact marginal Shapley value of `sensitive` must vanish on every instance.
pub fn counterfactual_fairness_screen(
    model: &ModelExpr,
    source: &Source,
    sensitive: &str,
    instances: Option<&[Vec<f64>]>,
    opts: &FairnessOptions,
) -> Result<FairnessScreenResult> {
    if !(opts.tolerance.is_finite() && opts.tolerance >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be >= 0, got {}",
            opts.tolerance
        )));
    }
    let j = source.schema().require(sensitive)?;
    let refd = ReferenceDistribution::marginal(source.clone());
    let instances = match instances {
        Some(list) => list.to_vec(),
        None => audit_instances(source, opts.max_instances, opts.seed),
    };
    if instances.is_empty() {
        return Err(Error::InvalidArgument("no instances to screen".into()));
    }
    let phi = instances
        .par_iter()
        .map(|x| exact_shapley(model, &refd, x, &opts.exact).map(|r| r.phi[j]))
        .collect::<Result<Vec<_>>>()?;
    let max_abs_phi = phi.iter().fold(0.0f64, |a, p| a.max(p.abs()));
    let verdict = if max_abs_phi > opts.tolerance {
        Verdict::FailNecessaryCondition
    } else {
        Verdict::PassNecessaryCondition
    };
    Ok(FairnessScreenResult {
        sensitive: sensitive.to_string(),
        tolerance: opts.tolerance,
        instances,
        phi_sensitive: phi,
        max_abs_phi,
        verdict,
        caveat: match verdict {
            Verdict::PassNecessaryCondition => PASS_CAVEAT,
            Verdict::FailNecessaryCondition => FAIL_CAVEAT,
        }
        .to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeGap {
    pub instance: usize,
    pub feature: String,
    pub phi_marginal: f64,
    pub phi_conditional: f64,
    pub gap: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeComparisonReport {
    pub features: Vec<String>,
    pub threshold: f64,
    pub marginal_reference: String,
    pub conditional_reference: String,
    pub gaps: Vec<ModeGap>,
    /// Largest gap per feature over all instances.
    pub max_gap_by_feature: Vec<f64>,
    pub max_gap: f64,
    pub flagged: Vec<String>,
}

impl ModeComparisonReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "marginal vs conditional attributions");
        let _ = writeln!(out, "gap threshold: {:e}", self.threshold);
        let _ = writeln!(
            out,
            "{:>8}  {:<16} {:>14} {:>14} {:>14}  flag",
            "instance", "feature", "marginal", "conditional", "gap"
        );
        for g in &self.gaps {
            let _ = writeln!(
                out,
                "{:>8}  {:<16} {:>14.6e} {:>14.6e} {:>14.6e}  {}",
                g.instance,
                g.feature,
                g.phi_marginal,
                g.phi_conditional,
                g.gap,
                if g.flagged { "*" } else { "" }
            );
        }
        let _ = writeln!(out, "max gap: {:e}", self.max_gap);
        let _ = writeln!(out, "flagged: {}", self.flagged.join(", "));
        out
    }
}

/// Exact attributions under a marginal and a conditional reference, side by
/// side, with features flagged where the two differ by more than `threshold`.
pub fn compare_modes(
    model: &ModelExpr,
    marginal: &ReferenceDistribution,
    conditional: &ReferenceDistribution,
    instances: &[Vec<f64>],
    threshold: f64,
    opts: &ExactOptions,
) -> Result<ModeComparisonReport> {
    if marginal.source().schema() != conditional.source().schema() {
        return Err(Error::Schema(
            "references use different feature schemas".into(),
        ));
    }
    if marginal.mode() != Mode::Marginal {
        return Err(Error::Reference("first reference must be marginal".into()));
    }
    if !conditional.is_conditional() {
        return Err(Error::Reference(
            "second reference must be conditional".into(),
        ));
    }
    if !(threshold.is_finite() && threshold >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "gap threshold must be >= 0, got {threshold}"
        )));
    }
    let pairs = instances
        .par_iter()
        .map(|x| {
            Ok((
                exact_shapley(model, marginal, x, opts)?,
                exact_shapley(model, conditional, x, opts)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let features: Vec<String> = model.schema().names().map(String::from).collect();
    let m = features.len();
    let mut gaps = Vec::with_capacity(instances.len() * m);
    let mut max_by = vec![0.0f64; m];
    for (k, (a, b)) in pairs.iter().enumerate() {
        for j in 0..m {
            let gap = (a.phi[j] - b.phi[j]).abs();
            max_by[j] = max_by[j].max(gap);
            gaps.push(ModeGap {
                instance: k,
                feature: features[j].clone(),
                phi_marginal: a.phi[j],
                phi_conditional: b.phi[j],
                gap,
                flagged: gap > threshold,
            });
        }
    }
    let flagged = (0..m)
        .filter(|&j| max_by[j] > threshold)
        .map(|j| features[j].clone())
        .collect();
    Ok(ModeComparisonReport {
        max_gap: max_by.iter().fold(0.0, |a: f64, b| a.max(*b)),
        features,
        threshold,
        marginal_reference: marginal.describe(),
        conditional_reference: conditional.describe(),
        gaps,
        max_gap_by_feature: max_by,
        flagged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PropertyStatus {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyCheck {
    pub property: String,
    pub status: PropertyStatus,
    pub max_residual: f64,
    /// Number of individual comparisons made.
    pub checks: usize,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyReport {
    pub tolerance: f64,
    pub instances: usize,
    pub properties: Vec<PropertyCheck>,
}

impl PropertyReport {
    pub fn get(&self, property: &str) -> Option<&PropertyCheck> {
        self.properties.iter().find(|p| p.property == property)
    }

    pub fn all_applicable_pass(&self) -> bool {
        self.properties
            .iter()
            .all(|p| p.status != PropertyStatus::Fail)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "property checks over {} instances (tolerance {:e})",
            self.instances, self.tolerance
        );
        for p in &self.properties {
            let status = match p.status {
                PropertyStatus::Pass => "pass",
                PropertyStatus::Fail => "FAIL",
                PropertyStatus::NotApplicable => "not applicable",
            };
            let _ = writeln!(
                out,
                "{:<12} {:<15} max residual {:.3e} over {} checks  {}",
                p.property, status, p.max_residual, p.checks, p.note
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropertyOptions {
    pub tolerance: f64,
    pub seed: u64,
    pub exact: ExactOptions,
}

impl Default for PropertyOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            seed: 0,
            exact: ExactOptions::default(),
        }
    }
}

fn check(
    property: &str,
    applicable: bool,
    residuals: &[f64],
    tol: f64,
    note: String,
) -> PropertyCheck {
    let max_residual = residuals.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    let status = if !applicable {
        PropertyStatus::NotApplicable
    } else if residuals.iter().all(|r| r.abs() <= tol) {
        PropertyStatus::Pass
    } else {
        PropertyStatus::Fail
    };
    PropertyCheck {
        property: property.to_string(),
        status,
        max_residual,
        checks: residuals.len(),
        note,
    }
}

/// Feature pairs whose swap leaves the model, the reference law and the
/// instance unchanged.
pub fn symmetric_pairs(
    model: &ModelExpr,
    refd: &ReferenceDistribution,
    x: &[f64],
) -> Vec<(usize, usize)> {
    let m = model.schema().len();
    let canon = model.canonical_form();
    let mut out = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            if x[i] == x[j]
                && refd.is_swap_invariant(i, j)
                && model.swap_features(i, j).canonical_form() == canon
            {
                out.push((i, j));
            }
        }
    }
    out
}

/// Features the model never reads and, under an interventional reference,
/// that are not causal ancestors of a feature it does read.
pub fn dummy_features(model: &ModelExpr, refd: &ReferenceDistribution) -> Vec<usize> {
    let referenced = model.referenced_indices();
    let upstream = match refd.graph() {
        Some(g) => referenced.iter().fold(Coalition::EMPTY, |acc, &k| {
            Coalition::from_bits(acc.bits() | g.ancestors(k).bits())
        }),
        None => Coalition::EMPTY,
    };
    (0..model.schema().len())
        .filter(|j| !referenced.contains(j) && !upstream.contains(*j))
        .collect()
}

/// Checks efficiency, symmetry, dummy and linearity of exact attributions at
/// each instance.
pub fn validate_properties(
    model: &ModelExpr,
    refd: &ReferenceDistribution,
    instances: &[Vec<f64>],
    opts: &PropertyOptions,
) -> Result<PropertyReport> {
    let m = model.schema().len();
    let tol = opts.tolerance;
    let dummies = dummy_features(model, refd);
    let unreferenced = m - model.referenced_indices().len();
    let mut stream = RandomStream::new(opts.seed, "linearity", 0);
    let a: f64 = stream.random_range(-2.0..2.0);
    let b: f64 = stream.random_range(-2.0..2.0);
    let sum_src: Vec<&str> = model.schema().names().collect();
    let g = parse_model(&sum_src.join(" + "), model.schema_arc())?;
    let combo = model.linear_combination(a, &g, b)?;

    struct Residuals {
        efficiency: f64,
        symmetry: Vec<f64>,
        dummy: Vec<f64>,
        linearity: Vec<f64>,
    }
    let per = instances
        .par_iter()
        .map(|x| {
            let rf: AttributionReport = exact_shapley(model, refd, x, &opts.exact)?;
            let rg = exact_shapley(&g, refd, x, &opts.exact)?;
            let rc = exact_shapley(&combo, refd, x, &opts.exact)?;
            Ok(Residuals {
                efficiency: rf.efficiency_residual(),
                symmetry: symmetric_pairs(model, refd, x)
                    .into_iter()
                    .map(|(i, j)| rf.phi[i] - rf.phi[j])
                    .collect(),
                dummy: dummies.iter().map(|&j| rf.phi[j]).collect(),
                linearity: (0..m)
                    .map(|j| rc.phi[j] - (a * rf.phi[j] + b * rg.phi[j]))
                    .collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let efficiency: Vec<f64> = per.iter().map(|r| r.efficiency).collect();
    let symmetry: Vec<f64> = per
        .iter()
        .flat_map(|r| r.symmetry.iter().copied())
        .collect();
    let dummy: Vec<f64> = per.iter().flat_map(|r| r.dummy.iter().copied()).collect();
    let linearity: Vec<f64> = per
        .iter()
        .flat_map(|r| r.linearity.iter().copied())
        .collect();
    let dummy_applicable = !refd.is_conditional();
    let dummy_note = if refd.is_conditional() {
        "conditional references can attribute to features the model never reads".to_string()
    } else if unreferenced == 0 {
        "every feature appears in the model, holds vacuously".to_string()
    } else if dummies.is_empty() {
        "every unreferenced feature causes a referenced one, holds vacuously".to_string()
    } else {
        let names: Vec<&str> = dummies.iter().map(|&j| model.schema().name(j)).collect();
        let mut note = format!("unreferenced features: {}", names.join(", "));
        if dummies.len() < unreferenced {
            note.push_str("; unreferenced ancestors of referenced features excluded");
        }
        note
    };
    Ok(PropertyReport {
        tolerance: tol,
        instances: instances.len(),
        properties: vec![
            check("efficiency", true, &efficiency, tol, "f(x) - phi_0 - sum phi_j".into()),
            check(
                "symmetry",
                true,
                &symmetry,
                tol,
                if symmetry.is_empty() {
                    "no interchangeable feature pairs, holds vacuously".into()
                } else {
                    format!("{} interchangeable pair evaluations", symmetry.len())
                },
            ),
            check("dummy", dummy_applicable, &dummy, tol, dummy_note),
            check(
                "linearity",
                true,
                &linearity,
                tol,
                format!("phi({a:.6} f + {b:.6} g) against the same combination of phi, g = sum of features"),
            ),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use crate::parametric::{Law, ParametricSpec};
    use crate::schema::{Feature, FeatureKind, FeatureSchema};
    use std::sync::Arc;

    fn binary(names: &[&str]) -> Arc<FeatureSchema> {
        Arc::new(
            FeatureSchema::new(
                names
                    .iter()
                    .map(|n| Feature {
                        name: n.to_string(),
                        kind: FeatureKind::Binary,
                    })
                    .collect(),
            )
            .unwrap(),
        )
    }

    fn cohort(rows: Vec<Vec<f64>>) -> Source {
        Source::Dataset(Dataset::new(binary(&["x_male", "x_eligible"]), rows, None).unwrap())
    }

    #[test]
    fn screen_fails_on_direct_use() {
        let src = cohort(vec![
            vec![1.0, 1.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![0.0, 0.0],
        ]);
        let m = parse_model("x_male", src.schema_arc()).unwrap();
        let r =
            counterfactual_fairness_screen(&m, &src, "x_male", None, &FairnessOptions::default())
                .unwrap();
        assert_eq!(r.verdict, Verdict::FailNecessaryCondition);
        assert_eq!(r.instances.len(), 4);
        assert!(r
            .phi_sensitive
            .iter()
            .all(|p| (p.abs() - 0.5).abs() < 1e-12));
    }

    #[test]
    fn screen_passes_dummy_with_caveat() {
        let src = cohort(vec![vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]]);
        let m = parse_model("x_eligible", src.schema_arc()).unwrap();
        let r =
            counterfactual_fairness_screen(&m, &src, "x_male", None, &FairnessOptions::default())
                .unwrap();
        assert_eq!(r.verdict, Verdict::PassNecessaryCondition);
        assert!(r
            .caveat
            .contains("necessary condition only — not a fairness certificate"));
        assert!(r.to_text().contains("not a fairness certificate"));
    }

    #[test]
    fn large_populations_are_capped_deterministically() {
        let rows: Vec<Vec<f64>> = (0..500)
            .map(|i| vec![(i % 2) as f64, ((i / 2) % 2) as f64])
            .collect();
        let src = cohort(rows);
        let a = audit_instances(&src, 200, 7);
        assert_eq!(a.len(), 200);
        assert_eq!(a, audit_instances(&src, 200, 7));
    }

    #[test]
    fn single_feature_modes_agree() {
        let s = Arc::new(FeatureSchema::continuous(&["x"]).unwrap());
        let ds = Dataset::new(s.clone(), vec![vec![0.0], vec![1.0], vec![3.0]], None).unwrap();
        let m = parse_model("x ^ 2", &s).unwrap();
        let marg = ReferenceDistribution::marginal(Source::Dataset(ds.clone()));
        let cond = ReferenceDistribution::conditional_empirical(ds, Default::default()).unwrap();
        let r = compare_modes(
            &m,
            &marg,
            &cond,
            &[vec![2.0]],
            1e-6,
            &ExactOptions::default(),
        )
        .unwrap();
        assert_eq!(r.max_gap, 0.0);
        assert!(r.flagged.is_empty());
    }

    #[test]
    fn properties_hold_on_uniform_example() {
        let s = Arc::new(FeatureSchema::continuous(&["x1", "x2"]).unwrap());
        let spec = ParametricSpec::independent(
            s.clone(),
            vec![
                Law::Uniform {
                    low: -1.0,
                    high: 2.0,
                },
                Law::Uniform {
                    low: 0.0,
                    high: 3.0,
                },
            ],
        )
        .unwrap();
        let refd = ReferenceDistribution::marginal(Source::Parametric(spec));
        let m = parse_model("x1 + x2", &s).unwrap();
        let r = validate_properties(
            &m,
            &refd,
            &[vec![0.0, 0.0], vec![1.0, 1.0]],
            &PropertyOptions::default(),
        )
        .unwrap();
        assert!(r.all_applicable_pass(), "{}", r.to_text());
        assert_eq!(r.get("efficiency").unwrap().status, PropertyStatus::Pass);
        for p in &r.properties {
            assert_eq!(p.status, PropertyStatus::Pass, "{}", p.property);
        }
    }
}
