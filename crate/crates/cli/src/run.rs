//! Turns a validated configuration into core objects and runs one command.

use std::fmt::Write as _;
use std::sync::Arc;

use clap::ValueEnum;
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::Value;

use coalition_attrib::diagnostics::audit_instances;
use coalition_attrib::{
    asymmetric_shapley, causal_shapley, coalition_deltas, compare_modes,
    counterfactual_fairness_screen, exact_shapley, load_csv, parse_model, sampled_causal_shapley,
    sampled_shapley, validate_properties, AttributionReport, Backend, CausalGraph, CsvOptions,
    DeltaOptions, ExactConfig, ExactOptions, FairnessOptions, Feature, FeatureKind, FeatureSchema,
    GraphSpec, KernelParams, Law, ModelExpr, ParametricSpec, PropertyOptions,
    ReferenceDistribution, SampleOptions, Source,
};

use crate::config::{
    ConfigError, EstimatorKind, GraphDecl, InstanceDecl, ModeDecl, ModelSource, RunConfig,
};

/// Instances audited by `validate` when none are configured.
const VALIDATE_SAMPLE: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Shapley attributions at one instance.
    Explain,
    /// Coalition deltas of one feature, with the cancellation flag.
    Deltas,
    /// Counterfactual-fairness necessary-condition screen.
    FairnessScreen,
    /// Marginal vs conditional attributions side by side.
    CompareModes,
    /// Efficiency, symmetry, dummy and linearity checks.
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Explain => "explain",
            Command::Deltas => "deltas",
            Command::FairnessScreen => "fairness-screen",
            Command::CompareModes => "compare-modes",
            Command::Validate => "validate",
        }
    }
}

/// Everything a command needs, built from a [`RunConfig`].
pub struct Prepared {
    pub config: RunConfig,
    pub model: ModelExpr,
    pub source: Source,
    pub graph: Option<CausalGraph>,
    pub kernel: KernelParams,
}

/// Result of a command: a JSON body plus flat and human-readable renderings.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub body: Value,
    pub csv: String,
    pub text: String,
}

fn schema_from_decl(cfg: &RunConfig) -> Result<Option<FeatureSchema>, ConfigError> {
    let Some(decls) = &cfg.features else {
        return Ok(None);
    };
    let features = decls
        .iter()
        .enumerate()
        .map(|(k, d)| {
            Ok(Feature {
                name: d.name.clone(),
                kind: d
                    .kind()
                    .map_err(|m| ConfigError::field(format!("features[{k}]"), m))?,
            })
        })
        .collect::<Result<Vec<_>, ConfigError>>()?;
    FeatureSchema::new(features)
        .map(Some)
        .map_err(|e| ConfigError::field("features", e))
}

fn load_source(cfg: &RunConfig) -> Result<Source, ConfigError> {
    let declared = schema_from_decl(cfg)?;
    if let Some(csv) = &cfg.data.csv {
        let options = CsvOptions {
            infer_schema: csv.infer_schema,
            weight_column: csv.weight_column.clone(),
            schema: declared,
        };
        let ds = load_csv(cfg.resolve(&csv.path), &options)
            .map_err(|e| ConfigError::field("data.csv", e))?;
        return Ok(Source::Dataset(ds));
    }
    let p = cfg
        .data
        .parametric
        .as_ref()
        .expect("validated: one data source");
    let named: Vec<(String, Law)> = p.laws.iter().map(|l| (l.name.clone(), l.law)).collect();
    let schema = match declared {
        Some(s) => {
            let names: Vec<&str> = s.names().collect();
            if names.len() != named.len() || names.iter().zip(&named).any(|(a, (b, _))| a != b) {
                return Err(ConfigError::field(
                    "features",
                    "declared features must match the parametric laws in order",
                ));
            }
            s
        }
        None => ParametricSpec::schema_for(&named)
            .map_err(|e| ConfigError::field("data.parametric.laws", e))?,
    };
    let schema = Arc::new(schema);
    let laws: Vec<Law> = named.into_iter().map(|(_, l)| l).collect();
    let spec = match &p.covariance {
        None => ParametricSpec::independent(schema, laws),
        Some(rows) => {
            let m = laws.len();
            if rows.len() != m || rows.iter().any(|r| r.len() != m) {
                return Err(ConfigError::field(
                    "data.parametric.covariance",
                    format!("expected a {m} x {m} matrix"),
                ));
            }
            let cov = DMatrix::from_row_iterator(m, m, rows.iter().flatten().copied());
            ParametricSpec::joint_gaussian(schema, laws, cov)
        }
    };
    spec.map(Source::Parametric)
        .map_err(|e| ConfigError::field("data.parametric", e))
}

fn load_model(cfg: &RunConfig, schema: &Arc<FeatureSchema>) -> Result<ModelExpr, ConfigError> {
    let text = match &cfg.model {
        ModelSource::Inline(s) => s.clone(),
        ModelSource::File { file } => {
            let path = cfg.resolve(file);
            std::fs::read_to_string(&path)
                .map_err(|e| ConfigError::field("model.file", format!("{}: {e}", path.display())))?
        }
    };
    parse_model(text.trim(), schema).map_err(|e| ConfigError::field("model", e))
}

fn load_graph(cfg: &RunConfig, schema: &FeatureSchema) -> Result<Option<CausalGraph>, ConfigError> {
    let Some(decl) = &cfg.reference.graph else {
        return Ok(None);
    };
    let spec = match decl {
        GraphDecl::Inline(spec) => spec.clone(),
        GraphDecl::File(path) => GraphSpec::load(cfg.resolve(path))
            .map_err(|e| ConfigError::field("reference.graph", e))?,
    };
    CausalGraph::from_spec(&spec, schema)
        .map(Some)
        .map_err(|e| ConfigError::field("reference.graph", e))
}

/// Loads data, model and graph; every failure is a configuration error.
pub fn prepare(config: RunConfig) -> Result<Prepared, ConfigError> {
    let source = load_source(&config)?;
    let model = load_model(&config, source.schema_arc())?;
    let graph = load_graph(&config, source.schema())?;
    let kernel = KernelParams {
        bandwidth: config.reference.bandwidth,
        neighbors: config.reference.neighbors,
    };
    let p = Prepared {
        config,
        model,
        source,
        graph,
        kernel,
    };
    // surface reference parameter problems before any computation
    p.reference()
        .map_err(|e| ConfigError::field("reference", e))?;
    if let Some(inst) = &p.config.instance {
        p.resolve_instance(inst, "instance")?;
    }
    if let Some(list) = &p.config.instances {
        for (k, inst) in list.iter().enumerate() {
            p.resolve_instance(inst, &format!("instances[{k}]"))?;
        }
    }
    Ok(p)
}

fn value_of(kind: &FeatureKind, v: &Value, field: &str) -> Result<f64, ConfigError> {
    match (v, kind) {
        (Value::Number(n), _) => n
            .as_f64()
            .ok_or_else(|| ConfigError::field(field, "not a finite number")),
        (Value::Bool(b), FeatureKind::Binary) => Ok(f64::from(u8::from(*b))),
        (Value::String(s), FeatureKind::Categorical { levels }) => levels
            .iter()
            .position(|l| l == s)
            .map(|i| i as f64)
            .ok_or_else(|| ConfigError::field(field, format!("unknown level `{s}`"))),
        _ => Err(ConfigError::field(field, "expected a number")),
    }
}

impl Prepared {
    pub fn schema(&self) -> &FeatureSchema {
        self.source.schema()
    }

    pub fn exact_options(&self) -> ExactOptions {
        ExactOptions {
            config: ExactConfig {
                quadrature_order: self.config.estimator.quadrature_order,
                max_points: self.config.estimator.max_points,
            },
            force: self.config.estimator.force,
        }
    }

    pub fn sample_options(&self) -> SampleOptions {
        SampleOptions {
            permutations: self.config.estimator.permutations,
            reference_draws: self.config.estimator.reference_draws,
            seed: self.config.seed,
        }
    }

    /// The reference distribution implied by `reference.mode`.
    pub fn reference(&self) -> coalition_attrib::Result<ReferenceDistribution> {
        let src = self.source.clone();
        match self.config.reference.mode {
            ModeDecl::Marginal => Ok(ReferenceDistribution::marginal(src)),
            ModeDecl::Conditional | ModeDecl::Asymmetric => {
                ReferenceDistribution::conditional(src, self.kernel)
            }
            ModeDecl::Causal => ReferenceDistribution::interventional(
                src,
                self.graph.clone().expect("validated: graph present"),
                self.kernel,
            ),
        }
    }

    pub fn resolve_instance(
        &self,
        decl: &InstanceDecl,
        field: &str,
    ) -> Result<Vec<f64>, ConfigError> {
        let schema = self.schema();
        let values = if let Some(map) = &decl.values {
            for name in map.keys() {
                if schema.index_of(name).is_none() {
                    return Err(ConfigError::field(
                        format!("{field}.values.{name}"),
                        "not a feature of the schema",
                    ));
                }
            }
            (0..schema.len())
                .map(|j| {
                    let name = schema.name(j);
                    let path = format!("{field}.values.{name}");
                    let v = map
                        .get(name)
                        .ok_or_else(|| ConfigError::field(&path, "missing value"))?;
                    value_of(schema.kind(j), v, &path)
                })
                .collect::<Result<Vec<_>, _>>()?
        } else {
            let row = decl.row.expect("validated: values or row");
            match &self.source {
                Source::Dataset(ds) if row < ds.n_rows() => ds.row(row).to_vec(),
                Source::Dataset(ds) => {
                    return Err(ConfigError::field(
                        format!("{field}.row"),
                        format!("dataset has {} rows", ds.n_rows()),
                    ))
                }
                Source::Parametric(_) => {
                    return Err(ConfigError::field(
                        format!("{field}.row"),
                        "row references need CSV data",
                    ))
                }
            }
        };
        for (j, v) in values.iter().enumerate() {
            schema
                .check_value(j, *v)
                .map_err(|e| ConfigError::field(format!("{field}.values.{}", schema.name(j)), e))?;
        }
        Ok(values)
    }

    fn instance(&self) -> Result<Vec<f64>, ConfigError> {
        let decl = self
            .config
            .instance
            .as_ref()
            .ok_or_else(|| ConfigError::field("instance", "this command needs an instance"))?;
        self.resolve_instance(decl, "instance")
    }

    /// Configured `instances`, else the single `instance`, else a seeded sample
    /// of the population.
    fn instance_list(&self, fallback: usize) -> Result<Vec<Vec<f64>>, ConfigError> {
        if let Some(list) = &self.config.instances {
            return list
                .iter()
                .enumerate()
                .map(|(k, d)| self.resolve_instance(d, &format!("instances[{k}]")))
                .collect();
        }
        if self.config.instance.is_some() {
            return Ok(vec![self.instance()?]);
        }
        Ok(audit_instances(&self.source, fallback, self.config.seed))
    }

    fn require_exact(&self, command: Command) -> Result<(), ConfigError> {
        if self.config.estimator.kind == EstimatorKind::Sampled {
            return Err(ConfigError::field(
                "estimator.kind",
                format!("{} runs on the exact backend only", command.name()),
            ));
        }
        Ok(())
    }
}

/// Failure of a prepared run.
#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Compute(coalition_attrib::Error),
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<coalition_attrib::Error> for RunError {
    fn from(e: coalition_attrib::Error) -> Self {
        RunError::Compute(e)
    }
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("reports serialize to json")
}

fn explain_text(r: &AttributionReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "mode: {}", r.mode.as_str());
    let _ = writeln!(out, "estimator: {}", r.estimator.label());
    let _ = writeln!(out, "reference: {}", r.reference);
    let _ = writeln!(out, "f(x) = {}", r.prediction);
    let _ = writeln!(out, "phi_0 = {}", r.base);
    let _ = writeln!(
        out,
        "{:<20} {:>14} {:>14} {:>12}",
        "feature", "value", "phi", "se"
    );
    for (j, name) in r.features.iter().enumerate() {
        let se = r
            .standard_errors
            .as_ref()
            .map(|s| format!("{:.4e}", s[j]))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{:<20} {:>14.6} {:>14.6e} {:>12}",
            name, r.instance[j], r.phi[j], se
        );
    }
    out
}

fn explain(p: &Prepared) -> Result<Outcome, RunError> {
    let x = p.instance()?;
    let refd = p.reference()?;
    let exact = p.config.estimator.kind == EstimatorKind::Exact;
    let report = match (p.config.reference.mode, exact) {
        (ModeDecl::Marginal | ModeDecl::Conditional, true) => {
            exact_shapley(&p.model, &refd, &x, &p.exact_options())?
        }
        (ModeDecl::Marginal | ModeDecl::Conditional, false) => {
            sampled_shapley(&p.model, &refd, &x, &p.sample_options())?
        }
        (ModeDecl::Asymmetric, _) => {
            let graph = p.graph.as_ref().expect("validated: graph present");
            let opts = p.exact_options();
            asymmetric_shapley(
                &p.model,
                &refd,
                &x,
                graph,
                exact.then_some(&opts),
                &p.sample_options(),
            )?
        }
        (ModeDecl::Causal, true) => causal_shapley(&p.model, &refd, &x, &p.exact_options())?,
        (ModeDecl::Causal, false) => {
            sampled_causal_shapley(&p.model, &refd, &x, &p.sample_options())?
        }
    };
    Ok(Outcome {
        body: to_value(&report),
        csv: report.to_csv()?,
        text: explain_text(&report),
    })
}

fn deltas(p: &Prepared) -> Result<Outcome, RunError> {
    let x = p.instance()?;
    let name = p
        .config
        .deltas
        .feature
        .as_deref()
        .ok_or_else(|| ConfigError::field("deltas.feature", "deltas needs a feature name"))?;
    let j = p
        .schema()
        .index_of(name)
        .ok_or_else(|| ConfigError::field("deltas.feature", format!("unknown feature `{name}`")))?;
    if p.config.reference.mode == ModeDecl::Asymmetric {
        return Err(ConfigError::field(
            "reference.mode",
            "deltas use symmetric weights; choose marginal, conditional or causal",
        )
        .into());
    }
    let refd = p.reference()?;
    let backend = match p.config.estimator.kind {
        EstimatorKind::Exact => Backend::Exact(p.exact_options().config),
        EstimatorKind::Sampled => Backend::MonteCarlo {
            draws: p.config.estimator.reference_draws,
            seed: p.config.seed,
        },
    };
    let opts = DeltaOptions {
        tau: p.config.deltas.tau,
        zero_tolerance: p.config.tolerances.zero,
        force: p.config.estimator.force,
    };
    let report = coalition_deltas(&p.model, &refd, &x, j, &backend, &opts)?;
    let mut text = String::new();
    let _ = writeln!(text, "coalition deltas of {}", report.feature);
    let _ = writeln!(text, "phi = {}", report.phi);
    let _ = writeln!(text, "tau = {}", report.tau);
    let _ = writeln!(text, "max |delta| = {}", report.max_abs_delta);
    let _ = writeln!(
        text,
        "cancellation: {}",
        if report.cancellation { "yes" } else { "no" }
    );
    let _ = writeln!(text, "{:<30} {:>14} {:>12}", "coalition", "delta", "weight");
    for d in &report.deltas {
        let names: Vec<&str> = d.coalition.members().map(|i| p.schema().name(i)).collect();
        let _ = writeln!(
            text,
            "{:<30} {:>14.6e} {:>12.6}",
            format!("{{{}}}", names.join(", ")),
            d.delta,
            d.weight
        );
    }
    Ok(Outcome {
        body: to_value(&report),
        csv: report.to_csv()?,
        text,
    })
}

fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv write");
    for r in rows {
        w.write_record(&r).expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv output is utf-8")
}

fn fairness_screen(p: &Prepared) -> Result<Outcome, RunError> {
    p.require_exact(Command::FairnessScreen)?;
    let sensitive =
        p.config.fairness.sensitive.as_deref().ok_or_else(|| {
            ConfigError::field("fairness.sensitive", "name the sensitive feature")
        })?;
    if p.schema().index_of(sensitive).is_none() {
        return Err(ConfigError::field(
            "fairness.sensitive",
            format!("unknown feature `{sensitive}`"),
        )
        .into());
    }
    let explicit = match &p.config.instances {
        Some(_) => Some(p.instance_list(0)?),
        None => None,
    };
    let opts = FairnessOptions {
        tolerance: p.config.tolerances.fairness,
        seed: p.config.seed,
        max_instances: p
            .config
            .fairness
            .max_instances
            .unwrap_or(coalition_attrib::diagnostics::DEFAULT_SCREEN_CAP),
        exact: p.exact_options(),
    };
    let r =
        counterfactual_fairness_screen(&p.model, &p.source, sensitive, explicit.as_deref(), &opts)?;
    let csv = csv_table(
        &["instance", "phi", "verdict"],
        r.phi_sensitive.iter().enumerate().map(|(k, phi)| {
            vec![
                k.to_string(),
                phi.to_string(),
                r.verdict.as_str().to_string(),
            ]
        }),
    );
    Ok(Outcome {
        body: to_value(&r),
        csv,
        text: r.to_text(),
    })
}

fn compare(p: &Prepared) -> Result<Outcome, RunError> {
    p.require_exact(Command::CompareModes)?;
    let instances = p.instance_list(coalition_attrib::diagnostics::DEFAULT_SCREEN_CAP)?;
    let marginal = ReferenceDistribution::marginal(p.source.clone());
    let conditional = ReferenceDistribution::conditional(p.source.clone(), p.kernel)?;
    let r = compare_modes(
        &p.model,
        &marginal,
        &conditional,
        &instances,
        p.config.tolerances.gap,
        &p.exact_options(),
    )?;
    let csv = csv_table(
        &[
            "instance",
            "feature",
            "phi_marginal",
            "phi_conditional",
            "gap",
            "flagged",
        ],
        r.gaps.iter().map(|g| {
            vec![
                g.instance.to_string(),
                g.feature.clone(),
                g.phi_marginal.to_string(),
                g.phi_conditional.to_string(),
                g.gap.to_string(),
                g.flagged.to_string(),
            ]
        }),
    );
    Ok(Outcome {
        body: to_value(&r),
        csv,
        text: r.to_text(),
    })
}

fn validate(p: &Prepared) -> Result<Outcome, RunError> {
    p.require_exact(Command::Validate)?;
    let instances = p.instance_list(VALIDATE_SAMPLE)?;
    let refd = p.reference()?;
    let opts = PropertyOptions {
        tolerance: p.config.tolerances.property,
        seed: p.config.seed,
        exact: p.exact_options(),
    };
    let r = validate_properties(&p.model, &refd, &instances, &opts)?;
    let csv = csv_table(
        &["property", "status", "max_residual", "checks", "note"],
        r.properties.iter().map(|c| {
            vec![
                c.property.clone(),
                to_value(&c.status).as_str().unwrap_or_default().to_string(),
                c.max_residual.to_string(),
                c.checks.to_string(),
                c.note.clone(),
            ]
        }),
    );
    Ok(Outcome {
        body: to_value(&r),
        csv,
        text: r.to_text(),
    })
}

pub fn execute(command: Command, p: &Prepared) -> Result<Outcome, RunError> {
    match command {
        Command::Explain => explain(p),
        Command::Deltas => deltas(p),
        Command::FairnessScreen => fairness_screen(p),
        Command::CompareModes => compare(p),
        Command::Validate => validate(p),
    }
}
