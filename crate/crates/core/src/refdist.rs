//! Reference distributions used to impute the features dropped from a coalition.
//!
//! Four semantics are supported:
//!
//! * **Marginal**: dropped features come from the source's joint law of the
//!   dropped block, ignoring the instance (the `do`-operator view).
//! * **Conditional, empirical**: dataset rows reweighted by a product kernel on
//!   the kept features (exact match on discrete features, Gaussian kernel on
//!   continuous ones) and restricted to the `k` highest-weight rows.
//! * **Conditional, Gaussian**: the exact conditional of a joint normal spec.
//! * **Interventional over a DAG**: ancestral sampling with kept features
//!   clamped. Unclamped roots are drawn jointly from one source row (so an
//!   edgeless graph reproduces marginal imputation); every other unclamped node
//!   is drawn from its conditional given its parents.
//!
//! Every mode offers both Monte Carlo imputation and an exact expectation
//! (quadrature for parametric sources, weighted row enumeration for datasets).

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::coalition::Coalition;
use crate::data::{Dataset, Source};
use crate::error::{Error, Result};
use crate::expr::ModelExpr;
use crate::gaussian::Gaussian;
use crate::graph::CausalGraph;
use crate::numeric::CompensatedSum;
use crate::parametric::{Law, ParametricSpec};
use crate::quadrature::{gauss_hermite, law_rule, DENSE_ORDER};
use crate::rng::RandomStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Marginal,
    ConditionalEmpirical,
    ConditionalGaussian,
    InterventionalDag,
}

/// Kernel settings for empirical conditionals.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KernelParams {
    /// Bandwidth for every continuous feature; Silverman's rule when unset.
    pub bandwidth: Option<f64>,
    /// Rows kept after reweighting; `max(20, ceil(sqrt(n)))` when unset.
    pub neighbors: Option<usize>,
}

/// Settings for exact expectations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactConfig {
    /// Gauss rule order per integrated dimension.
    pub quadrature_order: usize,
    /// Upper bound on integrand evaluations for one coalition.
    pub max_points: usize,
}

impl Default for ExactConfig {
    fn default() -> Self {
        Self {
            quadrature_order: 32,
            max_points: 4_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExactKind {
    Quadrature,
    Enumeration,
}

#[derive(Debug, Clone)]
pub struct ReferenceDistribution {
    mode: Mode,
    source: Source,
    graph: Option<CausalGraph>,
    bandwidths: Vec<f64>,
    neighbors: usize,
}

fn silverman(ds: &Dataset, j: usize) -> f64 {
    let sd = ds.column_sd(j);
    if sd > 0.0 {
        1.06 * sd * (ds.n_rows() as f64).powf(-0.2)
    } else {
        1.0
    }
}

impl ReferenceDistribution {
    pub fn marginal(source: Source) -> Self {
        Self::build(Mode::Marginal, source, None, KernelParams::default())
            .expect("marginal mode has no parameters to validate")
    }

    /// Empirical conditional for datasets, exact Gaussian conditional for
    /// parametric sources.
    pub fn conditional(source: Source, params: KernelParams) -> Result<Self> {
        let mode = match source {
            Source::Dataset(_) => Mode::ConditionalEmpirical,
            Source::Parametric(_) => Mode::ConditionalGaussian,
        };
        Self::build(mode, source, None, params)
    }

    pub fn conditional_empirical(dataset: Dataset, params: KernelParams) -> Result<Self> {
        Self::build(
            Mode::ConditionalEmpirical,
            Source::Dataset(dataset),
            None,
            params,
        )
    }

    pub fn conditional_gaussian(spec: ParametricSpec) -> Result<Self> {
        Self::build(
            Mode::ConditionalGaussian,
            Source::Parametric(spec),
            None,
            KernelParams::default(),
        )
    }

    pub fn interventional(
        source: Source,
        graph: CausalGraph,
        params: KernelParams,
    ) -> Result<Self> {
        if graph.n_nodes() != source.schema().len() {
            return Err(Error::GraphSchemaMismatch(format!(
                "graph has {} nodes, schema has {} features",
                graph.n_nodes(),
                source.schema().len()
            )));
        }
        Self::build(Mode::InterventionalDag, source, Some(graph), params)
    }

    fn build(
        mode: Mode,
        source: Source,
        graph: Option<CausalGraph>,
        params: KernelParams,
    ) -> Result<Self> {
        if let Some(h) = params.bandwidth {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::Reference(format!("bandwidth must be > 0, got {h}")));
            }
        }
        if params.neighbors == Some(0) {
            return Err(Error::Reference("neighbor count must be >= 1".into()));
        }
        let (bandwidths, neighbors) = match &source {
            Source::Dataset(ds) => {
                let n = ds.n_rows();
                let bw = (0..ds.n_features())
                    .map(|j| params.bandwidth.unwrap_or_else(|| silverman(ds, j)))
                    .collect();
                let k = params
                    .neighbors
                    .unwrap_or_else(|| 20.max((n as f64).sqrt().ceil() as usize));
                (bw, k)
            }
            Source::Parametric(_) => (Vec::new(), 0),
        };
        Ok(Self {
            mode,
            source,
            graph,
            bandwidths,
            neighbors,
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn source(&self) -> &Source {
        &self.source
    }

    pub fn graph(&self) -> Option<&CausalGraph> {
        self.graph.as_ref()
    }

    pub fn n_features(&self) -> usize {
        self.source.schema().len()
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    pub fn neighbors(&self) -> usize {
        self.neighbors
    }

    /// Whether imputation conditions on the kept features by observation.
    pub fn is_conditional(&self) -> bool {
        matches!(
            self.mode,
            Mode::ConditionalEmpirical | Mode::ConditionalGaussian
        )
    }

    /// One-line description of the estimator, for reports.
    pub fn describe(&self) -> String {
        match (self.mode, &self.source) {
            (Mode::Marginal, _) => "marginal: dropped block drawn from its source joint law".into(),
            (Mode::ConditionalGaussian, _) => "conditional: exact Gaussian conditional".into(),
            (Mode::ConditionalEmpirical, _) | (Mode::InterventionalDag, Source::Dataset(_)) => {
                let h: Vec<String> = self.bandwidths.iter().map(|h| format!("{h:.6}")).collect();
                format!(
                    "{}: product kernel (exact match on discrete, Gaussian on continuous), bandwidths [{}], top-{} rows",
                    if self.mode == Mode::InterventionalDag {
                        "interventional DAG with kernel parent conditionals"
                    } else {
                        "conditional"
                    },
                    h.join(", "),
                    self.neighbors
                )
            }
            (Mode::InterventionalDag, Source::Parametric(_)) => {
                "interventional DAG: linear-Gaussian structural conditionals".into()
            }
        }
    }

    fn check_instance(&self, x: &[f64]) -> Result<()> {
        let schema = self.source.schema();
        if x.len() < schema.len() {
            return Err(Error::MissingFeature(schema.name(x.len()).to_string()));
        }
        Ok(())
    }

    fn overwrite(rows: &mut [Vec<f64>], s: Coalition, x: &[f64]) {
        for row in rows.iter_mut() {
            for j in s.members() {
                row[j] = x[j];
            }
        }
    }

    /// Whether relabeling features `i` and `j` leaves the reference law unchanged.
    pub fn is_swap_invariant(&self, i: usize, j: usize) -> bool {
        if i == j {
            return true;
        }
        let schema = self.source.schema();
        if schema.kind(i) != schema.kind(j) {
            return false;
        }
        let (hi, hj) = (
            self.bandwidths.get(i).copied().unwrap_or(1.0),
            self.bandwidths.get(j).copied().unwrap_or(1.0),
        );
        if self.mode != Mode::Marginal && (hi - hj).abs() > 1e-12 * hi.max(hj) {
            return false;
        }
        if let Some(g) = &self.graph {
            if g.swap_nodes(i, j) != *g {
                return false;
            }
        }
        match &self.source {
            Source::Parametric(spec) => match spec.joint() {
                None => spec.law(i) == spec.law(j),
                Some(g) => {
                    let m = g.dim();
                    let sw = |k: usize| {
                        if k == i {
                            j
                        } else if k == j {
                            i
                        } else {
                            k
                        }
                    };
                    (0..m).all(|a| {
                        g.mean[a] == g.mean[sw(a)]
                            && (0..m).all(|b| g.cov[(a, b)] == g.cov[(sw(a), sw(b))])
                    })
                }
            },
            Source::Dataset(ds) => {
                let key = |swap: bool| {
                    let mut rows: Vec<Vec<u64>> = ds
                        .rows()
                        .enumerate()
                        .map(|(r, row)| {
                            let mut v: Vec<u64> = row.iter().map(|x| x.to_bits()).collect();
                            if swap {
                                v.swap(i, j);
                            }
                            v.push(ds.weight(r).to_bits());
                            v
                        })
                        .collect();
                    rows.sort_unstable();
                    rows
                };
                key(false) == key(true)
            }
        }
    }

    // ---- Monte Carlo imputation ----

    /// Rows with `S` fixed to `x_S` and the rest drawn according to the mode.
    pub fn impute(
        &self,
        s: Coalition,
        x: &[f64],
        count: usize,
        stream: &mut RandomStream,
    ) -> Result<Vec<Vec<f64>>> {
        match self.mode {
            Mode::Marginal => self.impute_marginal(s, x, count, stream),
            Mode::ConditionalEmpirical | Mode::ConditionalGaussian => {
                self.impute_conditional(s, x, count, stream)
            }
            Mode::InterventionalDag => self.impute_interventional_dag(s, x, count, stream),
        }
    }

    /// Dropped block drawn from the source joint, ignoring `x_S`.
    pub fn impute_marginal(
        &self,
        s: Coalition,
        x: &[f64],
        count: usize,
        stream: &mut RandomStream,
    ) -> Result<Vec<Vec<f64>>> {
        self.check_instance(x)?;
        let mut rows = self.source.sample(count, stream);
        Self::overwrite(&mut rows, s, x);
        Ok(rows)
    }

    pub fn impute_conditional(
        &self,
        s: Coalition,
        x: &[f64],
        count: usize,
        stream: &mut RandomStream,
    ) -> Result<Vec<Vec<f64>>> {
        self.check_instance(x)?;
        match (&self.mode, &self.source) {
            (Mode::ConditionalEmpirical, Source::Dataset(ds)) => {
                let cond: Vec<usize> = s.members().collect();
                let vals: Vec<f64> = cond.iter().map(|&j| x[j]).collect();
                let selected = self.kernel_select(ds, &cond, &vals)?;
                let sampler = WeightedIndex::new(selected.iter().map(|(_, w)| *w))
                    .map_err(|e| Error::NoSupport(e.to_string()))?;
                let mut rows: Vec<Vec<f64>> = (0..count)
                    .map(|_| ds.row(selected[sampler.sample(stream)].0).to_vec())
                    .collect();
                Self::overwrite(&mut rows, s, x);
                Ok(rows)
            }
            (Mode::ConditionalGaussian, Source::Parametric(spec)) => match spec.joint() {
                None => self.impute_marginal(s, x, count, stream),
                Some(g) => {
                    let (dims, cond) = self.gaussian_conditional(g, s, x);
                    let l = cond.factor();
                    let mut rows = Vec::with_capacity(count);
                    for _ in 0..count {
                        let mut row = x[..self.n_features()].to_vec();
                        let z = DVector::from_fn(l.ncols(), |_, _| {
                            stream.sample::<f64, _>(StandardNormal)
                        });
                        let v = &cond.mean + &l * z;
                        for (i, &j) in dims.iter().enumerate() {
                            row[j] = v[i];
                        }
                        rows.push(row);
                    }
                    Ok(rows)
                }
            },
            _ => Err(Error::Reference(
                "conditional imputation requires a conditional reference".into(),
            )),
        }
    }

    pub fn impute_interventional_dag(
        &self,
        s: Coalition,
        x: &[f64],
        count: usize,
        stream: &mut RandomStream,
    ) -> Result<Vec<Vec<f64>>> {
        self.check_instance(x)?;
        let graph = match (&self.mode, &self.graph) {
            (Mode::InterventionalDag, Some(g)) => g,
            _ => {
                return Err(Error::Reference(
                    "interventional imputation requires a DAG reference".into(),
                ))
            }
        };
        match &self.source {
            Source::Parametric(spec) => match spec.joint() {
                None => self.impute_marginal(s, x, count, stream),
                Some(g) => {
                    let (dims, law) = dag_gaussian(g, graph, s, x)?;
                    let l = law.factor();
                    Ok((0..count)
                        .map(|_| {
                            let mut row = x[..self.n_features()].to_vec();
                            let z = DVector::from_fn(l.ncols(), |_, _| {
                                stream.sample::<f64, _>(StandardNormal)
                            });
                            let v = &law.mean + &l * z;
                            for (i, &j) in dims.iter().enumerate() {
                                row[j] = v[i];
                            }
                            row
                        })
                        .collect())
                }
            },
            Source::Dataset(ds) => {
                let m = self.n_features();
                let free_roots: Vec<usize> = (0..m)
                    .filter(|&j| graph.is_root(j) && !s.contains(j))
                    .collect();
                let mut tables: HashMap<(usize, Vec<u64>), (Vec<f64>, WeightedIndex<f64>)> =
                    HashMap::new();
                let mut rows = Vec::with_capacity(count);
                for _ in 0..count {
                    let mut row = x[..m].to_vec();
                    if !free_roots.is_empty() {
                        let r = ds.row(ds.sample_index(stream));
                        for &j in &free_roots {
                            row[j] = r[j];
                        }
                    }
                    for &node in graph.topological_order() {
                        if s.contains(node) || graph.is_root(node) {
                            continue;
                        }
                        let parents = graph.parents(node);
                        let key = (node, parents.iter().map(|&p| row[p].to_bits()).collect());
                        if !tables.contains_key(&key) {
                            let pvals: Vec<f64> = parents.iter().map(|&p| row[p]).collect();
                            let table = self.child_table(ds, node, parents, &pvals)?;
                            let sampler = WeightedIndex::new(table.iter().map(|(_, w)| *w))
                                .map_err(|e| Error::NoSupport(e.to_string()))?;
                            tables.insert(
                                key.clone(),
                                (table.into_iter().map(|(v, _)| v).collect(), sampler),
                            );
                        }
                        let (values, sampler) = &tables[&key];
                        row[node] = values[sampler.sample(stream)];
                    }
                    rows.push(row);
                }
                Ok(rows)
            }
        }
    }

    // ---- exact expectations ----

    /// `E[f(x_S, X_{S-bar})]` under the mode's reference law, computed without
    /// sampling.
    pub fn expectation(
        &self,
        model: &ModelExpr,
        s: Coalition,
        x: &[f64],
        cfg: &ExactConfig,
    ) -> Result<(f64, ExactKind)> {
        self.check_instance(x)?;
        let m = self.n_features();
        let kind = match self.source {
            Source::Dataset(_) => ExactKind::Enumeration,
            Source::Parametric(_) => ExactKind::Quadrature,
        };
        if s == Coalition::full(m) {
            return Ok((model.eval(&x[..m])?, kind));
        }
        let mut acc = Accumulator::new(model, x, m);
        match (self.mode, &self.source) {
            (Mode::Marginal, Source::Dataset(ds)) => {
                let dropped: Vec<usize> = s.complement(m).members().collect();
                for (i, r) in ds.rows().enumerate() {
                    acc.add_row(ds.weight(i), &dropped, r)?;
                }
            }
            (Mode::ConditionalEmpirical, Source::Dataset(ds)) => {
                let cond: Vec<usize> = s.members().collect();
                let vals: Vec<f64> = cond.iter().map(|&j| x[j]).collect();
                let dropped: Vec<usize> = s.complement(m).members().collect();
                for (i, w) in self.kernel_select(ds, &cond, &vals)? {
                    acc.add_row(w, &dropped, ds.row(i))?;
                }
            }
            (Mode::InterventionalDag, Source::Dataset(ds)) => {
                let graph = self.graph.as_ref().expect("DAG mode carries a graph");
                self.dag_enumerate(ds, graph, s, cfg, &mut acc)?;
            }
            (Mode::Marginal, Source::Parametric(spec)) => match spec.joint() {
                None => independent_tensor(spec, model, s, cfg, &mut acc)?,
                Some(g) => {
                    let dims: Vec<usize> = s.complement(m).members().collect();
                    gaussian_block(model, &dims, &g.marginal(&dims), cfg, &mut acc)?;
                }
            },
            (Mode::ConditionalGaussian, Source::Parametric(spec)) => match spec.joint() {
                None => independent_tensor(spec, model, s, cfg, &mut acc)?,
                Some(g) => {
                    let (dims, cond) = self.gaussian_conditional(g, s, x);
                    gaussian_block(model, &dims, &cond, cfg, &mut acc)?;
                }
            },
            (Mode::InterventionalDag, Source::Parametric(spec)) => match spec.joint() {
                None => independent_tensor(spec, model, s, cfg, &mut acc)?,
                Some(g) => {
                    let graph = self.graph.as_ref().expect("DAG mode carries a graph");
                    let (dims, law) = dag_gaussian(g, graph, s, x)?;
                    gaussian_block(model, &dims, &law, cfg, &mut acc)?;
                }
            },
            (mode, _) => {
                return Err(Error::Reference(format!(
                    "mode {mode:?} does not match its source"
                )))
            }
        }
        Ok((acc.mean(), kind))
    }

    // ---- helpers ----

    fn gaussian_conditional(
        &self,
        g: &Gaussian,
        s: Coalition,
        x: &[f64],
    ) -> (Vec<usize>, Gaussian) {
        let m = self.n_features();
        let given: Vec<usize> = s.members().collect();
        let rest: Vec<usize> = s.complement(m).members().collect();
        let vals: Vec<f64> = given.iter().map(|&j| x[j]).collect();
        let c = g.conditional(&rest, &given, &vals);
        (rest, c)
    }

    /// Rows kept by the conditioning kernel and their normalized weights.
    ///
    /// Rows tied with the `k`-th largest weight are all kept.
    pub fn kernel_select(
        &self,
        ds: &Dataset,
        cond: &[usize],
        vals: &[f64],
    ) -> Result<Vec<(usize, f64)>> {
        let schema = ds.schema();
        let mut cands: Vec<(usize, f64)> = Vec::new();
        'rows: for (i, r) in ds.rows().enumerate() {
            let w = ds.weight(i);
            if w <= 0.0 {
                continue;
            }
            let mut lw = w.ln();
            for (&j, &v) in cond.iter().zip(vals) {
                if schema.kind(j).is_discrete() {
                    if r[j] != v {
                        continue 'rows;
                    }
                } else {
                    let z = (r[j] - v) / self.bandwidths[j];
                    lw -= 0.5 * z * z;
                }
            }
            cands.push((i, lw));
        }
        if cands.is_empty() {
            let desc: Vec<String> = cond
                .iter()
                .zip(vals)
                .map(|(&j, v)| format!("{}={v}", schema.name(j)))
                .collect();
            return Err(Error::NoSupport(desc.join(", ")));
        }
        if cands.len() > self.neighbors {
            let mut lws: Vec<f64> = cands.iter().map(|c| c.1).collect();
            let k = self.neighbors;
            lws.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
            let cut = lws[k - 1];
            cands.retain(|c| c.1 >= cut);
        }
        let top = cands.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = cands.iter().map(|c| (c.1 - top).exp()).sum();
        Ok(cands
            .into_iter()
            .map(|(i, lw)| (i, (lw - top).exp() / total))
            .collect())
    }

    // Distribution of `node` given parent values, aggregated by distinct value.
    fn child_table(
        &self,
        ds: &Dataset,
        node: usize,
        parents: &[usize],
        pvals: &[f64],
    ) -> Result<Vec<(f64, f64)>> {
        let selected = self.kernel_select(ds, parents, pvals)?;
        let mut out: Vec<(f64, f64)> = Vec::new();
        let mut seen: HashMap<u64, usize> = HashMap::new();
        for (i, w) in selected {
            let v = ds.row(i)[node];
            match seen.get(&v.to_bits()) {
                Some(&k) => out[k].1 += w,
                None => {
                    seen.insert(v.to_bits(), out.len());
                    out.push((v, w));
                }
            }
        }
        Ok(out)
    }

    fn dag_enumerate(
        &self,
        ds: &Dataset,
        graph: &CausalGraph,
        s: Coalition,
        cfg: &ExactConfig,
        acc: &mut Accumulator,
    ) -> Result<()> {
        let m = self.n_features();
        let free_roots: Vec<usize> = (0..m)
            .filter(|&j| graph.is_root(j) && !s.contains(j))
            .collect();
        // distinct root tuples with aggregated weights, in first-seen order
        let mut tuples: Vec<(Vec<f64>, f64)> = Vec::new();
        if free_roots.is_empty() {
            tuples.push((Vec::new(), 1.0));
        } else {
            let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
            for (i, r) in ds.rows().enumerate() {
                let t: Vec<f64> = free_roots.iter().map(|&j| r[j]).collect();
                let key: Vec<u64> = t.iter().map(|v| v.to_bits()).collect();
                let w = ds.weight(i) / ds.total_weight();
                match seen.get(&key) {
                    Some(&k) => tuples[k].1 += w,
                    None => {
                        seen.insert(key, tuples.len());
                        tuples.push((t, w));
                    }
                }
            }
        }
        let pending: Vec<usize> = graph
            .topological_order()
            .iter()
            .copied()
            .filter(|&j| !s.contains(j) && !graph.is_root(j))
            .collect();
        let mut walk = DagWalk {
            refd: self,
            ds,
            graph,
            pending: &pending,
            tables: HashMap::new(),
            leaves: 0,
            budget: cfg.max_points,
        };
        for (t, w) in tuples {
            let mut row = acc.base.clone();
            for (&j, v) in free_roots.iter().zip(&t) {
                row[j] = *v;
            }
            walk.descend(0, &mut row, w, acc)?;
        }
        Ok(())
    }
}

struct DagWalk<'a> {
    refd: &'a ReferenceDistribution,
    ds: &'a Dataset,
    graph: &'a CausalGraph,
    pending: &'a [usize],
    tables: HashMap<(usize, Vec<u64>), Vec<(f64, f64)>>,
    leaves: usize,
    budget: usize,
}

impl DagWalk<'_> {
    fn descend(
        &mut self,
        depth: usize,
        row: &mut Vec<f64>,
        weight: f64,
        acc: &mut Accumulator,
    ) -> Result<()> {
        if depth == self.pending.len() {
            self.leaves += 1;
            if self.leaves > self.budget {
                return Err(Error::QuadratureUnavailable(format!(
                    "interventional enumeration exceeds {} points",
                    self.budget
                )));
            }
            return acc.add_full(weight, row);
        }
        let node = self.pending[depth];
        let parents = self.graph.parents(node);
        let key = (
            node,
            parents
                .iter()
                .map(|&p| row[p].to_bits())
                .collect::<Vec<_>>(),
        );
        if !self.tables.contains_key(&key) {
            let pvals: Vec<f64> = parents.iter().map(|&p| row[p]).collect();
            let table = self.refd.child_table(self.ds, node, parents, &pvals)?;
            self.tables.insert(key.clone(), table);
        }
        let table = self.tables[&key].clone();
        let saved = row[node];
        for (v, w) in table {
            row[node] = v;
            self.descend(depth + 1, row, weight * w, acc)?;
        }
        row[node] = saved;
        Ok(())
    }
}

/// Weighted average of model outputs over visited points.
struct Accumulator<'a> {
    model: &'a ModelExpr,
    base: Vec<f64>,
    scratch: Vec<f64>,
    sum: CompensatedSum,
    weight: CompensatedSum,
}

impl<'a> Accumulator<'a> {
    fn new(model: &'a ModelExpr, x: &[f64], m: usize) -> Self {
        Self {
            model,
            base: x[..m].to_vec(),
            scratch: x[..m].to_vec(),
            sum: CompensatedSum::default(),
            weight: CompensatedSum::default(),
        }
    }

    fn add_full(&mut self, w: f64, row: &[f64]) -> Result<()> {
        if w == 0.0 {
            return Ok(());
        }
        let y = self.model.eval(row)?;
        self.sum.add(w * y);
        self.weight.add(w);
        Ok(())
    }

    // `dropped` coordinates from `source_row`, the rest from the instance.
    fn add_row(&mut self, w: f64, dropped: &[usize], source_row: &[f64]) -> Result<()> {
        for &j in dropped {
            self.scratch[j] = source_row[j];
        }
        let row = std::mem::take(&mut self.scratch);
        let out = self.add_full(w, &row);
        self.scratch = row;
        out
    }

    fn mean(&self) -> f64 {
        self.sum.value() / self.weight.value()
    }
}

fn check_budget(sizes: &[usize], budget: usize) -> Result<()> {
    let total = sizes
        .iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .unwrap_or(usize::MAX);
    if total > budget {
        return Err(Error::QuadratureUnavailable(format!(
            "tensor rule needs {total} points, budget is {budget}; lower the quadrature order or use sampling"
        )));
    }
    Ok(())
}

// Odometer over a tensor product of 1-D rules; `place` writes one point.
fn tensor_product(
    rules: &[Vec<(f64, f64)>],
    mut place: impl FnMut(&[usize], f64) -> Result<()>,
) -> Result<()> {
    let d = rules.len();
    if rules.iter().any(Vec::is_empty) {
        return Ok(());
    }
    let mut idx = vec![0usize; d];
    loop {
        let w: f64 = idx.iter().zip(rules).map(|(&i, r)| r[i].1).product();
        place(&idx, w)?;
        let mut k = 0;
        loop {
            if k == d {
                return Ok(());
            }
            idx[k] += 1;
            if idx[k] < rules[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

fn independent_tensor(
    spec: &ParametricSpec,
    model: &ModelExpr,
    s: Coalition,
    cfg: &ExactConfig,
    acc: &mut Accumulator,
) -> Result<()> {
    let m = spec.schema().len();
    // dropped features the model never reads need no integration
    let used = model.referenced_indices();
    let dims: Vec<usize> = s
        .complement(m)
        .members()
        .filter(|j| used.contains(j))
        .collect();
    let rules: Vec<Vec<(f64, f64)>> = dims
        .iter()
        .map(|&j| law_rule(spec.law(j), cfg.quadrature_order, &model.thresholds_for(j)))
        .collect();
    check_budget(
        &rules.iter().map(Vec::len).collect::<Vec<_>>(),
        cfg.max_points,
    )?;
    let mut row = acc.base.clone();
    tensor_product(&rules, |idx, w| {
        for (k, &j) in dims.iter().enumerate() {
            row[j] = rules[k][idx[k]].0;
        }
        acc.add_full(w, &row)
    })
}

fn gaussian_block(
    model: &ModelExpr,
    dims: &[usize],
    law: &Gaussian,
    cfg: &ExactConfig,
    acc: &mut Accumulator,
) -> Result<()> {
    let used = model.referenced_indices();
    let keep: Vec<usize> = (0..dims.len())
        .filter(|&i| used.contains(&dims[i]))
        .collect();
    let dims: Vec<usize> = keep.iter().map(|&i| dims[i]).collect();
    let law = law.marginal(&keep);
    let mut row = acc.base.clone();
    if dims.is_empty() {
        return acc.add_full(1.0, &row);
    }
    let l = law.factor();
    let r = l.ncols();
    let rules: Vec<Vec<(f64, f64)>> = if dims.len() == 1 && r == 1 {
        let sd = l[(0, 0)].abs();
        let rule = law_rule(
            &Law::Normal { mean: 0.0, sd: 1.0 },
            cfg.quadrature_order,
            &model
                .thresholds_for(dims[0])
                .iter()
                .map(|c| (c - law.mean[0]) / sd)
                .collect::<Vec<_>>(),
        );
        vec![rule]
    } else {
        let discontinuous = dims.iter().any(|&j| model.has_discontinuity_in(j));
        let k = if discontinuous {
            cfg.quadrature_order.max(DENSE_ORDER)
        } else {
            cfg.quadrature_order
        };
        let rule: Vec<(f64, f64)> = gauss_hermite(k).pairs().collect();
        vec![rule; r]
    };
    check_budget(
        &rules.iter().map(Vec::len).collect::<Vec<_>>(),
        cfg.max_points,
    )?;
    let mut z = vec![0.0; r];
    tensor_product(&rules, |idx, w| {
        for c in 0..r {
            z[c] = rules[c][idx[c]].0;
        }
        for (i, &j) in dims.iter().enumerate() {
            let mut v = law.mean[i];
            for (c, zc) in z.iter().enumerate() {
                v += l[(i, c)] * zc;
            }
            row[j] = v;
        }
        acc.add_full(w, &row)
    })
}

/// Law of the unclamped features under `do(X_S = x_S)` for a linear-Gaussian
/// structural model whose node conditionals are regressions read off the
/// joint covariance.
fn dag_gaussian(
    g: &Gaussian,
    graph: &CausalGraph,
    s: Coalition,
    x: &[f64],
) -> Result<(Vec<usize>, Gaussian)> {
    let m = g.dim();
    let free_roots: Vec<usize> = (0..m)
        .filter(|&j| graph.is_root(j) && !s.contains(j))
        .collect();
    let root_factor = g.marginal(&free_roots).factor();
    let children: Vec<usize> = graph
        .topological_order()
        .iter()
        .copied()
        .filter(|&j| !s.contains(j) && !graph.is_root(j))
        .collect();
    let latent = root_factor.ncols() + children.len();
    let mut constant = vec![0.0; m];
    let mut coeffs = DMatrix::<f64>::zeros(m, latent);
    for &node in graph.topological_order() {
        if s.contains(node) {
            constant[node] = x[node];
        } else if graph.is_root(node) {
            let i = free_roots
                .iter()
                .position(|&r| r == node)
                .expect("free root");
            constant[node] = g.mean[node];
            for c in 0..root_factor.ncols() {
                coeffs[(node, c)] = root_factor[(i, c)];
            }
        } else {
            let parents = graph.parents(node);
            let (beta, resid) = g.regression(node, parents);
            let mut c0 = g.mean[node];
            let mut row = DVector::<f64>::zeros(latent);
            for (b, &p) in beta.iter().zip(parents) {
                c0 += b * (constant[p] - g.mean[p]);
                row += coeffs.row(p).transpose() * *b;
            }
            let own =
                root_factor.ncols() + children.iter().position(|&c| c == node).expect("child");
            row[own] += resid.sqrt();
            constant[node] = c0;
            coeffs.set_row(node, &row.transpose());
        }
    }
    let dims: Vec<usize> = s.complement(m).members().collect();
    let a = DMatrix::from_fn(dims.len(), latent, |i, c| coeffs[(dims[i], c)]);
    let mean = DVector::from_fn(dims.len(), |i, _| constant[dims[i]]);
    let cov = &a * a.transpose();
    Ok((dims, Gaussian::new(mean, cov)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_model;
    use crate::schema::{Feature, FeatureKind, FeatureSchema};
    use std::sync::Arc;

    fn binary_schema(names: &[&str]) -> Arc<FeatureSchema> {
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

    fn col_mean(rows: &[Vec<f64>], j: usize) -> f64 {
        rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64
    }

    fn a1_spec() -> ParametricSpec {
        let s = Arc::new(FeatureSchema::continuous(&["x1", "x2"]).unwrap());
        ParametricSpec::independent(
            s,
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
        .unwrap()
    }

    #[test]
    fn full_coalition_reproduces_instance() {
        let r = ReferenceDistribution::marginal(Source::Parametric(a1_spec()));
        let mut st = RandomStream::new(0, "t", 0);
        let rows = r
            .impute_marginal(Coalition::full(2), &[0.3, 0.7], 20, &mut st)
            .unwrap();
        assert!(rows.iter().all(|row| row == &[0.3, 0.7]));
    }

    #[test]
    fn empty_coalition_draws_source_laws() {
        let r = ReferenceDistribution::marginal(Source::Parametric(a1_spec()));
        let mut st = RandomStream::new(0, "t", 0);
        let rows = r
            .impute_marginal(Coalition::EMPTY, &[0.0, 0.0], 100_000, &mut st)
            .unwrap();
        assert!((col_mean(&rows, 0) - 0.5).abs() < 0.02);
        assert!((col_mean(&rows, 1) - 1.5).abs() < 0.02);
    }

    #[test]
    fn marginal_ignores_correlation() {
        let s = Arc::new(FeatureSchema::continuous(&["x1", "x2"]).unwrap());
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, i as f64]).collect();
        let ds = Dataset::new(s, rows, None).unwrap();
        let r = ReferenceDistribution::marginal(Source::Dataset(ds));
        let mut st = RandomStream::new(0, "t", 0);
        let out = r
            .impute_marginal(Coalition::from_indices([0]), &[0.0, 0.0], 1000, &mut st)
            .unwrap();
        assert!(out.iter().all(|row| row[0] == 0.0));
        assert!(out.iter().any(|row| row[1] != 0.0));
        assert!((col_mean(&out, 1) - 4.5).abs() < 0.3);
    }

    fn four_corner_dataset() -> Dataset {
        Dataset::new(
            binary_schema(&["x1", "x2"]),
            vec![
                vec![1.0, 1.0],
                vec![1.0, 0.0],
                vec![0.0, 1.0],
                vec![0.0, 0.0],
            ],
            None,
        )
        .unwrap()
    }

    #[test]
    fn exact_match_conditioning() {
        let r = ReferenceDistribution::conditional_empirical(
            four_corner_dataset(),
            KernelParams::default(),
        )
        .unwrap();
        let mut st = RandomStream::new(0, "t", 0);
        let out = r
            .impute_conditional(Coalition::from_indices([0]), &[1.0, 0.0], 20_000, &mut st)
            .unwrap();
        assert!(out.iter().all(|row| row[0] == 1.0));
        assert!((col_mean(&out, 1) - 0.5).abs() < 0.02);
        // exact oracle: matching rows are (1,1) and (1,0)
        let sel = r.kernel_select(
            match r.source() {
                Source::Dataset(d) => d,
                _ => unreachable!(),
            },
            &[0],
            &[1.0],
        );
        assert_eq!(sel.unwrap(), vec![(0, 0.5), (1, 0.5)]);
    }

    #[test]
    fn no_support_on_unseen_discrete_value() {
        let ds = Dataset::new(
            binary_schema(&["x1", "x2"]),
            vec![vec![1.0, 1.0], vec![1.0, 0.0]],
            None,
        )
        .unwrap();
        let r = ReferenceDistribution::conditional_empirical(ds, KernelParams::default()).unwrap();
        let mut st = RandomStream::new(0, "t", 0);
        assert!(matches!(
            r.impute_conditional(Coalition::from_indices([0]), &[0.0, 0.0], 5, &mut st),
            Err(Error::NoSupport(_))
        ));
    }

    #[test]
    fn degenerate_gaussian_conditional() {
        let s = Arc::new(FeatureSchema::continuous(&["x1", "x2"]).unwrap());
        let spec = ParametricSpec::joint_gaussian(
            s,
            vec![
                Law::Normal { mean: 0.0, sd: 1.0 },
                Law::Normal { mean: 0.0, sd: 1.0 },
            ],
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]),
        )
        .unwrap();
        let r = ReferenceDistribution::conditional_gaussian(spec).unwrap();
        let mut st = RandomStream::new(0, "t", 0);
        let out = r
            .impute_conditional(Coalition::from_indices([0]), &[0.0, 5.0], 100, &mut st)
            .unwrap();
        assert!(out.iter().all(|row| row[1].abs() < 1e-9));
    }

    fn chain_dataset() -> Dataset {
        Dataset::new(
            binary_schema(&["x1", "x2"]),
            vec![
                vec![0.0, 0.0],
                vec![1.0, 1.0],
                vec![1.0, 1.0],
                vec![0.0, 0.0],
            ],
            None,
        )
        .unwrap()
    }

    #[test]
    fn intervention_moves_descendants_only() {
        let g = CausalGraph::from_edges(2, &[(0, 1)]).unwrap();
        let r = ReferenceDistribution::interventional(
            Source::Dataset(chain_dataset()),
            g,
            KernelParams::default(),
        )
        .unwrap();
        let mut st = RandomStream::new(0, "t", 0);
        let down = r
            .impute_interventional_dag(Coalition::from_indices([0]), &[0.0, 1.0], 500, &mut st)
            .unwrap();
        assert!(down.iter().all(|row| row == &[0.0, 0.0]));
        let up = r
            .impute_interventional_dag(Coalition::from_indices([1]), &[0.0, 0.0], 20_000, &mut st)
            .unwrap();
        assert!(up.iter().all(|row| row[1] == 0.0));
        assert!((col_mean(&up, 0) - 0.5).abs() < 0.02);
    }

    #[test]
    fn exact_value_matches_closed_form_means() {
        let spec = a1_spec();
        let m = parse_model("x1 + x2", spec.schema_arc()).unwrap();
        let r = ReferenceDistribution::marginal(Source::Parametric(spec));
        let (v, kind) = r
            .expectation(&m, Coalition::EMPTY, &[0.0, 0.0], &ExactConfig::default())
            .unwrap();
        assert!((v - 2.0).abs() < 1e-12);
        assert_eq!(kind, ExactKind::Quadrature);
    }

    #[test]
    fn exact_dag_matches_hand_simulation() {
        let g = CausalGraph::from_edges(2, &[(0, 1)]).unwrap();
        let ds = chain_dataset();
        let m = parse_model("x1 + x2", ds.schema_arc()).unwrap();
        let r =
            ReferenceDistribution::interventional(Source::Dataset(ds), g, KernelParams::default())
                .unwrap();
        let cfg = ExactConfig::default();
        let v = |s: Coalition| r.expectation(&m, s, &[1.0, 1.0], &cfg).unwrap().0;
        assert_eq!(v(Coalition::EMPTY), 1.0);
        assert_eq!(v(Coalition::from_indices([0])), 2.0);
        assert_eq!(v(Coalition::from_indices([1])), 1.5);
        assert_eq!(v(Coalition::full(2)), 2.0);
    }

    #[test]
    fn linear_gaussian_dag_propagates_interventions() {
        // x2 = x1 + e with var(e) = 1
        let s = Arc::new(FeatureSchema::continuous(&["x1", "x2"]).unwrap());
        let spec = ParametricSpec::joint_gaussian(
            s,
            vec![
                Law::Normal { mean: 0.0, sd: 1.0 },
                Law::Normal {
                    mean: 0.0,
                    sd: 2f64.sqrt(),
                },
            ],
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 2.0]),
        )
        .unwrap();
        let m = parse_model("x2 ^ 2", spec.schema_arc()).unwrap();
        let g = CausalGraph::from_edges(2, &[(0, 1)]).unwrap();
        let r = ReferenceDistribution::interventional(
            Source::Parametric(spec),
            g,
            KernelParams::default(),
        )
        .unwrap();
        let cfg = ExactConfig::default();
        // do(x1 = 3): x2 ~ N(3, 1), E x2^2 = 10
        let (v, _) = r
            .expectation(&m, Coalition::from_indices([0]), &[3.0, 0.0], &cfg)
            .unwrap();
        assert!((v - 10.0).abs() < 1e-9, "{v}");
        let (v, _) = r
            .expectation(&m, Coalition::EMPTY, &[3.0, 0.0], &cfg)
            .unwrap();
        assert!((v - 2.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn budget_guard() {
        let spec = a1_spec();
        let m = parse_model("x1 * x2", spec.schema_arc()).unwrap();
        let r = ReferenceDistribution::marginal(Source::Parametric(spec));
        let cfg = ExactConfig {
            quadrature_order: 100,
            max_points: 1000,
        };
        assert!(matches!(
            r.expectation(&m, Coalition::EMPTY, &[0.0, 0.0], &cfg),
            Err(Error::QuadratureUnavailable(_))
        ));
    }
}
