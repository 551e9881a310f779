//! Causal DAGs over the feature schema.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coalition::Coalition;
use crate::error::{Error, Result};
use crate::schema::FeatureSchema;

/// On-disk form: `{"nodes": [names], "edges": [[parent, child], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub nodes: Vec<String>,
    #[serde(default)]
    pub edges: Vec<(String, String)>,
}

impl GraphSpec {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Graph(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }
}

/// A validated DAG indexed by schema position.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalGraph {
    parents: Vec<Vec<usize>>,
    topo: Vec<usize>,
}

impl CausalGraph {
    /// Builds from index pairs `(parent, child)` over `n` nodes.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut parents = vec![Vec::new(); n];
        for &(p, c) in edges {
            if p >= n || c >= n {
                return Err(Error::Graph(format!("edge ({p}, {c}) out of range")));
            }
            if p == c {
                return Err(Error::Graph(format!("self-loop on node {p}")));
            }
            if !parents[c].contains(&p) {
                parents[c].push(p);
            }
        }
        parents.iter_mut().for_each(|ps| ps.sort_unstable());
        let topo = topological_order(&parents)
            .ok_or_else(|| Error::Graph("graph contains a cycle".into()))?;
        Ok(Self { parents, topo })
    }

    /// Validates node names against the schema and maps them to indices.
    pub fn from_spec(spec: &GraphSpec, schema: &FeatureSchema) -> Result<Self> {
        let nodes: BTreeSet<&str> = spec.nodes.iter().map(String::as_str).collect();
        if nodes.len() != spec.nodes.len() {
            return Err(Error::Graph("duplicate node names".into()));
        }
        let features: BTreeSet<&str> = schema.names().collect();
        if nodes != features {
            let missing: Vec<_> = features.difference(&nodes).collect();
            let extra: Vec<_> = nodes.difference(&features).collect();
            return Err(Error::GraphSchemaMismatch(format!(
                "missing nodes {missing:?}, unknown nodes {extra:?}"
            )));
        }
        let idx = |name: &str| {
            schema.index_of(name).ok_or_else(|| {
                Error::GraphSchemaMismatch(format!("edge endpoint `{name}` is not a node"))
            })
        };
        let edges = spec
            .edges
            .iter()
            .map(|(p, c)| Ok((idx(p)?, idx(c)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_edges(schema.len(), &edges)
    }

    pub fn empty(n: usize) -> Self {
        Self::from_edges(n, &[]).expect("edgeless graph is acyclic")
    }

    pub fn n_nodes(&self) -> usize {
        self.parents.len()
    }

    pub fn parents(&self, node: usize) -> &[usize] {
        &self.parents[node]
    }

    pub fn is_root(&self, node: usize) -> bool {
        self.parents[node].is_empty()
    }

    pub fn has_edges(&self) -> bool {
        self.parents.iter().any(|p| !p.is_empty())
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.parents
            .iter()
            .enumerate()
            .flat_map(|(c, ps)| ps.iter().map(move |&p| (p, c)))
            .collect()
    }

    /// A topological order, smallest index first among ready nodes.
    pub fn topological_order(&self) -> &[usize] {
        &self.topo
    }

    /// Bitmask of each node's parents.
    pub fn parent_masks(&self) -> Vec<Coalition> {
        self.parents
            .iter()
            .map(|ps| Coalition::from_indices(ps.iter().copied()))
            .collect()
    }

    pub fn ancestors(&self, node: usize) -> Coalition {
        let mut seen = Coalition::EMPTY;
        let mut stack = self.parents[node].clone();
        while let Some(p) = stack.pop() {
            if !seen.contains(p) {
                seen = seen.with(p);
                stack.extend_from_slice(&self.parents[p]);
            }
        }
        seen
    }

    /// Graph with nodes `i` and `j` relabeled into each other.
    pub fn swap_nodes(&self, i: usize, j: usize) -> CausalGraph {
        let sw = |k: usize| {
            if k == i {
                j
            } else if k == j {
                i
            } else {
                k
            }
        };
        let edges: Vec<_> = self
            .edges()
            .into_iter()
            .map(|(p, c)| (sw(p), sw(c)))
            .collect();
        Self::from_edges(self.n_nodes(), &edges).expect("relabeling keeps acyclicity")
    }
}

// Kahn's algorithm with a min-ordered ready set.
fn topological_order(parents: &[Vec<usize>]) -> Option<Vec<usize>> {
    let n = parents.len();
    let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut children = vec![Vec::new(); n];
    for (c, ps) in parents.iter().enumerate() {
        for &p in ps {
            children[p].push(c);
        }
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(&next) = ready.iter().next() {
        ready.remove(&next);
        order.push(next);
        for &c in &children[next] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.insert(c);
            }
        }
    }
    (order.len() == n).then_some(order)
}
