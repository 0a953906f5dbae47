//! In-memory process graphs: typed, optionally labeled flow nodes connected
//! by sequence flows.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("flow `{flow}` references unknown node `{node}`")]
    DanglingFlow { flow: String, node: String },
    #[error("node id must be nonempty")]
    EmptyId,
}

/// Kind of a flow node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementType {
    StartEvent,
    EndEvent,
    IntermediateEvent,
    Task,
    ExclusiveGateway,
    ParallelGateway,
    InclusiveGateway,
    /// Any other flow-node tag, kept verbatim (e.g. `subProcess`).
    Other(String),
}

impl ElementType {
    /// Human-readable name used when rendering slices as text.
    pub fn display_name(&self) -> String {
        match self {
            ElementType::StartEvent => "Start Event".into(),
            ElementType::EndEvent => "End Event".into(),
            ElementType::IntermediateEvent => "Intermediate Event".into(),
            ElementType::Task => "Task".into(),
            ElementType::ExclusiveGateway => "Exclusive Gateway".into(),
            ElementType::ParallelGateway => "Parallel Gateway".into(),
            ElementType::InclusiveGateway => "Inclusive Gateway".into(),
            ElementType::Other(tag) => split_camel_case(tag),
        }
    }

    pub fn is_gateway(&self) -> bool {
        match self {
            ElementType::ExclusiveGateway
            | ElementType::ParallelGateway
            | ElementType::InclusiveGateway => true,
            ElementType::Other(tag) => tag.ends_with("Gateway"),
            _ => false,
        }
    }

    pub fn is_end_event(&self) -> bool {
        matches!(self, ElementType::EndEvent)
    }

    /// Gateways and end events are left out of candidates and ground truth
    /// in filtered mode.
    pub fn is_filtered_out(&self) -> bool {
        self.is_gateway() || self.is_end_event()
    }
}

impl fmt::Display for ElementType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display_name())
    }
}

/// `subProcess` -> `Sub Process`, `eventBasedGateway` -> `Event Based Gateway`.
fn split_camel_case(tag: &str) -> String {
    let mut out = String::with_capacity(tag.len() + 4);
    for (i, c) in tag.chars().enumerate() {
        if i == 0 {
            out.extend(c.to_uppercase());
        } else if c.is_uppercase() {
            out.push(' ');
            out.push(c);
        } else {
            out.push(c);
        }
    }
    out
}

/// Trims and collapses internal whitespace; case is preserved.
pub fn normalize_label(raw: &str) -> Option<String> {
    let collapsed = raw.split_whitespace().collect::<Vec<_>>().join(" ");
    if collapsed.is_empty() {
        None
    } else {
        Some(collapsed)
    }
}

/// A (label, type) pair: what a recommendation or ground-truth entry names.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Element {
    pub label: Option<String>,
    #[serde(rename = "type")]
    pub element_type: ElementType,
}

impl Element {
    pub fn new(label: Option<&str>, element_type: ElementType) -> Self {
        Element {
            label: label.and_then(normalize_label),
            element_type,
        }
    }

    /// `"<Type>: <label>"`, or the bare type name when unlabeled.
    pub fn sentence(&self) -> String {
        match &self.label {
            Some(label) => format!("{}: {}", self.element_type.display_name(), label),
            None => self.element_type.display_name(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub label: Option<String>,
    #[serde(rename = "type")]
    pub element_type: ElementType,
}

impl Node {
    pub fn new(id: impl Into<String>, label: Option<&str>, element_type: ElementType) -> Self {
        Node {
            id: id.into(),
            label: label.and_then(normalize_label),
            element_type,
        }
    }

    pub fn element(&self) -> Element {
        Element {
            label: self.label.clone(),
            element_type: self.element_type.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flow {
    pub id: String,
    pub source: String,
    pub target: String,
}

/// Directed process graph. Immutable once built; node and flow order follow
/// declaration order, which drives every traversal tie-break.
#[derive(Debug, Clone)]
pub struct ProcessGraph {
    process_id: String,
    nodes: Vec<Node>,
    flows: Vec<Flow>,
    index: HashMap<String, usize>,
    // flow indices per node, in declaration order
    outgoing: Vec<Vec<usize>>,
    incoming: Vec<Vec<usize>>,
    // node indices of each flow: (source, target)
    endpoints: Vec<(usize, usize)>,
}

impl PartialEq for ProcessGraph {
    fn eq(&self, other: &Self) -> bool {
        self.process_id == other.process_id && self.nodes == other.nodes && self.flows == other.flows
    }
}

impl ProcessGraph {
    pub fn new(
        process_id: impl Into<String>,
        nodes: Vec<Node>,
        flows: Vec<Flow>,
    ) -> Result<Self, GraphError> {
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, node) in nodes.iter().enumerate() {
            if node.id.is_empty() {
                return Err(GraphError::EmptyId);
            }
            if index.insert(node.id.clone(), i).is_some() {
                return Err(GraphError::DuplicateNode(node.id.clone()));
            }
        }
        let mut outgoing = vec![Vec::new(); nodes.len()];
        let mut incoming = vec![Vec::new(); nodes.len()];
        let mut endpoints = Vec::with_capacity(flows.len());
        for (fi, flow) in flows.iter().enumerate() {
            let lookup = |id: &str| {
                index.get(id).copied().ok_or_else(|| GraphError::DanglingFlow {
                    flow: flow.id.clone(),
                    node: id.to_string(),
                })
            };
            let s = lookup(&flow.source)?;
            let t = lookup(&flow.target)?;
            outgoing[s].push(fi);
            incoming[t].push(fi);
            endpoints.push((s, t));
        }
        Ok(ProcessGraph {
            process_id: process_id.into(),
            nodes,
            flows,
            index,
            outgoing,
            incoming,
            endpoints,
        })
    }

    /// Builds a graph from `(id, label, type)` triples and `(source, target)`
    /// pairs; flow ids are generated as `f0`, `f1`, ...
    pub fn from_edges(
        process_id: impl Into<String>,
        nodes: &[(&str, Option<&str>, ElementType)],
        edges: &[(&str, &str)],
    ) -> Result<Self, GraphError> {
        let nodes = nodes
            .iter()
            .map(|(id, label, ty)| Node::new(*id, *label, ty.clone()))
            .collect();
        let flows = edges
            .iter()
            .enumerate()
            .map(|(i, (s, t))| Flow {
                id: format!("f{i}"),
                source: s.to_string(),
                target: t.to_string(),
            })
            .collect();
        Self::new(process_id, nodes, flows)
    }

    pub fn process_id(&self) -> &str {
        &self.process_id
    }

    pub fn with_process_id(mut self, process_id: impl Into<String>) -> Self {
        self.process_id = process_id.into();
        self
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn flows(&self) -> &[Flow] {
        &self.flows
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Start events in declaration order.
    pub fn starts(&self) -> Vec<&str> {
        self.nodes_of(|t| matches!(t, ElementType::StartEvent))
    }

    /// End events in declaration order. May be empty for a partially built model.
    pub fn ends(&self) -> Vec<&str> {
        self.nodes_of(ElementType::is_end_event)
    }

    fn nodes_of(&self, pred: impl Fn(&ElementType) -> bool) -> Vec<&str> {
        self.nodes
            .iter()
            .filter(|n| pred(&n.element_type))
            .map(|n| n.id.as_str())
            .collect()
    }

    /// Traversal roots: the start events, or every node without incoming
    /// flows when the model has no start event yet.
    pub fn roots(&self) -> Vec<&str> {
        let starts = self.starts();
        if !starts.is_empty() {
            return starts;
        }
        (0..self.nodes.len())
            .filter(|&i| self.incoming[i].is_empty())
            .map(|i| self.nodes[i].id.as_str())
            .collect()
    }

    pub fn successors(&self, id: &str) -> Result<Vec<&Node>, GraphError> {
        let i = self.position(id)?;
        Ok(self.outgoing[i]
            .iter()
            .map(|&f| &self.nodes[self.endpoints[f].1])
            .collect())
    }

    pub fn predecessors(&self, id: &str) -> Result<Vec<&Node>, GraphError> {
        let i = self.position(id)?;
        Ok(self.incoming[i]
            .iter()
            .map(|&f| &self.nodes[self.endpoints[f].0])
            .collect())
    }

    /// Successor nodes of `id` with repeated targets (parallel flows) removed.
    pub fn distinct_successors(&self, id: &str) -> Result<Vec<&Node>, GraphError> {
        let mut seen = HashSet::new();
        Ok(self
            .successors(id)?
            .into_iter()
            .filter(|n| seen.insert(n.id.as_str()))
            .collect())
    }

    pub(crate) fn position(&self, id: &str) -> Result<usize, GraphError> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| GraphError::UnknownNode(id.to_string()))
    }

    pub(crate) fn node_at(&self, i: usize) -> &Node {
        &self.nodes[i]
    }

    pub(crate) fn outgoing_flows(&self, i: usize) -> &[usize] {
        &self.outgoing[i]
    }

    pub(crate) fn incoming_flows(&self, i: usize) -> &[usize] {
        &self.incoming[i]
    }

    pub(crate) fn flow_endpoints(&self, f: usize) -> (usize, usize) {
        self.endpoints[f]
    }

    /// Node indices in depth-first preorder from the roots, following
    /// outgoing flows in declaration order. Each node appears once.
    pub(crate) fn dfs_order(&self) -> Vec<usize> {
        let mut seen = vec![false; self.nodes.len()];
        let mut order = Vec::with_capacity(self.nodes.len());
        for root in self.roots() {
            let r = self.index[root];
            if seen[r] {
                continue;
            }
            let mut stack = vec![r];
            while let Some(i) = stack.pop() {
                if seen[i] {
                    continue;
                }
                seen[i] = true;
                order.push(i);
                for &f in self.outgoing[i].iter().rev() {
                    let t = self.endpoints[f].1;
                    if !seen[t] {
                        stack.push(t);
                    }
                }
            }
        }
        order
    }

    /// Node ids in depth-first preorder from the roots.
    pub fn dfs_node_ids(&self) -> Vec<&str> {
        self.dfs_order()
            .into_iter()
            .map(|i| self.nodes[i].id.as_str())
            .collect()
    }

    /// Subgraph induced by `ids` (kept in the given order) with every flow
    /// whose endpoints are both retained.
    pub fn induced_subgraph(&self, ids: &[&str]) -> Result<ProcessGraph, GraphError> {
        let mut keep = HashSet::with_capacity(ids.len());
        let mut nodes = Vec::with_capacity(ids.len());
        for id in ids {
            let i = self.position(id)?;
            if keep.insert(i) {
                nodes.push(self.nodes[i].clone());
            }
        }
        let flows = self
            .flows
            .iter()
            .zip(&self.endpoints)
            .filter(|(_, (s, t))| keep.contains(s) && keep.contains(t))
            .map(|(f, _)| f.clone())
            .collect();
        ProcessGraph::new(self.process_id.clone(), nodes, flows)
    }

    /// Whether `to` is reachable from `from` by following one or more flows,
    /// or `from == to`.
    pub fn reaches(&self, from: &str, to: &str) -> Result<bool, GraphError> {
        let s = self.position(from)?;
        let t = self.position(to)?;
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![s];
        while let Some(i) = stack.pop() {
            if i == t {
                return Ok(true);
            }
            if std::mem::replace(&mut seen[i], true) {
                continue;
            }
            stack.extend(self.outgoing[i].iter().map(|&f| self.endpoints[f].1));
        }
        Ok(false)
    }
}

/// Removes every gateway, connecting each non-gateway predecessor directly to
/// the non-gateway nodes reachable through chains of gateways.
///
/// Flows between two non-gateway nodes are kept as declared. Synthetic flows
/// are named `<first flow id>~<target id>` and never duplicate an existing
/// (source, target) pair.
pub fn contract_gateways(g: &ProcessGraph) -> ProcessGraph {
    let is_gw = |i: usize| g.nodes[i].element_type.is_gateway();
    let mut pairs: HashSet<(usize, usize)> = g
        .endpoints
        .iter()
        .filter(|&&(s, t)| !is_gw(s) && !is_gw(t))
        .copied()
        .collect();
    let mut flows = Vec::with_capacity(g.flows.len());
    for (fi, flow) in g.flows.iter().enumerate() {
        let (s, t) = g.endpoints[fi];
        if is_gw(s) {
            continue;
        }
        if !is_gw(t) {
            flows.push(flow.clone());
            continue;
        }
        // depth-first through the gateway chain, declaration order
        let mut seen = HashSet::new();
        let mut stack = vec![t];
        let mut reached = Vec::new();
        while let Some(i) = stack.pop() {
            if !seen.insert(i) {
                continue;
            }
            for &f in g.outgoing[i].iter().rev() {
                let next = g.endpoints[f].1;
                if is_gw(next) {
                    stack.push(next);
                } else {
                    reached.push((f, next));
                }
            }
        }
        // the reversed push order above yields targets in reverse; restore it
        reached.sort_by_key(|&(f, _)| f);
        for (_, w) in reached {
            if pairs.insert((s, w)) {
                flows.push(Flow {
                    id: format!("{}~{}", flow.id, g.nodes[w].id),
                    source: flow.source.clone(),
                    target: g.nodes[w].id.clone(),
                });
            }
        }
    }
    let nodes = g
        .nodes
        .iter()
        .filter(|n| !n.element_type.is_gateway())
        .cloned()
        .collect();
    ProcessGraph::new(g.process_id.clone(), nodes, flows)
        .expect("contraction only keeps flows between retained nodes")
}
