//! Slices: paths of exactly `n` nodes through a process graph, and their
//! paragraph rendering.
//!
//! A slice never traverses the same flow twice. Nodes may repeat when a loop
//! is entered through a different flow, so one unrolling of each loop is seen.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::process::{Element, ElementType, GraphError, Node, ProcessGraph};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Slice {
    pub process_id: String,
    pub node_ids: Vec<String>,
}

impl Slice {
    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    pub fn last(&self) -> Option<&str> {
        self.node_ids.last().map(String::as_str)
    }
}

/// Paragraph rendering of a slice: one `"<Type>: <label>."` sentence per node,
/// separated by single spaces.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SliceText(pub String);

impl SliceText {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for SliceText {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// A direct successor of a slice's last node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NextElement {
    pub node_id: String,
    pub label: Option<String>,
    #[serde(rename = "type")]
    pub element_type: ElementType,
}

impl NextElement {
    pub fn from_node(node: &Node) -> Self {
        NextElement {
            node_id: node.id.clone(),
            label: node.label.clone(),
            element_type: node.element_type.clone(),
        }
    }

    pub fn element(&self) -> Element {
        Element {
            label: self.label.clone(),
            element_type: self.element_type.clone(),
        }
    }
}

fn to_slice(g: &ProcessGraph, path: &[usize]) -> Slice {
    Slice {
        process_id: g.process_id().to_string(),
        node_ids: path.iter().map(|&i| g.node_at(i).id.clone()).collect(),
    }
}

/// Every slice of exactly `n` nodes starting at a node reachable from the
/// graph's roots, each paired with the distinct successors of its last node.
///
/// Start nodes are visited in depth-first preorder and walks are extended
/// along outgoing flows in declaration order. Repeated node sequences (from
/// parallel flows) are reported once.
pub fn enumerate_slices(g: &ProcessGraph, n: usize) -> Vec<(Slice, Vec<NextElement>)> {
    if n == 0 {
        return Vec::new();
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut path = Vec::with_capacity(n);
    let mut used = Vec::with_capacity(n);
    for start in g.dfs_order() {
        path.push(start);
        walk(g, n, Direction::Forward, &mut path, &mut used, &mut |p| {
            if seen.insert(p.to_vec()) {
                out.push(p.to_vec());
            }
        });
        path.pop();
    }
    out.into_iter()
        .map(|p| {
            let last = &g.node_at(*p.last().expect("n >= 1")).id;
            let next = g
                .distinct_successors(last)
                .expect("slice nodes come from the graph")
                .into_iter()
                .map(NextElement::from_node)
                .collect();
            (to_slice(g, &p), next)
        })
        .collect()
}

/// Every slice of exactly `n` nodes ending at `target`, found by walking
/// incoming flows backwards.
///
/// With `fallback` set and no slice of length `n`, the longest shorter length
/// that yields at least one slice is used instead.
pub fn extract_slices_ending_at(
    g: &ProcessGraph,
    target: &str,
    n: usize,
    fallback: bool,
) -> Result<Vec<Slice>, GraphError> {
    let v = g.position(target)?;
    let found = backward(g, v, n);
    if !found.is_empty() || !fallback {
        return Ok(found);
    }
    for m in (1..n).rev() {
        let shorter = backward(g, v, m);
        if !shorter.is_empty() {
            return Ok(shorter);
        }
    }
    Ok(Vec::new())
}

fn backward(g: &ProcessGraph, v: usize, n: usize) -> Vec<Slice> {
    if n == 0 {
        return Vec::new();
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut path = vec![v];
    let mut used = Vec::with_capacity(n);
    walk(g, n, Direction::Backward, &mut path, &mut used, &mut |p| {
        let forward: Vec<usize> = p.iter().rev().copied().collect();
        if seen.insert(forward.clone()) {
            out.push(forward);
        }
    });
    out.iter().map(|p| to_slice(g, p)).collect()
}

#[derive(Clone, Copy)]
enum Direction {
    Forward,
    Backward,
}

fn walk(
    g: &ProcessGraph,
    n: usize,
    dir: Direction,
    path: &mut Vec<usize>,
    used: &mut Vec<usize>,
    emit: &mut dyn FnMut(&[usize]),
) {
    if path.len() == n {
        emit(path);
        return;
    }
    let at = *path.last().expect("walks start with one node");
    let flows = match dir {
        Direction::Forward => g.outgoing_flows(at),
        Direction::Backward => g.incoming_flows(at),
    };
    for &f in flows {
        if used.contains(&f) {
            continue;
        }
        let (s, t) = g.flow_endpoints(f);
        let next = match dir {
            Direction::Forward => t,
            Direction::Backward => s,
        };
        used.push(f);
        path.push(next);
        walk(g, n, dir, path, used, emit);
        path.pop();
        used.pop();
    }
}

/// Renders nodes as a paragraph, e.g.
/// `"Start Event. Task: Check documents. Task: Evaluate."`.
pub fn textualize_nodes<'a>(nodes: impl IntoIterator<Item = &'a Node>) -> SliceText {
    let sentences: Vec<String> = nodes
        .into_iter()
        .map(|n| format!("{}.", n.element().sentence()))
        .collect();
    SliceText(sentences.join(" "))
}

pub fn textualize(slice: &Slice, g: &ProcessGraph) -> Result<SliceText, GraphError> {
    let nodes = slice
        .node_ids
        .iter()
        .map(|id| g.node(id).ok_or_else(|| GraphError::UnknownNode(id.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(textualize_nodes(nodes))
}
