//! Independent oracles and generators shared by the integration tests.
//!
//! Nothing here calls into the slicer, the similarity code or the metrics
//! under test; each oracle recomputes its answer from first principles.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use itertools::Itertools;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use slicematch::{ElementType, Flow, Node, ProcessGraph};

pub const ADMISSION_BPMN: &str = include_str!("../data/admission.bpmn");

/// Random DAG with at most `max_nodes` nodes and `max_edges` flows. Node 0 is
/// the only start event and every other node has an incoming flow from a
/// lower-numbered node, so all nodes are reachable from the start. Parallel
/// flows appear occasionally.
pub fn random_dag(rng: &mut ChaCha8Rng, max_nodes: usize, max_edges: usize) -> ProcessGraph {
    let n = rng.gen_range(2..=max_nodes);
    let vocab = ["check", "approve", "send", "review", "archive", "notify"];
    let nodes: Vec<Node> = (0..n)
        .map(|i| {
            let ty = if i == 0 {
                ElementType::StartEvent
            } else {
                match rng.gen_range(0..6) {
                    0 => ElementType::ExclusiveGateway,
                    1 => ElementType::EndEvent,
                    _ => ElementType::Task,
                }
            };
            let label = (ty == ElementType::Task).then(|| vocab[rng.gen_range(0..vocab.len())]);
            Node::new(format!("n{i}"), label, ty)
        })
        .collect();
    let mut edges: Vec<(usize, usize)> = (1..n).map(|j| (rng.gen_range(0..j), j)).collect();
    let extra = rng.gen_range(0..=max_edges.saturating_sub(edges.len()));
    for _ in 0..extra {
        let a = rng.gen_range(0..n - 1);
        let b = rng.gen_range(a + 1..n);
        edges.push((a, b));
    }
    let flows = edges
        .iter()
        .enumerate()
        .map(|(i, &(a, b))| Flow {
            id: format!("e{i}"),
            source: format!("n{a}"),
            target: format!("n{b}"),
        })
        .collect();
    ProcessGraph::new("dag", nodes, flows).unwrap()
}

/// Node ids reachable from the start events by breadth-first search over the
/// raw flow list.
pub fn reachable_from_starts(g: &ProcessGraph) -> BTreeSet<String> {
    let mut seen: BTreeSet<String> = g
        .nodes()
        .iter()
        .filter(|n| n.element_type == ElementType::StartEvent)
        .map(|n| n.id.clone())
        .collect();
    let mut queue: VecDeque<String> = seen.iter().cloned().collect();
    while let Some(u) = queue.pop_front() {
        for f in g.flows().iter().filter(|f| f.source == u) {
            if seen.insert(f.target.clone()) {
                queue.push_back(f.target.clone());
            }
        }
    }
    seen
}

/// Every walk of exactly `n` nodes that uses no flow twice, found by testing
/// all ordered tuples of `n - 1` flows.
pub fn all_walks(g: &ProcessGraph, n: usize) -> BTreeSet<Vec<String>> {
    if n == 1 {
        return g.nodes().iter().map(|v| vec![v.id.clone()]).collect();
    }
    let flows = g.flows();
    let mut out = BTreeSet::new();
    for combo in (0..n - 1).map(|_| 0..flows.len()).multi_cartesian_product() {
        if (0..combo.len()).any(|i| combo[i + 1..].contains(&combo[i])) {
            continue;
        }
        if combo.windows(2).any(|w| flows[w[0]].target != flows[w[1]].source) {
            continue;
        }
        let mut walk = vec![flows[combo[0]].source.clone()];
        walk.extend(combo.iter().map(|&f| flows[f].target.clone()));
        out.insert(walk);
    }
    out
}

/// Walks that start at a node reachable from a start event.
pub fn forward_oracle(g: &ProcessGraph, n: usize) -> BTreeSet<Vec<String>> {
    let reach = reachable_from_starts(g);
    all_walks(g, n).into_iter().filter(|w| reach.contains(&w[0])).collect()
}

pub fn ending_at_oracle(g: &ProcessGraph, v: &str, n: usize) -> BTreeSet<Vec<String>> {
    all_walks(g, n).into_iter().filter(|w| w.last().unwrap() == v).collect()
}

/// Cosine by an explicit double loop over raw values.
pub fn loop_cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for i in 0..a.len() {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

fn oracle_tokens(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in s.chars() {
        if ch.is_alphanumeric() {
            cur.extend(ch.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn oracle_grams(tokens: &[String], n: usize) -> BTreeMap<String, u32> {
    let mut m = BTreeMap::new();
    if tokens.len() >= n {
        for i in 0..=tokens.len() - n {
            *m.entry(tokens[i..i + n].join("\u{1}")).or_insert(0) += 1;
        }
    }
    m
}

/// Reference sentence BLEU: clipped precisions, Lin-Och add-one smoothing for
/// orders above one, brevity penalty from the closest reference length
/// (shorter on ties).
pub fn reference_bleu(candidate: &str, references: &[&str], max_order: usize) -> f64 {
    let c = oracle_tokens(candidate);
    let rs: Vec<Vec<String>> = references.iter().map(|r| oracle_tokens(r)).collect();
    if c.is_empty() || rs.is_empty() {
        return 0.0;
    }
    let mut precisions = Vec::new();
    for n in 1..=max_order {
        let cg = oracle_grams(&c, n);
        let mut clipped = 0u32;
        let mut total = 0u32;
        for (g, cnt) in &cg {
            total += cnt;
            let best_ref = rs.iter().map(|r| *oracle_grams(r, n).get(g).unwrap_or(&0)).max().unwrap();
            clipped += (*cnt).min(best_ref);
        }
        if n == 1 {
            if clipped == 0 {
                return 0.0;
            }
            precisions.push(clipped as f64 / total as f64);
        } else {
            precisions.push((clipped as f64 + 1.0) / (total as f64 + 1.0));
        }
    }
    let log_mean: f64 = precisions.iter().map(|p| p.ln()).sum::<f64>() / max_order as f64;
    let clen = c.len() as f64;
    let mut best: Option<(f64, f64)> = None;
    for r in &rs {
        let rl = r.len() as f64;
        let d = (rl - clen).abs();
        best = match best {
            Some((bd, bl)) if bd < d || (bd == d && bl <= rl) => Some((bd, bl)),
            _ => Some((d, rl)),
        };
    }
    let rlen = best.unwrap().1;
    let bp = if clen > rlen { 1.0 } else { (1.0 - rlen / clen).exp() };
    bp * log_mean.exp()
}

/// Random sentence over a small vocabulary so pairs share n-grams often.
pub fn random_sentence(rng: &mut ChaCha8Rng) -> String {
    let vocab = [
        "send", "letter", "of", "acceptance", "provisional", "invite", "the", "applicant", "check",
        "documents", "evaluate", "rank", "students", "test", "results", "Task:", "Gateway.",
    ];
    let len = rng.gen_range(0..9);
    (0..len).map(|_| vocab[rng.gen_range(0..vocab.len())]).collect::<Vec<_>>().join(" ")
}

/// Ten elements: a start event fanning out to three tasks, each of which
/// flows into the same three tasks, which in turn flow into three final
/// tasks. Interior states with a full slice have three true successors.
pub fn fan_out_process(id: &str) -> ProcessGraph {
    let layers: [&[(&str, &str)]; 3] = [
        &[("a", "Receive order"), ("b", "Receive complaint"), ("c", "Receive inquiry")],
        &[("d", "Check customer record"), ("e", "Check stock"), ("f", "Check credit")],
        &[("g", "Send invoice"), ("h", "Ship goods"), ("i", "Archive case")],
    ];
    let mut nodes = vec![("s", None, ElementType::StartEvent)];
    for layer in layers {
        nodes.extend(layer.iter().map(|&(id, label)| (id, Some(label), ElementType::Task)));
    }
    let mut edges: Vec<(&str, &str)> = layers[0].iter().map(|&(t, _)| ("s", t)).collect();
    for w in layers.windows(2) {
        for &(u, _) in w[0] {
            edges.extend(w[1].iter().map(|&(v, _)| (u, v)));
        }
    }
    ProcessGraph::from_edges(id, &nodes, &edges).unwrap()
}

/// A straight start-to-end chain of `len` elements with distinct task labels.
pub fn chain_process(id: &str, len: usize) -> ProcessGraph {
    assert!(len >= 2);
    let ids: Vec<String> = (0..len).map(|i| format!("v{i}")).collect();
    let labels: Vec<String> = (0..len).map(|i| format!("Step {i} of the intake")).collect();
    let nodes: Vec<(&str, Option<&str>, ElementType)> = (0..len)
        .map(|i| {
            let ty = match i {
                0 => ElementType::StartEvent,
                i if i == len - 1 => ElementType::EndEvent,
                _ => ElementType::Task,
            };
            let label = (ty == ElementType::Task).then_some(labels[i].as_str());
            (ids[i].as_str(), label, ty)
        })
        .collect();
    let edges: Vec<(&str, &str)> = ids.windows(2).map(|w| (w[0].as_str(), w[1].as_str())).collect();
    ProcessGraph::from_edges(id, &nodes, &edges).unwrap()
}

/// Sequence of split/join blocks between tasks; most elements are followed
/// by a gateway or an end event. `words` seeds the task labels.
pub fn gateway_rich_process(id: &str, blocks: usize, words: &[&str]) -> ProcessGraph {
    let mut nodes: Vec<Node> = vec![Node::new("start", None, ElementType::StartEvent)];
    let mut flows = Vec::new();
    let link = |flows: &mut Vec<Flow>, s: &str, t: &str| {
        let n = flows.len();
        flows.push(Flow {
            id: format!("f{n}"),
            source: s.into(),
            target: t.into(),
        });
    };
    let mut prev = "start".to_string();
    for b in 0..blocks {
        let w = |i: usize| words[(b * 3 + i) % words.len()];
        let gw = if b % 2 == 0 { ElementType::ExclusiveGateway } else { ElementType::ParallelGateway };
        let task = format!("t{b}");
        nodes.push(Node::new(&task, Some(&format!("{} {}", w(0), w(1))), ElementType::Task));
        nodes.push(Node::new(format!("split{b}"), None, gw.clone()));
        nodes.push(Node::new(format!("l{b}"), Some(&format!("{} {}", w(1), w(2))), ElementType::Task));
        nodes.push(Node::new(format!("r{b}"), Some(&format!("{} {}", w(2), w(0))), ElementType::Task));
        nodes.push(Node::new(format!("join{b}"), None, gw));
        link(&mut flows, &prev, &task);
        link(&mut flows, &task, &format!("split{b}"));
        link(&mut flows, &format!("split{b}"), &format!("l{b}"));
        link(&mut flows, &format!("split{b}"), &format!("r{b}"));
        link(&mut flows, &format!("l{b}"), &format!("join{b}"));
        link(&mut flows, &format!("r{b}"), &format!("join{b}"));
        prev = format!("join{b}");
    }
    nodes.push(Node::new("end", None, ElementType::EndEvent));
    link(&mut flows, &prev, "end");
    ProcessGraph::new(id, nodes, flows).unwrap()
}
