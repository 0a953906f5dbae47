//! Synthetic workflows for demos and load generation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slicematch::{extract_slices_ending_at, ElementType, Flow, Mode, Node, ProcessGraph};

const VERBS: &[&str] = &[
    "Check", "Review", "Approve", "Send", "Archive", "Register", "Validate", "Prepare", "Notify", "Record",
    "Assess", "Schedule",
];
const OBJECTS: &[&str] = &[
    "application", "invoice", "order", "documents", "payment", "contract", "customer data", "shipment",
    "claim", "report", "request", "offer",
];

fn task_label(rng: &mut ChaCha8Rng) -> String {
    format!("{} {}", VERBS.choose(rng).unwrap(), OBJECTS.choose(rng).unwrap())
}

struct Builder {
    nodes: Vec<Node>,
    flows: Vec<Flow>,
}

impl Builder {
    fn add(&mut self, label: Option<&str>, ty: ElementType) -> String {
        let id = format!("n{}", self.nodes.len());
        self.nodes.push(Node::new(&id, label, ty));
        id
    }

    fn link(&mut self, source: &str, target: &str) {
        let id = format!("f{}", self.flows.len());
        self.flows.push(Flow {
            id,
            source: source.into(),
            target: target.into(),
        });
    }
}

/// A workflow of exactly `size` elements (`size >= 3`): a start event, a
/// sequence of tasks interleaved with exclusive or parallel split/join
/// blocks, and an end event. `gateway_share` is the chance of starting a
/// block wherever one still fits.
pub fn workflow(id: &str, size: usize, gateway_share: f64, rng: &mut ChaCha8Rng) -> ProcessGraph {
    assert!(size >= 3, "a workflow needs a start, one task and an end");
    let mut b = Builder {
        nodes: Vec::new(),
        flows: Vec::new(),
    };
    let mut tail = b.add(None, ElementType::StartEvent);
    let mut left = size - 2;
    while left > 0 {
        let block = left >= 3 && left < size - 2 && rng.gen_bool(gateway_share);
        if !block {
            let label = task_label(rng);
            let t = b.add(Some(&label), ElementType::Task);
            b.link(&tail, &t);
            tail = t;
            left -= 1;
            continue;
        }
        let gw = if rng.gen_bool(0.5) { ElementType::ExclusiveGateway } else { ElementType::ParallelGateway };
        let split = b.add(None, gw.clone());
        b.link(&tail, &split);
        let two_branches = left >= 4 && rng.gen_bool(0.6);
        let first = task_label(rng);
        let x = b.add(Some(&first), ElementType::Task);
        let second = two_branches.then(|| task_label(rng));
        let y = second.map(|l| b.add(Some(&l), ElementType::Task));
        let join = b.add(None, gw);
        b.link(&split, &x);
        b.link(&x, &join);
        match y {
            Some(y) => {
                b.link(&split, &y);
                b.link(&y, &join);
                left -= 4;
            }
            None => {
                b.link(&split, &join);
                left -= 3;
            }
        }
        tail = join;
    }
    let end = b.add(None, ElementType::EndEvent);
    b.link(&tail, &end);
    ProcessGraph::new(id, b.nodes, b.flows).expect("generated ids are unique and flows resolve")
}

/// `count` workflows with sizes drawn uniformly from `sizes`.
pub fn corpus(count: usize, sizes: std::ops::RangeInclusive<usize>, gateway_share: f64, seed: u64) -> Vec<ProcessGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let size = rng.gen_range(sizes.clone());
            workflow(&format!("synthetic-{i:04}"), size, gateway_share, &mut rng)
        })
        .collect()
}

/// The node to ask about in a workflow: the last element (in declaration
/// order) that has a successor and a slice of `n` elements ending at it in
/// the graph as seen by `mode`.
pub fn query_target(g: &ProcessGraph, n: usize, mode: Mode) -> Option<String> {
    let prepared = mode.prepare(g);
    prepared
        .nodes()
        .iter()
        .rev()
        .filter(|v| !prepared.successors(&v.id).map(|s| s.is_empty()).unwrap_or(true))
        .find(|v| {
            extract_slices_ending_at(&prepared, &v.id, n, false)
                .map(|s| !s.is_empty())
                .unwrap_or(false)
        })
        .map(|v| v.id.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for size in 3..40 {
            for share in [0.0, 0.5, 1.0] {
                let g = workflow("w", size, share, &mut rng);
                assert_eq!(g.len(), size);
                assert_eq!(g.starts().len(), 1);
                assert_eq!(g.ends().len(), 1);
                let order = g.dfs_node_ids();
                assert_eq!(order.len(), size, "every element reachable");
            }
        }
    }

    #[test]
    fn gateways_appear_when_asked() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = workflow("w", 25, 0.9, &mut rng);
        assert!(g.nodes().iter().any(|n| n.element_type.is_gateway()));
        let g = workflow("w", 25, 0.0, &mut rng);
        assert!(!g.nodes().iter().any(|n| n.element_type.is_gateway()));
    }

    #[test]
    fn targets_exist_for_both_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for size in [5, 25] {
            let g = workflow("w", size, 0.4, &mut rng);
            for mode in [Mode::WithGateways, Mode::TasksOnly] {
                assert!(query_target(&g, 3, mode).is_some(), "size {size} mode {mode}");
            }
        }
    }

    #[test]
    fn corpus_is_reproducible() {
        assert_eq!(corpus(5, 5..=25, 0.3, 9), corpus(5, 5..=25, 0.3, 9));
    }
}
