//! BPMN 2.0 XML reading and writing, limited to flow nodes and sequence flows.
//!
//! Pools, lanes, message flows, data objects and diagram geometry are skipped.
//! Elements nested inside a `subProcess` are not descended into; the
//! sub-process itself becomes a single node.

use std::collections::HashSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::process::{ElementType, Flow, GraphError, Node, ProcessGraph};

pub const BPMN_MODEL_NS: &str = "http://www.omg.org/spec/BPMN/20100524/MODEL";

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("malformed XML: {0}")]
    MalformedXml(String),
    #[error("document contains no process definition")]
    NoProcessFound,
    #[error("sequence flow `{flow}` references unknown node `{node}`")]
    DanglingFlow { flow: String, node: String },
    #[error("invalid process `{process}`: {source}")]
    InvalidProcess {
        process: String,
        #[source]
        source: GraphError,
    },
}

impl ParseError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            ParseError::MalformedXml(_) => "malformed_xml",
            ParseError::NoProcessFound => "no_process_found",
            ParseError::DanglingFlow { .. } => "dangling_flow",
            ParseError::InvalidProcess { .. } => "invalid_process",
        }
    }
}

/// Children of `process` that never become flow nodes.
const NON_FLOW_NODES: &[&str] = &[
    "sequenceFlow",
    "laneSet",
    "lane",
    "dataObject",
    "dataObjectReference",
    "dataStoreReference",
    "textAnnotation",
    "association",
    "documentation",
    "extensionElements",
    "ioSpecification",
    "property",
    "group",
    "category",
    "messageFlow",
    "dataInputAssociation",
    "dataOutputAssociation",
];

fn element_type_for(tag: &str) -> ElementType {
    match tag {
        "startEvent" => ElementType::StartEvent,
        "endEvent" => ElementType::EndEvent,
        "intermediateCatchEvent" | "intermediateThrowEvent" | "boundaryEvent" => {
            ElementType::IntermediateEvent
        }
        "task" | "userTask" | "serviceTask" | "scriptTask" | "manualTask" | "businessRuleTask"
        | "sendTask" | "receiveTask" => ElementType::Task,
        "exclusiveGateway" => ElementType::ExclusiveGateway,
        "parallelGateway" => ElementType::ParallelGateway,
        "inclusiveGateway" => ElementType::InclusiveGateway,
        other => ElementType::Other(other.to_string()),
    }
}

fn is_known_flow_node(tag: &str) -> bool {
    !matches!(element_type_for(tag), ElementType::Other(_))
        || tag.ends_with("Task")
        || tag.ends_with("Event")
        || tag.ends_with("Gateway")
        || tag == "subProcess"
        || tag == "callActivity"
        || tag == "transaction"
        || tag == "adHocSubProcess"
}

fn is_bpmn(node: &roxmltree::Node<'_, '_>) -> bool {
    matches!(node.tag_name().namespace(), None | Some(BPMN_MODEL_NS))
}

/// Parses every `process` definition in a BPMN document.
pub fn parse_bpmn(xml: &[u8]) -> Result<Vec<ProcessGraph>, ParseError> {
    let text = std::str::from_utf8(xml).map_err(|e| ParseError::MalformedXml(e.to_string()))?;
    let doc = roxmltree::Document::parse(text).map_err(|e| ParseError::MalformedXml(e.to_string()))?;

    let processes: Vec<_> = doc
        .descendants()
        .filter(|n| n.is_element() && is_bpmn(n) && n.tag_name().name() == "process")
        .collect();
    if processes.is_empty() {
        return Err(ParseError::NoProcessFound);
    }

    processes
        .into_iter()
        .enumerate()
        .map(|(i, p)| parse_process(p, i))
        .collect()
}

fn parse_process(process: roxmltree::Node<'_, '_>, ordinal: usize) -> Result<ProcessGraph, ParseError> {
    let process_id = process
        .attribute("id")
        .map(str::to_string)
        .unwrap_or_else(|| format!("process_{ordinal}"));

    let children: Vec<_> = process.children().filter(|c| c.is_element() && is_bpmn(c)).collect();

    let mut flows = Vec::new();
    let mut referenced = HashSet::new();
    for c in children.iter().filter(|c| c.tag_name().name() == "sequenceFlow") {
        let id = c.attribute("id").unwrap_or_default().to_string();
        let source = c.attribute("sourceRef").unwrap_or_default().to_string();
        let target = c.attribute("targetRef").unwrap_or_default().to_string();
        referenced.insert(source.clone());
        referenced.insert(target.clone());
        flows.push(Flow { id, source, target });
    }

    let mut nodes = Vec::new();
    for c in &children {
        let tag = c.tag_name().name();
        if NON_FLOW_NODES.contains(&tag) {
            continue;
        }
        let Some(id) = c.attribute("id") else { continue };
        if !is_known_flow_node(tag) && !referenced.contains(id) {
            continue;
        }
        nodes.push(Node::new(id, c.attribute("name"), element_type_for(tag)));
    }

    let ids: HashSet<&str> = nodes.iter().map(|n| n.id.as_str()).collect();
    for f in &flows {
        for end in [&f.source, &f.target] {
            if !ids.contains(end.as_str()) {
                return Err(ParseError::DanglingFlow {
                    flow: f.id.clone(),
                    node: end.clone(),
                });
            }
        }
    }

    ProcessGraph::new(process_id.clone(), nodes, flows).map_err(|source| match source {
        GraphError::DanglingFlow { flow, node } => ParseError::DanglingFlow { flow, node },
        source => ParseError::InvalidProcess {
            process: process_id,
            source,
        },
    })
}

fn tag_for(ty: &ElementType) -> &str {
    match ty {
        ElementType::StartEvent => "startEvent",
        ElementType::EndEvent => "endEvent",
        ElementType::IntermediateEvent => "intermediateThrowEvent",
        ElementType::Task => "task",
        ElementType::ExclusiveGateway => "exclusiveGateway",
        ElementType::ParallelGateway => "parallelGateway",
        ElementType::InclusiveGateway => "inclusiveGateway",
        ElementType::Other(tag) => tag,
    }
}

fn escape(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for c in raw.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Writes graphs as a minimal BPMN 2.0 document (no diagram section).
pub fn to_bpmn_xml(graphs: &[ProcessGraph]) -> String {
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        out,
        "<definitions xmlns=\"{BPMN_MODEL_NS}\" id=\"definitions\" targetNamespace=\"http://bpmn.io/schema/bpmn\">"
    );
    for g in graphs {
        let _ = writeln!(out, "  <process id=\"{}\">", escape(g.process_id()));
        for n in g.nodes() {
            let tag = tag_for(&n.element_type);
            match &n.label {
                Some(label) => {
                    let _ = writeln!(out, "    <{tag} id=\"{}\" name=\"{}\" />", escape(&n.id), escape(label));
                }
                None => {
                    let _ = writeln!(out, "    <{tag} id=\"{}\" />", escape(&n.id));
                }
            }
        }
        for f in g.flows() {
            let _ = writeln!(
                out,
                "    <sequenceFlow id=\"{}\" sourceRef=\"{}\" targetRef=\"{}\" />",
                escape(&f.id),
                escape(&f.source),
                escape(&f.target)
            );
        }
        out.push_str("  </process>\n");
    }
    out.push_str("</definitions>\n");
    out
}
