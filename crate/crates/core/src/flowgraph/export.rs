use std::fmt::Write as _;
use std::str::FromStr;

use super::{from_flowgraph, EdgeKind, FlowGraph, FlowGraphError, FlowNode, NodeId, NodeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Dot,
    Json,
}

impl FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dot" => Ok(ExportFormat::Dot),
            "json" => Ok(ExportFormat::Json),
            other => Err(format!("unknown graph format `{other}` (expected dot or json)")),
        }
    }
}

/// Renders a graph as Graphviz DOT or as graph-JSON. Output is deterministic.
pub fn export_graph(g: &FlowGraph, format: ExportFormat) -> Result<String, FlowGraphError> {
    from_flowgraph(g)?;
    Ok(match format {
        ExportFormat::Json => serde_json::to_string_pretty(g).expect("graph is serializable"),
        ExportFormat::Dot => to_dot(g),
    })
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn dot_id(node: &FlowNode) -> String {
    match (node.uid, &node.label) {
        (NodeId::Start | NodeId::End, _) => node.uid.to_string(),
        (_, Some(label)) => label.to_string(),
        (uid, None) => uid.to_string(),
    }
}

fn caption(node: &FlowNode) -> String {
    let name = node.name.as_deref().unwrap_or_default();
    match &node.label {
        Some(label) => escape(&format!("{label}: {name}")),
        None => escape(name),
    }
}

fn write_members(g: &FlowGraph, parent: Option<NodeId>, indent: usize, out: &mut String) {
    let pad = "  ".repeat(indent);
    for node in g.nodes.iter().filter(|n| n.parent == parent) {
        match node.kind {
            NodeKind::Start => {
                let _ = writeln!(out, "{pad}\"start\" [label=\"Start\", shape=ellipse];");
            }
            NodeKind::End => {
                let _ = writeln!(out, "{pad}\"end\" [label=\"End\", shape=ellipse];");
            }
            NodeKind::Leaf => {
                let _ = writeln!(out, "{pad}\"{}\" [label=\"{}\"];", escape(&dot_id(node)), caption(node));
            }
            NodeKind::Composite => {
                let _ = writeln!(out, "{pad}subgraph \"cluster_{}\" {{", escape(&dot_id(node)));
                let _ = writeln!(out, "{pad}  label=\"{}\";", caption(node));
                let _ = writeln!(out, "{pad}  style=rounded;");
                write_members(g, Some(node.uid), indent + 1, out);
                let _ = writeln!(out, "{pad}}}");
            }
        }
    }
}

fn to_dot(g: &FlowGraph) -> String {
    let mut out = String::new();
    out.push_str("digraph workflow {\n");
    out.push_str("  rankdir=TB;\n");
    out.push_str("  node [shape=box];\n");
    write_members(g, None, 1, &mut out);
    let id_of = |uid: NodeId| {
        g.node(uid)
            .map(dot_id)
            .unwrap_or_else(|| uid.to_string())
    };
    for edge in &g.edges {
        let (from, to) = (escape(&id_of(edge.from)), escape(&id_of(edge.to)));
        match edge.kind {
            EdgeKind::Sequential => {
                let _ = writeln!(out, "  \"{from}\" -> \"{to}\";");
            }
            EdgeKind::Conditional => {
                let condition = escape(edge.condition.as_deref().unwrap_or_default());
                let _ = writeln!(
                    out,
                    "  \"{from}\" -> \"{to}\" [style=dashed, label=\"{condition}\"];"
                );
            }
        }
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowgraph::to_flowgraph;
    use crate::workflow::parse_workflow;

    #[test]
    fn one_step_dot_has_two_edges() {
        let g = to_flowgraph(&parse_workflow("STEP 1: [A][B][]").unwrap()).unwrap();
        let dot = export_graph(&g, ExportFormat::Dot).unwrap();
        assert_eq!(dot.matches("->").count(), 2);
        assert!(dot.contains("\"1\" [label=\"1: A\"];"));
    }

    #[test]
    fn quotes_are_escaped() {
        let g = to_flowgraph(&parse_workflow("STEP 1: [Say \"hi\"][B][]").unwrap()).unwrap();
        let dot = export_graph(&g, ExportFormat::Dot).unwrap();
        assert!(dot.contains(r#"[label="1: Say \"hi\""]"#), "{dot}");
    }

    #[test]
    fn json_reexport_is_byte_identical() {
        let g = to_flowgraph(
            &parse_workflow("STEP 1: [A][a][]\nSTEP 2: [B][b][[[x][Jump to STEP 1]]]\nSTEP 2.1: [C][c][]")
                .unwrap(),
        )
        .unwrap();
        let json = export_graph(&g, ExportFormat::Json).unwrap();
        let back: FlowGraph = serde_json::from_str(&json).unwrap();
        assert_eq!(export_graph(&back, ExportFormat::Json).unwrap(), json);
    }

    #[test]
    fn format_names() {
        assert_eq!("DOT".parse::<ExportFormat>().unwrap(), ExportFormat::Dot);
        assert!("svg".parse::<ExportFormat>().is_err());
    }
}
