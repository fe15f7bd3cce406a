// Turn a workflow into a flowchart, export it, and rebuild the workflow from
// the graph.

use std::error::Error;

use lowcode_llm::flowgraph::{export_graph, from_flowgraph, to_flowgraph, EdgeKind, ExportFormat, FlowGraph};
use lowcode_llm::workflow::parse_workflow;

const ESSAY: &str = include_str!("../fixtures/essay.sop");

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let workflow = parse_workflow(ESSAY)?.with_task("Write an essay titled 'Drunk Driving As A Social Issue'");
    let graph = to_flowgraph(&workflow)?;
    println!(
        "{} nodes, {} sequential edges, {} conditional edges",
        graph.nodes.len(),
        graph.sequential_edges().count(),
        graph.conditional_edges().count()
    );
    for edge in graph.edges.iter().filter(|e| e.kind == EdgeKind::Conditional) {
        println!("{} -> {} when {:?}", edge.from, edge.to, edge.condition);
    }

    let dot = export_graph(&graph, ExportFormat::Dot)?;
    println!("{dot}");

    let json = export_graph(&graph, ExportFormat::Json)?;
    let decoded: FlowGraph = serde_json::from_str(&json)?;
    let rebuilt = from_flowgraph(&decoded)?;
    assert_eq!(rebuilt, workflow);
    println!("graph-JSON is {} bytes and converts back losslessly", json.len());
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
