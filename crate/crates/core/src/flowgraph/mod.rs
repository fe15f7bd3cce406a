//! Flowchart view of a workflow.
//!
//! Leaves become boxes chained by sequential edges from `Start` to `End` in
//! pre-order; steps with children become composite containers; every jump
//! rule becomes one conditional edge. A rule owned by a composite departs from
//! its last leaf, and a rule aimed at a composite lands on its first leaf.
//! Conditional edges also record the step pair the rule connects, so the
//! conversion back is lossless.

mod export;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::workflow::{
    validate_workflow, Condition, JumpRule, JumpTarget, Step, StepId, StepLabel, StepText,
    Violation, Workflow,
};

pub use export::{export_graph, ExportFormat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeId {
    Start,
    End,
    Step(StepId),
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Start => f.write_str("start"),
            NodeId::End => f.write_str("end"),
            NodeId::Step(uid) => write!(f, "{uid}"),
        }
    }
}

impl FromStr for NodeId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "start" => Ok(NodeId::Start),
            "end" => Ok(NodeId::End),
            other => other.parse().map(NodeId::Step),
        }
    }
}

impl Serialize for NodeId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Start,
    End,
    Leaf,
    Composite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    Sequential,
    Conditional,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowNode {
    pub uid: NodeId,
    pub kind: NodeKind,
    pub label: Option<StepLabel>,
    pub name: Option<String>,
    pub description: Option<String>,
    pub parent: Option<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowEdge {
    pub from: NodeId,
    pub to: NodeId,
    pub kind: EdgeKind,
    pub condition: Option<String>,
    /// Step that owns the jump rule (conditional edges only).
    pub rule_from: Option<NodeId>,
    /// Step the jump rule names as its target (conditional edges only).
    pub rule_to: Option<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowGraph {
    pub task: String,
    pub nodes: Vec<FlowNode>,
    pub edges: Vec<FlowEdge>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FlowGraphError {
    #[error("workflow is invalid: {}", crate::workflow::serialize_summary(.0))]
    InvalidWorkflow(Vec<Violation>),
    #[error("sequential edges do not form a single Start-to-End path: {0}")]
    BrokenPath(String),
    #[error("edge {from} -> {to} references a missing node")]
    DanglingEdge { from: NodeId, to: NodeId },
    #[error("malformed graph: {0}")]
    InvalidGraph(String),
}

impl FlowGraph {
    pub fn node(&self, uid: NodeId) -> Option<&FlowNode> {
        self.nodes.iter().find(|n| n.uid == uid)
    }

    pub fn sequential_edges(&self) -> impl Iterator<Item = &FlowEdge> {
        self.edges.iter().filter(|e| e.kind == EdgeKind::Sequential)
    }

    pub fn conditional_edges(&self) -> impl Iterator<Item = &FlowEdge> {
        self.edges.iter().filter(|e| e.kind == EdgeKind::Conditional)
    }

    pub fn count_kind(&self, kind: NodeKind) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }
}

pub fn to_flowgraph(w: &Workflow) -> Result<FlowGraph, FlowGraphError> {
    let violations = validate_workflow(w);
    if !violations.is_empty() {
        return Err(FlowGraphError::InvalidWorkflow(violations));
    }

    let mut nodes = vec![sentinel(NodeId::Start, NodeKind::Start)];
    fn add_nodes(steps: &[Step], parent: Option<NodeId>, nodes: &mut Vec<FlowNode>) {
        for step in steps {
            let uid = NodeId::Step(step.uid());
            nodes.push(FlowNode {
                uid,
                kind: if step.is_leaf() {
                    NodeKind::Leaf
                } else {
                    NodeKind::Composite
                },
                label: Some(step.label().clone()),
                name: Some(step.name().to_string()),
                description: Some(step.description().to_string()),
                parent,
            });
            add_nodes(step.children(), Some(uid), nodes);
        }
    }
    add_nodes(w.steps(), None, &mut nodes);
    nodes.push(sentinel(NodeId::End, NodeKind::End));

    let path: Vec<NodeId> = std::iter::once(NodeId::Start)
        .chain(w.leaves().into_iter().map(|s| NodeId::Step(s.uid())))
        .chain(std::iter::once(NodeId::End))
        .collect();
    let mut edges: Vec<FlowEdge> = path
        .windows(2)
        .map(|pair| FlowEdge {
            from: pair[0],
            to: pair[1],
            kind: EdgeKind::Sequential,
            condition: None,
            rule_from: None,
            rule_to: None,
        })
        .collect();

    for step in w.preorder() {
        for rule in step.jumps() {
            let JumpTarget::Step(target) = rule.target else {
                unreachable!("validated workflows have resolved targets");
            };
            let from = w.last_leaf(step.uid()).expect("step exists").uid();
            let to = w.first_leaf(target).expect("validated target exists").uid();
            edges.push(FlowEdge {
                from: NodeId::Step(from),
                to: NodeId::Step(to),
                kind: EdgeKind::Conditional,
                condition: Some(rule.condition.to_string()),
                rule_from: Some(NodeId::Step(step.uid())),
                rule_to: Some(NodeId::Step(target)),
            });
        }
    }

    Ok(FlowGraph {
        task: w.task().to_string(),
        nodes,
        edges,
    })
}

fn sentinel(uid: NodeId, kind: NodeKind) -> FlowNode {
    FlowNode {
        uid,
        kind,
        label: None,
        name: None,
        description: None,
        parent: None,
    }
}

fn step_uid(id: NodeId, what: &str) -> Result<StepId, FlowGraphError> {
    match id {
        NodeId::Step(uid) => Ok(uid),
        other => Err(FlowGraphError::InvalidGraph(format!("{what} cannot be {other}"))),
    }
}

/// Rebuilds the workflow a graph depicts. Labels are recomputed from the
/// sequential path and composite membership; uids are taken from the nodes.
pub fn from_flowgraph(g: &FlowGraph) -> Result<Workflow, FlowGraphError> {
    let by_id: HashMap<NodeId, &FlowNode> = g.nodes.iter().map(|n| (n.uid, n)).collect();
    if by_id.len() != g.nodes.len() {
        return Err(FlowGraphError::InvalidGraph("duplicate node uid".into()));
    }
    for node in &g.nodes {
        let consistent = match node.kind {
            NodeKind::Start => node.uid == NodeId::Start,
            NodeKind::End => node.uid == NodeId::End,
            NodeKind::Leaf | NodeKind::Composite => matches!(node.uid, NodeId::Step(_)),
        };
        if !consistent {
            return Err(FlowGraphError::InvalidGraph(format!(
                "node {} has kind {:?}",
                node.uid, node.kind
            )));
        }
    }
    for edge in &g.edges {
        if !by_id.contains_key(&edge.from) || !by_id.contains_key(&edge.to) {
            return Err(FlowGraphError::DanglingEdge {
                from: edge.from,
                to: edge.to,
            });
        }
    }
    if g.count_kind(NodeKind::Start) != 1 || g.count_kind(NodeKind::End) != 1 {
        return Err(FlowGraphError::BrokenPath(
            "graph needs exactly one Start and one End".into(),
        ));
    }

    let leaves = sequential_path(g, &by_id)?;
    let mut tree = TreeBuilder::new(&by_id);
    for leaf in &leaves {
        tree.place(*leaf)?;
    }
    let mut steps = tree.finish()?;

    for edge in g.conditional_edges() {
        if matches!(edge.from, NodeId::Start | NodeId::End)
            || matches!(edge.to, NodeId::Start | NodeId::End)
        {
            return Err(FlowGraphError::InvalidGraph(
                "conditional edges cannot touch Start or End".into(),
            ));
        }
        let owner = step_uid(edge.rule_from.unwrap_or(edge.from), "jump source")?;
        let target = step_uid(edge.rule_to.unwrap_or(edge.to), "jump target")?;
        let condition = Condition::new(edge.condition.as_deref().unwrap_or_default())
            .map_err(|e| FlowGraphError::InvalidGraph(e.to_string()))?;
        let Some(step) = find_step_mut(&mut steps, owner) else {
            return Err(FlowGraphError::InvalidGraph(format!("jump source {owner} is not a step")));
        };
        step.jumps.push(JumpRule {
            condition,
            target: JumpTarget::Step(target),
        });
    }

    let mut workflow = Workflow::from_parts(g.task.clone(), steps);
    workflow.renumber();
    Ok(workflow)
}

fn find_step_mut(steps: &mut [Step], uid: StepId) -> Option<&mut Step> {
    for step in steps {
        if step.uid == uid {
            return Some(step);
        }
        if let Some(found) = find_step_mut(&mut step.children, uid) {
            return Some(found);
        }
    }
    None
}

/// Follows sequential edges from Start and returns the leaves in order.
fn sequential_path(
    g: &FlowGraph,
    by_id: &HashMap<NodeId, &FlowNode>,
) -> Result<Vec<NodeId>, FlowGraphError> {
    let mut next: HashMap<NodeId, NodeId> = HashMap::new();
    for edge in g.sequential_edges() {
        if next.insert(edge.from, edge.to).is_some() {
            return Err(FlowGraphError::BrokenPath(format!(
                "{} has more than one successor",
                edge.from
            )));
        }
    }
    let mut leaves = Vec::new();
    let mut seen = HashSet::new();
    let mut current = NodeId::Start;
    loop {
        let Some(&following) = next.get(&current) else {
            return Err(FlowGraphError::BrokenPath(format!("path stops at {current}")));
        };
        if following == NodeId::End {
            break;
        }
        if by_id[&following].kind != NodeKind::Leaf {
            return Err(FlowGraphError::BrokenPath(format!(
                "path visits non-leaf {following}"
            )));
        }
        if !seen.insert(following) {
            return Err(FlowGraphError::BrokenPath(format!("path revisits {following}")));
        }
        leaves.push(following);
        current = following;
    }
    if leaves.is_empty() {
        return Err(FlowGraphError::BrokenPath("path contains no steps".into()));
    }
    let total_leaves = g.count_kind(NodeKind::Leaf);
    let total_sequential = g.sequential_edges().count();
    if leaves.len() != total_leaves || total_sequential != leaves.len() + 1 {
        return Err(FlowGraphError::BrokenPath(format!(
            "path covers {} of {} leaves using {} sequential edges",
            leaves.len(),
            total_leaves,
            total_sequential
        )));
    }
    Ok(leaves)
}

/// Reassembles the step tree from leaves in path order. Each composite's
/// members must occupy one contiguous stretch of the path.
struct TreeBuilder<'a> {
    by_id: &'a HashMap<NodeId, &'a FlowNode>,
    open: Vec<NodeId>,
    closed: HashSet<NodeId>,
    children: HashMap<Option<NodeId>, Vec<NodeId>>,
}

impl<'a> TreeBuilder<'a> {
    fn new(by_id: &'a HashMap<NodeId, &'a FlowNode>) -> Self {
        Self {
            by_id,
            open: Vec::new(),
            closed: HashSet::new(),
            children: HashMap::new(),
        }
    }

    fn ancestors(&self, leaf: NodeId) -> Result<Vec<NodeId>, FlowGraphError> {
        let mut chain = Vec::new();
        let mut current = self.by_id[&leaf].parent;
        while let Some(parent) = current {
            let Some(node) = self.by_id.get(&parent) else {
                return Err(FlowGraphError::InvalidGraph(format!("unknown parent {parent}")));
            };
            if node.kind != NodeKind::Composite {
                return Err(FlowGraphError::InvalidGraph(format!(
                    "parent {parent} is not a composite"
                )));
            }
            if chain.contains(&parent) || chain.len() > self.by_id.len() {
                return Err(FlowGraphError::InvalidGraph("cyclic parent links".into()));
            }
            chain.push(parent);
            current = node.parent;
        }
        chain.reverse();
        Ok(chain)
    }

    fn place(&mut self, leaf: NodeId) -> Result<(), FlowGraphError> {
        let chain = self.ancestors(leaf)?;
        let shared = self
            .open
            .iter()
            .zip(&chain)
            .take_while(|(a, b)| a == b)
            .count();
        for done in self.open.drain(shared..) {
            self.closed.insert(done);
        }
        for composite in &chain[shared..] {
            if self.closed.contains(composite) {
                return Err(FlowGraphError::BrokenPath(format!(
                    "members of composite {composite} are not contiguous"
                )));
            }
            let parent = self.open.last().copied();
            self.children.entry(parent).or_default().push(*composite);
            self.open.push(*composite);
        }
        let parent = self.open.last().copied();
        self.children.entry(parent).or_default().push(leaf);
        Ok(())
    }

    fn finish(self) -> Result<Vec<Step>, FlowGraphError> {
        for node in self.by_id.values() {
            if node.kind == NodeKind::Composite && !self.children.contains_key(&Some(node.uid)) {
                return Err(FlowGraphError::InvalidGraph(format!(
                    "composite {} has no member steps",
                    node.uid
                )));
            }
        }
        self.build(None)
    }

    fn build(&self, parent: Option<NodeId>) -> Result<Vec<Step>, FlowGraphError> {
        let Some(members) = self.children.get(&parent) else {
            return Ok(Vec::new());
        };
        members
            .iter()
            .map(|id| {
                let node = self.by_id[id];
                let text = |value: &Option<String>| {
                    StepText::new(value.as_deref().unwrap_or_default())
                        .map_err(|e| FlowGraphError::InvalidGraph(e.to_string()))
                };
                Ok(Step {
                    uid: step_uid(*id, "step node")?,
                    label: StepLabel::top(1),
                    name: text(&node.name)?,
                    description: text(&node.description)?,
                    jumps: Vec::new(),
                    children: self.build(Some(*id))?,
                })
            })
            .collect()
    }
}
