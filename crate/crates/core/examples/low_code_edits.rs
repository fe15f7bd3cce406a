// The low-code operations applied one by one, the way a flowchart editor
// would send them, followed by a diff between the first and last version.

use std::error::Error;

use lowcode_llm::editops::{apply_edit, diff_workflows, EditError, EditOp, InsertAfter};
use lowcode_llm::workflow::{parse_workflow, serialize_workflow, Condition, StepLabel, StepText, Workflow};

const PLAN: &str = "STEP 1: [Brainstorming][Choose a topic or prompt, and generate ideas][]
STEP 2: [Research][Gather information from credible sources][[[if lack of ideas][Jump to STEP 1]]]
STEP 3: [Write][write the text][]";

fn uid(w: &Workflow, label: &str) -> lowcode_llm::workflow::StepId {
    let label: StepLabel = label.parse().expect("label");
    w.find_by_label(&label).expect("step exists").uid()
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let original = parse_workflow(PLAN)?.with_task("Write an essay");
    let mut w = original.clone();

    let edits = vec![
        EditOp::ModifyStep {
            uid: uid(&w, "3"),
            new_name: None,
            new_description: Some(StepText::new("Write the essay from the outline")?),
        },
        EditOp::AddStep {
            after: InsertAfter::Step(uid(&w, "3")),
            name: StepText::new("Proofread")?,
            description: StepText::new("Check spelling and punctuation")?,
        },
        EditOp::Reorder {
            uid: uid(&w, "2"),
            new_position: 0,
        },
        EditOp::RemoveJump {
            uid: uid(&w, "2"),
            index: 0,
        },
        EditOp::AddJump {
            uid: uid(&w, "3"),
            condition: Condition::new("lack of materials")?,
            target_uid: uid(&w, "2"),
        },
    ];
    for op in &edits {
        println!("{}", serde_json::to_string(op)?);
        w = apply_edit(&w, op)?;
    }
    println!("{}\n", serialize_workflow(&w)?);

    // Removing a step that other steps jump to is refused unless cascaded.
    let research = uid(&w, "1");
    let refused = apply_edit(&w, &EditOp::RemoveStep { uid: research, cascade: false });
    assert!(matches!(refused, Err(EditError::WouldOrphanJump { .. })));
    let trimmed = apply_edit(&w, &EditOp::RemoveStep { uid: research, cascade: true })?;
    println!("{}\n", serialize_workflow(&trimmed)?);

    let ops = diff_workflows(&original, &w);
    let mut replayed = original.clone();
    for op in &ops {
        replayed = apply_edit(&replayed, op)?;
    }
    assert!(replayed.same_structure(&w));
    println!("{} edits reproduce the final workflow from the original", ops.len());
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
