// Parse the essay workflow, walk its tree, and see what validation reports
// for a broken variant.

use std::error::Error;

use lowcode_llm::workflow::{parse_workflow, serialize_workflow, validate_workflow};

const ESSAY: &str = include_str!("../fixtures/essay.sop");

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let workflow = parse_workflow(ESSAY)?;
    for step in workflow.preorder() {
        let indent = "  ".repeat(step.label().depth() - 1);
        println!("{indent}{} {} ({})", step.label(), step.name(), step.uid());
        for rule in step.jumps() {
            let target = workflow.target_label(&rule.target).expect("jump resolves");
            println!("{indent}  if {} -> STEP {target}", rule.condition);
        }
    }
    assert!(validate_workflow(&workflow).is_empty());
    assert_eq!(serialize_workflow(&workflow)?, ESSAY);

    let broken = parse_workflow("STEP 1: [Draft][Write a draft][[[if stuck][Jump to STEP 3]]]\nSTEP 2: [ ][Review][]")?;
    let violations = validate_workflow(&broken);
    for v in &violations {
        println!("{v}");
    }
    assert_eq!(violations.len(), 2);
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
