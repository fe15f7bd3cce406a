// Messy planner completions cleaned up by the repair layer.

use std::error::Error;

use lowcode_llm::workflow::{parse_workflow, repair_raw_output};

const SAMPLES: &[&str] = &[
    include_str!("../fixtures/repair/01_preamble.txt"),
    include_str!("../fixtures/repair/02_lowercase_step.txt"),
    include_str!("../fixtures/repair/03_missing_jump_field.txt"),
    include_str!("../fixtures/repair/04_wrapped_description.txt"),
    include_str!("../fixtures/repair/05_trailing_prose.txt"),
    include_str!("../fixtures/repair/12_heading_markers.txt"),
];

pub fn run_example() -> Result<(), Box<dyn Error>> {
    for raw in SAMPLES {
        println!("--- raw\n{}", raw.trim_end());
        let repaired = repair_raw_output(raw);
        println!("--- repaired\n{repaired}");
        assert_eq!(repair_raw_output(&repaired), repaired);
        let w = parse_workflow(&repaired)?;
        println!("--- {} steps\n", w.len());
    }
    // Text without any step header has nothing to salvage.
    assert_eq!(repair_raw_output("I cannot help with that."), "");
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
