// Planning and extending the essay workflow against a scripted model.
// Swap `MockChatClient` for `HttpChatClient` to talk to a real endpoint.

use std::error::Error;
use std::sync::Arc;

use lowcode_llm::llm::{LlmGateway, MockChatClient, MockScript};
use lowcode_llm::workflow::{serialize_workflow, StepLabel};

const SCRIPT: &str = include_str!("../fixtures/mock/essay.json");
const ESSAY: &str = include_str!("../fixtures/essay.sop");

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let mock = Arc::new(MockChatClient::from_script(MockScript::from_json(SCRIPT)?));
    let gateway = LlmGateway::new(mock.clone());

    let task = "Write an essay titled 'Drunk Driving As A Social Issue'";
    let plan = gateway.plan_workflow(task)?;
    println!("{}\n", serialize_workflow(&plan)?);

    let extended = gateway.extend_step(&plan, &StepLabel::top(3))?;
    let text = serialize_workflow(&extended)?;
    println!("{text}\n");
    assert_eq!(text, ESSAY);

    for (i, request) in mock.requests().iter().enumerate() {
        let roles: Vec<String> = request.messages.iter().map(|m| format!("{:?}", m.role)).collect();
        let last = &request.messages.last().expect("non-empty").content;
        println!("request {i}: [{}] last turn: {last}", roles.join(", "));
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
