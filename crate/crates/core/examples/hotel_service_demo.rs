// A hotel front-desk assistant: the manager adjusts the planned workflow,
// confirms it, and a guest chats with the executing model.

use std::error::Error;
use std::sync::Arc;

use lowcode_llm::editops::{EditOp, InsertAfter};
use lowcode_llm::llm::{MockChatClient, MockScript, LlmGateway, Role};
use lowcode_llm::session::{load_session, MemoryStore, SessionService};
use lowcode_llm::workflow::{StepLabel, StepText};

const SCRIPT: &str = include_str!("../fixtures/mock/hotel.json");

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let mock = Arc::new(MockChatClient::from_script(MockScript::from_json(SCRIPT)?));
    let store = Arc::new(MemoryStore::new());
    let gateway = LlmGateway::new(mock.clone());
    let service = SessionService::new(store.clone(), gateway.clone());

    let created = service.create_session("Act as the virtual front desk of the Seaside Hotel")?;
    let id = created.session.id.clone();
    println!("{}\n", created.session.workflow_text().unwrap_or_default());

    // The manager wants members identified right after the greeting.
    let greet = created
        .session
        .workflow
        .as_ref()
        .and_then(|w| w.find_by_label(&StepLabel::top(1)))
        .map(|s| s.uid())
        .ok_or("plan has no first step")?;
    service.apply_edit(
        &id,
        EditOp::AddStep {
            after: InsertAfter::Step(greet),
            name: StepText::new("Check membership")?,
            description: StepText::new("Ask whether the guest is a loyalty member and apply a 10% discount if so")?,
        },
    )?;
    let confirmed = service.confirm(&id)?;
    println!("{}\n", confirmed.confirmed.as_ref().map(|c| c.as_str()).unwrap_or_default());

    for line in ["Hi there", "Yes, I am a member", "I would like to book a room"] {
        let session = service.chat_turn(&id, line)?;
        let reply = session.chat.last().filter(|m| m.role == Role::Assistant).ok_or("no reply")?;
        println!("guest: {line}\ndesk:  {}\n", reply.content);
    }

    // Every executing request carried the confirmed text, never a draft.
    let sop = service.get_session(&id)?.confirmed.ok_or("not confirmed")?;
    for request in mock.requests().iter().skip(1) {
        assert!(request.messages[0].content.contains(sop.as_str()));
    }

    let replayed = load_session(store.as_ref(), &id, gateway.validation())?;
    assert_eq!(replayed, service.get_session(&id)?);
    println!("replayed {} events into an identical session", replayed.last_seq);
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
