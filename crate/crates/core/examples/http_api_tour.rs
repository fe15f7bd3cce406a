// The session HTTP API end to end: a server on an ephemeral port, driven
// with plain HTTP requests.

use std::error::Error;
use std::sync::Arc;

use lowcode_llm::llm::{LlmGateway, MockChatClient, MockScript};
use lowcode_llm::session::{router, MemoryStore, SessionService};
use serde_json::{json, Value};

const SCRIPT: &str = include_str!("../fixtures/mock/essay.json");

fn call(agent: &ureq::Agent, method: &str, url: &str, body: Option<Value>) -> Result<(u16, String), Box<dyn Error>> {
    let mut response = match (method, body) {
        ("GET", _) => agent.get(url).call()?,
        (_, Some(body)) => agent
            .post(url)
            .header("Content-Type", "application/json")
            .send(body.to_string())?,
        (_, None) => agent.post(url).send_empty()?,
    };
    let status = response.status().as_u16();
    Ok((status, response.body_mut().read_to_string()?))
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let mock = Arc::new(MockChatClient::from_script(MockScript::from_json(SCRIPT)?));
    mock.push_reply("Let's start with research: what do you already know about drunk driving?");
    let service = Arc::new(SessionService::new(Arc::new(MemoryStore::new()), LlmGateway::new(mock)));

    let runtime = tokio::runtime::Runtime::new()?;
    let listener = runtime.block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))?;
    let base = format!("http://{}", listener.local_addr()?);
    runtime.spawn(async move { axum::serve(listener, router(service)).await });

    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    let task = "Write an essay titled 'Drunk Driving As A Social Issue'";
    let (status, body) = call(&agent, "POST", &format!("{base}/sessions"), Some(json!({ "task": task })))?;
    assert_eq!(status, 201);
    let session: Value = serde_json::from_str(&body)?;
    let id = session["id"].as_str().ok_or("no id")?.to_string();
    let url = |path: &str| format!("{base}/sessions/{id}{path}");
    println!("POST /sessions -> {status}, state {}", session["state"]);

    let steps = [
        ("POST", "/extend", Some(json!({ "target": "3" }))),
        ("GET", "/flowgraph?format=dot", None),
        ("POST", "/chat", Some(json!({ "message": "hello" }))),
        ("POST", "/confirm", None),
        ("POST", "/chat", Some(json!({ "message": "I need help with my essay" }))),
        ("POST", "/edits", Some(json!({ "op": "RemoveJump", "uid": "s2", "index": 0 }))),
        ("POST", "/reopen", None),
        ("GET", "/events?since=5", None),
    ];
    for (method, path, body) in steps {
        let (status, text) = call(&agent, method, &url(path), body)?;
        let summary = serde_json::from_str::<Value>(&text)
            .ok()
            .and_then(|v| v.get("state").or_else(|| v.get("error")).cloned())
            .map(|v| v.to_string())
            .unwrap_or_else(|| format!("{} bytes", text.len()));
        println!("{method} {path} -> {status} {summary}");
    }

    let (status, _) = call(&agent, "GET", &format!("{base}/sessions/missing"), None)?;
    assert_eq!(status, 404);
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
