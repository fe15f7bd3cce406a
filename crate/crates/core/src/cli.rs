//! The `lowcode` command line.
//!
//! Exit codes: 0 success, 1 domain failure (parse, validation, planning),
//! 2 usage or configuration error, 3 LLM transport failure.

use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};

use crate::flowgraph::{export_graph, to_flowgraph, ExportFormat};
use crate::llm::{
    ChatClient, ChatMessage, ConfirmedSop, ExtendError, HttpChatClient, LlmClientConfig,
    LlmGateway, MockChatClient, MockScript, PlanningError, PromptBundle,
};
use crate::session::{router, FileStore, ServiceConfig, SessionService};
use crate::workflow::{
    parse_workflow, repair_raw_output, serialize_workflow, validate_workflow, StepLabel, Workflow,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_TRANSPORT: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "lowcode", version, about = "Plan, edit and run structured LLM workflows")]
struct Cli {
    /// Directory with prompt overrides (`planning_prefix.txt` and friends).
    #[arg(long, global = true, value_name = "DIR")]
    prompts: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the canonical form of a workflow file.
    Parse { file: PathBuf },
    /// List validation problems; exits 0 only when there are none.
    Validate { file: PathBuf },
    /// Export the flowchart as DOT or graph-JSON.
    Render {
        file: PathBuf,
        #[arg(long, default_value = "dot")]
        format: String,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Clean up raw model output into workflow text.
    Repair { file: PathBuf },
    /// Ask the planning model for a workflow.
    Plan {
        task: String,
        #[arg(long, value_name = "SCRIPT")]
        mock: Option<PathBuf>,
        /// Write the workflow here instead of stdout.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Ask for sub-steps of one step and rewrite the file.
    Extend {
        file: PathBuf,
        #[arg(long)]
        step: StepLabel,
        #[arg(long)]
        task: String,
        #[arg(long, value_name = "SCRIPT")]
        mock: Option<PathBuf>,
    },
    /// Confirm a workflow and chat with the executing model over stdin.
    Run {
        file: PathBuf,
        task: String,
        #[arg(long, value_name = "SCRIPT")]
        mock: Option<PathBuf>,
    },
    /// Start the HTTP session service.
    Serve {
        /// Defaults to `BIND_ADDR`, then 127.0.0.1:8080.
        #[arg(long)]
        bind: Option<String>,
        /// Defaults to `DATA_DIR`, then ./data.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long, value_name = "SCRIPT")]
        mock: Option<PathBuf>,
        /// Do not plan automatically when a session is created.
        #[arg(long)]
        defer_plan: bool,
    },
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    fn domain(message: impl Into<String>) -> Self {
        Self::new(EXIT_DOMAIN, message)
    }

    fn usage(message: impl Into<String>) -> Self {
        Self::new(EXIT_USAGE, message)
    }
}

type Outcome = Result<(), Failure>;

/// Runs one command line. `args` includes the program name.
pub fn run_cli<I, T>(args: I, stdin: &mut dyn BufRead, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(rendered.as_bytes())
            } else {
                stdout.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli, stdin, stdout) {
        Ok(()) => EXIT_OK,
        Err(failure) => {
            let _ = writeln!(stderr, "error: {}", failure.message);
            failure.code
        }
    }
}

fn dispatch(cli: Cli, stdin: &mut dyn BufRead, stdout: &mut dyn Write) -> Outcome {
    let bundle = match &cli.prompts {
        Some(dir) => PromptBundle::load_dir(dir)
            .map_err(|e| Failure::usage(format!("cannot read prompts from {}: {e}", dir.display())))?,
        None => PromptBundle::default(),
    };
    match cli.command {
        Command::Parse { file } => parse_cmd(&file, stdout),
        Command::Validate { file } => validate_cmd(&file, stdout),
        Command::Render { file, format, out } => render_cmd(&file, &format, out.as_deref(), stdout),
        Command::Repair { file } => {
            let raw = read(&file)?;
            emit(stdout, &repair_raw_output(&raw))
        }
        Command::Plan { task, mock, out } => {
            let gateway = gateway(mock.as_deref(), bundle)?;
            let w = gateway.plan_workflow(&task).map_err(|e| match e {
                PlanningError::Llm(e) => Failure::new(EXIT_TRANSPORT, e.to_string()),
                PlanningError::EmptyTask => Failure::usage("task must not be empty"),
                PlanningError::Failed { raw, problems } => Failure::domain(format!(
                    "planning failed:\n  {}\nlast reply:\n{raw}",
                    problems.join("\n  ")
                )),
            })?;
            let text = canonical(&w)?;
            match out {
                Some(path) => write_file(&path, &text),
                None => emit(stdout, &text),
            }
        }
        Command::Extend {
            file,
            step,
            task,
            mock,
        } => {
            let w = load_valid(&file)?.with_task(task);
            let gateway = gateway(mock.as_deref(), bundle)?;
            let extended = gateway.extend_step(&w, &step).map_err(|e| match e {
                ExtendError::Llm(e) => Failure::new(EXIT_TRANSPORT, e.to_string()),
                ExtendError::EmptyTask => Failure::usage("task must not be empty"),
                other => Failure::domain(other.to_string()),
            })?;
            write_file(&file, &canonical(&extended)?)
        }
        Command::Run { file, task, mock } => {
            let w = load_valid(&file)?;
            let sop = ConfirmedSop::confirm(&w).map_err(|e| Failure::domain(e.to_string()))?;
            let gateway = gateway(mock.as_deref(), bundle)?;
            chat_loop(&gateway, &task, &sop, stdin, stdout)
        }
        Command::Serve {
            bind,
            data_dir,
            mock,
            defer_plan,
        } => {
            let bind = bind
                .or_else(|| std::env::var("BIND_ADDR").ok())
                .unwrap_or_else(|| "127.0.0.1:8080".to_string());
            let data_dir = data_dir
                .or_else(|| std::env::var_os("DATA_DIR").map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("data"));
            let gateway = gateway(mock.as_deref(), bundle)?;
            serve(&bind, &data_dir, gateway, ServiceConfig { defer_plan })
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> Outcome {
    std::fs::write(path, format!("{text}\n"))
        .map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))
}

fn emit(stdout: &mut dyn Write, text: &str) -> Outcome {
    writeln!(stdout, "{text}").map_err(|e| Failure::usage(format!("cannot write output: {e}")))
}

fn canonical(w: &Workflow) -> Result<String, Failure> {
    serialize_workflow(w).map_err(|e| Failure::domain(e.to_string()))
}

fn load(path: &Path) -> Result<Workflow, Failure> {
    parse_workflow(&read(path)?).map_err(|e| Failure::domain(format!("{}: {e}", path.display())))
}

fn load_valid(path: &Path) -> Result<Workflow, Failure> {
    let w = load(path)?;
    let violations = validate_workflow(&w);
    if violations.is_empty() {
        Ok(w)
    } else {
        let lines: Vec<String> = violations.iter().map(ToString::to_string).collect();
        Err(Failure::domain(format!("{} is not valid:\n  {}", path.display(), lines.join("\n  "))))
    }
}

fn parse_cmd(file: &Path, stdout: &mut dyn Write) -> Outcome {
    let text = canonical(&load(file)?)?;
    emit(stdout, &text)
}

fn validate_cmd(file: &Path, stdout: &mut dyn Write) -> Outcome {
    let w = load(file)?;
    let violations = validate_workflow(&w);
    for v in &violations {
        emit(stdout, &v.to_string())?;
    }
    if violations.is_empty() {
        emit(stdout, &format!("ok: {} steps", w.len()))
    } else {
        Err(Failure::domain(format!("{} violation(s)", violations.len())))
    }
}

fn render_cmd(file: &Path, format: &str, out: Option<&Path>, stdout: &mut dyn Write) -> Outcome {
    let format: ExportFormat = format.parse().map_err(Failure::usage)?;
    let w = load_valid(file)?;
    let graph = to_flowgraph(&w).map_err(|e| Failure::domain(e.to_string()))?;
    let rendered = export_graph(&graph, format).map_err(|e| Failure::domain(e.to_string()))?;
    match out {
        Some(path) => write_file(path, &rendered),
        None => emit(stdout, &rendered),
    }
}

fn client(mock: Option<&Path>) -> Result<(Arc<dyn ChatClient>, LlmClientConfig), Failure> {
    let cfg = LlmClientConfig::from_env().map_err(|e| Failure::usage(e.to_string()))?;
    if let Some(path) = mock {
        let script = MockScript::load(path)
            .map_err(|e| Failure::usage(format!("cannot load mock script {}: {e}", path.display())))?;
        return Ok((Arc::new(MockChatClient::from_script(script)), cfg));
    }
    if cfg.api_key.is_none() {
        return Err(Failure::usage("LLM_API_KEY is not set (or pass --mock <script.json>)"));
    }
    Ok((Arc::new(HttpChatClient::new(cfg.clone())), cfg))
}

fn gateway(mock: Option<&Path>, bundle: PromptBundle) -> Result<LlmGateway, Failure> {
    let (client, cfg) = client(mock)?;
    Ok(LlmGateway::new(client).with_bundle(bundle).with_temperatures(&cfg))
}

fn chat_loop(
    gateway: &LlmGateway,
    task: &str,
    sop: &ConfirmedSop,
    stdin: &mut dyn BufRead,
    stdout: &mut dyn Write,
) -> Outcome {
    let mut history: Vec<ChatMessage> = Vec::new();
    let mut line = String::new();
    loop {
        line.clear();
        let read = stdin
            .read_line(&mut line)
            .map_err(|e| Failure::usage(format!("cannot read input: {e}")))?;
        if read == 0 {
            return Ok(());
        }
        let message = line.trim();
        if message.is_empty() {
            continue;
        }
        history.push(ChatMessage::user(message));
        match gateway.respond(task, sop, &history) {
            Ok(reply) => {
                emit(stdout, &reply)?;
                history.push(ChatMessage::assistant(reply));
            }
            Err(e) => return Err(Failure::new(EXIT_TRANSPORT, e.to_string())),
        }
    }
}

fn serve(bind: &str, data_dir: &Path, gateway: LlmGateway, config: ServiceConfig) -> Outcome {
    let store = FileStore::open(data_dir)
        .map_err(|e| Failure::usage(format!("cannot use data dir {}: {e}", data_dir.display())))?;
    let service = Arc::new(SessionService::with_config(Arc::new(store), gateway, config));
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::usage(e.to_string()))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(bind)
            .await
            .map_err(|e| Failure::usage(format!("cannot bind {bind}: {e}")))?;
        tracing::info!(addr = %bind, dir = %data_dir.display(), "serving sessions");
        axum::serve(listener, router(service))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| Failure::new(EXIT_DOMAIN, e.to_string()))
    })
}
