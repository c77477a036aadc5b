//! The `graphdsl` command. Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success: metamodel clean, simulation converged, interpreter completed |
//! | 1 | negative result: diagnostics found, not converged, run stopped early |
//! | 2 | usage error (bad flags or arguments) |
//! | 3 | unreadable or invalid input file |
//! | 4 | runtime failure (e.g. the server could not bind) |

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use graphdsl_core::interpreter::{execute, ExecutionContext, ExecutionReport, InterpreterLibrary, ValidationPolicy, DEFAULT_MAX_STEPS};
use graphdsl_core::meta::{parse_metamodel, validate_metamodel, Diagnostic, Metamodel, MetamodelSpec};
use graphdsl_core::model::GraphModelInstance;
use graphdsl_core::schema::{emit_ddl, generate_schema, MemoryStore};
use graphdsl_core::service::HookRegistry;
use graphdsl_server::ServerConfig;
use graphdsl_sim::{run_scenario, Scenario};
use serde_json::json;

pub const EXIT_OK: u8 = 0;
pub const EXIT_NEGATIVE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_INPUT: u8 = 3;
pub const EXIT_RUNTIME: u8 = 4;

const EXIT_CODES: &str = "Exit codes: 0 success, 1 negative result (diagnostics, not converged, \
run stopped early), 2 usage error, 3 invalid input, 4 runtime failure.";

#[derive(Parser, Debug)]
#[command(name = "graphdsl", version, about = "Metamodel-driven collaborative graph modeling", after_help = EXIT_CODES)]
pub struct Cli {
    /// Output style; `structured` prints JSON objects, including errors.
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Structured,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check a metamodel file; exit 0 iff it is clean.
    Validate { metamodel: PathBuf },
    /// Emit the relational schema: DDL and/or one CSV per table.
    Schema {
        metamodel: PathBuf,
        /// Write the DDL here instead of standard output.
        #[arg(long)]
        ddl: Option<PathBuf>,
        /// Write one CSV file per table into this directory.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Model snapshot whose rows fill the CSV files (headers only otherwise).
        #[arg(long, requires = "csv")]
        model: Option<PathBuf>,
    },
    /// Run the socket and HTTP server until interrupted.
    Serve {
        metamodel: PathBuf,
        /// TOML config: listen, auto-create, persistence-dir, seed.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the listen address from the config.
        #[arg(long)]
        listen: Option<std::net::SocketAddr>,
    },
    /// Run a scenario against an in-process server; exit 0 iff converged.
    Simulate { metamodel: PathBuf, scenario: PathBuf },
    /// Run a built-in interpreter over a model snapshot.
    Interpret { metamodel: PathBuf, snapshot: PathBuf, interpreter: String },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error("unknown interpreter `{name}` (available: {available})")]
    UnknownInterpreter { name: String, available: String },
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Read { .. } => "read",
            CliError::Write { .. } => "write",
            CliError::Invalid { .. } => "invalid-input",
            CliError::UnknownInterpreter { .. } => "unknown-interpreter",
            CliError::Runtime(_) => "runtime",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Runtime(_) | CliError::Write { .. } => EXIT_RUNTIME,
            _ => EXIT_INPUT,
        }
    }

    pub fn structured(&self) -> String {
        json!({ "error": { "kind": self.kind(), "message": self.to_string() } }).to_string()
    }
}

/// What a subcommand prints and how it exits.
pub struct Outcome {
    pub output: String,
    pub code: u8,
}

impl Outcome {
    fn new(output: String, ok: bool) -> Self {
        Outcome { output, code: if ok { EXIT_OK } else { EXIT_NEGATIVE } }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Read { path: path.into(), source })
}

fn invalid(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Invalid { path: path.into(), message: e.to_string() }
}

pub fn load_metamodel(path: &Path) -> Result<Metamodel, CliError> {
    parse_metamodel(&read(path)?).map_err(|e| invalid(path, e))
}

fn load_snapshot(path: &Path) -> Result<GraphModelInstance, CliError> {
    serde_json::from_str(&read(path)?).map_err(|e| invalid(path, e))
}

fn pretty(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("json values serialize")
}

pub fn run(cli: Cli) -> Result<Outcome, CliError> {
    let structured = cli.format == Format::Structured;
    match cli.command {
        Command::Validate { metamodel } => validate(&metamodel, structured),
        Command::Schema { metamodel, ddl, csv, model } => {
            schema(&metamodel, ddl.as_deref(), csv.as_deref(), model.as_deref(), structured)
        }
        Command::Serve { metamodel, config, listen } => serve(metamodel, config.as_deref(), listen),
        Command::Simulate { metamodel, scenario } => simulate(&metamodel, &scenario, structured),
        Command::Interpret { metamodel, snapshot, interpreter } => {
            interpret(&metamodel, &snapshot, &interpreter, structured)
        }
    }
}

fn validate(path: &Path, structured: bool) -> Result<Outcome, CliError> {
    let spec: MetamodelSpec = serde_json::from_str(&read(path)?).map_err(|e| invalid(path, e))?;
    let diags = validate_metamodel(&spec);
    let output = if structured {
        pretty(&json!({ "metamodel": spec.graph_model.name, "valid": diags.is_empty(), "diagnostics": diags }))
    } else {
        diagnostics_table(&spec.graph_model.name, &diags)
    };
    Ok(Outcome::new(output, diags.is_empty()))
}

fn diagnostics_table(name: &str, diags: &[Diagnostic]) -> String {
    if diags.is_empty() {
        return format!("{name}: ok\n");
    }
    let rules: Vec<String> = diags.iter().map(|d| format!("{:?}", d.rule)).collect();
    let rw = rules.iter().map(String::len).max().unwrap_or(0).max(4);
    let ew = diags.iter().map(|d| d.element.len()).max().unwrap_or(0).max(7);
    let mut out = format!("{:rw$}  {:ew$}  message\n", "rule", "element");
    for (d, rule) in diags.iter().zip(&rules) {
        let _ = writeln!(out, "{rule:rw$}  {:ew$}  {}", d.element, d.message);
    }
    let _ = writeln!(out, "{name}: {} problem(s)", diags.len());
    out
}

fn schema(mm_path: &Path, ddl: Option<&Path>, csv: Option<&Path>, model: Option<&Path>, structured: bool) -> Result<Outcome, CliError> {
    let mm = load_metamodel(mm_path)?;
    let schema = generate_schema(&mm);
    let text = emit_ddl(&schema);
    let mut written: Vec<String> = Vec::new();
    if let Some(path) = ddl {
        std::fs::write(path, &text).map_err(|source| CliError::Write { path: path.into(), source })?;
        written.push(path.display().to_string());
    }
    if let Some(dir) = csv {
        let mut store = MemoryStore::new(schema.clone());
        if let Some(p) = model {
            store.store_snapshot(&load_snapshot(p)?).map_err(|e| invalid(p, e))?;
        }
        let files = store.export_csv(dir).map_err(|source| CliError::Write { path: dir.into(), source })?;
        written.extend(files.iter().map(|f| f.display().to_string()));
    }
    let output = match (structured, ddl.is_none() && csv.is_none()) {
        (true, print_ddl) => pretty(&json!({
            "tables": schema.tables.len(),
            "ddl": print_ddl.then_some(&text),
            "written": written,
        })),
        (false, true) => text,
        (false, false) => written.iter().map(|w| format!("wrote {w}\n")).collect(),
    };
    Ok(Outcome::new(output, true))
}

fn serve(metamodel: PathBuf, config: Option<&Path>, listen: Option<std::net::SocketAddr>) -> Result<Outcome, CliError> {
    let mut cfg = match config {
        Some(p) => ServerConfig::load(p).map_err(|e| invalid(p, e))?,
        None => ServerConfig::new(&metamodel),
    };
    cfg.metamodel = metamodel;
    if let Some(addr) = listen {
        cfg.listen = addr;
    }
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .try_init();
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(e.to_string()))?;
    rt.block_on(graphdsl_server::serve(&cfg, HookRegistry::new())).map_err(|e| match e {
        graphdsl_server::ServeError::Metamodel(m) => invalid(&cfg.metamodel, m),
        other => CliError::Runtime(other.to_string()),
    })?;
    Ok(Outcome::new(String::new(), true))
}

fn simulate(mm_path: &Path, scenario_path: &Path, structured: bool) -> Result<Outcome, CliError> {
    let mm = Arc::new(load_metamodel(mm_path)?);
    let scenario = Scenario::from_json(&read(scenario_path)?).map_err(|e| invalid(scenario_path, e))?;
    let report = run_scenario(mm, &scenario);
    let output = if structured { report.to_json() } else { report.to_string() };
    Ok(Outcome::new(output, report.converged))
}

fn interpret(mm_path: &Path, snapshot: &Path, name: &str, structured: bool) -> Result<Outcome, CliError> {
    let mm = load_metamodel(mm_path)?;
    let model = load_snapshot(snapshot)?;
    let lib = InterpreterLibrary::builtin();
    if lib.get(name).is_none() {
        let available = lib.names().collect::<Vec<_>>().join(", ");
        return Err(CliError::UnknownInterpreter { name: name.to_string(), available });
    }
    let report = lib
        .build(name, &mm, DEFAULT_MAX_STEPS)
        .and_then(|def| execute(name, &model, &mm, &def, ExecutionContext::default(), ValidationPolicy::Warn))
        .map_err(|e| invalid(snapshot, e))?;
    let output = if structured {
        let v: serde_json::Value = serde_json::from_str(&report.to_json()).expect("report is json");
        pretty(&v)
    } else {
        report_table(&report)
    };
    Ok(Outcome::new(output, report.completed()))
}

fn report_table(r: &ExecutionReport) -> String {
    let mut out = format!("interpreter: {}\noutcome: {}\n", r.interpreter, r.outcome);
    let _ = writeln!(out, "trace ({} steps):", r.trace.len());
    for (i, t) in r.trace.iter().enumerate() {
        let _ = writeln!(out, "  {:>4}  {}  {}", i + 1, t.element_id, t.type_name);
    }
    if !r.skipped.is_empty() {
        let _ = writeln!(out, "skipped:");
        for t in &r.skipped {
            let _ = writeln!(out, "        {}  {}", t.element_id, t.type_name);
        }
    }
    let _ = writeln!(out, "bindings:");
    for (k, v) in &r.bindings {
        let _ = writeln!(out, "  {k} = {v}");
    }
    for w in &r.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}
