//! Sequential model interpreter: per-type instructions, a dispatcher that
//! walks the supertype chain, optional preconditions, a global context and
//! a LIFO execution stack.

mod library;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::guard::{validate_model, ModelDiagnostic};
use crate::ids::ElementId;
use crate::meta::Metamodel;
use crate::model::{Element, GraphModelInstance};

pub use library::{Factory, InterpreterLibrary, LibraryEntry, DEFAULT_MAX_STEPS};

/// Context binding key: free text or a model element.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Key {
    Text(String),
    Element(ElementId),
}

impl From<&str> for Key {
    fn from(s: &str) -> Self {
        Key::Text(s.to_string())
    }
}

impl From<ElementId> for Key {
    fn from(id: ElementId) -> Self {
        Key::Element(id)
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Key::Text(s) => f.write_str(s),
            Key::Element(id) => write!(f, "@{id}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
    Element(ElementId),
    List(Vec<Value>),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("null"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{x}"),
            Value::Text(s) => write!(f, "{s:?}"),
            Value::Element(id) => write!(f, "@{id}"),
            Value::List(items) => {
                f.write_str("[")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("]")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TraceEntry {
    pub element_id: ElementId,
    pub type_name: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExecutionContext {
    pub bindings: BTreeMap<Key, Value>,
    pub trace: Vec<TraceEntry>,
    /// Elements popped whose precondition failed.
    pub skipped: Vec<TraceEntry>,
}

impl ExecutionContext {
    pub fn get(&self, key: impl Into<Key>) -> Option<&Value> {
        self.bindings.get(&key.into())
    }

    pub fn set(&mut self, key: impl Into<Key>, value: Value) {
        self.bindings.insert(key.into(), value);
    }

    /// Appends to a list binding, creating it when absent.
    pub fn append(&mut self, key: impl Into<Key>, value: Value) {
        match self.bindings.entry(key.into()).or_insert_with(|| Value::List(Vec::new())) {
            Value::List(items) => items.push(value),
            other => *other = Value::List(vec![other.clone(), value]),
        }
    }
}

/// Elements an instruction schedules next. Pushed in order, so the last
/// pushed runs first.
#[derive(Debug, Default)]
pub struct StackControl {
    pushed: Vec<ElementId>,
}

impl StackControl {
    pub fn push(&mut self, id: ElementId) {
        self.pushed.push(id);
    }

    /// Pushes in reverse so that `ids[0]` executes next.
    pub fn push_in_order(&mut self, ids: &[ElementId]) {
        self.pushed.extend(ids.iter().rev());
    }
}

pub type Instruction =
    Arc<dyn Fn(&GraphModelInstance, &Element, &mut ExecutionContext, &mut StackControl) -> Result<(), String> + Send + Sync>;
pub type Precondition = Arc<dyn Fn(&GraphModelInstance, &Element, &ExecutionContext) -> bool + Send + Sync>;
pub type Selector = Arc<dyn Fn(&GraphModelInstance) -> Vec<ElementId> + Send + Sync>;

#[derive(Clone)]
pub struct Registration {
    pub precondition: Option<Precondition>,
    pub instruction: Instruction,
}

#[derive(Clone)]
pub struct InterpreterDefinition {
    instructions: BTreeMap<String, Registration>,
    initial_selector: Selector,
    pub max_steps: usize,
}

impl fmt::Debug for InterpreterDefinition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InterpreterDefinition")
            .field("types", &self.instructions.keys().collect::<Vec<_>>())
            .field("max_steps", &self.max_steps)
            .finish()
    }
}

impl InterpreterDefinition {
    pub fn new(
        selector: impl Fn(&GraphModelInstance) -> Vec<ElementId> + Send + Sync + 'static,
        max_steps: usize,
    ) -> Self {
        InterpreterDefinition { instructions: BTreeMap::new(), initial_selector: Arc::new(selector), max_steps }
    }

    pub fn on(
        mut self,
        type_name: &str,
        instruction: impl Fn(&GraphModelInstance, &Element, &mut ExecutionContext, &mut StackControl) -> Result<(), String>
            + Send
            + Sync
            + 'static,
    ) -> Self {
        self.instructions
            .insert(type_name.to_string(), Registration { precondition: None, instruction: Arc::new(instruction) });
        self
    }

    pub fn on_if(
        mut self,
        type_name: &str,
        precondition: impl Fn(&GraphModelInstance, &Element, &ExecutionContext) -> bool + Send + Sync + 'static,
        instruction: impl Fn(&GraphModelInstance, &Element, &mut ExecutionContext, &mut StackControl) -> Result<(), String>
            + Send
            + Sync
            + 'static,
    ) -> Self {
        self.instructions.insert(
            type_name.to_string(),
            Registration { precondition: Some(Arc::new(precondition)), instruction: Arc::new(instruction) },
        );
        self
    }

    /// Every registered type must exist in the metamodel.
    pub fn check(&self, mm: &Metamodel) -> Result<(), InterpretError> {
        match self.instructions.keys().find(|t| !mm.contains(t)) {
            Some(t) => Err(InterpretError::UnknownType(t.clone())),
            None => Ok(()),
        }
    }

    pub fn registered_types(&self) -> impl Iterator<Item = &str> {
        self.instructions.keys().map(String::as_str)
    }
}

/// Most specific registration along the supertype chain of `type_name`.
pub fn dispatch<'d>(
    def: &'d InterpreterDefinition,
    mm: &Metamodel,
    type_name: &str,
) -> Result<&'d Registration, InterpretError> {
    mm.supertype_chain(type_name)
        .find_map(|t| def.instructions.get(t))
        .ok_or_else(|| InterpretError::NoInstruction(type_name.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValidationPolicy {
    /// Run anyway; diagnostics are reported as warnings.
    #[default]
    Warn,
    Refuse,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum InterpretError {
    #[error("no instruction for type `{0}` or any supertype")]
    NoInstruction(String),
    #[error("step limit of {max_steps} exceeded")]
    StepLimitExceeded { max_steps: usize, context: Box<ExecutionContext> },
    #[error("instruction failed on {element}: {cause}")]
    InstructionFault { element: ElementId, cause: String },
    #[error("unknown type `{0}`")]
    UnknownType(String),
    #[error("model is invalid ({} diagnostics)", .0.len())]
    InvalidModel(Vec<ModelDiagnostic>),
    #[error("unknown interpreter `{0}`")]
    UnknownInterpreter(String),
}

/// Runs `def` over a read-only model, starting from `initial` bindings.
pub fn run(
    model: &GraphModelInstance,
    mm: &Metamodel,
    def: &InterpreterDefinition,
    initial: ExecutionContext,
) -> Result<ExecutionContext, InterpretError> {
    def.check(mm)?;
    let mut ctx = initial;
    let mut stack: Vec<ElementId> = (def.initial_selector)(model);
    stack.reverse();
    while let Some(id) = stack.pop() {
        let element = model
            .element(id)
            .ok_or_else(|| InterpretError::InstructionFault { element: id, cause: "no such element".into() })?;
        let reg = dispatch(def, mm, element.type_name())?;
        let entry = TraceEntry { element_id: id, type_name: element.type_name().to_string() };
        if let Some(pre) = &reg.precondition {
            if !pre(model, element, &ctx) {
                ctx.skipped.push(entry);
                continue;
            }
        }
        if ctx.trace.len() >= def.max_steps {
            return Err(InterpretError::StepLimitExceeded { max_steps: def.max_steps, context: Box::new(ctx) });
        }
        ctx.trace.push(entry);
        let mut control = StackControl::default();
        (reg.instruction)(model, element, &mut ctx, &mut control)
            .map_err(|cause| InterpretError::InstructionFault { element: id, cause })?;
        stack.extend(control.pushed);
    }
    Ok(ctx)
}

/// Structured run result, as sent to clients and printed by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ExecutionReport {
    pub interpreter: String,
    /// `completed`, or the error that stopped the run.
    pub outcome: String,
    pub trace: Vec<TraceEntry>,
    pub skipped: Vec<TraceEntry>,
    pub bindings: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ExecutionReport {
    pub fn completed(&self) -> bool {
        self.outcome == "completed"
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

fn report_of(name: &str, ctx: &ExecutionContext, outcome: String, warnings: Vec<String>) -> ExecutionReport {
    ExecutionReport {
        interpreter: name.to_string(),
        outcome,
        trace: ctx.trace.clone(),
        skipped: ctx.skipped.clone(),
        bindings: ctx.bindings.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        warnings,
    }
}

/// Validates per `policy`, runs, and folds the result into a report.
pub fn execute(
    name: &str,
    model: &GraphModelInstance,
    mm: &Metamodel,
    def: &InterpreterDefinition,
    initial: ExecutionContext,
    policy: ValidationPolicy,
) -> Result<ExecutionReport, InterpretError> {
    let diags = validate_model(model, mm);
    if policy == ValidationPolicy::Refuse && !diags.is_empty() {
        return Err(InterpretError::InvalidModel(diags));
    }
    let warnings: Vec<String> = diags.iter().map(ToString::to_string).collect();
    match run(model, mm, def, initial) {
        Ok(ctx) => Ok(report_of(name, &ctx, "completed".into(), warnings)),
        Err(InterpretError::StepLimitExceeded { max_steps, context }) => {
            Ok(report_of(name, &context, format!("step limit of {max_steps} exceeded"), warnings))
        }
        Err(e) => Err(e),
    }
}
