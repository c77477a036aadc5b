//! Interpreters shipped with the engine, looked up by name.

use super::{ExecutionContext, InterpretError, InterpreterDefinition, StackControl, Value};
use crate::ids::ElementId;
use crate::meta::{Literal, Metamodel, TypeKind};
use crate::model::{Element, GraphModelInstance};

pub type Factory = fn(&Metamodel, usize) -> Result<InterpreterDefinition, InterpretError>;

#[derive(Clone, Copy)]
pub struct LibraryEntry {
    pub name: &'static str,
    pub description: &'static str,
    build: Factory,
}

impl LibraryEntry {
    pub fn build(&self, mm: &Metamodel, max_steps: usize) -> Result<InterpreterDefinition, InterpretError> {
        (self.build)(mm, max_steps)
    }
}

#[derive(Clone)]
pub struct InterpreterLibrary {
    entries: Vec<LibraryEntry>,
}

impl Default for InterpreterLibrary {
    fn default() -> Self {
        Self::builtin()
    }
}

pub const DEFAULT_MAX_STEPS: usize = 1000;

impl InterpreterLibrary {
    pub fn builtin() -> Self {
        InterpreterLibrary {
            entries: vec![
                LibraryEntry {
                    name: "flow-log",
                    description: "walks Flow edges from each Start node, logging labels; Decision nodes follow the \
                                  edge whose guard matches the boolean binding named by their condition",
                    build: flow_log,
                },
                LibraryEntry {
                    name: "petri-fire",
                    description: "fires enabled transitions, tracking token counts per place",
                    build: petri_fire,
                },
            ],
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.iter().map(|e| e.name)
    }

    pub fn get(&self, name: &str) -> Option<&LibraryEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn build(&self, name: &str, mm: &Metamodel, max_steps: usize) -> Result<InterpreterDefinition, InterpretError> {
        self.get(name).ok_or_else(|| InterpretError::UnknownInterpreter(name.to_string()))?.build(mm, max_steps)
    }

    /// First interpreter applicable to the metamodel.
    pub fn default_for(&self, mm: &Metamodel) -> Option<&'static str> {
        self.entries.iter().find(|e| e.build(mm, 1).is_ok()).map(|e| e.name)
    }
}

fn require(mm: &Metamodel, t: &str) -> Result<(), InterpretError> {
    if mm.contains(t) {
        Ok(())
    } else {
        Err(InterpretError::UnknownType(t.to_string()))
    }
}

fn first_text(element: &Element, attr: &str) -> Option<String> {
    match element.attributes().get(attr)?.first()? {
        Literal::String(s) => Some(s.clone()),
        other => Some(other.to_string()),
    }
}

fn first_int(element: &Element, attr: &str) -> Option<i64> {
    match element.attributes().get(attr)?.first()? {
        Literal::Integer(i) => Some(*i),
        _ => None,
    }
}

fn label(element: &Element) -> String {
    first_text(element, "label")
        .or_else(|| first_text(element, "name"))
        .unwrap_or_else(|| element.type_name().to_string())
}

fn successors(model: &GraphModelInstance, node: ElementId, guard: Option<&str>) -> Vec<ElementId> {
    model
        .outgoing(node)
        .filter(|e| match guard {
            None => true,
            Some(g) => e.attributes.get("guard").and_then(|v| v.first()) == Some(&Literal::String(g.into())),
        })
        .map(|e| e.target_id)
        .collect()
}

fn flow_log(mm: &Metamodel, max_steps: usize) -> Result<InterpreterDefinition, InterpretError> {
    require(mm, "Start")?;
    let start_types: Vec<String> =
        mm.subtypes_of("Start").map_err(|e| InterpretError::UnknownType(e.to_string()))?.iter().cloned().collect();
    let mut def = InterpreterDefinition::new(
        move |m: &GraphModelInstance| {
            m.nodes().filter(|n| start_types.contains(&n.type_name)).map(|n| n.id).collect()
        },
        max_steps,
    );
    let step = |m: &GraphModelInstance, e: &Element, ctx: &mut ExecutionContext, stack: &mut StackControl| {
        ctx.append("log", Value::Text(label(e)));
        stack.push_in_order(&successors(m, e.id(), None));
        Ok(())
    };
    let roots = mm.types_of_kind(TypeKind::Node).into_iter().chain(mm.types_of_kind(TypeKind::Container));
    for t in roots {
        if mm.super_type(t).is_none() {
            def = def.on(t, step);
        }
    }
    if mm.contains("Decision") {
        def = def.on("Decision", |m, e, ctx, stack| {
            ctx.append("log", Value::Text(label(e)));
            let flag = match first_text(e, "condition") {
                None => false,
                Some(name) => match ctx.get(name.as_str()) {
                    None => false,
                    Some(Value::Bool(b)) => *b,
                    Some(other) => return Err(format!("condition `{name}` is {other}, not a boolean")),
                },
            };
            let branch = if flag { "true" } else { "false" };
            stack.push_in_order(&successors(m, e.id(), Some(branch)));
            Ok(())
        });
    }
    Ok(def)
}

fn tokens(ctx: &ExecutionContext, m: &GraphModelInstance, place: ElementId) -> i64 {
    match ctx.get(place) {
        Some(Value::Int(n)) => *n,
        _ => m.element(place).and_then(|p| first_int(p, "tokens")).unwrap_or(0),
    }
}

fn weight(m: &GraphModelInstance, arc: ElementId) -> i64 {
    m.element(arc).and_then(|a| first_int(a, "weight")).unwrap_or(1)
}

fn petri_fire(mm: &Metamodel, max_steps: usize) -> Result<InterpreterDefinition, InterpretError> {
    for t in ["Place", "Transition"] {
        require(mm, t)?;
    }
    let def = InterpreterDefinition::new(
        |m: &GraphModelInstance| m.nodes().filter(|n| n.type_name == "Transition").map(|n| n.id).collect(),
        max_steps,
    )
    .on_if(
        "Transition",
        |m, t, ctx| m.incoming(t.id()).all(|arc| tokens(ctx, m, arc.source_id) >= weight(m, arc.id)),
        |m, t, ctx, stack| {
            for arc in m.incoming(t.id()) {
                let left = tokens(ctx, m, arc.source_id) - weight(m, arc.id);
                ctx.set(arc.source_id, Value::Int(left));
            }
            let mut next = Vec::new();
            for arc in m.outgoing(t.id()) {
                let now = tokens(ctx, m, arc.target_id) + weight(m, arc.id);
                ctx.set(arc.target_id, Value::Int(now));
                next.extend(m.outgoing(arc.target_id).map(|a| a.target_id));
            }
            ctx.append("fired", Value::Text(label(t)));
            stack.push_in_order(&next);
            Ok(())
        },
    );
    Ok(def)
}
