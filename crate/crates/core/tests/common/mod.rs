#![allow(dead_code)]

use graphdsl_core::engine::{apply_command, CommandOutcome};
use graphdsl_core::ids::ElementId;
use graphdsl_core::meta::{parse_metamodel, Literal, Metamodel};
use graphdsl_core::model::{AttributeMap, GraphModelInstance};
use graphdsl_core::protocol::Command;

pub const ROOT: ElementId = ElementId(0x100);

pub fn repo_file(rel: &str) -> String {
    let path = format!("{}/../../{rel}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

pub fn flowchart() -> Metamodel {
    parse_metamodel(&repo_file("metamodels/flowchart.json")).unwrap()
}

pub fn process() -> Metamodel {
    parse_metamodel(&repo_file("fixtures/process.json")).unwrap()
}

pub fn petrinet() -> Metamodel {
    parse_metamodel(&repo_file("metamodels/petrinet.json")).unwrap()
}

pub fn empty(mm: &Metamodel) -> GraphModelInstance {
    GraphModelInstance::new(ROOT, mm.graph_model_name())
}

pub fn attrs(pairs: &[(&str, Literal)]) -> AttributeMap {
    pairs.iter().map(|(k, v)| (k.to_string(), vec![v.clone()])).collect()
}

pub fn s(v: &str) -> Literal {
    Literal::String(v.into())
}

pub fn create_node(id: u128, t: &str, container: ElementId, x: i64, y: i64) -> Command {
    Command::CreateNode {
        id: ElementId(id),
        type_name: t.into(),
        container_id: container,
        x,
        y,
        width: 40,
        height: 30,
        initial_attributes: AttributeMap::new(),
    }
}

pub fn create_edge(id: u128, t: &str, src: u128, dst: u128) -> Command {
    Command::CreateEdge {
        id: ElementId(id),
        type_name: t.into(),
        source_id: ElementId(src),
        target_id: ElementId(dst),
        initial_attributes: AttributeMap::new(),
        bend_points: vec![],
    }
}

/// Applies with stale checking and panics unless the command goes through.
pub fn apply_ok(model: &mut GraphModelInstance, mm: &Metamodel, cmd: &Command) -> Command {
    match apply_command(model, mm, cmd, true) {
        Ok(CommandOutcome::Applied { inverse }) => inverse,
        other => panic!("{cmd} not applied: {other:?}"),
    }
}
