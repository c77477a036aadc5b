use super::{Metamodel, MetamodelSpec};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetaError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    SyntaxError { line: usize, column: usize, message: String },
    #[error("unresolved reference `{0}`")]
    UnresolvedReference(String),
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("inheritance cycle through `{0}`")]
    InheritanceCycle(String),
    #[error("`{0}` inherits from a type of a different kind")]
    KindMismatch(String),
    #[error("unknown type `{0}`")]
    UnknownType(String),
}

/// Parses a metamodel document and binds every name reference.
pub fn parse_metamodel(document: &str) -> Result<Metamodel, MetaError> {
    let spec: MetamodelSpec = serde_json::from_str(document).map_err(|e| MetaError::SyntaxError {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    Metamodel::new(spec)
}

/// Pretty-printed document form; `parse_metamodel` reads it back unchanged.
pub fn serialize_metamodel(spec: &MetamodelSpec) -> String {
    let mut s = serde_json::to_string_pretty(spec).expect("metamodel serializes");
    s.push('\n');
    s
}
