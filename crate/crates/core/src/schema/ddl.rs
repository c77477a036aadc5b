use std::collections::BTreeSet;
use std::fmt::Write;

use super::{RelationalSchema, Table};

fn quote(ident: &str) -> String {
    format!("\"{}\"", ident.replace('"', "\"\""))
}

/// `CREATE TABLE` statements ordered so that referenced tables come first
/// (ties broken by name). Self-references never block a table; genuine
/// cycles are broken by deferring the offending keys to `ALTER TABLE`.
pub fn emit_ddl(schema: &RelationalSchema) -> String {
    let mut remaining: Vec<&Table> = schema.tables.iter().collect();
    remaining.sort_by(|a, b| a.name.cmp(&b.name));
    let mut emitted: BTreeSet<&str> = BTreeSet::new();
    let mut statements = Vec::new();
    let mut deferred = Vec::new();

    while !remaining.is_empty() {
        let ready = remaining.iter().position(|t| {
            t.foreign_keys
                .iter()
                .all(|fk| fk.target_table == t.name || emitted.contains(fk.target_table.as_str()))
        });
        let (idx, defer_unresolved) = match ready {
            Some(i) => (i, false),
            None => (0, true),
        };
        let table = remaining.remove(idx);
        let mut keep = Vec::new();
        for fk in &table.foreign_keys {
            let resolvable = fk.target_table == table.name || emitted.contains(fk.target_table.as_str());
            if defer_unresolved && !resolvable {
                deferred.push(format!(
                    "ALTER TABLE {} ADD FOREIGN KEY ({}) REFERENCES {} ({});\n",
                    quote(&table.name),
                    quote(&fk.column),
                    quote(&fk.target_table),
                    quote("id"),
                ));
            } else {
                keep.push(fk);
            }
        }
        statements.push(create_table(table, &keep));
        emitted.insert(&table.name);
    }
    statements.extend(deferred);
    statements.join("\n")
}

fn create_table(table: &Table, foreign_keys: &[&super::ForeignKey]) -> String {
    let mut lines: Vec<String> = table
        .columns
        .iter()
        .map(|c| {
            format!(
                "    {} {}{}",
                quote(&c.name),
                c.column_type.sql(),
                if c.nullable { "" } else { " NOT NULL" }
            )
        })
        .collect();
    if !table.primary_key.is_empty() {
        let cols: Vec<String> = table.primary_key.iter().map(|c| quote(c)).collect();
        lines.push(format!("    PRIMARY KEY ({})", cols.join(", ")));
    }
    for fk in foreign_keys {
        lines.push(format!(
            "    FOREIGN KEY ({}) REFERENCES {} ({})",
            quote(&fk.column),
            quote(&fk.target_table),
            quote("id")
        ));
    }
    let mut s = String::new();
    let _ = write!(s, "CREATE TABLE {} (\n{}\n);\n", quote(&table.name), lines.join(",\n"));
    s
}
