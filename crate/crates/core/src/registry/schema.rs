use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde_json::Value;

use crate::identifiers::{Pid, PidScheme};
use crate::manifest::{FieldKind, MetadataSchema, Violation, ViolationCode};

/// A value counts as unfilled when it carries no information yet.
pub fn is_unfilled(value: Option<&Value>) -> bool {
    match value {
        None | Some(Value::Null) => true,
        Some(Value::String(s)) => s.trim().is_empty(),
        Some(Value::Array(a)) => a.is_empty(),
        Some(_) => false,
    }
}

fn kind_ok(kind: FieldKind, value: &Value) -> bool {
    match kind {
        FieldKind::Text | FieldKind::ControlledTerm => value.is_string(),
        FieldKind::Integer => value.is_i64() || value.is_u64(),
        FieldKind::Date => value
            .as_str()
            .is_some_and(|s| NaiveDate::parse_from_str(s, "%Y-%m-%d").is_ok()),
        FieldKind::Pid => value.as_str().is_some_and(|s| Pid::parse(s).is_ok()),
        FieldKind::DoiList => value.as_array().is_some_and(|items| {
            items.iter().all(|v| {
                v.as_str()
                    .and_then(|s| Pid::parse(s).ok())
                    .is_some_and(|p| p.scheme() == PidScheme::Doi)
            })
        }),
    }
}

/// Checks `metadata` against a minimum schema. Fields outside the schema are
/// allowed. A `doi_list` may be empty; a required text field may not.
pub fn validate_against_schema(
    metadata: &BTreeMap<String, Value>,
    schema: &MetadataSchema,
) -> Vec<Violation> {
    let mut out = Vec::new();
    for field in &schema.required_fields {
        let name = field.name.as_str();
        let value = metadata.get(name);
        let missing = match field.kind {
            FieldKind::DoiList => value.is_none_or(Value::is_null),
            _ => is_unfilled(value),
        };
        if missing {
            out.push(Violation::new(
                ViolationCode::MissingField,
                Some(name),
                "required field is missing",
            ));
            continue;
        }
        let value = value.expect("checked above");
        if !kind_ok(field.kind, value) {
            out.push(Violation::new(
                ViolationCode::WrongKind,
                Some(name),
                format!("expected {:?}, got {value}", field.kind),
            ));
            continue;
        }
        if field.kind == FieldKind::ControlledTerm {
            let term = value.as_str().unwrap_or_default();
            let allowed = schema
                .controlled_vocabularies
                .get(name)
                .is_some_and(|vocab| vocab.contains(term));
            if !allowed {
                out.push(Violation::new(
                    ViolationCode::BadTerm,
                    Some(name),
                    format!("`{term}` is not in the controlled vocabulary"),
                ));
            }
        }
    }
    out.sort();
    out
}
