//! The published JSON schemas, compiled once.

use std::sync::OnceLock;

use serde_json::Value;

pub const LEVEL1_SCHEMA: &str = include_str!("../../../../schema/level1.schema.json");
pub const LEVEL2_SCHEMA: &str = include_str!("../../../../schema/level2.schema.json");
pub const CARD_CONTENT_SCHEMA: &str = include_str!("../../../../schema/card_content.schema.json");
pub const RATIONALE_SCHEMA: &str = include_str!("../../../../schema/rationale.schema.json");

/// A JSON schema document with its compiled validator.
pub struct Schema {
    pub name: &'static str,
    pub document: Value,
    validator: jsonschema::Validator,
}

impl std::fmt::Debug for Schema {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Schema").field("name", &self.name).finish()
    }
}

impl Schema {
    pub fn compile(name: &'static str, source: &str) -> Result<Self, String> {
        let document: Value =
            serde_json::from_str(source).map_err(|e| format!("{}: {}", name, e))?;
        let validator =
            jsonschema::validator_for(&document).map_err(|e| format!("{}: {}", name, e))?;
        Ok(Schema {
            name,
            document,
            validator,
        })
    }

    /// Validation errors as `path: message` lines; empty when valid.
    pub fn errors(&self, instance: &Value) -> Vec<String> {
        self.validator
            .iter_errors(instance)
            .map(|e| {
                let path = e.instance_path().to_string();
                format!("{}: {}", if path.is_empty() { "/" } else { &path }, e)
            })
            .collect()
    }

    pub fn is_valid(&self, instance: &Value) -> bool {
        self.validator.is_valid(instance)
    }
}

fn cached(cell: &'static OnceLock<Schema>, name: &'static str, source: &str) -> &'static Schema {
    cell.get_or_init(|| Schema::compile(name, source).expect("bundled schema compiles"))
}

pub fn level1() -> &'static Schema {
    static S: OnceLock<Schema> = OnceLock::new();
    cached(&S, "level1", LEVEL1_SCHEMA)
}

pub fn level2() -> &'static Schema {
    static S: OnceLock<Schema> = OnceLock::new();
    cached(&S, "level2", LEVEL2_SCHEMA)
}

pub fn card_content() -> &'static Schema {
    static S: OnceLock<Schema> = OnceLock::new();
    cached(&S, "card_content", CARD_CONTENT_SCHEMA)
}

pub fn rationale() -> &'static Schema {
    static S: OnceLock<Schema> = OnceLock::new();
    cached(&S, "rationale", RATIONALE_SCHEMA)
}
