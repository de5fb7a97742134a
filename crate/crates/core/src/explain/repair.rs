//! Schema validation with a bounded re-prompting loop.

use serde_json::Value;

use super::backend::{BackendError, GenerationBackend};
use super::context::StructuredPrompt;
use super::schema::Schema;
use super::GenerationError;

pub const DEFAULT_MAX_REPAIRS: usize = 2;

/// Extra checks run after schema validation (for example, that anchors
/// resolve). Returns human-readable problems; empty means acceptable.
pub type SemanticCheck<'a> = &'a dyn Fn(&Value) -> Vec<String>;

fn problems(output: &Value, schema: &Schema, check: Option<SemanticCheck<'_>>) -> Vec<String> {
    let errors = schema.errors(output);
    if !errors.is_empty() {
        return errors;
    }
    check.map(|c| c(output)).unwrap_or_default()
}

fn run(
    first: Result<Value, BackendError>,
    schema: &Schema,
    backend: &dyn GenerationBackend,
    prompt: &StructuredPrompt,
    max_repairs: usize,
    check: Option<SemanticCheck<'_>>,
) -> Result<Value, GenerationError> {
    let mut transcripts = Vec::new();
    let mut attempt = first;
    let mut repairs = 0;
    loop {
        let errors = match &attempt {
            Ok(output) => problems(output, schema, check),
            Err(e) => vec![format!("backend error: {}", e)],
        };
        if errors.is_empty() {
            return Ok(attempt.expect("no errors implies output"));
        }
        transcripts.push(format!("attempt {}: {}", repairs + 1, errors.join("; ")));
        if repairs == max_repairs {
            return Err(GenerationError {
                message: format!(
                    "{} output from the {} backend failed validation after {} repair attempts",
                    schema.name,
                    backend.name(),
                    max_repairs
                ),
                transcripts,
                partial: attempt.ok(),
            });
        }
        repairs += 1;
        let mut retry = prompt.clone();
        retry.repair_feedback = errors;
        attempt = backend.generate(&retry, schema);
    }
}

/// Returns `raw` if it validates; otherwise re-prompts the backend with the
/// validation errors appended, at most `max_repairs` times.
pub fn validate_and_repair(
    raw: Value,
    schema: &Schema,
    backend: &dyn GenerationBackend,
    prompt: &StructuredPrompt,
    max_repairs: usize,
    check: Option<SemanticCheck<'_>>,
) -> Result<Value, GenerationError> {
    run(Ok(raw), schema, backend, prompt, max_repairs, check)
}

/// One generate call followed by [`validate_and_repair`]. On exhaustion the
/// backend has been called exactly `max_repairs + 1` times.
pub fn generate_validated(
    backend: &dyn GenerationBackend,
    prompt: &StructuredPrompt,
    schema: &Schema,
    max_repairs: usize,
    check: Option<SemanticCheck<'_>>,
) -> Result<Value, GenerationError> {
    run(
        backend.generate(prompt, schema),
        schema,
        backend,
        prompt,
        max_repairs,
        check,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explain::backend::ScriptedBackend;
    use crate::explain::schema;
    use crate::explain::testing::card_prompt;
    use serde_json::json;

    fn good() -> Value {
        json!({"title": "t", "significance": "low", "summary": "s."})
    }

    fn bad() -> Value {
        json!({"title": "t"})
    }

    #[test]
    fn valid_output_needs_no_repair() {
        let b = ScriptedBackend::new(vec![]);
        let out = validate_and_repair(good(), schema::card_content(), &b, &card_prompt(), 2, None)
            .unwrap();
        assert_eq!(out, good());
        assert_eq!(b.calls(), 0);
    }

    #[test]
    fn one_repair_then_valid() {
        let b = ScriptedBackend::new(vec![good()]);
        let out = validate_and_repair(bad(), schema::card_content(), &b, &card_prompt(), 2, None)
            .unwrap();
        assert_eq!(out, good());
        assert_eq!(b.calls(), 1);
        assert!(!b.feedback()[0].is_empty());
    }

    #[test]
    fn exhaustion_after_max_repairs_plus_one_calls() {
        for max in 0..4 {
            let b = ScriptedBackend::new(vec![bad(); max + 1]);
            let err = generate_validated(&b, &card_prompt(), schema::card_content(), max, None)
                .unwrap_err();
            assert_eq!(b.calls(), max + 1);
            assert_eq!(err.transcripts.len(), max + 1);
        }
    }

    #[test]
    fn semantic_check_triggers_repair() {
        let b = ScriptedBackend::new(vec![good(), good()]);
        let reject_first = std::cell::Cell::new(true);
        let check = |_: &Value| {
            if reject_first.replace(false) {
                vec!["anchor does not resolve".to_string()]
            } else {
                vec![]
            }
        };
        generate_validated(&b, &card_prompt(), schema::card_content(), 2, Some(&check)).unwrap();
        assert_eq!(b.calls(), 2);
        assert_eq!(b.feedback()[1], vec!["anchor does not resolve".to_string()]);
    }
}
