//! Generation backends: the deterministic template backend and an
//! OpenAI-compatible remote backend.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::context::{PromptTask, StructuredPrompt};
use super::schema::Schema;
use super::shape::alternative_for;
use super::{ReasoningParagraph, Significance};
use crate::error::{Error, Result};
use crate::index::EvidenceAnchor;
use crate::ingest::ModificationKind;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct BackendError(pub String);

/// Produces a structured document for a prompt. Implementations must be
/// safe to call concurrently; outputs of concurrent calls never mix.
pub trait GenerationBackend: Send + Sync {
    fn name(&self) -> &str;

    fn generate(
        &self,
        prompt: &StructuredPrompt,
        schema: &Schema,
    ) -> std::result::Result<Value, BackendError>;
}

/// Phrases the prompt's structural facts with fixed templates. Output is a
/// pure function of the prompt.
#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateBackend;

/// Changed-line count at or above which a card is high significance.
pub const HIGH_SIGNIFICANCE_LINES: usize = 30;
/// Changed-line count at or below which a card is low significance.
pub const LOW_SIGNIFICANCE_LINES: usize = 3;

pub fn template_significance(kind: ModificationKind, changed_lines: usize) -> Significance {
    if kind == ModificationKind::Created || changed_lines >= HIGH_SIGNIFICANCE_LINES {
        Significance::High
    } else if changed_lines <= LOW_SIGNIFICANCE_LINES {
        Significance::Low
    } else {
        Significance::Medium
    }
}

pub fn template_title(kind: ModificationKind, path: &str) -> String {
    let verb = match kind {
        ModificationKind::Created => "Create",
        ModificationKind::Modified => "Update",
        ModificationKind::Deleted => "Delete",
    };
    format!("{} {}", verb, path)
}

fn plural(n: usize, one: &str, many: &str) -> String {
    format!("{} {}", n, if n == 1 { one } else { many })
}

fn name_list(names: &[String], limit: usize) -> String {
    let shown: Vec<&str> = names.iter().take(limit).map(String::as_str).collect();
    let mut out = shown.join(", ");
    if names.len() > limit {
        out.push_str(&format!(" and {} more", names.len() - limit));
    }
    out
}

impl TemplateBackend {
    fn card(&self, p: &StructuredPrompt) -> Value {
        let f = &p.facts;
        let changed = f.added_lines + f.removed_lines;
        let first = match p.kind {
            ModificationKind::Created => format!(
                "Creates {} with {}.",
                p.path,
                plural(f.added_lines, "line", "lines")
            ),
            ModificationKind::Modified => format!(
                "Updates {} with {} added and {} removed across {}.",
                p.path,
                plural(f.added_lines, "line", "lines"),
                f.removed_lines,
                plural(f.hunks.len(), "region", "regions")
            ),
            ModificationKind::Deleted => {
                format!(
                    "Deletes {}, removing {}.",
                    p.path,
                    plural(f.removed_lines, "line", "lines")
                )
            }
        };
        let second = if f.touched_symbols.is_empty() {
            "No named definitions are involved.".to_string()
        } else if p.kind == ModificationKind::Deleted {
            format!("Removes {}.", name_list(&f.touched_symbols, 6))
        } else {
            format!("Touches {}.", name_list(&f.touched_symbols, 6))
        };
        json!({
            "title": template_title(p.kind, &p.path),
            "significance": template_significance(p.kind, changed),
            "summary": format!("{} {}", first, second),
        })
    }

    fn rationale(&self, p: &StructuredPrompt) -> Value {
        let f = &p.facts;
        let mut reasoning: Vec<ReasoningParagraph> = Vec::new();
        if p.kind == ModificationKind::Deleted {
            reasoning.push(ReasoningParagraph {
                text: format!(
                    "The session removed {} entirely ({}), so it no longer exists in the snapshot.",
                    p.path,
                    plural(f.removed_lines, "line", "lines")
                ),
                anchor: None,
            });
        }
        for (i, h) in f.hunks.iter().enumerate() {
            if p.kind == ModificationKind::Deleted {
                break;
            }
            let place = match h.post_range {
                Some(r) => format!("Lines {}-{}", r.start, r.end),
                None => format!("Region {}", i + 1),
            };
            let mut text = format!(
                "{} {} and {}.",
                place,
                if h.added > 0 {
                    format!("add {}", plural(h.added, "line", "lines"))
                } else {
                    "add nothing".to_string()
                },
                if h.removed > 0 {
                    format!("remove {}", plural(h.removed, "line", "lines"))
                } else {
                    "remove nothing".to_string()
                }
            );
            if !h.introduced.is_empty() {
                text.push_str(&format!(" They define {}.", name_list(&h.introduced, 6)));
            }
            let context: Vec<String> = h
                .enclosing
                .iter()
                .filter(|n| !h.introduced.contains(n))
                .cloned()
                .collect();
            if !context.is_empty() {
                text.push_str(&format!(
                    " The edit sits inside {}.",
                    name_list(&context, 6)
                ));
            }
            let anchor = match (&f.artifact_id, h.post_range) {
                (Some(id), Some(span)) if span.end <= f.line_count => Some(EvidenceAnchor {
                    artifact_id: id.clone(),
                    span,
                    label: format!("hunk {}", i + 1),
                }),
                _ => None,
            };
            reasoning.push(ReasoningParagraph { text, anchor });
        }
        if let Some(top) = p.influences.first() {
            reasoning.push(ReasoningParagraph {
                text: format!(
                    "The strongest existing influence is {} (score {:.2}). Evidence: {}.",
                    top.path, top.score, top.anchor.label
                ),
                anchor: Some(top.anchor.clone()),
            });
        }
        if reasoning.is_empty() {
            reasoning.push(ReasoningParagraph {
                text: format!("The session left no net change in {}.", p.path),
                anchor: None,
            });
        }
        json!({
            "reasoning": reasoning,
            "alternatives": [alternative_for(&f.change_shape, &p.path)],
        })
    }
}

impl GenerationBackend for TemplateBackend {
    fn name(&self) -> &str {
        "template"
    }

    fn generate(
        &self,
        prompt: &StructuredPrompt,
        _schema: &Schema,
    ) -> std::result::Result<Value, BackendError> {
        Ok(match prompt.task {
            PromptTask::CardContent => self.card(prompt),
            PromptTask::Rationale => self.rationale(prompt),
        })
    }
}

/// Chat-completions backend for any OpenAI-compatible endpoint.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl RemoteBackend {
    fn request_body(&self, prompt: &StructuredPrompt, schema: &Schema) -> Value {
        let system = format!(
            "{}\nReply with one JSON object that validates against this JSON Schema:\n{}",
            prompt.instructions, schema.document
        );
        let user = serde_json::to_string_pretty(prompt).unwrap_or_default();
        json!({
            "model": self.model,
            "temperature": 0,
            "response_format": {"type": "json_object"},
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        })
    }
}

impl GenerationBackend for RemoteBackend {
    fn name(&self) -> &str {
        "remote"
    }

    fn generate(
        &self,
        prompt: &StructuredPrompt,
        schema: &Schema,
    ) -> std::result::Result<Value, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| BackendError(format!("http client: {}", e)))?;
        let url = format!("{}/chat/completions", self.endpoint.trim_end_matches('/'));
        let mut req = client.post(&url).json(&self.request_body(prompt, schema));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| BackendError(format!("{}: {}", url, e)))?;
        let status = resp.status();
        let body: Value = resp
            .json()
            .map_err(|e| BackendError(format!("{}: unreadable response ({})", url, e)))?;
        if !status.is_success() {
            return Err(BackendError(format!("{}: HTTP {}: {}", url, status, body)));
        }
        let content = body["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| BackendError("response has no message content".into()))?;
        serde_json::from_str(content)
            .map_err(|e| BackendError(format!("content is not JSON: {}", e)))
    }
}

/// Replays a fixed list of outputs in order and records every call. Useful
/// for exercising the repair loop against a misbehaving model.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    outputs: Mutex<VecDeque<Value>>,
    feedback: Mutex<Vec<Vec<String>>>,
    calls: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new(outputs: Vec<Value>) -> Self {
        ScriptedBackend {
            outputs: Mutex::new(outputs.into()),
            feedback: Mutex::new(Vec::new()),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// The `repair_feedback` of each prompt received, in call order.
    pub fn feedback(&self) -> Vec<Vec<String>> {
        self.feedback.lock().expect("feedback lock").clone()
    }
}

impl GenerationBackend for ScriptedBackend {
    fn name(&self) -> &str {
        "scripted"
    }

    fn generate(
        &self,
        prompt: &StructuredPrompt,
        _schema: &Schema,
    ) -> std::result::Result<Value, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.feedback
            .lock()
            .expect("feedback lock")
            .push(prompt.repair_feedback.clone());
        self.outputs
            .lock()
            .expect("outputs lock")
            .pop_front()
            .ok_or_else(|| BackendError("script exhausted".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Template,
    Remote,
}

/// Backend configuration file contents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub backend: BackendKind,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub budget: usize,
    pub max_repairs: usize,
    /// Environment variable holding the remote API key.
    pub api_key_env: String,
    pub timeout_secs: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            backend: BackendKind::Template,
            endpoint: None,
            model: None,
            budget: super::context::DEFAULT_BUDGET,
            max_repairs: super::repair::DEFAULT_MAX_REPAIRS,
            api_key_env: "LENS_API_KEY".into(),
            timeout_secs: 120,
        }
    }
}

impl BackendConfig {
    pub fn build(&self) -> Result<Arc<dyn GenerationBackend>> {
        match self.backend {
            BackendKind::Template => Ok(Arc::new(TemplateBackend)),
            BackendKind::Remote => {
                let endpoint = self
                    .endpoint
                    .clone()
                    .ok_or_else(|| Error::Validation("remote backend needs an endpoint".into()))?;
                let model = self
                    .model
                    .clone()
                    .ok_or_else(|| Error::Validation("remote backend needs a model".into()))?;
                Ok(Arc::new(RemoteBackend {
                    endpoint,
                    model,
                    api_key: std::env::var(&self.api_key_env).ok(),
                    timeout: Duration::from_secs(self.timeout_secs),
                }))
            }
        }
    }
}
