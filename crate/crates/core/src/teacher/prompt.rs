use serde::{Deserialize, Serialize};

use super::parse::canonical_reply;
use crate::scenario::ClinicalScenario;

/// In-context examples used per prompt unless configured otherwise.
pub const DEFAULT_MAX_EXAMPLES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

/// A chat prompt: one system message, zero or more user/assistant example
/// pairs, and the final user message carrying the text to annotate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MessageSequence(Vec<ChatMessage>);

impl MessageSequence {
    /// Wrap `messages`, returning `None` unless the role layout is
    /// system, (user, assistant)*, user.
    pub fn new(messages: Vec<ChatMessage>) -> Option<Self> {
        let n = messages.len();
        let ok = n >= 2
            && n.is_multiple_of(2)
            && messages[0].role == Role::System
            && messages[1..]
                .iter()
                .enumerate()
                .all(|(i, m)| m.role == if i % 2 == 0 { Role::User } else { Role::Assistant });
        ok.then_some(Self(messages))
    }

    pub fn messages(&self) -> &[ChatMessage] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The text being annotated.
    pub fn document(&self) -> &str {
        &self.0.last().expect("sequence is never empty").content
    }
}

fn system_content(s: &ClinicalScenario) -> String {
    let mut out = String::with_capacity(s.system_message.len() + 64 * s.labels.len());
    out.push_str(s.system_message.trim_end());
    out.push_str("\n\nAvailable labels:\n");
    for l in &s.labels {
        out.push_str("- ");
        out.push_str(l);
        out.push('\n');
    }
    out.push('\n');
    out.push_str(s.output_instruction.trim_end());
    out
}

/// Build the teacher prompt for one document.
///
/// The first `min(max_examples, in_context.len())` examples become
/// user/assistant turns whose assistant content is the canonical JSON reply
/// for the example, so the demonstrations also show the output format.
pub fn build_prompt(scenario: &ClinicalScenario, document_text: &str, max_examples: usize) -> MessageSequence {
    let k = max_examples.min(scenario.in_context.len());
    let mut msgs = Vec::with_capacity(2 * k + 2);
    msgs.push(ChatMessage::new(Role::System, system_content(scenario)));
    for ex in &scenario.in_context[..k] {
        msgs.push(ChatMessage::new(Role::User, ex.text.clone()));
        msgs.push(ChatMessage::new(
            Role::Assistant,
            canonical_reply(&ex.text, &ex.segments),
        ));
    }
    msgs.push(ChatMessage::new(Role::User, document_text));
    MessageSequence::new(msgs).expect("layout is valid by construction")
}
