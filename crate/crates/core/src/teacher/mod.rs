//! Teacher-side pieces that need no network: prompt construction, reply
//! parsing with span location, and the offline keyword teacher.

mod mock;
mod parse;
mod prompt;

pub use mock::{mock_teacher_annotate, MockTeacher};
pub use parse::{canonical_reply, parse_teacher_output, strip_code_fence, TeacherParseError};
pub use prompt::{build_prompt, ChatMessage, MessageSequence, Role, DEFAULT_MAX_EXAMPLES};
