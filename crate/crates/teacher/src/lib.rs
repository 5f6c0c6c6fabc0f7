//! Teacher side of the pipeline: a chat-completion client, offline and
//! scripted stand-ins, and the retrying corpus annotation driver.

mod annotate;
mod endpoint;

pub use annotate::{
    annotate_corpus, read_failures, write_failures, AnnotateError, AnnotateOptions, AnnotationOutcome, FailureRecord,
};
pub use endpoint::{
    ChatEndpoint, EndpointConfig, HttpEndpoint, MockEndpoint, ScriptedEndpoint, TransportError, API_KEY_ENV,
};
