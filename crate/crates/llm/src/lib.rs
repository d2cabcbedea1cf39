//! Zero- and few-shot classification of music conversation queries with a
//! chat-completion model.
//!
//! Prompts list the taxonomy and end with an opened label list; completions are
//! parsed back into taxonomy labels, with anything outside the taxonomy kept as a
//! wrong inference. [`evaluate_endpoint`] scores a test set against an endpoint and
//! writes an audit transcript that [`replay_transcript`] can score again offline.

mod endpoint;
mod evaluate;
mod parse;
mod prompt;

pub use endpoint::{ChatClient, ClientError, EndpointConfig, HttpChatClient, RequestError};
pub use evaluate::{
    evaluate_endpoint, read_transcript, replay_transcript, EvalQuery, LlmError, LlmEvaluation,
    LlmTask, RecordStatus, RequestPolicy, TranscriptRecord,
};
pub use parse::{format_label_list, parse_label_list, ParseStatus, ParsedLabels};
pub use prompt::{build_prompt, PromptMode, PromptTemplate};
