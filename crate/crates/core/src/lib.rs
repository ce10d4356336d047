//! Sentiment classification pipeline over frozen text embeddings.
//!
//! The crate covers preprocessing ([`tokenizer`]), corpus preparation
//! ([`corpus`], [`schemes`]), the embedding inputs ([`embedding`], [`remote`]),
//! a BiLSTM + dense + softmax head trained with Adam ([`head`]), class
//! balancing ([`balance`]), overall-polarity heuristics ([`polarity`]) and the
//! experiment harness ([`eval`]).

pub mod balance;
pub mod corpus;
pub mod embedding;
pub mod eval;
pub mod head;
pub mod kv;
pub mod polarity;
pub mod remote;
pub mod schemes;
pub mod tokenizer;
