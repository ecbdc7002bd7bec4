//! Natural-language narration of relational query execution plans.
//!
//! The crate is organised bottom-up:
//!
//! * [`poem`] stores physical-operator description objects.
//! * [`pool`] lexes, parses and executes the POOL statement language against a store.
//! * [`plan`] ingests PostgreSQL `EXPLAIN (FORMAT JSON)` documents and synthesises
//!   random operator trees.
//! * [`rules`] annotates operator trees, clusters auxiliary/critical pairs and emits
//!   step-by-step narratives.
//! * [`corpus`] turns narratives into tagged training samples and diversifies them.
//! * [`seq2seq`] is the LSTM encoder / attention decoder translator.
//! * [`metrics`] holds BLEU, Self-BLEU and token accuracy.
//! * [`pipeline`] wires everything together for the command-line front end.

pub mod corpus;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod plan;
pub mod poem;
pub mod pool;
pub mod rules;
pub mod seq2seq;
