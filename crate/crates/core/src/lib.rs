//! Director-guided, multi-model source-to-source code translation.
//!
//! A Director keeps a Bayesian belief over how a translation is going, picks expert
//! models from a proficiency registry, and drives each task through translate, verify,
//! compile and feedback phases until the result converges or the attempt budget runs
//! out. Every decision is written to a replayable JSONL ledger.

pub mod agents;
pub mod bench;
pub mod codeblock;
pub mod compiler;
pub mod config;
pub mod director;
pub mod gateway;
pub mod lang;
pub mod lexer;
pub mod metrics;
pub mod pipeline;
pub mod prompt;
pub mod registry;
pub mod sync;
