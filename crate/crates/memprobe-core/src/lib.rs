//! Core machinery for serial-recall memory probing of autoregressive
//! language models.
//!
//! The crate is intentionally free of I/O: everything here is a pure
//! function of its inputs, so schedules, prompts and judgments are
//! reproducible bit-for-bit across platforms. The companion `memprobe`
//! crate layers file formats, the HTTP backend and the CLI on top.
//!
//! Pipeline overview:
//!
//! 1. [`lexicon`] — the fixed word lists, pronoun table, elaboration
//!    templates and distractor material that prompts are built from.
//! 2. [`design`] — turns an experiment description into a deterministic
//!    schedule of trials (seeded PCG32 + Fisher-Yates).
//! 3. [`prompt`] — renders each trial into the exact preceding text and
//!    query handed to a model.
//! 4. [`backend`] — "next-token distribution given a prompt" as a trait,
//!    plus a synthetic memory-kernel model used to validate the analysis
//!    chain end to end.
//! 5. [`scoring`] — the correctness rule: the answer is correct iff the
//!    highest-probability noun token equals the target.
//! 6. [`stats`] — per-position accuracy series, Wilson intervals, decay
//!    curves and primacy/recency effect detection.

#![no_std]

extern crate alloc;

pub mod backend;
pub mod design;
pub mod lexicon;
pub mod prompt;
pub mod scoring;
pub mod stats;

pub use backend::{Backend, BackendError, KernelBackend, KernelConfig, TokenDistribution};
pub use design::{ExperimentSpec, Fact, RelationKind, Schedule, TrialSpec};
pub use lexicon::{DistractorKind, Lexicon};
pub use prompt::{InterveningKind, InterveningSpec, PromptText};
pub use scoring::{Judgment, NounFilter};
