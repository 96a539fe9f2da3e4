//! Audit pipeline for probability-emitting judgment models.
//!
//! The crate measures how well a three-class judgment model is calibrated to
//! population-level disagreement and whether its answers sit closer to some
//! opinion subgroups than to the pooled population. The pipeline is:
//!
//! 1. [`corpus`] — load and validate a statement corpus with per-group
//!    opinion aggregates (a fixture corpus is bundled).
//! 2. [`harvest`] — optionally acquire fresh opinion aggregates with a
//!    leaky-bucket rate limiter, an on-disk page cache and declarative
//!    HTML extraction rules.
//! 3. [`judge`] — query a judgment model (live HTTP endpoint, record/replay
//!    cassette, or a synthetic judge from [`simulate`]) for every statement
//!    variation.
//! 4. [`metrics`] — contention, normalized entropy and alignment scores,
//!    assembled into long-format observation tables.
//! 5. [`inference`] — single-random-intercept linear mixed models fitted by
//!    profiled REML, a rank-transform robust variant, Wald tests, marginal
//!    and conditional R², residual diagnostics.
//! 6. [`report`] — publication-style coefficient tables, CSV exports and
//!    SVG plots.
//!
//! [`simulate`] generates synthetic populations and planted-bias judges with
//! known ground truth so the whole pipeline can be verified end to end.

pub mod corpus;
pub mod harvest;
pub mod inference;
pub mod judge;
pub mod metrics;
pub mod report;
pub mod simulate;
pub mod table;
