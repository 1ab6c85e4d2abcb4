//! Budgeted tiny-object patch selection from dense response maps, and the
//! tools to evaluate it: coverage recall under patch budgets, deadline-aware
//! QoS metrics, and a transport-aware latency pipeline simulator.
//!
//! The typical flow is
//!
//! 1. obtain a [`ResponseMap`] per frame (from a file, the [`oracle_scorer`]
//!    or the contrast [`baseline_scorer`]),
//! 2. decode it with [`select_patches`] at one or more budgets,
//! 3. score the selections with [`coverage`] and, given per-frame latencies
//!    from [`pipeline_sim`] or a measured trace, with [`qos`].
//!
//! ```
//! use tinypatch::{select_patches, DecodeParams, ResponseMap};
//!
//! let mut scores = vec![0.0; 80 * 80];
//! scores[10 * 80 + 10] = 0.9;
//! let map = ResponseMap::new(80, 80, scores).unwrap();
//! let sel = select_patches(&map, 9, &DecodeParams::default(), 640, 640).unwrap();
//! assert_eq!(sel.len(), 1);
//! assert_eq!((sel.patches[0].x, sel.patches[0].y), (84.0, 84.0));
//! ```
//!
//! [`oracle_scorer`]: ingest::oracle_scorer
//! [`baseline_scorer`]: ingest::baseline_scorer

// Range checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coverage;
pub mod ingest;
pub mod pipeline_sim;
pub mod qos;
pub mod response_map;
pub mod supervision;

pub use coverage::{BudgetArea, CoverageConfig, RecallTable};
pub use ingest::{Dataset, Frame, GrayImage};
pub use pipeline_sim::{LatencyTrace, SimConfig, Stage, TransportMode};
pub use qos::{QosConfig, QosReport};
pub use response_map::{select_patches, DecodeParams, PatchSelection, Peak, Rect, ResponseMap};
pub use supervision::{LossConfig, SupervisionMap, Target, TargetSet};

// The guide's code listings compile and run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/decoding.md")]
    struct Decoding;
    #[doc = include_str!("../../../book/src/supervision.md")]
    struct Supervision;
    #[doc = include_str!("../../../book/src/coverage.md")]
    struct Coverage;
    #[doc = include_str!("../../../book/src/qos.md")]
    struct Qos;
    #[doc = include_str!("../../../book/src/simulation.md")]
    struct Simulation;
    #[doc = include_str!("../../../book/src/formats.md")]
    struct Formats;
}
