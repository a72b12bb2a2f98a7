//! Streaming CNN inference that presents input one row (or one element) at a
//! time, propagates changes depth-first as events, and keeps only the part of
//! the network state that future input can still influence.
//!
//! - [`model`]: network descriptions, validation, fixtures and persistence.
//! - [`dense_ref`]: conventional layer-by-layer forward pass.
//! - [`engine`]: the event-driven streaming engine.
//! - [`metrics`]: traces, convergence curves and sparsity statistics.

pub mod dense_ref;
pub mod engine;
pub mod metrics;
pub mod model;
pub mod tolerance;

pub use dense_ref::{dense_forward, layer_forward, ForwardError, Tensor3};
pub use engine::{Engine, EngineConfig, EngineError, EngineSnapshot, Event, MemoryReport, Mode, StreamAxis};
pub use metrics::{convergence_curve, sparsity_stats, MetricsError, RunTrace, SparsityStats, TraceStep};
pub use model::{
    load_model, random_input, random_network, save_model, Activation, ConvLayer, DenseLayer, HeadChoice, LayerSpec,
    ModelError, Network, NetworkSpec, Padding, RandomNetConfig, Shape3,
};
