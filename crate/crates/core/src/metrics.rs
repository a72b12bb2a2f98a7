//! Per-step traces of a streamed presentation and statistics derived from them.

use thiserror::Error;

use crate::dense_ref::Tensor3;
use crate::engine::{Engine, EngineError, EngineSnapshot};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("trace has no steps")]
    EmptyTrace,
    #[error("final output has {expected} components, trace steps have {found}")]
    LengthMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    /// 1-based push index.
    pub step: usize,
    pub output: Vec<f64>,
    /// Cumulative events over all layers, input included.
    pub events: u64,
    pub live_scalars: usize,
    pub events_per_layer: Vec<u64>,
    pub contributions_per_layer: Vec<u64>,
}

/// Accumulated outputs after each push of one presentation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunTrace {
    steps: Vec<TraceStep>,
}

impl RunTrace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a snapshot taken right after a push.
    pub fn record(&mut self, snapshot: EngineSnapshot) {
        let step = self.steps.len() + 1;
        debug_assert_eq!(snapshot.step, step, "snapshot out of sequence");
        self.steps.push(TraceStep {
            step,
            events: snapshot.total_events(),
            output: snapshot.output,
            live_scalars: snapshot.live,
            events_per_layer: snapshot.events,
            contributions_per_layer: snapshot.contributions,
        });
    }

    pub fn steps(&self) -> &[TraceStep] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn last(&self) -> Option<&TraceStep> {
        self.steps.last()
    }
}

/// Streams `input` through `engine` from a fresh state, recording every step.
/// Returns the trace and the finalized output.
pub fn trace_run(engine: &mut Engine, input: &Tensor3) -> Result<(RunTrace, Vec<f64>), EngineError> {
    engine.reset();
    let mut trace = RunTrace::new();
    let output = engine.run(input, |e| trace.record(e.snapshot()))?;
    Ok((trace, output))
}

fn l2(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

/// `(step, ||output_t - final|| / ||final||)` for every step; the norm is not
/// divided when `final` is all zeros.
pub fn convergence_curve(trace: &RunTrace, final_output: &[f64]) -> Result<Vec<(usize, f64)>, MetricsError> {
    if trace.is_empty() {
        return Err(MetricsError::EmptyTrace);
    }
    let norm = l2(final_output.iter().copied());
    trace
        .steps
        .iter()
        .map(|s| {
            if s.output.len() != final_output.len() {
                return Err(MetricsError::LengthMismatch {
                    expected: final_output.len(),
                    found: s.output.len(),
                });
            }
            let dist = l2(s.output.iter().zip(final_output).map(|(a, b)| a - b));
            Ok((s.step, if norm > 0.0 { dist / norm } else { dist }))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparsityStats {
    pub nonzero_input_fraction: f64,
    /// Index 0 = input events.
    pub events_per_layer: Vec<u64>,
    /// Index 0 = layer 1.
    pub contributions_per_layer: Vec<u64>,
    /// Events above the input layer per nonzero input value; zero for an
    /// all-zero input.
    pub events_per_nonzero_input: f64,
}

pub fn sparsity_stats(trace: &RunTrace, input: &Tensor3) -> SparsityStats {
    let nonzero = input.data().iter().filter(|v| **v != 0.0).count();
    let total = input.data().len().max(1);
    let (events, contributions) = trace
        .last()
        .map(|s| (s.events_per_layer.clone(), s.contributions_per_layer.clone()))
        .unwrap_or_default();
    let downstream: u64 = events.iter().skip(1).sum();
    SparsityStats {
        nonzero_input_fraction: nonzero as f64 / total as f64,
        events_per_layer: events,
        contributions_per_layer: contributions,
        events_per_nonzero_input: if nonzero == 0 {
            0.0
        } else {
            downstream as f64 / nonzero as f64
        },
    }
}
