//! Event-driven, depth-first streaming inference.
//!
//! Every unit keeps an accumulator `c` and exposes the activation `f(c)`. A
//! change of a unit's activation is sent upward as an [`Event`] carrying the
//! delta; a receiving unit adds `weight * delta` to its accumulator and, if its
//! own activation moved, emits an event in turn. Starting from an all-zero
//! state with `f(0) = 0` and zero biases, the accumulated activations after all
//! input has been presented equal those of a conventional forward pass.
//!
//! Input is presented one stream slice at a time (a row, or a single element
//! for 1D inputs). Each slice is propagated through all layers before the next
//! one is accepted. Conv layers keep only the rows whose receptive field still
//! overlaps input that has not been pushed yet; a row is allocated on its first
//! contribution and released as soon as the last input slice it depends on has
//! been processed. Head layers (`global_average`, `dense`) keep their full,
//! small state.
//!
//! Two propagation orders are provided, see [`Mode`].

mod geometry;
mod state;

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

pub use geometry::StreamAxis;
pub use state::{FullState, LayerStateBuffer, UnitStateRow};

use crate::dense_ref::Tensor3;
use crate::model::{Activation, LayerSpec, Network, Shape3};
use geometry::{ConvGeom, MapGeom};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("layer {layer} has a nonzero bias; streaming requires zero biases")]
    NonzeroBias { layer: usize },
    #[error("invalid engine configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("all {0} input rows have already been pushed")]
    TooManyRows(usize),
    #[error("all {0} input elements have already been pushed")]
    TooManyElements(usize),
    #[error("expected {expected} values, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("non-finite input value at offset {index}")]
    NonFiniteInput { index: usize },
    #[error("element-wise pushing requires a one-row input streamed along columns")]
    NotOneDimensional,
    #[error("only {pushed} of {expected} input slices were pushed")]
    IncompleteInput { pushed: usize, expected: usize },
    #[error("engine was finalized; reset it before pushing more input")]
    Finalized,
    #[error("expected input of shape {expected}, found {found}")]
    InputShape { expected: Shape3, found: Shape3 },
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
}

/// Propagation order within one input slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// Layer by layer within the slice: all pending contributions are applied
    /// to a layer, then every unit that changed emits one event. Units are
    /// visited in ascending `(row, col, channel)` order.
    #[default]
    PerRow,
    /// One event at a time from a LIFO work queue. Input events are seeded so
    /// they pop left to right, channel ascending; the events emitted by one
    /// update are pushed so they pop in target order.
    PerEvent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConfig {
    pub mode: Mode,
    /// `None` streams columns for one-row inputs and rows otherwise.
    pub axis: Option<StreamAxis>,
    /// Deltas with `|delta| <= epsilon` are dropped. Anything above zero makes
    /// the result approximate.
    pub epsilon: f64,
    /// Verify the open-row invariants after every push.
    pub check_invariants: bool,
    /// Keep a log of every emitted event (see [`Engine::take_events`]).
    pub record_events: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            mode: Mode::PerRow,
            axis: None,
            epsilon: 0.0,
            check_invariants: false,
            record_events: false,
        }
    }
}

/// A nonzero change of one unit's activation. Layer 0 is the input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub layer: usize,
    pub row: usize,
    pub col: usize,
    pub channel: usize,
    pub delta: f64,
}

/// Live accumulator counts. One scalar per allocated unit state; vectors are
/// indexed by layer minus one.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MemoryReport {
    pub per_layer: Vec<usize>,
    /// Open rows per streamed conv layer; zero for fully materialized layers.
    pub open_rows: Vec<usize>,
    /// Geometric bound on simultaneously open rows, for streamed layers.
    pub max_open: Vec<Option<usize>>,
    pub live: usize,
    /// Largest `live` seen between two input slices, i.e. the state carried
    /// from one slice to the next.
    pub peak: usize,
    /// Largest `live` seen at any instant, including inside a slice.
    pub peak_transient: usize,
}

/// Engine observables right after a push.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineSnapshot {
    pub step: usize,
    pub output: Vec<f64>,
    /// Cumulative events per layer, index 0 = input.
    pub events: Vec<u64>,
    /// Cumulative accumulator updates per layer, index 0 = layer 1.
    pub contributions: Vec<u64>,
    pub live: usize,
}

impl EngineSnapshot {
    pub fn total_events(&self) -> u64 {
        self.events.iter().sum()
    }
}

/// Applies `amount` to the accumulator and returns the activation change.
#[inline]
pub fn update_unit(activation: Activation, state: &mut f64, amount: f64) -> f64 {
    let before = activation.apply(*state);
    *state += amount;
    activation.apply(*state) - before
}

#[derive(Debug, Clone)]
enum Connect {
    Conv {
        geom: ConvGeom,
        weights: Vec<f64>,
    },
    Average {
        count: f64,
    },
    Dense {
        outputs: usize,
        inputs: usize,
        weights: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
struct Stage {
    connect: Connect,
    activation: Activation,
    input: MapGeom,
    output: MapGeom,
}

#[derive(Debug, Clone)]
enum StageState {
    Rows(LayerStateBuffer),
    Full(FullState),
}

impl StageState {
    fn live_scalars(&self) -> usize {
        match self {
            StageState::Rows(b) => b.live_scalars(),
            StageState::Full(f) => f.live_scalars(),
        }
    }

    fn clear(&mut self) {
        match self {
            StageState::Rows(b) => b.clear(),
            StageState::Full(f) => f.clear(),
        }
    }
}

/// `(stream, cross, channel)` in a layer's own map.
type UnitKey = (usize, usize, usize);

#[derive(Debug, Clone, Copy)]
struct Pending {
    s: usize,
    x: usize,
    c: usize,
    delta: f64,
}

pub struct Engine {
    net: Arc<Network>,
    config: EngineConfig,
    axis: StreamAxis,
    stages: Vec<Stage>,
    states: Vec<StageState>,
    /// Streamed conv stages form a prefix of `stages`.
    streamed: usize,
    max_open: Vec<usize>,
    stream_len: usize,
    pushed: usize,
    finalized: bool,
    events: Vec<u64>,
    contributions: Vec<u64>,
    live: usize,
    peak: usize,
    peak_transient: usize,
    log: Vec<Event>,
    scratch: Vec<(UnitKey, f64)>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("config", &self.config)
            .field("axis", &self.axis)
            .field("pushed", &self.pushed)
            .field("live", &self.live)
            .finish_non_exhaustive()
    }
}

impl Engine {
    pub fn new(net: impl Into<Arc<Network>>, mode: Mode) -> Result<Self, EngineError> {
        Self::with_config(
            net,
            EngineConfig {
                mode,
                ..EngineConfig::default()
            },
        )
    }

    pub fn with_config(net: impl Into<Arc<Network>>, config: EngineConfig) -> Result<Self, EngineError> {
        let net = net.into();
        if let Some(layer) = net.first_nonzero_bias() {
            return Err(EngineError::NonzeroBias { layer });
        }
        if !(config.epsilon >= 0.0 && config.epsilon.is_finite()) {
            return Err(EngineError::InvalidConfig("epsilon must be finite and non-negative"));
        }
        let input = net.input_shape();
        let axis = config.axis.unwrap_or(if input.rows == 1 && input.cols > 1 {
            StreamAxis::Columns
        } else {
            StreamAxis::Rows
        });

        let layer_count = net.layers().len();
        let mut stages = Vec::with_capacity(layer_count);
        let mut states = Vec::with_capacity(layer_count);
        let mut streamed = 0;
        for (i, layer) in net.layers().iter().enumerate() {
            let in_map = MapGeom {
                shape: net.shape(i),
                axis,
            };
            let out_map = MapGeom {
                shape: net.shape(i + 1),
                axis,
            };
            let last = i + 1 == layer_count;
            let connect = match layer {
                LayerSpec::Conv(c) => Connect::Conv {
                    geom: ConvGeom::new(c, in_map.shape, axis),
                    weights: c.weights.iter().map(|&w| f64::from(w)).collect(),
                },
                LayerSpec::GlobalAverage => Connect::Average {
                    count: (in_map.shape.rows * in_map.shape.cols) as f64,
                },
                LayerSpec::Dense(d) => Connect::Dense {
                    outputs: d.outputs,
                    inputs: d.inputs,
                    weights: d.weights.iter().map(|&w| f64::from(w)).collect(),
                },
            };
            let state = if matches!(layer, LayerSpec::Conv(_)) && !last {
                streamed += 1;
                StageState::Rows(LayerStateBuffer::new(out_map.slice_len()))
            } else {
                StageState::Full(FullState::new(out_map.shape.len()))
            };
            stages.push(Stage {
                connect,
                activation: layer.activation(),
                input: in_map,
                output: out_map,
            });
            states.push(state);
        }

        let stream_len = MapGeom { shape: input, axis }.stream_len();
        let mut engine = Engine {
            net,
            config,
            axis,
            stages,
            states,
            streamed,
            max_open: Vec::new(),
            stream_len,
            pushed: 0,
            finalized: false,
            events: vec![0; layer_count + 1],
            contributions: vec![0; layer_count],
            live: 0,
            peak: 0,
            peak_transient: 0,
            log: Vec::new(),
            scratch: Vec::new(),
        };
        engine.max_open = (0..streamed).map(|k| engine.open_row_bound(k)).collect();
        Ok(engine)
    }

    pub fn network(&self) -> &Arc<Network> {
        &self.net
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn axis(&self) -> StreamAxis {
        self.axis
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    /// Number of slices a complete input consists of.
    pub fn stream_len(&self) -> usize {
        self.stream_len
    }

    /// Scalars per pushed slice.
    pub fn slice_len(&self) -> usize {
        MapGeom {
            shape: self.net.input_shape(),
            axis: self.axis,
        }
        .slice_len()
    }

    pub fn rows_pushed(&self) -> usize {
        self.pushed
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized
    }

    fn one_dimensional(&self) -> bool {
        self.axis == StreamAxis::Columns && self.net.input_shape().rows == 1
    }

    /// Presents the next input slice and propagates it through the network.
    ///
    /// Along [`StreamAxis::Rows`] the slice is a row in `(col, channel)` order;
    /// along [`StreamAxis::Columns`] it is a column in `(row, channel)` order.
    /// Returns the accumulated output.
    pub fn push_row(&mut self, values: &[f64]) -> Result<Vec<f64>, EngineError> {
        if self.finalized {
            return Err(EngineError::Finalized);
        }
        if self.pushed == self.stream_len {
            return Err(if self.one_dimensional() {
                EngineError::TooManyElements(self.stream_len)
            } else {
                EngineError::TooManyRows(self.stream_len)
            });
        }
        let expected = self.slice_len();
        if values.len() != expected {
            return Err(EngineError::LengthMismatch {
                expected,
                found: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(EngineError::NonFiniteInput { index });
        }

        let channels = self.net.input_shape().channels;
        let s = self.pushed;
        let seeds: Vec<Pending> = values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, &v)| Pending {
                s,
                x: i / channels,
                c: i % channels,
                delta: v,
            })
            .collect();
        self.events[0] += seeds.len() as u64;
        if self.config.record_events {
            let input = MapGeom {
                shape: self.net.input_shape(),
                axis: self.axis,
            };
            for p in &seeds {
                self.log_event(0, input, p);
            }
        }

        match self.config.mode {
            Mode::PerRow => self.propagate_coalesced(seeds),
            Mode::PerEvent => self.propagate_lifo(seeds),
        }

        self.pushed += 1;
        self.close_rows();
        self.peak = self.peak.max(self.live);
        if self.config.check_invariants {
            self.check_invariants()?;
        }
        Ok(self.read_output())
    }

    /// Presents the next element of a one-row input (`channels` values).
    pub fn push_element(&mut self, values: &[f64]) -> Result<Vec<f64>, EngineError> {
        if !self.one_dimensional() {
            return Err(EngineError::NotOneDimensional);
        }
        self.push_row(values)
    }

    /// Slice `index` of `input` along this engine's stream axis, in the order
    /// [`Engine::push_row`] expects.
    pub fn input_slice(&self, input: &Tensor3, index: usize) -> Vec<f64> {
        match self.axis {
            StreamAxis::Rows => input.row(index).to_vec(),
            StreamAxis::Columns => input.column(index),
        }
    }

    /// Streams a whole input from the current position, calling `on_step`
    /// after every push, then finalizes.
    pub fn run(&mut self, input: &Tensor3, mut on_step: impl FnMut(&Engine)) -> Result<Vec<f64>, EngineError> {
        let expected = self.net.input_shape();
        if input.shape() != expected {
            return Err(EngineError::InputShape {
                expected,
                found: input.shape(),
            });
        }
        for i in self.pushed..self.stream_len {
            let slice = self.input_slice(input, i);
            self.push_row(&slice)?;
            on_step(self);
        }
        self.finalize()
    }

    /// Current output: the last layer's activation of its accumulators.
    pub fn read_output(&self) -> Vec<f64> {
        let last = self.stages.len() - 1;
        let f = self.stages[last].activation;
        match &self.states[last] {
            StageState::Full(full) => match &full.states {
                Some(states) => states.iter().map(|&c| f.apply(c)).collect(),
                None => vec![0.0; full.len],
            },
            StageState::Rows(_) => unreachable!("the last layer is always fully materialized"),
        }
    }

    /// Completes the presentation and returns the final output. Further
    /// pushes fail until [`Engine::reset`].
    pub fn finalize(&mut self) -> Result<Vec<f64>, EngineError> {
        if self.pushed < self.stream_len {
            return Err(EngineError::IncompleteInput {
                pushed: self.pushed,
                expected: self.stream_len,
            });
        }
        self.close_rows();
        debug_assert!(self.states[..self.streamed].iter().all(|s| match s {
            StageState::Rows(b) => b.is_empty(),
            StageState::Full(_) => false,
        }));
        self.finalized = true;
        Ok(self.read_output())
    }

    /// Back to the freshly constructed state, counters included.
    pub fn reset(&mut self) {
        for state in &mut self.states {
            state.clear();
        }
        self.pushed = 0;
        self.finalized = false;
        self.events.iter_mut().for_each(|e| *e = 0);
        self.contributions.iter_mut().for_each(|c| *c = 0);
        self.live = 0;
        self.peak = 0;
        self.peak_transient = 0;
        self.log.clear();
    }

    pub fn memory_report(&self) -> MemoryReport {
        let mut open_rows = Vec::with_capacity(self.states.len());
        let mut max_open = Vec::with_capacity(self.states.len());
        for (k, state) in self.states.iter().enumerate() {
            match state {
                StageState::Rows(b) => {
                    open_rows.push(b.len());
                    max_open.push(Some(self.max_open[k]));
                }
                StageState::Full(_) => {
                    open_rows.push(0);
                    max_open.push(None);
                }
            }
        }
        MemoryReport {
            per_layer: self.states.iter().map(StageState::live_scalars).collect(),
            open_rows,
            max_open,
            live: self.live,
            peak: self.peak,
            peak_transient: self.peak_transient,
        }
    }

    /// Cumulative events per layer, index 0 = input.
    pub fn events_per_layer(&self) -> &[u64] {
        &self.events
    }

    /// Cumulative accumulator updates per layer, index 0 = layer 1.
    pub fn contributions_per_layer(&self) -> &[u64] {
        &self.contributions
    }

    pub fn snapshot(&self) -> EngineSnapshot {
        EngineSnapshot {
            step: self.pushed,
            output: self.read_output(),
            events: self.events.clone(),
            contributions: self.contributions.clone(),
            live: self.live,
        }
    }

    /// Drains the event log. Empty unless `record_events` is set.
    pub fn take_events(&mut self) -> Vec<Event> {
        std::mem::take(&mut self.log)
    }

    /// Open rows of the streamed conv layer `layer` (1-based).
    pub fn open_rows(&self, layer: usize) -> Option<&LayerStateBuffer> {
        match self.states.get(layer.checked_sub(1)?)? {
            StageState::Rows(b) => Some(b),
            StageState::Full(_) => None,
        }
    }

    /// Checks that every streamed layer holds only rows inside its current
    /// window, in ascending order, and no more than its geometric bound.
    pub fn check_invariants(&self) -> Result<(), EngineError> {
        let mut live = 0;
        for (k, state) in self.states.iter().enumerate() {
            live += state.live_scalars();
            let StageState::Rows(buf) = state else { continue };
            let layer = k + 1;
            if buf.len() > self.max_open[k] {
                return Err(EngineError::InvariantViolation(format!(
                    "layer {layer}: {} open rows exceed bound {}",
                    buf.len(),
                    self.max_open[k]
                )));
            }
            let mut prev = None;
            for row in buf.open_rows() {
                if prev.is_some_and(|p| p >= row.row) {
                    return Err(EngineError::InvariantViolation(format!(
                        "layer {layer}: open rows out of order at row {}",
                        row.row
                    )));
                }
                prev = Some(row.row);
                if row.closes_at <= self.pushed || self.first_input(k, row.row) >= self.pushed.max(1) {
                    return Err(EngineError::InvariantViolation(format!(
                        "layer {layer}: row {} is outside the open window after {} slices",
                        row.row, self.pushed
                    )));
                }
            }
        }
        if live != self.live {
            return Err(EngineError::InvariantViolation(format!(
                "live count {} disagrees with allocated state {live}",
                self.live
            )));
        }
        Ok(())
    }

    /// Stream slices pushed when row `r` of streamed stage `k` closes.
    fn close_step(&self, k: usize, r: usize) -> usize {
        let Connect::Conv { geom, .. } = &self.stages[k].connect else {
            unreachable!("streamed stages are convolutions")
        };
        let dep = geom.s.last_dep(r);
        if k == 0 {
            dep + 1
        } else {
            self.close_step(k - 1, dep)
        }
    }

    /// Earliest input slice that can reach row `r` of streamed stage `k`.
    fn first_input(&self, k: usize, r: usize) -> usize {
        let Connect::Conv { geom, .. } = &self.stages[k].connect else {
            unreachable!("streamed stages are convolutions")
        };
        let dep = geom.s.first_dep(r);
        if k == 0 {
            dep
        } else {
            self.first_input(k - 1, dep)
        }
    }

    /// Most rows of stage `k` that can be open at once: during push `t`, rows
    /// reachable by slices `< t` that were not closed after slice `t - 1`.
    fn open_row_bound(&self, k: usize) -> usize {
        let rows = self.stages[k].output.stream_len();
        let (mut reachable, mut closed, mut best) = (0, 0, 0);
        for t in 1..=self.stream_len {
            while reachable < rows && self.first_input(k, reachable) < t {
                reachable += 1;
            }
            best = best.max(reachable.saturating_sub(closed));
            while closed < rows && self.close_step(k, closed) <= t {
                closed += 1;
            }
        }
        best
    }

    fn close_rows(&mut self) {
        let pushed = self.pushed;
        for state in &mut self.states[..self.streamed] {
            if let StageState::Rows(buf) = state {
                let freed = buf.close(pushed) * buf.row_len;
                self.live -= freed;
            }
        }
    }

    fn slot(&mut self, k: usize, (s, x, c): UnitKey) -> &mut f64 {
        let output = self.stages[k].output;
        let missing = match &self.states[k] {
            StageState::Rows(buf) => !buf.contains(s),
            StageState::Full(full) => !full.is_allocated(),
        };
        if missing {
            let size = if k < self.streamed {
                let closes_at = self.close_step(k, s);
                debug_assert!(closes_at > self.pushed, "contribution to a closed row");
                match &mut self.states[k] {
                    StageState::Rows(buf) => buf.allocate(s, closes_at),
                    StageState::Full(_) => unreachable!("streamed stages hold rows"),
                }
            } else {
                output.shape.len()
            };
            self.live += size;
            self.peak_transient = self.peak_transient.max(self.live);
        }
        match &mut self.states[k] {
            StageState::Rows(buf) => buf.slot(s, x * output.shape.channels + c).expect("row allocated above"),
            StageState::Full(full) => full.slot(output.flat(s, x, c)),
        }
    }

    fn targets(&mut self, k: usize, ev: &Pending) {
        let out = &mut self.scratch;
        out.clear();
        let stage = &self.stages[k];
        match &stage.connect {
            Connect::Conv { geom, weights } => {
                for rs in geom.s.targets(ev.s) {
                    let ts = geom.s.tap(ev.s, rs);
                    for rx in geom.x.targets(ev.x) {
                        let tx = geom.x.tap(ev.x, rx);
                        for o in 0..geom.out_channels {
                            let w = weights[geom.weight_index(o, ev.c, ts, tx)];
                            out.push(((rs, rx, o), w * ev.delta));
                        }
                    }
                }
            }
            Connect::Average { count } => out.push(((0, 0, ev.c), ev.delta / count)),
            Connect::Dense {
                outputs,
                inputs,
                weights,
            } => {
                let j = stage.input.flat(ev.s, ev.x, ev.c);
                for m in 0..*outputs {
                    out.push(((0, 0, m), weights[m * inputs + j] * ev.delta));
                }
            }
        }
    }

    #[inline]
    fn emits(&self, delta: f64) -> bool {
        delta != 0.0 && delta.abs() > self.config.epsilon
    }

    fn log_event(&mut self, layer: usize, map: MapGeom, p: &Pending) {
        let (row, col) = map.to_row_col(p.s, p.x);
        self.log.push(Event {
            layer,
            row,
            col,
            channel: p.c,
            delta: p.delta,
        });
    }

    fn propagate_coalesced(&mut self, seeds: Vec<Pending>) {
        let mut pending = seeds;
        let mut touched: BTreeMap<UnitKey, f64> = BTreeMap::new();
        for k in 0..self.stages.len() {
            touched.clear();
            for ev in &pending {
                self.targets(k, ev);
                let targets = std::mem::take(&mut self.scratch);
                for &(key, amount) in &targets {
                    let slot = self.slot(k, key);
                    let before = *slot;
                    *slot += amount;
                    touched.entry(key).or_insert(before);
                }
                self.contributions[k] += targets.len() as u64;
                self.scratch = targets;
            }

            let stage = &self.stages[k];
            let (f, map) = (stage.activation, stage.output);
            let last = k + 1 == self.stages.len();
            let mut next = Vec::new();
            for (&(s, x, c), &before) in &touched {
                let after = self.value(k, (s, x, c));
                let delta = f.apply(after) - f.apply(before);
                if !self.emits(delta) {
                    continue;
                }
                self.events[k + 1] += 1;
                let p = Pending { s, x, c, delta };
                if self.config.record_events {
                    self.log_event(k + 1, map, &p);
                }
                if !last {
                    next.push(p);
                }
            }
            pending = next;
            if pending.is_empty() {
                break;
            }
        }
    }

    fn propagate_lifo(&mut self, seeds: Vec<Pending>) {
        let depth = self.stages.len();
        let mut stack: Vec<(usize, Pending)> = seeds.into_iter().rev().map(|p| (0, p)).collect();
        let mut emitted = Vec::new();
        while let Some((k, ev)) = stack.pop() {
            debug_assert!(ev.delta != 0.0, "zero delta dequeued");
            let (f, map) = (self.stages[k].activation, self.stages[k].output);
            self.targets(k, &ev);
            let targets = std::mem::take(&mut self.scratch);
            self.contributions[k] += targets.len() as u64;
            emitted.clear();
            for &((s, x, c), amount) in &targets {
                let delta = update_unit(f, self.slot(k, (s, x, c)), amount);
                if !self.emits(delta) {
                    continue;
                }
                self.events[k + 1] += 1;
                let p = Pending { s, x, c, delta };
                if self.config.record_events {
                    self.log_event(k + 1, map, &p);
                }
                if k + 1 < depth {
                    emitted.push((k + 1, p));
                }
            }
            self.scratch = targets;
            stack.extend(emitted.drain(..).rev());
        }
    }

    fn value(&self, k: usize, (s, x, c): UnitKey) -> f64 {
        let output = self.stages[k].output;
        match &self.states[k] {
            StageState::Rows(buf) => buf.get(s, x * output.shape.channels + c),
            StageState::Full(full) => full.get(output.flat(s, x, c)),
        }
    }
}
