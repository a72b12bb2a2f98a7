use std::collections::VecDeque;

/// Accumulators for one feature-map row (a stream slice) of a conv layer.
#[derive(Debug, Clone)]
pub struct UnitStateRow {
    pub row: usize,
    /// Running sums, `(cross, channel)` order.
    pub states: Vec<f64>,
    /// Number of pushed input slices after which this row receives nothing more.
    pub closes_at: usize,
}

impl UnitStateRow {
    /// Input slices still to be pushed before the row closes.
    pub fn remaining_contributions(&self, pushed: usize) -> usize {
        self.closes_at.saturating_sub(pushed)
    }
}

/// Open rows of one streamed conv layer, ordered by row coordinate.
/// Rows are allocated on first contribution and dropped once closed.
#[derive(Debug, Clone)]
pub struct LayerStateBuffer {
    pub(crate) row_len: usize,
    pub(crate) open: VecDeque<UnitStateRow>,
}

impl LayerStateBuffer {
    pub fn new(row_len: usize) -> Self {
        LayerStateBuffer {
            row_len,
            open: VecDeque::new(),
        }
    }

    pub fn open_rows(&self) -> impl Iterator<Item = &UnitStateRow> {
        self.open.iter()
    }

    pub fn len(&self) -> usize {
        self.open.len()
    }

    pub fn is_empty(&self) -> bool {
        self.open.is_empty()
    }

    pub fn live_scalars(&self) -> usize {
        self.open.len() * self.row_len
    }

    fn position(&self, row: usize) -> Result<usize, usize> {
        // Rows are nearly always appended at the back; check there first.
        match self.open.back() {
            Some(last) if last.row < row => Err(self.open.len()),
            Some(last) if last.row == row => Ok(self.open.len() - 1),
            _ => self.open.binary_search_by_key(&row, |r| r.row),
        }
    }

    pub fn get(&self, row: usize, offset: usize) -> f64 {
        match self.position(row) {
            Ok(i) => self.open[i].states[offset],
            Err(_) => 0.0,
        }
    }

    pub fn contains(&self, row: usize) -> bool {
        self.position(row).is_ok()
    }

    /// Inserts a zeroed row; returns its scalar count.
    pub fn allocate(&mut self, row: usize, closes_at: usize) -> usize {
        if let Err(i) = self.position(row) {
            self.open.insert(
                i,
                UnitStateRow {
                    row,
                    states: vec![0.0; self.row_len],
                    closes_at,
                },
            );
        }
        self.row_len
    }

    pub fn slot(&mut self, row: usize, offset: usize) -> Option<&mut f64> {
        let i = self.position(row).ok()?;
        Some(&mut self.open[i].states[offset])
    }

    /// Drops every row closed after `pushed` slices; returns how many.
    pub fn close(&mut self, pushed: usize) -> usize {
        let before = self.open.len();
        self.open.retain(|r| r.closes_at > pushed);
        before - self.open.len()
    }

    pub fn clear(&mut self) {
        self.open.clear();
    }
}

/// Fully materialized accumulators (head layers, or a final conv map).
#[derive(Debug, Clone)]
pub struct FullState {
    pub(crate) len: usize,
    pub(crate) states: Option<Vec<f64>>,
}

impl FullState {
    pub fn new(len: usize) -> Self {
        FullState { len, states: None }
    }

    pub fn live_scalars(&self) -> usize {
        if self.states.is_some() {
            self.len
        } else {
            0
        }
    }

    pub fn get(&self, index: usize) -> f64 {
        self.states.as_ref().map_or(0.0, |s| s[index])
    }

    pub fn is_allocated(&self) -> bool {
        self.states.is_some()
    }

    /// Allocates on first use.
    pub fn slot(&mut self, index: usize) -> &mut f64 {
        let len = self.len;
        &mut self.states.get_or_insert_with(|| vec![0.0; len])[index]
    }

    pub fn clear(&mut self) {
        self.states = None;
    }
}
