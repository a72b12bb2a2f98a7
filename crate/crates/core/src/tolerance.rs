//! Componentwise comparison of streamed and reference outputs.

/// Relative tolerance for streamed vs. reference outputs.
pub const REL_TOL: f64 = 1e-6;
/// Absolute floor under [`REL_TOL`], for components near zero.
pub const ABS_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Discrepancy {
    pub max_abs: f64,
    /// `|a - b| / max(|a|, |b|)`, zero where both are zero.
    pub max_rel: f64,
    /// First component violating the tolerance, if any.
    pub first_violation: Option<usize>,
}

impl Discrepancy {
    pub fn within(&self) -> bool {
        self.first_violation.is_none()
    }
}

#[inline]
pub fn close(a: f64, b: f64, rel: f64, abs_floor: f64) -> bool {
    (a - b).abs() <= (rel * a.abs().max(b.abs())).max(abs_floor)
}

/// Compares two equally long vectors; a length mismatch is a violation at
/// the shorter length.
pub fn compare(a: &[f64], b: &[f64], rel: f64, abs_floor: f64) -> Discrepancy {
    let mut d = Discrepancy::default();
    if a.len() != b.len() {
        d.first_violation = Some(a.len().min(b.len()));
    }
    for (i, (&x, &y)) in a.iter().zip(b).enumerate() {
        let diff = (x - y).abs();
        let scale = x.abs().max(y.abs());
        d.max_abs = d.max_abs.max(diff);
        if scale > 0.0 {
            d.max_rel = d.max_rel.max(diff / scale);
        }
        if d.first_violation.is_none() && !close(x, y, rel, abs_floor) {
            d.first_violation = Some(i);
        }
    }
    d
}
