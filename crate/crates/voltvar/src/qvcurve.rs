//! Volt-VAr droop curve: direct evaluation, inverter rating formulas, and the
//! exact disaggregated convex-combination encoding used by the planner.
//!
//! The curve is the standard six-breakpoint droop: full injection below the
//! low knee, a dead band around nominal voltage, full absorption above the
//! high knee, with linear blends in between.  Reactive output at the
//! breakpoints is `{+q_max, +q_max, 0, 0, -q_max, -q_max}`; it is derived
//! from `q_max` rather than stored, so inconsistent curves cannot be built.

use thiserror::Error;

use crate::milp::{MipInstance, RowSense, VarId};

#[derive(Debug, Error)]
pub enum CurveError {
    #[error("breakpoints must satisfy v1 <= v2 < v3 <= v4 < v5 <= v6, got {0:?}")]
    BadBreakpoints([f64; 6]),
    #[error("q_max must be positive, got {0}")]
    BadQMax(f64),
    #[error("minimum power factor must lie in (0,1), got {0}")]
    BadPowerFactor(f64),
}

/// Piecewise-linear Q-V droop characteristic.
#[derive(Debug, Clone, PartialEq)]
pub struct QVCurve {
    v_break: [f64; 6],
    q_max: f64,
}

/// Result of a droop evaluation; `clamped` marks inputs outside `[v1, v6]`
/// that saturated to the nearest end value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QEval {
    pub q: f64,
    pub clamped: bool,
}

impl QVCurve {
    pub fn new(v_break: [f64; 6], q_max: f64) -> Result<Self, CurveError> {
        let v = &v_break;
        let ordered = v[0] <= v[1] && v[1] < v[2] && v[2] <= v[3] && v[3] < v[4] && v[4] <= v[5];
        if !ordered || v.iter().any(|x| !x.is_finite()) {
            return Err(CurveError::BadBreakpoints(v_break));
        }
        if !(q_max > 0.0) || !q_max.is_finite() {
            return Err(CurveError::BadQMax(q_max));
        }
        Ok(Self { v_break, q_max })
    }

    pub fn v_break(&self) -> [f64; 6] {
        self.v_break
    }

    pub fn q_max(&self) -> f64 {
        self.q_max
    }

    /// Reactive output at the six breakpoints.
    pub fn q_break(&self) -> [f64; 6] {
        let q = self.q_max;
        [q, q, 0.0, 0.0, -q, -q]
    }

    /// Evaluates the droop at voltage magnitude `vm` (pu).
    ///
    /// Outside `[v1, v6]` the curve saturates to the nearest end value and
    /// the result is flagged as clamped.
    pub fn q_of_v(&self, vm: f64) -> QEval {
        let v = &self.v_break;
        let q = self.q_break();
        if vm <= v[0] {
            return QEval { q: q[0], clamped: vm < v[0] };
        }
        if vm >= v[5] {
            return QEval { q: q[5], clamped: vm > v[5] };
        }
        for j in 0..5 {
            if vm <= v[j + 1] {
                let w = v[j + 1] - v[j];
                // zero-width segments only occur at equal breakpoints where
                // both endpoint values coincide
                let t = if w > 0.0 { (vm - v[j]) / w } else { 1.0 };
                return QEval { q: q[j] + t * (q[j + 1] - q[j]), clamped: false };
            }
        }
        QEval { q: q[5], clamped: false }
    }

    /// Returns a copy with the sloped segments steepened by `factor`
    /// (segment widths shrunk), keeping the knees at `v2` and `v4` fixed.
    /// Used to construct deliberately unstable droop gains in stability
    /// studies.
    pub fn steepened(&self, factor: f64) -> Result<Self, CurveError> {
        let v = self.v_break;
        let mut w = v;
        w[2] = v[1] + (v[2] - v[1]) / factor;
        w[4] = v[3] + (v[4] - v[3]) / factor;
        Self::new(w, self.q_max)
    }
}

/// Reactive-power rating available at full active output for an inverter
/// capable of operating down to `pf_min`: `sqrt(1/pf_min^2 - 1) * p_rated`.
pub fn q_max_from_pf(pf_min: f64, p_rated: f64) -> Result<f64, CurveError> {
    if !(pf_min > 0.0 && pf_min < 1.0) {
        return Err(CurveError::BadPowerFactor(pf_min));
    }
    Ok((1.0 / (pf_min * pf_min) - 1.0).sqrt() * p_rated)
}

/// Apparent-power rating implied by the active and reactive ratings.
pub fn s_rating(q_max: f64, p_rated: f64) -> f64 {
    q_max.hypot(p_rated)
}

/// Handle to the rows and columns of one encoded curve inside a
/// [`MipInstance`].
///
/// The encoding is the disaggregated convex combination of the five curve
/// segments: one binary per segment, two nonnegative endpoint weights per
/// segment, linking rows that tie the voltage variable and the reactive
/// variable to the selected segment's interpolation, one row forcing each
/// segment's weights to sum to its binary, and one row forcing exactly one
/// active segment.
#[derive(Debug, Clone)]
pub struct CurveEncoding {
    pub delta: [VarId; 5],
    /// `lambda[j] = (weight at breakpoint j, weight at breakpoint j+1)`.
    pub lambda: [(VarId, VarId); 5],
    pub rows: Vec<usize>,
}

/// Emits the exact mixed-integer encoding of `curve` into `inst`, binding the
/// existing variables `vm_var` and `q_var` so that every feasible point
/// satisfies `q_var = q_of_v(curve, vm_var)`.
pub fn encode(
    inst: &mut MipInstance,
    curve: &QVCurve,
    vm_var: VarId,
    q_var: VarId,
    tag: &str,
) -> CurveEncoding {
    let v = curve.v_break();
    let q = curve.q_break();

    let mut delta = [VarId(0); 5];
    let mut lambda = [(VarId(0), VarId(0)); 5];
    for j in 0..5 {
        delta[j] = inst.add_binary(format!("{tag}_d{j}"));
        let lo = inst.add_var(format!("{tag}_l{j}a"), 0.0, 1.0);
        let hi = inst.add_var(format!("{tag}_l{j}b"), 0.0, 1.0);
        lambda[j] = (lo, hi);
    }

    let mut rows = Vec::with_capacity(8);

    // vm = sum_j (v_j * lambda_{j,j} + v_{j+1} * lambda_{j,j+1})
    let mut vm_row: Vec<(VarId, f64)> = vec![(vm_var, -1.0)];
    let mut q_row: Vec<(VarId, f64)> = vec![(q_var, -1.0)];
    for j in 0..5 {
        vm_row.push((lambda[j].0, v[j]));
        vm_row.push((lambda[j].1, v[j + 1]));
        q_row.push((lambda[j].0, q[j]));
        q_row.push((lambda[j].1, q[j + 1]));
    }
    rows.push(inst.add_row(vm_row, RowSense::Eq, 0.0));
    rows.push(inst.add_row(q_row, RowSense::Eq, 0.0));

    // delta_j = lambda_{j,j} + lambda_{j,j+1}
    for j in 0..5 {
        rows.push(inst.add_row(
            vec![(delta[j], -1.0), (lambda[j].0, 1.0), (lambda[j].1, 1.0)],
            RowSense::Eq,
            0.0,
        ));
    }

    // exactly one active segment
    rows.push(inst.add_row(delta.iter().map(|&d| (d, 1.0)).collect(), RowSense::Eq, 1.0));

    CurveEncoding { delta, lambda, rows }
}
