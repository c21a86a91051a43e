//! Self-contained mixed-integer linear programming core: a bounded-variable
//! two-phase simplex, best-first branch-and-bound over binaries, and the
//! convexification helpers used to linearize quadratic objective terms and
//! apparent-power circles.

mod branch_bound;
mod mps;
mod simplex;

pub use branch_bound::{solve_mip, MipConfig, MipSolution, MipStatus};
pub use mps::{from_mps, to_mps};
pub use simplex::{solve_lp, LpSolution, LpStatus};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MilpError {
    #[error("numerical failure: best available pivot {pivot:.3e} below tolerance")]
    NumericalFailure { pivot: f64 },
    #[error("search caps reached before any integer-feasible point was found")]
    NoIncumbent,
    #[error("malformed instance: {0}")]
    Malformed(String),
    #[error("MPS parse error at line {line}: {msg}")]
    MpsParse { line: usize, msg: String },
}

/// Index of a variable inside a [`MipInstance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub is_binary: bool,
    pub obj: f64,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub name: String,
    pub coeffs: Vec<(VarId, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
}

/// Records one `w * (x - c)^2` objective term that was linearized into
/// epigraph rows.  Kept as metadata so callers can recompute exact quadratic
/// objective values from a solution.
#[derive(Debug, Clone)]
pub struct PiecewiseConvexTerm {
    pub var: VarId,
    pub center: f64,
    pub weight: f64,
    pub half_width: f64,
    /// Chord count per half-width; the full domain `[c-h, c+h]` carries `2K`
    /// chords on the uniform grid of spacing `h/K`.
    pub segments: usize,
    pub epigraph_var: VarId,
}

/// Extensive-form container: variables, bounds, sparse rows, binaries and the
/// linearized convex objective terms.
#[derive(Debug, Clone, Default)]
pub struct MipInstance {
    pub name: String,
    vars: Vec<Variable>,
    rows: Vec<Row>,
    pub terms: Vec<PiecewiseConvexTerm>,
}

impl MipInstance {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), ..Default::default() }
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        let id = VarId(self.vars.len());
        self.vars.push(Variable { name: name.into(), lower, upper, is_binary: false, obj: 0.0 });
        id
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        let id = VarId(self.vars.len());
        self.vars.push(Variable { name: name.into(), lower: 0.0, upper: 1.0, is_binary: true, obj: 0.0 });
        id
    }

    pub fn set_objective(&mut self, var: VarId, coeff: f64) {
        self.vars[var.0].obj = coeff;
    }

    pub fn add_objective(&mut self, var: VarId, coeff: f64) {
        self.vars[var.0].obj += coeff;
    }

    pub fn set_bounds(&mut self, var: VarId, lower: f64, upper: f64) {
        self.vars[var.0].lower = lower;
        self.vars[var.0].upper = upper;
    }

    pub fn add_row(&mut self, coeffs: Vec<(VarId, f64)>, sense: RowSense, rhs: f64) -> usize {
        let name = format!("r{}", self.rows.len());
        self.add_named_row(name, coeffs, sense, rhs)
    }

    pub fn add_named_row(
        &mut self,
        name: impl Into<String>,
        coeffs: Vec<(VarId, f64)>,
        sense: RowSense,
        rhs: f64,
    ) -> usize {
        self.rows.push(Row { name: name.into(), coeffs, sense, rhs });
        self.rows.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn var(&self, id: VarId) -> &Variable {
        &self.vars[id.0]
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn binary_ids(&self) -> Vec<VarId> {
        (0..self.vars.len()).filter(|&i| self.vars[i].is_binary).map(VarId).collect()
    }

    /// Checks coefficient finiteness, binary bounds and reference resolution.
    pub fn validate(&self) -> Result<(), MilpError> {
        for (i, v) in self.vars.iter().enumerate() {
            if v.lower.is_nan() || v.upper.is_nan() || !v.obj.is_finite() {
                return Err(MilpError::Malformed(format!("variable {} has non-finite data", i)));
            }
            if v.lower > v.upper {
                return Err(MilpError::Malformed(format!(
                    "variable {} has empty bound interval [{}, {}]",
                    v.name, v.lower, v.upper
                )));
            }
            if v.is_binary && (v.lower < -1e-12 || v.upper > 1.0 + 1e-12) {
                return Err(MilpError::Malformed(format!(
                    "binary {} has bounds outside {{0,1}}",
                    v.name
                )));
            }
        }
        for r in &self.rows {
            if !r.rhs.is_finite() {
                return Err(MilpError::Malformed(format!("row {} has non-finite rhs", r.name)));
            }
            for &(v, c) in &r.coeffs {
                if v.0 >= self.vars.len() {
                    return Err(MilpError::Malformed(format!(
                        "row {} references unknown column {}",
                        r.name, v.0
                    )));
                }
                if !c.is_finite() {
                    return Err(MilpError::Malformed(format!(
                        "row {} has non-finite coefficient on {}",
                        r.name, self.vars[v.0].name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Signed row activity `a.x` at a candidate point.
    pub fn row_activity(&self, row: usize, x: &[f64]) -> f64 {
        self.rows[row].coeffs.iter().map(|&(v, c)| c * x[v.0]).sum()
    }

    /// Largest constraint violation (rows and bounds) at a candidate point.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (i, r) in self.rows.iter().enumerate() {
            let act = self.row_activity(i, x);
            let v = match r.sense {
                RowSense::Le => act - r.rhs,
                RowSense::Ge => r.rhs - act,
                RowSense::Eq => (act - r.rhs).abs(),
            };
            worst = worst.max(v);
        }
        for (j, v) in self.vars.iter().enumerate() {
            worst = worst.max(v.lower - x[j]).max(x[j] - v.upper);
        }
        worst
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.vars.iter().zip(x).map(|(v, &xv)| v.obj * xv).sum()
    }
}

/// Appends the epigraph linearization of `weight * (x - center)^2` over
/// `[center - h, center + h]` and returns the epigraph variable (already in
/// the objective with coefficient one).
///
/// The grid is uniform with spacing `h/K`, giving `2K` chords; the chord
/// over-estimate of the quadratic is at most `weight * (h/K)^2 / 4`, exact at
/// the knots.
pub fn add_quadratic_penalty(inst: &mut MipInstance, term: PiecewiseConvexTerm) -> VarId {
    let PiecewiseConvexTerm { var, center, weight, half_width: h, segments: k, .. } = term;
    assert!(h > 0.0, "half-width must be positive");
    assert!(k >= 2, "need at least two segments per half-width");

    let e = inst.add_var(format!("{}_sq", inst.var(var).name.clone()), 0.0, f64::INFINITY);
    inst.add_objective(e, 1.0);

    let step = h / k as f64;
    for j in 0..2 * k {
        let t0 = center - h + step * j as f64;
        let t1 = t0 + step;
        let f0 = weight * (t0 - center) * (t0 - center);
        let f1 = weight * (t1 - center) * (t1 - center);
        let slope = (f1 - f0) / step;
        let intercept = f0 - slope * t0;
        // e >= slope * x + intercept
        inst.add_row(vec![(e, 1.0), (var, -slope)], RowSense::Ge, intercept);
    }

    inst.terms.push(PiecewiseConvexTerm { epigraph_var: e, ..term });
    e
}

/// Rows of the inner polygonal approximation of `P^2 + Q^2 <= s^2` with
/// `n_sides >= 8` sides: `(a, b, c)` meaning `a*P + b*Q <= c`.
///
/// Vertices lie on the circle (one at angle zero), so every feasible point
/// satisfies the true rating; the radial under-coverage is at most
/// `s * (1 - cos(pi/n))`.
pub fn polygonize_circle(s_rating: f64, n_sides: usize) -> Vec<(f64, f64, f64)> {
    assert!(n_sides >= 8, "polygon needs at least 8 sides");
    let apothem = s_rating * (std::f64::consts::PI / n_sides as f64).cos();
    (0..n_sides)
        .map(|i| {
            let mid = 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / n_sides as f64;
            (mid.cos(), mid.sin(), apothem)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epigraph_exact_at_knots() {
        // w=1, c=0, h=1, K=4: grid spacing 0.25, so x=0.5 is a knot and the
        // epigraph minimum there equals 0.25 exactly
        let mut inst = MipInstance::new("epi");
        let x = inst.add_var("x", 0.5, 0.5);
        let term = PiecewiseConvexTerm {
            var: x,
            center: 0.0,
            weight: 1.0,
            half_width: 1.0,
            segments: 4,
            epigraph_var: VarId(0),
        };
        add_quadratic_penalty(&mut inst, term);
        let sol = solve_lp(&inst).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - 0.25).abs() < 1e-9, "objective {}", sol.objective);
    }

    #[test]
    fn epigraph_zero_at_center() {
        let mut inst = MipInstance::new("epi0");
        let x = inst.add_var("x", 0.3, 0.3);
        let term = PiecewiseConvexTerm {
            var: x,
            center: 0.3,
            weight: 2.0,
            half_width: 0.5,
            segments: 8,
            epigraph_var: VarId(0),
        };
        add_quadratic_penalty(&mut inst, term);
        let sol = solve_lp(&inst).unwrap();
        assert!(sol.objective.abs() < 1e-10);
    }

    #[test]
    fn epigraph_error_bound_on_dense_grid() {
        // bound: max |e(x) - w(x-c)^2| <= w (h/K)^2 / 4
        for &(w, c, h, k) in &[(1.0, 0.0, 1.0, 4usize), (3.0, -0.2, 0.6, 5), (10.0, 1.5, 2.0, 16)] {
            let bound = w * (h / k as f64) * (h / k as f64) / 4.0;
            for i in 0..=400 {
                let x = c - h + 2.0 * h * i as f64 / 400.0;
                let mut inst = MipInstance::new("e");
                let xv = inst.add_var("x", x, x);
                add_quadratic_penalty(
                    &mut inst,
                    PiecewiseConvexTerm {
                        var: xv,
                        center: c,
                        weight: w,
                        half_width: h,
                        segments: k,
                        epigraph_var: VarId(0),
                    },
                );
                let sol = solve_lp(&inst).unwrap();
                let exact = w * (x - c) * (x - c);
                let err = sol.objective - exact;
                assert!(
                    err >= -1e-8 && err <= bound + 1e-8,
                    "w={w} c={c} h={h} K={k} x={x}: err {err} bound {bound}"
                );
            }
        }
    }

    #[test]
    fn polygon_vertex_and_apothem_geometry() {
        let s = 1.25;
        let rows = polygonize_circle(s, 8);
        let feasible = |p: f64, q: f64| rows.iter().all(|&(a, b, c)| a * p + b * q <= c + 1e-12);
        // vertex at angle zero is feasible
        assert!(feasible(s, 0.0));
        // point on an edge normal at the apothem radius is on the boundary;
        // epsilon beyond is infeasible
        let mid = std::f64::consts::PI * 0.5 / 8.0 * 2.0; // first edge normal angle 2*pi*0.5/8
        let r = s * (std::f64::consts::PI / 8.0).cos();
        assert!(feasible(r * mid.cos(), r * mid.sin()));
        assert!(!feasible((r + 1e-6) * mid.cos(), (r + 1e-6) * mid.sin()));
    }

    #[test]
    fn polygon_contained_in_circle() {
        // randomized containment sweep: polygon-feasible points satisfy the circle
        let s = 1.25;
        let rows = polygonize_circle(s, 64);
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut rnd = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut kept = 0usize;
        for _ in 0..1_000_000 {
            let p = (rnd() * 2.0 - 1.0) * s;
            let q = (rnd() * 2.0 - 1.0) * s;
            if rows.iter().all(|&(a, b, c)| a * p + b * q <= c) {
                kept += 1;
                assert!(p * p + q * q <= s * s + 1e-12);
            }
        }
        assert!(kept > 500_000);
    }

    #[test]
    fn validate_rejects_bad_instances() {
        let mut inst = MipInstance::new("bad");
        let x = inst.add_var("x", 0.0, 1.0);
        inst.add_row(vec![(x, f64::NAN)], RowSense::Le, 1.0);
        assert!(inst.validate().is_err());

        let mut inst2 = MipInstance::new("bad2");
        inst2.add_var("x", 2.0, 1.0);
        assert!(inst2.validate().is_err());
    }
}
