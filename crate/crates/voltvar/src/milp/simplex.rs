//! Bounded-variable primal simplex with an explicit dense tableau.
//!
//! Two phases: artificial variables are introduced only for rows whose slack
//! cannot absorb the initial residual, and phase one drives their sum to
//! zero.  Pricing is Dantzig (most negative reduced cost, lowest index on
//! ties) with a permanent-until-progress switch to Bland's rule after a run
//! of degenerate pivots, which guarantees termination.  All choices are
//! index-based, so identical instances produce identical solutions.

use super::{MilpError, MipInstance, RowSense};

const FEAS_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-11;
const PIVOT_PREF: f64 = 1e-7;
const RATIO_TIE: f64 = 1e-9;
const DEGENERATE_STREAK: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Values of the structural variables.
    pub x: Vec<f64>,
    pub objective: f64,
    /// Dual value per row.
    pub duals: Vec<f64>,
    /// Reduced cost per structural variable.
    pub reduced_costs: Vec<f64>,
    pub iterations: usize,
}

impl LpSolution {
    /// Dual objective `b'y + l'd_L + u'd_U`; equals the primal objective at
    /// optimality of a bounded-variable LP.
    pub fn dual_objective(&self, inst: &MipInstance) -> f64 {
        let mut z: f64 = inst.rows().iter().zip(&self.duals).map(|(r, &y)| r.rhs * y).sum();
        for (j, v) in inst.vars().iter().enumerate() {
            let d = self.reduced_costs[j];
            if d > COST_TOL && v.lower.is_finite() {
                z += d * v.lower;
            } else if d < -COST_TOL && v.upper.is_finite() {
                z += d * v.upper;
            }
        }
        z
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum VarState {
    Basic(usize),
    AtLower,
    AtUpper,
    /// Free variable resting at zero.
    FreeZero,
}

struct Tableau {
    m: usize,
    ncols: usize,
    nstruct: usize,
    /// `m x (ncols+1)` working matrix; last column is `B^{-1} b`.
    t: Vec<Vec<f64>>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    obj: Vec<f64>,
    state: Vec<VarState>,
    basis: Vec<usize>,
    value: Vec<f64>,
    zrow: Vec<f64>,
    bland: bool,
    degen: usize,
    iterations: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.t[i][self.ncols]
    }

    fn nonbasic_resting_value(&self, j: usize) -> f64 {
        match self.state[j] {
            VarState::AtLower => self.lb[j],
            VarState::AtUpper => self.ub[j],
            VarState::FreeZero => 0.0,
            VarState::Basic(_) => unreachable!(),
        }
    }

    fn is_fixed(&self, j: usize) -> bool {
        self.lb[j].is_finite() && self.ub[j].is_finite() && self.ub[j] - self.lb[j] <= 0.0
    }

    /// Rebuilds the reduced-cost row `d_j = c_j - c_B' B^{-1} A_j` for the
    /// current objective.
    fn rebuild_zrow(&mut self) {
        self.zrow = self.obj.clone();
        for i in 0..self.m {
            let cb = self.obj[self.basis[i]];
            if cb != 0.0 {
                for j in 0..self.ncols {
                    self.zrow[j] -= cb * self.t[i][j];
                }
            }
        }
        for i in 0..self.m {
            self.zrow[self.basis[i]] = 0.0;
        }
    }

    fn entering(&self) -> Option<(usize, i8, f64)> {
        let mut best: Option<(usize, i8, f64)> = None;
        for j in 0..self.ncols {
            if matches!(self.state[j], VarState::Basic(_)) || self.is_fixed(j) {
                continue;
            }
            let d = self.zrow[j];
            let dir: i8 = match self.state[j] {
                VarState::AtLower if d < -COST_TOL => 1,
                VarState::AtUpper if d > COST_TOL => -1,
                VarState::FreeZero if d < -COST_TOL => 1,
                VarState::FreeZero if d > COST_TOL => -1,
                _ => continue,
            };
            if self.bland {
                return Some((j, dir, d.abs()));
            }
            match best {
                Some((_, _, mag)) if mag >= d.abs() => {}
                _ => best = Some((j, dir, d.abs())),
            }
        }
        best
    }

    /// Ratio test for entering column `j` moving in direction `dir`.
    /// Returns `(step, limiting row or None for a bound flip)`.
    fn ratio_test(&self, j: usize, dir: i8) -> Result<Option<(f64, Option<usize>)>, MilpError> {
        let d = dir as f64;
        let mut best_step = f64::INFINITY;
        // entering variable can traverse to its opposite bound
        let span = self.ub[j] - self.lb[j];
        if span.is_finite() {
            best_step = span;
        }
        let mut limit_rows: Vec<(usize, f64)> = Vec::new();
        for i in 0..self.m {
            let y = self.t[i][j];
            // coefficients at pivot-noise scale are treated as zero
            if y.abs() <= PIVOT_TOL {
                continue;
            }
            let b = self.basis[i];
            let rate = -d * y; // basic value change per unit step
            let room = if rate < 0.0 {
                if self.lb[b].is_finite() {
                    (self.value[b] - self.lb[b]) / -rate
                } else {
                    continue;
                }
            } else if self.ub[b].is_finite() {
                (self.ub[b] - self.value[b]) / rate
            } else {
                continue;
            };
            let room = room.max(0.0);
            if room < best_step - RATIO_TIE {
                best_step = room;
                limit_rows.clear();
                limit_rows.push((i, y.abs()));
            } else if room <= best_step + RATIO_TIE {
                limit_rows.push((i, y.abs()));
            }
        }
        if best_step.is_infinite() {
            return Ok(None); // unbounded direction
        }
        if limit_rows.is_empty() {
            // bound-to-bound flip
            return Ok(Some((best_step, None)));
        }
        let row = if self.bland {
            // smallest basic-variable index among the tied rows
            limit_rows
                .iter()
                .filter(|&&(_, mag)| mag > PIVOT_TOL)
                .min_by_key(|&&(i, _)| self.basis[i])
                .map(|&(i, _)| i)
        } else {
            // largest pivot magnitude among the tied rows, lowest row on ties
            limit_rows
                .iter()
                .filter(|&&(_, mag)| mag > PIVOT_PREF)
                .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(b.0.cmp(&a.0)))
                .or_else(|| {
                    limit_rows
                        .iter()
                        .filter(|&&(_, mag)| mag > PIVOT_TOL)
                        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(b.0.cmp(&a.0)))
                })
                .map(|&(i, _)| i)
        };
        match row {
            Some(i) => Ok(Some((best_step, Some(i)))),
            None => Err(MilpError::NumericalFailure {
                pivot: limit_rows.iter().map(|&(_, m)| m).fold(0.0, f64::max),
            }),
        }
    }

    fn apply_step(&mut self, j: usize, dir: i8, step: f64, leaving: Option<usize>) {
        let d = dir as f64;
        if step > 0.0 {
            for i in 0..self.m {
                let y = self.t[i][j];
                if y != 0.0 {
                    let b = self.basis[i];
                    self.value[b] -= d * y * step;
                }
            }
            self.value[j] += d * step;
        }
        match leaving {
            None => {
                // bound flip: basis unchanged
                self.state[j] = if dir > 0 { VarState::AtUpper } else { VarState::AtLower };
            }
            Some(r) => {
                let out = self.basis[r];
                // leaving variable rests at the bound it hit
                let rate = -d * self.t[r][j];
                self.state[out] = if rate < 0.0 { VarState::AtLower } else { VarState::AtUpper };
                // snap to the exact bound to stop drift
                self.value[out] = match self.state[out] {
                    VarState::AtLower => self.lb[out],
                    _ => self.ub[out],
                };
                self.pivot(r, j);
                self.state[j] = VarState::Basic(r);
                self.basis[r] = j;
            }
        }
        if step <= 1e-12 {
            self.degen += 1;
            if self.degen > DEGENERATE_STREAK {
                self.bland = true;
            }
        } else {
            self.degen = 0;
            self.bland = false;
        }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let piv = self.t[r][c];
        let inv = 1.0 / piv;
        // eliminate via the pivot row's nonzero pattern only; constraint
        // rows stay sparse enough that this dominates a full dense sweep
        let mut nz: Vec<usize> = Vec::with_capacity(64);
        for (j, v) in self.t[r].iter_mut().enumerate() {
            if *v != 0.0 {
                *v *= inv;
                nz.push(j);
            }
        }
        let (before, rest) = self.t.split_at_mut(r);
        let (row, after) = rest.split_first_mut().unwrap();
        for other in before.iter_mut().chain(after.iter_mut()) {
            let f = other[c];
            if f != 0.0 {
                for &j in &nz {
                    other[j] -= f * row[j];
                }
                other[c] = 0.0;
            }
        }
        let f = self.zrow[c];
        if f != 0.0 {
            for &j in &nz {
                if j < self.ncols {
                    self.zrow[j] -= f * row[j];
                }
            }
            self.zrow[c] = 0.0;
        }
    }

    fn optimize(&mut self, max_iters: usize) -> Result<LpStatus, MilpError> {
        loop {
            if self.iterations >= max_iters {
                return Ok(LpStatus::IterationLimit);
            }
            let Some((j, dir, _)) = self.entering() else {
                return Ok(LpStatus::Optimal);
            };
            match self.ratio_test(j, dir)? {
                None => return Ok(LpStatus::Unbounded),
                Some((step, leaving)) => self.apply_step(j, dir, step, leaving),
            }
            self.iterations += 1;
        }
    }

    /// Recomputes basic values exactly from the tableau and resting
    /// non-basic values, eliminating incremental drift.
    fn refresh_values(&mut self) {
        let mut acc = vec![0.0; self.m];
        for j in 0..self.ncols {
            if matches!(self.state[j], VarState::Basic(_)) {
                continue;
            }
            let xj = self.nonbasic_resting_value(j);
            self.value[j] = xj;
            if xj != 0.0 {
                for i in 0..self.m {
                    let y = self.t[i][j];
                    if y != 0.0 {
                        acc[i] += y * xj;
                    }
                }
            }
        }
        for i in 0..self.m {
            self.value[self.basis[i]] = self.rhs(i) - acc[i];
        }
    }
}

/// Solves the LP relaxation of `inst` (binaries relaxed to their bounds).
pub fn solve_lp(inst: &MipInstance) -> Result<LpSolution, MilpError> {
    inst.validate()?;
    let lb: Vec<f64> = inst.vars().iter().map(|v| v.lower).collect();
    let ub: Vec<f64> = inst.vars().iter().map(|v| v.upper).collect();
    solve_lp_with_bounds(inst, &lb, &ub)
}

/// Solves the LP relaxation with overridden structural bounds (used by
/// branch-and-bound to explore nodes without cloning the instance).
pub(super) fn solve_lp_with_bounds(
    inst: &MipInstance,
    var_lb: &[f64],
    var_ub: &[f64],
) -> Result<LpSolution, MilpError> {
    let nstruct = inst.num_vars();
    let m = inst.num_rows();
    let nslack = m;

    // column layout: structural | slack | artificial
    let mut lb: Vec<f64> = var_lb.to_vec();
    let mut ub: Vec<f64> = var_ub.to_vec();
    for r in inst.rows() {
        let (l, u) = match r.sense {
            RowSense::Le => (0.0, f64::INFINITY),
            RowSense::Ge => (f64::NEG_INFINITY, 0.0),
            RowSense::Eq => (0.0, 0.0),
        };
        lb.push(l);
        ub.push(u);
    }

    // resting states for structural and slack columns
    let mut state: Vec<VarState> = (0..nstruct + nslack)
        .map(|j| {
            if lb[j].is_finite() {
                VarState::AtLower
            } else if ub[j].is_finite() {
                VarState::AtUpper
            } else {
                VarState::FreeZero
            }
        })
        .collect();

    let mut value = vec![0.0; nstruct + nslack];
    for j in 0..nstruct + nslack {
        value[j] = match state[j] {
            VarState::AtLower => lb[j],
            VarState::AtUpper => ub[j],
            _ => 0.0,
        };
    }

    // initial residual per row given resting structurals; decide slack-basic
    // versus artificial-basic
    let mut rows_dense: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut art_cols: Vec<(usize, f64)> = Vec::new(); // (row, sign)
    let mut t: Vec<Vec<f64>> = Vec::with_capacity(m);
    for (i, r) in inst.rows().iter().enumerate() {
        let mut dense = vec![0.0; nstruct + nslack];
        for &(vid, c) in &r.coeffs {
            dense[vid.0] += c;
        }
        dense[nstruct + i] = 1.0;
        let ax: f64 = (0..nstruct).map(|j| dense[j] * value[j]).sum();
        let resid = r.rhs - ax;
        let sj = nstruct + i;
        if resid >= lb[sj] - FEAS_TOL && resid <= ub[sj] + FEAS_TOL {
            // slack absorbs the residual
            state[sj] = VarState::Basic(i);
            value[sj] = resid.clamp(lb[sj].max(f64::MIN), ub[sj].min(f64::MAX));
            basis.push(sj);
        } else {
            // clamp slack to its nearest bound; artificial carries the rest
            let s0 = resid.clamp(lb[sj], ub[sj]);
            let s0 = if s0.is_finite() { s0 } else { 0.0 };
            state[sj] = if s0 == lb[sj] { VarState::AtLower } else { VarState::AtUpper };
            value[sj] = s0;
            let sign = if resid - s0 >= 0.0 { 1.0 } else { -1.0 };
            art_cols.push((i, sign));
            basis.push(usize::MAX); // patched below
        }
        rows_dense.push(dense);
    }

    let nart = art_cols.len();
    let ncols = nstruct + nslack + nart;
    for (k, &(i, sign)) in art_cols.iter().enumerate() {
        let aj = nstruct + nslack + k;
        lb.push(0.0);
        ub.push(f64::INFINITY);
        state.push(VarState::Basic(i));
        basis[i] = aj;
        let _ = sign;
        value.push(0.0);
    }

    for (i, dense) in rows_dense.into_iter().enumerate() {
        let mut full = dense;
        full.resize(ncols + 1, 0.0);
        full[ncols] = inst.rows()[i].rhs;
        t.push(full);
    }
    for (k, &(i, sign)) in art_cols.iter().enumerate() {
        let aj = nstruct + nslack + k;
        t[i][aj] = sign;
        if sign < 0.0 {
            // scale the row so the basic artificial column is +1
            for v in t[i].iter_mut() {
                *v = -*v;
            }
        }
        // artificial basic value = |residual beyond the slack bound|
        let ax: f64 = (0..nstruct + nslack)
            .filter(|&j| !matches!(state[j], VarState::Basic(_)))
            .map(|j| {
                let xv = match state[j] {
                    VarState::AtLower => lb[j],
                    VarState::AtUpper => ub[j],
                    _ => 0.0,
                };
                // use pre-scaling coefficients via the scaled row: t*x
                t[i][j] * xv
            })
            .sum();
        value[aj] = t[i][ncols] - ax;
    }

    let mut tab = Tableau {
        m,
        ncols,
        nstruct,
        t,
        lb,
        ub,
        obj: vec![0.0; ncols],
        state,
        basis,
        value,
        zrow: vec![0.0; ncols],
        bland: false,
        degen: 0,
        iterations: 0,
    };

    let max_iters = 20_000 + 100 * (m + nstruct);

    // phase 1
    if nart > 0 {
        for k in 0..nart {
            tab.obj[nstruct + nslack + k] = 1.0;
        }
        tab.rebuild_zrow();
        let st = tab.optimize(max_iters)?;
        if st == LpStatus::IterationLimit {
            return Ok(iteration_limit_solution(inst, &tab));
        }
        let infeas: f64 = (0..nart).map(|k| tab.value[nstruct + nslack + k].max(0.0)).sum();
        if infeas > 1e-7 {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                x: tab.value[..nstruct].to_vec(),
                objective: f64::INFINITY,
                duals: vec![0.0; m],
                reduced_costs: vec![0.0; nstruct],
                iterations: tab.iterations,
            });
        }
        // freeze artificials at zero for phase 2
        for k in 0..nart {
            let aj = nstruct + nslack + k;
            tab.lb[aj] = 0.0;
            tab.ub[aj] = 0.0;
            tab.obj[aj] = 0.0;
            if !matches!(tab.state[aj], VarState::Basic(_)) {
                tab.state[aj] = VarState::AtLower;
                tab.value[aj] = 0.0;
            }
        }
    }

    // phase 2
    for j in 0..nstruct {
        tab.obj[j] = inst.vars()[j].obj;
    }
    tab.bland = false;
    tab.degen = 0;
    tab.rebuild_zrow();
    let st = tab.optimize(max_iters)?;
    match st {
        LpStatus::Optimal => {
            tab.refresh_values();
            let x = tab.value[..nstruct].to_vec();
            let objective = inst.objective_value(&x);
            let duals: Vec<f64> = (0..m).map(|i| -tab.zrow[nstruct + i]).collect();
            let reduced_costs = tab.zrow[..nstruct].to_vec();
            Ok(LpSolution {
                status: LpStatus::Optimal,
                x,
                objective,
                duals,
                reduced_costs,
                iterations: tab.iterations,
            })
        }
        LpStatus::Unbounded => Ok(LpSolution {
            status: LpStatus::Unbounded,
            x: tab.value[..nstruct].to_vec(),
            objective: f64::NEG_INFINITY,
            duals: vec![0.0; m],
            reduced_costs: vec![0.0; nstruct],
            iterations: tab.iterations,
        }),
        LpStatus::IterationLimit => Ok(iteration_limit_solution(inst, &tab)),
        LpStatus::Infeasible => unreachable!(),
    }
}

fn iteration_limit_solution(inst: &MipInstance, tab: &Tableau) -> LpSolution {
    LpSolution {
        status: LpStatus::IterationLimit,
        x: tab.value[..tab.nstruct].to_vec(),
        objective: inst.objective_value(&tab.value[..tab.nstruct]),
        duals: vec![0.0; tab.m],
        reduced_costs: vec![0.0; tab.nstruct],
        iterations: tab.iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::VarId;

    #[test]
    fn min_x_with_lower_row() {
        // min x s.t. x >= 3
        let mut inst = MipInstance::new("t");
        let x = inst.add_var("x", 0.0, f64::INFINITY);
        inst.set_objective(x, 1.0);
        inst.add_row(vec![(x, 1.0)], RowSense::Ge, 3.0);
        let s = solve_lp(&inst).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 3.0).abs() < 1e-9);
        assert!((s.objective - 3.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_row_pair() {
        let mut inst = MipInstance::new("t");
        let x = inst.add_var("x", f64::NEG_INFINITY, f64::INFINITY);
        inst.add_row(vec![(x, 1.0)], RowSense::Le, 1.0);
        inst.add_row(vec![(x, 1.0)], RowSense::Ge, 2.0);
        let s = solve_lp(&inst).unwrap();
        assert_eq!(s.status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_detected() {
        let mut inst = MipInstance::new("t");
        let x = inst.add_var("x", f64::NEG_INFINITY, f64::INFINITY);
        inst.set_objective(x, 1.0);
        inst.add_row(vec![(x, 1.0)], RowSense::Le, 5.0);
        let s = solve_lp(&inst).unwrap();
        assert_eq!(s.status, LpStatus::Unbounded);
    }

    #[test]
    fn beale_cycling_example_terminates() {
        // classic degenerate instance that cycles under naive Dantzig
        // pivoting; optimum is -0.05 at x1=0.04, x3=1 (hand-checked)
        let mut inst = MipInstance::new("beale");
        let x1 = inst.add_var("x1", 0.0, f64::INFINITY);
        let x2 = inst.add_var("x2", 0.0, f64::INFINITY);
        let x3 = inst.add_var("x3", 0.0, f64::INFINITY);
        let x4 = inst.add_var("x4", 0.0, f64::INFINITY);
        inst.set_objective(x1, -0.75);
        inst.set_objective(x2, 150.0);
        inst.set_objective(x3, -0.02);
        inst.set_objective(x4, 6.0);
        inst.add_row(vec![(x1, 0.25), (x2, -60.0), (x3, -0.04), (x4, 9.0)], RowSense::Le, 0.0);
        inst.add_row(vec![(x1, 0.5), (x2, -90.0), (x3, -0.02), (x4, 3.0)], RowSense::Le, 0.0);
        inst.add_row(vec![(x3, 1.0)], RowSense::Le, 1.0);
        let s = solve_lp(&inst).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - (-0.05)).abs() < 1e-9, "objective {}", s.objective);
    }

    #[test]
    fn equality_rows_and_bounded_vars() {
        // min -x - 2y s.t. x + y = 1, 0 <= x <= 0.7, 0 <= y <= 0.6
        let mut inst = MipInstance::new("t");
        let x = inst.add_var("x", 0.0, 0.7);
        let y = inst.add_var("y", 0.0, 0.6);
        inst.set_objective(x, -1.0);
        inst.set_objective(y, -2.0);
        inst.add_row(vec![(x, 1.0), (y, 1.0)], RowSense::Eq, 1.0);
        let s = solve_lp(&inst).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[1] - 0.6).abs() < 1e-9);
        assert!((s.x[0] - 0.4).abs() < 1e-9);
    }

    #[test]
    fn negative_bounds_and_free_vars() {
        // min y s.t. y >= x - 2, y >= -x, x free
        let mut inst = MipInstance::new("t");
        let x = inst.add_var("x", f64::NEG_INFINITY, f64::INFINITY);
        let y = inst.add_var("y", f64::NEG_INFINITY, f64::INFINITY);
        inst.set_objective(y, 1.0);
        inst.add_row(vec![(y, 1.0), (x, -1.0)], RowSense::Ge, -2.0);
        inst.add_row(vec![(y, 1.0), (x, 1.0)], RowSense::Ge, 0.0);
        let s = solve_lp(&inst).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - (-1.0)).abs() < 1e-8, "objective {}", s.objective);
        assert!((s.x[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn duality_gap_zero_on_random_instances() {
        let mut seed = 0x5eed5eedu64;
        let mut rnd = move || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        for case in 0..40 {
            let n = 3 + (case % 5);
            let m = 2 + (case % 4);
            let mut inst = MipInstance::new("rnd");
            let mut ids = Vec::new();
            for j in 0..n {
                let lo = -1.0 - rnd();
                let hi = 1.0 + rnd();
                let v = inst.add_var(format!("x{j}"), lo, hi);
                inst.set_objective(v, rnd() * 4.0 - 2.0);
                ids.push(v);
            }
            for _ in 0..m {
                let coeffs: Vec<(VarId, f64)> =
                    ids.iter().map(|&v| (v, rnd() * 2.0 - 1.0)).collect();
                // rhs chosen so the resting origin is comfortably feasible
                inst.add_row(coeffs, RowSense::Le, 2.0 + rnd() * 3.0);
            }
            let s = solve_lp(&inst).unwrap();
            assert_eq!(s.status, LpStatus::Optimal, "case {case}");
            let gap = (s.objective - s.dual_objective(&inst)).abs();
            assert!(gap < 1e-7, "case {case}: duality gap {gap}");
        }
    }

    #[test]
    fn deterministic_repeat_solve() {
        let mut inst = MipInstance::new("det");
        let x = inst.add_var("x", 0.0, 10.0);
        let y = inst.add_var("y", 0.0, 10.0);
        inst.set_objective(x, -1.0);
        inst.set_objective(y, -1.3);
        inst.add_row(vec![(x, 2.0), (y, 1.0)], RowSense::Le, 10.0);
        inst.add_row(vec![(x, 1.0), (y, 3.0)], RowSense::Le, 15.0);
        let a = solve_lp(&inst).unwrap();
        let b = solve_lp(&inst).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    }
}
