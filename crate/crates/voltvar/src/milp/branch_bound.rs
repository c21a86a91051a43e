//! Best-first branch-and-bound over binary variables.
//!
//! Branching variable: most fractional, ties broken by lowest index.  Node
//! pool ordered by parent bound, then node id, so identical instances explore
//! identical trees.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use super::simplex::{solve_lp_with_bounds, LpStatus};
use super::{MilpError, MipInstance, VarId};

const INT_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct MipConfig {
    /// Relative optimality gap at which the search stops.
    pub rel_gap: f64,
    pub max_nodes: usize,
    /// Wall-clock cap; `None` keeps the search fully deterministic.
    pub time_cap: Option<Duration>,
}

impl Default for MipConfig {
    fn default() -> Self {
        Self { rel_gap: 1e-6, max_nodes: 200_000, time_cap: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MipStatus {
    Optimal,
    Infeasible,
    /// A cap was hit; `values` holds the best incumbent.
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct MipSolution {
    pub status: MipStatus,
    pub values: Vec<f64>,
    pub objective: f64,
    pub nodes: usize,
    pub best_bound: f64,
}

struct Node {
    bound: f64,
    id: usize,
    lb: Vec<f64>,
    ub: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound && self.id == other.id
    }
}
impl Eq for Node {}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; invert for best(lowest)-bound-first,
        // oldest node first on ties
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn most_fractional(binaries: &[VarId], x: &[f64]) -> Option<(VarId, f64)> {
    let mut best: Option<(VarId, f64)> = None;
    for &b in binaries {
        let v = x[b.0];
        let frac = (v - v.round()).abs();
        if frac > INT_TOL {
            let score = (v - 0.5).abs(); // lower = more fractional
            match best {
                Some((_, s)) if s <= score => {}
                _ => best = Some((b, score)),
            }
        }
    }
    best
}

/// Solves the mixed-integer instance by branch-and-bound on its binaries.
pub fn solve_mip(inst: &MipInstance, config: &MipConfig) -> Result<MipSolution, MilpError> {
    inst.validate()?;
    let binaries = inst.binary_ids();
    let start = Instant::now();

    let lb0: Vec<f64> = inst.vars().iter().map(|v| v.lower).collect();
    let ub0: Vec<f64> = inst.vars().iter().map(|v| v.upper).collect();

    let mut heap = BinaryHeap::new();
    heap.push(Node { bound: f64::NEG_INFINITY, id: 0, lb: lb0, ub: ub0 });
    let mut next_id = 1usize;
    let mut nodes = 0usize;
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut capped = false;

    while let Some(node) = heap.pop() {
        // prune against the incumbent before paying for the LP
        if let Some((inc_obj, _)) = &incumbent {
            if node.bound >= inc_obj - config.rel_gap * inc_obj.abs().max(1.0) {
                continue;
            }
        }
        if nodes >= config.max_nodes
            || config.time_cap.map_or(false, |cap| start.elapsed() > cap)
        {
            capped = true;
            break;
        }
        nodes += 1;

        let lp = solve_lp_with_bounds(inst, &node.lb, &node.ub)?;
        match lp.status {
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => {
                return Err(MilpError::Malformed(
                    "relaxation is unbounded; bound the variables".into(),
                ))
            }
            LpStatus::IterationLimit => {
                capped = true;
                break;
            }
            LpStatus::Optimal => {}
        }
        if let Some((inc_obj, _)) = &incumbent {
            if lp.objective >= inc_obj - config.rel_gap * inc_obj.abs().max(1.0) {
                continue;
            }
        }
        match most_fractional(&binaries, &lp.x) {
            None => {
                // integer feasible
                let better = incumbent.as_ref().map_or(true, |(obj, _)| lp.objective < *obj);
                if better {
                    incumbent = Some((lp.objective, lp.x));
                }
            }
            Some((b, _)) => {
                let mut down = Node {
                    bound: lp.objective,
                    id: next_id,
                    lb: node.lb.clone(),
                    ub: node.ub.clone(),
                };
                down.ub[b.0] = 0.0;
                next_id += 1;
                let mut up =
                    Node { bound: lp.objective, id: next_id, lb: node.lb, ub: node.ub };
                up.lb[b.0] = 1.0;
                next_id += 1;
                heap.push(down);
                heap.push(up);
            }
        }
    }

    let best_bound = heap
        .iter()
        .map(|n| n.bound)
        .fold(incumbent.as_ref().map_or(f64::INFINITY, |(o, _)| *o), f64::min);

    match incumbent {
        Some((objective, values)) => Ok(MipSolution {
            status: if capped { MipStatus::IterationLimit } else { MipStatus::Optimal },
            values,
            objective,
            nodes,
            best_bound,
        }),
        None if capped => Err(MilpError::NoIncumbent),
        None => Ok(MipSolution {
            status: MipStatus::Infeasible,
            values: Vec::new(),
            objective: f64::INFINITY,
            nodes,
            best_bound,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{solve_lp, RowSense};

    fn knapsack(values: &[f64], weights: &[f64], cap: f64) -> MipInstance {
        let mut inst = MipInstance::new("knap");
        let mut row = Vec::new();
        for (i, (&v, &w)) in values.iter().zip(weights).enumerate() {
            let b = inst.add_binary(format!("b{i}"));
            inst.set_objective(b, -v); // maximize value
            row.push((b, w));
        }
        inst.add_row(row, RowSense::Le, cap);
        inst
    }

    fn enumerate_best(inst: &MipInstance) -> Option<f64> {
        let bins = inst.binary_ids();
        let mut best: Option<f64> = None;
        for mask in 0..(1u32 << bins.len()) {
            let mut fixed = inst.clone();
            for (k, &b) in bins.iter().enumerate() {
                let v = if mask >> k & 1 == 1 { 1.0 } else { 0.0 };
                fixed.set_bounds(b, v, v);
            }
            let lp = solve_lp(&fixed).unwrap();
            if lp.status == LpStatus::Optimal {
                best = Some(best.map_or(lp.objective, |b: f64| b.min(lp.objective)));
            }
        }
        best
    }

    #[test]
    fn knapsack_matches_enumeration() {
        let inst = knapsack(
            &[10.0, 13.0, 7.0, 8.0, 12.0, 4.0, 6.0, 9.0],
            &[5.0, 7.0, 3.0, 4.0, 6.0, 2.0, 3.0, 5.0],
            17.0,
        );
        let mip = solve_mip(&inst, &MipConfig::default()).unwrap();
        assert_eq!(mip.status, MipStatus::Optimal);
        let brute = enumerate_best(&inst).unwrap();
        assert!((mip.objective - brute).abs() < 1e-6, "mip {} brute {}", mip.objective, brute);
    }

    #[test]
    fn fixed_binaries_equal_lp() {
        let mut inst = knapsack(&[3.0, 5.0], &[2.0, 4.0], 6.0);
        for b in inst.binary_ids() {
            inst.set_bounds(b, 1.0, 1.0);
        }
        let mip = solve_mip(&inst, &MipConfig::default()).unwrap();
        let lp = solve_lp(&inst).unwrap();
        assert_eq!(mip.status, MipStatus::Optimal);
        assert!((mip.objective - lp.objective).abs() < 1e-9);
    }

    #[test]
    fn integer_infeasible_with_feasible_relaxation() {
        // x1 + x2 = 1.5 has no binary solution but a fractional one
        let mut inst = MipInstance::new("t");
        let x1 = inst.add_binary("x1");
        let x2 = inst.add_binary("x2");
        inst.add_row(vec![(x1, 1.0), (x2, 1.0)], RowSense::Eq, 1.5);
        assert_eq!(solve_lp(&inst).unwrap().status, LpStatus::Optimal);
        let mip = solve_mip(&inst, &MipConfig::default()).unwrap();
        assert_eq!(mip.status, MipStatus::Infeasible);
    }

    #[test]
    fn mixed_continuous_binary() {
        // min -2 b1 - b2 - 1.5 y  s.t. b1 + y <= 1.2, b2 + y <= 1.0, 0<=y<=1
        let mut inst = MipInstance::new("mix");
        let b1 = inst.add_binary("b1");
        let b2 = inst.add_binary("b2");
        let y = inst.add_var("y", 0.0, 1.0);
        inst.set_objective(b1, -2.0);
        inst.set_objective(b2, -1.0);
        inst.set_objective(y, -1.5);
        inst.add_row(vec![(b1, 1.0), (y, 1.0)], RowSense::Le, 1.2);
        inst.add_row(vec![(b2, 1.0), (y, 1.0)], RowSense::Le, 1.0);
        let mip = solve_mip(&inst, &MipConfig::default()).unwrap();
        assert_eq!(mip.status, MipStatus::Optimal);
        let brute = enumerate_best(&inst).unwrap();
        assert!((mip.objective - brute).abs() < 1e-6);
    }

    #[test]
    fn deterministic_solution_bytes() {
        let inst = knapsack(
            &[10.0, 13.0, 7.0, 8.0, 12.0, 4.0],
            &[5.0, 7.0, 3.0, 4.0, 6.0, 2.0],
            13.0,
        );
        let a = solve_mip(&inst, &MipConfig::default()).unwrap();
        let b = solve_mip(&inst, &MipConfig::default()).unwrap();
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
        let ab: Vec<u64> = a.values.iter().map(|v| v.to_bits()).collect();
        let bb: Vec<u64> = b.values.iter().map(|v| v.to_bits()).collect();
        assert_eq!(ab, bb);
        assert_eq!(a.nodes, b.nodes);
    }
}
