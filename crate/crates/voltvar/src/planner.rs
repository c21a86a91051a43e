//! Two-stage placement model: first-stage binaries choose which candidate
//! inverters get the Volt-VAr upgrade, per-scenario second stages replicate
//! the linearized network with droop-curve and rating constraints, and an
//! outer loop re-expands the Taylor point at the simulated operating point
//! until the model voltages agree with the nonlinear oracle.
//!
//! Extensive-form size per scenario, with `N` node-phases, `L` branch
//! phases, `C` candidates, `Psub` substation phases, `K` epigraph chords per
//! half-width and `n` polygon sides:
//!
//! - columns: `5N + 2L + 4Psub + 20C` plus `C + 2Psub` epigraph variables
//! - rows: `2L + 5N + C(14 + n) + 2K(C + 2Psub)`
//!
//! plus the `C` first-stage binaries (one per candidate bus when placement
//! is aggregated per customer).

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::feeder::{Feeder, FeederError, Phase, PhaseNodeId, Scenario};
use crate::milp::{
    add_quadratic_penalty, polygonize_circle, solve_mip, MilpError, MipConfig, MipInstance,
    MipStatus, PiecewiseConvexTerm, RowSense, VarId,
};
use crate::powerflow::{
    linearize_at, voltage_magnitude_linear, LinearizationPoint, Network, PowerFlowError,
    PowerFlowSolution, C64,
};
use crate::qvcurve;
use crate::sim::{volt_var_fixed_point, SimError};

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("model assembly failed: {0}")]
    ModelAssembly(String),
    #[error("voltage bounds unreachable even with all candidates placed; worst node {node} at {vmag:.4} pu (bound {bound})")]
    InfeasiblePlacement { node: String, vmag: f64, bound: f64 },
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Feeder(#[from] FeederError),
    #[error("plan parse error at line {line}: {msg}")]
    PlanParse { line: usize, msg: String },
}

#[derive(Debug, Clone)]
pub struct PlannerConfig {
    /// First-stage weight per placed inverter (per candidate bus when
    /// aggregated).
    pub w_c: f64,
    /// Outer-loop stop: max per-node gap between model and simulated
    /// voltage magnitudes (pu).
    pub eps_lin: f64,
    pub max_outer: usize,
    pub mip_gap: f64,
    pub mip_node_cap: usize,
    /// Epigraph chords per half-width for each quadratic objective term.
    pub k_segments: usize,
    /// Sides of the inner polygon standing in for the rating circle.
    pub n_sides: usize,
    /// Planning margin subtracted from the voltage limits so the plan holds
    /// under the nonlinear oracle within the linearization tolerance.
    pub bound_guard: f64,
    /// Share one placement decision across all candidate node-phases of a
    /// bus (per-customer aggregation).
    pub aggregate_per_bus: bool,
    /// Damping for the verification fixed point.
    pub alpha: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            w_c: 1.0,
            eps_lin: 5e-4,
            max_outer: 10,
            mip_gap: 1e-6,
            mip_node_cap: 50_000,
            k_segments: 16,
            n_sides: 32,
            bound_guard: 1e-3,
            aggregate_per_bus: false,
            alpha: 0.5,
        }
    }
}

/// Variable handles for one scenario block.
pub struct ScenarioVars {
    pub vr: Vec<VarId>,
    pub vim: Vec<VarId>,
    pub vm: Vec<VarId>,
    pub iinj_r: Vec<VarId>,
    pub iinj_im: Vec<VarId>,
    /// Per branch, per phase position.
    pub ir: Vec<Vec<VarId>>,
    pub iim: Vec<Vec<VarId>>,
    /// Per candidate.
    pub on: Vec<VarId>,
    pub p: Vec<VarId>,
    pub q: Vec<VarId>,
    pub qqv: Vec<VarId>,
    /// Substation injection per slack node: (node index, P var, Q var).
    pub sub: Vec<(usize, VarId, VarId)>,
}

pub struct ExtensiveForm {
    pub instance: MipInstance,
    /// Candidate PV ids in feeder order.
    pub candidates: Vec<String>,
    /// First-stage binary per candidate (bus-aggregated candidates share
    /// one variable).
    pub x_pv: Vec<VarId>,
    pub scenario_vars: Vec<ScenarioVars>,
}

const V_RECT_BOUND: f64 = 1.6;
const I_BOUND: f64 = 25.0;

/// Assembles the extensive form over the given scenarios and per-scenario
/// linearization points.
pub fn build_extensive_form(
    network: &Network,
    scenarios: &[Scenario],
    lin: &[LinearizationPoint],
    config: &PlannerConfig,
) -> Result<ExtensiveForm, PlannerError> {
    if scenarios.len() != lin.len() {
        return Err(PlannerError::ModelAssembly(format!(
            "{} scenarios but {} linearization points",
            scenarios.len(),
            lin.len()
        )));
    }
    let feeder = &network.feeder;
    let n = network.node_count();
    let sb = feeder.s_base_kva;
    let candidates: Vec<&crate::feeder::PVUnit> = feeder.candidates();

    let mut inst = MipInstance::new("placement");

    // first stage: one binary per candidate, or per candidate bus
    let mut x_pv: Vec<VarId> = Vec::with_capacity(candidates.len());
    if config.aggregate_per_bus {
        let mut by_bus: BTreeMap<String, VarId> = BTreeMap::new();
        for c in &candidates {
            let v = *by_bus.entry(c.node.bus.clone()).or_insert_with(|| {
                let v = inst.add_binary(format!("x_{}", c.node.bus));
                inst.add_objective(v, config.w_c);
                v
            });
            x_pv.push(v);
        }
    } else {
        for c in &candidates {
            let v = inst.add_binary(format!("x_{}", c.id));
            inst.add_objective(v, config.w_c);
            x_pv.push(v);
        }
    }

    let vm_lo = feeder.v_min + config.bound_guard;
    let vm_hi = feeder.v_max - config.bound_guard;
    if vm_lo >= vm_hi {
        return Err(PlannerError::ModelAssembly(format!(
            "bound guard {} leaves an empty voltage window",
            config.bound_guard
        )));
    }

    let mut scenario_vars = Vec::with_capacity(scenarios.len());
    for (s_idx, scen) in scenarios.iter().enumerate() {
        let lp = &lin[s_idx];
        let tag = format!("s{s_idx}");
        for v in &lp.v_hat {
            if v.norm() < 0.1 {
                return Err(PlannerError::ModelAssembly(format!(
                    "linearization point for scenario {} has a degenerate voltage",
                    scen.id
                )));
            }
        }

        // voltage / current variables
        let vr: Vec<VarId> = (0..n)
            .map(|i| inst.add_var(format!("{tag}_vr{i}"), -V_RECT_BOUND, V_RECT_BOUND))
            .collect();
        let vim: Vec<VarId> = (0..n)
            .map(|i| inst.add_var(format!("{tag}_vi{i}"), -V_RECT_BOUND, V_RECT_BOUND))
            .collect();
        let vm: Vec<VarId> =
            (0..n).map(|i| inst.add_var(format!("{tag}_vm{i}"), vm_lo, vm_hi)).collect();
        let iinj_r: Vec<VarId> =
            (0..n).map(|i| inst.add_var(format!("{tag}_jr{i}"), -I_BOUND, I_BOUND)).collect();
        let iinj_im: Vec<VarId> =
            (0..n).map(|i| inst.add_var(format!("{tag}_ji{i}"), -I_BOUND, I_BOUND)).collect();
        let mut ir = Vec::new();
        let mut iim = Vec::new();
        for (b, br) in network.branches.iter().enumerate() {
            let d = br.phases.len();
            ir.push(
                (0..d)
                    .map(|k| inst.add_var(format!("{tag}_ir{b}_{k}"), -I_BOUND, I_BOUND))
                    .collect::<Vec<_>>(),
            );
            iim.push(
                (0..d)
                    .map(|k| inst.add_var(format!("{tag}_ii{b}_{k}"), -I_BOUND, I_BOUND))
                    .collect::<Vec<_>>(),
            );
        }

        // line-flow rows: dV = Z (I - j y_half V_from)
        for (b, br) in network.branches.iter().enumerate() {
            let d = br.phases.len();
            for pp in 0..d {
                let mut real: Vec<(VarId, f64)> = Vec::new();
                let mut imag: Vec<(VarId, f64)> = Vec::new();
                real.push((vr[br.from_nodes[pp]], 1.0));
                real.push((vr[br.to_nodes[pp]], -1.0));
                imag.push((vim[br.from_nodes[pp]], 1.0));
                imag.push((vim[br.to_nodes[pp]], -1.0));
                for m in 0..d {
                    let r = br.z_series[(pp, m)].re;
                    let x = br.z_series[(pp, m)].im;
                    real.push((ir[b][m], -r));
                    real.push((iim[b][m], x));
                    imag.push((iim[b][m], -r));
                    imag.push((ir[b][m], -x));
                    for k in 0..d {
                        let yh = br.y_half[(m, k)].im;
                        if yh != 0.0 {
                            real.push((vim[br.from_nodes[k]], -r * yh));
                            real.push((vr[br.from_nodes[k]], -x * yh));
                            imag.push((vr[br.from_nodes[k]], r * yh));
                            imag.push((vim[br.from_nodes[k]], -x * yh));
                        }
                    }
                }
                inst.add_named_row(format!("{tag}_flowr_{b}_{pp}"), real, RowSense::Eq, 0.0);
                inst.add_named_row(format!("{tag}_flowi_{b}_{pp}"), imag, RowSense::Eq, 0.0);
            }
        }

        // current-injection rows; incoming branches deliver the series
        // current minus both shunt halves
        let mut inj_r_rows: Vec<Vec<(VarId, f64)>> =
            (0..n).map(|i| vec![(iinj_r[i], 1.0)]).collect();
        let mut inj_i_rows: Vec<Vec<(VarId, f64)>> =
            (0..n).map(|i| vec![(iinj_im[i], 1.0)]).collect();
        for (b, br) in network.branches.iter().enumerate() {
            let d = br.phases.len();
            for k in 0..d {
                let fo = br.from_nodes[k];
                let te = br.to_nodes[k];
                inj_r_rows[fo].push((ir[b][k], -1.0));
                inj_i_rows[fo].push((iim[b][k], -1.0));
                inj_r_rows[te].push((ir[b][k], 1.0));
                inj_i_rows[te].push((iim[b][k], 1.0));
                for m in 0..d {
                    let yh = br.y_half[(k, m)].im;
                    if yh != 0.0 {
                        // I_to = I_from - j y_half (V_from + V_to)
                        inj_r_rows[te].push((vim[br.from_nodes[m]], yh));
                        inj_r_rows[te].push((vim[br.to_nodes[m]], yh));
                        inj_i_rows[te].push((vr[br.from_nodes[m]], -yh));
                        inj_i_rows[te].push((vr[br.to_nodes[m]], -yh));
                    }
                }
            }
        }
        for i in 0..n {
            inst.add_named_row(
                format!("{tag}_injr_{i}"),
                std::mem::take(&mut inj_r_rows[i]),
                RowSense::Eq,
                0.0,
            );
            inst.add_named_row(
                format!("{tag}_inji_{i}"),
                std::mem::take(&mut inj_i_rows[i]),
                RowSense::Eq,
                0.0,
            );
        }

        // voltage-magnitude rows and bounds
        for i in 0..n {
            let hv = lp.v_hat[i];
            let mag = hv.norm();
            inst.add_named_row(
                format!("{tag}_vm_{i}"),
                vec![(vm[i], 1.0), (vr[i], -hv.re / mag), (vim[i], -hv.im / mag)],
                RowSense::Eq,
                0.0,
            );
        }

        // substation injection variables
        let sub: Vec<(usize, VarId, VarId)> = network
            .slack
            .iter()
            .map(|&i| {
                let pg = inst.add_var(format!("{tag}_pg{i}"), f64::NEG_INFINITY, f64::INFINITY);
                let qg = inst.add_var(format!("{tag}_qg{i}"), f64::NEG_INFINITY, f64::INFINITY);
                (i, pg, qg)
            })
            .collect();

        // candidate variables + droop machinery
        let mut on = Vec::new();
        let mut p = Vec::new();
        let mut q = Vec::new();
        let mut qqv = Vec::new();
        for (c, cand) in candidates.iter().enumerate() {
            let curve = cand.curve.as_ref().expect("validated candidate curve");
            let qmax = curve.q_max();
            let mpp = scen.mpp.get(&cand.id).copied().unwrap_or(0.0) / sb;
            let node = network.pv_node(&cand.id).expect("candidate node");

            let b = inst.add_binary(format!("{tag}_on_{}", cand.id));
            let pv_p = inst.add_var(format!("{tag}_p_{}", cand.id), 0.0, mpp);
            let pv_q = inst.add_var(format!("{tag}_q_{}", cand.id), -qmax, qmax);
            let pv_qqv = inst.add_var(format!("{tag}_qqv_{}", cand.id), -qmax, qmax);

            // control can only be enabled where an upgrade is placed
            inst.add_named_row(
                format!("{tag}_enable_{}", cand.id),
                vec![(b, 1.0), (x_pv[c], -1.0)],
                RowSense::Le,
                0.0,
            );

            // off branch forces P to the maximum power point
            inst.add_named_row(
                format!("{tag}_pmpp_{}", cand.id),
                vec![(pv_p, 1.0), (b, mpp)],
                RowSense::Ge,
                mpp,
            );
            // off branch forces Q to zero
            inst.add_named_row(
                format!("{tag}_qon1_{}", cand.id),
                vec![(pv_q, 1.0), (b, -qmax)],
                RowSense::Le,
                0.0,
            );
            inst.add_named_row(
                format!("{tag}_qon2_{}", cand.id),
                vec![(pv_q, 1.0), (b, qmax)],
                RowSense::Ge,
                0.0,
            );
            // on branch ties Q to the droop output
            inst.add_named_row(
                format!("{tag}_qlink1_{}", cand.id),
                vec![(pv_q, 1.0), (pv_qqv, -1.0), (b, 2.0 * qmax)],
                RowSense::Le,
                2.0 * qmax,
            );
            inst.add_named_row(
                format!("{tag}_qlink2_{}", cand.id),
                vec![(pv_q, 1.0), (pv_qqv, -1.0), (b, -2.0 * qmax)],
                RowSense::Ge,
                -2.0 * qmax,
            );
            // apparent-power rating as an inner polygon, relaxed when off
            let s_rate = qvcurve::s_rating(qmax, cand.p_rated);
            for (side, (a_c, b_c, rhs)) in
                polygonize_circle(s_rate, config.n_sides).into_iter().enumerate()
            {
                let slack_m = (a_c * mpp).max(0.0) + b_c.abs() * qmax - rhs;
                let m_row = slack_m.max(0.0);
                inst.add_named_row(
                    format!("{tag}_poly_{}_{}", cand.id, side),
                    vec![(pv_p, a_c), (pv_q, b_c), (b, m_row)],
                    RowSense::Le,
                    rhs + m_row,
                );
            }
            // droop curve as the exact convex-combination block
            qvcurve::encode(&mut inst, curve, vm[node], pv_qqv, &format!("{tag}_cc_{}", cand.id));

            // curtailment penalty (skipped when the scenario offers no power)
            if mpp > 1e-12 {
                add_quadratic_penalty(
                    &mut inst,
                    PiecewiseConvexTerm {
                        var: pv_p,
                        center: mpp,
                        weight: scen.probability * scen.weights.0,
                        half_width: mpp,
                        segments: config.k_segments,
                        epigraph_var: VarId(0),
                    },
                );
            }

            on.push(b);
            p.push(pv_p);
            q.push(pv_q);
            qqv.push(pv_qqv);
        }

        // linearized power-balance rows
        let s_fixed = fixed_injections(network, scen)?;
        for i in 0..n {
            let hv = lp.v_hat[i];
            let hi = lp.i_inj_hat[i];
            let mut real: Vec<(VarId, f64)> = vec![
                (iinj_r[i], -hv.re),
                (vr[i], -hi.re),
                (iinj_im[i], -hv.im),
                (vim[i], -hi.im),
            ];
            let mut imag: Vec<(VarId, f64)> = vec![
                (iinj_r[i], -hv.im),
                (vim[i], -hi.re),
                (iinj_im[i], hv.re),
                (vr[i], hi.im),
            ];
            for (c, cand) in candidates.iter().enumerate() {
                if network.pv_node(&cand.id) == Some(i) {
                    real.push((p[c], 1.0));
                    imag.push((q[c], 1.0));
                }
            }
            if let Some((_, pg, qg)) = sub.iter().find(|(j, _, _)| *j == i) {
                real.push((*pg, 1.0));
                imag.push((*qg, 1.0));
            }
            let const_p = -hv.re * hi.re - hv.im * hi.im;
            let const_q = -hv.im * hi.re + hv.re * hi.im;
            inst.add_named_row(
                format!("{tag}_balp_{i}"),
                real,
                RowSense::Eq,
                const_p - s_fixed[i].re,
            );
            inst.add_named_row(
                format!("{tag}_balq_{i}"),
                imag,
                RowSense::Eq,
                const_q - s_fixed[i].im,
            );
        }

        // feeder-head anchoring terms
        for &(i, _, _) in &sub {
            let ph = network.nodes()[i].phase;
            let &(vr0, vim0) = scen.feeder_head.get(&ph).ok_or_else(|| {
                PlannerError::ModelAssembly(format!(
                    "scenario {} lacks feeder_head for phase {ph}",
                    scen.id
                ))
            })?;
            for (var, center) in [(vr[i], vr0), (vim[i], vim0)] {
                add_quadratic_penalty(
                    &mut inst,
                    PiecewiseConvexTerm {
                        var,
                        center,
                        weight: scen.probability * scen.weights.1,
                        half_width: 0.6,
                        segments: config.k_segments,
                        epigraph_var: VarId(0),
                    },
                );
            }
        }

        scenario_vars.push(ScenarioVars { vr, vim, vm, iinj_r, iinj_im, ir, iim, on, p, q, qqv, sub });
    }

    inst.validate().map_err(|e| PlannerError::ModelAssembly(e.to_string()))?;
    Ok(ExtensiveForm {
        instance: inst,
        candidates: candidates.iter().map(|c| c.id.clone()).collect(),
        x_pv,
        scenario_vars,
    })
}

/// Fixed nodal injections (pu): non-candidate PV at MPP minus demand and
/// no-load losses.  Candidate PV and substation injections are variables.
fn fixed_injections(network: &Network, scen: &Scenario) -> Result<Vec<C64>, PlannerError> {
    // candidate setpoints (0,0) remove them from the fixed vector
    let zero: BTreeMap<String, (f64, f64)> = network
        .feeder
        .candidates()
        .iter()
        .map(|c| (c.id.clone(), (0.0, 0.0)))
        .collect();
    Ok(network.injections(scen, &zero)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PvOperatingPoint {
    pub p: f64,
    pub q: f64,
    pub q_qv: f64,
}

#[derive(Debug, Clone)]
pub struct ScenarioOperation {
    pub scenario_id: String,
    /// Volt-VAr enabled flags per candidate.
    pub on: BTreeMap<String, bool>,
    pub pv: BTreeMap<String, PvOperatingPoint>,
    /// Model voltages per node: rectangular parts and linearized magnitude.
    pub voltage: Vec<(PhaseNodeId, f64, f64, f64)>,
    /// Substation injection per slack node-phase.
    pub substation: Vec<(PhaseNodeId, f64, f64)>,
    /// Max |model Vm - simulated |V|| recorded by the outer loop.
    pub voltage_gap: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ObjectiveBreakdown {
    pub placement_cost: f64,
    pub expected_curtailment_penalty: f64,
    pub expected_voltage_penalty: f64,
    pub mip_objective: f64,
}

#[derive(Debug, Clone)]
pub struct PlacementPlan {
    /// Placement flag per candidate, feeder order.
    pub placements: Vec<(String, bool)>,
    pub scenarios: Vec<ScenarioOperation>,
    pub objective: ObjectiveBreakdown,
    pub outer_iterations: usize,
    /// Outer loop hit its cap before reaching `eps_lin`.
    pub stalled: bool,
}

impl PlacementPlan {
    pub fn placed_ids(&self) -> Vec<String> {
        self.placements.iter().filter(|(_, x)| *x).map(|(id, _)| id.clone()).collect()
    }

    pub fn placed_count(&self) -> usize {
        self.placements.iter().filter(|(_, x)| *x).count()
    }

    /// Active (curve-following) inverter ids for one scenario.
    pub fn active_ids(&self, scenario_idx: usize) -> Vec<String> {
        self.scenarios[scenario_idx]
            .on
            .iter()
            .filter(|(_, &on)| on)
            .map(|(id, _)| id.clone())
            .collect()
    }

    /// Per-phase placement counts (a, b, c), resolved against the feeder.
    pub fn phase_counts(&self, feeder: &Feeder) -> (usize, usize, usize) {
        let mut counts = (0usize, 0usize, 0usize);
        for (id, placed) in &self.placements {
            if !placed {
                continue;
            }
            if let Some(pv) = feeder.pv(id) {
                match pv.node.phase {
                    Phase::A => counts.0 += 1,
                    Phase::B => counts.1 += 1,
                    Phase::C => counts.2 += 1,
                }
            }
        }
        counts
    }
}

/// Full placement solve: base-case linearization, MIP, oracle verification,
/// relinearization until the model/oracle voltage gap meets `eps_lin`.
pub fn solve_placement(
    network: &Network,
    scenarios: &[Scenario],
    config: &PlannerConfig,
) -> Result<PlacementPlan, PlannerError> {
    assert!(!scenarios.is_empty(), "need at least one scenario");

    // feasibility gate under the oracle: with every candidate following its
    // curve and the feeder head held at the measured phasor, the bounds must
    // be reachable, otherwise no placement subset can verify
    let all: Vec<String> = network.feeder.candidates().iter().map(|c| c.id.clone()).collect();
    for scen in scenarios {
        let fp = volt_var_fixed_point(network, scen, &all, &BTreeMap::new(), config.alpha)?;
        let vmax = network.feeder.v_max;
        let vmin = network.feeder.v_min;
        if fp
            .solution
            .v
            .iter()
            .any(|v| v.norm() > vmax + 1e-9 || v.norm() < vmin - 1e-9)
        {
            return Err(diagnose_infeasible(network, scenarios, config));
        }
    }

    // base case: every PV at its maximum power point, no droop control
    let base: Vec<PowerFlowSolution> = crate::par::map_indexed(scenarios, |_, s| {
        network.solve_nonlinear(s, &BTreeMap::new())
    })
    .into_iter()
    .collect::<Result<_, _>>()?;
    let mut lin: Vec<LinearizationPoint> =
        base.iter().map(|s| linearize_at(network, s)).collect::<Result<_, _>>()?;

    let mip_cfg = MipConfig {
        rel_gap: config.mip_gap,
        max_nodes: config.mip_node_cap,
        time_cap: None,
    };

    let mut best: Option<(PlacementPlan, f64)> = None;
    for outer in 1..=config.max_outer.max(1) {
        let ef = build_extensive_form(network, scenarios, &lin, config)?;
        let mip = solve_mip(&ef.instance, &mip_cfg)?;
        match mip.status {
            MipStatus::Infeasible => {
                if let Some((mut plan, _)) = best {
                    plan.stalled = true;
                    return Ok(plan);
                }
                return Err(diagnose_infeasible(network, scenarios, config));
            }
            MipStatus::Optimal | MipStatus::IterationLimit => {}
        }

        let mut plan = extract_plan(network, scenarios, &ef, &mip.values, config, outer);

        // simulate each scenario with the chosen enables and measure the gap
        let sims: Vec<Result<_, SimError>> = crate::par::map_indexed(scenarios, |s_idx, scen| {
            volt_var_fixed_point(
                network,
                scen,
                &plan.active_ids(s_idx),
                &BTreeMap::new(),
                config.alpha,
            )
        });
        let mut gap = 0.0f64;
        let mut sim_solutions = Vec::new();
        for (s_idx, sim) in sims.into_iter().enumerate() {
            let sim = sim?;
            let mut g = 0.0f64;
            for (i, (_, _, _, vm_model)) in plan.scenarios[s_idx].voltage.iter().enumerate() {
                g = g.max((vm_model - sim.solution.v[i].norm()).abs());
            }
            plan.scenarios[s_idx].voltage_gap = g;
            gap = gap.max(g);
            sim_solutions.push(sim.solution);
        }

        let better = best.as_ref().map_or(true, |(_, bg)| gap < *bg);
        if better {
            best = Some((plan, gap));
        }
        if gap <= config.eps_lin {
            let (plan, _) = best.unwrap();
            return Ok(plan);
        }
        // relinearize at the simulated operating points
        lin = sim_solutions
            .iter()
            .map(|s| linearize_at(network, s))
            .collect::<Result<_, _>>()?;
    }
    let (mut plan, _) = best.expect("at least one outer iteration ran");
    plan.stalled = true;
    Ok(plan)
}

fn diagnose_infeasible(
    network: &Network,
    scenarios: &[Scenario],
    config: &PlannerConfig,
) -> PlannerError {
    let all: Vec<String> = network.feeder.candidates().iter().map(|c| c.id.clone()).collect();
    let mut worst: Option<(String, f64, f64, f64)> = None; // node, vmag, bound, excess
    for scen in scenarios {
        let Ok(fp) = volt_var_fixed_point(network, scen, &all, &BTreeMap::new(), config.alpha)
        else {
            continue;
        };
        for (i, node) in network.nodes().iter().enumerate() {
            let vm = fp.solution.v[i].norm();
            let (bound, excess) = if vm > network.feeder.v_max {
                (network.feeder.v_max, vm - network.feeder.v_max)
            } else if vm < network.feeder.v_min {
                (network.feeder.v_min, network.feeder.v_min - vm)
            } else {
                continue;
            };
            if worst.as_ref().map_or(true, |w| excess > w.3) {
                worst = Some((node.to_string(), vm, bound, excess));
            }
        }
    }
    match worst {
        Some((node, vmag, bound, _)) => PlannerError::InfeasiblePlacement { node, vmag, bound },
        None => PlannerError::InfeasiblePlacement {
            node: "(no oracle violation; linearized bounds unreachable)".into(),
            vmag: f64::NAN,
            bound: f64::NAN,
        },
    }
}

fn extract_plan(
    network: &Network,
    scenarios: &[Scenario],
    ef: &ExtensiveForm,
    values: &[f64],
    config: &PlannerConfig,
    outer: usize,
) -> PlacementPlan {
    let val = |v: VarId| values[v.0];
    let placements: Vec<(String, bool)> = ef
        .candidates
        .iter()
        .zip(&ef.x_pv)
        .map(|(id, &x)| (id.clone(), val(x) > 0.5))
        .collect();

    let mut breakdown = ObjectiveBreakdown {
        placement_cost: 0.0,
        expected_curtailment_penalty: 0.0,
        expected_voltage_penalty: 0.0,
        mip_objective: ef.instance.objective_value(values),
    };
    // placement cost counts distinct first-stage variables
    let mut seen = std::collections::BTreeSet::new();
    for &x in &ef.x_pv {
        if seen.insert(x) && val(x) > 0.5 {
            breakdown.placement_cost += config.w_c;
        }
    }

    let mut ops = Vec::new();
    for (s_idx, scen) in scenarios.iter().enumerate() {
        let sv = &ef.scenario_vars[s_idx];
        let sb = network.feeder.s_base_kva;
        let mut on = BTreeMap::new();
        let mut pv = BTreeMap::new();
        for (c, id) in ef.candidates.iter().enumerate() {
            let enabled = val(sv.on[c]) > 0.5;
            on.insert(id.clone(), enabled);
            let point = PvOperatingPoint {
                p: val(sv.p[c]),
                q: val(sv.q[c]),
                q_qv: val(sv.qqv[c]),
            };
            let mpp = scen.mpp.get(id).copied().unwrap_or(0.0) / sb;
            breakdown.expected_curtailment_penalty +=
                scen.probability * scen.weights.0 * (point.p - mpp) * (point.p - mpp);
            pv.insert(id.clone(), point);
        }
        let voltage: Vec<(PhaseNodeId, f64, f64, f64)> = network
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, node)| (node.clone(), val(sv.vr[i]), val(sv.vim[i]), val(sv.vm[i])))
            .collect();
        let substation: Vec<(PhaseNodeId, f64, f64)> = sv
            .sub
            .iter()
            .map(|&(i, pg, qg)| (network.nodes()[i].clone(), val(pg), val(qg)))
            .collect();
        for &(i, _, _) in &sv.sub {
            let ph = network.nodes()[i].phase;
            if let Some(&(vr0, vim0)) = scen.feeder_head.get(&ph) {
                let dvr = val(sv.vr[i]) - vr0;
                let dvi = val(sv.vim[i]) - vim0;
                breakdown.expected_voltage_penalty +=
                    scen.probability * scen.weights.1 * (dvr * dvr + dvi * dvi);
            }
        }
        ops.push(ScenarioOperation {
            scenario_id: scen.id.clone(),
            on,
            pv,
            voltage,
            substation,
            voltage_gap: f64::NAN,
        });
    }

    PlacementPlan {
        placements,
        scenarios: ops,
        objective: breakdown,
        outer_iterations: outer,
        stalled: false,
    }
}

/// Pass thresholds for a verified plan.
pub const MAX_CURTAILMENT_PU: f64 = 1e-6;
pub const MAX_MEAN_SQ_REL_Q_DIFF: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct ScenarioVerification {
    pub scenario_id: String,
    /// Voltage-bound violations under the nonlinear oracle with the planned
    /// inverters following their curves.
    pub violations: Vec<(PhaseNodeId, f64, f64)>,
    /// (pv id, plan Q, simulated Q) per enabled inverter.
    pub q_comparison: Vec<(String, f64, f64)>,
    /// Mean of ((Q_plan - Q_sim)/q_max)^2 over enabled inverters.
    pub mean_sq_rel_q_diff: f64,
    /// Total plan and simulated active-power curtailment (pu).
    pub curtailment_plan: f64,
    pub curtailment_sim: f64,
    /// Max |plan Vm - simulated |V|| over all nodes.
    pub max_voltage_gap: f64,
}

#[derive(Debug, Clone)]
pub struct VerificationReport {
    pub scenarios: Vec<ScenarioVerification>,
    pub pass: bool,
}

impl VerificationReport {
    pub fn total_violations(&self) -> usize {
        self.scenarios.iter().map(|s| s.violations.len()).sum()
    }
}

/// Re-simulates every scenario with the plan's enabled inverters and
/// compares voltages, reactive output and curtailment against the plan.
pub fn verify_plan(
    network: &Network,
    scenarios: &[Scenario],
    plan: &PlacementPlan,
    alpha: f64,
) -> Result<VerificationReport, PlannerError> {
    let feeder = &network.feeder;
    let sb = feeder.s_base_kva;
    let mut out = Vec::new();
    let mut pass = true;
    for (s_idx, scen) in scenarios.iter().enumerate() {
        let op = plan
            .scenarios
            .iter()
            .find(|o| o.scenario_id == scen.id)
            .ok_or_else(|| PlannerError::ModelAssembly(format!(
                "plan has no operating block for scenario {}",
                scen.id
            )))?;
        let _ = s_idx;
        let active: Vec<String> =
            op.on.iter().filter(|(_, &on)| on).map(|(id, _)| id.clone()).collect();
        let fp = volt_var_fixed_point(network, scen, &active, &BTreeMap::new(), alpha)?;

        let mut violations = Vec::new();
        for (i, node) in network.nodes().iter().enumerate() {
            let vm = fp.solution.v[i].norm();
            if vm > feeder.v_max {
                violations.push((node.clone(), vm, feeder.v_max));
            } else if vm < feeder.v_min {
                violations.push((node.clone(), vm, feeder.v_min));
            }
        }

        let mut q_comparison = Vec::new();
        let mut msq = 0.0;
        for id in &active {
            let q_plan = op.pv.get(id).map(|p| p.q).unwrap_or(0.0);
            let q_sim = fp.pv_output.get(id).map(|&(_, q)| q).unwrap_or(0.0);
            let qmax = feeder
                .pv(id)
                .and_then(|p| p.curve.as_ref())
                .map(|c| c.q_max())
                .unwrap_or(1.0);
            msq += ((q_plan - q_sim) / qmax).powi(2);
            q_comparison.push((id.clone(), q_plan, q_sim));
        }
        let mean_sq_rel_q_diff = if active.is_empty() { 0.0 } else { msq / active.len() as f64 };

        let mut curtailment_plan = 0.0;
        let mut curtailment_sim = 0.0;
        for (id, point) in &op.pv {
            let mpp = scen.mpp.get(id).copied().unwrap_or(0.0) / sb;
            curtailment_plan += (mpp - point.p).max(0.0);
            let p_sim = fp.pv_output.get(id).map(|&(p, _)| p).unwrap_or(mpp);
            curtailment_sim += (mpp - p_sim).max(0.0);
        }

        let mut max_voltage_gap = 0.0f64;
        for (i, (_, _, _, vm_model)) in op.voltage.iter().enumerate() {
            max_voltage_gap = max_voltage_gap.max((vm_model - fp.solution.v[i].norm()).abs());
        }

        pass &= violations.is_empty()
            && curtailment_plan <= MAX_CURTAILMENT_PU
            && curtailment_sim <= MAX_CURTAILMENT_PU
            && mean_sq_rel_q_diff <= MAX_MEAN_SQ_REL_Q_DIFF;
        out.push(ScenarioVerification {
            scenario_id: scen.id.clone(),
            violations,
            q_comparison,
            mean_sq_rel_q_diff,
            curtailment_plan,
            curtailment_sim,
            max_voltage_gap,
        });
    }
    Ok(VerificationReport { scenarios: out, pass })
}

/// Builds a full variable assignment for the extensive form from oracle
/// operating points (one per scenario) with all candidates off.  Epigraph
/// variables take their minimal feasible values.  Used to cross-check the
/// constraint assembly against the nonlinear oracle.
pub fn replay_base_case(
    network: &Network,
    scenarios: &[Scenario],
    ef: &ExtensiveForm,
    lin: &[LinearizationPoint],
    solutions: &[PowerFlowSolution],
) -> Vec<f64> {
    let mut x = vec![0.0; ef.instance.num_vars()];
    let sb = network.feeder.s_base_kva;
    for (s_idx, scen) in scenarios.iter().enumerate() {
        let sv = &ef.scenario_vars[s_idx];
        let sol = &solutions[s_idx];
        let lp = &lin[s_idx];
        for i in 0..network.node_count() {
            x[sv.vr[i].0] = sol.v[i].re;
            x[sv.vim[i].0] = sol.v[i].im;
            x[sv.vm[i].0] = voltage_magnitude_linear(lp.v_hat[i], sol.v[i]);
            x[sv.iinj_r[i].0] = sol.i_inj[i].re;
            x[sv.iinj_im[i].0] = sol.i_inj[i].im;
        }
        for (b, _) in network.branches.iter().enumerate() {
            for (k, c) in sol.i_line[b].iter().enumerate() {
                x[sv.ir[b][k].0] = c.re;
                x[sv.iim[b][k].0] = c.im;
            }
        }
        for (c, id) in ef.candidates.iter().enumerate() {
            let cand = network.feeder.pv(id).expect("candidate");
            let curve = cand.curve.as_ref().expect("curve");
            let mpp = scen.mpp.get(id).copied().unwrap_or(0.0) / sb;
            x[sv.on[c].0] = 0.0;
            x[sv.p[c].0] = mpp;
            x[sv.q[c].0] = 0.0;
            let node = network.pv_node(id).expect("node");
            let vm = x[sv.vm[node].0];
            x[sv.qqv[c].0] = curve.q_of_v(vm).q;
            // convex-combination weights for the segment containing vm
            let vb = curve.v_break();
            let qb = curve.q_break();
            let mut j_sel = 4;
            for j in 0..5 {
                if vm <= vb[j + 1] {
                    j_sel = j;
                    break;
                }
            }
            let width = vb[j_sel + 1] - vb[j_sel];
            let t = if width > 0.0 { ((vm - vb[j_sel]) / width).clamp(0.0, 1.0) } else { 1.0 };
            // locate the encoding variables by name through the instance
            let _ = qb;
            let tag = format!("s{s_idx}_cc_{id}");
            for j in 0..5 {
                let d_name = format!("{tag}_d{j}");
                let la = format!("{tag}_l{j}a");
                let lb = format!("{tag}_l{j}b");
                for (vi, var) in ef.instance.vars().iter().enumerate() {
                    if var.name == d_name {
                        x[vi] = if j == j_sel { 1.0 } else { 0.0 };
                    } else if var.name == la {
                        x[vi] = if j == j_sel { 1.0 - t } else { 0.0 };
                    } else if var.name == lb {
                        x[vi] = if j == j_sel { t } else { 0.0 };
                    }
                }
            }
        }
        // substation balances the linearized flow at the expansion point
        for &(i, pg, qg) in &sv.sub {
            let s = sol.v[i] * sol.i_inj[i].conj();
            let fixed = fixed_injections(network, scen).expect("validated scenario");
            x[pg.0] = s.re - fixed[i].re;
            x[qg.0] = s.im - fixed[i].im;
        }
    }
    // epigraph variables: minimal feasible value given their chord rows
    for term in &ef.instance.terms {
        let xv = x[term.var.0];
        let mut e = 0.0f64;
        let step = term.half_width / term.segments as f64;
        for j in 0..2 * term.segments {
            let t0 = term.center - term.half_width + step * j as f64;
            let t1 = t0 + step;
            let f0 = term.weight * (t0 - term.center) * (t0 - term.center);
            let f1 = term.weight * (t1 - term.center) * (t1 - term.center);
            let slope = (f1 - f0) / step;
            e = e.max(slope * xv + (f0 - slope * t0));
        }
        x[term.epigraph_var.0] = e;
    }
    x
}

// ---------------------------------------------------------------------------
// plan file round trip

impl PlacementPlan {
    pub fn to_text(&self) -> String {
        let mut out = String::from("[plan]\n");
        for (id, placed) in &self.placements {
            out.push_str(&format!("{} {}\n", id, if *placed { 1 } else { 0 }));
        }
        out.push_str("\n[objective]\n");
        out.push_str(&format!("placement_cost = {:?}\n", self.objective.placement_cost));
        out.push_str(&format!(
            "expected_curtailment_penalty = {:?}\n",
            self.objective.expected_curtailment_penalty
        ));
        out.push_str(&format!(
            "expected_voltage_penalty = {:?}\n",
            self.objective.expected_voltage_penalty
        ));
        out.push_str(&format!("mip_objective = {:?}\n", self.objective.mip_objective));
        out.push_str(&format!("outer_iterations = {}\n", self.outer_iterations));
        out.push_str(&format!("stalled = {}\n", if self.stalled { 1 } else { 0 }));
        for s in &self.scenarios {
            out.push_str(&format!("\n[scenario {}]\n", s.scenario_id));
            out.push_str(&format!("voltage_gap = {:?}\n", s.voltage_gap));
            for (id, on) in &s.on {
                out.push_str(&format!("on = {},{}\n", id, if *on { 1 } else { 0 }));
            }
            for (id, p) in &s.pv {
                out.push_str(&format!("pv = {},{:?},{:?},{:?}\n", id, p.p, p.q, p.q_qv));
            }
            for (node, pg, qg) in &s.substation {
                out.push_str(&format!("sub = {},{},{:?},{:?}\n", node.bus, node.phase, pg, qg));
            }
            for (node, vr, vim, vm) in &s.voltage {
                out.push_str(&format!(
                    "node = {},{},{:?},{:?},{:?}\n",
                    node.bus, node.phase, vr, vim, vm
                ));
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<PlacementPlan, PlannerError> {
        let perr = |line: usize, msg: &str| PlannerError::PlanParse { line, msg: msg.into() };
        let mut plan = PlacementPlan {
            placements: Vec::new(),
            scenarios: Vec::new(),
            objective: ObjectiveBreakdown::default(),
            outer_iterations: 0,
            stalled: false,
        };
        #[derive(PartialEq)]
        enum Sec {
            None,
            Plan,
            Objective,
            Scenario,
        }
        let mut sec = Sec::None;
        for (ln0, raw) in text.lines().enumerate() {
            let ln = ln0 + 1;
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(h) = line.strip_prefix('[') {
                let h = h.strip_suffix(']').ok_or_else(|| perr(ln, "malformed header"))?;
                if h == "plan" {
                    sec = Sec::Plan;
                } else if h == "objective" {
                    sec = Sec::Objective;
                } else if let Some(id) = h.strip_prefix("scenario ") {
                    plan.scenarios.push(ScenarioOperation {
                        scenario_id: id.trim().to_string(),
                        on: BTreeMap::new(),
                        pv: BTreeMap::new(),
                        voltage: Vec::new(),
                        substation: Vec::new(),
                        voltage_gap: f64::NAN,
                    });
                    sec = Sec::Scenario;
                } else {
                    return Err(perr(ln, "unknown section"));
                }
                continue;
            }
            match sec {
                Sec::Plan => {
                    let t: Vec<&str> = line.split_whitespace().collect();
                    if t.len() != 2 {
                        return Err(perr(ln, "expected 'pv_id placed'"));
                    }
                    plan.placements.push((t[0].to_string(), t[1] == "1"));
                }
                Sec::Objective => {
                    let (k, v) = line.split_once('=').ok_or_else(|| perr(ln, "expected key = value"))?;
                    let v = v.trim();
                    let num: f64 = v.parse().map_err(|_| perr(ln, "bad number"))?;
                    match k.trim() {
                        "placement_cost" => plan.objective.placement_cost = num,
                        "expected_curtailment_penalty" => {
                            plan.objective.expected_curtailment_penalty = num
                        }
                        "expected_voltage_penalty" => plan.objective.expected_voltage_penalty = num,
                        "mip_objective" => plan.objective.mip_objective = num,
                        "outer_iterations" => plan.outer_iterations = num as usize,
                        "stalled" => plan.stalled = num != 0.0,
                        _ => return Err(perr(ln, "unknown objective key")),
                    }
                }
                Sec::Scenario => {
                    let s = plan.scenarios.last_mut().expect("inside scenario");
                    let (k, v) = line.split_once('=').ok_or_else(|| perr(ln, "expected key = value"))?;
                    let v = v.trim();
                    let fields: Vec<&str> = v.split(',').map(str::trim).collect();
                    match k.trim() {
                        "voltage_gap" => {
                            s.voltage_gap = v.parse().map_err(|_| perr(ln, "bad number"))?
                        }
                        "on" => {
                            if fields.len() != 2 {
                                return Err(perr(ln, "on expects 'id,flag'"));
                            }
                            s.on.insert(fields[0].to_string(), fields[1] == "1");
                        }
                        "pv" => {
                            if fields.len() != 4 {
                                return Err(perr(ln, "pv expects 'id,p,q,qqv'"));
                            }
                            let p: f64 = fields[1].parse().map_err(|_| perr(ln, "bad number"))?;
                            let q: f64 = fields[2].parse().map_err(|_| perr(ln, "bad number"))?;
                            let qqv: f64 = fields[3].parse().map_err(|_| perr(ln, "bad number"))?;
                            s.pv.insert(fields[0].to_string(), PvOperatingPoint { p, q, q_qv: qqv });
                        }
                        "sub" => {
                            if fields.len() != 4 {
                                return Err(perr(ln, "sub expects 'bus,phase,P,Q'"));
                            }
                            let ph = Phase::from_letter(
                                fields[1].chars().next().unwrap_or('?'),
                            )
                            .ok_or_else(|| perr(ln, "bad phase"))?;
                            s.substation.push((
                                PhaseNodeId::new(fields[0], ph),
                                fields[2].parse().map_err(|_| perr(ln, "bad number"))?,
                                fields[3].parse().map_err(|_| perr(ln, "bad number"))?,
                            ));
                        }
                        "node" => {
                            if fields.len() != 5 {
                                return Err(perr(ln, "node expects 'bus,phase,vr,vim,vm'"));
                            }
                            let ph = Phase::from_letter(
                                fields[1].chars().next().unwrap_or('?'),
                            )
                            .ok_or_else(|| perr(ln, "bad phase"))?;
                            s.voltage.push((
                                PhaseNodeId::new(fields[0], ph),
                                fields[2].parse().map_err(|_| perr(ln, "bad number"))?,
                                fields[3].parse().map_err(|_| perr(ln, "bad number"))?,
                                fields[4].parse().map_err(|_| perr(ln, "bad number"))?,
                            ));
                        }
                        _ => return Err(perr(ln, "unknown scenario key")),
                    }
                }
                Sec::None => return Err(perr(ln, "data before any section")),
            }
        }
        Ok(plan)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<PlacementPlan, PlannerError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| PlannerError::Feeder(
            FeederError::Io { path: path.display().to_string(), source: e },
        ))?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::parse_feeder;
    use crate::milp::{solve_lp, LpStatus};

    type PowerFlowSolution = crate::powerflow::PowerFlowSolution;

    const PLAN_FEEDER: &str = "\
[bases]
v_base_v = 7200
s_base_kva = 1000
units = pu

[limits]
v_min = 0.95
v_max = 1.05

[substation]
bus = sub

[buses]
sub a
m1 a
m2 a

[lines]
l1 sub m1 a r= 0.05 x= 0.04
l2 m1 m2 a r= 0.05 x= 0.04

[loads]
ld1 m1 a
ld2 m2 a

[pv]
pv1 m2 a 0.4 0.8 1 qv= 0.0 0.94 0.98 1.02 1.06 1.1
pv2 m1 a 0.2 0.8 1 qv= 0.0 0.94 0.98 1.02 1.06 1.1
";

    fn over_voltage_scenario(id: &str, prob: f64) -> Scenario {
        Scenario {
            id: id.into(),
            probability: prob,
            demand: [
                (PhaseNodeId::new("m1", Phase::A), (20.0, 8.0)),
                (PhaseNodeId::new("m2", Phase::A), (20.0, 8.0)),
            ]
            .into_iter()
            .collect(),
            mpp: [("pv1".to_string(), 400.0), ("pv2".to_string(), 200.0)].into_iter().collect(),
            feeder_head: [(Phase::A, (1.015, 0.0))].into_iter().collect(),
            weights: (1e3, 1e4),
        }
    }

    fn benign_scenario(id: &str, prob: f64) -> Scenario {
        Scenario {
            id: id.into(),
            probability: prob,
            demand: [
                (PhaseNodeId::new("m1", Phase::A), (30.0, 12.0)),
                (PhaseNodeId::new("m2", Phase::A), (30.0, 12.0)),
            ]
            .into_iter()
            .collect(),
            mpp: [("pv1".to_string(), 100.0), ("pv2".to_string(), 60.0)].into_iter().collect(),
            feeder_head: [(Phase::A, (1.0, 0.0))].into_iter().collect(),
            weights: (1e3, 1e4),
        }
    }

    fn network() -> Network {
        Network::new(&parse_feeder(PLAN_FEEDER).unwrap()).unwrap()
    }

    fn base_lin(net: &Network, scens: &[Scenario]) -> (Vec<PowerFlowSolution>, Vec<LinearizationPoint>) {
        let sols: Vec<PowerFlowSolution> = scens
            .iter()
            .map(|s| net.solve_nonlinear(s, &BTreeMap::new()).unwrap())
            .collect();
        let lin = sols.iter().map(|s| linearize_at(net, s).unwrap()).collect();
        (sols, lin)
    }

    #[test]
    fn size_matches_count_formula() {
        let net = network();
        let scens = vec![over_voltage_scenario("s1", 0.5), benign_scenario("s2", 0.5)];
        let (_, lin) = base_lin(&net, &scens);
        let cfg = PlannerConfig::default();
        let ef = build_extensive_form(&net, &scens, &lin, &cfg).unwrap();

        let n = net.node_count();
        let l: usize = net.branches.iter().map(|b| b.phases.len()).sum();
        let c = net.feeder.candidates().len();
        let psub = net.slack.len();
        let k = cfg.k_segments;
        // candidates with nonzero available power in each scenario
        let c_active: usize = scens
            .iter()
            .map(|s| {
                net.feeder
                    .candidates()
                    .iter()
                    .filter(|cd| s.mpp.get(&cd.id).copied().unwrap_or(0.0) > 0.0)
                    .count()
            })
            .sum();
        let per_scen_cols = 5 * n + 2 * l + 2 * psub + 19 * c;
        let epigraph_cols = c_active + 2 * psub * scens.len();
        let expect_cols = c + scens.len() * per_scen_cols + epigraph_cols;
        assert_eq!(ef.instance.num_vars(), expect_cols);

        let per_scen_rows = 5 * n + 2 * l + c * (14 + cfg.n_sides);
        let epigraph_rows = 2 * k * (c_active + 2 * psub * scens.len());
        let expect_rows = scens.len() * per_scen_rows + epigraph_rows;
        assert_eq!(ef.instance.num_rows(), expect_rows);
    }

    #[test]
    fn zero_candidates_reproduces_base_case() {
        let mut feeder = parse_feeder(PLAN_FEEDER).unwrap();
        for pv in &mut feeder.pv_units {
            pv.candidate = false;
        }
        let net = Network::new(&feeder).unwrap();
        let scens = vec![benign_scenario("s", 1.0)];
        let (sols, lin) = base_lin(&net, &scens);
        let ef = build_extensive_form(&net, &scens, &lin, &PlannerConfig::default()).unwrap();
        assert!(ef.instance.binary_ids().is_empty());
        let sol = solve_lp(&ef.instance).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        let sv = &ef.scenario_vars[0];
        for i in 0..net.node_count() {
            let vr = sol.x[sv.vr[i].0];
            let vim = sol.x[sv.vim[i].0];
            assert!((vr - sols[0].v[i].re).abs() < 1e-6, "vr {} vs {}", vr, sols[0].v[i].re);
            assert!((vim - sols[0].v[i].im).abs() < 1e-6);
        }
    }

    #[test]
    fn replay_base_case_satisfies_all_rows() {
        // the replayed operating point must satisfy bounds too, so both
        // scenarios are violation-free here
        let net = network();
        let mut calm2 = benign_scenario("s2", 0.5);
        calm2.feeder_head.insert(Phase::A, (1.005, 0.0));
        let scens = vec![benign_scenario("s1", 0.5), calm2];
        let (sols, lin) = base_lin(&net, &scens);
        let ef = build_extensive_form(&net, &scens, &lin, &PlannerConfig::default()).unwrap();
        let x = replay_base_case(&net, &scens, &ef, &lin, &sols);
        let viol = ef.instance.max_violation(&x);
        assert!(viol < 1e-7, "replay violation {viol}");
    }

    #[test]
    fn replayed_mip_solution_has_small_linear_residual() {
        let net = network();
        let scens = vec![over_voltage_scenario("s1", 1.0)];
        let (_, lin) = base_lin(&net, &scens);
        let cfg = PlannerConfig::default();
        let ef = build_extensive_form(&net, &scens, &lin, &cfg).unwrap();
        let mip = solve_mip(&ef.instance, &MipConfig::default()).unwrap();
        assert_eq!(mip.status, MipStatus::Optimal);
        // rebuild a candidate solution from MIP values and evaluate the
        // linearized residual with matching injections
        let sv = &ef.scenario_vars[0];
        let n = net.node_count();
        let mut cand = net.solve_nonlinear(&scens[0], &BTreeMap::new()).unwrap();
        for i in 0..n {
            cand.v[i] = C64::new(mip.values[sv.vr[i].0], mip.values[sv.vim[i].0]);
            cand.i_inj[i] = C64::new(mip.values[sv.iinj_r[i].0], mip.values[sv.iinj_im[i].0]);
        }
        let mut s_spec = fixed_injections(&net, &scens[0]).unwrap();
        for (c, id) in ef.candidates.iter().enumerate() {
            let node = net.pv_node(id).unwrap();
            s_spec[node] += C64::new(mip.values[sv.p[c].0], mip.values[sv.q[c].0]);
        }
        let res = net.linearized_residual(&s_spec, &lin[0], &cand);
        for (i, r) in res.iter().enumerate() {
            if net.is_slack(i) {
                continue;
            }
            assert!(r.norm() < 1e-7, "node {i} residual {r}");
        }
    }

    #[test]
    fn places_exactly_the_effective_inverter() {
        let net = network();
        let scens = vec![over_voltage_scenario("ov", 1.0)];
        let plan = solve_placement(&net, &scens, &PlannerConfig::default()).unwrap();
        assert_eq!(plan.placed_ids(), vec!["pv1".to_string()], "plan {:?}", plan.placements);
        assert!(!plan.stalled);
        // invariants: on implies placed; off implies full output and zero Q
        for op in &plan.scenarios {
            for (id, &on) in &op.on {
                let placed = plan.placements.iter().find(|(p, _)| p == id).unwrap().1;
                assert!(!on || placed);
                let pt = &op.pv[id];
                if !on {
                    let mpp = scens[0].mpp.get(id).copied().unwrap_or(0.0) / 1000.0;
                    assert!((pt.p - mpp).abs() < 1e-6);
                    assert!(pt.q.abs() < 1e-9);
                }
            }
        }
        let report = verify_plan(&net, &scens, &plan, 0.5).unwrap();
        assert!(report.pass, "verification failed: {:?}", report.scenarios[0].violations);
        assert_eq!(report.total_violations(), 0);
        assert!(report.scenarios[0].curtailment_sim <= MAX_CURTAILMENT_PU);
    }

    #[test]
    fn violation_free_case_places_nothing() {
        let net = network();
        let scens = vec![benign_scenario("calm", 1.0)];
        let plan = solve_placement(&net, &scens, &PlannerConfig::default()).unwrap();
        assert_eq!(plan.placed_count(), 0);
        assert!(plan.objective.placement_cost == 0.0);
    }

    #[test]
    fn no_candidates_with_violations_is_infeasible() {
        let mut feeder = parse_feeder(PLAN_FEEDER).unwrap();
        for pv in &mut feeder.pv_units {
            pv.candidate = false;
        }
        let net = Network::new(&feeder).unwrap();
        let scens = vec![over_voltage_scenario("ov", 1.0)];
        match solve_placement(&net, &scens, &PlannerConfig::default()) {
            Err(PlannerError::InfeasiblePlacement { node, .. }) => {
                assert!(node.contains("m2"), "worst node should be named, got {node}");
            }
            other => panic!("expected InfeasiblePlacement, got {:?}", other.map(|p| p.placements)),
        }
    }

    #[test]
    fn widening_candidate_pool_never_hurts() {
        // optimal objective with pool {pv1} is an upper bound for {pv1, pv2}
        let feeder = parse_feeder(PLAN_FEEDER).unwrap();
        let scens = vec![over_voltage_scenario("ov", 1.0)];
        let mut narrow = feeder.clone();
        narrow.pv_units[1].candidate = false;
        let cfg = PlannerConfig::default();

        let obj = |f: &Feeder| -> f64 {
            let net = Network::new(f).unwrap();
            let (_, lin) = base_lin(&net, &scens);
            let ef = build_extensive_form(&net, &scens, &lin, &cfg).unwrap();
            solve_mip(&ef.instance, &MipConfig::default()).unwrap().objective
        };
        let wide = obj(&feeder);
        let tight = obj(&narrow);
        assert!(wide <= tight + 1e-6, "wide {wide} > narrow {tight}");
    }

    #[test]
    fn scenario_blocks_decompose_once_first_stage_fixed() {
        let net = network();
        let scens = vec![over_voltage_scenario("s1", 0.5), benign_scenario("s2", 0.5)];
        let (_, lin) = base_lin(&net, &scens);
        let cfg = PlannerConfig::default();
        let ef = build_extensive_form(&net, &scens, &lin, &cfg).unwrap();
        let mip = solve_mip(&ef.instance, &MipConfig::default()).unwrap();
        assert_eq!(mip.status, MipStatus::Optimal);

        // fix the first stage and solve each scenario block alone
        let x_fix: Vec<f64> = ef.x_pv.iter().map(|&v| mip.values[v.0].round()).collect();
        let mut sum = cfg.w_c * {
            let mut seen = std::collections::BTreeSet::new();
            ef.x_pv
                .iter()
                .zip(&x_fix)
                .filter(|(&v, &x)| seen.insert(v) && x > 0.5)
                .count() as f64
        };
        for (s_idx, scen) in scens.iter().enumerate() {
            let one = vec![scen.clone()];
            let one_lin = vec![LinearizationPoint {
                v_hat: lin[s_idx].v_hat.clone(),
                i_inj_hat: lin[s_idx].i_inj_hat.clone(),
            }];
            let mut sub_ef = build_extensive_form(&net, &one, &one_lin, &cfg).unwrap();
            for (c, &xv) in x_fix.iter().enumerate() {
                sub_ef.instance.set_bounds(sub_ef.x_pv[c], xv, xv);
            }
            let sub = solve_mip(&sub_ef.instance, &MipConfig::default()).unwrap();
            assert_eq!(sub.status, MipStatus::Optimal);
            // strip the first-stage cost this block re-counts
            let mut seen = std::collections::BTreeSet::new();
            let fs: f64 = cfg.w_c
                * sub_ef
                    .x_pv
                    .iter()
                    .zip(&x_fix)
                    .filter(|(&v, &x)| seen.insert(v) && x > 0.5)
                    .count() as f64;
            sum += sub.objective - fs;
        }
        assert!(
            (sum - mip.objective).abs() < 1e-5,
            "decomposed {sum} vs extensive {}",
            mip.objective
        );
    }

    #[test]
    fn aggregated_placement_shares_bus_decision() {
        // move pv2 to the same bus as pv1 and aggregate
        let mut feeder = parse_feeder(PLAN_FEEDER).unwrap();
        feeder.pv_units[1].node = PhaseNodeId::new("m2", Phase::A);
        let net = Network::new(&feeder).unwrap();
        let scens = vec![over_voltage_scenario("ov", 1.0)];
        let (_, lin) = base_lin(&net, &scens);
        let cfg = PlannerConfig { aggregate_per_bus: true, ..Default::default() };
        let ef = build_extensive_form(&net, &scens, &lin, &cfg).unwrap();
        assert_eq!(ef.x_pv[0], ef.x_pv[1], "same bus shares one first-stage binary");
    }

    #[test]
    fn plan_text_round_trip() {
        let net = network();
        let scens = vec![over_voltage_scenario("ov", 1.0)];
        let plan = solve_placement(&net, &scens, &PlannerConfig::default()).unwrap();
        let text = plan.to_text();
        let back = PlacementPlan::parse(&text).unwrap();
        assert_eq!(back.placements, plan.placements);
        assert_eq!(back.scenarios.len(), plan.scenarios.len());
        assert_eq!(back.scenarios[0].on, plan.scenarios[0].on);
        assert_eq!(back.scenarios[0].pv, plan.scenarios[0].pv);
        assert_eq!(text, back.to_text());
    }
}
