//! Validation engines: quasi-static droop equilibrium (VAr priority),
//! quasi-static time-series over a day of operating points, and a simplified
//! phasor-domain dynamic check of control enablement.
//!
//! The inverter control loop is reduced to a first-order lag with response
//! time `tau`, sampled every `dt`: the network is solved algebraically at
//! each sample and each active inverter tracks its droop target
//! `q_of_v(|V|)` through the lag.  Active power follows the VAr-priority
//! headroom `min(mpp, sqrt(S^2 - Q^2))` through the same lag and is clamped
//! to the rating.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::feeder::{Feeder, FeederError, PhaseNodeId, Scenario};
use crate::powerflow::{Network, PowerFlowError, PowerFlowSolution};
use crate::qvcurve::{s_rating, QVCurve};

const FIXED_POINT_TOL: f64 = 1e-6;
const FIXED_POINT_CAP: usize = 200;
/// Oscillation window: trailing update deltas inspected per inverter.
const OSC_WINDOW: usize = 20;
/// Minimum sign alternations within the window to call it an oscillation.
const OSC_MIN_FLIPS: usize = 12;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("droop oscillation detected at {}", ids.join(", "))]
    Oscillation {
        ids: Vec<String>,
        /// (inverter, min Q, max Q) over the oscillation window.
        envelope: Vec<(String, f64, f64)>,
    },
    #[error("fixed point stalled after {iterations} iterations (residual {residual:.3e})")]
    Stall { iterations: usize, residual: f64 },
    #[error("voltage diverged: |V|={vmag:.3} pu at {node}, t={t:.4}s")]
    Divergence { node: String, vmag: f64, t: f64 },
    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<SimError>,
    },
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
    #[error(transparent)]
    Feeder(#[from] FeederError),
    #[error("unknown inverter id {0}")]
    UnknownInverter(String),
}

/// First-order closed-loop parameters of the reduced inverter model.
#[derive(Debug, Clone, Copy)]
pub struct InverterDynamics {
    /// Response time constant of the closed current loop (s).
    pub tau: f64,
    /// Control sample step (s).
    pub dt: f64,
    /// Volt-VAr enable time (s).
    pub t_on: f64,
    /// Damping of the quasi-static fixed point; 1 is the undamped droop
    /// iteration used in oscillation studies.
    pub alpha: f64,
}

impl Default for InverterDynamics {
    fn default() -> Self {
        Self { tau: 0.020, dt: 0.001, t_on: 0.04, alpha: 0.5 }
    }
}

impl InverterDynamics {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0 && self.dt < self.tau) {
            return Err(SimError::Stall { iterations: 0, residual: f64::NAN });
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(SimError::Stall { iterations: 0, residual: f64::NAN });
        }
        Ok(())
    }
}

struct ActiveInverter {
    id: String,
    node: usize,
    curve: QVCurve,
    mpp: f64,
    s_rating: f64,
}

fn prepare_active(
    network: &Network,
    scenario: &Scenario,
    active: &[String],
    curve_overrides: &BTreeMap<String, QVCurve>,
) -> Result<Vec<ActiveInverter>, SimError> {
    let sb = network.feeder.s_base_kva;
    let mut out = Vec::new();
    for id in active {
        let pv = network
            .feeder
            .pv(id)
            .ok_or_else(|| SimError::UnknownInverter(id.clone()))?;
        let curve = curve_overrides
            .get(id)
            .cloned()
            .or_else(|| pv.curve.clone())
            .ok_or_else(|| SimError::UnknownInverter(format!("{id} has no droop curve")))?;
        let node = network.pv_node(id).ok_or_else(|| SimError::UnknownInverter(id.clone()))?;
        let mpp = scenario.mpp.get(id).copied().unwrap_or(0.0) / sb;
        out.push(ActiveInverter {
            id: id.clone(),
            node,
            curve: curve.clone(),
            mpp,
            s_rating: s_rating(curve.q_max(), pv.p_rated),
        });
    }
    Ok(out)
}

fn var_priority_p(inv: &ActiveInverter, q: f64) -> f64 {
    let headroom = (inv.s_rating * inv.s_rating - q * q).max(0.0).sqrt();
    inv.mpp.min(headroom)
}

/// Detects a sustained bounded oscillation in a delta history: enough sign
/// alternations over the trailing window with a non-decaying amplitude
/// envelope.
fn oscillating(deltas: &[f64]) -> bool {
    if deltas.len() < OSC_WINDOW {
        return false;
    }
    let w = &deltas[deltas.len() - OSC_WINDOW..];
    let flips = w.windows(2).filter(|p| p[0] * p[1] < 0.0).count();
    if flips < OSC_MIN_FLIPS {
        return false;
    }
    let half = OSC_WINDOW / 2;
    let first: f64 = w[..half].iter().fold(0.0f64, |a, &d| a.max(d.abs()));
    let second: f64 = w[half..].iter().fold(0.0f64, |a, &d| a.max(d.abs()));
    second >= 0.6 * first && second > 10.0 * FIXED_POINT_TOL
}

/// Outcome of the quasi-static droop equilibrium.
pub struct FixedPointResult {
    pub solution: PowerFlowSolution,
    /// Per active inverter: (P, Q) pu.
    pub pv_output: BTreeMap<String, (f64, f64)>,
    pub iterations: usize,
}

/// Damped droop iteration to the control equilibrium under one operating
/// condition.  Inverters not listed in `active` run at their maximum power
/// point with zero reactive output.
pub fn volt_var_fixed_point(
    network: &Network,
    scenario: &Scenario,
    active: &[String],
    curve_overrides: &BTreeMap<String, QVCurve>,
    alpha: f64,
) -> Result<FixedPointResult, SimError> {
    assert!(alpha > 0.0 && alpha <= 1.0, "damping must lie in (0,1]");
    let invs = prepare_active(network, scenario, active, curve_overrides)?;
    let mut q: Vec<f64> = vec![0.0; invs.len()];
    let mut deltas: Vec<Vec<f64>> = vec![Vec::new(); invs.len()];

    let mut last_residual = f64::INFINITY;
    for it in 0..FIXED_POINT_CAP {
        let mut setpoints = BTreeMap::new();
        for (k, inv) in invs.iter().enumerate() {
            setpoints.insert(inv.id.clone(), (var_priority_p(inv, q[k]), q[k]));
        }
        let sol = network.solve_nonlinear(scenario, &setpoints)?;
        let mut max_dq = 0.0f64;
        for (k, inv) in invs.iter().enumerate() {
            let vm = sol.v[inv.node].norm();
            let target = inv.curve.q_of_v(vm).q;
            let next = (1.0 - alpha) * q[k] + alpha * target;
            let d = next - q[k];
            deltas[k].push(d);
            max_dq = max_dq.max(d.abs());
            q[k] = next;
        }
        last_residual = max_dq;
        if max_dq <= FIXED_POINT_TOL {
            let mut pv_output = BTreeMap::new();
            for (k, inv) in invs.iter().enumerate() {
                pv_output.insert(inv.id.clone(), (var_priority_p(inv, q[k]), q[k]));
            }
            return Ok(FixedPointResult { solution: sol, pv_output, iterations: it + 1 });
        }
        let osc: Vec<usize> =
            (0..invs.len()).filter(|&k| oscillating(&deltas[k])).collect();
        if !osc.is_empty() {
            let ids: Vec<String> = osc.iter().map(|&k| invs[k].id.clone()).collect();
            let envelope = osc
                .iter()
                .map(|&k| {
                    let w = &deltas[k][deltas[k].len() - OSC_WINDOW..];
                    let hist: Vec<f64> = w
                        .iter()
                        .scan(q[k], |acc, &d| {
                            *acc -= d;
                            Some(*acc)
                        })
                        .collect();
                    let lo = hist.iter().fold(f64::INFINITY, |a, &b| a.min(b));
                    let hi = hist.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                    (invs[k].id.clone(), lo, hi)
                })
                .collect();
            return Err(SimError::Oscillation { ids, envelope });
        }
    }
    Err(SimError::Stall { iterations: FIXED_POINT_CAP, residual: last_residual })
}

/// A day (or any horizon) of operating points for the quasi-static study.
#[derive(Debug, Clone)]
pub struct TimeSeriesInput {
    pub step_minutes: f64,
    /// Per-step operating condition; probability fields are ignored.
    pub steps: Vec<Scenario>,
}

impl TimeSeriesInput {
    pub fn validate(&self, feeder: &Feeder) -> Result<(), FeederError> {
        if self.steps.is_empty() {
            return Err(FeederError::Validation("time series has no steps".into()));
        }
        for s in &self.steps {
            s.validate(feeder)?;
        }
        Ok(())
    }
}

/// Parses a `[series]` header plus `[step <k>]` blocks (same row syntax as
/// scenarios, no probability).
pub fn parse_timeseries(text: &str, feeder: &Feeder) -> Result<TimeSeriesInput, FeederError> {
    let mut step_minutes = 60.0;
    let mut blocks: Vec<(usize, String)> = Vec::new();
    for raw in text.lines() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.starts_with("[series]") {
            continue;
        }
        if let Some(rest) = line.strip_prefix("[step") {
            let id = rest.trim_end_matches(']').trim();
            blocks.push((blocks.len(), format!("[scenario step{id}]\nprobability = 1\n")));
            continue;
        }
        if line.is_empty() {
            continue;
        }
        if let Some((k, v)) = line.split_once('=') {
            if k.trim() == "step_minutes" && blocks.is_empty() {
                step_minutes = v
                    .trim()
                    .parse()
                    .map_err(|_| FeederError::Validation("bad step_minutes".into()))?;
                continue;
            }
        }
        match blocks.last_mut() {
            Some((_, text)) => {
                text.push_str(line);
                text.push('\n');
            }
            None => {
                return Err(FeederError::Validation(
                    "time-series data before any [step] header".into(),
                ))
            }
        }
    }
    let mut steps = Vec::new();
    for (_, block) in blocks {
        // reuse the scenario row parser one block at a time (sum-to-one
        // normalization applies per block with probability 1)
        let mut scen = crate::feeder::parse_scenarios(&block, feeder)?;
        steps.push(scen.remove(0));
    }
    let input = TimeSeriesInput { step_minutes, steps };
    input.validate(feeder)?;
    Ok(input)
}

pub fn load_timeseries(
    path: impl AsRef<Path>,
    feeder: &Feeder,
) -> Result<TimeSeriesInput, FeederError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| FeederError::Io { path: path.display().to_string(), source: e })?;
    parse_timeseries(&text, feeder)
}

#[derive(Debug, Clone)]
pub struct Violation {
    pub step: usize,
    pub node: PhaseNodeId,
    pub vmag: f64,
    /// The violated bound (v_min or v_max).
    pub bound: f64,
}

pub struct QuasiStaticResult {
    pub per_step: Vec<FixedPointResult>,
    pub violations: Vec<Violation>,
}

/// Runs the droop equilibrium at every step and logs voltage-bound
/// violations against the feeder limits.
pub fn run_quasi_static(
    network: &Network,
    active: &[String],
    input: &TimeSeriesInput,
    alpha: f64,
) -> Result<QuasiStaticResult, SimError> {
    let mut per_step = Vec::with_capacity(input.steps.len());
    let mut violations = Vec::new();
    let (v_min, v_max) = (network.feeder.v_min, network.feeder.v_max);
    for (k, step) in input.steps.iter().enumerate() {
        let fp = volt_var_fixed_point(network, step, active, &BTreeMap::new(), alpha)
            .map_err(|e| SimError::Step { step: k, source: Box::new(e) })?;
        for (i, node) in network.nodes().iter().enumerate() {
            let vm = fp.solution.v[i].norm();
            if vm > v_max {
                violations.push(Violation { step: k, node: node.clone(), vmag: vm, bound: v_max });
            } else if vm < v_min {
                violations.push(Violation { step: k, node: node.clone(), vmag: vm, bound: v_min });
            }
        }
        per_step.push(fp);
    }
    Ok(QuasiStaticResult { per_step, violations })
}

/// Sampled trajectories of the dynamic enablement study.
#[derive(Debug, Clone)]
pub struct DynamicTrace {
    pub t: Vec<f64>,
    pub monitored: Vec<PhaseNodeId>,
    /// Voltage magnitude per monitored node, one series per node.
    pub v_mag: Vec<Vec<f64>>,
    pub inverters: Vec<String>,
    pub p: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub settled: bool,
    /// Time from enable to the start of the settled band (s).
    pub settling_time: Option<f64>,
}

impl DynamicTrace {
    pub fn sample_at(&self, t: f64) -> usize {
        self.t
            .iter()
            .position(|&x| x >= t)
            .unwrap_or(self.t.len().saturating_sub(1))
    }
}

/// Phasor-domain enablement study: the network is solved algebraically every
/// `dyn_params.dt`; inverter outputs are frozen at `(mpp, 0)` before `t_on`
/// and track the droop through the first-order lag afterwards.
pub fn run_dynamic_enable(
    network: &Network,
    scenario: &Scenario,
    active: &[String],
    curve_overrides: &BTreeMap<String, QVCurve>,
    dyn_params: &InverterDynamics,
    monitored: &[PhaseNodeId],
    duration: f64,
) -> Result<DynamicTrace, SimError> {
    dyn_params.validate()?;
    let invs = prepare_active(network, scenario, active, curve_overrides)?;
    let monitored_idx: Vec<usize> = monitored
        .iter()
        .map(|m| {
            network
                .node_index(m)
                .ok_or_else(|| SimError::UnknownInverter(m.to_string()))
        })
        .collect::<Result<_, _>>()?;

    let nsteps = (duration / dyn_params.dt).ceil() as usize;
    let mut q: Vec<f64> = vec![0.0; invs.len()];
    let mut p: Vec<f64> = invs.iter().map(|i| i.mpp).collect();
    let mut deltas: Vec<Vec<f64>> = vec![Vec::new(); invs.len()];

    let mut trace = DynamicTrace {
        t: Vec::with_capacity(nsteps + 1),
        monitored: monitored.to_vec(),
        v_mag: vec![Vec::with_capacity(nsteps + 1); monitored.len()],
        inverters: invs.iter().map(|i| i.id.clone()).collect(),
        p: vec![Vec::with_capacity(nsteps + 1); invs.len()],
        q: vec![Vec::with_capacity(nsteps + 1); invs.len()],
        settled: false,
        settling_time: None,
    };

    for step in 0..=nsteps {
        let t = step as f64 * dyn_params.dt;
        let mut setpoints = BTreeMap::new();
        for (k, inv) in invs.iter().enumerate() {
            setpoints.insert(inv.id.clone(), (p[k], q[k]));
        }
        let sol = network.solve_nonlinear(scenario, &setpoints)?;
        for (i, v) in sol.v.iter().enumerate() {
            let vm = v.norm();
            if !(0.5..=1.5).contains(&vm) {
                return Err(SimError::Divergence {
                    node: network.nodes()[i].to_string(),
                    vmag: vm,
                    t,
                });
            }
        }
        trace.t.push(t);
        for (m, &idx) in monitored_idx.iter().enumerate() {
            trace.v_mag[m].push(sol.v[idx].norm());
        }
        for k in 0..invs.len() {
            trace.p[k].push(p[k]);
            trace.q[k].push(q[k]);
        }

        if t >= dyn_params.t_on {
            let gain = dyn_params.dt / dyn_params.tau;
            for (k, inv) in invs.iter().enumerate() {
                let vm = sol.v[inv.node].norm();
                let q_target = inv.curve.q_of_v(vm).q;
                let dq = gain * (q_target - q[k]);
                deltas[k].push(dq);
                q[k] += dq;
                let p_target = var_priority_p(inv, q[k]);
                p[k] += gain * (p_target - p[k]);
                // rating is hard-enforced sample by sample
                let headroom = (inv.s_rating * inv.s_rating - q[k] * q[k]).max(0.0).sqrt();
                p[k] = p[k].min(headroom);
            }
            let osc: Vec<usize> =
                (0..invs.len()).filter(|&k| oscillating(&deltas[k])).collect();
            if !osc.is_empty() {
                let ids: Vec<String> = osc.iter().map(|&k| invs[k].id.clone()).collect();
                let envelope = osc
                    .iter()
                    .map(|&k| {
                        let qs = &trace.q[k][trace.q[k].len().min(OSC_WINDOW)..];
                        let lo = qs.iter().fold(f64::INFINITY, |a, &b| a.min(b));
                        let hi = qs.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                        (invs[k].id.clone(), lo, hi)
                    })
                    .collect();
                return Err(SimError::Oscillation { ids, envelope });
            }
        }
    }

    // settled when every monitored voltage stays inside a 0.2% relative band
    // from some time to the end, for at least five time constants
    let band = 0.002;
    let window = 5.0 * dyn_params.tau;
    let n = trace.t.len();
    let mut settle_idx: Option<usize> = None;
    'outer: for s in 0..n {
        if trace.t[s] < dyn_params.t_on || trace.t[n - 1] - trace.t[s] < window {
            continue;
        }
        for series in &trace.v_mag {
            let seg = &series[s..];
            let lo = seg.iter().fold(f64::INFINITY, |a, &b| a.min(b));
            let hi = seg.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let mean = seg.iter().sum::<f64>() / seg.len() as f64;
            if (hi - lo) / mean > band {
                continue 'outer;
            }
        }
        settle_idx = Some(s);
        break;
    }
    if let Some(s) = settle_idx {
        trace.settled = true;
        trace.settling_time = Some(trace.t[s] - dyn_params.t_on);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::{parse_feeder, Phase};

    const SIM_FEEDER: &str = "\
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
l1 sub m1 a r= 0.02 x= 0.03
l2 m1 m2 a r= 0.02 x= 0.03

[loads]
ld1 m2 a

[pv]
pv1 m2 a 0.3 0.8 1 qv= 0.0 0.94 0.98 1.02 1.06 1.1
pv2 m1 a 0.2 0.8 1 qv= 0.0 0.94 0.98 1.02 1.06 1.1
";

    fn scenario(load_kw: f64, head: f64, mpp1: f64, mpp2: f64) -> Scenario {
        Scenario {
            id: "s".into(),
            probability: 1.0,
            demand: [(PhaseNodeId::new("m2", Phase::A), (load_kw, load_kw * 0.4))]
                .into_iter()
                .collect(),
            mpp: [("pv1".to_string(), mpp1), ("pv2".to_string(), mpp2)].into_iter().collect(),
            feeder_head: [(Phase::A, (head, 0.0))].into_iter().collect(),
            weights: (1e3, 1e4),
        }
    }

    fn network() -> Network {
        Network::new(&parse_feeder(SIM_FEEDER).unwrap()).unwrap()
    }

    #[test]
    fn no_active_inverters_is_plain_power_flow() {
        let net = network();
        let scen = scenario(50.0, 1.0, 100.0, 50.0);
        let fp = volt_var_fixed_point(&net, &scen, &[], &BTreeMap::new(), 0.5).unwrap();
        assert_eq!(fp.iterations, 1);
        let plain = net.solve_nonlinear(&scen, &BTreeMap::new()).unwrap();
        for (a, b) in fp.solution.v.iter().zip(&plain.v) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn deadband_converges_first_iteration_with_zero_q() {
        let net = network();
        // light conditions keep every voltage inside the dead band
        let scen = scenario(20.0, 1.0, 30.0, 20.0);
        let fp = volt_var_fixed_point(
            &net,
            &scen,
            &["pv1".into(), "pv2".into()],
            &BTreeMap::new(),
            0.5,
        )
        .unwrap();
        assert_eq!(fp.iterations, 1);
        for (_, (p, q)) in &fp.pv_output {
            assert_eq!(*q, 0.0);
            assert!(*p > 0.0);
        }
    }

    #[test]
    fn over_voltage_absorbs_and_lowers() {
        let net = network();
        let scen = scenario(20.0, 1.02, 300.0, 200.0);
        let base = net.solve_nonlinear(&scen, &BTreeMap::new()).unwrap();
        let fp = volt_var_fixed_point(
            &net,
            &scen,
            &["pv1".into(), "pv2".into()],
            &BTreeMap::new(),
            0.5,
        )
        .unwrap();
        let node = net.pv_node("pv1").unwrap();
        assert!(fp.solution.v[node].norm() < base.v[node].norm());
        let (_, q) = fp.pv_output["pv1"];
        assert!(q < 0.0);
        // equilibrium consistency: Q matches the curve at the settled voltage
        let pv = net.feeder.pv("pv1").unwrap();
        let want = pv.curve.as_ref().unwrap().q_of_v(fp.solution.v[node].norm()).q;
        assert!((q - want).abs() < 1e-4);
    }

    #[test]
    fn steep_curve_oscillates_and_gain_exceeds_one() {
        let net = network();
        let scen = scenario(20.0, 1.02, 300.0, 200.0);
        let mut over = BTreeMap::new();
        for id in ["pv1", "pv2"] {
            let c = net.feeder.pv(id).unwrap().curve.clone().unwrap();
            over.insert(id.to_string(), c.steepened(50.0).unwrap());
        }
        let res = volt_var_fixed_point(
            &net,
            &scen,
            &["pv1".into(), "pv2".into()],
            &over,
            1.0,
        );
        match res {
            Err(SimError::Oscillation { ids, .. }) => assert!(!ids.is_empty()),
            other => panic!("expected oscillation, got {:?}", other.is_ok()),
        }

        // independent check: spectral radius of the 2x2 finite-difference
        // loop gain at a band-interior point exceeds one
        let invs = ["pv1", "pv2"];
        let curves: Vec<QVCurve> = invs.iter().map(|id| over[*id].clone()).collect();
        let target = |qs: [f64; 2]| -> [f64; 2] {
            let mut sp = BTreeMap::new();
            for (k, id) in invs.iter().enumerate() {
                let pv = net.feeder.pv(id).unwrap();
                let mpp = scen.mpp[*id] / net.feeder.s_base_kva;
                let s = s_rating(pv.curve.as_ref().unwrap().q_max(), pv.p_rated);
                let head = (s * s - qs[k] * qs[k]).max(0.0).sqrt();
                sp.insert(id.to_string(), (mpp.min(head), qs[k]));
            }
            let sol = net.solve_nonlinear(&scen, &sp).unwrap();
            [0, 1].map(|k| {
                let n = net.pv_node(invs[k]).unwrap();
                curves[k].q_of_v(sol.v[n].norm()).q
            })
        };
        // bisect a uniform scaling of full absorption until pv1's voltage
        // lands inside the steepened falling segment
        let vb = curves[0].v_break();
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..40 {
            let t = 0.5 * (lo + hi);
            let qs = [-t * curves[0].q_max(), -t * curves[1].q_max()];
            let mut sp = BTreeMap::new();
            for (k, id) in invs.iter().enumerate() {
                let pv = net.feeder.pv(id).unwrap();
                let mpp = scen.mpp[*id] / net.feeder.s_base_kva;
                let s = s_rating(pv.curve.as_ref().unwrap().q_max(), pv.p_rated);
                let head = (s * s - qs[k] * qs[k]).max(0.0).sqrt();
                sp.insert(id.to_string(), (mpp.min(head), qs[k]));
            }
            let sol = net.solve_nonlinear(&scen, &sp).unwrap();
            let vm = sol.v[net.pv_node("pv1").unwrap()].norm();
            if vm > 0.5 * (vb[3] + vb[4]) {
                lo = t;
            } else {
                hi = t;
            }
        }
        let t = 0.5 * (lo + hi);
        let q0 = [-t * curves[0].q_max(), -t * curves[1].q_max()];
        let f0 = target(q0);
        let h = 1e-7;
        let mut g = [[0.0; 2]; 2];
        for j in 0..2 {
            let mut qp = q0;
            qp[j] += h;
            let f = target(qp);
            for i in 0..2 {
                g[i][j] = (f[i] - f0[i]) / h;
            }
        }
        // spectral radius of a 2x2 matrix
        let tr = g[0][0] + g[1][1];
        let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
        let disc = tr * tr - 4.0 * det;
        let rho = if disc >= 0.0 {
            let r = disc.sqrt();
            ((tr + r) / 2.0).abs().max(((tr - r) / 2.0).abs())
        } else {
            det.abs().sqrt()
        };
        assert!(rho > 1.0, "loop gain spectral radius {rho} should exceed 1");
    }

    #[test]
    fn dynamic_matches_fixed_point_for_fast_tau() {
        let net = network();
        let scen = scenario(20.0, 1.02, 300.0, 200.0);
        let active = vec!["pv1".to_string(), "pv2".to_string()];
        let fp = volt_var_fixed_point(&net, &scen, &active, &BTreeMap::new(), 0.5).unwrap();
        let dyn_params = InverterDynamics { tau: 0.01, dt: 0.001, t_on: 0.04, alpha: 0.5 };
        let monitored = vec![PhaseNodeId::new("m2", Phase::A)];
        let trace = run_dynamic_enable(
            &net,
            &scen,
            &active,
            &BTreeMap::new(),
            &dyn_params,
            &monitored,
            1.0,
        )
        .unwrap();
        assert!(trace.settled, "trace should settle");
        for (k, id) in trace.inverters.iter().enumerate() {
            let q_end = *trace.q[k].last().unwrap();
            let (_, q_fp) = fp.pv_output[id];
            assert!((q_end - q_fp).abs() < 1e-4, "{id}: {q_end} vs {q_fp}");
        }
        let vm_end = *trace.v_mag[0].last().unwrap();
        let node = net.node_index(&monitored[0]).unwrap();
        assert!((vm_end - fp.solution.v[node].norm()).abs() < 1e-4);
    }

    #[test]
    fn dynamic_steep_curve_oscillates() {
        let net = network();
        let scen = scenario(20.0, 1.02, 300.0, 200.0);
        let mut over = BTreeMap::new();
        for id in ["pv1", "pv2"] {
            let c = net.feeder.pv(id).unwrap().curve.clone().unwrap();
            over.insert(id.to_string(), c.steepened(50.0).unwrap());
        }
        let dyn_params = InverterDynamics { tau: 0.002, dt: 0.001, t_on: 0.04, alpha: 0.5 };
        let res = run_dynamic_enable(
            &net,
            &scen,
            &["pv1".into(), "pv2".into()],
            &over,
            &dyn_params,
            &[PhaseNodeId::new("m2", Phase::A)],
            0.5,
        );
        assert!(matches!(res, Err(SimError::Oscillation { .. })));
    }

    #[test]
    fn night_steps_identical_with_and_without_control() {
        let net = network();
        let mut night = scenario(30.0, 1.0, 0.0, 0.0);
        night.mpp.insert("pv1".into(), 0.0);
        night.mpp.insert("pv2".into(), 0.0);
        let input = TimeSeriesInput { step_minutes: 60.0, steps: vec![night] };
        let with = run_quasi_static(&net, &["pv1".into(), "pv2".into()], &input, 0.5).unwrap();
        let without = run_quasi_static(&net, &[], &input, 0.5).unwrap();
        for (a, b) in with.per_step[0]
            .solution
            .v
            .iter()
            .zip(&without.per_step[0].solution.v)
        {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn timeseries_parser_round_trip() {
        let f = parse_feeder(SIM_FEEDER).unwrap();
        let text = "\
[series]
step_minutes = 60

[step 0]
feeder_head = a,1.0,0.0
demand = m2,a,30,12
mpp = pv1,0

[step 1]
feeder_head = a,1.02,0.0
demand = m2,a,20,8
mpp = pv1,250
mpp = pv2,150
";
        let ts = parse_timeseries(text, &f).unwrap();
        assert_eq!(ts.steps.len(), 2);
        assert_eq!(ts.step_minutes, 60.0);
        assert_eq!(ts.steps[1].mpp["pv1"], 250.0);
    }
}
