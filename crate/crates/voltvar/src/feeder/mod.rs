//! Immutable feeder description and operating scenarios.
//!
//! A [`Feeder`] is the validated network graph (buses, multiphase line
//! segments, transformers, loads, PV units, one substation) plus bases and
//! voltage limits.  A [`Scenario`] is one worst-case operating condition:
//! per-load demand, per-PV maximum power point, the feeder-head voltage
//! phasor measured before any Volt-VAr control, and objective weights.
//! Both are plain data, immutable after construction and safe to share
//! across threads.

pub mod parse;

pub use parse::{load_feeder, load_scenarios, parse_feeder, parse_scenarios, serialize_feeder};

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::qvcurve::QVCurve;

#[derive(Debug, Error)]
pub enum FeederError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("unit error: {0}")]
    Unit(String),
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    pub fn letter(self) -> char {
        match self {
            Phase::A => 'a',
            Phase::B => 'b',
            Phase::C => 'c',
        }
    }

    pub fn from_letter(c: char) -> Option<Phase> {
        match c.to_ascii_lowercase() {
            'a' => Some(Phase::A),
            'b' => Some(Phase::B),
            'c' => Some(Phase::C),
            _ => None,
        }
    }

    /// Nominal phasor rotation for a balanced set: a at 0, b at -120, c at
    /// +120 degrees.
    pub fn rotation(self) -> (f64, f64) {
        match self {
            Phase::A => (1.0, 0.0),
            Phase::B => (-0.5, -0.8660254037844386),
            Phase::C => (-0.5, 0.8660254037844386),
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// One bus-phase position on the feeder.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PhaseNodeId {
    pub bus: String,
    pub phase: Phase,
}

impl PhaseNodeId {
    pub fn new(bus: impl Into<String>, phase: Phase) -> Self {
        Self { bus: bus.into(), phase }
    }
}

impl fmt::Display for PhaseNodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.bus, self.phase)
    }
}

/// Symmetric per-phase-pair matrix stored dense row-major over the declared
/// phases of its owner (absent phases are omitted, not zero-padded).
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMatrix {
    dim: usize,
    vals: Vec<f64>,
}

impl PhaseMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, vals: vec![0.0; dim * dim] }
    }

    /// Builds from a row-major lower triangle (`d*(d+1)/2` values).
    pub fn from_lower_triangle(dim: usize, tri: &[f64]) -> Option<Self> {
        if tri.len() != dim * (dim + 1) / 2 {
            return None;
        }
        let mut m = Self::zeros(dim);
        let mut k = 0;
        for i in 0..dim {
            for j in 0..=i {
                m.vals[i * dim + j] = tri[k];
                m.vals[j * dim + i] = tri[k];
                k += 1;
            }
        }
        Some(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.vals[i * self.dim + j]
    }

    pub fn lower_triangle(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim * (self.dim + 1) / 2);
        for i in 0..self.dim {
            for j in 0..=i {
                out.push(self.get(i, j));
            }
        }
        out
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self { dim: self.dim, vals: self.vals.iter().map(|v| v * factor).collect() }
    }

    pub fn is_zero(&self) -> bool {
        self.vals.iter().all(|&v| v == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: String,
    pub phases: Vec<Phase>,
    /// Optional plot coordinates.
    pub x: Option<f64>,
    pub y: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSegment {
    pub id: String,
    pub from_bus: String,
    pub to_bus: String,
    pub phases: Vec<Phase>,
    /// Series resistance (ohm, or pu when the feeder is per-unit).
    pub r: PhaseMatrix,
    /// Series reactance.
    pub x: PhaseMatrix,
    /// Total shunt susceptance (S or pu), applied half at each terminal.
    pub y_shunt: PhaseMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transformer {
    pub id: String,
    pub from_bus: String,
    pub to_bus: String,
    pub phases: Vec<Phase>,
    /// Per-phase series resistance (no mutual coupling).
    pub r: Vec<f64>,
    pub x: Vec<f64>,
    /// Per-phase no-load loss, drawn at the to-bus (kW, or pu when per-unit).
    pub no_load_loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Load {
    pub id: String,
    pub node: PhaseNodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PVUnit {
    pub id: String,
    pub node: PhaseNodeId,
    /// Inverter active-power rating (kW, or pu when per-unit).
    pub p_rated: f64,
    /// Minimum operating power factor at rated output.
    pub pf_min: f64,
    /// Member of the smart-inverter candidate pool.
    pub candidate: bool,
    pub curve: Option<QVCurve>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Units {
    Physical,
    PerUnit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feeder {
    pub buses: Vec<Bus>,
    pub lines: Vec<LineSegment>,
    pub transformers: Vec<Transformer>,
    pub loads: Vec<Load>,
    pub pv_units: Vec<PVUnit>,
    pub substation: String,
    /// Per-phase voltage base, volts.
    pub v_base_v: f64,
    /// Per-phase power base, kVA.
    pub s_base_kva: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub units: Units,
}

impl Feeder {
    pub fn bus(&self, id: &str) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    /// All node-phases in deterministic order (bus file order, phase order).
    pub fn node_phases(&self) -> Vec<PhaseNodeId> {
        let mut out = Vec::new();
        for b in &self.buses {
            for &p in &b.phases {
                out.push(PhaseNodeId::new(b.id.clone(), p));
            }
        }
        out
    }

    /// Count of (branch, phase) pairs including transformer branches.
    pub fn branch_phase_count(&self) -> usize {
        self.lines.iter().map(|l| l.phases.len()).sum::<usize>()
            + self.transformers.iter().map(|t| t.phases.len()).sum::<usize>()
    }

    pub fn pv(&self, id: &str) -> Option<&PVUnit> {
        self.pv_units.iter().find(|p| p.id == id)
    }

    pub fn candidates(&self) -> Vec<&PVUnit> {
        self.pv_units.iter().filter(|p| p.candidate).collect()
    }

    /// Inverter active rating in kW regardless of the feeder's unit state.
    pub fn p_rated_kw(&self, pv: &PVUnit) -> f64 {
        match self.units {
            Units::Physical => pv.p_rated,
            Units::PerUnit => pv.p_rated * self.s_base_kva,
        }
    }

    pub fn zbase_ohm(&self) -> f64 {
        self.v_base_v * self.v_base_v / (self.s_base_kva * 1000.0)
    }

    /// Converts every impedance, admittance and power rating to per-unit on
    /// `(v_base_v, s_base_kva)`.  Already-converted feeders pass through
    /// unchanged, so the conversion is idempotent.
    pub fn to_per_unit(&self) -> Result<Feeder, FeederError> {
        if !(self.v_base_v > 0.0) || !(self.s_base_kva > 0.0) {
            return Err(FeederError::Unit(format!(
                "bases must be positive (v_base={} V, s_base={} kVA)",
                self.v_base_v, self.s_base_kva
            )));
        }
        if self.units == Units::PerUnit {
            return Ok(self.clone());
        }
        let zbase = self.zbase_ohm();
        let mut out = self.clone();
        for l in &mut out.lines {
            l.r = l.r.scale(1.0 / zbase);
            l.x = l.x.scale(1.0 / zbase);
            l.y_shunt = l.y_shunt.scale(zbase);
        }
        for t in &mut out.transformers {
            for v in t.r.iter_mut() {
                *v /= zbase;
            }
            for v in t.x.iter_mut() {
                *v /= zbase;
            }
            for v in t.no_load_loss.iter_mut() {
                *v /= self.s_base_kva;
            }
        }
        for pv in &mut out.pv_units {
            pv.p_rated /= self.s_base_kva;
            if let Some(c) = &pv.curve {
                // q_max is derived from p_rated, so it scales the same way
                pv.curve = Some(
                    QVCurve::new(c.v_break(), c.q_max() / self.s_base_kva)
                        .expect("scaling keeps the curve valid"),
                );
            }
        }
        out.units = Units::PerUnit;
        Ok(out)
    }

    /// Full invariant check; every load/parse path runs this.
    pub fn validate(&self) -> Result<(), FeederError> {
        let verr = |msg: String| Err(FeederError::Validation(msg));
        if !(self.v_base_v > 0.0 && self.v_base_v.is_finite()) {
            return Err(FeederError::Unit(format!(
                "v_base must be positive, got {}",
                self.v_base_v
            )));
        }
        if !(self.s_base_kva > 0.0 && self.s_base_kva.is_finite()) {
            return Err(FeederError::Unit(format!(
                "s_base must be positive, got {}",
                self.s_base_kva
            )));
        }
        if !(self.v_min > 0.0 && self.v_max > self.v_min) {
            return verr(format!(
                "voltage limits must satisfy 0 < v_min < v_max, got [{}, {}]",
                self.v_min, self.v_max
            ));
        }

        let mut bus_phases: BTreeMap<String, BTreeSet<Phase>> = BTreeMap::new();
        for b in &self.buses {
            if b.phases.is_empty() {
                return verr(format!("bus {} declares no phases", b.id));
            }
            if bus_phases.insert(b.id.clone(), b.phases.iter().copied().collect()).is_some() {
                return verr(format!("duplicate bus id {}", b.id));
            }
        }

        if self.bus(&self.substation).is_none() {
            return verr(format!("substation bus {} not declared", self.substation));
        }

        let mut seen_pairs: BTreeSet<(String, String)> = BTreeSet::new();
        let mut branch_ids: BTreeSet<String> = BTreeSet::new();
        let branches: Vec<(&str, &str, &str, &[Phase])> = self
            .lines
            .iter()
            .map(|l| (l.id.as_str(), l.from_bus.as_str(), l.to_bus.as_str(), l.phases.as_slice()))
            .chain(self.transformers.iter().map(|t| {
                (t.id.as_str(), t.from_bus.as_str(), t.to_bus.as_str(), t.phases.as_slice())
            }))
            .collect();
        for (id, from, to, phases) in &branches {
            if !branch_ids.insert(id.to_string()) {
                return verr(format!("duplicate branch id {id}"));
            }
            if from == to {
                return verr(format!("branch {id} connects {from} to itself"));
            }
            let Some(fp) = bus_phases.get(*from) else {
                return verr(format!("branch {id} references unknown bus {from}"));
            };
            let Some(tp) = bus_phases.get(*to) else {
                return verr(format!("branch {id} references unknown bus {to}"));
            };
            if phases.is_empty() {
                return verr(format!("branch {id} declares no phases"));
            }
            for p in *phases {
                if !fp.contains(p) || !tp.contains(p) {
                    return verr(format!("branch {id} uses phase {p} absent at an endpoint"));
                }
            }
            let key = if from < to {
                (from.to_string(), to.to_string())
            } else {
                (to.to_string(), from.to_string())
            };
            if !seen_pairs.insert(key) {
                return verr(format!("parallel duplicate segment {id} between {from} and {to}"));
            }
        }
        for l in &self.lines {
            let d = l.phases.len();
            if l.r.dim() != d || l.x.dim() != d || l.y_shunt.dim() != d {
                return verr(format!("line {} matrix dimension mismatch", l.id));
            }
            for i in 0..d {
                if !(l.r.get(i, i) > 0.0) {
                    return verr(format!(
                        "line {} self-resistance on phase {} must be positive",
                        l.id, l.phases[i]
                    ));
                }
            }
        }
        for t in &self.transformers {
            let d = t.phases.len();
            if t.r.len() != d || t.x.len() != d || t.no_load_loss.len() != d {
                return verr(format!("transformer {} per-phase arrays must have {d} entries", t.id));
            }
            if t.no_load_loss.iter().any(|&v| v < 0.0) {
                return verr(format!("transformer {} no-load loss must be nonnegative", t.id));
            }
            if t.r.iter().zip(&t.x).any(|(&r, &x)| r < 0.0 || (r == 0.0 && x == 0.0)) {
                return verr(format!("transformer {} needs nonnegative R and nonzero impedance", t.id));
            }
        }

        let node_exists = |n: &PhaseNodeId| {
            bus_phases.get(n.bus.as_str()).is_some_and(|ps| ps.contains(&n.phase))
        };
        let mut load_ids = BTreeSet::new();
        for ld in &self.loads {
            if !load_ids.insert(ld.id.clone()) {
                return verr(format!("duplicate load id {}", ld.id));
            }
            if !node_exists(&ld.node) {
                return verr(format!("load {} references unknown node {}", ld.id, ld.node));
            }
        }
        let mut pv_ids = BTreeSet::new();
        for pv in &self.pv_units {
            if !pv_ids.insert(pv.id.clone()) {
                return verr(format!("duplicate pv id {}", pv.id));
            }
            if !node_exists(&pv.node) {
                return verr(format!("pv {} references unknown node {}", pv.id, pv.node));
            }
            if !(pv.p_rated > 0.0) {
                return verr(format!("pv {} rating must be positive", pv.id));
            }
            if !(pv.pf_min > 0.0 && pv.pf_min < 1.0) {
                return verr(format!("pv {} pf_min must lie in (0,1), got {}", pv.id, pv.pf_min));
            }
            if pv.candidate && pv.curve.is_none() {
                return verr(format!("candidate pv {} is missing its droop curve", pv.id));
            }
        }

        // bus-level connectivity from the substation
        let mut adj: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (_, from, to, _) in &branches {
            adj.entry(from).or_default().push(to);
            adj.entry(to).or_default().push(from);
        }
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        let mut queue = VecDeque::from([self.substation.as_str()]);
        seen.insert(&self.substation);
        while let Some(b) = queue.pop_front() {
            for &n in adj.get(b).into_iter().flatten() {
                if seen.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        for b in &self.buses {
            if !seen.contains(b.id.as_str()) {
                return verr(format!("bus {} is not connected to the substation", b.id));
            }
        }

        // per-phase connectivity: every node-phase needs a phase path to the
        // substation, otherwise the network matrix is singular
        let sub_phases = &bus_phases[&self.substation];
        let mut reach: BTreeSet<(String, Phase)> =
            sub_phases.iter().map(|&p| (self.substation.clone(), p)).collect();
        let mut q2: VecDeque<(String, Phase)> = reach.iter().cloned().collect();
        while let Some((bus, ph)) = q2.pop_front() {
            for (_, from, to, phases) in &branches {
                if !phases.contains(&ph) {
                    continue;
                }
                let other = if *from == bus {
                    to
                } else if *to == bus {
                    from
                } else {
                    continue;
                };
                if reach.insert((other.to_string(), ph)) {
                    q2.push_back((other.to_string(), ph));
                }
            }
        }
        for b in &self.buses {
            for &p in &b.phases {
                if !reach.contains(&(b.id.clone(), p)) {
                    return verr(format!("node {}.{} has no phase path to the substation", b.id, p));
                }
            }
        }
        Ok(())
    }
}

/// One worst-case operating condition.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub probability: f64,
    /// Demand per node-phase (kW, kvar).
    pub demand: BTreeMap<PhaseNodeId, (f64, f64)>,
    /// Available maximum power point per PV id (kW).
    pub mpp: BTreeMap<String, f64>,
    /// Feeder-head voltage phasor per substation phase (pu), measured before
    /// enabling Volt-VAr control.
    pub feeder_head: BTreeMap<Phase, (f64, f64)>,
    /// Objective weights `(w_o, w_v)`: curtailment and feeder-head deviation.
    pub weights: (f64, f64),
}

impl Scenario {
    pub fn total_demand_kw(&self) -> f64 {
        self.demand.values().map(|&(p, _)| p).sum()
    }

    pub fn total_mpp_kw(&self) -> f64 {
        self.mpp.values().sum()
    }

    /// Instantaneous PV penetration: total MPP over total gross load.
    pub fn penetration_percent(&self) -> Option<f64> {
        let load = self.total_demand_kw();
        (load > 0.0).then(|| 100.0 * self.total_mpp_kw() / load)
    }

    pub fn validate(&self, feeder: &Feeder) -> Result<(), FeederError> {
        let verr = |msg: String| Err(FeederError::Validation(msg));
        if !(0.0..=1.0).contains(&self.probability) {
            return verr(format!(
                "scenario {}: probability {} outside [0,1]",
                self.id, self.probability
            ));
        }
        for node in self.demand.keys() {
            if !feeder.loads.iter().any(|l| &l.node == node) {
                return verr(format!("scenario {}: demand at {} has no declared load", self.id, node));
            }
        }
        for (pv_id, &mpp) in &self.mpp {
            let Some(pv) = feeder.pv(pv_id) else {
                return verr(format!("scenario {}: unknown pv id {}", self.id, pv_id));
            };
            let rated = feeder.p_rated_kw(pv);
            if mpp < 0.0 || mpp > rated + 1e-9 {
                return verr(format!(
                    "scenario {}: mpp {} kW for {} outside [0, {} kW]",
                    self.id, mpp, pv_id, rated
                ));
            }
        }
        let sub = feeder.bus(&feeder.substation).expect("validated substation");
        for &p in &sub.phases {
            let Some(&(vr, vim)) = self.feeder_head.get(&p) else {
                return verr(format!("scenario {}: missing feeder_head for phase {}", self.id, p));
            };
            let mag = vr.hypot(vim);
            if !(0.8 < mag && mag < 1.2) {
                return verr(format!(
                    "scenario {}: feeder head magnitude {:.4} pu on phase {} outside (0.8, 1.2)",
                    self.id, mag, p
                ));
            }
        }
        if !(self.weights.0 > 0.0 && self.weights.1 > 0.0) {
            return verr(format!("scenario {}: weights must be positive", self.id));
        }
        Ok(())
    }
}

/// Validates an ordered scenario set: individual checks plus probability
/// normalization within 1e-9.
pub fn validate_scenario_set(scenarios: &[Scenario], feeder: &Feeder) -> Result<(), FeederError> {
    if scenarios.is_empty() {
        return Err(FeederError::Validation("scenario set is empty".into()));
    }
    for s in scenarios {
        s.validate(feeder)?;
    }
    let sum: f64 = scenarios.iter().map(|s| s.probability).sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(FeederError::Validation(format!(
            "scenario probabilities sum to {sum}, expected 1"
        )));
    }
    Ok(())
}
