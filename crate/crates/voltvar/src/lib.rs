//! Planning toolkit for upgrading rooftop-PV inverters to Volt-VAr-capable
//! smart inverters on unbalanced three-phase distribution feeders.
//!
//! The library decides the minimum set of existing PV inverters to upgrade so
//! that worst-case over/under-voltage operating conditions are mitigated with
//! minimal active-power curtailment, and verifies the resulting plan against
//! an independent nonlinear power-flow simulator with local droop control.
//!
//! Main pieces:
//!
//! - [`feeder`] — feeder / scenario data model, text schema, per-unit handling
//! - [`powerflow`] — nonlinear unbalanced power-flow oracle and the Taylor
//!   linearization points consumed by the planner
//! - [`qvcurve`] — Q-V droop curve semantics and its exact mixed-integer encoding
//! - [`milp`] — self-contained bounded-variable simplex plus branch-and-bound
//! - [`planner`] — two-stage extensive-form placement model and outer
//!   relinearization loop
//! - [`sim`] — quasi-static and phasor-domain dynamic validation engines
//! - [`cli`] — batch front end used by the `voltvar` binary
//!
//! See the crate `examples/` directory for one runnable example per capability.

pub mod feeder;
pub mod milp;
pub mod planner;
pub mod powerflow;
pub mod qvcurve;
pub mod sim;

mod par;

pub use feeder::{Feeder, Phase, PhaseNodeId, Scenario};
pub use planner::{PlacementPlan, PlannerConfig};
pub use powerflow::{LinearizationPoint, Network, PowerFlowSolution};
pub use qvcurve::QVCurve;
