use std::time::Instant;
use voltvar::feeder::{load_feeder, load_scenarios};
use voltvar::planner::{solve_placement, verify_plan, PlannerConfig};
use voltvar::powerflow::Network;

fn main() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");
    let feeder = load_feeder(format!("{dir}/ov.feeder")).unwrap();
    let scens = load_scenarios(format!("{dir}/ov.scenarios"), &feeder).unwrap();
    println!("penetration s1: {:?}%", scens[0].penetration_percent().map(|p| p.round()));
    let net = Network::new(&feeder).unwrap();
    // base-case violations
    let base = net.solve_nonlinear(&scens[0], &Default::default()).unwrap();
    let viol = base.v.iter().filter(|v| v.norm() > feeder.v_max).count();
    println!("base-case violating node-phases: {viol}, max |V| = {:.4}", base.max_vmag());
    let t0 = Instant::now();
    let plan = solve_placement(&net, &scens, &PlannerConfig::default()).unwrap();
    println!("plan solved in {:.1?}: {} placements {:?}, outer={}, stalled={}",
        t0.elapsed(), plan.placed_count(), plan.placed_ids(), plan.outer_iterations, plan.stalled);
    println!("gaps: {:?}", plan.scenarios.iter().map(|s| s.voltage_gap).collect::<Vec<_>>());
    let t1 = Instant::now();
    let rep = verify_plan(&net, &scens, &plan, 0.5).unwrap();
    println!("verify in {:.1?}: pass={} violations={} msq_q={:?} curtail={:?}",
        t1.elapsed(), rep.pass, rep.total_violations(),
        rep.scenarios.iter().map(|s| s.mean_sq_rel_q_diff).collect::<Vec<_>>(),
        rep.scenarios.iter().map(|s| s.curtailment_sim).collect::<Vec<_>>());
}
