//! Runs the closed-loop simulator with reference policies, or with a saved
//! model when a path is given.
//!
//! Usage: `cargo run --release --example rollout_eval [model.ainm]`

use aina::demos::TaskKind;
use aina::rollout::{evaluate, Policy, ReplayPolicy, RolloutOptions, RolloutTaskSpec, ZeroMotionPolicy};
use aina::vnpolicy::load_model;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let opts = RolloutOptions::default();
    if let Some(path) = std::env::args().nth(1) {
        let model = load_model(&path)?;
        let spec = RolloutTaskSpec::desk(TaskKind::Reach);
        let report = evaluate(&model, &spec, 20, 0, &opts)?;
        println!("{path}: reach success {:.2}", report.success_rate);
        return Ok(());
    }

    let replay = ReplayPolicy { history: 10, horizon: 20 };
    let idle = ZeroMotionPolicy { history: 10, horizon: 20 };
    for task in [TaskKind::Reach, TaskKind::PickPlace, TaskKind::Press] {
        let spec = RolloutTaskSpec::desk(task);
        for (name, policy) in [("replay", &replay as &dyn Policy), ("zero-motion", &idle)] {
            let report = evaluate(policy, &spec, 10, 0, &opts)?;
            let steps: usize = report.reports.iter().map(|r| r.steps).sum();
            println!("{:<9} {name:<11} success {:.2}, mean steps {:.1}", format!("{task:?}"), report.success_rate, steps as f64 / 10.0);
        }
    }
    Ok(())
}
