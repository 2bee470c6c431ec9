//! Synthesizes reach demonstrations, trains with and without the in-scene
//! transform, and compares closed-loop success.
//!
//! Usage: `cargo run --release --example end_to_end [epochs] [seed]`

use aina::align::{align_all, assume_robot_frame, AlignMode};
use aina::demos::{synth_generate, SynthTaskSpec, TaskKind, Trajectory};
use aina::rollout::{evaluate, RolloutOptions, RolloutTaskSpec};
use aina::vnpolicy::{train_with, PolicyConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().map(|s| s.parse()).transpose()?.unwrap_or(300);
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(7);

    let data = synth_generate(&SynthTaskSpec::desk(TaskKind::Reach), 51, seed)?;
    let aligned = align_all(&data.in_the_wild, &data.in_scene, AlignMode::Pivoted)?;
    let full: Vec<Trajectory> =
        std::iter::once(data.in_scene.clone()).chain(aligned.into_iter().map(|r| r.aligned)).collect();
    let wild_only: Vec<Trajectory> = data.in_the_wild.iter().map(assume_robot_frame).collect();

    let config = PolicyConfig {
        epochs,
        seed,
        ..PolicyConfig::desk()
    };
    let spec = RolloutTaskSpec::desk(TaskKind::Reach);
    for (name, set) in [("in-scene transform + co-training", &full), ("wild only, untransformed", &wild_only)] {
        let (model, log) = train_with(set, &config, |_, _| {})?;
        let report = evaluate(&model, &spec, 20, seed, &RolloutOptions::default())?;
        println!(
            "{name:<34} final loss {:.2e}  success {:.2}",
            log.epoch_loss.last().copied().unwrap_or(f64::NAN),
            report.success_rate
        );
    }
    Ok(())
}
