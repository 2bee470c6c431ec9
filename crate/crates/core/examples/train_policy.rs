//! Trains a small point policy on aligned synthetic reach demonstrations,
//! saves it, and reports held-out MSE.
//!
//! Usage: `cargo run --release --example train_policy [epochs]`

use aina::align::{align_all, AlignMode};
use aina::demos::{synth_generate, SynthTaskSpec, TaskKind, Trajectory};
use aina::vnpolicy::{evaluate_mse, load_model, save_model, train_with, PolicyConfig};

fn aligned(seed: u64, count: usize) -> Result<Vec<Trajectory>, Box<dyn std::error::Error>> {
    let data = synth_generate(&SynthTaskSpec::desk(TaskKind::Reach), count, seed)?;
    let wild = align_all(&data.in_the_wild, &data.in_scene, AlignMode::Pivoted)?;
    Ok(std::iter::once(data.in_scene).chain(wild.into_iter().map(|r| r.aligned)).collect())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let epochs = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(30);
    let train = aligned(1, 12)?;
    let held_out = aligned(2, 4)?;
    let config = PolicyConfig {
        epochs,
        ..PolicyConfig::desk()
    };

    let (model, log) = train_with(&train, &config, |epoch, loss| {
        if epoch % 10 == 0 || epoch + 1 == epochs {
            println!("epoch {epoch:>4}  loss {loss:.3e}");
        }
    })?;
    println!("{} windows, {} optimizer steps", log.windows, log.steps);

    let path = std::env::temp_dir().join("aina_example.ainm");
    save_model(&model, &path)?;
    let reloaded = load_model(&path)?;
    println!("saved to {}", path.display());
    println!("train MSE {:.3e}, held-out MSE {:.3e}", evaluate_mse(&reloaded, &train)?, evaluate_mse(&reloaded, &held_out)?);
    Ok(())
}
