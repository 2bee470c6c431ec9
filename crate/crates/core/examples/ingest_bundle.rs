//! Renders a synthetic demonstration into a perception bundle on disk, then
//! ingests it back into a trajectory.

use aina::demos::{ingest, render_bundle, synth_generate, FrameOfReference, GridKind, IngestMode, PerceptionBundle, RenderOptions, SynthTaskSpec, TaskKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Few points, so no two of them land on the same depth pixel.
    let spec = SynthTaskSpec {
        n_points: 8,
        ..SynthTaskSpec::desk(TaskKind::Reach)
    };
    let data = synth_generate(&spec, 1, 5)?;
    let source = data.in_scene.quantized();

    let opts = RenderOptions {
        kind: GridKind::Disparity,
        ..RenderOptions::default()
    };
    let dir = std::env::temp_dir().join("aina_ingest_example");
    render_bundle(&source, &opts)?.save(&dir)?;
    println!("bundle written to {}", dir.display());

    let bundle = PerceptionBundle::load(&dir)?;
    let t = ingest(&bundle, IngestMode::StereoDisparity, FrameOfReference::RobotBase)?;
    let mut worst: f64 = 0.0;
    for (a, b) in t.frames.iter().zip(&source.frames) {
        for (p, q) in a.objects.iter().zip(b.objects.iter()) {
            worst = worst.max((p - q).norm());
        }
    }
    println!("{} frames, {} points per frame, worst object point error {worst:.2e} m", t.len(), t.n_points());
    Ok(())
}
