use super::*;

fn reference_rest(opts: &RolloutOptions) -> HandPose {
    opts.chain.fk(&opts.chain.home())
}

#[test]
fn replay_oracle_succeeds_and_zero_motion_fails() {
    let opts = RolloutOptions::default();
    for task in [TaskKind::Reach, TaskKind::PickPlace, TaskKind::Press] {
        let spec = RolloutTaskSpec::desk(task);
        let oracle = ReplayPolicy { history: 3, horizon: 30 };
        let r = evaluate(&oracle, &spec, 6, 11, &opts).unwrap();
        assert_eq!(r.success_rate, 1.0, "{task:?}: {:?}", r.reports);
        let still = ZeroMotionPolicy { history: 3, horizon: 30 };
        let r = evaluate(&still, &spec, 3, 11, &opts).unwrap();
        assert_eq!(r.success_rate, 0.0);
        assert!(r.reports.iter().all(|e| e.steps == spec.max_steps));
    }
}

#[test]
fn zero_motion_leaves_scene_unchanged() {
    let opts = RolloutOptions::default();
    let spec = RolloutTaskSpec::desk(TaskKind::PickPlace);
    let scene = SimScene::sample(&spec, 5, 0, &reference_rest(&opts));
    let before = scene.state.clone();
    let mut ep = Episode::new(scene, 4, &opts);
    let still = ZeroMotionPolicy { history: 4, horizon: 10 };
    while ep.tick < spec.max_steps {
        assert!(!ep.step(&still, 10, &spec).unwrap());
    }
    assert_eq!(ep.scene.state, before);
}

#[test]
fn open_loop_equals_closed_loop_for_replay() {
    let opts = RolloutOptions::default();
    let spec = RolloutTaskSpec::desk(TaskKind::PickPlace);
    let oracle = ReplayPolicy { history: 2, horizon: 30 };
    let run = |prefix: usize| {
        let scene = SimScene::sample(&spec, 9, 2, &reference_rest(&opts));
        let mut ep = Episode::new(scene, 2, &opts);
        while ep.tick < spec.max_steps {
            if ep.step(&oracle, prefix, &spec).unwrap() {
                break;
            }
        }
        (ep.scene.state, ep.tick)
    };
    assert_eq!(run(30), run(1));
}

#[test]
fn carried_object_stays_rigid() {
    let opts = RolloutOptions::default();
    let spec = RolloutTaskSpec::desk(TaskKind::PickPlace);
    let scene = SimScene::sample(&spec, 21, 1, &reference_rest(&opts));
    let item = scene.state.clusters[0].points.clone();
    let pairs = |pts: &[Vec3]| -> Vec<f64> {
        pts.iter().flat_map(|a| pts.iter().map(move |b| (a - b).norm())).collect()
    };
    let d0 = pairs(&item);
    let mut ep = Episode::new(scene, 2, &opts);
    let oracle = ReplayPolicy { history: 2, horizon: 30 };
    let mut moved = false;
    while ep.tick < spec.max_steps && !ep.step(&oracle, 1, &spec).unwrap() {
        let now = &ep.scene.state.clusters[0].points;
        moved |= (now[0] - item[0]).norm() > 1e-3;
        for (a, b) in pairs(now).iter().zip(&d0) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(opts.chain.within_limits(&ep.joints));
    }
    assert!(moved);
}

#[test]
fn reports_are_reproducible_and_traces_written() {
    let dir = tempfile::tempdir().unwrap();
    let opts = RolloutOptions {
        trace_dir: Some(dir.path().to_path_buf()),
        ..RolloutOptions::default()
    };
    let spec = RolloutTaskSpec::desk(TaskKind::Reach);
    let oracle = ReplayPolicy { history: 2, horizon: 30 };
    let a = evaluate(&oracle, &spec, 3, 4, &opts).unwrap();
    let b = evaluate(&oracle, &spec, 3, 4, &RolloutOptions::default()).unwrap();
    assert_eq!(a.success_rate, b.success_rate);
    assert_eq!(serde_json::to_string(&a.reports[0].ik_residuals).unwrap(), serde_json::to_string(&b.reports[0].ik_residuals).unwrap());
    let trace = crate::demos::load(dir.path().join("episode_000.aina")).unwrap();
    assert_eq!(trace.source, Source::InScene);
    assert_eq!(trace.len(), a.reports[0].steps + 1);
    assert!(dir.path().join("episode_002.json").exists());
}

#[test]
fn spec_json_is_strict() {
    let text = serde_json::to_string(&RolloutTaskSpec::desk(TaskKind::Press)).unwrap();
    assert_eq!(RolloutTaskSpec::from_json(&text).unwrap(), RolloutTaskSpec::desk(TaskKind::Press));
    assert!(RolloutTaskSpec::from_json(r#"{"task":"reach","bogus":1}"#).is_err());
    assert!(RolloutTaskSpec::from_json(r#"{"task":"reach","max_steps":0}"#).is_err());
}
