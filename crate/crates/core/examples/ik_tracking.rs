//! Tracks a sequence of fingertip targets with damped least-squares IK and
//! applies the grasp heuristic to a pinching hand.

use aina::kin::{grasp_adjust, ik, IkOptions, JointState, KinematicChain};

fn main() {
    let chain = KinematicChain::reference();
    let opts = IkOptions::default();
    let home = chain.home();

    // A smooth joint-space path; its FK hands serve as targets.
    let mut q = home;
    for step in 0..=10 {
        let s = step as f64 / 10.0;
        let wanted = chain.clamp(&JointState(std::array::from_fn(|j| home.0[j] + 0.3 * s * (j as f64 * 0.7).sin())));
        let target = chain.fk(&wanted);
        let (next, report) = ik(&chain, &target, &q, &opts);
        q = next;
        println!(
            "step {step:>2}: {} iterations, residual {:.3} mm, in limits {}",
            report.iterations,
            report.residual * 1e3,
            chain.within_limits(&q)
        );
    }

    let hand = chain.fk(&q);
    let thumb = hand.thumb();
    let pinch = hand.with_tip(1, thumb + (hand.fingertips[1] - thumb).normalize() * 0.03);
    let tightened = grasp_adjust(&pinch);
    println!(
        "thumb-index gap {:.4} m -> {:.4} m after grasp adjustment",
        (pinch.fingertips[1] - pinch.thumb()).norm(),
        (tightened.fingertips[1] - tightened.thumb()).norm()
    );
}
