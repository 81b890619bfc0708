//! Evaluates both sides of the correction identity on the two-agent toy for
//! a sweep of partner logits, showing where clamping of Ψ kicks in.
//!
//! cargo run --example theorem_identity

use manitokan::agents::{verify_theorem1, ToySpec};

fn main() {
    println!("{:>8} {:>12} {:>12} {:>12} {:>10}", "gap", "left[0]", "right[0]", "|diff|", "clamped");
    for gap in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0] {
        let spec = ToySpec {
            logits_i: [0.3, -0.3],
            logits_j: [gap, 0.0],
            ..ToySpec::default()
        };
        let r = verify_theorem1(&spec);
        println!(
            "{gap:>8.1} {:>12.6} {:>12.6} {:>12.2e} {:>10}",
            r.left[0], r.right[0], r.max_abs_diff, r.degenerate
        );
    }
}
