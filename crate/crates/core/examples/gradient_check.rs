//! Audits the hand-written gradients against central finite differences.
//!
//! cargo run --release --example gradient_check

use std::collections::BTreeMap;

use manitokan::nn::{run_gradcheck, GradcheckSettings};

fn main() {
    let start = std::time::Instant::now();
    let report = run_gradcheck(&GradcheckSettings::default());
    let mut worst: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    for c in &report.cases {
        let e = worst.entry(&c.name).or_insert((0, 0.0));
        e.0 += 1;
        e.1 = e.1.max(c.max_rel_error);
    }
    for (name, (count, err)) in &worst {
        println!("{name:<14} {count:>3} cases  max relative error {err:.2e}");
    }
    println!(
        "{} in {:.1}s (tolerance {:.0e})",
        if report.passed() { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64(),
        report.tolerance
    );
}
