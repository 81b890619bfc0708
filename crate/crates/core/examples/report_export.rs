//! Aggregates the episode files of a finished run into metrics, a summary
//! and SVG charts.
//!
//! cargo run --example report_export -- <run dir> [out dir]

use std::path::PathBuf;

use manitokan::metrics::export::MetricsSummary;
use manitokan::metrics::{export, read_episodes_csv, summarize};

fn main() {
    let mut args = std::env::args().skip(1);
    let run = PathBuf::from(args.next().expect("usage: report_export <run dir> [out dir]"));
    let out = args.next().map_or_else(|| run.clone(), PathBuf::from);
    let mut records = Vec::new();
    for entry in std::fs::read_dir(&run).expect("run directory") {
        let csv = entry.expect("entry").path().join("episodes.csv");
        if csv.exists() {
            records.extend(read_episodes_csv(&csv).expect("episode file"));
        }
    }
    let metrics = summarize(&records).expect("at least one episode");
    let files = export(&metrics, &out, true).expect("export");
    let s = MetricsSummary::from_metrics(&metrics);
    println!(
        "{} episodes over {} seeds: final success {:.4}, final key drops {:.3}",
        s.episodes,
        metrics.seeds.len(),
        s.final_success_rate,
        s.final_key_drop_rate
    );
    for chart in files.charts {
        println!("wrote {}", chart.display());
    }
}
