//! Records a random episode, writes it as JSONL, reads it back and checks
//! that re-simulation reproduces it exactly.
//!
//! cargo run --example replay_trace

use rand::Rng;

use manitokan::env::{replay_trace, Action, EnvConfig, ManitokanEnv, TraceRecorder};
use manitokan::seed;

fn main() {
    let config = EnvConfig::default();
    let mut env = ManitokanEnv::new(config.clone(), 17, 3).unwrap();
    let mut trace = TraceRecorder::new(config, 17, 3);
    let mut rng = seed::rng_from(17);
    loop {
        let t = env.state().timestep;
        let actions: Vec<Action> = (0..2)
            .map(|_| Action::from_index(rng.gen_range(0..Action::COUNT)).unwrap())
            .collect();
        let (_, out) = env.step(&actions).unwrap();
        trace.record(t, &actions, &out);
        if out.done {
            break;
        }
    }
    let path = std::env::temp_dir().join("manitokan-example-trace.jsonl");
    trace.write_jsonl(std::fs::File::create(&path).unwrap()).unwrap();
    let file = std::io::BufReader::new(std::fs::File::open(&path).unwrap());
    let back = TraceRecorder::read_jsonl(file).unwrap();
    let report = replay_trace(&back).unwrap();
    println!(
        "{} steps written to {}; replay exact: {}",
        back.steps.len(),
        path.display(),
        report.is_exact()
    );
}
