//! Trains the MLP → node → loss pipeline with approximate gradients and
//! prints the learning curve every 50 iterations.
//!
//! ```text
//! cargo run --release --example training -- [sphere|ot|eigen]
//! ```

use declgrad::train::{run_experiment, ExperimentConfig, GradMode, Problem};

fn main() {
    let problem = match std::env::args().nth(1).as_deref() {
        None | Some("sphere") => Problem::Sphere,
        Some("ot") => Problem::Ot,
        Some("eigen") => Problem::Eigen,
        Some(other) => {
            eprintln!("unknown problem {other:?}");
            std::process::exit(2);
        }
    };
    let config = ExperimentConfig {
        problem,
        grad_mode: GradMode::Approx,
        iterations: 300,
        repeats: 3,
        seed: 7,
        ..ExperimentConfig::default()
    };
    let output = run_experiment(&config).unwrap_or_else(|f| {
        eprintln!("{}", f.error);
        std::process::exit(1);
    });
    println!("iteration  run  loss          cos_sim_mean  descent_fraction");
    for r in output.records.iter().filter(|r| r.iteration % 50 == 0 || r.iteration + 1 == config.iterations) {
        println!(
            "{:>9}  {:>3}  {:<12.6e}  {:>12.4}  {:>16.2}",
            r.iteration, r.run, r.loss, r.cos_sim_mean, r.descent_fraction
        );
    }
}
