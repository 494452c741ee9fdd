//! Writes learning curves of both gradient modes to CSV, reads them back and
//! renders the two-panel SVG chart.

use declgrad::cli::results::{read_results, write_results};
use declgrad::cli::svg::render;
use declgrad::train::{run_experiment, ExperimentConfig, GradMode, Problem};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out_dir = std::env::temp_dir().join("declgrad-plotting-example");
    std::fs::create_dir_all(&out_dir)?;
    let mut rows = Vec::new();
    for mode in [GradMode::Exact, GradMode::Approx] {
        let config = ExperimentConfig {
            problem: Problem::Sphere,
            grad_mode: mode,
            iterations: 150,
            repeats: 3,
            ..ExperimentConfig::default()
        };
        let records = run_experiment(&config).map_err(|f| f.error)?.records;
        let path = out_dir.join(format!("sphere_{}.csv", mode.name()));
        write_results(std::fs::File::create(&path)?, &records, mode, config.problem, config.seed, false)?;
        rows.extend(read_results(std::fs::File::open(&path)?)?);
        println!("wrote {}", path.display());
    }
    let svg_path = out_dir.join("curves.svg");
    std::fs::write(&svg_path, render(&rows, true))?;
    println!("wrote {}", svg_path.display());
    Ok(())
}
