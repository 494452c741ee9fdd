//! Checks the descent-gap theory: closed forms against numeric eigensolvers
//! and expectations against Monte Carlo.
//!
//! ```text
//! cargo run --release --example descent_theory -- [samples] [filter]
//! ```

use std::time::Instant;

use declgrad::linalg::{Matrix, Vector};
use declgrad::theory::{self, suite};

fn main() {
    let mut args = std::env::args().skip(1);
    let samples = args.next().map_or(1_000_000, |s| s.parse().expect("samples must be an integer"));
    let filter = args.next();

    // A single worst case: H = diag(1, 4), a = (1, 1).
    let h = Matrix::diag(&[1.0, 4.0]);
    let a = Vector::from(vec![1.0, 1.0]);
    let bounds = theory::lin_descent_max(&h, &a).unwrap();
    println!(
        "H=diag(1,4), a=(1,1): max={:.6} in [{}, {}]",
        bounds.max_value, bounds.lower_bound, bounds.upper_bound
    );

    let config = suite::SuiteConfig {
        samples,
        ..suite::SuiteConfig::default()
    };
    for name in suite::CHECKS.iter().filter(|n| filter.as_deref().is_none_or(|f| n.contains(f))) {
        let start = Instant::now();
        let outcome = suite::run_check(name, &config);
        println!("{outcome} [{:.1}s]", start.elapsed().as_secs_f64());
    }
}
