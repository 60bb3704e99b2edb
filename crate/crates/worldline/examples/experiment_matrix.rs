//! The headline ablation: all four geometry modes on the toy dataset,
//! several seeds each, summarized with Welch statistics against the
//! Lorentzian column. Writes CSVs and SVG plots under `results/`.
//!
//! Usage: `cargo run --release --example experiment_matrix [epochs] [n_seeds]`

use std::path::PathBuf;

use worldline::report::{run_matrix, ExperimentSpec};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(300);
    let n_seeds: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(5);

    let spec = ExperimentSpec {
        seeds: (0..n_seeds).collect(),
        epochs,
        out_dir: PathBuf::from("results/toy_matrix"),
        jobs: std::thread::available_parallelism().map(|p| p.get()).unwrap_or(2),
        ..ExperimentSpec::default()
    };
    let start = std::time::Instant::now();
    let results = run_matrix(&spec).expect("matrix failed");
    results.write_all(&spec.out_dir).expect("write failed");
    println!("{}", results.summary_table());
    println!(
        "{} runs in {:.1?}; tables and plots in {}",
        results.rows.len(),
        start.elapsed(),
        spec.out_dir.display()
    );
}
