//! Hyperparameter robustness grid: cone penalties, base horizons, the cone
//! weight, and level-time spacings, trained on toy with a few seeds each.
//! Reports the per-knob spread of mean level accuracy against its bound.
//!
//! Usage: `cargo run --release --example sensitivity_grid [epochs] [n_seeds]`
//! The full grid is 12 configurations x seeds; budget accordingly.

use worldline::report::sensitivity_sweep;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(300);
    let n_seeds: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(3);
    let seeds: Vec<u64> = (0..n_seeds).collect();
    let jobs = std::thread::available_parallelism().map(|p| p.get()).unwrap_or(2);
    let start = std::time::Instant::now();
    let report = sensitivity_sweep(&seeds, epochs, jobs).expect("sweep failed");
    print!("{}", report.to_text());
    println!("({:.1?})", start.elapsed());
}
