//! Density stratification across hierarchy levels.
//!
//! Generates scenes for each dataset, computes per-level k-NN distance
//! statistics, and prints the separation between adjacent levels in sigma
//! units. Sparse cores must read as much sparser than surface points, which
//! in turn must read sparser than interior clusters — this is the signal the
//! hierarchy-to-time mapping feeds on.
//!
//! Run with: `cargo run --release --example density_report`

use worldline::scenes::{
    self, clevr_to_scene, density_report, generate_sprites, generate_toy, DatasetTag, Scene,
};

fn print_report(tag: DatasetTag, scenes: &[Scene]) {
    let report = density_report(scenes, 5);
    println!("\n{} ({} scenes)", tag, scenes.len());
    println!("{:>5} {:>12} {:>10} {:>8} {:>12}", "level", "mean_knn", "std_knn", "points", "sep_sigma");
    for (row, sep) in report.levels.iter().zip(&report.separation_sigma) {
        let sep_str = sep.map(|s| format!("{s:.1}")).unwrap_or_else(|| "n/a".into());
        println!(
            "{:>5} {:>12.4} {:>10.4} {:>8} {:>12}",
            row.level, row.mean, row.std, row.points, sep_str
        );
    }
    println!("per-scene ordering L0 > L1 > L2: {:.1}%", 100.0 * report.per_scene_ordering);
}

fn main() {
    let toy: Vec<Scene> = (0..200).map(generate_toy).collect();
    print_report(DatasetTag::Toy, &toy);

    let sprites: Vec<Scene> = (0..200).map(generate_sprites).collect();
    print_report(DatasetTag::Sprites, &sprites);

    let records = scenes::synthesize_clevr_records(200, 42);
    let clevr: Vec<Scene> = records
        .iter()
        .enumerate()
        .map(|(i, r)| clevr_to_scene(r, i as u64))
        .collect();
    print_report(DatasetTag::Clevr, &clevr);

    let total: usize = clevr.iter().map(|s| s.len()).sum();
    let labeled: usize = clevr.iter().map(|s| s.labeled_count()).sum();
    let mut level_counts = [0usize; 3];
    for s in &clevr {
        for &l in &s.level_id {
            if l >= 0 {
                level_counts[l as usize] += 1;
            }
        }
    }
    println!(
        "\nclevr level shares: L0 {:.1}% / L1 {:.1}% / L2 {:.1}%  (mean {:.1} points/scene)",
        100.0 * level_counts[0] as f64 / labeled as f64,
        100.0 * level_counts[1] as f64 / labeled as f64,
        100.0 * level_counts[2] as f64 / labeled as f64,
        total as f64 / clevr.len() as f64
    );
}
