//! Generate a handful of scenes from every dataset and write them as flat
//! point files (`x,y,object_id,level_id`) under `results/scenes/`, plus a
//! scatter SVG per dataset for quick visual inspection.

use std::fs;
use std::path::Path;

use worldline::scenes::{
    clevr_to_scene, generate_sprites, generate_toy, synthesize_clevr_records, write_scene,
    DatasetTag, Scene,
};

fn scatter_svg(scene: &Scene) -> String {
    let colors = ["#c0392b", "#1b6ca8", "#e67e22"]; // level 0, 1, 2
    let (w, h) = (420.0, 420.0);
    let scale = |v: f64| (v + 5.5) / 11.0;
    let mut svg = format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    );
    for i in 0..scene.len() {
        let x = scale(scene.points[i][0]) * w;
        let y = (1.0 - scale(scene.points[i][1])) * h;
        let lvl = scene.level_id[i];
        let (color, r) = if lvl < 0 {
            ("#bbbbbb", 2.0)
        } else {
            (colors[lvl as usize], 4.0 - lvl as f64)
        };
        svg.push_str(&format!(
            "<circle cx=\"{x:.1}\" cy=\"{y:.1}\" r=\"{r:.1}\" fill=\"{color}\" fill-opacity=\"0.8\"/>\n"
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn main() {
    let out = Path::new("results/scenes");
    fs::create_dir_all(out).expect("create output dir");
    let clevr_records = synthesize_clevr_records(4, 7);
    for seed in 0..4u64 {
        let scenes: Vec<(DatasetTag, Scene)> = vec![
            (DatasetTag::Toy, generate_toy(seed)),
            (DatasetTag::Sprites, generate_sprites(seed)),
            (
                DatasetTag::Clevr,
                clevr_to_scene(&clevr_records[seed as usize], seed),
            ),
        ];
        for (tag, scene) in scenes {
            let base = format!("{tag}_{seed}");
            write_scene(&scene, &out.join(format!("{base}.csv"))).expect("write scene");
            fs::write(out.join(format!("{base}.svg")), scatter_svg(&scene)).expect("write svg");
            println!(
                "{base}: {} points ({} labeled, {} noise)",
                scene.len(),
                scene.labeled_count(),
                scene.noise_count()
            );
        }
    }
    println!("wrote scene files and scatters to {}", out.display());
}
