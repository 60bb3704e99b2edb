//! Hierarchical point-cloud scenes: two synthetic generators (toy, sprites),
//! a builder that derives scenes from CLEVR annotation records, and the
//! density stratification report that validates the sparse-to-abstract
//! assumption the model relies on.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Deserialize;
use thiserror::Error;

use crate::geometry;

pub const CLEVR_URL: &str = "https://dl.fbaipublicfiles.com/clevr/CLEVR_v1.0_no_images.zip";

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("cannot read CLEVR scenes file `{path}`: {source}. Expected the annotations from {CLEVR_URL} (images are not needed)")]
    ClevrRead {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse CLEVR scenes file `{path}`: {source}. Expected the annotations from {CLEVR_URL}")]
    ClevrParse {
        path: String,
        source: serde_json::Error,
    },
    #[error("CLEVR scenes file `{path}` has an object at ({x:.2}, {y:.2}), outside the expected x,y range [-3, 3]; is this really the annotation set from {CLEVR_URL}?")]
    ClevrRange { path: String, x: f64, y: f64 },
    #[error("scene file `{path}` is malformed at line {line}: {detail}")]
    SceneFile {
        path: String,
        line: usize,
        detail: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DatasetTag {
    Toy,
    Sprites,
    Clevr,
}

impl DatasetTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            DatasetTag::Toy => "toy",
            DatasetTag::Sprites => "sprites",
            DatasetTag::Clevr => "clevr",
        }
    }
}

impl fmt::Display for DatasetTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A labeled hierarchical point cloud. Noise points carry `-1` in both
/// label channels; every other point has both an object and a level.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub points: Vec<[f64; 2]>,
    pub object_id: Vec<i32>,
    pub level_id: Vec<i32>,
    pub tag: DatasetTag,
}

impl Scene {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn labeled_count(&self) -> usize {
        self.object_id.iter().filter(|&&o| o >= 0).count()
    }

    pub fn noise_count(&self) -> usize {
        self.len() - self.labeled_count()
    }

    /// Scale every coordinate; labels are untouched.
    pub fn scaled(&self, factor: f64) -> Scene {
        Scene {
            points: self.points.iter().map(|p| [p[0] * factor, p[1] * factor]).collect(),
            object_id: self.object_id.clone(),
            level_id: self.level_id.clone(),
            tag: self.tag,
        }
    }
}

fn normal(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).unwrap().sample(rng)
}

// ── toy generator ────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct ToyConfig {
    pub num_objects: usize,
    pub parts_range: (usize, usize),
    pub subparts_range: (usize, usize),
    pub center_box: f64,
    pub min_center_sep: f64,
    pub part_radius: f64,
    pub radius_jitter: f64,
    pub angle_jitter: f64,
    pub subpart_sigma: f64,
    pub noise_frac: f64,
    pub noise_box: f64,
    pub total_range: (usize, usize),
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            num_objects: 3,
            parts_range: (4, 5),
            subparts_range: (2, 4),
            center_box: 4.0,
            min_center_sep: 2.5,
            part_radius: 1.0,
            radius_jitter: 0.15,
            angle_jitter: 0.15,
            subpart_sigma: 0.15,
            noise_frac: 0.10,
            noise_box: 5.0,
            total_range: (50, 70),
        }
    }
}

fn sample_centers(
    rng: &mut ChaCha8Rng,
    n: usize,
    half_box: f64,
    min_sep: f64,
) -> Vec<[f64; 2]> {
    let mut centers: Vec<[f64; 2]> = Vec::with_capacity(n);
    let mut sep = min_sep;
    let mut attempts = 0usize;
    while centers.len() < n {
        let c = [
            rng.gen_range(-half_box..half_box),
            rng.gen_range(-half_box..half_box),
        ];
        let ok = centers
            .iter()
            .all(|o| ((o[0] - c[0]).powi(2) + (o[1] - c[1]).powi(2)).sqrt() >= sep);
        if ok {
            centers.push(c);
        }
        attempts += 1;
        if attempts > 200 {
            // pathological draw: relax separation rather than loop forever
            sep *= 0.9;
            attempts = 0;
        }
    }
    centers
}

pub fn generate_toy(seed: u64) -> Scene {
    generate_toy_with(&ToyConfig::default(), seed)
}

pub fn generate_toy_with(cfg: &ToyConfig, seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _attempt in 0..50 {
        let scene = toy_draw(cfg, &mut rng);
        let n = scene.len();
        if n >= cfg.total_range.0 && n <= cfg.total_range.1 {
            return scene;
        }
        if n > cfg.total_range.1 {
            // trim noise points first; they sit at the tail
            let mut scene = scene;
            while scene.len() > cfg.total_range.1 && scene.object_id.last() == Some(&-1) {
                scene.points.pop();
                scene.object_id.pop();
                scene.level_id.pop();
            }
            if scene.len() <= cfg.total_range.1 && scene.len() >= cfg.total_range.0 {
                return scene;
            }
        }
    }
    toy_draw(cfg, &mut rng)
}

fn toy_draw(cfg: &ToyConfig, rng: &mut ChaCha8Rng) -> Scene {
    let centers = sample_centers(rng, cfg.num_objects, cfg.center_box, cfg.min_center_sep);
    let mut points = Vec::new();
    let mut object_id = Vec::new();
    let mut level_id = Vec::new();
    for (obj, center) in centers.iter().enumerate() {
        points.push(*center);
        object_id.push(obj as i32);
        level_id.push(0);
        let n_parts = rng.gen_range(cfg.parts_range.0..=cfg.parts_range.1);
        for i in 0..n_parts {
            let angle = 2.0 * std::f64::consts::PI * i as f64 / n_parts as f64
                + normal(rng, cfg.angle_jitter);
            let radius = cfg.part_radius
                * rng.gen_range(1.0 - cfg.radius_jitter..1.0 + cfg.radius_jitter);
            let part = [
                center[0] + radius * angle.cos(),
                center[1] + radius * angle.sin(),
            ];
            points.push(part);
            object_id.push(obj as i32);
            level_id.push(1);
            let n_sub = rng.gen_range(cfg.subparts_range.0..=cfg.subparts_range.1);
            for _ in 0..n_sub {
                points.push([
                    part[0] + normal(rng, cfg.subpart_sigma),
                    part[1] + normal(rng, cfg.subpart_sigma),
                ]);
                object_id.push(obj as i32);
                level_id.push(2);
            }
        }
    }
    let n_noise = (cfg.noise_frac * points.len() as f64).round() as usize;
    for _ in 0..n_noise {
        points.push([
            rng.gen_range(-cfg.noise_box..cfg.noise_box),
            rng.gen_range(-cfg.noise_box..cfg.noise_box),
        ]);
        object_id.push(-1);
        level_id.push(-1);
    }
    Scene {
        points,
        object_id,
        level_id,
        tag: DatasetTag::Toy,
    }
}

// ── sprites generator ────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct SpritesConfig {
    pub num_objects: usize,
    pub limbs_range: (usize, usize),
    pub joints_range: (usize, usize),
    pub center_box: f64,
    pub min_center_sep: f64,
    pub limb_length: f64,
    pub length_jitter: f64,
    pub anchor_jitter: f64,
    pub joint_sigma: f64,
    pub noise_frac: f64,
    pub noise_box: f64,
    pub total_range: (usize, usize),
}

impl Default for SpritesConfig {
    fn default() -> Self {
        SpritesConfig {
            num_objects: 3,
            limbs_range: (4, 5),
            joints_range: (3, 4),
            center_box: 4.0,
            min_center_sep: 2.5,
            limb_length: 1.2,
            length_jitter: 0.1,
            anchor_jitter: 0.12,
            joint_sigma: 0.08,
            noise_frac: 0.10,
            noise_box: 5.0,
            total_range: (60, 80),
        }
    }
}

pub fn generate_sprites(seed: u64) -> Scene {
    generate_sprites_with(&SpritesConfig::default(), seed)
}

pub fn generate_sprites_with(cfg: &SpritesConfig, seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _attempt in 0..50 {
        let scene = sprites_draw(cfg, &mut rng);
        let n = scene.len();
        if n >= cfg.total_range.0 && n <= cfg.total_range.1 {
            return scene;
        }
        if n > cfg.total_range.1 {
            let mut scene = scene;
            while scene.len() > cfg.total_range.1 && scene.object_id.last() == Some(&-1) {
                scene.points.pop();
                scene.object_id.pop();
                scene.level_id.pop();
            }
            if scene.len() <= cfg.total_range.1 && scene.len() >= cfg.total_range.0 {
                return scene;
            }
        }
    }
    sprites_draw(cfg, &mut rng)
}

/// Body center, limbs at fixed directional anchors (up/right/down/left plus
/// an optional diagonal fifth), joints strung along each limb.
fn sprites_draw(cfg: &SpritesConfig, rng: &mut ChaCha8Rng) -> Scene {
    const ANCHORS: [[f64; 2]; 5] = [
        [0.0, 1.0],
        [1.0, 0.0],
        [0.0, -1.0],
        [-1.0, 0.0],
        [0.707, 0.707],
    ];
    let centers = sample_centers(rng, cfg.num_objects, cfg.center_box, cfg.min_center_sep);
    let mut points = Vec::new();
    let mut object_id = Vec::new();
    let mut level_id = Vec::new();
    for (obj, center) in centers.iter().enumerate() {
        points.push(*center);
        object_id.push(obj as i32);
        level_id.push(0);
        let n_limbs = rng.gen_range(cfg.limbs_range.0..=cfg.limbs_range.1);
        for anchor in ANCHORS.iter().take(n_limbs) {
            let dir = [
                anchor[0] + normal(rng, cfg.anchor_jitter),
                anchor[1] + normal(rng, cfg.anchor_jitter),
            ];
            let norm = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt().max(1e-9);
            let len = cfg.limb_length
                * rng.gen_range(1.0 - cfg.length_jitter..1.0 + cfg.length_jitter);
            let tip = [
                center[0] + len * dir[0] / norm,
                center[1] + len * dir[1] / norm,
            ];
            points.push(tip);
            object_id.push(obj as i32);
            level_id.push(1);
            let n_joints = rng.gen_range(cfg.joints_range.0..=cfg.joints_range.1);
            for _ in 0..n_joints {
                let frac = rng.gen_range(0.35..0.95);
                points.push([
                    center[0] + frac * len * dir[0] / norm + normal(rng, cfg.joint_sigma),
                    center[1] + frac * len * dir[1] / norm + normal(rng, cfg.joint_sigma),
                ]);
                object_id.push(obj as i32);
                level_id.push(2);
            }
        }
    }
    let n_noise = (cfg.noise_frac * points.len() as f64).round() as usize;
    for _ in 0..n_noise {
        points.push([
            rng.gen_range(-cfg.noise_box..cfg.noise_box),
            rng.gen_range(-cfg.noise_box..cfg.noise_box),
        ]);
        object_id.push(-1);
        level_id.push(-1);
    }
    Scene {
        points,
        object_id,
        level_id,
        tag: DatasetTag::Sprites,
    }
}

// ── CLEVR ingestion and conversion ───────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeTag {
    Small,
    Large,
}

#[derive(Debug, Clone)]
pub struct ClevrObject {
    pub center_3d: [f64; 3],
    pub size: SizeTag,
    pub shape: String,
    pub color: String,
    pub material: String,
}

#[derive(Debug, Clone)]
pub struct ClevrSceneRecord {
    pub objects: Vec<ClevrObject>,
}

#[derive(Deserialize)]
struct ClevrFileJson {
    scenes: Vec<ClevrSceneJson>,
}

#[derive(Deserialize)]
struct ClevrSceneJson {
    objects: Vec<ClevrObjectJson>,
}

#[derive(Deserialize)]
struct ClevrObjectJson {
    #[serde(rename = "3d_coords")]
    coords: [f64; 3],
    size: String,
    #[serde(default)]
    shape: String,
    #[serde(default)]
    color: String,
    #[serde(default)]
    material: String,
}

/// Parse a CLEVR v1.0 scenes annotation file and keep the scenes with 3-5
/// objects. This never downloads anything; the error message carries the
/// upstream URL when the file is missing.
pub fn ingest_clevr(path: &Path) -> Result<Vec<ClevrSceneRecord>, SceneError> {
    let text = fs::read_to_string(path).map_err(|source| SceneError::ClevrRead {
        path: path.display().to_string(),
        source,
    })?;
    let parsed: ClevrFileJson =
        serde_json::from_str(&text).map_err(|source| SceneError::ClevrParse {
            path: path.display().to_string(),
            source,
        })?;
    for scene in &parsed.scenes {
        for o in &scene.objects {
            let [x, y, _] = o.coords;
            if x.abs() > 3.0 + 1e-6 || y.abs() > 3.0 + 1e-6 {
                return Err(SceneError::ClevrRange {
                    path: path.display().to_string(),
                    x,
                    y,
                });
            }
        }
    }
    Ok(parsed
        .scenes
        .into_iter()
        .map(|s| ClevrSceneRecord {
            objects: s
                .objects
                .into_iter()
                .map(|o| ClevrObject {
                    center_3d: o.coords,
                    size: if o.size == "large" {
                        SizeTag::Large
                    } else {
                        SizeTag::Small
                    },
                    shape: o.shape,
                    color: o.color,
                    material: o.material,
                })
                .collect(),
        })
        .filter(|r| (3..=5).contains(&r.objects.len()))
        .collect())
}

/// Synthetic records mirroring the CLEVR annotation statistics (3-5 objects,
/// centers in `[-3, 3]^2`, small/large mix). Used where the real annotation
/// file is not on disk: tests, the density report, and desk-scale runs.
pub fn synthesize_clevr_records(count: usize, seed: u64) -> Vec<ClevrSceneRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC1EF_12D5);
    (0..count)
        .map(|_| {
            let n = rng.gen_range(3..=5);
            let centers = sample_centers(&mut rng, n, 2.8, 1.4);
            ClevrSceneRecord {
                objects: centers
                    .into_iter()
                    .map(|c| {
                        let large = rng.gen_bool(0.47);
                        ClevrObject {
                            center_3d: [c[0], c[1], if large { 0.70 } else { 0.35 }],
                            size: if large { SizeTag::Large } else { SizeTag::Small },
                            shape: String::new(),
                            color: String::new(),
                            material: String::new(),
                        }
                    })
                    .collect(),
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ClevrConfig {
    pub parts_range: (usize, usize),
    pub subparts_range: (usize, usize),
    pub base_radius_small: f64,
    pub base_radius_large: f64,
    pub radius_jitter: (f64, f64),
    pub angle_jitter: f64,
    pub l0_sigma: f64,
    pub l2_sigma: f64,
    pub dropout: f64,
    pub noise_frac: f64,
    pub noise_box: f64,
}

impl Default for ClevrConfig {
    fn default() -> Self {
        ClevrConfig {
            parts_range: (3, 5),
            subparts_range: (3, 5),
            base_radius_small: 0.35,
            base_radius_large: 0.70,
            radius_jitter: (0.8, 1.2),
            angle_jitter: 0.1,
            l0_sigma: 0.02,
            l2_sigma: 0.12,
            dropout: 0.15,
            noise_frac: 0.10,
            noise_box: 3.5,
        }
    }
}

pub fn clevr_to_scene(record: &ClevrSceneRecord, seed: u64) -> Scene {
    clevr_to_scene_with(&ClevrConfig::default(), record, seed)
}

/// Build a hierarchical 2-D scene from one annotation record: the object
/// center is an isolated core point, 3-5 surface points ring it at a
/// size-dependent radius, and each surface point spawns a tight interior
/// cluster. Per-level dropout and background noise are applied last.
pub fn clevr_to_scene_with(cfg: &ClevrConfig, record: &ClevrSceneRecord, seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::new();
    let mut object_id = Vec::new();
    let mut level_id = Vec::new();
    for (obj, o) in record.objects.iter().enumerate() {
        let center = [o.center_3d[0], o.center_3d[1]];
        points.push([
            center[0] + normal(&mut rng, cfg.l0_sigma),
            center[1] + normal(&mut rng, cfg.l0_sigma),
        ]);
        object_id.push(obj as i32);
        level_id.push(0);
        let base_radius = match o.size {
            SizeTag::Small => cfg.base_radius_small,
            SizeTag::Large => cfg.base_radius_large,
        };
        let n_parts = rng.gen_range(cfg.parts_range.0..=cfg.parts_range.1);
        for i in 0..n_parts {
            let angle = 2.0 * std::f64::consts::PI * i as f64 / n_parts as f64
                + normal(&mut rng, cfg.angle_jitter);
            let radius = if cfg.radius_jitter.0 == cfg.radius_jitter.1 {
                base_radius * cfg.radius_jitter.0
            } else {
                base_radius * rng.gen_range(cfg.radius_jitter.0..cfg.radius_jitter.1)
            };
            let part = [
                center[0] + radius * angle.cos(),
                center[1] + radius * angle.sin(),
            ];
            points.push(part);
            object_id.push(obj as i32);
            level_id.push(1);
            let n_sub = rng.gen_range(cfg.subparts_range.0..=cfg.subparts_range.1);
            for _ in 0..n_sub {
                points.push([
                    part[0] + normal(&mut rng, cfg.l2_sigma),
                    part[1] + normal(&mut rng, cfg.l2_sigma),
                ]);
                object_id.push(obj as i32);
                level_id.push(2);
            }
        }
    }
    if cfg.dropout > 0.0 {
        let keep: Vec<bool> = (0..points.len())
            .map(|_| !rng.gen_bool(cfg.dropout))
            .collect();
        let filter = |v: &mut Vec<_>| {
            let mut i = 0;
            v.retain(|_| {
                let k = keep[i];
                i += 1;
                k
            });
        };
        let mut i = 0;
        points.retain(|_| {
            let k = keep[i];
            i += 1;
            k
        });
        filter(&mut object_id);
        filter(&mut level_id);
    }
    let n_noise = (cfg.noise_frac * points.len() as f64).round() as usize;
    for _ in 0..n_noise {
        points.push([
            rng.gen_range(-cfg.noise_box..cfg.noise_box),
            rng.gen_range(-cfg.noise_box..cfg.noise_box),
        ]);
        object_id.push(-1);
        level_id.push(-1);
    }
    Scene {
        points,
        object_id,
        level_id,
        tag: DatasetTag::Clevr,
    }
}

// ── density stratification report ────────────────────────────────────

#[derive(Debug, Clone)]
pub struct LevelDensity {
    pub level: i32,
    /// Pooled per-point stats over all scenes.
    pub mean: f64,
    pub std: f64,
    pub points: usize,
    /// Per-scene means, used for the separation statistic.
    pub scene_means: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DensityReport {
    pub levels: Vec<LevelDensity>,
    /// Separation from the previous (sparser) level in sigma units:
    /// the Welch z-statistic on per-scene level means. `None` for the first
    /// row or when either side lacks scenes.
    pub separation_sigma: Vec<Option<f64>>,
    /// Fraction of scenes whose per-level means are strictly ordered
    /// `L0 > L1 > L2` (only scenes containing all reported levels count).
    pub per_scene_ordering: f64,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() < 2 {
        0.0
    } else {
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    };
    (mean, var)
}

/// Per-level local density across scenes. For each scene and hierarchy
/// level, k-NN distances are computed within that level's own subcloud
/// (with `k` capped at the subcloud size minus one), so the statistic
/// measures how tightly each level packs independent of the others.
pub fn density_report(scenes: &[Scene], k: usize) -> DensityReport {
    assert!(!scenes.is_empty(), "density report needs at least one scene");
    let levels_present: Vec<i32> = {
        let mut ls: Vec<i32> = scenes
            .iter()
            .flat_map(|s| s.level_id.iter().copied())
            .filter(|&l| l >= 0)
            .collect();
        ls.sort_unstable();
        ls.dedup();
        ls
    };
    let mut pooled: Vec<Vec<f64>> = vec![Vec::new(); levels_present.len()];
    let mut scene_means: Vec<Vec<f64>> = vec![Vec::new(); levels_present.len()];
    let mut ordered_scenes = 0usize;
    let mut full_scenes = 0usize;
    for scene in scenes {
        let mut this_scene: Vec<Option<f64>> = vec![None; levels_present.len()];
        for (li, &level) in levels_present.iter().enumerate() {
            let sub: Vec<[f64; 2]> = scene
                .points
                .iter()
                .zip(&scene.level_id)
                .filter(|(_, &l)| l == level)
                .map(|(p, _)| *p)
                .collect();
            if sub.len() < 2 {
                continue;
            }
            let k_eff = k.min(sub.len() - 1);
            let d = geometry::knn_density(&sub, k_eff).expect("subcloud has > k_eff points");
            pooled[li].extend_from_slice(&d.raw);
            let m = d.raw.iter().sum::<f64>() / d.raw.len() as f64;
            scene_means[li].push(m);
            this_scene[li] = Some(m);
        }
        if this_scene.iter().all(|m| m.is_some()) && this_scene.len() > 1 {
            full_scenes += 1;
            let vals: Vec<f64> = this_scene.into_iter().map(|m| m.unwrap()).collect();
            if vals.windows(2).all(|w| w[0] > w[1]) {
                ordered_scenes += 1;
            }
        }
    }
    let mut rows = Vec::new();
    for (li, &level) in levels_present.iter().enumerate() {
        let (mean, var) = mean_var(&pooled[li]);
        rows.push(LevelDensity {
            level,
            mean,
            std: var.sqrt(),
            points: pooled[li].len(),
            scene_means: scene_means[li].clone(),
        });
    }
    let mut separation = vec![None; rows.len()];
    for li in 1..rows.len() {
        let a = &rows[li - 1].scene_means;
        let b = &rows[li].scene_means;
        if a.len() >= 2 && b.len() >= 2 {
            let (ma, va) = mean_var(a);
            let (mb, vb) = mean_var(b);
            let se = (va / a.len() as f64 + vb / b.len() as f64).sqrt();
            if se > 0.0 {
                separation[li] = Some((ma - mb) / se);
            }
        }
    }
    DensityReport {
        levels: rows,
        separation_sigma: separation,
        per_scene_ordering: if full_scenes == 0 {
            0.0
        } else {
            ordered_scenes as f64 / full_scenes as f64
        },
    }
}

impl DensityReport {
    /// Render as a delimiter-separated table.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,mean_knn,std_knn,points,separation_sigma\n");
        for (row, sep) in self.levels.iter().zip(&self.separation_sigma) {
            let sep_str = match sep {
                Some(s) => format!("{s:.3}"),
                None => "n/a".to_string(),
            };
            out.push_str(&format!(
                "{},{:.6},{:.6},{},{}\n",
                row.level, row.mean, row.std, row.points, sep_str
            ));
        }
        out
    }
}

// ── scene files ──────────────────────────────────────────────────────

/// One flat record per point: `x,y,object_id,level_id` under a one-line
/// header.
pub fn write_scene(scene: &Scene, path: &Path) -> Result<(), SceneError> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "x,y,object_id,level_id")?;
    for i in 0..scene.len() {
        writeln!(
            f,
            "{:.6},{:.6},{},{}",
            scene.points[i][0], scene.points[i][1], scene.object_id[i], scene.level_id[i]
        )?;
    }
    Ok(())
}

pub fn read_scene(path: &Path, tag: DatasetTag) -> Result<Scene, SceneError> {
    let text = fs::read_to_string(path)?;
    let mut points = Vec::new();
    let mut object_id = Vec::new();
    let mut level_id = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parse_err = |detail: String| SceneError::SceneFile {
            path: path.display().to_string(),
            line: lineno + 1,
            detail,
        };
        if fields.len() != 4 {
            return Err(parse_err(format!("expected 4 fields, got {}", fields.len())));
        }
        let x: f64 = fields[0].parse().map_err(|e| parse_err(format!("{e}")))?;
        let y: f64 = fields[1].parse().map_err(|e| parse_err(format!("{e}")))?;
        let o: i32 = fields[2].parse().map_err(|e| parse_err(format!("{e}")))?;
        let l: i32 = fields[3].parse().map_err(|e| parse_err(format!("{e}")))?;
        points.push([x, y]);
        object_id.push(o);
        level_id.push(l);
    }
    Ok(Scene {
        points,
        object_id,
        level_id,
        tag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_structure() {
        for seed in 0..20 {
            let s = generate_toy(seed);
            let n = s.len();
            assert!((50..=70).contains(&n), "toy scene has {n} points");
            let mut objects: Vec<i32> = s.object_id.iter().copied().filter(|&o| o >= 0).collect();
            objects.sort_unstable();
            objects.dedup();
            assert_eq!(objects, vec![0, 1, 2]);
            for obj in 0..3 {
                let centers = s
                    .object_id
                    .iter()
                    .zip(&s.level_id)
                    .filter(|(&o, &l)| o == obj && l == 0)
                    .count();
                assert_eq!(centers, 1, "object {obj} must have exactly one core point");
                let parts = s
                    .object_id
                    .iter()
                    .zip(&s.level_id)
                    .filter(|(&o, &l)| o == obj && l == 1)
                    .count();
                assert!((4..=5).contains(&parts));
            }
            let labeled = s.labeled_count();
            let noise = s.noise_count();
            let expected = (0.10 * labeled as f64).round();
            assert!(
                (noise as f64 - expected).abs() <= 3.0,
                "noise {noise} vs 10% of {labeled}"
            );
            // every labeled point has both labels
            for i in 0..n {
                assert_eq!(s.object_id[i] >= 0, s.level_id[i] >= 0);
            }
        }
    }

    #[test]
    fn toy_deterministic() {
        assert_eq!(generate_toy(7), generate_toy(7));
        assert_ne!(generate_toy(7), generate_toy(8));
    }

    #[test]
    fn toy_label_consistency() {
        // on noise-free scenes, an L2 point's nearest L1 point is almost
        // always its own object's
        let cfg = ToyConfig {
            noise_frac: 0.0,
            ..ToyConfig::default()
        };
        let mut good = 0usize;
        let mut total = 0usize;
        for seed in 100..120 {
            let s = generate_toy_with(&cfg, seed);
            for i in 0..s.len() {
                if s.level_id[i] != 2 {
                    continue;
                }
                let mut best = f64::INFINITY;
                let mut best_obj = -1;
                for j in 0..s.len() {
                    if s.level_id[j] != 1 {
                        continue;
                    }
                    let d = (s.points[i][0] - s.points[j][0]).powi(2)
                        + (s.points[i][1] - s.points[j][1]).powi(2);
                    if d < best {
                        best = d;
                        best_obj = s.object_id[j];
                    }
                }
                total += 1;
                if best_obj == s.object_id[i] {
                    good += 1;
                }
            }
        }
        let frac = good as f64 / total as f64;
        assert!(frac >= 0.90, "L2->nearest L1 object agreement {frac}");
    }

    #[test]
    fn sprites_structure() {
        for seed in 0..20 {
            let s = generate_sprites(seed);
            assert!((60..=80).contains(&s.len()), "sprites scene has {}", s.len());
            for obj in 0..3 {
                let limbs = s
                    .object_id
                    .iter()
                    .zip(&s.level_id)
                    .filter(|(&o, &l)| o == obj && l == 1)
                    .count();
                assert!((4..=5).contains(&limbs));
            }
        }
    }

    #[test]
    fn sprites_density_ordering() {
        // centers are sparse, joints dense, per construction
        for seed in 0..10 {
            let s = generate_sprites(seed);
            let report = density_report(std::slice::from_ref(&s), 5);
            let l0 = report.levels.iter().find(|r| r.level == 0).unwrap();
            let l2 = report.levels.iter().find(|r| r.level == 2).unwrap();
            assert!(l0.mean > l2.mean, "L0 {} vs L2 {}", l0.mean, l2.mean);
        }
    }

    #[test]
    fn clevr_fixture_parses() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/clevr_fixture.json");
        let records = ingest_clevr(&path).unwrap();
        // fixture holds scenes with 4, 7, and 3 objects; the 7-object one is
        // dropped by the 3-5 filter
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].objects.len(), 4);
        assert_eq!(records[1].objects.len(), 3);
        assert_eq!(records[0].objects[0].size, SizeTag::Large);
    }

    #[test]
    fn clevr_missing_file_names_url() {
        let err = ingest_clevr(Path::new("/nonexistent/CLEVR_scenes.json")).unwrap_err();
        assert!(err.to_string().contains("dl.fbaipublicfiles.com"));
    }

    #[test]
    fn clevr_out_of_range_coordinates_rejected() {
        let dir = std::env::temp_dir().join("worldline_clevr_range");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.json");
        fs::write(
            &path,
            r#"{"scenes":[{"objects":[
                {"3d_coords":[9.5, 0.0, 0.35], "size":"small"},
                {"3d_coords":[0.0, 1.0, 0.70], "size":"large"},
                {"3d_coords":[1.0, 1.0, 0.35], "size":"small"}
            ]}]}"#,
        )
        .unwrap();
        let err = ingest_clevr(&path).unwrap_err();
        assert!(matches!(err, SceneError::ClevrRange { .. }), "{err}");
    }

    #[test]
    fn clevr_angle_placement_without_jitter() {
        let cfg = ClevrConfig {
            parts_range: (4, 4),
            subparts_range: (2, 2),
            radius_jitter: (1.0, 1.0),
            angle_jitter: 0.0,
            l0_sigma: 0.0,
            l2_sigma: 0.0,
            dropout: 0.0,
            noise_frac: 0.0,
            ..ClevrConfig::default()
        };
        let record = ClevrSceneRecord {
            objects: vec![ClevrObject {
                center_3d: [1.0, -0.5, 0.35],
                size: SizeTag::Small,
                shape: String::new(),
                color: String::new(),
                material: String::new(),
            }],
        };
        let s = clevr_to_scene_with(&cfg, &record, 0);
        // layout: L0, then part 0 (+2 subparts), part 1 (+2), ...
        // part i=1 of n=4 sits at angle pi/2: center + radius * (0, 1)
        let part1 = s.points[1 + 3];
        assert!((part1[0] - 1.0).abs() < 1e-12);
        assert!((part1[1] - (-0.5 + 0.35)).abs() < 1e-12);
        // sigma=0 everywhere: subparts coincide with their parent
        assert_eq!(s.points[4], s.points[5]);
        assert_eq!(s.points[4], s.points[6]);
    }

    #[test]
    fn clevr_counting_without_dropout() {
        let cfg = ClevrConfig {
            parts_range: (3, 3),
            subparts_range: (2, 2),
            dropout: 0.0,
            ..ClevrConfig::default()
        };
        let records = synthesize_clevr_records(5, 9);
        let record = records.iter().find(|r| r.objects.len() == 3).unwrap();
        let s = clevr_to_scene_with(&cfg, record, 1);
        let count = |lvl: i32| s.level_id.iter().filter(|&&l| l == lvl).count();
        assert_eq!(count(0), 3);
        assert_eq!(count(1), 9);
        assert_eq!(count(2), 18);
        let labeled = 3 + 9 + 18;
        assert_eq!(s.noise_count(), (0.10f64 * labeled as f64).round() as usize);
    }

    #[test]
    fn clevr_level_proportions() {
        let records = synthesize_clevr_records(200, 17);
        let mut counts = [0usize; 3];
        for (i, r) in records.iter().enumerate() {
            let s = clevr_to_scene(r, 1000 + i as u64);
            for &l in &s.level_id {
                if l >= 0 {
                    counts[l as usize] += 1;
                }
            }
        }
        let total: usize = counts.iter().sum();
        let pct: Vec<f64> = counts.iter().map(|&c| 100.0 * c as f64 / total as f64).collect();
        assert!((pct[0] - 1.7).abs() <= 5.0, "L0 share {:.1}%", pct[0]);
        assert!((pct[1] - 20.0).abs() <= 5.0, "L1 share {:.1}%", pct[1]);
        assert!((pct[2] - 78.3).abs() <= 5.0, "L2 share {:.1}%", pct[2]);
    }

    #[test]
    fn density_report_single_level() {
        let s = Scene {
            points: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [2.0, 2.0]],
            object_id: vec![0, 0, 0, 0],
            level_id: vec![1, 1, 1, 1],
            tag: DatasetTag::Toy,
        };
        let r = density_report(&[s], 5);
        assert_eq!(r.levels.len(), 1);
        assert_eq!(r.separation_sigma, vec![None]);
        assert!(r.to_csv().contains("n/a"));
    }

    #[test]
    fn density_scales_with_coordinates() {
        let scenes: Vec<Scene> = (0..5).map(generate_toy).collect();
        let scaled: Vec<Scene> = scenes.iter().map(|s| s.scaled(2.0)).collect();
        let r1 = density_report(&scenes, 5);
        let r2 = density_report(&scaled, 5);
        for (a, b) in r1.levels.iter().zip(&r2.levels) {
            assert!((b.mean - 2.0 * a.mean).abs() < 1e-9);
        }
    }

    #[test]
    fn scene_roundtrip() {
        let dir = std::env::temp_dir().join("worldline_scene_test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("toy_0.csv");
        let s = generate_toy(0);
        write_scene(&s, &path).unwrap();
        let back = read_scene(&path, DatasetTag::Toy).unwrap();
        assert_eq!(s.object_id, back.object_id);
        assert_eq!(s.level_id, back.level_id);
        for (a, b) in s.points.iter().zip(&back.points) {
            assert!((a[0] - b[0]).abs() < 1e-6);
            assert!((a[1] - b[1]).abs() < 1e-6);
        }
    }
}
