//! Experiment matrix runner and report generation: per-seed result rows,
//! per-cell summaries with Welch comparisons against the Lorentzian column,
//! a hyperparameter sensitivity grid, and static SVG plots.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use thiserror::Error;

use crate::metrics::{format_p, welch_stats, LevelMapping, RunResult, WelchStats};
use crate::model::GeometryMode;
use crate::scenes::{clevr_to_scene, ingest_clevr, DatasetTag, Scene, SceneError};
use crate::training::{train_run_with_pool, TrainConfig, TrainError};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("experiment spec invalid: {0}")]
    BadSpec(String),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {detail}")]
    BadValue { key: String, detail: String },
}

/// One experiment matrix: datasets x modes x seeds, plus overrides.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub datasets: Vec<DatasetTag>,
    pub modes: Vec<GeometryMode>,
    pub seeds: Vec<u64>,
    pub epochs: usize,
    pub level_mapping: LevelMapping,
    pub overrides: BTreeMap<String, String>,
    pub clevr_path: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub jobs: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            datasets: vec![DatasetTag::Toy],
            modes: GeometryMode::ALL.to_vec(),
            seeds: (0..5).collect(),
            epochs: 300,
            level_mapping: LevelMapping::Mod,
            overrides: BTreeMap::new(),
            clevr_path: None,
            out_dir: PathBuf::from("results"),
            jobs: 1,
        }
    }
}

/// Apply `key=value` overrides (the hyperparameter names of the reference
/// configuration) onto a train config.
pub fn apply_override(cfg: &mut TrainConfig, key: &str, value: &str) -> Result<(), ReportError> {
    let bad = |detail: &str| ReportError::BadValue {
        key: key.to_string(),
        detail: detail.to_string(),
    };
    let parse_f64 = |v: &str| v.trim().parse::<f64>().map_err(|e| bad(&e.to_string()));
    let parse_usize = |v: &str| v.trim().parse::<usize>().map_err(|e| bad(&e.to_string()));
    let parse_list = |v: &str| -> Result<Vec<f64>, ReportError> {
        v.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| bad(&e.to_string())))
            .collect()
    };
    match key {
        "learning_rate" => cfg.lr = parse_f64(value)?,
        "batch_size" => cfg.batch = parse_usize(value)?,
        "epochs" => cfg.epochs = parse_usize(value)?,
        "grad_clip" => cfg.grad_clip_norm = parse_f64(value)?,
        "tau_temp" => cfg.model.tau_temp = parse_f64(value)?,
        "k_neighbors" => cfg.model.k_neighbors = parse_usize(value)?,
        "hidden_dim" => cfg.model.hidden_dim = parse_usize(value)?,
        "iterations" => cfg.model.iterations = parse_usize(value)?,
        "lambda_cone" => cfg.model.lambda_cone = parse_f64(value)?,
        "horizon_scale" => cfg.model.cone.horizon_scale = parse_f64(value)?,
        "num_objects" => cfg.model.num_objects = parse_usize(value)?,
        "num_levels" => cfg.model.num_levels = parse_usize(value)?,
        "eval_every" => cfg.eval_every = parse_usize(value)?,
        "level_times" => {
            let ts = parse_list(value)?;
            if ts.len() != 3 {
                return Err(bad("expected three comma-separated times"));
            }
            cfg.model.level_times = ts;
        }
        "base_horizons" => {
            let hs = parse_list(value)?;
            if hs.len() != 3 {
                return Err(bad("expected three comma-separated horizons"));
            }
            cfg.model.cone.base_horizons = [hs[0], hs[1], hs[2]];
        }
        "past_penalty" => cfg.model.cone.past_penalty = parse_f64(value)?,
        "spacelike_penalty" => cfg.model.cone.spacelike_penalty = parse_f64(value)?,
        other => return Err(ReportError::UnknownKey(other.to_string())),
    }
    Ok(())
}

/// Parse a config file of `key=value` lines (blank lines and `#` comments
/// ignored) into an override map.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>, ReportError> {
    let mut map = BTreeMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ReportError::BadSpec(format!("expected key=value, got `{line}`")))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

// ── matrix execution ─────────────────────────────────────────────────

/// Per-cell summary: mean/std over seeds plus the Welch comparison of this
/// mode's level accuracy against the Lorentzian rows of the same dataset.
#[derive(Debug, Clone)]
pub struct CellSummary {
    pub dataset: DatasetTag,
    pub mode: GeometryMode,
    pub seeds: usize,
    pub ari_mean: f64,
    pub ari_std: f64,
    pub acc_mean: f64,
    pub acc_std: f64,
    pub recon_mean: f64,
    pub vs_lorentzian: Option<WelchStats>,
}

#[derive(Debug, Clone)]
pub struct MatrixResults {
    pub rows: Vec<RunResult>,
    pub cells: Vec<CellSummary>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn build_train_config(
    spec: &ExperimentSpec,
    dataset: DatasetTag,
    mode: GeometryMode,
    seed: u64,
) -> Result<TrainConfig, ReportError> {
    let mut cfg = TrainConfig::new(dataset, mode, seed);
    cfg.epochs = spec.epochs;
    cfg.level_mapping = spec.level_mapping;
    for (k, v) in &spec.overrides {
        apply_override(&mut cfg, k, v)?;
    }
    Ok(cfg)
}

/// Run every (dataset, mode, seed) cell of the spec. Seed-level parallelism
/// via `spec.jobs` worker threads; rows are sorted before any output is
/// written, so results are byte-identical regardless of job count.
pub fn run_matrix(spec: &ExperimentSpec) -> Result<MatrixResults, ReportError> {
    if spec.datasets.is_empty() || spec.modes.is_empty() || spec.seeds.is_empty() {
        return Err(ReportError::BadSpec(
            "datasets, modes, and seeds must all be nonempty".into(),
        ));
    }
    let clevr_pool: Option<Vec<Scene>> = if spec.datasets.contains(&DatasetTag::Clevr) {
        match &spec.clevr_path {
            Some(path) => {
                let records = ingest_clevr(path)?;
                Some(
                    records
                        .iter()
                        .enumerate()
                        .map(|(i, r)| clevr_to_scene(r, i as u64))
                        .collect(),
                )
            }
            None => {
                eprintln!(
                    "note: no --clevr-path given; training on synthesized annotation records"
                );
                None
            }
        }
    } else {
        None
    };

    let mut jobs: Vec<(DatasetTag, GeometryMode, u64)> = Vec::new();
    for &dataset in &spec.datasets {
        for &mode in &spec.modes {
            for &seed in &spec.seeds {
                jobs.push((dataset, mode, seed));
            }
        }
    }
    for job in &jobs {
        // fail fast on bad overrides before spawning workers
        build_train_config(spec, job.0, job.1, job.2)?;
    }

    let ckpt_dir = spec.out_dir.join("checkpoints");
    fs::create_dir_all(&ckpt_dir)?;

    let workers = spec.jobs.max(1);
    let mut rows: Vec<RunResult> = Vec::with_capacity(jobs.len());
    let mut failures: Vec<String> = Vec::new();
    let next = std::sync::atomic::AtomicUsize::new(0);
    std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<Result<RunResult, String>>();
        let jobs_ref = &jobs;
        let pool_ref = clevr_pool.as_deref();
        let next_ref = &next;
        for _ in 0..workers.min(jobs.len()) {
            let tx = tx.clone();
            scope.spawn(move || loop {
                let i = next_ref.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= jobs_ref.len() {
                    break;
                }
                let (dataset, mode, seed) = jobs_ref[i];
                let result = build_train_config(spec, dataset, mode, seed)
                    .map_err(|e| e.to_string())
                    .and_then(|mut cfg| {
                        cfg.checkpoint_path = Some(
                            spec.out_dir
                                .join("checkpoints")
                                .join(format!("{dataset}_{mode}_{seed}.wlsa")),
                        );
                        train_run_with_pool(&cfg, pool_ref).map_err(|e| {
                            format!("{dataset}/{mode}/seed {seed}: {e}")
                        })
                    });
                let _ = tx.send(result);
            });
        }
        drop(tx);
        for received in rx {
            match received {
                Ok(r) => rows.push(r),
                Err(e) => failures.push(e),
            }
        }
    });
    if !failures.is_empty() {
        return Err(ReportError::BadSpec(format!(
            "{} run(s) aborted: {}",
            failures.len(),
            failures.join("; ")
        )));
    }
    rows.sort_by_key(|r| {
        (
            r.dataset.as_str(),
            r.mode.as_str(),
            r.seed,
        )
    });

    let mut cells = Vec::new();
    for &dataset in &spec.datasets {
        let loco_accs: Vec<f64> = rows
            .iter()
            .filter(|r| r.dataset == dataset && r.mode == GeometryMode::Lorentzian)
            .map(|r| r.level_acc)
            .collect();
        for &mode in &spec.modes {
            let cell_rows: Vec<&RunResult> = rows
                .iter()
                .filter(|r| r.dataset == dataset && r.mode == mode)
                .collect();
            if cell_rows.is_empty() {
                continue;
            }
            let aris: Vec<f64> = cell_rows.iter().map(|r| r.object_ari).collect();
            let accs: Vec<f64> = cell_rows.iter().map(|r| r.level_acc).collect();
            let recons: Vec<f64> = cell_rows.iter().map(|r| r.final_recon_loss).collect();
            let (ari_mean, ari_std) = mean_std(&aris);
            let (acc_mean, acc_std) = mean_std(&accs);
            let (recon_mean, _) = mean_std(&recons);
            let vs_lorentzian = if mode != GeometryMode::Lorentzian
                && loco_accs.len() >= 2
                && accs.len() >= 2
            {
                welch_stats(&loco_accs, &accs).ok()
            } else {
                None
            };
            cells.push(CellSummary {
                dataset,
                mode,
                seeds: cell_rows.len(),
                ari_mean,
                ari_std,
                acc_mean,
                acc_std,
                recon_mean,
                vs_lorentzian,
            });
        }
    }
    Ok(MatrixResults { rows, cells })
}

impl MatrixResults {
    /// Per-seed rows: `dataset, mode, seed, object_ari, level_acc, final_loss`.
    pub fn results_csv(&self) -> String {
        let mut out = String::from(RunResult::csv_header());
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.to_csv_row());
            out.push('\n');
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "dataset,mode,seeds,ari_mean,ari_std,acc_mean,acc_std,recon_mean,welch_t_vs_lorentzian,welch_p_vs_lorentzian,cohens_d_vs_lorentzian\n",
        );
        for c in &self.cells {
            let (t, p, d) = match &c.vs_lorentzian {
                Some(w) => (
                    format!("{:.4}", w.t),
                    format_p(w.p_two_sided),
                    format!("{:.4}", w.cohens_d),
                ),
                None => ("".into(), "".into(), "".into()),
            };
            writeln!(
                out,
                "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{}",
                c.dataset, c.mode, c.seeds, c.ari_mean, c.ari_std, c.acc_mean, c.acc_std,
                c.recon_mean, t, p, d
            )
            .unwrap();
        }
        out
    }

    /// Aligned text table, one row per (dataset, mode) cell.
    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "{:<8} {:<14} {:>5} {:>16} {:>16} {:>10} {:>22}",
            "dataset", "mode", "seeds", "object_ari", "level_acc", "recon", "vs lorentzian"
        )
        .unwrap();
        for c in &self.cells {
            let vs = match &c.vs_lorentzian {
                Some(w) => format!("t={:.1} p={}", w.t, format_p(w.p_two_sided)),
                None => "-".into(),
            };
            writeln!(
                out,
                "{:<8} {:<14} {:>5} {:>8.3}±{:<7.3} {:>8.3}±{:<7.3} {:>10.4} {:>22}",
                c.dataset.as_str(),
                c.mode.as_str(),
                c.seeds,
                c.ari_mean,
                c.ari_std,
                c.acc_mean,
                c.acc_std,
                c.recon_mean,
                vs
            )
            .unwrap();
        }
        out
    }

    /// Write CSVs, the text table, and the plots into `out_dir`.
    pub fn write_all(&self, out_dir: &Path) -> Result<(), ReportError> {
        fs::create_dir_all(out_dir)?;
        fs::write(out_dir.join("results.csv"), self.results_csv())?;
        fs::write(out_dir.join("summary.csv"), self.summary_csv())?;
        fs::write(out_dir.join("summary.txt"), self.summary_table())?;
        if let Some(svg) = curves_svg(&self.rows) {
            fs::write(out_dir.join("curves.svg"), svg)?;
        } else {
            eprintln!("warning: no metric curves to plot, skipping curves.svg");
        }
        if let Some(svg) = bars_svg(&self.cells) {
            fs::write(out_dir.join("summary_bars.svg"), svg)?;
        }
        Ok(())
    }
}

// ── plots ────────────────────────────────────────────────────────────

const SERIES_COLORS: [&str; 8] = [
    "#1b6ca8", "#c0392b", "#27ae60", "#8e44ad", "#e67e22", "#16a085", "#7f8c8d", "#2c3e50",
];

fn svg_header(w: usize, h: usize) -> String {
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    )
}

/// Level-accuracy-versus-epoch curves, one series per (dataset, mode), mean
/// over seeds. Returns `None` when no run carries metric curves.
pub fn curves_svg(rows: &[RunResult]) -> Option<String> {
    let mut series: BTreeMap<(String, String), Vec<&RunResult>> = BTreeMap::new();
    for r in rows {
        if r.epoch_metrics.is_empty() {
            continue;
        }
        series
            .entry((r.dataset.as_str().into(), r.mode.as_str().into()))
            .or_default()
            .push(r);
    }
    if series.is_empty() {
        return None;
    }
    let (w, h) = (640usize, 400usize);
    let (ml, mr, mt, mb) = (50.0, 10.0, 30.0, 40.0);
    let plot_w = w as f64 - ml - mr;
    let plot_h = h as f64 - mt - mb;
    let max_epoch = rows
        .iter()
        .flat_map(|r| r.epoch_metrics.iter().map(|(e, _, _)| *e))
        .max()
        .unwrap_or(1) as f64;
    let mut svg = svg_header(w, h);
    // axes
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        mt + plot_h,
        ml + plot_w,
        mt + plot_h
    ));
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>\n",
        mt + plot_h
    ));
    for frac in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let y = mt + plot_h * (1.0 - frac);
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"end\">{frac:.2}</text>\n",
            ml - 6.0,
            y + 4.0
        ));
        svg.push_str(&format!(
            "<line x1=\"{ml}\" y1=\"{y:.1}\" x2=\"{}\" y2=\"{y:.1}\" stroke=\"#dddddd\"/>\n",
            ml + plot_w
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">epoch</text>\n",
        ml + plot_w / 2.0,
        h as f64 - 8.0
    ));
    svg.push_str(&format!(
        "<text x=\"14\" y=\"{}\" font-size=\"12\" transform=\"rotate(-90 14 {})\" text-anchor=\"middle\">level accuracy</text>\n",
        mt + plot_h / 2.0,
        mt + plot_h / 2.0
    ));
    for (si, ((dataset, mode), runs)) in series.iter().enumerate() {
        // mean curve across seeds, keyed by epoch
        let mut by_epoch: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for r in runs {
            for (e, _, acc) in &r.epoch_metrics {
                by_epoch.entry(*e).or_default().push(*acc);
            }
        }
        let pts: Vec<String> = by_epoch
            .iter()
            .map(|(e, accs)| {
                let acc = accs.iter().sum::<f64>() / accs.len() as f64;
                let x = ml + plot_w * (*e as f64 / max_epoch);
                let y = mt + plot_h * (1.0 - acc.clamp(0.0, 1.0));
                format!("{x:.1},{y:.1}")
            })
            .collect();
        let color = SERIES_COLORS[si % SERIES_COLORS.len()];
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\"/>\n",
            pts.join(" ")
        ));
        let ly = mt + 14.0 * si as f64;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{ly:.1}\" x2=\"{}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"3\"/>\n",
            ml + plot_w - 150.0,
            ml + plot_w - 130.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{:.1}\" font-size=\"11\">{dataset}/{mode}</text>\n",
            ml + plot_w - 124.0,
            ly + 4.0
        ));
    }
    svg.push_str("</svg>\n");
    Some(svg)
}

/// Bar chart of per-cell mean level accuracy.
pub fn bars_svg(cells: &[CellSummary]) -> Option<String> {
    if cells.is_empty() {
        return None;
    }
    let (w, h) = (640usize, 360usize);
    let (ml, mr, mt, mb) = (50.0, 10.0, 20.0, 90.0);
    let plot_w = w as f64 - ml - mr;
    let plot_h = h as f64 - mt - mb;
    let bw = plot_w / cells.len() as f64;
    let mut svg = svg_header(w, h);
    for frac in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let y = mt + plot_h * (1.0 - frac);
        svg.push_str(&format!(
            "<line x1=\"{ml}\" y1=\"{y:.1}\" x2=\"{}\" y2=\"{y:.1}\" stroke=\"#dddddd\"/>\n",
            ml + plot_w
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"end\">{frac:.2}</text>\n",
            ml - 6.0,
            y + 4.0
        ));
    }
    for (i, c) in cells.iter().enumerate() {
        let x = ml + bw * i as f64 + bw * 0.15;
        let bh = plot_h * c.acc_mean.clamp(0.0, 1.0);
        let y = mt + plot_h - bh;
        let color = SERIES_COLORS[i % SERIES_COLORS.len()];
        svg.push_str(&format!(
            "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{:.1}\" height=\"{bh:.1}\" fill=\"{color}\"/>\n",
            bw * 0.7
        ));
        let label_x = x + bw * 0.35;
        let label_y = mt + plot_h + 12.0;
        svg.push_str(&format!(
            "<text x=\"{label_x:.1}\" y=\"{label_y:.1}\" font-size=\"10\" text-anchor=\"end\" transform=\"rotate(-40 {label_x:.1} {label_y:.1})\">{}/{}</text>\n",
            c.dataset, c.mode
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"middle\">{:.2}</text>\n",
            x + bw * 0.35,
            y - 4.0,
            c.acc_mean
        ));
    }
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        mt + plot_h,
        ml + plot_w,
        mt + plot_h
    ));
    svg.push_str("</svg>\n");
    Some(svg)
}

// ── sensitivity sweep ────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct SensitivityRow {
    pub knob: String,
    pub setting: String,
    pub acc_mean: f64,
    pub acc_std: f64,
}

#[derive(Debug, Clone)]
pub struct SensitivityReport {
    pub rows: Vec<SensitivityRow>,
    /// Per-knob (max - min) spread of mean level accuracy and the bound the
    /// spread is compared against.
    pub spreads: Vec<(String, f64, f64)>,
}

impl SensitivityReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{:<16} {:<22} {:>10} {:>8}", "knob", "setting", "acc_mean", "std").unwrap();
        for r in &self.rows {
            writeln!(
                out,
                "{:<16} {:<22} {:>10.4} {:>8.4}",
                r.knob, r.setting, r.acc_mean, r.acc_std
            )
            .unwrap();
        }
        writeln!(out).unwrap();
        for (knob, spread, bound) in &self.spreads {
            let verdict = if spread <= bound { "within" } else { "EXCEEDS" };
            writeln!(
                out,
                "{knob}: spread {spread:.4} {verdict} bound {bound:.2}"
            )
            .unwrap();
        }
        out
    }
}

/// Appendix-style robustness grid on the toy dataset: cone penalties, base
/// horizons, cone weight, and level-time spacing, a few seeds each. Spread
/// bounds are doubled relative to the reference report to absorb small-seed
/// noise; the outcome is informational.
pub fn sensitivity_sweep(
    seeds: &[u64],
    epochs: usize,
    jobs: usize,
) -> Result<SensitivityReport, ReportError> {
    let penalty_grid = [(-8.0, -4.0), (-10.0, -5.0), (-12.0, -6.0)];
    let horizon_grid = [[0.8, 0.5, 0.2], [0.9, 0.6, 0.3], [1.0, 0.7, 0.4]];
    let lambda_grid = [0.3, 0.5, 0.7];
    let times_grid = [[1.0, 2.0, 3.0], [1.0, 2.5, 4.0], [0.5, 2.0, 4.5]];

    struct Cell {
        knob: &'static str,
        setting: String,
        cfg_fn: Box<dyn Fn(&mut TrainConfig) + Send + Sync>,
    }
    let mut cells: Vec<Cell> = Vec::new();
    for (past, space) in penalty_grid {
        cells.push(Cell {
            knob: "penalties",
            setting: format!("({past},{space})"),
            cfg_fn: Box::new(move |c| {
                c.model.cone.past_penalty = -past;
                c.model.cone.spacelike_penalty = -space;
            }),
        });
    }
    for hs in horizon_grid {
        cells.push(Cell {
            knob: "base_horizons",
            setting: format!("{hs:?}"),
            cfg_fn: Box::new(move |c| c.model.cone.base_horizons = hs),
        });
    }
    for l in lambda_grid {
        cells.push(Cell {
            knob: "lambda_cone",
            setting: format!("{l}"),
            cfg_fn: Box::new(move |c| c.model.lambda_cone = l),
        });
    }
    for ts in times_grid {
        cells.push(Cell {
            knob: "level_times",
            setting: format!("{ts:?}"),
            cfg_fn: Box::new(move |c| c.model.level_times = ts.to_vec()),
        });
    }

    let mut tasks: Vec<(usize, u64)> = Vec::new();
    for ci in 0..cells.len() {
        for &s in seeds {
            tasks.push((ci, s));
        }
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let accs: Vec<(usize, f64)> = {
        let mut out = Vec::with_capacity(tasks.len());
        std::thread::scope(|scope| {
            let (tx, rx) = mpsc::channel::<Result<(usize, f64), String>>();
            let cells_ref = &cells;
            let tasks_ref = &tasks;
            let next_ref = &next;
            for _ in 0..jobs.max(1).min(tasks.len()) {
                let tx = tx.clone();
                scope.spawn(move || loop {
                    let i = next_ref.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if i >= tasks_ref.len() {
                        break;
                    }
                    let (ci, seed) = tasks_ref[i];
                    let mut cfg =
                        TrainConfig::new(DatasetTag::Toy, GeometryMode::Lorentzian, seed);
                    cfg.epochs = epochs;
                    (cells_ref[ci].cfg_fn)(&mut cfg);
                    let res = train_run_with_pool(&cfg, None)
                        .map(|r| (ci, r.level_acc))
                        .map_err(|e| e.to_string());
                    let _ = tx.send(res);
                });
            }
            drop(tx);
            for r in rx {
                match r {
                    Ok(v) => out.push(v),
                    Err(e) => eprintln!("sensitivity run failed: {e}"),
                }
            }
        });
        out
    };

    let mut rows = Vec::new();
    for (ci, cell) in cells.iter().enumerate() {
        let vals: Vec<f64> = accs.iter().filter(|(c, _)| *c == ci).map(|(_, a)| *a).collect();
        let (mean, std) = mean_std(&vals);
        rows.push(SensitivityRow {
            knob: cell.knob.to_string(),
            setting: cell.setting.clone(),
            acc_mean: mean,
            acc_std: std,
        });
    }
    // reference bounds, doubled for small-seed noise
    let bounds = [
        ("penalties", 0.06),
        ("base_horizons", 0.08),
        ("lambda_cone", 0.10),
        ("level_times", 0.08),
    ];
    let mut spreads = Vec::new();
    for (knob, bound) in bounds {
        let vals: Vec<f64> = rows
            .iter()
            .filter(|r| r.knob == knob)
            .map(|r| r.acc_mean)
            .collect();
        if vals.is_empty() {
            continue;
        }
        let spread = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - vals.iter().cloned().fold(f64::INFINITY, f64::min);
        spreads.push((knob.to_string(), spread, bound));
    }
    Ok(SensitivityReport { rows, spreads })
}
