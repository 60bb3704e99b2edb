//! Clustering and hierarchy metrics plus the statistics used to compare
//! runs: adjusted Rand index, fixed-slot level accuracy, Hungarian matching,
//! and Welch's t-test with effect sizes.

use std::collections::HashMap;

use thiserror::Error;

use crate::scenes::DatasetTag;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("label vectors differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("cost matrix must be square and finite")]
    BadCostMatrix,
}

/// How an attention argmax over slot index `k` maps to predictions.
/// The slot list is laid out worldline-major (object `i`, level `j` at
/// `k = 3i + j`), so `Mod` is the layout-consistent mapping. `Div` is the
/// transposed reading, kept behind a flag for sensitivity checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevelMapping {
    Mod,
    Div,
}

impl LevelMapping {
    pub fn split(&self, slot: usize, num_levels: usize) -> (usize, usize) {
        match self {
            LevelMapping::Mod => (slot / num_levels, slot % num_levels),
            LevelMapping::Div => (slot % num_levels, slot / num_levels),
        }
    }
}

/// Hard per-point assignments from a K x N attention matrix: argmax over
/// slots (ties broken toward the lowest index), then the fixed slot-to-level
/// mapping.
pub fn assign(attn: &[f64], k: usize, n: usize, mapping: LevelMapping) -> Vec<(i32, i32)> {
    assert_eq!(attn.len(), k * n, "attention shape mismatch");
    let num_levels = 3;
    (0..n)
        .map(|col| {
            let mut best = 0usize;
            let mut best_v = attn[col];
            for row in 1..k {
                let v = attn[row * n + col];
                if v > best_v {
                    best_v = v;
                    best = row;
                }
            }
            let (obj, lvl) = mapping.split(best, num_levels);
            (obj as i32, lvl as i32)
        })
        .collect()
}

fn comb2(n: u64) -> f64 {
    (n as f64) * ((n as f64) - 1.0) / 2.0
}

/// Adjusted Rand index from the pair-counting contingency formula.
/// Permutation-invariant in both arguments.
pub fn adjusted_rand_index(pred: &[i32], truth: &[i32]) -> Result<f64, MetricError> {
    if pred.len() != truth.len() {
        return Err(MetricError::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.len() < 2 {
        return Err(MetricError::TooFewSamples {
            need: 2,
            got: pred.len(),
        });
    }
    let n = pred.len() as u64;
    let mut table: HashMap<(i32, i32), u64> = HashMap::new();
    let mut rows: HashMap<i32, u64> = HashMap::new();
    let mut cols: HashMap<i32, u64> = HashMap::new();
    for (&p, &t) in pred.iter().zip(truth) {
        *table.entry((p, t)).or_insert(0) += 1;
        *rows.entry(p).or_insert(0) += 1;
        *cols.entry(t).or_insert(0) += 1;
    }
    let sum_cells: f64 = table.values().map(|&c| comb2(c)).sum();
    let sum_rows: f64 = rows.values().map(|&c| comb2(c)).sum();
    let sum_cols: f64 = cols.values().map(|&c| comb2(c)).sum();
    let total = comb2(n);
    let expected = sum_rows * sum_cols / total;
    let max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index - expected).abs() < 1e-12 {
        // both clusterings are degenerate (all-singletons or all-one-cluster)
        return Ok(0.0);
    }
    Ok((sum_cells - expected) / (max_index - expected))
}

/// Plain accuracy with no label permutation: level identity is bound to the
/// slot layout by construction, so relabeling predictions changes the score.
pub fn level_accuracy(pred: &[i32], truth: &[i32]) -> f64 {
    assert_eq!(pred.len(), truth.len());
    if pred.is_empty() {
        return 0.0;
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / pred.len() as f64
}

/// Diagnostic companion to ARI: accuracy after optimally matching predicted
/// object indices to ground-truth objects via Hungarian assignment on the
/// negated confusion counts.
pub fn matched_object_accuracy(pred: &[i32], truth: &[i32]) -> Result<f64, MetricError> {
    if pred.len() != truth.len() {
        return Err(MetricError::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(MetricError::TooFewSamples { need: 1, got: 0 });
    }
    let mut pred_ids: Vec<i32> = pred.to_vec();
    pred_ids.sort_unstable();
    pred_ids.dedup();
    let mut true_ids: Vec<i32> = truth.to_vec();
    true_ids.sort_unstable();
    true_ids.dedup();
    let n = pred_ids.len().max(true_ids.len());
    let mut counts = vec![vec![0.0f64; n]; n];
    for (&p, &t) in pred.iter().zip(truth) {
        let pi = pred_ids.iter().position(|&x| x == p).unwrap();
        let ti = true_ids.iter().position(|&x| x == t).unwrap();
        counts[pi][ti] += 1.0;
    }
    let cost: Vec<Vec<f64>> = counts.iter().map(|row| row.iter().map(|c| -c).collect()).collect();
    let (_, total) = hungarian(&cost)?;
    Ok(-total / pred.len() as f64)
}

/// Minimum-cost perfect assignment on a square cost matrix (Kuhn-Munkres
/// with potentials, O(n^3)). Returns the column assigned to each row and
/// the total cost.
pub fn hungarian(cost: &[Vec<f64>]) -> Result<(Vec<usize>, f64), MetricError> {
    let n = cost.len();
    if n == 0 || cost.iter().any(|row| row.len() != n) {
        return Err(MetricError::BadCostMatrix);
    }
    if cost.iter().flatten().any(|v| !v.is_finite()) {
        return Err(MetricError::BadCostMatrix);
    }
    // potentials with a virtual 0th row/col; 1-indexed internals
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1]; // p[j]: row matched to column j
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    let total: f64 = assignment.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    Ok((assignment, total))
}

// ── Welch statistics ─────────────────────────────────────────────────

/// Two-sample comparison: Welch's t with Welch-Satterthwaite degrees of
/// freedom, a two-sided p-value, Cohen's d in two pooling conventions, and
/// a 95% confidence interval for the first group's mean.
#[derive(Debug, Clone)]
pub struct WelchStats {
    pub t: f64,
    pub dof: f64,
    pub p_two_sided: f64,
    /// `(mean_a - mean_b) / pooled SD` (classic pooled convention).
    pub cohens_d: f64,
    /// Same numerator standardized by group a's SD alone.
    pub cohens_d_group_a: f64,
    pub ci95_mean_a: (f64, f64),
    /// Set when both groups have zero variance but different means; t and d
    /// are unbounded there and the p-value is reported as 0.
    pub degenerate: bool,
}

/// Format a p-value, flooring tiny ones at the reporting threshold.
pub fn format_p(p: f64) -> String {
    if p < 1e-12 {
        "<1e-12".to_string()
    } else {
        format!("{p:.4e}")
    }
}

fn sample_stats(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

pub fn welch_stats(a: &[f64], b: &[f64]) -> Result<WelchStats, MetricError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(MetricError::TooFewSamples {
            need: 2,
            got: a.len().min(b.len()),
        });
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, va) = sample_stats(a);
    let (mb, vb) = sample_stats(b);
    let pooled_var = ((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0);
    let diff = ma - mb;

    if va == 0.0 && vb == 0.0 {
        if diff == 0.0 {
            let ci = (ma, ma);
            return Ok(WelchStats {
                t: 0.0,
                dof: na + nb - 2.0,
                p_two_sided: 1.0,
                cohens_d: 0.0,
                cohens_d_group_a: 0.0,
                ci95_mean_a: ci,
                degenerate: false,
            });
        }
        return Ok(WelchStats {
            t: diff.signum() * f64::INFINITY,
            dof: na + nb - 2.0,
            p_two_sided: 0.0,
            cohens_d: diff.signum() * f64::INFINITY,
            cohens_d_group_a: diff.signum() * f64::INFINITY,
            ci95_mean_a: (ma, ma),
            degenerate: true,
        });
    }

    let se2 = va / na + vb / nb;
    let t = diff / se2.sqrt();
    let dof = se2 * se2
        / (va * va / (na * na * (na - 1.0)) + vb * vb / (nb * nb * (nb - 1.0)));
    let p = two_sided_p(t, dof);
    let cohens_d = if pooled_var > 0.0 {
        diff / pooled_var.sqrt()
    } else {
        diff.signum() * f64::INFINITY
    };
    let cohens_d_group_a = if va > 0.0 {
        diff / va.sqrt()
    } else {
        diff.signum() * f64::INFINITY
    };
    let tcrit = student_t_quantile(0.975, na - 1.0);
    let half = tcrit * (va / na).sqrt();
    Ok(WelchStats {
        t,
        dof,
        p_two_sided: p,
        cohens_d,
        cohens_d_group_a,
        ci95_mean_a: (ma - half, ma + half),
        degenerate: false,
    })
}

/// Two-sided p-value for a t statistic via the regularized incomplete beta:
/// `p = I_{dof/(dof+t^2)}(dof/2, 1/2)`.
pub fn two_sided_p(t: f64, dof: f64) -> f64 {
    if !t.is_finite() {
        return 0.0;
    }
    let x = dof / (dof + t * t);
    incomplete_beta(0.5 * dof, 0.5, x)
}

/// Regularized incomplete beta function I_x(a, b) via the Lentz continued
/// fraction.
pub fn incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b)
        + a * x.ln()
        + b * (1.0 - x).ln();
    let front = ln_front.exp();
    // `front` is symmetric under (a, b, x) -> (b, a, 1-x)
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-14;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m_f = m as f64;
        let m2 = 2.0 * m_f;
        let aa = m_f * (b - m_f) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m_f) * (qab + m_f) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Lanczos approximation of ln Γ(x).
fn ln_gamma(x: f64) -> f64 {
    const G: [f64; 6] = [
        76.18009172947146,
        -86.50532032941677,
        24.01409824083091,
        -1.231739572450155,
        0.1208650973866179e-2,
        -0.5395239384953e-5,
    ];
    let mut y = x;
    let tmp = x + 5.5;
    let tmp = tmp - (x + 0.5) * tmp.ln();
    let mut ser = 1.000000000190015;
    for g in &G {
        y += 1.0;
        ser += g / y;
    }
    -tmp + (2.5066282746310005 * ser / x).ln()
}

/// Quantile of Student's t via bisection on the CDF.
pub fn student_t_quantile(prob: f64, dof: f64) -> f64 {
    assert!((0.5..1.0).contains(&prob), "quantile prob in [0.5, 1)");
    let cdf = |t: f64| 1.0 - 0.5 * two_sided_p(t, dof);
    let mut lo = 0.0f64;
    let mut hi = 1e6f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < prob {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

// ── per-run results ──────────────────────────────────────────────────

/// Geometry variant a run was trained under (re-exported by `model`).
pub use crate::model::GeometryMode;

/// Metrics of one training run, the row format the statistics layer and the
/// CSV writers consume.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub seed: u64,
    pub dataset: DatasetTag,
    pub mode: GeometryMode,
    pub object_ari: f64,
    pub level_acc: f64,
    /// Reconstruction component of the final loss (diversity excluded).
    pub final_recon_loss: f64,
    pub final_loss: f64,
    pub loss_curve: Vec<f64>,
    /// `(epoch, object_ari, level_acc)` at each evaluation point.
    pub epoch_metrics: Vec<(usize, f64, f64)>,
    pub param_count: usize,
    pub clip_events_first10: usize,
}

impl RunResult {
    pub fn csv_header() -> &'static str {
        "dataset,mode,seed,object_ari,level_acc,final_loss"
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{:.6},{:.6},{:.6}",
            self.dataset, self.mode, self.seed, self.object_ari, self.level_acc, self.final_loss
        )
    }
}
