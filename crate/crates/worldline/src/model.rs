//! Worldline slot attention in four geometries.
//!
//! Three learnable object centers are replicated across three hierarchy
//! levels into nine slots. In the worldline modes the three slots of an
//! object share one spatial vector and differ only in a fixed temporal
//! coordinate; every attention iteration aggregates features across all
//! levels of a worldline before the GRU moves its center. The geometry mode
//! decides how feature-slot affinity is scored:
//!
//! * `Lorentzian` — signed proper-time distance plus a light-cone membership
//!   score with density-adaptive horizons,
//! * `Hyperbolic` — Poincaré-ball distance between radius-encoded features
//!   and radial slot worldlines, plus a radius-alignment bonus,
//! * `EuclideanWl` — plain Euclidean distance over the full `(t, z)` event,
//!   worldline binding kept, cone term dropped,
//! * `EuclideanStd` — nine fully independent slots with learnable times.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::autodiff::{gru_cell, layer_norm, GradStore, GruWeights, Tensor, TensorError};
use crate::geometry::{self, ConeParams};
use crate::scenes::Scene;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Geometry(#[from] geometry::GeometryError),
    #[error("scene has no points")]
    EmptyScene,
    #[error("operation requires worldline mode, got {0}")]
    ModeMismatch(GeometryMode),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GeometryMode {
    Lorentzian,
    Hyperbolic,
    EuclideanWl,
    EuclideanStd,
}

impl GeometryMode {
    pub const ALL: [GeometryMode; 4] = [
        GeometryMode::Lorentzian,
        GeometryMode::Hyperbolic,
        GeometryMode::EuclideanWl,
        GeometryMode::EuclideanStd,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            GeometryMode::Lorentzian => "lorentzian",
            GeometryMode::Hyperbolic => "hyperbolic",
            GeometryMode::EuclideanWl => "euclidean_wl",
            GeometryMode::EuclideanStd => "euclidean_std",
        }
    }

    pub fn parse(s: &str) -> Option<GeometryMode> {
        GeometryMode::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

impl fmt::Display for GeometryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub mode: GeometryMode,
    pub num_objects: usize,
    pub num_levels: usize,
    pub hidden_dim: usize,
    pub encoder_hidden: usize,
    pub time_hidden: usize,
    pub level_times: Vec<f64>,
    pub cone: ConeParams,
    pub lambda_cone: f64,
    pub tau_temp: f64,
    pub iterations: usize,
    pub k_neighbors: usize,
    pub hyper_radii: Vec<f64>,
    pub diversity_weight: f64,
    pub diversity_margin: f64,
    pub residual_scale: f64,
    /// When set, the reconstruction target drops the temporal coordinate.
    pub reconstruct_spatial_only: bool,
}

impl ModelConfig {
    pub fn new(mode: GeometryMode) -> Self {
        ModelConfig {
            mode,
            num_objects: 3,
            num_levels: 3,
            hidden_dim: 32,
            encoder_hidden: 64,
            time_hidden: 16,
            level_times: vec![1.0, 2.5, 4.0],
            cone: ConeParams::default(),
            lambda_cone: 0.5,
            tau_temp: 0.1,
            iterations: 3,
            k_neighbors: 5,
            hyper_radii: vec![0.2, 0.5, 0.8],
            diversity_weight: 0.3,
            diversity_margin: 2.0,
            residual_scale: 0.2,
            reconstruct_spatial_only: false,
        }
    }

    pub fn num_slots(&self) -> usize {
        self.num_objects * self.num_levels
    }

    fn validate(&self) {
        assert!(self
            .level_times
            .windows(2)
            .all(|w| w[0] < w[1]), "level times must be strictly increasing");
        assert_eq!(self.level_times.len(), self.num_levels);
        self.cone.validate();
    }
}

// ── parameter storage ────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

/// Flat list of named parameter blocks. The optimizer mutates the values;
/// every forward pass binds them into fresh graph leaves.
#[derive(Debug, Clone)]
pub struct ParamSet {
    pub entries: Vec<ParamEntry>,
}

impl ParamSet {
    pub fn total_len(&self) -> usize {
        self.entries.iter().map(|e| e.values.len()).sum()
    }

    pub fn bind(&self) -> Vec<Tensor> {
        self.entries
            .iter()
            .map(|e| Tensor::param(e.rows, e.cols, e.values.clone()))
            .collect()
    }

    pub fn global_norm(&self) -> f64 {
        self.entries
            .iter()
            .flat_map(|e| e.values.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

/// Indices of the parameter blocks inside the [`ParamSet`].
#[derive(Debug, Clone)]
struct ParamIds {
    enc_w1: usize,
    enc_b1: usize,
    enc_w2: usize,
    enc_b2: usize,
    time_w1: usize,
    time_b1: usize,
    time_w2: usize,
    time_b2: usize,
    gru_wz: usize,
    gru_wr: usize,
    gru_wh: usize,
    gru_bz: usize,
    gru_br: usize,
    gru_bh: usize,
    res_w: usize,
    res_b: usize,
    ln_gain: usize,
    ln_bias: usize,
    /// Worldline modes: object centers `[num_objects, hidden]`.
    centers: Option<usize>,
    /// EuclideanStd: independent slot positions and times.
    slot_pos: Option<usize>,
    slot_time: Option<usize>,
}

// ── forward output ───────────────────────────────────────────────────

/// Everything a training step or an evaluation needs from one forward pass.
pub struct ForwardPass {
    pub loss: Tensor,
    pub recon_loss: Tensor,
    /// Final-iteration attention, `[num_slots, n_points]`, columns sum to 1.
    pub attn: Tensor,
    /// Slot spatial vectors after the final update (ball vectors in
    /// hyperbolic mode).
    pub slots_spatial: Tensor,
    pub slot_times: Vec<f64>,
    /// Feature representation entering the reconstruction: `[t, z]` events,
    /// or ball vectors in hyperbolic mode.
    pub features: Tensor,
    pub rho: Vec<f64>,
    /// Parameter leaves bound for this pass, aligned with the `ParamSet`.
    pub bound: Vec<Tensor>,
    /// Raw attention matrices of every iteration (diagnostics/tests).
    pub attn_per_iter: Vec<Vec<f64>>,
}

/// Slot construction snapshot (before any attention iteration).
pub struct SlotFrame {
    pub spatial: Tensor,
    pub times: Vec<f64>,
}

pub struct WorldlineModel {
    pub cfg: ModelConfig,
    pub params: ParamSet,
    ids: ParamIds,
}

fn linear_init(rng: &mut ChaCha8Rng, fan_in: usize, rows: usize, cols: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect()
}

impl WorldlineModel {
    pub fn new(cfg: ModelConfig, seed: u64) -> Self {
        cfg.validate();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_CAFE);
        let d = cfg.hidden_dim;
        let eh = cfg.encoder_hidden;
        let th = cfg.time_hidden;
        let mut entries = Vec::new();
        let mut push = |name: &str, rows: usize, cols: usize, values: Vec<f64>| -> usize {
            entries.push(ParamEntry {
                name: name.to_string(),
                rows,
                cols,
                values,
            });
            entries.len() - 1
        };
        let enc_w1 = push("enc_w1", 2, eh, linear_init(&mut rng, 2, 2, eh));
        let enc_b1 = push("enc_b1", 1, eh, linear_init(&mut rng, 2, 1, eh));
        let enc_w2 = push("enc_w2", eh, d, linear_init(&mut rng, eh, eh, d));
        let enc_b2 = push("enc_b2", 1, d, linear_init(&mut rng, eh, 1, d));
        let time_in = d + 1;
        let time_w1 = push("time_w1", time_in, th, linear_init(&mut rng, time_in, time_in, th));
        let time_b1 = push("time_b1", 1, th, linear_init(&mut rng, time_in, 1, th));
        let time_w2 = push("time_w2", th, 1, linear_init(&mut rng, th, th, 1));
        let time_b2 = push("time_b2", 1, 1, linear_init(&mut rng, th, 1, 1));
        let gru_wz = push("gru_wz", 2 * d, d, linear_init(&mut rng, 2 * d, 2 * d, d));
        let gru_wr = push("gru_wr", 2 * d, d, linear_init(&mut rng, 2 * d, 2 * d, d));
        let gru_wh = push("gru_wh", 2 * d, d, linear_init(&mut rng, 2 * d, 2 * d, d));
        let gru_bz = push("gru_bz", 1, d, linear_init(&mut rng, 2 * d, 1, d));
        let gru_br = push("gru_br", 1, d, linear_init(&mut rng, 2 * d, 1, d));
        let gru_bh = push("gru_bh", 1, d, linear_init(&mut rng, 2 * d, 1, d));
        let res_w = push("res_w", d, d, linear_init(&mut rng, d, d, d));
        let res_b = push("res_b", 1, d, linear_init(&mut rng, d, 1, d));
        let ln_gain = push("ln_gain", 1, d, vec![1.0; d]);
        let ln_bias = push("ln_bias", 1, d, vec![0.0; d]);

        let normal = |rng: &mut ChaCha8Rng, n: usize, scale: f64| -> Vec<f64> {
            (0..n)
                .map(|_| {
                    let v: f64 = StandardNormal.sample(rng);
                    v * scale
                })
                .collect()
        };
        let (centers, slot_pos, slot_time) = match cfg.mode {
            GeometryMode::EuclideanStd => {
                let k = cfg.num_slots();
                let pos = push("slot_pos", k, d, normal(&mut rng, k * d, 0.5));
                let times: Vec<f64> = (0..k)
                    .map(|s| cfg.level_times[s % cfg.num_levels])
                    .collect();
                let time = push("slot_time", k, 1, times);
                (None, Some(pos), Some(time))
            }
            _ => {
                let c = push(
                    "mu",
                    cfg.num_objects,
                    d,
                    normal(&mut rng, cfg.num_objects * d, 0.5),
                );
                (Some(c), None, None)
            }
        };

        let ids = ParamIds {
            enc_w1,
            enc_b1,
            enc_w2,
            enc_b2,
            time_w1,
            time_b1,
            time_w2,
            time_b2,
            gru_wz,
            gru_wr,
            gru_wh,
            gru_bz,
            gru_br,
            gru_bh,
            res_w,
            res_b,
            ln_gain,
            ln_bias,
            centers,
            slot_pos,
            slot_time,
        };
        WorldlineModel {
            cfg,
            params: ParamSet { entries },
            ids,
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.total_len()
    }

    /// Constant replication matrix `R[k, obj(k)] = 1`, `[num_slots, num_objects]`.
    fn replication(&self) -> Tensor {
        let k = self.cfg.num_slots();
        let mut data = vec![0.0; k * self.cfg.num_objects];
        for s in 0..k {
            data[s * self.cfg.num_objects + s / self.cfg.num_levels] = 1.0;
        }
        Tensor::constant(k, self.cfg.num_objects, data)
    }

    /// Transposed replication matrix, used to sum worldline updates across
    /// levels.
    fn replication_t(&self) -> Tensor {
        let k = self.cfg.num_slots();
        let mut data = vec![0.0; self.cfg.num_objects * k];
        for s in 0..k {
            data[(s / self.cfg.num_levels) * k + s] = 1.0;
        }
        Tensor::constant(self.cfg.num_objects, k, data)
    }

    fn slot_times_vec(&self) -> Vec<f64> {
        (0..self.cfg.num_slots())
            .map(|s| self.cfg.level_times[s % self.cfg.num_levels])
            .collect()
    }

    /// Density -> time encoding plus the spatial encoder:
    /// `z = MLP(x)`, `t = 5.0 - 1.5 rho + 0.5 * MLP_t([z, rho])`.
    fn encode_from(
        &self,
        bound: &[Tensor],
        points: &Tensor,
        rho: &Tensor,
    ) -> Result<(Tensor, Tensor), ModelError> {
        let p = |i: usize| bound[i].clone();
        let n = points.rows();
        let h1 = points
            .matmul(&p(self.ids.enc_w1))?
            .add(&p(self.ids.enc_b1).bcast_rows(n)?)?
            .relu();
        let z = h1
            .matmul(&p(self.ids.enc_w2))?
            .add(&p(self.ids.enc_b2).bcast_rows(n)?)?;
        let head_in = z.concat_cols(rho)?;
        let th = head_in
            .matmul(&p(self.ids.time_w1))?
            .add(&p(self.ids.time_b1).bcast_rows(n)?)?
            .tanh();
        let head = th
            .matmul(&p(self.ids.time_w2))?
            .add(&p(self.ids.time_b2).bcast_rows(n)?)?
            .tanh();
        let t = rho.mul_s(-1.5).add_s(5.0).add(&head.mul_s(0.5))?;
        Ok((t, z))
    }

    /// Public encoding entry point: per-point feature events plus the
    /// normalized density that produced their temporal coordinates.
    pub fn encode(&self, scene: &Scene) -> Result<(Vec<geometry::LorentzianEvent>, Vec<f64>), ModelError> {
        if scene.is_empty() {
            return Err(ModelError::EmptyScene);
        }
        let k_eff = self.cfg.k_neighbors.min(scene.len() - 1).max(1);
        let knn = geometry::knn_density(&scene.points, k_eff)?;
        let bound = self.params.bind();
        let pts = Tensor::constant(
            scene.len(),
            2,
            scene.points.iter().flat_map(|p| [p[0], p[1]]).collect(),
        );
        let rho = Tensor::constant(scene.len(), 1, knn.rho.clone());
        let (t, z) = self.encode_from(&bound, &pts, &rho)?;
        let d = self.cfg.hidden_dim;
        let events = (0..scene.len())
            .map(|i| {
                geometry::LorentzianEvent::new(t.data()[i], z.data()[i * d..(i + 1) * d].to_vec())
            })
            .collect();
        Ok((events, knn.rho))
    }

    /// Initial slot construction, before any attention iteration.
    pub fn build_slots(&self) -> Result<SlotFrame, ModelError> {
        let bound = self.params.bind();
        match self.cfg.mode {
            GeometryMode::EuclideanStd => {
                let pos = bound[self.ids.slot_pos.expect("std mode has slot_pos")].clone();
                let times = self.params.entries[self.ids.slot_time.unwrap()].values.clone();
                Ok(SlotFrame {
                    spatial: pos,
                    times,
                })
            }
            GeometryMode::Hyperbolic => {
                let mu = bound[self.ids.centers.expect("worldline mode has centers")].clone();
                let spatial = self.hyperbolic_slots(&mu)?;
                Ok(SlotFrame {
                    spatial,
                    times: self.slot_times_vec(),
                })
            }
            _ => {
                let mu = bound[self.ids.centers.expect("worldline mode has centers")].clone();
                let spatial = self.replication().matmul(&mu)?;
                Ok(SlotFrame {
                    spatial,
                    times: self.slot_times_vec(),
                })
            }
        }
    }

    /// Radial worldlines: slot `(i, j)` sits at `r_j * mu_i / ||mu_i||`.
    fn hyperbolic_slots(&self, mu: &Tensor) -> Result<Tensor, ModelError> {
        let d = self.cfg.hidden_dim;
        let n_slots = self.cfg.num_slots();
        let norms = mu.mul(mu)?.sum_axis1().sqrt_eps(1e-12);
        let theta = mu.div(&norms.bcast_cols(d)?)?;
        let rep = self.replication().matmul(&theta)?;
        let radii: Vec<f64> = (0..n_slots)
            .map(|s| self.cfg.hyper_radii[s % self.cfg.num_levels])
            .collect();
        let radii_col = Tensor::constant(n_slots, 1, radii);
        Ok(rep.mul(&radii_col.bcast_cols(d)?)?)
    }

    /// Map encoder outputs into the Poincaré ball: direction preserved,
    /// radius driven by density (`0.2 + 0.6 (1 - rho)`) and squashed through
    /// `tanh(||z||)` so everything stays inside the ball.
    fn ball_features(&self, z: &Tensor, rho: &Tensor) -> Result<(Tensor, Tensor), ModelError> {
        let d = self.cfg.hidden_dim;
        let z_norm = z.mul(z)?.sum_axis1().sqrt_eps(1e-12);
        let dir = z.div(&z_norm.bcast_cols(d)?)?;
        let radius_target = rho.mul_s(-0.6).add_s(0.8);
        let f_radius = z_norm.tanh().mul(&radius_target)?;
        let f_ball = dir.mul(&f_radius.bcast_cols(d)?)?;
        Ok((f_ball, f_radius))
    }

    /// Pairwise squared Euclidean distances between row sets,
    /// `[K, D] x [N, D] -> [K, N]`.
    fn pairwise_sq(&self, a: &Tensor, b: &Tensor) -> Result<Tensor, ModelError> {
        let (k, n) = (a.rows(), b.rows());
        let a_sq = a.mul(a)?.sum_axis1();
        let b_sq = b.mul(b)?.sum_axis1();
        let cross = a.matmul(&b.transpose())?;
        Ok(a_sq
            .bcast_cols(n)?
            .add(&b_sq.transpose().bcast_rows(k)?)?
            .sub(&cross.mul_s(2.0))?)
    }

    /// Attention logits `[num_slots, n_points]` for the current slot state.
    fn logits(
        &self,
        slots_spatial: &Tensor,
        slot_times: &Tensor,
        z_or_ball: &Tensor,
        feat_times: Option<&Tensor>,
        f_radius: Option<&Tensor>,
        horizons: &Tensor,
    ) -> Result<Tensor, ModelError> {
        let k = slots_spatial.rows();
        let n = z_or_ball.rows();
        let eps = self.cfg.cone.eps;
        match self.cfg.mode {
            GeometryMode::Lorentzian => {
                let t_feat = feat_times.expect("lorentzian mode needs feature times");
                let tau = t_feat
                    .transpose()
                    .bcast_rows(k)?
                    .sub(&slot_times.bcast_cols(n)?)?;
                let r2 = self.pairwise_sq(slots_spatial, z_or_ball)?;
                let r = r2.sqrt_bounded_grad(eps);
                let q = tau.mul(&tau)?.sub(&r2)?;
                let abs_dl = q.abs().sqrt_eps(eps);
                let abs_tau = tau.abs();
                let cone = horizons
                    .sub(&r.div(&abs_tau.add_s(eps))?)?
                    .sub(&tau.neg().relu().mul_s(self.cfg.cone.past_penalty))?
                    .sub(&r.sub(&abs_tau)?.relu().mul_s(self.cfg.cone.spacelike_penalty))?;
                let logit = abs_dl
                    .neg()
                    .add(&cone.tanh().mul_s(self.cfg.lambda_cone))?;
                Ok(logit.mul_s(1.0 / self.cfg.tau_temp))
            }
            GeometryMode::EuclideanWl | GeometryMode::EuclideanStd => {
                let t_feat = feat_times.expect("euclidean modes need feature times");
                let tau = t_feat
                    .transpose()
                    .bcast_rows(k)?
                    .sub(&slot_times.bcast_cols(n)?)?;
                let r2 = self.pairwise_sq(slots_spatial, z_or_ball)?;
                let d = tau.mul(&tau)?.add(&r2)?.sqrt_eps(eps);
                Ok(d.neg().mul_s(1.0 / self.cfg.tau_temp))
            }
            GeometryMode::Hyperbolic => {
                let f_radius = f_radius.expect("hyperbolic mode needs feature radii");
                let d2 = self.pairwise_sq(slots_spatial, z_or_ball)?;
                let s_norm2 = slots_spatial.mul(slots_spatial)?.sum_axis1();
                let f_norm2 = z_or_ball.mul(z_or_ball)?.sum_axis1();
                let denom = s_norm2
                    .sub_from_s(1.0)
                    .bcast_cols(n)?
                    .mul(&f_norm2.sub_from_s(1.0).transpose().bcast_rows(k)?)?;
                let y = d2.mul_s(2.0).div(&denom)?;
                let d_h = y.acosh1p(1e-12);
                // hierarchy alignment bonus: features near a level's radius
                // prefer that level's slot ring
                let radii: Vec<f64> = (0..k)
                    .map(|s| self.cfg.hyper_radii[s % self.cfg.num_levels])
                    .collect();
                let radii_col = Tensor::constant(k, 1, radii);
                let gap = f_radius
                    .transpose()
                    .bcast_rows(k)?
                    .sub(&radii_col.bcast_cols(n)?)?
                    .abs();
                let bonus = gap.mul_s(-1.0 / 0.6).add_s(1.0).mul_s(self.cfg.lambda_cone);
                Ok(d_h.neg().add(&bonus)?.mul_s(1.0 / self.cfg.tau_temp))
            }
        }
    }

    /// Full forward pass: encode, iterate attention, reconstruct, score.
    pub fn forward(&self, scene: &Scene) -> Result<ForwardPass, ModelError> {
        if scene.is_empty() {
            return Err(ModelError::EmptyScene);
        }
        let n = scene.len();
        let k_slots = self.cfg.num_slots();
        let k_eff = self.cfg.k_neighbors.min(n - 1).max(1);
        let knn = geometry::knn_density(&scene.points, k_eff)?;
        let bound = self.params.bind();
        let p = |i: usize| bound[i].clone();

        let pts = Tensor::constant(n, 2, scene.points.iter().flat_map(|q| [q[0], q[1]]).collect());
        let rho = Tensor::constant(n, 1, knn.rho.clone());
        let (t_feat, z) = self.encode_from(&bound, &pts, &rho)?;

        // density-adaptive horizons as a constant [K, N] matrix
        let mut h_data = vec![0.0; k_slots * n];
        for s in 0..k_slots {
            let w = self.cfg.cone.base_horizons[s % self.cfg.num_levels];
            for (j, &r) in knn.rho.iter().enumerate() {
                h_data[s * n + j] = w + self.cfg.cone.horizon_scale * (r - 0.5);
            }
        }
        let horizons = Tensor::constant(k_slots, n, h_data);

        let rep = self.replication();
        let rep_t = self.replication_t();
        let gru = GruWeights {
            w_z: p(self.ids.gru_wz),
            w_r: p(self.ids.gru_wr),
            w_h: p(self.ids.gru_wh),
            b_z: p(self.ids.gru_bz),
            b_r: p(self.ids.gru_br),
            b_h: p(self.ids.gru_bh),
        };
        let residual = |state: &Tensor| -> Result<Tensor, ModelError> {
            let normed = layer_norm(state, &p(self.ids.ln_gain), &p(self.ids.ln_bias), 1e-6);
            Ok(normed
                .matmul(&p(self.ids.res_w))?
                .add(&p(self.ids.res_b).bcast_rows(state.rows())?)?
                .mul_s(self.cfg.residual_scale))
        };

        let (ball, f_radius) = if self.cfg.mode == GeometryMode::Hyperbolic {
            let (b, r) = self.ball_features(&z, &rho)?;
            (Some(b), Some(r))
        } else {
            (None, None)
        };
        let agg_source = ball.as_ref().unwrap_or(&z);

        let slot_times_const = Tensor::constant(k_slots, 1, self.slot_times_vec());
        let mut attn_per_iter = Vec::with_capacity(self.cfg.iterations);
        let mut attn = None;

        let (slots_spatial, slot_times) = match self.cfg.mode {
            GeometryMode::EuclideanStd => {
                let times = p(self.ids.slot_time.unwrap());
                let mut pos = p(self.ids.slot_pos.unwrap());
                for _ in 0..self.cfg.iterations {
                    let logits =
                        self.logits(&pos, &times, &z, Some(&t_feat), None, &horizons)?;
                    let a = logits.softmax(0);
                    attn_per_iter.push(a.data().to_vec());
                    let upd = a.matmul(&z)?;
                    pos = gru_cell(&upd, &pos, &gru)?.add(&residual(&pos)?)?;
                    attn = Some(a);
                }
                (pos, times)
            }
            _ => {
                let mut mu = p(self.ids.centers.unwrap());
                for _ in 0..self.cfg.iterations {
                    let spatial = match self.cfg.mode {
                        GeometryMode::Hyperbolic => self.hyperbolic_slots(&mu)?,
                        _ => rep.matmul(&mu)?,
                    };
                    let logits = self.logits(
                        &spatial,
                        &slot_times_const,
                        agg_source,
                        Some(&t_feat),
                        f_radius.as_ref(),
                        &horizons,
                    )?;
                    let a = logits.softmax(0);
                    attn_per_iter.push(a.data().to_vec());
                    // multi-scale aggregation: per-slot feature sums, then
                    // summed across the worldline's levels
                    let u9 = a.matmul(&z)?;
                    let dmu = rep_t.matmul(&u9)?;
                    mu = gru_cell(&dmu, &mu, &gru)?.add(&residual(&mu)?)?;
                    attn = Some(a);
                }
                let spatial = match self.cfg.mode {
                    GeometryMode::Hyperbolic => self.hyperbolic_slots(&mu)?,
                    _ => rep.matmul(&mu)?,
                };
                // diversity pressure acts on the final centers
                let final_mu = mu;
                let div = self.diversity(&final_mu)?;
                let attn = attn.expect("at least one iteration");
                let (features, recon) = self.reconstruction(
                    &attn,
                    &spatial,
                    &slot_times_const,
                    agg_source,
                    &t_feat,
                )?;
                let loss = recon.add(&div.mul_s(self.cfg.diversity_weight))?;
                return Ok(ForwardPass {
                    loss,
                    recon_loss: recon,
                    attn,
                    slots_spatial: spatial,
                    slot_times: self.slot_times_vec(),
                    features,
                    rho: knn.rho,
                    bound,
                    attn_per_iter,
                });
            }
        };

        // EuclideanStd epilogue: independent slots, diversity over all slot
        // positions
        let attn = attn.expect("at least one iteration");
        let div = self.diversity(&slots_spatial)?;
        let (features, recon) =
            self.reconstruction(&attn, &slots_spatial, &slot_times, &z, &t_feat)?;
        let loss = recon.add(&div.mul_s(self.cfg.diversity_weight))?;
        let times_out = self.params.entries[self.ids.slot_time.unwrap()].values.clone();
        Ok(ForwardPass {
            loss,
            recon_loss: recon,
            attn,
            slots_spatial,
            slot_times: times_out,
            features,
            rho: knn.rho,
            bound,
            attn_per_iter,
        })
    }

    /// Hinge diversity: unordered pairs of rows pushed at least `margin`
    /// apart.
    fn diversity(&self, rows: &Tensor) -> Result<Tensor, ModelError> {
        let n = rows.rows();
        let mut total = Tensor::scalar(0.0);
        for i in 0..n {
            let ri = rows.slice_rows(i, i + 1)?;
            for j in (i + 1)..n {
                let rj = rows.slice_rows(j, j + 1)?;
                let diff = ri.sub(&rj)?;
                let dist = diff.mul(&diff)?.sum_all().sqrt_eps(self.cfg.cone.eps);
                let hinge = dist.sub_from_s(self.cfg.diversity_margin).relu();
                total = total.add(&hinge)?;
            }
        }
        Ok(total)
    }

    /// Per-element mean squared error between the feature events and their
    /// attention-weighted slot combination. Returns the feature tensor the
    /// comparison used (events or ball vectors).
    fn reconstruction(
        &self,
        attn: &Tensor,
        slots_spatial: &Tensor,
        slot_times: &Tensor,
        z_or_ball: &Tensor,
        t_feat: &Tensor,
    ) -> Result<(Tensor, Tensor), ModelError> {
        let (features, slots_full) = match self.cfg.mode {
            GeometryMode::Hyperbolic => (z_or_ball.clone(), slots_spatial.clone()),
            _ => {
                if self.cfg.reconstruct_spatial_only {
                    (z_or_ball.clone(), slots_spatial.clone())
                } else {
                    (
                        t_feat.concat_cols(z_or_ball)?,
                        slot_times.concat_cols(slots_spatial)?,
                    )
                }
            }
        };
        let recon = attn.transpose().matmul(&slots_full)?;
        let diff = features.sub(&recon)?;
        let mse = diff.mul(&diff)?.mean_all();
        Ok((features, mse))
    }

    // ── checkpoints ──────────────────────────────────────────────────

    /// Write parameters in the `WLSA-v1` text container: a header line, the
    /// geometry mode, then one `name rows cols` line plus one value line per
    /// block, hex-exact via `{:.17e}`.
    pub fn save_checkpoint(&self, path: &Path) -> Result<(), ModelError> {
        let mut out = String::new();
        out.push_str("WLSA-v1\n");
        out.push_str(&format!("mode {}\n", self.cfg.mode));
        out.push_str(&format!("params {}\n", self.params.entries.len()));
        for e in &self.params.entries {
            out.push_str(&format!("param {} {} {}\n", e.name, e.rows, e.cols));
            let vals: Vec<String> = e.values.iter().map(|v| format!("{v:.17e}")).collect();
            out.push_str(&vals.join(" "));
            out.push('\n');
        }
        fs::File::create(path)
            .and_then(|mut f| f.write_all(out.as_bytes()))
            .map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))
    }

    /// Load a `WLSA-v1` checkpoint into a model built from `cfg`. The mode
    /// and every block shape must match.
    pub fn load_checkpoint(cfg: ModelConfig, path: &Path) -> Result<WorldlineModel, ModelError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))?;
        let mut lines = text.lines();
        let bad = |m: &str| ModelError::Checkpoint(format!("{}: {m}", path.display()));
        if lines.next() != Some("WLSA-v1") {
            return Err(bad("missing WLSA-v1 header"));
        }
        let mode_line = lines.next().ok_or_else(|| bad("missing mode line"))?;
        let mode = mode_line
            .strip_prefix("mode ")
            .and_then(GeometryMode::parse)
            .ok_or_else(|| bad("unparseable mode line"))?;
        if mode != cfg.mode {
            return Err(bad(&format!(
                "checkpoint mode {mode} does not match config mode {}",
                cfg.mode
            )));
        }
        let mut model = WorldlineModel::new(cfg, 0);
        let count_line = lines.next().ok_or_else(|| bad("missing params line"))?;
        let count: usize = count_line
            .strip_prefix("params ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("unparseable params line"))?;
        if count != model.params.entries.len() {
            return Err(bad(&format!(
                "checkpoint has {count} blocks, model expects {}",
                model.params.entries.len()
            )));
        }
        for i in 0..count {
            let head = lines.next().ok_or_else(|| bad("truncated: missing param header"))?;
            let parts: Vec<&str> = head.split_whitespace().collect();
            if parts.len() != 4 || parts[0] != "param" {
                return Err(bad(&format!("bad param header `{head}`")));
            }
            let e = &mut model.params.entries[i];
            if parts[1] != e.name {
                return Err(bad(&format!("block {i} is `{}`, expected `{}`", parts[1], e.name)));
            }
            let rows: usize = parts[2].parse().map_err(|_| bad("bad rows"))?;
            let cols: usize = parts[3].parse().map_err(|_| bad("bad cols"))?;
            if rows != e.rows || cols != e.cols {
                return Err(bad(&format!("block `{}` shape mismatch", e.name)));
            }
            let vals_line = lines.next().ok_or_else(|| bad("truncated: missing values"))?;
            let vals: Result<Vec<f64>, _> =
                vals_line.split_whitespace().map(|s| s.parse::<f64>()).collect();
            let vals = vals.map_err(|e| bad(&format!("bad value: {e}")))?;
            if vals.len() != e.values.len() {
                return Err(bad(&format!("block `{}` length mismatch", e.name)));
            }
            e.values = vals;
        }
        Ok(model)
    }

    /// Gradient of the loss of one scene with respect to every parameter,
    /// as a list aligned with the `ParamSet`.
    pub fn loss_and_grads(&self, scene: &Scene) -> Result<(ForwardPass, Vec<Vec<f64>>), ModelError> {
        let fp = self.forward(scene)?;
        let store = fp.loss.backward()?;
        let grads = collect_grads(&store, &fp.bound);
        Ok((fp, grads))
    }
}

/// Per-parameter gradients (zeros where the loss never reached a block).
pub fn collect_grads(store: &GradStore, bound: &[Tensor]) -> Vec<Vec<f64>> {
    bound.iter().map(|t| store.get_or_zeros(t)).collect()
}
