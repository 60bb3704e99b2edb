//! Finite-difference audit of the differentiation engine: every primitive
//! op on random instances, then the full model loss on a small scene, for
//! each geometry mode. Prints the worst relative error per section.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use worldline::autodiff::{finite_difference_gradient, max_rel_err, Tensor};
use worldline::model::{GeometryMode, ModelConfig, WorldlineModel};
use worldline::scenes::{DatasetTag, Scene};

fn op_audit(trials: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let mut worst: f64 = 0.0;
    for trial in 0..trials {
        let n = rng.gen_range(2..6);
        let base: Vec<f64> = (0..n)
            .map(|_| {
                let v: f64 = rng.gen_range(-2.0..2.0);
                v.signum() * (v.abs() + 0.25)
            })
            .collect();
        let which = trial % 6;
        let eval = |vals: &[f64]| -> f64 {
            let t = Tensor::constant(n, 1, vals.to_vec());
            let out = match which {
                0 => t.tanh(),
                1 => t.sigmoid(),
                2 => t.exp().mul_s(0.1),
                3 => t.sqrt_eps(1e-6),
                4 => t.softmax(0),
                _ => t.mul(&t).unwrap(),
            };
            out.data().iter().enumerate().map(|(i, v)| v * (1.0 + i as f64)).sum()
        };
        let t = Tensor::param(n, 1, base.clone());
        let out = match which {
            0 => t.tanh(),
            1 => t.sigmoid(),
            2 => t.exp().mul_s(0.1),
            3 => t.sqrt_eps(1e-6),
            4 => t.softmax(0),
            _ => t.mul(&t).unwrap(),
        };
        let weights: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let loss = out.mul(&Tensor::constant(n, 1, weights)).unwrap().sum_all();
        let grads = loss.backward().unwrap();
        let numeric = finite_difference_gradient(eval, &base, 1e-6);
        worst = worst.max(max_rel_err(&grads.get_or_zeros(&t), &numeric));
    }
    worst
}

fn model_audit(mode: GeometryMode) -> f64 {
    let scene = Scene {
        points: vec![[-1.0, 0.2], [0.4, -0.8], [1.3, 1.1], [-0.5, -1.2], [0.9, 0.3], [2.0, -0.4]],
        object_id: vec![0; 6],
        level_id: vec![2; 6],
        tag: DatasetTag::Toy,
    };
    let model = WorldlineModel::new(ModelConfig::new(mode), 99);
    let (_, grads) = model.loss_and_grads(&scene).expect("forward");
    let mut worst: f64 = 0.0;
    for (bi, entry) in model.params.entries.iter().enumerate() {
        let numeric = finite_difference_gradient(
            |vals| {
                let mut probe = WorldlineModel::new(ModelConfig::new(mode), 99);
                probe.params.entries[bi].values = vals.to_vec();
                probe.forward(&scene).unwrap().loss.item()
            },
            &entry.values,
            1e-5,
        );
        worst = worst.max(max_rel_err(&grads[bi], &numeric));
    }
    worst
}

fn main() {
    let start = std::time::Instant::now();
    let op_worst = op_audit(300);
    println!("primitive ops, 300 random instances: worst rel err {op_worst:.2e}");
    for mode in GeometryMode::ALL {
        let worst = model_audit(mode);
        println!("{mode}: full-loss gradient vs central differences, worst rel err {worst:.2e}");
    }
    println!("({:.1?})", start.elapsed());
}
