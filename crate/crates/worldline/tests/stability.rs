//! Short-horizon training stability across every dataset x mode cell:
//! losses and parameters stay finite and the run machinery holds together
//! outside the toy dataset the acceptance matrix concentrates on.

use worldline::model::GeometryMode;
use worldline::scenes::DatasetTag;
use worldline::training::{train_run, TrainConfig};

fn short_cfg(dataset: DatasetTag, mode: GeometryMode) -> TrainConfig {
    let mut cfg = TrainConfig::new(dataset, mode, 11);
    cfg.epochs = 10;
    cfg.batch = 4;
    cfg.eval_every = 5;
    cfg.eval_scenes = 4;
    cfg.clevr_pool_size = 24;
    cfg
}

#[test]
fn sprites_runs_stay_finite_in_all_modes() {
    for mode in GeometryMode::ALL {
        let r = train_run(&short_cfg(DatasetTag::Sprites, mode)).unwrap();
        assert!(r.loss_curve.iter().all(|l| l.is_finite()), "{mode}");
        assert!(r.final_recon_loss.is_finite());
        assert!((0.0..=1.0).contains(&r.level_acc));
        assert!((-0.5..=1.0).contains(&r.object_ari));
    }
}

#[test]
fn clevr_runs_stay_finite_in_all_modes() {
    for mode in GeometryMode::ALL {
        let r = train_run(&short_cfg(DatasetTag::Clevr, mode)).unwrap();
        assert!(r.loss_curve.iter().all(|l| l.is_finite()), "{mode}");
        assert!(r.final_recon_loss.is_finite());
    }
}
