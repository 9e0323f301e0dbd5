use proptest::prelude::*;

use dynplane_core::checkpoint::{load_checkpoint, save_checkpoint};
use dynplane_core::config::Config;
use dynplane_core::dataio::{generate_synthetic, load_dataset, save_dataset};
use dynplane_core::losses::{disentangle_loss, mono_loss};
use dynplane_core::renderer::{composite, CompositeInput, DepthEstimate};
use dynplane_core::trainer::{evaluate, Trainer};

fn tiny_config() -> Config {
    let mut cfg = Config::default();
    cfg.synth.width = 16;
    cfg.synth.height = 16;
    cfg.synth.frames = 4;
    cfg.synth.quadrature_steps = 256;
    cfg.planes.resolutions = vec![4, 8];
    cfg.render.steps = 24;
    cfg.render.eval_steps = 24;
    cfg.grid.dims = [8, 8, 8, 2];
    cfg.grid.warmup = 4;
    cfg.grid.update_every = 2;
    cfg.train.iterations = 30;
    cfg.train.batch_rays = 64;
    cfg.train.log_every = 10;
    cfg.train.eval_every = 10;
    cfg
}

#[test]
fn dataset_survives_disk_round_trip() {
    let cfg = tiny_config();
    let scene = generate_synthetic(&cfg.synth);
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&scene.dataset, dir.path()).unwrap();
    let back = load_dataset(dir.path()).unwrap();
    assert_eq!(back.frames.len(), scene.dataset.frames.len());
    assert_eq!(back.intrinsics, scene.dataset.intrinsics);
    for (a, b) in back.frames.iter().zip(&scene.dataset.frames) {
        assert_eq!(a.mask, b.mask);
        assert_eq!(a.time, b.time);
        // 8-bit color and millimeter depth quantization
        for (pa, pb) in a.image.iter().zip(&b.image) {
            for c in 0..3 {
                assert!((pa[c] - pb[c]).abs() <= 0.5 / 255.0 + 1e-6);
            }
        }
        let (da, db) = (a.depth.as_ref().unwrap(), b.depth.as_ref().unwrap());
        for (x, y) in da.iter().zip(db) {
            assert!((x - y).abs() <= 0.5 * scene.dataset.depth_scale as f32 + 1e-6);
        }
    }
}

#[test]
fn short_training_reduces_loss_and_checkpoints_restore_renders() {
    let cfg = tiny_config();
    let scene = generate_synthetic(&cfg.synth);
    let mut tr = Trainer::new(&scene.dataset, cfg.clone()).unwrap();
    let mut rows = Vec::new();
    tr.run(|r| rows.push(r.clone())).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows[2].rgb < rows[0].rgb, "{rows:?}");
    assert!(rows.iter().all(|r| r.total.is_finite()));

    let (before, _) = tr.render_frame(1, cfg.render.eval_steps, true).unwrap();
    let bytes = save_checkpoint(&tr.state, &cfg);
    let (state, loaded) = load_checkpoint(&bytes).unwrap();
    assert_eq!(loaded, cfg);
    assert_eq!(state, tr.state);
    let mut resumed = Trainer::new(&scene.dataset, loaded).unwrap();
    resumed.state = state;
    let (after, _) = resumed.render_frame(1, cfg.render.eval_steps, true).unwrap();
    assert_eq!(before, after);

    let frames = tr.train_frames.clone();
    let renders: Vec<_> = frames
        .iter()
        .map(|f| tr.render_frame(*f, cfg.render.eval_steps, false).unwrap().0)
        .collect();
    let report = evaluate(&renders, &scene.dataset, &frames, Some(&scene.clean)).unwrap();
    assert!(report.psnr.is_finite() && report.depth_rmse.is_some());
}

#[test]
fn stronger_disentangle_weight_keeps_dynamic_planes_closer_to_one() {
    let mut cfg = tiny_config();
    cfg.synth.amplitude = 0.0;
    let scene = generate_synthetic(&cfg.synth);
    let devs: Vec<f64> = [1e-4, 1e-3, 1e-2]
        .iter()
        .map(|&w| {
            let mut c = cfg.clone();
            c.loss.lambda_de = w;
            let mut tr = Trainer::new(&scene.dataset, c).unwrap();
            tr.run(|_| {}).unwrap();
            disentangle_loss(&tr.state.params.planes, None, 1.0)
        })
        .collect();
    assert!(devs[0] > devs[1] && devs[1] > devs[2], "{devs:?}");
}

proptest! {
    #[test]
    fn composite_weights_account_for_all_light(
        samples in prop::collection::vec((0.0f64..50.0, 0.001f64..0.1), 1..64)
    ) {
        let mut t = 1.0;
        let inputs: Vec<CompositeInput<f64>> = samples
            .iter()
            .map(|(sigma, delta)| {
                t += delta;
                CompositeInput { sigma: *sigma, rgb: [1.0; 3], delta: *delta, t_value: t }
            })
            .collect();
        let (out, cache) = composite(&inputs, DepthEstimate::Expected);
        let optical: f64 = samples.iter().map(|(s, d)| s * d).sum();
        prop_assert!((out.opacity - (1.0 - (-optical).exp())).abs() < 1e-9);
        prop_assert!(cache.weights.iter().all(|w| *w >= 0.0));
        // white emitters render the opacity
        prop_assert!((out.rgb[0] - out.opacity).abs() < 1e-12);
    }

    #[test]
    fn mono_loss_ignores_affine_changes_of_the_prediction(
        pairs in prop::collection::vec((0.5f64..3.0, 0.1f64..1.0), 3..40),
        c in 0.05f64..20.0,
        d in -5.0f64..5.0,
    ) {
        let pred: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let mono: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let moved: Vec<f64> = pred.iter().map(|p| c * p + d).collect();
        let (a, _, fa) = mono_loss(&pred, &mono);
        let (b, _, fb) = mono_loss(&moved, &mono);
        prop_assume!(!fa.degenerate && !fb.degenerate);
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1e-12));
    }
}
