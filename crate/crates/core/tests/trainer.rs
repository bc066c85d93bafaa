use hsi_zeroshot::labeler::{ConfidenceMap, LabelMap};
use hsi_zeroshot::mixture::{fit_pca, EmOptions, MixtureConfig, SplitOptions};
use hsi_zeroshot::prep::normalize_spectra;
use hsi_zeroshot::synthetic::{generate_scene, SceneConfig};
use hsi_zeroshot::trainer::{
    build_training_sets, composite_loss, cross_entropy_soft, objective_gradients, predict_map, predict_rows,
    train_spectral, LossWeights, Mlp, RandomSetSampler, Segments, SpectralClassifier, SpectralTrainer, TrainConfig,
};
use ndarray::{s, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random soft targets: each row a distribution, some rows one-hot.
fn random_targets(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Array2<f64> {
    let mut t = Array2::from_shape_fn((n, k), |_| rng.random::<f64>());
    for (i, mut row) in t.rows_mut().into_iter().enumerate() {
        if i % 3 == 0 {
            let hot = rng.random_range(0..k);
            row.iter_mut().enumerate().for_each(|(j, v)| *v = if j == hot { 1.0 } else { 0.0 });
        } else {
            let sum = row.sum();
            row.mapv_inplace(|v| v / sum);
        }
    }
    t
}

fn total_loss(model: &Mlp<f64>, x: &Array2<f64>, t: &Array2<f64>, seg: Segments, w: LossWeights) -> f64 {
    let (p, _) = model.forward(x.view()).unwrap();
    composite_loss(p.view(), t.view(), seg, w).unwrap().0.total
}

#[test]
fn full_objective_gradient_matches_finite_differences() {
    let start = std::time::Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = rng.random_range(2..=8);
        let k = rng.random_range(2..=4);
        let mut widths = vec![b];
        for _ in 0..rng.random_range(1..=2) {
            widths.push(rng.random_range(2..=16));
        }
        widths.push(k);
        let mut model = Mlp::<f64>::new(&widths, &mut rng).unwrap();
        // non-zero biases keep hidden units off the ReLU kink at 0
        for (ti, tensor) in model.parameters_mut().into_iter().enumerate() {
            if ti % 2 == 1 {
                tensor.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
            }
        }
        let seg = Segments {
            random: rng.random_range(1..6),
            confident: rng.random_range(1..6),
            hard: rng.random_range(1..6),
        };
        let w = LossWeights {
            confident: rng.random_range(0.1..2.0),
            hard: rng.random_range(0.1..2.0),
        };
        let x = Array2::from_shape_fn((seg.total(), b), |_| rng.random_range(-2.0..2.0));
        let t = random_targets(&mut rng, seg.total(), k);
        let (_, grads) = objective_gradients(&model, x.view(), t.view(), seg, w).unwrap();

        let h = 1e-5;
        for (ti, g) in grads.iter().enumerate() {
            for (j, &analytic) in g.iter().enumerate() {
                let orig = model.parameters_mut()[ti][j];
                model.parameters_mut()[ti][j] = orig + h;
                let up = total_loss(&model, &x, &t, seg, w);
                model.parameters_mut()[ti][j] = orig - h;
                let down = total_loss(&model, &x, &t, seg, w);
                model.parameters_mut()[ti][j] = orig;
                let numeric = (up - down) / (2.0 * h);
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-5);
                worst = worst.max(rel);
                assert!(rel < 1e-4, "seed {seed} tensor {ti} entry {j}: {analytic} vs {numeric}");
            }
        }
    }
    assert!(start.elapsed().as_secs_f64() < 30.0);
    assert!(worst < 1e-4);
}

#[test]
fn loss_equals_sum_of_independent_terms() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = Mlp::<f64>::new(&[5, 8, 3], &mut rng).unwrap();
    let seg = Segments {
        random: 7,
        confident: 4,
        hard: 5,
    };
    let w = LossWeights {
        confident: 1.0,
        hard: 0.5,
    };
    let x = Array2::from_shape_fn((16, 5), |_| rng.random_range(-1.0..1.0));
    let t = random_targets(&mut rng, 16, 3);
    let (p, _) = model.forward(x.view()).unwrap();
    let (terms, _) = composite_loss(p.view(), t.view(), seg, w).unwrap();
    let ce = |lo: usize, hi: usize| {
        cross_entropy_soft(p.slice(s![lo..hi, ..]), t.slice(s![lo..hi, ..]))
            .unwrap()
            .0
    };
    let (r, c, hd) = (ce(0, 7), ce(7, 11), ce(11, 16));
    assert!((terms.total - (r + 1.0 * c + 0.5 * hd)).abs() < 1e-9);
    assert!((terms.random - r).abs() < 1e-12 && (terms.confident - c).abs() < 1e-12);

    // empty hard set: exactly the two-term loss
    let seg2 = Segments { hard: 0, ..seg };
    let (two, _) = composite_loss(p.slice(s![..11, ..]), t.slice(s![..11, ..]), seg2, w).unwrap();
    assert_eq!(two.total, r + 1.0 * c);
    assert_eq!(two.hard, 0.0);
}

#[test]
fn zero_weights_reduce_to_warmup_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = Mlp::<f64>::new(&[4, 6, 3], &mut rng).unwrap();
    let seg = Segments {
        random: 6,
        confident: 3,
        hard: 3,
    };
    let x = Array2::from_shape_fn((12, 4), |_| rng.random_range(-1.0..1.0));
    let t = random_targets(&mut rng, 12, 3);
    let zero = LossWeights {
        confident: 0.0,
        hard: 0.0,
    };
    let (_, full) = objective_gradients(&model, x.view(), t.view(), seg, zero).unwrap();
    let only_random = Segments {
        random: 6,
        confident: 0,
        hard: 0,
    };
    let (_, warm) = objective_gradients(&model, x.slice(s![..6, ..]), t.slice(s![..6, ..]), only_random, zero).unwrap();
    for (a, b) in full.iter().zip(&warm) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-15);
        }
    }
}

/// A small synthetic problem with flipped pseudo-labels.
struct Problem {
    pixels: Array2<f32>,
    gt: LabelMap,
    pseudo: LabelMap,
    conf: ConfidenceMap,
}

fn problem(seed: u64, flip: f64) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = SceneConfig {
        height: 32,
        width: 32,
        ..SceneConfig::default()
    };
    let scene = generate_scene(&cfg, &mut rng).unwrap();
    let (norm, _) = normalize_spectra(&scene.cube).unwrap();
    let k = cfg.classes as u16;
    let mut confidence = Array2::<f32>::zeros(scene.gt.dim());
    let mut pseudo = scene.gt.values().clone();
    for (p, c) in pseudo.iter_mut().zip(confidence.iter_mut()) {
        if rng.random::<f64>() < flip {
            *p = (*p + rng.random_range(1..k)) % k;
            *c = rng.random_range(0.0..0.5);
        } else {
            *c = rng.random_range(0.3..1.0);
        }
    }
    Problem {
        pixels: norm.pixels().to_owned(),
        gt: scene.gt,
        pseudo: LabelMap::new(pseudo, cfg.classes).unwrap(),
        conf: ConfidenceMap::new(confidence).unwrap(),
    }
}

fn short_config() -> TrainConfig {
    TrainConfig {
        epochs: 4,
        iters_per_epoch: 10,
        n_per_class: 16,
        hidden: vec![16],
        ..TrainConfig::default()
    }
}

#[test]
fn zero_lambdas_equal_warmup_continuation() {
    let p = problem(3, 0.2);
    let base = short_config();
    let zero = TrainConfig {
        lambda1: 0.0,
        lambda2: 0.0,
        ..base.clone()
    };
    let warm_only = TrainConfig {
        refine: false,
        ..base.clone()
    };
    let widths = base.widths(16, 4);
    let run = |cfg: &TrainConfig| {
        let model = Mlp::<f32>::new(&widths, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        train_spectral(
            model,
            p.pixels.view(),
            &p.pseudo,
            &p.conf,
            cfg,
            &MixtureConfig::default(),
            &mut ChaCha8Rng::seed_from_u64(5),
        )
        .unwrap()
    };
    let a = run(&zero);
    let b = run(&warm_only);
    assert_eq!(a.model, b.model);
    assert_eq!(a.log, b.log);
    assert_eq!(a.log.len(), base.total_iterations());
    assert!(a.log.iter().all(|r| r.loss_c == 0.0 && r.loss_h == 0.0));
}

#[test]
fn sampler_frequencies_uniform_within_three_sigma() {
    // one class, 20 pixels, equal confidence
    let pseudo = LabelMap::new(Array2::zeros((4, 5)), 1).unwrap();
    let conf = ConfidenceMap::new(Array2::from_elem((4, 5), 0.4)).unwrap();
    let sampler = RandomSetSampler::new(&pseudo, &conf, 100, 1e-6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut counts = [0u64; 20];
    let draws = 1000;
    for _ in 0..draws {
        for &i in &sampler.sample(&mut rng).indices {
            counts[i] += 1;
        }
    }
    let n = (draws * 100) as f64;
    let p = 1.0 / 20.0;
    let sigma = (n * p * (1.0 - p)).sqrt();
    for (i, &c) in counts.iter().enumerate() {
        assert!((c as f64 - n * p).abs() <= 3.0 * sigma, "pixel {i}: {c}");
    }
}

#[test]
fn sampler_single_winner_is_exact() {
    let pseudo = LabelMap::new(Array2::from_shape_fn((3, 3), |(r, _)| (r == 2) as u16), 2).unwrap();
    let mut c = Array2::<f32>::zeros((3, 3));
    c[[1, 1]] = 1.0;
    let sampler = RandomSetSampler::new(&pseudo, &ConfidenceMap::new(c).unwrap(), 64, 0.0).unwrap();
    let draw = sampler.sample(&mut ChaCha8Rng::seed_from_u64(7));
    let (class0, class1): (Vec<_>, Vec<_>) = draw.indices.iter().zip(&draw.labels).partition(|(_, &l)| l == 0);
    assert_eq!(class0.len(), 64);
    assert!(class0.iter().all(|(&i, _)| i == 4));
    assert_eq!(class1.len(), 64);
}

#[test]
fn refit_normalization_leaves_predictions_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let scene = generate_scene(&SceneConfig::default(), &mut rng).unwrap();
    let (once, _) = normalize_spectra(&scene.cube).unwrap();
    let (twice, _) = normalize_spectra(&once).unwrap();
    let model = Mlp::<f32>::new(&[16, 32, 4], &mut rng).unwrap();
    let a = predict_map(&model, &once).unwrap();
    let b = predict_map(&model, &twice).unwrap();
    let diff = (a.values() - b.values()).mapv(f32::abs).fold(0.0f32, |m, &v| m.max(v));
    assert!(diff < 1e-4, "{diff}");
}

#[test]
fn batched_prediction_matches_pixel_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = Array2::from_shape_fn((5000, 6), |_| rng.random_range(-2.0f32..2.0));
    let model = Mlp::<f32>::new(&[6, 12, 12, 3], &mut rng).unwrap();
    let batched = predict_rows(&model, x.view()).unwrap();
    for (i, row) in x.axis_iter(Axis(0)).enumerate().step_by(7) {
        let single = row.insert_axis(Axis(0));
        let (p, _) = model.forward(single).unwrap();
        for k in 0..3 {
            assert!((p[[0, k]] - batched[[i, k]]).abs() < 1e-6);
        }
    }
}

fn accuracy(indices: &[usize], labels: impl Iterator<Item = u16>, gt: &LabelMap) -> f64 {
    let flat = gt.values().as_slice().unwrap();
    let hits = indices.iter().zip(labels).filter(|(&i, l)| flat[i] == *l).count();
    hits as f64 / indices.len() as f64
}

fn confident_vs_random(flip: f64) -> (f64, f64) {
    let p = problem(10, flip);
    // a fully trained warmup; the sets are built from its predictions
    let cfg = TrainConfig {
        hidden: vec![32],
        ..TrainConfig::default()
    };
    let model = Mlp::<f32>::new(&cfg.widths(16, 4), &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
    let sampler = RandomSetSampler::new(&p.pseudo, &p.conf, cfg.n_per_class, cfg.sample_floor).unwrap();
    let mut trainer = SpectralTrainer::new(model, &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    trainer.warmup_train(p.pixels.view(), &sampler, &mut rng).unwrap();
    let pca = fit_pca(p.pixels.mapv(f64::from).view(), 8).unwrap();
    let sets = build_training_sets(
        trainer.model(),
        p.pixels.view(),
        &pca,
        &SplitOptions::default(),
        &EmOptions::default(),
        &mut rng,
    )
    .unwrap();
    let soft_argmax = sets.confident.targets.rows().into_iter().map(|r| {
        r.iter()
            .enumerate()
            .fold((0u16, f32::MIN), |b, (k, &v)| if v > b.1 { (k as u16, v) } else { b })
            .0
    });
    let conf_acc = accuracy(&sets.confident.indices, soft_argmax, &p.gt);
    let mut random_idx = Vec::new();
    let mut random_lab = Vec::new();
    for _ in 0..20 {
        let d = sampler.sample(&mut rng);
        random_idx.extend(d.indices);
        random_lab.extend(d.labels);
    }
    let rand_acc = accuracy(&random_idx, random_lab.into_iter(), &p.gt);
    (conf_acc, rand_acc)
}

#[test]
fn confident_set_is_at_least_as_clean_as_random_set() {
    let (c, r) = confident_vs_random(0.0);
    assert!(c >= r, "noiseless: confident {c} vs random {r}");
    let (c, r) = confident_vs_random(0.3);
    assert!(c >= r, "flipped: confident {c} vs random {r}");
}

#[test]
fn training_is_deterministic() {
    let p = problem(13, 0.3);
    let cfg = short_config();
    let run = || {
        let model = Mlp::<f32>::new(&cfg.widths(16, 4), &mut ChaCha8Rng::seed_from_u64(14)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        train_spectral(model, p.pixels.view(), &p.pseudo, &p.conf, &cfg, &MixtureConfig::default(), &mut rng).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.model, b.model);
    assert_eq!(a.warmup_model, b.warmup_model);
    assert_eq!(a.log, b.log);
}

