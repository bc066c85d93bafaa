use hsi_zeroshot::mixture::{
    fit_class_bank, fit_gmm_em, fit_pca, soft_labels, split_confidence, ClassGmmBank, EmOptions, Gaussian, Gmm,
    SplitOptions,
};
use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, Axis};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, mean: &[f64], std: f64) -> Array2<f64> {
    let noise = Normal::new(0.0, std).unwrap();
    Array2::from_shape_fn((n, mean.len()), |(_, j)| mean[j] + noise.sample(rng))
}

fn stack(parts: &[Array2<f64>]) -> Array2<f64> {
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    ndarray::concatenate(Axis(0), &views).unwrap()
}

fn max_abs(a: impl IntoIterator<Item = f64>) -> f64 {
    a.into_iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn one_d_gaussian(weight: f64, mean: f64, var: f64) -> Gaussian {
    Gaussian::new(weight, DVector::from_element(1, mean), DMatrix::from_element(1, 1, var)).unwrap()
}

/// Two classes, one component each, unit variance, means 0 and 2.
fn two_class_bank() -> ClassGmmBank {
    let a = Gmm::new(vec![one_d_gaussian(1.0, 0.0, 1.0)]).unwrap();
    let b = Gmm::new(vec![one_d_gaussian(1.0, 2.0, 1.0)]).unwrap();
    ClassGmmBank::new(1, vec![Some(a), Some(b)]).unwrap()
}

#[test]
fn pca_recovers_line_direction() {
    let xs = Array2::from_shape_fn((50, 2), |(i, _)| i as f64 * 0.1 - 2.0);
    let pca = fit_pca(xs.view(), 2).unwrap();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    assert!((pca.components[[0, 0]] - h).abs() < 1e-8);
    assert!((pca.components[[0, 1]] - h).abs() < 1e-8);
    assert!(pca.eigenvalues[1].abs() < 1e-8);
}

#[test]
fn pca_components_are_orthonormal() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let xs = Array2::from_shape_fn((200, 7), |(_, j)| rng.random::<f64>() * (1.0 + j as f64));
    let pca = fit_pca(xs.view(), 5).unwrap();
    let gram = pca.components.dot(&pca.components.t());
    for ((i, j), &g) in gram.indexed_iter() {
        let want = if i == j { 1.0 } else { 0.0 };
        assert!((g - want).abs() < 1e-6, "gram[{i},{j}] = {g}");
    }
    assert!(pca.eigenvalues.windows(2).into_iter().all(|w| w[0] >= w[1]));
    for row in pca.components.rows() {
        let big = row.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        assert!(big > 0.0);
    }
}

#[test]
fn pca_eigenvalues_match_sample_covariance_spectrum() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let xs = gaussian_rows(&mut rng, 400, &[0.0; 3], 1.0);
    let pca = fit_pca(xs.view(), 3).unwrap();
    // independent covariance: explicit centred outer products, n-1 normalization
    let mean = xs.mean_axis(Axis(0)).unwrap();
    let c = &xs - &mean;
    let cov = DMatrix::from_fn(3, 3, |i, j| c.column(i).dot(&c.column(j)) / 399.0);
    let mut eig: Vec<f64> = cov.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    for (a, b) in pca.eigenvalues.iter().zip(&eig) {
        assert!((a - b).abs() < 1e-9);
        assert!((a - 1.0).abs() < 0.25);
    }
}

#[test]
fn projection_matches_naive_dot_products() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let xs = Array2::from_shape_fn((80, 6), |_| rng.random_range(-2.0..2.0));
    let pca = fit_pca(xs.view(), 4).unwrap();
    for _ in 0..20 {
        let x = Array1::from_shape_fn(6, |_| rng.random_range(-3.0..3.0));
        let got = pca.project(x.view()).unwrap();
        for i in 0..4 {
            let mut want = 0.0;
            for j in 0..6 {
                want += pca.components[[i, j]] * (x[j] - pca.mean[j]);
            }
            assert!((got[i] - want).abs() < 1e-9);
        }
    }
    assert!(max_abs(pca.project(pca.mean.view()).unwrap()) == 0.0);
    let unit = &pca.mean + &pca.components.row(0);
    let p = pca.project(unit.view()).unwrap();
    assert!((p[0] - 1.0).abs() < 1e-12 && max_abs(p.iter().skip(1).copied()) < 1e-12);
    assert!(pca.project(Array1::zeros(5).view()).is_err());
}

#[test]
fn full_rank_projection_is_isometry() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let xs = Array2::from_shape_fn((30, 5), |_| rng.random_range(-10.0..10.0));
    let pca = fit_pca(xs.view(), 5).unwrap();
    let ys = pca.project_rows(xs.view()).unwrap();
    for i in 0..30 {
        for j in i + 1..30 {
            let dx = (&xs.row(i) - &xs.row(j)).mapv(|v| v * v).sum().sqrt();
            let dy = (&ys.row(i) - &ys.row(j)).mapv(|v| v * v).sum().sqrt();
            assert!((dx - dy).abs() < 1e-5);
        }
    }
    let col_means = ys.mean_axis(Axis(0)).unwrap();
    assert!(max_abs(col_means) < 1e-6);
}

#[test]
fn pca_rejects_too_few_samples() {
    assert!(fit_pca(Array2::zeros((3, 4)).view(), 3).is_err());
    assert!(fit_pca(Array2::zeros((10, 4)).view(), 5).is_err());
}

#[test]
fn single_component_is_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let xs = gaussian_rows(&mut rng, 300, &[1.0, -2.0, 0.5], 0.7);
    let opts = EmOptions {
        components: 1,
        reg: 1e-3,
        ..EmOptions::default()
    };
    let fit = fit_gmm_em(xs.view(), &opts, &mut rng).unwrap();
    let g = &fit.gmm.components()[0];
    let mean = xs.mean_axis(Axis(0)).unwrap();
    let c = &xs - &mean;
    for i in 0..3 {
        assert!((g.mean()[i] - mean[i]).abs() < 1e-12);
        for j in 0..3 {
            let want = c.column(i).dot(&c.column(j)) / 300.0 + if i == j { 1e-3 } else { 0.0 };
            assert!((g.covariance()[(i, j)] - want).abs() < 1e-12);
        }
    }
    assert_eq!(g.weight(), 1.0);
}

/// Returns how many iteration pairs were checked.
fn assert_monotone(ll: &[f64], reseeds: &[usize]) -> usize {
    let mut checked = 0;
    for t in 0..ll.len().saturating_sub(1) {
        if reseeds.contains(&t) {
            continue;
        }
        assert!(ll[t + 1] >= ll[t] - 1e-9, "iteration {t}: {} -> {}", ll[t], ll[t + 1]);
        checked += 1;
    }
    checked
}

#[test]
fn em_objective_never_decreases() {
    let mut checked = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 1 + (seed % 3) as usize;
        let parts: Vec<_> = (0..3)
            .map(|_| {
                let m: Vec<f64> = (0..d).map(|_| rng.random_range(-4.0..4.0)).collect();
                let n = rng.random_range(30..120);
                let std = rng.random_range(0.3..1.5);
                gaussian_rows(&mut rng, n, &m, std)
            })
            .collect();
        let xs = stack(&parts);
        let opts = EmOptions {
            components: 1 + (seed % 4) as usize,
            max_iter: 60,
            tol: 1e-10,
            reg: 1e-4,
        };
        let fit = fit_gmm_em(xs.view(), &opts, &mut rng).unwrap();
        checked += assert_monotone(&fit.log_likelihood, &fit.reseeds);
    }
    assert!(checked > 500, "only {checked} pairs checked");
}

#[test]
fn two_cluster_recovery() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let xs = stack(&[gaussian_rows(&mut rng, 1000, &[-5.0], 1.0), gaussian_rows(&mut rng, 1000, &[5.0], 1.0)]);
    let fit = fit_gmm_em(xs.view(), &EmOptions::default(), &mut rng).unwrap();
    let mut comps: Vec<_> = fit.gmm.components().iter().map(|g| (g.mean()[0], g.weight())).collect();
    comps.sort_by(|a, b| a.0.total_cmp(&b.0));
    // oracle: per-cluster statistics after a midpoint split
    let lo: Vec<f64> = xs.iter().copied().filter(|&v| v < 0.0).collect();
    let hi: Vec<f64> = xs.iter().copied().filter(|&v| v >= 0.0).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!((comps[0].0 - mean(&lo)).abs() < 0.05 && (comps[0].0 + 5.0).abs() < 0.2);
    assert!((comps[1].0 - mean(&hi)).abs() < 0.05 && (comps[1].0 - 5.0).abs() < 0.2);
    assert!((comps[0].1 - 0.5).abs() < 0.05 && (comps[1].1 - 0.5).abs() < 0.05);
    assert!(fit.converged);
}

#[test]
fn duplicated_samples_give_same_fit() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let xs = stack(&[gaussian_rows(&mut rng, 60, &[0.0, 0.0], 1.0), gaussian_rows(&mut rng, 60, &[3.0, 1.0], 0.5)]);
    // interleave copies so k-means++ seeding sees the same empirical distribution
    let doubled = Array2::from_shape_fn((240, 2), |(i, j)| xs[[i / 2, j]]);
    let a = fit_gmm_em(xs.view(), &EmOptions::default(), &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    let b = fit_gmm_em(doubled.view(), &EmOptions::default(), &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    let key = |g: &Gmm| {
        let mut v: Vec<(f64, f64, f64)> = g
            .components()
            .iter()
            .map(|c| (c.mean()[0], c.mean()[1], c.weight()))
            .collect();
        v.sort_by(|x, y| x.0.total_cmp(&y.0));
        v
    };
    for (x, y) in key(&a.gmm).iter().zip(key(&b.gmm).iter()) {
        assert!((x.0 - y.0).abs() < 1e-6 && (x.1 - y.1).abs() < 1e-6 && (x.2 - y.2).abs() < 1e-6);
    }
}

#[test]
fn bimodal_split_matches_threshold_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let noise = Normal::new(0.0, 0.05).unwrap();
    let mut values: Vec<f64> = (0..400)
        .map(|i| {
            let centre: f64 = if i % 2 == 0 { 0.1 } else { 0.9 };
            (centre + noise.sample(&mut rng)).clamp(0.0, 1.0)
        })
        .collect();
    values.push(0.5);
    let split = split_confidence(&[values.clone(), vec![]], &SplitOptions::default(), &mut rng).unwrap();
    let c = &split.classes[0];
    assert!(!c.fallback);
    let crossover = c.confident.iter().filter(|&&i| values[i] <= 0.5).count()
        + c.hard.iter().filter(|&&i| values[i] > 0.5).count();
    assert!(crossover as f64 <= 0.02 * values.len() as f64, "{crossover} crossovers");

    let mut all: Vec<usize> = c.confident.iter().chain(&c.hard).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..values.len()).collect::<Vec<_>>());
}

#[test]
fn one_dimensional_bank_integrates_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let xs = stack(&[gaussian_rows(&mut rng, 100, &[-1.0], 0.5), gaussian_rows(&mut rng, 80, &[2.0], 0.8)]);
    let bank = fit_class_bank(xs.view(), &[(0..180).collect()], &EmOptions::default(), &mut rng).unwrap();
    let gmm = bank.class(0).unwrap();
    assert_eq!(gmm.len(), 2);
    // trapezoid rule on [-12, 12]
    let (a, b, n) = (-12.0f64, 12.0f64, 24_000);
    let h = (b - a) / n as f64;
    let integral: f64 = (0..=n)
        .map(|i| {
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            w * gmm.log_density(&[a + i as f64 * h]).exp()
        })
        .sum::<f64>()
        * h;
    assert!((integral - 1.0).abs() < 1e-6, "{integral}");
}

#[test]
fn identical_confident_sets_give_identical_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let xs = gaussian_rows(&mut rng, 100, &[0.0, 1.0], 1.0);
    let idx: Vec<usize> = (0..100).collect();
    let bank = fit_class_bank(xs.view(), &[idx.clone(), idx], &EmOptions::default(), &mut rng).unwrap();
    let (a, b) = (bank.class(0).unwrap(), bank.class(1).unwrap());
    for (x, y) in a.components().iter().zip(b.components()) {
        assert_eq!(x.mean(), y.mean());
        assert_eq!(x.covariance(), y.covariance());
        assert_eq!(x.weight(), y.weight());
    }
}

#[test]
fn bank_means_track_generating_means() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let centres = [[0.0, 0.0], [6.0, 0.0], [0.0, -6.0]];
    let parts: Vec<_> = centres.iter().map(|c| gaussian_rows(&mut rng, 200, c, 1.0)).collect();
    let xs = stack(&parts);
    let sets: Vec<Vec<usize>> = (0..3).map(|k| (k * 200..(k + 1) * 200).collect()).collect();
    let opts = EmOptions {
        components: 1,
        ..EmOptions::default()
    };
    let bank = fit_class_bank(xs.view(), &sets, &opts, &mut rng).unwrap();
    for (k, c) in centres.iter().enumerate() {
        let m = bank.class(k).unwrap().components()[0].mean();
        assert!((m[0] - c[0]).abs() < 0.2 && (m[1] - c[1]).abs() < 0.2);
    }
}

#[test]
fn empty_class_is_excluded() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let xs = gaussian_rows(&mut rng, 50, &[0.0], 1.0);
    let bank = fit_class_bank(xs.view(), &[(0..50).collect(), vec![]], &EmOptions::default(), &mut rng).unwrap();
    assert!(bank.class(1).is_none());
    let y = soft_labels(&bank, xs.view()).unwrap();
    assert!(y.column(0).iter().all(|&v| v == 1.0));
    assert!(y.column(1).iter().all(|&v| v == 0.0));
}

#[test]
fn soft_labels_two_gaussian_cases() {
    let bank = two_class_bank();
    let y = soft_labels(&bank, Array2::from_shape_vec((2, 1), vec![1.0, 0.0]).unwrap().view()).unwrap();
    assert!((y[[0, 0]] - 0.5).abs() < 1e-6 && (y[[0, 1]] - 0.5).abs() < 1e-6);
    // N(0|0,1) = 0.39894, N(0|2,1) = 0.05399
    let (p0, p2) = (0.39894, 0.05399);
    assert!((y[[1, 0]] - p0 / (p0 + p2)).abs() < 1e-3);
    assert!((y[[1, 0]] - 0.8808).abs() < 1e-3 && (y[[1, 1]] - 0.1192).abs() < 1e-3);
}

#[test]
fn outliers_get_uniform_labels() {
    let bank = two_class_bank();
    let y = soft_labels(&bank, Array2::from_elem((1, 1), 1e6).view()).unwrap();
    assert_eq!(y.row(0).to_vec(), vec![0.5, 0.5]);
}

#[test]
fn single_class_bank_is_certain() {
    let g = Gmm::new(vec![one_d_gaussian(1.0, 3.0, 2.0)]).unwrap();
    let bank = ClassGmmBank::new(1, vec![Some(g)]).unwrap();
    let y = soft_labels(&bank, Array2::from_shape_vec((3, 1), vec![-5.0, 3.0, 40.0]).unwrap().view()).unwrap();
    assert!(y.iter().all(|&v| v == 1.0));
}

fn random_bank(rng: &mut ChaCha8Rng, k: usize, m: usize, q: usize, shift: &[f64]) -> ClassGmmBank {
    let classes = (0..k)
        .map(|_| {
            let comps = (0..m)
                .map(|_| {
                    let mean = DVector::from_fn(q, |i, _| rng.random_range(-3.0..3.0) + shift[i]);
                    let a = DMatrix::from_fn(q, q, |_, _| rng.random_range(-1.0..1.0));
                    let cov = &a * a.transpose() + DMatrix::identity(q, q) * 0.1;
                    Gaussian::new(rng.random_range(0.1..1.0), mean, cov).unwrap()
                })
                .collect();
            Some(Gmm::new(comps).unwrap())
        })
        .collect();
    ClassGmmBank::new(q, classes).unwrap()
}

#[test]
fn soft_labels_translation_equivariant() {
    for seed in 0..10u64 {
        let q = 3;
        let shift: Vec<f64> = vec![7.5, -3.25, 100.0];
        let a = random_bank(&mut ChaCha8Rng::seed_from_u64(seed), 3, 2, q, &[0.0; 3]);
        let b = random_bank(&mut ChaCha8Rng::seed_from_u64(seed), 3, 2, q, &shift);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let xs = Array2::from_shape_fn((50, q), |_| rng.random_range(-4.0..4.0));
        let shifted = Array2::from_shape_fn((50, q), |(i, j)| xs[[i, j]] + shift[j]);
        let ya = soft_labels(&a, xs.view()).unwrap();
        let yb = soft_labels(&b, shifted.view()).unwrap();
        assert!(max_abs((&ya - &yb).iter().copied()) < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn soft_labels_are_distributions(seed in 0u64..10_000, scale in prop_oneof![Just(1.0f64), Just(1e3), Just(1e8)]) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.random_range(1..5);
        let m = rng.random_range(1..3);
        let q = rng.random_range(1..4);
        let bank = random_bank(&mut rng, k, m, q, &vec![0.0; q]);
        let xs = Array2::from_shape_fn((20, q), |_| rng.random_range(-1.0..1.0) * scale);
        let y = soft_labels(&bank, xs.view()).unwrap();
        for row in y.rows() {
            prop_assert!(row.iter().all(|&v| v >= 0.0));
            prop_assert!((row.sum() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn split_partitions_each_class(seed in 0u64..10_000, n in 0usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let split = split_confidence(std::slice::from_ref(&values), &SplitOptions::default(), &mut rng).unwrap();
        let c = &split.classes[0];
        let mut all: Vec<usize> = c.confident.iter().chain(&c.hard).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }
}
