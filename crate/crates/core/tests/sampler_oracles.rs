use grf_core::covariance::{CovarianceModel, Kernel1D};
use grf_core::oracle::{sample_covariance, truncated_filter_covariance, build_cov_matrix};
use grf_core::sampler::{filter_axis, generate, padded_extent, white_noise, FieldGrid};
use grf_core::spectral::{ar1_filter_exponential, RationalFilter1D};

fn exp_model(t: &[f64]) -> CovarianceModel {
    CovarianceModel::new(vec![Kernel1D::exponential(1.0, 1.0).unwrap(); t.len()], t.to_vec()).unwrap()
}

#[test]
fn white_noise_moments() {
    let w = white_noise(&[1_000_000], 99).unwrap().data;
    let n = w.len() as f64;
    let mean = w.iter().sum::<f64>() / n;
    let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    assert!(mean.abs() < 4.0 / n.sqrt(), "{mean}");
    assert!((var - 1.0).abs() < 0.01, "{var}");
    assert_eq!(white_noise(&[4], 42).unwrap().data, white_noise(&[4], 42).unwrap().data);
    assert_ne!(white_noise(&[2, 3], 1).unwrap().data, white_noise(&[2, 3], 2).unwrap().data);
    assert!(white_noise(&[3, 0], 1).is_err());
}

#[test]
fn filter_examples() {
    let x = white_noise(&[5, 6], 3).unwrap().data;
    let id = RationalFilter1D::new(vec![1.0], vec![1.0]).unwrap();
    assert_eq!(filter_axis(&x, &[5, 6], &id, 1).unwrap(), x);

    let (r, c) = (0.7, 0.3);
    let f = RationalFilter1D::new(vec![c], vec![1.0, -r]).unwrap();
    let mut imp = vec![0.0; 10];
    imp[0] = 1.0;
    for (k, v) in filter_axis(&imp, &[10], &f, 0).unwrap().iter().enumerate() {
        assert!((v - c * r.powi(k as i32)).abs() < 1e-15);
    }
}

#[test]
fn long_ar1_path_tracks_kernel() {
    let model = exp_model(&[0.1]);
    let n = 1_000_000;
    let (field, _) = generate(&model, &[n], 5, 0.1).unwrap();
    let r = (-0.1f64).exp();
    let sum_sq: f64 = (1..2000).map(|k| r.powi(2 * k)).sum();
    let se = ((1.0 + 2.0 * sum_sq) / n as f64).sqrt();
    for k in 0..=20 {
        let got = sample_covariance(&field, &[k]).unwrap();
        let want = r.powi(k as i32);
        assert!((got - want).abs() < 3.0 * se, "lag {k}: {got} vs {want} (se {se})");
    }
}

#[test]
fn white_model_is_scaled_noise_on_retained_block() {
    let k = Kernel1D::custom(vec![2.25]).unwrap();
    let model = CovarianceModel::new(vec![k], vec![1.0]).unwrap();
    let (field, noise) = generate(&model, &[30], 4, 0.1).unwrap();
    let off = noise.n[0] - 30;
    for i in 0..30 {
        assert!((field.data[i] - 1.5 * noise.data[off + i]).abs() < 1e-15);
    }
}

#[test]
fn thread_count_does_not_change_bits() {
    let model = exp_model(&[0.1, 0.2, 0.125]);
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| generate(&model, &[20, 30, 70], 11, 0.1).unwrap().0.data)
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn burn_in_gives_stationary_law() {
    // with ≥ 50/(αT) burn-in samples the zero-start path has the stationary covariance
    let f = ar1_filter_exponential(1.0, 1.0, 0.1).unwrap();
    let n = 40;
    let burn = padded_extent(n, 1, 500.0 / n as f64) - n;
    let exact = truncated_filter_covariance(&f, burn, n);
    let target = build_cov_matrix(&exp_model(&[0.1]), &[n]).unwrap().data;
    assert!((exact - target).abs().max() <= 1e-8);
}

#[test]
fn doubling_the_grid_costs_about_double() {
    let model = exp_model(&[0.1, 0.1, 0.1]);
    let time = |n: &[usize]| {
        let mut t: Vec<f64> = (0..5)
            .map(|s| {
                let start = std::time::Instant::now();
                let _: FieldGrid = generate(&model, n, s, 0.1).unwrap().0;
                start.elapsed().as_secs_f64()
            })
            .collect();
        t.sort_by(f64::total_cmp);
        t[2]
    };
    let ratio = time(&[128, 128, 128]) / time(&[64, 128, 128]);
    assert!(ratio <= 2.4, "doubling cost ratio {ratio}");
}
