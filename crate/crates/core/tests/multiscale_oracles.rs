use grf_core::covariance::{product_covariance, CovarianceModel, Kernel1D};
use grf_core::multiscale::{
    boundary_index_set, conditional_boundary, fine_shape, halve_scale, reconstruct_fine_noise, refine,
    refine_with_report, sample_boundary, stationary_filter, ConditionalGaussian, RefinementState,
};
use grf_core::oracle::{build_cov_matrix, cmd_sample};
use grf_core::sampler::{build_filters, generate, FieldGrid, FieldMeta};
use grf_core::GrfError;
use nalgebra::{DMatrix, DVector};

fn exp_model(t: &[f64]) -> CovarianceModel {
    CovarianceModel::new(vec![Kernel1D::exponential(1.0, 1.0).unwrap(); t.len()], t.to_vec()).unwrap()
}

fn state(t: &[f64], n: &[usize], seed: u64) -> RefinementState {
    let m = exp_model(t);
    let (f, w) = generate(&m, n, seed, 0.1).unwrap();
    RefinementState::from_generated(&m, f, w).unwrap()
}

#[test]
fn three_levels_keep_every_parent_sample() {
    let mut s = state(&[0.2, 0.25], &[20, 20], 1);
    for size in [39, 77, 153] {
        let (fine, next) = refine(&s, size as u64).unwrap();
        assert_eq!(fine.n, vec![size, size]);
        for i in 0..s.field.n[0] {
            for j in 0..s.field.n[1] {
                let d = fine.data[2 * i * size + 2 * j] - s.field.data[i * s.field.n[1] + j];
                assert!(d.abs() < 1e-9);
            }
        }
        s = next;
    }
    assert_eq!(s.model.t, vec![0.025, 0.03125]);
}

#[test]
fn reconstructed_noise_reproduces_coarse_samples() {
    for (t, n) in [(vec![0.3], vec![25]), (vec![0.2, 0.25], vec![6, 9])] {
        let s = state(&t, &n, 2);
        let fine_model = halve_scale(&s.model);
        let filters = build_filters(&fine_model, &[]).unwrap();
        let fine_n = fine_shape(&n);
        let b = boundary_index_set(&fine_n);
        let cg = conditional_boundary(&fine_model, &s.field, &b).unwrap();
        let noise = reconstruct_fine_noise(&s, &filters, &sample_boundary(&cg, 3), 4).unwrap();
        let y = stationary_filter(&fine_model, &filters, &noise).unwrap();
        let stride = if n.len() == 2 { fine_n[1] } else { 1 };
        for (f, &v) in s.field.data.iter().enumerate() {
            let (i, j) = if n.len() == 2 { (f / n[1], f % n[1]) } else { (f, 0) };
            let at = if n.len() == 2 { 2 * i * stride + 2 * j } else { 2 * i };
            assert!((y[at] - v).abs() < 1e-9);
        }
    }
}

#[test]
fn conditional_sampling_restores_the_joint_law() {
    // 3×3 coarse points inside a 5×5 fine grid; y₁ drawn from its marginal, y₂ from the conditional
    let fine = exp_model(&[0.2, 0.3]);
    let coarse_n = [3usize, 3];
    let b = boundary_index_set(&fine_shape(&coarse_n));
    let coarse_model = CovarianceModel { kernels: fine.kernels.clone(), t: fine.t.iter().map(|t| 2.0 * t).collect() };
    let sigma11 = build_cov_matrix(&coarse_model, &coarse_n).unwrap();
    let mut pts: Vec<Vec<i64>> = (0..9).map(|f| vec![2 * (f / 3) as i64, 2 * (f % 3) as i64]).collect();
    pts.extend(b.iter().map(|p| p.iter().map(|&v| v as i64).collect::<Vec<_>>()));
    let n = pts.len();
    let full = DMatrix::from_fn(n, n, |a, c| {
        let lag: Vec<i64> = pts[a].iter().zip(&pts[c]).map(|(x, y)| x - y).collect();
        product_covariance(&fine, &lag).unwrap()
    });
    let trials = 10_000u64;
    let mut acc = DMatrix::zeros(n, n);
    for s in 0..trials {
        let y1 = cmd_sample(&sigma11, s).unwrap();
        let coarse = FieldGrid {
            n: coarse_n.to_vec(),
            t: coarse_model.t.clone(),
            data: y1.clone(),
            meta: FieldMeta { seed: s, scale_level: 0, generator: String::new() },
        };
        let cg = conditional_boundary(&fine, &coarse, &b).unwrap();
        let y2 = sample_boundary(&cg, s + 1_000_000);
        let v = DVector::from_iterator(n, y1.into_iter().chain(y2));
        acc += &v * v.transpose();
    }
    let emp = acc / trials as f64;
    let rel = (&emp - &full).norm() / full.norm();
    assert!(rel < 0.05, "relative error {rel}");
}

#[test]
fn identity_conditional_gives_standard_normals() {
    let cg = ConditionalGaussian::from_moments(DVector::zeros(3), DMatrix::identity(3, 3)).unwrap();
    let a = sample_boundary(&cg, 5);
    assert_eq!(a, sample_boundary(&cg, 5));
    assert_eq!(a.len(), 3);
    assert_ne!(a, sample_boundary(&cg, 6));
}

#[test]
fn unsupported_cases() {
    let g = CovarianceModel::new(vec![Kernel1D::gaussian(1.0, 1.0).unwrap(); 2], vec![0.2, 0.25]).unwrap();
    let (f, w) = generate(&g, &[8, 8], 1, 0.1).unwrap();
    let s = RefinementState::from_generated(&g, f, w).unwrap();
    assert!(matches!(refine(&s, 1), Err(GrfError::UnsupportedRefinement(_))));

    let s3 = state(&[0.2, 0.2, 0.2], &[4, 4, 4], 1);
    assert!(matches!(refine(&s3, 1), Err(GrfError::UnsupportedRefinement(_))));
}

#[test]
fn boundary_law_is_positive_semidefinite() {
    for (n, seed) in [([4, 4], 1), ([10, 7], 2), ([20, 20], 3)] {
        let s = state(&[0.2, 0.25], &n, seed);
        let (_, _, rep) = refine_with_report(&s, 0).unwrap();
        assert_eq!(rep.boundary_len, (n[0] - 1) + (n[1] - 1));
        let fine = halve_scale(&s.model);
        let cg = conditional_boundary(&fine, &s.field, &boundary_index_set(&fine_shape(&n))).unwrap();
        let eig = cg.cov.clone().symmetric_eigenvalues();
        assert!(eig.min() >= -1e-10 * cg.cov.trace());
    }
}
