//! Reference samplers and estimators used to check the filtering path.

use nalgebra::{DMatrix, DVector};

use crate::covariance::{product_covariance, sampled_sequence, CovarianceModel};
use crate::error::{GrfError, Result};
use crate::sampler::{white_noise, FieldGrid, FieldMeta, GENERATOR_VERSION};
use crate::spectral::RationalFilter1D;

pub const DEFAULT_CMD_CAP: usize = 32768;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Structure {
    Dense,
    KronOfToeplitz,
}

#[derive(Debug, Clone)]
pub struct CovMatrix {
    pub data: DMatrix<f64>,
    pub structure: Structure,
}

impl CovMatrix {
    pub fn n(&self) -> usize {
        self.data.nrows()
    }
}

pub fn build_cov_matrix(model: &CovarianceModel, n: &[usize]) -> Result<CovMatrix> {
    build_cov_matrix_capped(model, n, DEFAULT_CMD_CAP)
}

/// Dense covariance of the stacked (row-major) grid: entry (x, x′) = ρ_s(x − x′).
pub fn build_cov_matrix_capped(model: &CovarianceModel, n: &[usize], cap: usize) -> Result<CovMatrix> {
    if n.len() != model.dims() {
        return Err(GrfError::DimensionMismatch { expected: model.dims(), got: n.len() });
    }
    let size: usize = n.iter().product();
    if size > cap {
        return Err(GrfError::SizeCap { size, cap });
    }
    let factors = toeplitz_factors(model, n)?;
    // Kronecker product of the per-axis Toeplitz matrices equals the elementwise product rule
    let mut data = DMatrix::from_element(1, 1, 1.0);
    for f in &factors {
        data = data.kronecker(f);
    }
    Ok(CovMatrix { data, structure: Structure::KronOfToeplitz })
}

/// Per-axis Toeplitz matrices [ρ_j((i−k)T_j)].
pub fn toeplitz_factors(model: &CovarianceModel, n: &[usize]) -> Result<Vec<DMatrix<f64>>> {
    model
        .kernels
        .iter()
        .zip(&model.t)
        .zip(n)
        .map(|((k, &t), &nj)| {
            let seq = sampled_sequence(k, t, nj.saturating_sub(1))?;
            Ok(DMatrix::from_fn(nj, nj, |i, j| seq[i.abs_diff(j)]))
        })
        .collect()
}

/// Dense entrywise build, used to cross-check the Kronecker shortcut.
pub fn build_cov_matrix_elementwise(model: &CovarianceModel, n: &[usize]) -> Result<DMatrix<f64>> {
    let size: usize = n.iter().product();
    let coords: Vec<Vec<i64>> = (0..size).map(|f| unflatten(n, f)).collect();
    let mut m = DMatrix::zeros(size, size);
    for i in 0..size {
        for j in 0..size {
            let lag: Vec<i64> = coords[i].iter().zip(&coords[j]).map(|(a, b)| a - b).collect();
            m[(i, j)] = product_covariance(model, &lag)?;
        }
    }
    Ok(m)
}

fn unflatten(shape: &[usize], mut f: usize) -> Vec<i64> {
    let mut idx = vec![0i64; shape.len()];
    for j in (0..shape.len()).rev() {
        idx[j] = (f % shape[j]) as i64;
        f /= shape[j];
    }
    idx
}

pub fn cholesky_lower(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| GrfError::NotPositiveDefinite(format!("{}×{} covariance", m.nrows(), m.ncols())))
}

/// y = L·w with LLᵀ = Σ and w from `white_noise` of shape (n,).
pub fn cmd_sample(cov: &CovMatrix, seed: u64) -> Result<Vec<f64>> {
    let l = cholesky_lower(&cov.data)?;
    let w = DVector::from_vec(white_noise(&[cov.n()], seed)?.data);
    Ok((l * w).as_slice().to_vec())
}

pub fn stepwise_cmd_sample(model: &CovarianceModel, n: &[usize], seed: u64) -> Result<FieldGrid> {
    stepwise_cmd_sample_capped(model, n, seed, DEFAULT_CMD_CAP)
}

/// Applies each per-axis Cholesky factor along its axis to one white-noise grid.
pub fn stepwise_cmd_sample_capped(model: &CovarianceModel, n: &[usize], seed: u64, cap: usize) -> Result<FieldGrid> {
    if n.len() != model.dims() {
        return Err(GrfError::DimensionMismatch { expected: model.dims(), got: n.len() });
    }
    if let Some(&big) = n.iter().find(|&&nj| nj > cap) {
        return Err(GrfError::SizeCap { size: big, cap });
    }
    let factors: Vec<DMatrix<f64>> =
        toeplitz_factors(model, n)?.iter().map(cholesky_lower).collect::<Result<_>>()?;
    let mut data = white_noise(n, seed)?.data;
    for (axis, l) in factors.iter().enumerate() {
        apply_along_axis(&mut data, n, l, axis);
    }
    Ok(FieldGrid {
        n: n.to_vec(),
        t: model.t.clone(),
        data,
        meta: FieldMeta { seed, scale_level: 0, generator: format!("{GENERATOR_VERSION} stepwise-cmd") },
    })
}

/// Replaces every line v along `axis` by M·v.
pub fn apply_along_axis(data: &mut [f64], shape: &[usize], m: &DMatrix<f64>, axis: usize) {
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let mut line = vec![0.0; len];
    for block in data.chunks_mut(len * inner) {
        for lane in 0..inner {
            for i in 0..len {
                line[i] = block[i * inner + lane];
            }
            for i in 0..len {
                let mut s = 0.0;
                for k in 0..len {
                    s += m[(i, k)] * line[k];
                }
                block[i * inner + lane] = s;
            }
        }
    }
}

/// σ̂_k = (1/|N|) Σ_x y(x+k) y(x) over x with x+k inside the grid (lags k_j ≥ 0).
pub fn sample_covariance(field: &FieldGrid, k: &[usize]) -> Result<f64> {
    let d = field.dims();
    if k.len() != d {
        return Err(GrfError::DimensionMismatch { expected: d, got: k.len() });
    }
    if let Some(j) = (0..d).find(|&j| k[j] >= field.n[j]) {
        return Err(GrfError::InvalidParameter(format!("lag {} out of range along axis {j}", k[j])));
    }
    let n = &field.n;
    let counts: Vec<usize> = n.iter().zip(k).map(|(&nj, &kj)| nj - kj).collect();
    let shift: usize = k.iter().zip(strides(n)).map(|(&kj, s)| kj * s).sum();
    let row = counts[d - 1];
    let mut acc = 0.0;
    let mut idx = vec![0usize; d];
    let outer: usize = counts[..d - 1].iter().product();
    for _ in 0..outer {
        let base = crate::sampler::flat_index(n, &idx);
        let a = &field.data[base..base + row];
        let b = &field.data[base + shift..base + shift + row];
        acc += a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        for j in (0..d - 1).rev() {
            idx[j] += 1;
            if idx[j] < counts[j] {
                break;
            }
            idx[j] = 0;
        }
    }
    Ok(acc / field.len() as f64)
}

fn strides(n: &[usize]) -> Vec<usize> {
    let mut s = vec![1; n.len()];
    for j in (0..n.len().saturating_sub(1)).rev() {
        s[j] = s[j + 1] * n[j + 1];
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Axis(usize),
    Diagonal,
}

impl Direction {
    /// `x`, `y`, `z`, `diag`, or `axisN`.
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "x" => Some(Self::Axis(0)),
            "y" => Some(Self::Axis(1)),
            "z" => Some(Self::Axis(2)),
            "diag" | "diagonal" => Some(Self::Diagonal),
            _ => s.strip_prefix("axis").and_then(|n| n.parse().ok()).map(Self::Axis),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Axis(0) => "x".into(),
            Self::Axis(1) => "y".into(),
            Self::Axis(2) => "z".into(),
            Self::Axis(j) => format!("axis{j}"),
            Self::Diagonal => "diag".into(),
        }
    }

    pub fn lag_vector(&self, dims: usize, k: usize) -> Result<Vec<usize>> {
        match *self {
            Self::Axis(j) if j < dims => {
                let mut v = vec![0; dims];
                v[j] = k;
                Ok(v)
            }
            Self::Axis(j) => Err(GrfError::InvalidParameter(format!("axis {j} invalid for a {dims}-d field"))),
            Self::Diagonal => Ok(vec![k; dims]),
        }
    }

    /// Physical distance of lag k along this direction.
    pub fn distance(&self, t: &[f64], k: usize) -> f64 {
        match *self {
            Self::Axis(j) => k as f64 * t[j],
            Self::Diagonal => k as f64 * t.iter().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }

    pub fn max_lag(&self, n: &[usize]) -> usize {
        match *self {
            Self::Axis(j) => n.get(j).map_or(0, |v| v - 1),
            Self::Diagonal => n.iter().min().map_or(0, |v| v - 1),
        }
    }
}

pub fn covariance_profile(field: &FieldGrid, direction: Direction, max_lag: usize) -> Result<Vec<f64>> {
    let d = field.dims();
    direction.lag_vector(d, 0)?;
    if max_lag > direction.max_lag(&field.n) {
        return Err(GrfError::InvalidParameter(format!(
            "max lag {max_lag} exceeds the extent along {}",
            direction.name()
        )));
    }
    (0..=max_lag)
        .map(|k| sample_covariance(field, &direction.lag_vector(d, k)?))
        .collect()
}

/// Model covariance ρ_s along a direction.
pub fn target_profile(model: &CovarianceModel, direction: Direction, max_lag: usize) -> Result<Vec<f64>> {
    let d = model.dims();
    (0..=max_lag)
        .map(|k| {
            let lag: Vec<i64> = direction.lag_vector(d, k)?.iter().map(|&v| v as i64).collect();
            product_covariance(model, &lag)
        })
        .collect()
}

/// Expected value of the biased estimator under the model: ρ_s(k)·∏(N_j−k_j)/|N|.
pub fn expected_profile(model: &CovarianceModel, n: &[usize], direction: Direction, max_lag: usize) -> Result<Vec<f64>> {
    let total: f64 = n.iter().map(|&v| v as f64).product();
    let target = target_profile(model, direction, max_lag)?;
    target
        .iter()
        .enumerate()
        .map(|(k, &rho)| {
            let lag = direction.lag_vector(n.len(), k)?;
            let pairs: f64 = n.iter().zip(&lag).map(|(&nj, &kj)| (nj - kj) as f64).product();
            Ok(rho * pairs / total)
        })
        .collect()
}

/// max |sample − reference| over lags whose target is at least `floor`.
pub fn max_deviation(sample: &[f64], reference: &[f64], target: &[f64], floor: f64) -> f64 {
    sample
        .iter()
        .zip(reference)
        .zip(target)
        .filter(|(_, &t)| t >= floor)
        .map(|((s, r), _)| (s - r).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Cmd,
    StepwiseCmd,
    Circulant,
    Realization,
}

/// Leading-order flop counts: (∏N)³, ∏N·ΣN, ∏C·log₂∏C, ∏N.
pub fn flop_estimate(method: Method, n: &[usize], c: &[usize]) -> f64 {
    let prod = |v: &[usize]| v.iter().map(|&x| x as f64).product::<f64>();
    match method {
        Method::Cmd => prod(n).powi(3),
        Method::StepwiseCmd => prod(n) * n.iter().map(|&x| x as f64).sum::<f64>(),
        Method::Circulant => prod(c) * prod(c).log2(),
        Method::Realization => prod(n),
    }
}

/// Stationary output covariance of W driven by unit white noise, lags 0..=max_lag,
/// from a long impulse response.
pub fn arma_covariance(filter: &RationalFilter1D, max_lag: usize) -> Vec<f64> {
    let mut len = 1024usize;
    loop {
        let h = filter.impulse_response(len + max_lag);
        let peak = h.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let tail = h[len..].iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if tail <= 1e-18 * peak || len >= 1 << 22 {
            return (0..=max_lag)
                .map(|k| h.iter().zip(&h[k..]).map(|(a, b)| a * b).sum())
                .collect();
        }
        len *= 2;
    }
}

/// Exact covariance of samples burn_in..burn_in+n of a zero-initial-condition filter output.
pub fn truncated_filter_covariance(filter: &RationalFilter1D, burn_in: usize, n: usize) -> DMatrix<f64> {
    let h = filter.impulse_response(burn_in + n);
    DMatrix::from_fn(n, n, |i, j| {
        let (s, t) = (burn_in + i.min(j), burn_in + i.max(j));
        // y(s) = Σ_{u ≤ s} h(s−u) w(u)
        (0..=s).map(|u| h[s - u] * h[t - u]).sum()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::Kernel1D;

    fn exp_model(t: &[f64]) -> CovarianceModel {
        let k = Kernel1D::exponential(1.0, 1.0).unwrap();
        CovarianceModel::new(vec![k; t.len()], t.to_vec()).unwrap()
    }

    #[test]
    fn small_matrices() {
        let m = exp_model(&[0.3]);
        let c = build_cov_matrix(&m, &[2]).unwrap();
        let r = (-0.3f64).exp();
        assert!((c.data[(0, 1)] - r).abs() < 1e-15 && c.data[(0, 0)] == 1.0);
        let one = build_cov_matrix(&exp_model(&[0.3, 0.4]), &[1, 1]).unwrap();
        assert_eq!(one.data.nrows(), 1);
        assert_eq!(one.data[(0, 0)], 1.0);
    }

    #[test]
    fn kronecker_matches_elementwise() {
        let m = exp_model(&[0.3, 0.5]);
        let k = build_cov_matrix(&m, &[2, 3]).unwrap().data;
        let e = build_cov_matrix_elementwise(&m, &[2, 3]).unwrap();
        assert!((k - e).abs().max() < 1e-14);
    }

    #[test]
    fn cap_enforced() {
        let m = exp_model(&[0.1, 0.1]);
        assert!(matches!(build_cov_matrix_capped(&m, &[10, 10], 50), Err(GrfError::SizeCap { .. })));
    }

    #[test]
    fn two_by_two_cholesky() {
        let r = 0.6f64;
        let l = cholesky_lower(&DMatrix::from_row_slice(2, 2, &[1.0, r, r, 1.0])).unwrap();
        assert!((l[(1, 0)] - r).abs() < 1e-15);
        assert!((l[(1, 1)] - (1.0 - r * r).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn identity_cmd_is_noise() {
        let cov = CovMatrix { data: DMatrix::identity(5, 5), structure: Structure::Dense };
        assert_eq!(cmd_sample(&cov, 4).unwrap(), white_noise(&[5], 4).unwrap().data);
    }

    #[test]
    fn estimator_edge_cases() {
        let f = FieldGrid {
            n: vec![3, 4],
            t: vec![1.0, 1.0],
            data: vec![2.0; 12],
            meta: FieldMeta { seed: 0, scale_level: 0, generator: String::new() },
        };
        assert_eq!(sample_covariance(&f, &[0, 0]).unwrap(), 4.0);
        assert!((sample_covariance(&f, &[1, 2]).unwrap() - 4.0 * 4.0 / 12.0).abs() < 1e-15);
        assert!(sample_covariance(&f, &[3, 0]).is_err());
    }

    #[test]
    fn table_one_values() {
        let n = [100, 100, 100];
        assert_eq!(flop_estimate(Method::Cmd, &n, &[]), 1e18);
        assert_eq!(flop_estimate(Method::StepwiseCmd, &n, &[]), 3e8);
        assert_eq!(flop_estimate(Method::Realization, &n, &[]), 1e6);
        let c = flop_estimate(Method::Circulant, &[], &[512, 512, 512]);
        assert_eq!(format!("{c:.2e}"), "3.62e9");
    }

    #[test]
    fn ar1_arma_covariance() {
        let f = crate::spectral::ar1_filter_exponential(1.0, 1.0, 0.1).unwrap();
        let c = arma_covariance(&f, 5);
        for (k, v) in c.iter().enumerate() {
            assert!((v - (-0.1 * k as f64).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn directions() {
        assert_eq!(Direction::parse("z"), Some(Direction::Axis(2)));
        assert_eq!(Direction::parse("axis4"), Some(Direction::Axis(4)));
        assert_eq!(Direction::parse("q"), None);
        assert!(Direction::Axis(2).lag_vector(2, 1).is_err());
    }
}
