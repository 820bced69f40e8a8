//! Separable covariance kernels and their sampled sequences.

use crate::error::{GrfError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Exponential,
    Gaussian,
    Custom,
}

/// One-dimensional stationary covariance kernel.
///
/// Custom kernels are given as a finite sequence at integer lags; lags past the
/// end evaluate to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel1D {
    pub kind: KernelKind,
    pub sigma2: f64,
    pub alpha: f64,
    pub custom_seq: Option<Vec<f64>>,
}

impl Kernel1D {
    pub fn exponential(sigma2: f64, alpha: f64) -> Result<Self> {
        let k = Self { kind: KernelKind::Exponential, sigma2, alpha, custom_seq: None };
        k.validate()?;
        Ok(k)
    }

    pub fn gaussian(sigma2: f64, alpha: f64) -> Result<Self> {
        let k = Self { kind: KernelKind::Gaussian, sigma2, alpha, custom_seq: None };
        k.validate()?;
        Ok(k)
    }

    pub fn custom(seq: Vec<f64>) -> Result<Self> {
        let sigma2 = seq.first().copied().unwrap_or(f64::NAN);
        let k = Self { kind: KernelKind::Custom, sigma2, alpha: 0.0, custom_seq: Some(seq) };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            KernelKind::Exponential | KernelKind::Gaussian => {
                if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
                    return Err(GrfError::InvalidParameter(format!("sigma2 must be > 0, got {}", self.sigma2)));
                }
                if !(self.alpha > 0.0 && self.alpha.is_finite()) {
                    return Err(GrfError::InvalidParameter(format!("alpha must be > 0, got {}", self.alpha)));
                }
            }
            KernelKind::Custom => {
                let seq = self
                    .custom_seq
                    .as_ref()
                    .ok_or_else(|| GrfError::InvalidParameter("custom kernel without a sequence".into()))?;
                let s0 = *seq
                    .first()
                    .ok_or_else(|| GrfError::InvalidParameter("custom sequence is empty".into()))?;
                if !(s0 > 0.0 && s0.is_finite()) {
                    return Err(GrfError::InvalidParameter(format!("custom seq[0] must be > 0, got {s0}")));
                }
                if let Some(bad) = seq.iter().position(|v| !v.is_finite() || v.abs() > s0) {
                    return Err(GrfError::InvalidParameter(format!(
                        "custom seq[{bad}] = {} exceeds seq[0] in magnitude",
                        seq[bad]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Decoupled covariance: the product of one kernel per dimension, each sampled at spacing `t[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceModel {
    pub kernels: Vec<Kernel1D>,
    pub t: Vec<f64>,
}

impl CovarianceModel {
    pub fn new(kernels: Vec<Kernel1D>, t: Vec<f64>) -> Result<Self> {
        if kernels.is_empty() {
            return Err(GrfError::InvalidParameter("model needs at least one dimension".into()));
        }
        if kernels.len() != t.len() {
            return Err(GrfError::DimensionMismatch { expected: kernels.len(), got: t.len() });
        }
        for k in &kernels {
            k.validate()?;
        }
        if let Some(bad) = t.iter().find(|&&tj| !(tj > 0.0 && tj.is_finite())) {
            return Err(GrfError::InvalidParameter(format!("sampling distance must be > 0, got {bad}")));
        }
        Ok(Self { kernels, t })
    }

    pub fn dims(&self) -> usize {
        self.kernels.len()
    }

    /// Total variance at zero lag.
    pub fn variance(&self) -> f64 {
        self.kernels.iter().map(|k| k.sigma2).product()
    }
}

pub fn eval_kernel(kernel: &Kernel1D, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(GrfError::Domain(format!("lag must be finite, got {x}")));
    }
    let ax = x.abs();
    Ok(match kernel.kind {
        KernelKind::Exponential => kernel.sigma2 * (-kernel.alpha * ax).exp(),
        KernelKind::Gaussian => kernel.sigma2 * (-kernel.alpha * ax * ax).exp(),
        KernelKind::Custom => {
            if ax.fract() != 0.0 {
                return Err(GrfError::Domain(format!("custom kernel is defined at integer lags only, got {x}")));
            }
            let seq = kernel.custom_seq.as_deref().unwrap_or(&[]);
            seq.get(ax as usize).copied().unwrap_or(0.0)
        }
    })
}

/// Covariance at lag `k·t` for `k = 0..=m`.
///
/// Custom kernels ignore `t`: their sequence is already indexed by lag.
pub fn sampled_sequence(kernel: &Kernel1D, t: f64, m: usize) -> Result<Vec<f64>> {
    if !(t > 0.0) {
        return Err(GrfError::InvalidParameter(format!("sampling distance must be > 0, got {t}")));
    }
    kernel.validate()?;
    (0..=m)
        .map(|k| match kernel.kind {
            KernelKind::Custom => eval_kernel(kernel, k as f64),
            _ => eval_kernel(kernel, k as f64 * t),
        })
        .collect()
}

/// Smallest `m ≥ 1` after which every value falls below `rel_threshold·seq[0]`.
pub fn dominant_lag_count(seq: &[f64], rel_threshold: f64) -> Result<usize> {
    let s0 = *seq.first().ok_or_else(|| GrfError::Domain("empty covariance sequence".into()))?;
    if !(s0 > 0.0) {
        return Err(GrfError::Domain(format!("seq[0] must be > 0, got {s0}")));
    }
    if !(rel_threshold > 0.0 && rel_threshold < 1.0) {
        return Err(GrfError::InvalidParameter(format!("threshold must lie in (0,1), got {rel_threshold}")));
    }
    let cut = rel_threshold * s0;
    // last index whose magnitude is still significant
    let last = seq.iter().rposition(|v| v.abs() >= cut).unwrap_or(0);
    Ok(last.max(1).min(seq.len() - 1))
}

pub fn product_covariance(model: &CovarianceModel, k: &[i64]) -> Result<f64> {
    if k.len() != model.dims() {
        return Err(GrfError::DimensionMismatch { expected: model.dims(), got: k.len() });
    }
    let mut acc = 1.0;
    for ((kernel, &t), &kj) in model.kernels.iter().zip(&model.t).zip(k) {
        let x = match kernel.kind {
            KernelKind::Custom => kj as f64,
            _ => kj as f64 * t,
        };
        acc *= eval_kernel(kernel, x)?;
    }
    Ok(acc)
}
