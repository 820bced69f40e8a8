//! JSON documents: filter descriptions and run manifests.

use std::path::{Path, PathBuf};

use grf_core::covariance::{CovarianceModel, Kernel1D, KernelKind};
use grf_core::spectral::{FilterDesign, RationalFilter1D};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::format::write_atomic;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelDoc {
    /// "exp" or "gauss".
    pub kind: String,
    pub sigma2: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDoc {
    pub kernels: Vec<KernelDoc>,
    #[serde(rename = "T")]
    pub t: Vec<f64>,
}

impl ModelDoc {
    pub fn from_model(m: &CovarianceModel) -> CliResult<Self> {
        let kernels = m
            .kernels
            .iter()
            .map(|k| {
                let kind = match k.kind {
                    KernelKind::Exponential => "exp",
                    KernelKind::Gaussian => "gauss",
                    KernelKind::Custom => return Err(CliError::Usage("custom kernels have no document form".into())),
                };
                Ok(KernelDoc { kind: kind.into(), sigma2: k.sigma2, alpha: k.alpha })
            })
            .collect::<CliResult<_>>()?;
        Ok(Self { kernels, t: m.t.clone() })
    }

    pub fn to_model(&self) -> CliResult<CovarianceModel> {
        let kernels = self
            .kernels
            .iter()
            .map(|k| match k.kind.as_str() {
                "exp" => Ok(Kernel1D::exponential(k.sigma2, k.alpha)?),
                "gauss" => Ok(Kernel1D::gaussian(k.sigma2, k.alpha)?),
                other => Err(CliError::Format(format!("unknown kernel kind {other:?}"))),
            })
            .collect::<CliResult<_>>()?;
        Ok(CovarianceModel::new(kernels, self.t.clone())?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterDoc {
    pub kernel: KernelDoc,
    #[serde(rename = "T")]
    pub t: f64,
    /// Denominator order.
    pub m: usize,
    /// Numerator order.
    pub n: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov_seq: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moment_residuals: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dual_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_gradient_norm: Option<f64>,
}

impl FilterDoc {
    pub fn from_design(kernel: &Kernel1D, t: f64, d: &FilterDesign) -> CliResult<Self> {
        let kdoc = ModelDoc::from_model(&CovarianceModel::new(vec![kernel.clone()], vec![t])?)?.kernels.remove(0);
        let r = d.report.as_ref();
        Ok(Self {
            kernel: kdoc,
            t,
            m: d.filter.m(),
            n: d.filter.n(),
            a: d.filter.a.clone(),
            b: d.filter.b.clone(),
            cov_seq: Some(d.cov_seq.clone()),
            moment_residuals: r.map(|r| r.moment_residuals.clone()),
            dual_iterations: r.map(|r| r.iterations),
            final_gradient_norm: r.map(|r| r.final_gradient_norm),
        })
    }

    pub fn filter(&self) -> CliResult<RationalFilter1D> {
        Ok(RationalFilter1D::new(self.b.clone(), self.a.clone())?)
    }
}

/// Everything needed to rerun a command and locate its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Full command line, program name excluded.
    pub argv: Vec<String>,
    pub model: ModelDoc,
    #[serde(rename = "N")]
    pub n: Vec<usize>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Numerator shared by the ARMA filters.
    pub numerator: Vec<f64>,
    pub filter_orders: Vec<usize>,
    pub filters: Vec<FilterDoc>,
    pub scale_level: u32,
    /// Paths relative to the manifest's directory unless absolute.
    pub field: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<String>,
    pub field_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    /// Largest |fine − coarse| at coarse points, for refinement outputs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interpolation_error: Option<f64>,
    pub created_unix: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Manifest {
    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        write_json(path, self)
    }

    pub fn resolve(&self, manifest_path: &Path, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            manifest_path.parent().unwrap_or(Path::new("")).join(p)
        }
    }
}

/// How `target` should be recorded in a manifest stored at `manifest`.
pub fn relative_to_manifest(manifest: &Path, target: &Path) -> String {
    let same_dir = manifest.parent().unwrap_or(Path::new("")) == target.parent().unwrap_or(Path::new(""));
    match target.file_name() {
        Some(name) if same_dir => name.to_string_lossy().into_owned(),
        _ => std::path::absolute(target).unwrap_or_else(|_| target.to_path_buf()).display().to_string(),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Format(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn now_unix() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_round_trip() {
        let m = CovarianceModel::new(
            vec![Kernel1D::exponential(2.0, 1.0).unwrap(), Kernel1D::gaussian(1.0, 0.5).unwrap()],
            vec![0.1, 0.2],
        )
        .unwrap();
        let doc = ModelDoc::from_model(&m).unwrap();
        let text = serde_json::to_string(&doc).unwrap();
        assert!(text.contains("\"T\""));
        let back: ModelDoc = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_model().unwrap(), m);
    }

    #[test]
    fn sibling_paths_are_relative() {
        assert_eq!(relative_to_manifest(Path::new("out/a.json"), Path::new("out/a.grf")), "a.grf");
        assert!(Path::new(&relative_to_manifest(Path::new("x/a.json"), Path::new("y/a.grf"))).is_absolute());
    }
}
