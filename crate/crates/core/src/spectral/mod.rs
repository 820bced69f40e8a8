//! Per-dimension shaping filters: closed-form AR(1) for exponential kernels and
//! maximum-entropy ARMA (dual Newton + Bauer factorization) for everything else.

mod bauer;
pub mod dd;
mod dual;
pub mod poly;

use std::fmt::Write as _;

pub use bauer::{bauer_factorize, bauer_factorize_dd, DEFAULT_TRUNC_N, MAX_TRUNC_N};
pub use dual::{
    default_grid_size, dual_gradient_hessian, me_dual_solve, me_dual_solve_with, DualOptions, DualStart,
    MESolveReport,
};
pub use twofloat::TwoFloat;

use crate::covariance::{dominant_lag_count, sampled_sequence, Kernel1D, KernelKind};
use crate::error::{GrfError, Result};
use dd::{dd, div, to_f64, DD};

/// Minimum-phase shaping filter W(z) = b(z)/a(z) with a_0 = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalFilter1D {
    pub b: Vec<f64>,
    pub a: Vec<f64>,
}

impl RationalFilter1D {
    pub fn new(b: Vec<f64>, a: Vec<f64>) -> Result<Self> {
        let f = Self { b, a };
        f.validate()?;
        Ok(f)
    }

    /// AR order m.
    pub fn m(&self) -> usize {
        self.a.len() - 1
    }

    /// MA order n.
    pub fn n(&self) -> usize {
        self.b.len() - 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.a.is_empty() || self.b.is_empty() {
            return Err(GrfError::InvalidParameter("filter polynomials must be non-empty".into()));
        }
        if self.a[0] != 1.0 {
            return Err(GrfError::InvalidParameter(format!("a_0 must be 1, got {}", self.a[0])));
        }
        if self.a.iter().chain(&self.b).any(|v| !v.is_finite()) {
            return Err(GrfError::InvalidParameter("non-finite filter coefficient".into()));
        }
        if !self.is_stable() {
            return Err(GrfError::Unstable(format!("denominator {:?} has a root on or outside the unit circle", self.a)));
        }
        Ok(())
    }

    pub fn is_stable(&self) -> bool {
        poly::is_stable(&self.a)
    }

    pub fn is_minimum_phase(&self) -> bool {
        poly::max_root_modulus(&self.b) <= 1.0 + 1e-9
    }

    /// |W(e^{iθ})|².
    pub fn power_response(&self, theta: f64) -> f64 {
        abs2(&self.b, theta) / abs2(&self.a, theta)
    }

    /// First `len` samples of the impulse response.
    pub fn impulse_response(&self, len: usize) -> Vec<f64> {
        let mut h = vec![0.0; len];
        for i in 0..len {
            let mut v = if i < self.b.len() { self.b[i] } else { 0.0 };
            for k in 1..self.a.len().min(i + 1) {
                v -= self.a[k] * h[i - k];
            }
            h[i] = v;
        }
        h
    }

    /// One line per polynomial: `a: 1 -0.92…` / `b: 0.39…`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (name, c) in [("a", &self.a), ("b", &self.b)] {
            s.push_str(name);
            s.push(':');
            for v in c.iter() {
                let _ = write!(s, " {v:e}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut a = None;
        let mut b = None;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (key, rest) = line
                .split_once(':')
                .ok_or_else(|| GrfError::InvalidParameter(format!("malformed filter line `{line}`")))?;
            let vals = rest
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| GrfError::InvalidParameter(format!("`{t}`: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            match key.trim() {
                "a" => a = Some(vals),
                "b" => b = Some(vals),
                other => return Err(GrfError::InvalidParameter(format!("unknown polynomial `{other}`"))),
            }
        }
        match (b, a) {
            (Some(b), Some(a)) => Self::new(b, a),
            _ => Err(GrfError::InvalidParameter("filter text needs both `a:` and `b:` lines".into())),
        }
    }
}

fn abs2(c: &[f64], theta: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (k, &ck) in c.iter().enumerate() {
        let (s, co) = (k as f64 * theta).sin_cos();
        re += ck * co;
        im -= ck * s;
    }
    re * re + im * im
}

/// Rational spectrum P/Q in the cosine basis; Q is kept in double-double.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDensity1D {
    pub p: Vec<f64>,
    pub q: Vec<TwoFloat>,
}

impl SpectralDensity1D {
    /// P/Q at θ, with Q summed in double-double.
    pub fn eval(&self, theta: f64) -> f64 {
        let th = dd(theta);
        let cos_sum = |c: &[DD]| {
            let mut acc = c[0];
            for (k, &ck) in c.iter().enumerate().skip(1) {
                acc += dd(2.0) * ck * (dd(k as f64) * th).cos();
            }
            acc
        };
        let p: Vec<DD> = self.p.iter().map(|&v| dd(v)).collect();
        to_f64(div(cos_sum(&p), cos_sum(&self.q)))
    }

    /// P/Q at θ_i = 2πi/n for i in 0..n.
    pub fn values_on_grid(&self, n: usize) -> Vec<f64> {
        let table = dd::cos_table(n);
        let p: Vec<DD> = self.p.iter().map(|&v| dd(v)).collect();
        let pg = dd::eval_cos_poly(&p, &table);
        let qg = dd::eval_cos_poly(&self.q, &table);
        pg.into_iter().zip(qg).map(|(a, b)| to_f64(div(a, b))).collect()
    }

    /// Moments (1/n)Σ Φ(θ_i)cos(kθ_i), k = 0..=m, on an n-point grid.
    pub fn moments(&self, m: usize, n: usize) -> Vec<f64> {
        let table = dd::cos_table(n);
        let vals = self.values_on_grid(n);
        (0..=m)
            .map(|k| {
                let mut acc = dd(0.0);
                for (i, &v) in vals.iter().enumerate() {
                    acc += table[(k * i) % n] * v;
                }
                to_f64(acc / n as f64)
            })
            .collect()
    }
}

pub fn ar1_filter_exponential(sigma2: f64, alpha: f64, t: f64) -> Result<RationalFilter1D> {
    for (name, v) in [("sigma2", sigma2), ("alpha", alpha), ("T", t)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(GrfError::InvalidParameter(format!("{name} must be > 0, got {v}")));
        }
    }
    let r = (-alpha * t).exp();
    // 1 − e^{−2αT} via expm1 keeps full accuracy when αT is small
    let c = (sigma2 * -(-2.0 * alpha * t).exp_m1()).sqrt();
    RationalFilter1D::new(vec![c], vec![1.0, -r])
}

/// Closed-form lag-k covariance c²r^|k|/(1−r²) of an AR(1) filter a = [1, −r], b = [c].
pub fn analytic_ar1_covariance(filter: &RationalFilter1D, k: i64) -> Result<f64> {
    if filter.m() != 1 || filter.n() != 0 {
        return Err(GrfError::InvalidParameter(format!(
            "expected an AR(1) filter, got orders ({}, {})",
            filter.m(),
            filter.n()
        )));
    }
    let r = -filter.a[1];
    if !(r.abs() < 1.0) {
        return Err(GrfError::Unstable(format!("AR(1) pole {r} is not inside the unit circle")));
    }
    let c = filter.b[0];
    Ok(c * c * r.powi(k.unsigned_abs() as i32) / (1.0 - r * r))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOptions {
    /// Numerator b(z) of the ARMA model; default pure AR.
    pub b: Vec<f64>,
    pub m: Option<usize>,
    pub threshold: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub start: DualStart,
}

impl Default for FilterOptions {
    fn default() -> Self {
        Self { b: vec![1.0], m: None, threshold: 1e-3, tol: 1e-10, max_iter: 200, start: DualStart::Levinson }
    }
}

/// A filter together with the spectrum and solver report it came from.
#[derive(Debug, Clone)]
pub struct FilterDesign {
    pub filter: RationalFilter1D,
    /// Covariance moments the filter was fitted to.
    pub cov_seq: Vec<f64>,
    pub density: Option<SpectralDensity1D>,
    pub report: Option<MESolveReport>,
}

pub fn build_filter(kernel: &Kernel1D, t: f64, opts: &FilterOptions) -> Result<RationalFilter1D> {
    Ok(design_filter(kernel, t, opts)?.filter)
}

pub fn design_filter(kernel: &Kernel1D, t: f64, opts: &FilterOptions) -> Result<FilterDesign> {
    kernel.validate()?;
    // an explicit order other than 1 asks for the moment-matched design instead of the exact AR(1)
    if kernel.kind == KernelKind::Exponential && matches!(opts.m, None | Some(1)) {
        let filter = ar1_filter_exponential(kernel.sigma2, kernel.alpha, t)?;
        let cov_seq = sampled_sequence(kernel, t, 1)?;
        return Ok(FilterDesign { filter, cov_seq, density: None, report: None });
    }
    let b = &opts.b;
    if b.is_empty() || b[0] == 0.0 || b.iter().any(|v| !v.is_finite()) {
        return Err(GrfError::InvalidParameter(format!("numerator {b:?} must be finite with b_0 ≠ 0")));
    }
    if poly::max_root_modulus(b) > 1.0 + 1e-9 {
        return Err(GrfError::InvalidParameter(format!("numerator {b:?} is not minimum phase")));
    }
    let m = match opts.m {
        Some(m) => m,
        None => {
            let seq = sampled_sequence(kernel, t, scan_length(kernel, t, opts.threshold))?;
            dominant_lag_count(&seq, opts.threshold)?
        }
    };
    let cov_seq = sampled_sequence(kernel, t, m)?;
    let p = poly::autocorr(b);
    let dopts = DualOptions {
        grid_size: default_grid_size(m),
        tol: opts.tol,
        max_iter: opts.max_iter,
        start: opts.start,
    };
    let (q, report) = me_dual_solve_with(&cov_seq, &p, &dopts)?;
    let a_raw = bauer_factorize_dd(&q, DEFAULT_TRUNC_N, 1e-10)?;
    // absorb the gain into b so that a is monic
    let a0 = a_raw[0];
    let a: Vec<f64> = a_raw.iter().map(|&v| to_f64(div(v, a0))).collect();
    let bn: Vec<f64> = b.iter().map(|&v| to_f64(div(dd(v), a0))).collect();
    let filter = RationalFilter1D::new(bn, a)?;
    Ok(FilterDesign { filter, cov_seq, density: Some(SpectralDensity1D { p, q }), report: Some(report) })
}

// enough lags to see the tail drop below the threshold
fn scan_length(kernel: &Kernel1D, t: f64, threshold: f64) -> usize {
    match kernel.kind {
        KernelKind::Custom => kernel.custom_seq.as_ref().map_or(0, |s| s.len() - 1),
        KernelKind::Gaussian => {
            let k = ((1.0 / threshold).ln() / (kernel.alpha * t * t)).sqrt();
            (k.ceil() as usize + 8).min(100_000)
        }
        KernelKind::Exponential => {
            let k = (1.0 / threshold).ln() / (kernel.alpha * t);
            (k.ceil() as usize + 8).min(100_000)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ar1_examples() {
        let f = ar1_filter_exponential(1.0, 1.0, 1.0 / 12.0).unwrap();
        assert!((f.a[1] + 0.920044).abs() < 1e-6);
        assert!((f.b[0] - 0.391814).abs() < 1e-6);
        let v = f.b[0] * f.b[0] / (1.0 - f.a[1] * f.a[1]);
        assert!((v - 1.0).abs() < 1e-14);

        let w = ar1_filter_exponential(1.0, 1.0, 20.0).unwrap();
        assert!(w.a[1].abs() < 3e-9 && (w.b[0] - 1.0).abs() < 1e-15);

        let f4 = ar1_filter_exponential(4.0, 0.7, 0.3).unwrap();
        assert!((analytic_ar1_covariance(&f4, 0).unwrap() - 4.0).abs() < 1e-13);
    }

    #[test]
    fn ar1_covariance_examples() {
        let white = RationalFilter1D::new(vec![1.0], vec![1.0, 0.0]).unwrap();
        assert_eq!(analytic_ar1_covariance(&white, 0).unwrap(), 1.0);
        let h = RationalFilter1D::new(vec![1.0], vec![1.0, -0.5]).unwrap();
        assert!((analytic_ar1_covariance(&h, 2).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(analytic_ar1_covariance(&RationalFilter1D { b: vec![1.0], a: vec![1.0, -1.0] }, 0).is_err());
    }

    #[test]
    fn rejects_unstable() {
        assert!(RationalFilter1D::new(vec![1.0], vec![1.0, -1.01]).is_err());
        assert!(RationalFilter1D::new(vec![1.0], vec![2.0, -0.5]).is_err());
    }

    #[test]
    fn text_round_trip() {
        let f = ar1_filter_exponential(1.0, 1.0, 0.1).unwrap();
        let back = RationalFilter1D::from_text(&f.to_text()).unwrap();
        assert_eq!(f, back);
        assert!(f.to_text().starts_with("a: 1e0 "));
    }

    #[test]
    fn exponential_dispatch() {
        let k = Kernel1D::exponential(2.0, 1.5).unwrap();
        let f = build_filter(&k, 0.2, &FilterOptions::default()).unwrap();
        assert_eq!(f, ar1_filter_exponential(2.0, 1.5, 0.2).unwrap());
    }

    #[test]
    fn custom_yule_walker() {
        let k = Kernel1D::custom(vec![1.0, 0.5]).unwrap();
        let f = build_filter(&k, 1.0, &FilterOptions::default()).unwrap();
        assert!((f.a[1] + 0.5).abs() < 1e-10, "{f:?}");
        assert!((f.b[0] - 0.75f64.sqrt()).abs() < 1e-10);
        assert!((analytic_ar1_covariance(&f, 1).unwrap() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn white_custom() {
        let k = Kernel1D::custom(vec![4.0]).unwrap();
        let f = build_filter(&k, 1.0, &FilterOptions::default()).unwrap();
        assert_eq!(f.a, vec![1.0]);
        assert!((f.b[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn non_minimum_phase_numerator_rejected() {
        let k = Kernel1D::gaussian(1.0, 1.0).unwrap();
        let opts = FilterOptions { b: vec![1.0, -2.0], ..Default::default() };
        assert!(build_filter(&k, 0.2, &opts).is_err());
    }

    #[test]
    fn impulse_of_ar1() {
        let f = RationalFilter1D::new(vec![0.5], vec![1.0, -0.8]).unwrap();
        let h = f.impulse_response(5);
        for (k, v) in h.iter().enumerate() {
            assert!((v - 0.5 * 0.8f64.powi(k as i32)).abs() < 1e-15);
        }
    }
}
