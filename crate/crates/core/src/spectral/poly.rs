//! Small real-polynomial utilities: Levinson recursion, step-down stability test,
//! autocorrelation of coefficient vectors, root moduli.

use nalgebra::DMatrix;

use crate::error::{GrfError, Result};

/// Levinson–Durbin on r_0..r_m. Returns monic a and the final prediction error.
///
/// Fails with `Infeasible` when the Toeplitz matrix of `r` is not positive definite.
pub fn levinson(r: &[f64]) -> Result<(Vec<f64>, f64)> {
    let m = r.len().saturating_sub(1);
    if r.is_empty() || !(r[0] > 0.0) {
        return Err(GrfError::Infeasible { lag: 0 });
    }
    let mut a = vec![1.0];
    let mut err = r[0];
    for k in 1..=m {
        let acc: f64 = (0..k).map(|j| a[j] * r[k - j]).sum();
        let gamma = -acc / err;
        if !(gamma.abs() < 1.0) {
            return Err(GrfError::Infeasible { lag: k });
        }
        let mut next = a.clone();
        next.push(0.0);
        for j in 1..=k {
            next[j] += gamma * a[k - j];
        }
        a = next;
        err *= 1.0 - gamma * gamma;
        if !(err > 0.0) {
            return Err(GrfError::Infeasible { lag: k });
        }
    }
    Ok((a, err))
}

/// Reflection coefficients by the step-down recursion, or None when some |γ| ≥ 1.
pub fn step_down(a: &[f64]) -> Option<Vec<f64>> {
    if a.is_empty() || a[0] == 0.0 {
        return None;
    }
    let mut cur: Vec<f64> = a.iter().map(|v| v / a[0]).collect();
    let mut gammas = Vec::with_capacity(cur.len().saturating_sub(1));
    while cur.len() > 1 {
        let k = cur.len() - 1;
        let g = cur[k];
        if !(g.abs() < 1.0) {
            return None;
        }
        let scale = 1.0 - g * g;
        let next: Vec<f64> = (0..k).map(|j| (cur[j] - g * cur[k - j]) / scale).collect();
        gammas.push(g);
        cur = next;
    }
    gammas.reverse();
    Some(gammas)
}

/// True when every root of z^m a(z) lies strictly inside the unit circle.
pub fn is_stable(a: &[f64]) -> bool {
    step_down(a).is_some()
}

/// Σ_j c_j c_{j+k} for k = 0..len-1.
pub fn autocorr(c: &[f64]) -> Vec<f64> {
    (0..c.len())
        .map(|k| c.iter().zip(&c[k..]).map(|(x, y)| x * y).sum())
        .collect()
}

/// Largest root modulus of z^n c(z) = c_0 z^n + c_1 z^{n-1} + … + c_n.
pub fn max_root_modulus(c: &[f64]) -> f64 {
    let mut c = c.to_vec();
    while c.len() > 1 && *c.last().unwrap() == 0.0 {
        c.pop();
    }
    let n = c.len() - 1;
    if n == 0 {
        return 0.0;
    }
    let mut comp = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        comp[(0, j)] = -c[j + 1] / c[0];
    }
    for i in 1..n {
        comp[(i, i - 1)] = 1.0;
    }
    comp.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levinson_ar1() {
        let r = 0.7f64;
        let (a, e) = levinson(&[1.0, r, r * r, r * r * r]).unwrap();
        assert!((a[1] + r).abs() < 1e-15);
        assert!(a[2].abs() < 1e-15 && a[3].abs() < 1e-15);
        assert!((e - (1.0 - r * r)).abs() < 1e-15);
    }

    #[test]
    fn levinson_rejects_indefinite() {
        assert!(matches!(levinson(&[1.0, 1.0]), Err(GrfError::Infeasible { lag: 1 })));
        assert!(levinson(&[1.0, 0.9, -0.9]).is_err());
    }

    #[test]
    fn stability() {
        assert!(is_stable(&[1.0, -0.9]));
        assert!(!is_stable(&[1.0, -1.1]));
        // (1 - 0.5z^-1)(1 - 0.8z^-1)
        assert!(is_stable(&[1.0, -1.3, 0.4]));
        // (1 - 0.5z^-1)(1 - 1.2z^-1)
        assert!(!is_stable(&[1.0, -1.7, 0.6]));
    }

    #[test]
    fn roots() {
        assert!((max_root_modulus(&[1.0, -0.2]) - 0.2).abs() < 1e-14);
        assert!((max_root_modulus(&[1.0, -1.7, 0.6]) - 1.2).abs() < 1e-12);
        assert_eq!(max_root_modulus(&[3.0]), 0.0);
    }

    #[test]
    fn autocorrelation() {
        assert_eq!(autocorr(&[1.0, -0.5]), vec![1.25, -0.5]);
    }
}
