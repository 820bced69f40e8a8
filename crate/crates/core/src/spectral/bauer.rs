//! Spectral factorization of a positive trigonometric polynomial by the Bauer method.
//!
//! The Cholesky factor of the banded Toeplitz matrix of Q has rows whose trailing
//! band converges geometrically to the minimum-phase factor (reversed). Rows are
//! produced incrementally, so doubling the truncation only costs the new rows, and only
//! the last m rows are held in memory.

use std::collections::{BTreeMap, VecDeque};

use super::dd::{cos_table, div, dd, eval_cos_poly, to_f64, DD};
use crate::error::{GrfError, Result};

pub const DEFAULT_TRUNC_N: usize = 512;
pub const MAX_TRUNC_N: usize = 1 << 20;

/// Factor a_0..a_m (a_0 > 0) with a(z)a(1/z) = Q, computed in double-double.
pub fn bauer_factorize_dd(q: &[DD], trunc_n: usize, tol: f64) -> Result<Vec<DD>> {
    let m = q.len().checked_sub(1).ok_or_else(|| GrfError::InvalidParameter("empty polynomial".into()))?;
    if m == 0 {
        if !(q[0].hi() > 0.0) {
            return Err(GrfError::Domain("Q is not positive".into()));
        }
        return Ok(vec![q[0].sqrt()]);
    }
    let table = cos_table(1024.max(64 * m));
    if eval_cos_poly(q, &table).iter().any(|v| !(v.hi() > 0.0)) {
        return Err(GrfError::Domain("Q is not positive on the unit circle".into()));
    }
    let mut n_check = trunc_n.max(4 * (m + 1)).next_power_of_two();
    // window holds the last m rows, row[k] = L[i][i-k]; rows with index 2^p − 1 are kept for the
    // convergence test
    let mut window: VecDeque<Vec<DD>> = VecDeque::with_capacity(m + 1);
    let mut saved: BTreeMap<usize, Vec<DD>> = BTreeMap::new();
    let mut i = 0usize;
    loop {
        while i < n_check {
            let first = i - window.len();
            let mut row = vec![dd(0.0); m + 1];
            let lo = i.saturating_sub(m);
            for j in lo..=i {
                // L[i][j] = (T[i][j] − Σ_{k<j} L[i][k]L[j][k]) / L[j][j]
                let mut s = q[i - j];
                let kmin = lo.max(j.saturating_sub(m));
                for kk in kmin..j {
                    let ljk = if j == i { row[i - kk] } else { window[j - first][j - kk] };
                    s -= row[i - kk] * ljk;
                }
                if j == i {
                    if !(s.hi() > 0.0) {
                        return Err(GrfError::Domain("Toeplitz matrix of Q lost positive definiteness".into()));
                    }
                    row[0] = s.sqrt();
                } else {
                    row[i - j] = div(s, window[j - first][0]);
                }
            }
            if (i + 1).is_power_of_two() {
                saved.insert(i, row.clone());
            }
            if window.len() == m {
                window.pop_front();
            }
            window.push_back(row);
            i += 1;
        }
        let last = &saved[&(n_check - 1)];
        let scale = last.iter().map(|v| to_f64(*v).abs()).fold(0.0, f64::max);
        let diff = row_gap(&saved, n_check);
        // the gap to row N/2 is about the error at N/2; with geometric decay the error
        // at N is that gap times the contraction seen over the previous doubling
        let contraction = diff / row_gap(&saved, n_check / 2);
        let extrapolated = if contraction < 0.5 { diff * contraction * contraction } else { diff };
        if diff <= tol * scale || extrapolated <= tol * scale {
            let a = last.clone();
            check_reconstruction(&a, q, tol.max(1e-12))?;
            return Ok(a);
        }
        if n_check >= MAX_TRUNC_N {
            return Err(GrfError::FactorNotConverged { trunc_n: n_check });
        }
        n_check *= 2;
    }
}

/// max |row N−1 − row N/2−1| (infinite when either row is missing).
fn row_gap(saved: &BTreeMap<usize, Vec<DD>>, n: usize) -> f64 {
    match (n.checked_sub(1).and_then(|k| saved.get(&k)), (n / 2).checked_sub(1).and_then(|k| saved.get(&k))) {
        (Some(a), Some(b)) if n >= 4 => a.iter().zip(b).map(|(x, y)| to_f64(*x - *y).abs()).fold(0.0, f64::max),
        _ => f64::INFINITY,
    }
}

fn check_reconstruction(a: &[DD], q: &[DD], tol: f64) -> Result<()> {
    let scale = q.iter().map(|v| to_f64(*v).abs()).fold(0.0, f64::max);
    for k in 0..q.len() {
        let mut s = dd(0.0);
        for j in 0..a.len() - k {
            s += a[j] * a[j + k];
        }
        let err = to_f64(s - q[k]).abs();
        if err > 10.0 * tol * scale {
            return Err(GrfError::Domain(format!(
                "factor does not reproduce Q at lag {k} (error {err:.3e})"
            )));
        }
    }
    Ok(())
}

/// f64 front end of [`bauer_factorize_dd`].
pub fn bauer_factorize(q: &[f64], trunc_n: usize, tol: f64) -> Result<Vec<f64>> {
    let qd: Vec<DD> = q.iter().map(|&v| dd(v)).collect();
    Ok(bauer_factorize_dd(&qd, trunc_n, tol)?.into_iter().map(to_f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial() {
        assert_eq!(bauer_factorize(&[1.0], 512, 1e-10).unwrap(), vec![1.0]);
    }

    #[test]
    fn first_order() {
        let a = bauer_factorize(&[1.25, -0.5], 512, 1e-10).unwrap();
        assert!((a[0] - 1.0).abs() < 1e-12);
        assert!((a[1] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive() {
        assert!(bauer_factorize(&[1.0, 0.6], 512, 1e-10).is_err());
    }

    #[test]
    fn root_very_close_to_the_circle() {
        // error decays like r^(2N): needs a band of a few ten thousand rows
        let r = 0.9995;
        let f = bauer_factorize(&[1.0 + r * r, -r], 512, 1e-10).unwrap();
        assert!((f[1] + r).abs() < 1e-8, "{f:?}");
    }

    #[test]
    fn near_unit_root_needs_longer_band() {
        // root at 0.99: the band converges like 0.99^N
        let a = [1.0, -0.99];
        let q = [1.0 + 0.99 * 0.99, -0.99];
        let f = bauer_factorize(&q, 512, 1e-10).unwrap();
        assert!((f[0] - a[0]).abs() < 1e-8 && (f[1] - a[1]).abs() < 1e-8);
    }
}
