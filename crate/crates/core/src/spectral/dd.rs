//! Double-double helpers for the dual solver and the factorization.
//!
//! The optimal denominator of a smooth spectrum can carry coefficients around
//! 1e11 while the polynomial itself dips to 1e-2 on the unit circle, so its
//! values cancel by roughly 13 digits. Plain f64 cannot resolve that; ~32
//! digits can.

use twofloat::TwoFloat;

pub type DD = TwoFloat;

pub fn dd(x: f64) -> DD {
    TwoFloat::from(x)
}

pub fn to_f64(x: DD) -> f64 {
    x.hi() + x.lo()
}

/// a / b to full double-double accuracy.
///
/// twofloat's DD÷DD forms 1 − b·(1/b) without a fused multiply-add, which caps
/// the quotient at f64 accuracy; long division with exact DD×f64 products does not.
pub fn div(a: DD, b: DD) -> DD {
    let q1 = a.hi() / b.hi();
    let r = a - b * q1;
    let q2 = r.hi() / b.hi();
    let r = r - b * q2;
    let q3 = r.hi() / b.hi();
    DD::new_add(q1, q2) + dd(q3)
}

/// cos(2πj/g) for j in 0..g, accurate to double-double rounding.
pub fn cos_table(g: usize) -> Vec<DD> {
    // the library cos loses a few digits in the low word; the Newton systems
    // downstream are conditioned near 1e17, so do the reduction by hand
    let two_pi = dd(2.0) * twofloat::consts::PI;
    let angle = |num: usize, den: usize| two_pi * dd(num as f64) / den as f64;
    (0..g)
        .map(|j| {
            // cos(2πj/g) with 8j/g folded into [0, 1]
            let jj = if 2 * j > g { g - j } else { j };
            let (num, sign) = if 4 * jj > g { (g - 2 * jj, -1.0) } else { (2 * jj, 1.0) };
            // now cos(2πj/g) = sign·cos(π·num/g), with π·num/g ∈ [0, π/2]
            let v = if 4 * num <= g {
                taylor_cos(angle(num, 2 * g))
            } else {
                taylor_sin(angle(g - 2 * num, 4 * g))
            };
            v * dd(sign)
        })
        .collect()
}

fn taylor_cos(x: DD) -> DD {
    let x2 = x * x;
    let mut term = dd(1.0);
    let mut sum = dd(1.0);
    for n in 1..30 {
        term = -term * x2 / ((2 * n - 1) * (2 * n)) as f64;
        sum += term;
        if term.hi().abs() < 1e-36 {
            break;
        }
    }
    sum
}

fn taylor_sin(x: DD) -> DD {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    for n in 1..30 {
        term = -term * x2 / ((2 * n) * (2 * n + 1)) as f64;
        sum += term;
        if term.hi().abs() < 1e-36 {
            break;
        }
    }
    sum
}

/// Evaluates p_0 + 2Σ p_k cos(kθ_i) on the grid θ_i = 2πi/g.
pub fn eval_cos_poly(coef: &[DD], table: &[DD]) -> Vec<DD> {
    let g = table.len();
    (0..g)
        .map(|i| {
            let mut acc = dd(0.0);
            for (k, &c) in coef.iter().enumerate().skip(1) {
                acc += c * table[(k * i) % g];
            }
            coef[0] + dd(2.0) * acc
        })
        .collect()
}

/// Solves H x = r by Gaussian elimination with partial pivoting. None if H is singular.
///
/// Used for Newton systems whose condition number can approach 1/ε of double-double,
/// where Cholesky's positivity test becomes a coin flip but pivoted elimination still
/// returns a usable descent direction.
pub fn solve(h: &[Vec<DD>], r: &[DD]) -> Option<Vec<DD>> {
    let n = r.len();
    let mut a: Vec<Vec<DD>> = h.iter().map(|row| row.clone()).collect();
    let mut x = r.to_vec();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| {
            to_f64(a[i][col]).abs().total_cmp(&to_f64(a[j][col]).abs())
        })?;
        if to_f64(a[piv][col]) == 0.0 {
            return None;
        }
        a.swap(col, piv);
        x.swap(col, piv);
        for i in col + 1..n {
            let f = div(a[i][col], a[col][col]);
            for j in col..n {
                let v = a[col][j];
                a[i][j] -= f * v;
            }
            let v = x[col];
            x[i] -= f * v;
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in i + 1..n {
            s -= a[i][j] * x[j];
        }
        x[i] = div(s, a[i][i]);
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_matches_libm() {
        for g in [8usize, 12, 1024, 1000] {
            let t = cos_table(g);
            for (j, v) in t.iter().enumerate() {
                let want = (2.0 * std::f64::consts::PI * j as f64 / g as f64).cos();
                assert!((to_f64(*v) - want).abs() < 1e-15, "g={g} j={j}");
            }
        }
    }

    #[test]
    fn division_is_double_double() {
        let q = div(dd(1.0), dd(3.0));
        let back = q * 3.0 - dd(1.0);
        assert!(to_f64(back).abs() < 1e-31);
        let a = DD::new_add(1e11, 1e-7);
        let b = DD::new_add(0.07, 1e-19);
        let r = a - div(a, b) * b;
        assert!(to_f64(r).abs() < 1e-20);
    }

    #[test]
    fn pivoted_solve() {
        let h = vec![vec![dd(4.0), dd(1.0)], vec![dd(1.0), dd(3.0)]];
        let x = solve(&h, &[dd(1.0), dd(2.0)]).unwrap();
        assert!((to_f64(x[0]) - 1.0 / 11.0).abs() < 1e-16);
        assert!((to_f64(x[1]) - 7.0 / 11.0).abs() < 1e-16);
        let singular = vec![vec![dd(1.0), dd(2.0)], vec![dd(2.0), dd(4.0)]];
        assert!(solve(&singular, &[dd(1.0), dd(1.0)]).is_none());
    }
}
