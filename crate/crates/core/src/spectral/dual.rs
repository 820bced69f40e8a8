//! Newton's method on the convex dual of the generalized maximum-entropy problem.
//!
//! Minimizes J(q) = ⟨σ,q⟩ − (1/G)Σ P(θ_i) log Q(θ_i) over {Q > 0}. Everything
//! runs in double-double: see the note in `dd`.

use super::dd::{div, solve, cos_table, dd, eval_cos_poly, to_f64, DD};
use super::poly::{autocorr, levinson};
use crate::error::{GrfError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MESolveReport {
    pub iterations: usize,
    /// ∞-norm of the (cosine-weighted) dual gradient at the returned point.
    pub final_gradient_norm: f64,
    /// σ_k minus the k-th moment of P/Q̂, k = 0..m.
    pub moment_residuals: Vec<f64>,
    pub converged: bool,
}

/// Starting point for the Newton iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualStart {
    /// Q ≡ 1.
    Flat,
    /// Q_0 = p_0·|a(e^{iθ})|²/e from the Levinson (pure AR) fit of σ.
    Levinson,
}

#[derive(Debug, Clone, Copy)]
pub struct DualOptions {
    pub grid_size: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub start: DualStart,
}

impl DualOptions {
    pub fn for_order(m: usize) -> Self {
        Self { grid_size: default_grid_size(m), tol: 1e-10, max_iter: 200, start: DualStart::Levinson }
    }
}

pub fn default_grid_size(m: usize) -> usize {
    1024.max(64 * m)
}

fn weight(k: usize) -> DD {
    if k == 0 {
        dd(1.0)
    } else {
        dd(2.0)
    }
}

struct Dual {
    sigma: Vec<DD>,
    pg: Vec<DD>,
    table: Vec<DD>,
}

impl Dual {
    fn new(cov_seq: &[f64], p: &[f64], grid_size: usize) -> Result<Self> {
        let table = cos_table(grid_size);
        let pc: Vec<DD> = p.iter().map(|&v| dd(v)).collect();
        let pg = eval_cos_poly(&pc, &table);
        if let Some(i) = pg.iter().position(|v| !(v.hi() > 0.0)) {
            return Err(GrfError::Domain(format!("numerator P is not positive at grid point {i}")));
        }
        Ok(Self { sigma: cov_seq.iter().map(|&v| dd(v)).collect(), pg, table })
    }

    fn m(&self) -> usize {
        self.sigma.len() - 1
    }

    fn g(&self) -> usize {
        self.table.len()
    }

    /// Q on the grid, or None if it is not strictly positive everywhere.
    fn q_grid(&self, q: &[DD]) -> Option<Vec<DD>> {
        let qg = eval_cos_poly(q, &self.table);
        qg.iter().all(|v| v.hi() > 0.0).then_some(qg)
    }

    fn value(&self, q: &[DD], qg: &[DD]) -> DD {
        let mut lin = dd(0.0);
        for (k, (&s, &qk)) in self.sigma.iter().zip(q).enumerate() {
            lin += weight(k) * s * qk;
        }
        let mut ent = dd(0.0);
        for (&p, &qv) in self.pg.iter().zip(qg) {
            ent += p * qv.ln();
        }
        lin - ent / self.g() as f64
    }

    /// (1/G)Σ P cos(jθ)/Q^power for j = 0..=jmax.
    fn moments(&self, qg: &[DD], power: i32, jmax: usize) -> Vec<DD> {
        let g = self.g();
        let w: Vec<DD> = self
            .pg
            .iter()
            .zip(qg)
            .map(|(&p, &qv)| if power == 1 { div(p, qv) } else { div(p, qv * qv) })
            .collect();
        (0..=jmax)
            .map(|j| {
                let mut acc = dd(0.0);
                for (i, &wi) in w.iter().enumerate() {
                    acc += wi * self.table[(j * i) % g];
                }
                acc / g as f64
            })
            .collect()
    }

    fn gradient(&self, qg: &[DD]) -> (Vec<DD>, Vec<DD>) {
        let mom = self.moments(qg, 1, self.m());
        let resid: Vec<DD> = self.sigma.iter().zip(&mom).map(|(&s, &mo)| s - mo).collect();
        let grad = resid.iter().enumerate().map(|(k, &r)| weight(k) * r).collect();
        (grad, resid)
    }

    fn hessian(&self, qg: &[DD]) -> Vec<Vec<DD>> {
        let m = self.m();
        // cos kθ cos lθ = (cos (k+l)θ + cos (k−l)θ)/2
        let h = self.moments(qg, 2, 2 * m);
        (0..=m)
            .map(|k| {
                (0..=m)
                    .map(|l| weight(k) * weight(l) * (h[k + l] + h[k.abs_diff(l)]) / 2.0)
                    .collect()
            })
            .collect()
    }
}

fn inf_norm(v: &[DD]) -> f64 {
    v.iter().map(|x| to_f64(*x).abs()).fold(0.0, f64::max)
}

/// Value, gradient and Hessian of the dual objective at `q` (cosine-basis coefficients).
pub fn dual_gradient_hessian(
    q: &[f64],
    cov_seq: &[f64],
    p: &[f64],
    grid_size: usize,
) -> Result<(f64, Vec<f64>, Vec<Vec<f64>>)> {
    if q.len() != cov_seq.len() {
        return Err(GrfError::DimensionMismatch { expected: cov_seq.len(), got: q.len() });
    }
    let dual = Dual::new(cov_seq, p, grid_size)?;
    let qd: Vec<DD> = q.iter().map(|&v| dd(v)).collect();
    let qg = dual
        .q_grid(&qd)
        .ok_or_else(|| GrfError::Domain("Q is not positive on the quadrature grid".into()))?;
    let value = to_f64(dual.value(&qd, &qg));
    let (grad, _) = dual.gradient(&qg);
    let hess = dual.hessian(&qg);
    Ok((
        value,
        grad.into_iter().map(to_f64).collect(),
        hess.into_iter().map(|row| row.into_iter().map(to_f64).collect()).collect(),
    ))
}

/// Solves the dual with default options for this order (grid max(1024, 64m), tol 1e-10, 200 iterations).
pub fn me_dual_solve(
    cov_seq: &[f64],
    p: &[f64],
    grid_size: usize,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<DD>, MESolveReport)> {
    let opts = DualOptions { grid_size, tol, max_iter, start: DualStart::Levinson };
    me_dual_solve_with(cov_seq, p, &opts)
}

pub fn me_dual_solve_with(cov_seq: &[f64], p: &[f64], opts: &DualOptions) -> Result<(Vec<DD>, MESolveReport)> {
    if cov_seq.is_empty() || p.is_empty() {
        return Err(GrfError::InvalidParameter("empty covariance sequence or numerator".into()));
    }
    let m = cov_seq.len() - 1;
    if opts.grid_size < 8 * m.max(1) {
        return Err(GrfError::InvalidParameter(format!(
            "grid size {} is below 8·m = {}",
            opts.grid_size,
            8 * m
        )));
    }
    // also serves as the feasibility test
    let (a_lev, e_lev) = levinson(cov_seq)?;
    let dual = Dual::new(cov_seq, p, opts.grid_size)?;

    let mut q: Vec<DD> = match opts.start {
        DualStart::Flat => {
            let mut q = vec![dd(0.0); m + 1];
            q[0] = dd(1.0);
            q
        }
        DualStart::Levinson => autocorr(&a_lev).iter().map(|&v| dd(v) * p[0] / e_lev).collect(),
    };
    let mut qg = match dual.q_grid(&q) {
        Some(g) => g,
        None => {
            q = vec![dd(0.0); m + 1];
            q[0] = dd(1.0);
            dual.q_grid(&q).expect("flat Q is positive")
        }
    };

    let mut iterations = 0;
    loop {
        let (grad, resid) = dual.gradient(&qg);
        let gnorm = inf_norm(&grad);
        let report = |iterations, converged| MESolveReport {
            iterations,
            final_gradient_norm: gnorm,
            moment_residuals: resid.iter().map(|&r| to_f64(r)).collect(),
            converged,
        };
        if gnorm <= opts.tol {
            return Ok((q, report(iterations, true)));
        }
        if iterations >= opts.max_iter {
            return Err(GrfError::NonConvergence(Box::new(report(iterations, false))));
        }
        let hess = dual.hessian(&qg);
        let neg: Vec<DD> = grad.iter().map(|&g| -g).collect();
        let dir = solve(&hess, &neg).ok_or_else(|| {
            GrfError::NonConvergence(Box::new(report(iterations, false)))
        })?;
        let slope: DD = grad.iter().zip(&dir).fold(dd(0.0), |acc, (&g, &d)| acc + g * d);
        let j0 = dual.value(&q, &qg);

        // Once the Newton decrement is tiny the objective change sits below the
        // rounding of log Q, so Armijo can no longer discriminate; take the full step.
        let local = to_f64(slope) < 0.0 && -to_f64(slope) < 1e-12;
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<DD> = q.iter().zip(&dir).map(|(&qk, &dk)| qk + dd(t) * dk).collect();
            if let Some(cg) = dual.q_grid(&cand) {
                if local || dual.value(&cand, &cg) <= j0 + dd(1e-4 * t) * slope {
                    accepted = Some((cand, cg));
                    break;
                }
            }
            t *= 0.5;
        }
        let (nq, ng) = accepted.ok_or_else(|| GrfError::NonConvergence(Box::new(report(iterations, false))))?;
        q = nq;
        qg = ng;
        iterations += 1;
    }
}
