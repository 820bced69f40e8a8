//! Refinement of an exponential-kernel realization onto a grid with half the
//! sampling distance.
//!
//! Coarse samples land on the even fine indices. The fine points that lie on the
//! leading faces (some coordinate 0) but off the coarse lattice are drawn from
//! their exact conditional law given every coarse sample. What remains is driven
//! by the fine AR(1) recursions: the interior noise is drawn from white noise
//! conditioned on the linear constraints that the recursion hits every interior
//! coarse sample, so the refined field has the exact joint law of the fine model
//! given the coarse realization.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::covariance::{product_covariance, sampled_sequence, CovarianceModel, KernelKind};
use crate::error::{GrfError, Result};
use crate::sampler::{flat_index, white_noise, FieldGrid, FieldMeta, NoiseGrid, GENERATOR_VERSION};
use crate::spectral::{build_filter, FilterOptions, RationalFilter1D};

/// Largest |innovation mismatch| accepted when checking a state's noise against its field.
pub const STATE_TOLERANCE: f64 = 1e-7;

/// Coarse realization plus what is needed to refine it.
#[derive(Debug, Clone)]
pub struct RefinementState {
    pub field: FieldGrid,
    /// Noise the field was filtered from. Its shape may exceed the field's; the
    /// field then sits in the trailing block.
    pub noise: NoiseGrid,
    pub model: CovarianceModel,
    pub filters: Vec<RationalFilter1D>,
}

impl RefinementState {
    pub fn new(field: FieldGrid, noise: NoiseGrid, model: CovarianceModel, filters: Vec<RationalFilter1D>) -> Result<Self> {
        let s = Self { field, noise, model, filters };
        s.check_shapes()?;
        Ok(s)
    }

    /// State for a field from `sampler::generate` with default filters.
    pub fn from_generated(model: &CovarianceModel, field: FieldGrid, noise: NoiseGrid) -> Result<Self> {
        let filters = crate::sampler::build_filters(model, &[])?;
        Self::new(field, noise, model.clone(), filters)
    }

    fn check_shapes(&self) -> Result<()> {
        let d = self.model.dims();
        for (what, got) in [
            ("field", self.field.n.len()),
            ("noise", self.noise.n.len()),
            ("filters", self.filters.len()),
        ] {
            if got != d {
                return Err(GrfError::InconsistentState(format!("{what} has {got} dimensions, model has {d}")));
            }
        }
        if self.field.data.len() != self.field.n.iter().product::<usize>()
            || self.noise.data.len() != self.noise.n.iter().product::<usize>()
        {
            return Err(GrfError::InconsistentState("grid data length does not match its shape".into()));
        }
        if self.field.n.iter().zip(&self.noise.n).any(|(f, w)| w < f) {
            return Err(GrfError::InconsistentState(format!(
                "noise shape {:?} is smaller than field shape {:?}",
                self.noise.n, self.field.n
            )));
        }
        Ok(())
    }

    pub fn noise_offset(&self) -> Vec<usize> {
        self.noise.n.iter().zip(&self.field.n).map(|(w, f)| w - f).collect()
    }

    /// Largest mismatch between the field's AR(1) innovations and the stored noise,
    /// over points with a full set of predecessors.
    pub fn innovation_mismatch(&self) -> Result<f64> {
        self.check_shapes()?;
        let ar = Ar1Axes::from_state(self)?;
        let n = &self.field.n;
        let d = n.len();
        let off = self.noise_offset();
        let total: usize = n.iter().product();
        let gain: f64 = ar.g.iter().product();
        let mut worst = 0.0f64;
        let mut idx = vec![0usize; d];
        for f in 0..total {
            unflatten_into(n, f, &mut idx);
            if idx.iter().all(|&i| i >= 1) {
                let z = ar.difference(&self.field.data, n, &idx, d);
                let src: Vec<usize> = idx.iter().zip(&off).map(|(i, o)| i + o).collect();
                let w = self.noise.data[flat_index(&self.noise.n, &src)];
                worst = worst.max((z / gain - w).abs());
            }
        }
        Ok(worst)
    }

    pub fn validate(&self) -> Result<()> {
        let e = self.innovation_mismatch()?;
        if !(e <= STATE_TOLERANCE) {
            return Err(GrfError::InconsistentState(format!(
                "noise does not drive the field (innovation mismatch {e:.3e})"
            )));
        }
        Ok(())
    }
}

/// Conditional law N(μ̄, Σ̄) of unknowns given observed values, with RRᵀ = Σ̄.
#[derive(Debug, Clone)]
pub struct ConditionalGaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub factor: DMatrix<f64>,
}

impl ConditionalGaussian {
    /// Wraps a mean and covariance; R comes from the eigendecomposition truncated at 1e−12·λ_max.
    pub fn from_moments(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = cov.nrows();
        if cov.ncols() != n || mean.len() != n {
            return Err(GrfError::DimensionMismatch { expected: n, got: mean.len() });
        }
        let cov = (&cov + cov.transpose()) * 0.5;
        if n == 0 {
            return Ok(Self { mean, factor: DMatrix::zeros(0, 0), cov });
        }
        let eig = SymmetricEigen::new(cov.clone());
        let lmax = eig.eigenvalues.max();
        let lmin = eig.eigenvalues.min();
        let scale = cov.trace().abs().max(f64::MIN_POSITIVE);
        if lmin < -1e-10 * scale {
            return Err(GrfError::NotPositiveDefinite(format!(
                "conditional covariance has eigenvalue {lmin:.3e} (trace {scale:.3e})"
            )));
        }
        let keep: Vec<usize> = (0..n).filter(|&i| lmax > 0.0 && eig.eigenvalues[i] > 1e-12 * lmax).collect();
        let mut factor = DMatrix::zeros(n, keep.len());
        for (c, &i) in keep.iter().enumerate() {
            let s = eig.eigenvalues[i].sqrt();
            factor.set_column(c, &(eig.eigenvectors.column(i) * s));
        }
        Ok(Self { mean, cov, factor })
    }

    /// Conditions y₂ on y₁ = a for the joint covariance [[Σ₁₁, Σ₁₂], [Σ₂₁, Σ₂₂]].
    pub fn from_blocks(s11: &DMatrix<f64>, s21: &DMatrix<f64>, s22: &DMatrix<f64>, a: &DVector<f64>) -> Result<Self> {
        let chol = cholesky_with_jitter(s11)?;
        let x = chol.solve(&s21.transpose());
        let mean = &x.transpose() * a;
        let cov = s22 - s21 * x;
        Self::from_moments(mean, cov)
    }

    pub fn rank(&self) -> usize {
        self.factor.ncols()
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

fn cholesky_with_jitter(m: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if let Some(c) = m.clone().cholesky() {
        return Ok(c);
    }
    let scale = m.diagonal().max();
    let mut j = m.clone();
    for i in 0..j.nrows() {
        j[(i, i)] += 1e-10 * scale;
    }
    j.cholesky()
        .ok_or_else(|| GrfError::NotPositiveDefinite("conditioning covariance is singular even after jitter".into()))
}

/// Same kernels, every T_j halved.
pub fn halve_scale(model: &CovarianceModel) -> CovarianceModel {
    CovarianceModel { kernels: model.kernels.clone(), t: model.t.iter().map(|t| t / 2.0).collect() }
}

pub fn fine_shape(n: &[usize]) -> Vec<usize> {
    n.iter().map(|&v| 2 * v - 1).collect()
}

/// Fine points on the leading faces (some coordinate 0) that are not coarse points, row-major.
pub fn boundary_index_set(fine_n: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = fine_n.iter().product();
    let mut idx = vec![0; fine_n.len()];
    let mut out = Vec::new();
    for f in 0..total {
        unflatten_into(fine_n, f, &mut idx);
        if idx.contains(&0) && idx.iter().any(|i| i % 2 == 1) {
            out.push(idx.clone());
        }
    }
    out
}

fn check_boundary(model_fine: &CovarianceModel, coarse: &FieldGrid, boundary: &[Vec<usize>]) -> Result<Vec<usize>> {
    let d = model_fine.dims();
    if coarse.dims() != d {
        return Err(GrfError::DimensionMismatch { expected: d, got: coarse.dims() });
    }
    let fine_n = fine_shape(&coarse.n);
    for p in boundary {
        if p.len() != d {
            return Err(GrfError::DimensionMismatch { expected: d, got: p.len() });
        }
        if p.iter().zip(&fine_n).any(|(i, n)| i >= n) {
            return Err(GrfError::InvalidParameter(format!("boundary index {p:?} outside the fine grid {fine_n:?}")));
        }
        if p.iter().all(|i| i % 2 == 0) {
            return Err(GrfError::InvalidParameter(format!("boundary index {p:?} is a coarse point")));
        }
    }
    Ok(fine_n)
}

/// Conditional law of the fine values at `boundary` given all coarse samples.
/// Uses the Kronecker structure, so only per-axis systems of size N_j are factored.
pub fn conditional_boundary(
    model_fine: &CovarianceModel,
    coarse_field: &FieldGrid,
    boundary: &[Vec<usize>],
) -> Result<ConditionalGaussian> {
    let fine_n = check_boundary(model_fine, coarse_field, boundary)?;
    let d = model_fine.dims();
    let n = &coarse_field.n;
    let mut cinv = Vec::with_capacity(d);
    // k_j[p][q] = u_pᵀ C_j⁻¹ u_q, u_p = cross covariance of fine index p with the coarse line
    let mut k = Vec::with_capacity(d);
    let mut u = Vec::with_capacity(d);
    let mut rho = Vec::with_capacity(d);
    for j in 0..d {
        let seq = sampled_sequence(&model_fine.kernels[j], model_fine.t[j], fine_n[j] - 1)?;
        let c = DMatrix::from_fn(n[j], n[j], |a, b| seq[2 * a.abs_diff(b)]);
        let uj = DMatrix::from_fn(n[j], fine_n[j], |a, p| seq[(2 * a).abs_diff(p)]);
        let chol = cholesky_with_jitter(&c)?;
        let ci = chol.inverse();
        k.push(uj.transpose() * &ci * &uj);
        cinv.push(ci);
        u.push(uj);
        rho.push(seq);
    }
    // kriging mean on the whole fine grid: (⊗U_jᵀ)(⊗C_j⁻¹) a
    let mut z = coarse_field.data.clone();
    let mut shape = n.clone();
    for j in 0..d {
        z = contract(&z, &shape, &cinv[j], j);
    }
    for j in 0..d {
        let ut = u[j].transpose();
        z = contract(&z, &shape, &ut, j);
        shape[j] = fine_n[j];
    }
    let mean = DVector::from_iterator(boundary.len(), boundary.iter().map(|p| z[flat_index(&fine_n, p)]));
    let nb = boundary.len();
    let cov = DMatrix::from_fn(nb, nb, |a, b| {
        let (p, q) = (&boundary[a], &boundary[b]);
        let prior: f64 = (0..d).map(|j| rho[j][p[j].abs_diff(q[j])]).product();
        let explained: f64 = (0..d).map(|j| k[j][(p[j], q[j])]).product();
        prior - explained
    });
    ConditionalGaussian::from_moments(mean, cov)
}

/// Dense reference: every block assembled entry by entry from the fine covariance.
pub fn conditional_boundary_dense(
    model_fine: &CovarianceModel,
    coarse_field: &FieldGrid,
    boundary: &[Vec<usize>],
) -> Result<ConditionalGaussian> {
    check_boundary(model_fine, coarse_field, boundary)?;
    let n = &coarse_field.n;
    let total: usize = n.iter().product();
    let coarse: Vec<Vec<i64>> = (0..total)
        .map(|f| {
            let mut idx = vec![0; n.len()];
            unflatten_into(n, f, &mut idx);
            idx.iter().map(|&i| 2 * i as i64).collect()
        })
        .collect();
    let fine: Vec<Vec<i64>> = boundary.iter().map(|p| p.iter().map(|&i| i as i64).collect()).collect();
    let cov = |x: &[i64], y: &[i64]| -> Result<f64> {
        let lag: Vec<i64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        product_covariance(model_fine, &lag)
    };
    let mut s11 = DMatrix::zeros(total, total);
    for a in 0..total {
        for b in 0..total {
            s11[(a, b)] = cov(&coarse[a], &coarse[b])?;
        }
    }
    let mut s21 = DMatrix::zeros(fine.len(), total);
    for a in 0..fine.len() {
        for b in 0..total {
            s21[(a, b)] = cov(&fine[a], &coarse[b])?;
        }
    }
    let mut s22 = DMatrix::zeros(fine.len(), fine.len());
    for a in 0..fine.len() {
        for b in 0..fine.len() {
            s22[(a, b)] = cov(&fine[a], &fine[b])?;
        }
    }
    let a = DVector::from_column_slice(&coarse_field.data);
    ConditionalGaussian::from_blocks(&s11, &s21, &s22, &a)
}

/// R·e + μ̄ with e seeded standard normal of length rank(R).
pub fn sample_boundary(cg: &ConditionalGaussian, seed: u64) -> Vec<f64> {
    let r = cg.rank();
    if r == 0 {
        return cg.mean.as_slice().to_vec();
    }
    let e = DVector::from_vec(white_noise(&[r], seed).expect("rank is positive").data);
    (&cg.factor * e + &cg.mean).as_slice().to_vec()
}

/// Per-axis AR(1) parameters y(s) = r·y(s−1) + g·w(s) with stationary sd σ.
#[derive(Debug, Clone)]
struct Ar1Axes {
    r: Vec<f64>,
    g: Vec<f64>,
    sd: Vec<f64>,
}

impl Ar1Axes {
    fn new(model: &CovarianceModel, filters: &[RationalFilter1D]) -> Result<Self> {
        if model.kernels.iter().any(|k| k.kind != KernelKind::Exponential) {
            return Err(GrfError::UnsupportedRefinement(
                "refinement needs exponential kernels on every axis".into(),
            ));
        }
        if filters.len() != model.dims() {
            return Err(GrfError::DimensionMismatch { expected: model.dims(), got: filters.len() });
        }
        let mut r = Vec::new();
        let mut g = Vec::new();
        for (j, f) in filters.iter().enumerate() {
            if f.a.len() != 2 || f.b.len() != 1 {
                return Err(GrfError::UnsupportedRefinement(format!("axis {j} filter is not AR(1)")));
            }
            let (rj, gj) = (-f.a[1], f.b[0]);
            if rj == 0.0 || gj == 0.0 || !rj.is_finite() || !gj.is_finite() {
                return Err(GrfError::DegenerateFilter(format!("axis {j}: pole {rj}, gain {gj}")));
            }
            r.push(rj);
            g.push(gj);
        }
        let sd = model.kernels.iter().map(|k| k.sigma2.sqrt()).collect();
        Ok(Self { r, g, sd })
    }

    fn from_state(s: &RefinementState) -> Result<Self> {
        Self::new(&s.model, &s.filters)
    }

    /// Σ_{S ⊆ active} Π_{j∈S}(−r_j) y(x − e_S).
    fn difference(&self, y: &[f64], shape: &[usize], x: &[usize], d: usize) -> f64 {
        let active: Vec<usize> = (0..d).filter(|&j| x[j] >= 1).collect();
        let mut acc = 0.0;
        let mut p = x.to_vec();
        for mask in 0..1usize << active.len() {
            let mut coef = 1.0;
            for (bit, &j) in active.iter().enumerate() {
                if mask >> bit & 1 == 1 {
                    p[j] = x[j] - 1;
                    coef *= -self.r[j];
                } else {
                    p[j] = x[j];
                }
            }
            acc += coef * y[flat_index(shape, &p)];
        }
        acc
    }

    /// Scale turning a unit innovation into y at x: gains on active axes, sd elsewhere.
    fn scale(&self, x: &[usize]) -> f64 {
        x.iter().enumerate().map(|(j, &i)| if i >= 1 { self.g[j] } else { self.sd[j] }).product()
    }
}

fn unflatten_into(shape: &[usize], mut f: usize, idx: &mut [usize]) {
    for j in (0..shape.len()).rev() {
        idx[j] = f % shape[j];
        f /= shape[j];
    }
}

/// Applies an (r × shape[axis]) matrix along `axis`; the axis length becomes r.
fn contract(data: &[f64], shape: &[usize], m: &DMatrix<f64>, axis: usize) -> Vec<f64> {
    let len = shape[axis];
    let rows = m.nrows();
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut out = vec![0.0; outer * rows * inner];
    for o in 0..outer {
        let src = &data[o * len * inner..(o + 1) * len * inner];
        let dst = &mut out[o * rows * inner..(o + 1) * rows * inner];
        for i in 0..rows {
            for k in 0..len {
                let c = m[(i, k)];
                if c != 0.0 {
                    let (s, t) = (&src[k * inner..(k + 1) * inner], &mut dst[i * inner..(i + 1) * inner]);
                    for (a, b) in t.iter_mut().zip(s) {
                        *a += c * b;
                    }
                }
            }
        }
    }
    out
}

/// Runs the AR recursions from white noise with stationary start on every face,
/// so white input gives an exact stationary sample of the model.
pub fn stationary_filter(model: &CovarianceModel, filters: &[RationalFilter1D], noise: &NoiseGrid) -> Result<Vec<f64>> {
    let ar = Ar1Axes::new(model, filters)?;
    let shape = &noise.n;
    let d = shape.len();
    let mut y = vec![0.0; noise.data.len()];
    let mut idx = vec![0; d];
    for f in 0..y.len() {
        unflatten_into(shape, f, &mut idx);
        let rest = ar.difference(&y, shape, &idx, d); // y[f] is still 0 here
        y[f] = ar.scale(&idx) * noise.data[f] - rest;
    }
    Ok(y)
}

/// Inverse of [`stationary_filter`].
fn innovations(ar: &Ar1Axes, y: &[f64], shape: &[usize]) -> Vec<f64> {
    let d = shape.len();
    let mut idx = vec![0; d];
    (0..y.len())
        .map(|f| {
            unflatten_into(shape, f, &mut idx);
            ar.difference(y, shape, &idx, d) / ar.scale(&idx)
        })
        .collect()
}

/// Fine grid with coarse samples at even indices and `boundary_values` at the
/// boundary index set; interior points are left at zero.
fn seed_faces(coarse: &FieldGrid, boundary: &[Vec<usize>], values: &[f64]) -> Vec<f64> {
    let fine_n = fine_shape(&coarse.n);
    let d = fine_n.len();
    let mut y = vec![0.0; fine_n.iter().product()];
    let mut idx = vec![0; d];
    for (f, &v) in coarse.data.iter().enumerate() {
        unflatten_into(&coarse.n, f, &mut idx);
        let p: Vec<usize> = idx.iter().map(|i| 2 * i).collect();
        y[flat_index(&fine_n, &p)] = v;
    }
    for (p, &v) in boundary.iter().zip(values) {
        y[flat_index(&fine_n, p)] = v;
    }
    y
}

/// Fills points with every coordinate ≥ 1 from the interior noise (shape fine_n − 1).
fn fill_interior(ar: &Ar1Axes, y: &mut [f64], fine_n: &[usize], w_int: &[f64]) {
    let d = fine_n.len();
    let int_n: Vec<usize> = fine_n.iter().map(|v| v - 1).collect();
    let gain: f64 = ar.g.iter().product();
    let mut idx = vec![0; d];
    let mut x = vec![0; d];
    for (f, &w) in w_int.iter().enumerate() {
        unflatten_into(&int_n, f, &mut idx);
        for j in 0..d {
            x[j] = idx[j] + 1;
        }
        let at = flat_index(fine_n, &x);
        y[at] = 0.0;
        let rest = ar.difference(y, fine_n, &x, d);
        y[at] = gain * w - rest;
    }
}

/// Coarse samples at interior even points, shape N − 1.
fn interior_targets(y: &[f64], fine_n: &[usize], coarse_n: &[usize]) -> Vec<f64> {
    let d = fine_n.len();
    let tn: Vec<usize> = coarse_n.iter().map(|v| v - 1).collect();
    let mut idx = vec![0; d];
    (0..tn.iter().product())
        .map(|f| {
            unflatten_into(&tn, f, &mut idx);
            let p: Vec<usize> = idx.iter().map(|i| 2 * (i + 1)).collect();
            y[flat_index(fine_n, &p)]
        })
        .collect()
}

/// Fine noise consistent with the coarse field: faces from `fine_boundary` (values at
/// [`boundary_index_set`]), interior from seeded white noise projected onto the
/// constraints that the fine recursion reproduces every coarse sample.
pub fn reconstruct_fine_noise(
    state: &RefinementState,
    fine_filters: &[RationalFilter1D],
    fine_boundary: &[f64],
    seed: u64,
) -> Result<NoiseGrid> {
    let fine_model = halve_scale(&state.model);
    let ar = Ar1Axes::new(&fine_model, fine_filters)?;
    let coarse = &state.field;
    let fine_n = fine_shape(&coarse.n);
    let boundary = boundary_index_set(&fine_n);
    if fine_boundary.len() != boundary.len() {
        return Err(GrfError::DimensionMismatch { expected: boundary.len(), got: fine_boundary.len() });
    }
    let d = fine_n.len();
    let int_n: Vec<usize> = fine_n.iter().map(|v| v - 1).collect();
    let con_n: Vec<usize> = coarse.n.iter().map(|v| v - 1).collect();
    let gain: f64 = ar.g.iter().product();

    let mut y = seed_faces(coarse, &boundary, fine_boundary);
    let n_int: usize = int_n.iter().product();
    // response of the constrained points to the faces alone
    let mut h = y.clone();
    fill_interior(&ar, &mut h, &fine_n, &vec![0.0; n_int]);
    let target = interior_targets(&y, &fine_n, &coarse.n);
    let free = interior_targets(&h, &fine_n, &coarse.n);
    let c: Vec<f64> = target.iter().zip(&free).map(|(a, b)| a - b).collect();

    // A = gain·(⊗M_j), M_j[k][s] = r_j^(2k−s) for s ≤ 2k (k, s counted from 1)
    let mut mats = Vec::with_capacity(d);
    let mut g_inv = Vec::with_capacity(d);
    for j in 0..d {
        let r = ar.r[j];
        let m = DMatrix::from_fn(con_n[j], int_n[j], |k, s| {
            let (k, s) = (2 * (k + 1), s + 1);
            if s <= k {
                r.powi((k - s) as i32)
            } else {
                0.0
            }
        });
        let g = &m * m.transpose();
        g_inv.push(cholesky_with_jitter(&g)?.inverse());
        mats.push(m);
    }
    let mut e = white_noise(&int_n, seed)?.data;
    let mut ae = e.clone();
    let mut shape = int_n.clone();
    for j in 0..d {
        ae = contract(&ae, &shape, &mats[j], j);
        shape[j] = con_n[j];
    }
    let mut v: Vec<f64> = c.iter().zip(&ae).map(|(c, a)| c / gain - a).collect();
    for j in 0..d {
        v = contract(&v, &shape, &g_inv[j], j);
    }
    for j in 0..d {
        v = contract(&v, &shape, &mats[j].transpose(), j);
        shape[j] = int_n[j];
    }
    for (a, b) in e.iter_mut().zip(&v) {
        *a += b;
    }
    fill_interior(&ar, &mut y, &fine_n, &e);
    Ok(NoiseGrid { n: fine_n.clone(), t: fine_model.t.clone(), data: innovations(&ar, &y, &fine_n), seed })
}

/// Diagnostics from one refinement step.
#[derive(Debug, Clone)]
pub struct RefineReport {
    /// max |fine(2i) − coarse(i)|.
    pub interpolation_error: f64,
    pub boundary_len: usize,
    pub boundary_rank: usize,
}

fn derive_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn refine(state: &RefinementState, seed: u64) -> Result<(FieldGrid, RefinementState)> {
    refine_with_report(state, seed).map(|(f, s, _)| (f, s))
}

pub fn refine_with_report(state: &RefinementState, seed: u64) -> Result<(FieldGrid, RefinementState, RefineReport)> {
    let d = state.model.dims();
    if !(1..=2).contains(&d) {
        return Err(GrfError::UnsupportedRefinement(format!("refinement supports 1 or 2 dimensions, got {d}")));
    }
    Ar1Axes::from_state(state)?;
    if state.field.n.iter().any(|&n| n < 2) {
        return Err(GrfError::InvalidParameter(format!("coarse extents {:?} must be at least 2", state.field.n)));
    }
    state.validate()?;
    let fine_model = halve_scale(&state.model);
    let fine_filters: Vec<RationalFilter1D> = fine_model
        .kernels
        .iter()
        .zip(&fine_model.t)
        .map(|(k, &t)| build_filter(k, t, &FilterOptions::default()))
        .collect::<Result<_>>()?;
    let fine_n = fine_shape(&state.field.n);
    let boundary = boundary_index_set(&fine_n);
    let cg = conditional_boundary(&fine_model, &state.field, &boundary)?;
    let values = sample_boundary(&cg, derive_seed(seed, 1));
    let noise = reconstruct_fine_noise(state, &fine_filters, &values, derive_seed(seed, 2))?;
    let mut noise = noise;
    noise.seed = seed;
    let data = stationary_filter(&fine_model, &fine_filters, &noise)?;

    let mut err = 0.0f64;
    let mut idx = vec![0; d];
    for (f, &v) in state.field.data.iter().enumerate() {
        unflatten_into(&state.field.n, f, &mut idx);
        let p: Vec<usize> = idx.iter().map(|i| 2 * i).collect();
        err = err.max((data[flat_index(&fine_n, &p)] - v).abs());
    }
    let field = FieldGrid {
        n: fine_n,
        t: fine_model.t.clone(),
        data,
        meta: FieldMeta {
            seed,
            scale_level: state.field.meta.scale_level + 1,
            generator: format!("{GENERATOR_VERSION} refine"),
        },
    };
    let next = RefinementState { field: field.clone(), noise, model: fine_model, filters: fine_filters };
    let report = RefineReport { interpolation_error: err, boundary_len: boundary.len(), boundary_rank: cg.rank() };
    Ok((field, next, report))
}
