//! Seeded white noise and cascaded per-axis ARMA filtering.
//!
//! Noise is drawn line by line along the last axis. Line ℓ of a grid uses ChaCha8
//! seeded from `seed` with stream number ℓ, so the bits do not depend on how lines
//! are scheduled over threads. A grid whose last extent is L takes the first L
//! normals of each stream; grids with the same seed and last extent share lines.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::covariance::CovarianceModel;
use crate::error::{GrfError, Result};
use crate::spectral::{build_filter, FilterOptions, RationalFilter1D};

pub const GENERATOR_VERSION: &str = concat!("grf-core ", env!("CARGO_PKG_VERSION"));

/// Extra samples per axis regardless of beta.
pub const BURN_IN_FLOOR: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct FieldMeta {
    pub seed: u64,
    pub scale_level: u32,
    pub generator: String,
}

/// Row-major (last axis fastest) d-dimensional field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub n: Vec<usize>,
    pub t: Vec<f64>,
    pub data: Vec<f64>,
    pub meta: FieldMeta,
}

/// Unit-variance white noise with the same layout as [`FieldGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseGrid {
    pub n: Vec<usize>,
    pub t: Vec<f64>,
    pub data: Vec<f64>,
    pub seed: u64,
}

impl FieldGrid {
    pub fn dims(&self) -> usize {
        self.n.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[flat_index(&self.n, idx)]
    }
}

impl NoiseGrid {
    pub fn dims(&self) -> usize {
        self.n.len()
    }
}

pub fn flat_index(shape: &[usize], idx: &[usize]) -> usize {
    idx.iter().zip(shape).fold(0, |acc, (&i, &n)| acc * n + i)
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() {
        return Err(GrfError::InvalidParameter("grid needs at least one dimension".into()));
    }
    if shape.contains(&0) {
        return Err(GrfError::InvalidParameter(format!("zero extent in shape {shape:?}")));
    }
    Ok(())
}

pub fn white_noise(shape: &[usize], seed: u64) -> Result<NoiseGrid> {
    check_shape(shape)?;
    let line = *shape.last().unwrap();
    let total: usize = shape.iter().product();
    let mut data = vec![0.0; total];
    data.par_chunks_mut(line).enumerate().for_each(|(l, chunk)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(l as u64);
        for v in chunk.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
    });
    Ok(NoiseGrid { n: shape.to_vec(), t: vec![1.0; shape.len()], data, seed })
}

/// Applies Σ a_k y(x−k·e) = Σ b_k w(x−k·e) along every line parallel to `axis`, zero initial conditions.
pub fn filter_axis(input: &[f64], shape: &[usize], filter: &RationalFilter1D, axis: usize) -> Result<Vec<f64>> {
    let mut out = input.to_vec();
    filter_axis_in_place(&mut out, shape, filter, axis)?;
    Ok(out)
}

pub fn filter_axis_in_place(data: &mut [f64], shape: &[usize], filter: &RationalFilter1D, axis: usize) -> Result<()> {
    check_shape(shape)?;
    if axis >= shape.len() {
        return Err(GrfError::DimensionMismatch { expected: shape.len(), got: axis + 1 });
    }
    if data.len() != shape.iter().product::<usize>() {
        return Err(GrfError::InvalidParameter(format!(
            "data length {} does not match shape {shape:?}",
            data.len()
        )));
    }
    filter.validate()?;
    let len = shape[axis];
    if len <= filter.m() {
        return Err(GrfError::InvalidParameter(format!(
            "extent {len} along axis {axis} must exceed the filter order {}",
            filter.m()
        )));
    }
    let inner: usize = shape[axis + 1..].iter().product();
    if inner == 1 {
        data.par_chunks_mut(len).for_each(|line| filter_line(line, filter));
        return Ok(());
    }
    // lanes of one outer block are interleaved; hand each task a column strip of every row
    const LANES: usize = 64;
    let mut tasks: Vec<Vec<&mut [f64]>> = Vec::new();
    for block in data.chunks_mut(len * inner) {
        let first = tasks.len();
        let strips = inner.div_ceil(LANES);
        tasks.extend((0..strips).map(|_| Vec::with_capacity(len)));
        for row in block.chunks_mut(inner) {
            for (s, strip) in row.chunks_mut(LANES).enumerate() {
                tasks[first + s].push(strip);
            }
        }
    }
    tasks.into_par_iter().for_each(|mut rows| filter_strip(&mut rows, filter));
    Ok(())
}

fn filter_line(line: &mut [f64], f: &RationalFilter1D) {
    let (a, b) = (&f.a, &f.b);
    let n = b.len() - 1;
    let mut hist = vec![0.0; n + 1];
    for i in 0..line.len() {
        hist.rotate_right(1);
        hist[0] = line[i];
        let mut y = 0.0;
        for (k, &bk) in b.iter().enumerate() {
            y += bk * hist[k];
        }
        for k in 1..a.len().min(i + 1) {
            y -= a[k] * line[i - k];
        }
        line[i] = y;
    }
}

fn filter_strip(rows: &mut [&mut [f64]], f: &RationalFilter1D) {
    let (a, b) = (&f.a, &f.b);
    let width = rows[0].len();
    let n = b.len() - 1;
    // ring of the last n+1 input rows
    let mut hist = vec![vec![0.0; width]; n + 1];
    let mut y = vec![0.0; width];
    for i in 0..rows.len() {
        hist.rotate_right(1);
        hist[0].copy_from_slice(rows[i]);
        y.iter_mut().for_each(|v| *v = 0.0);
        for (k, &bk) in b.iter().enumerate() {
            for (yl, &wl) in y.iter_mut().zip(&hist[k]) {
                *yl += bk * wl;
            }
        }
        for k in 1..a.len().min(i + 1) {
            let ak = a[k];
            for (yl, &pl) in y.iter_mut().zip(rows[i - k].iter()) {
                *yl -= ak * pl;
            }
        }
        rows[i].copy_from_slice(&y);
    }
}

/// Enlarged extents: ceil((1+β)N + m), but never fewer than N + m + 50.
pub fn padded_extent(n: usize, m: usize, beta: f64) -> usize {
    let grown = ((1.0 + beta) * n as f64 + m as f64).ceil() as usize;
    grown.max(n + m + BURN_IN_FLOOR)
}

pub fn build_filters(model: &CovarianceModel, opts: &[FilterOptions]) -> Result<Vec<RationalFilter1D>> {
    let default = FilterOptions::default();
    model
        .kernels
        .iter()
        .zip(&model.t)
        .enumerate()
        .map(|(j, (k, &t))| build_filter(k, t, opts.get(j).or(opts.last()).unwrap_or(&default)))
        .collect()
}

pub fn generate(model: &CovarianceModel, n: &[usize], seed: u64, beta: f64) -> Result<(FieldGrid, NoiseGrid)> {
    let filters = build_filters(model, &[])?;
    generate_with_filters(model, &filters, n, seed, beta)
}

/// Filters white noise of the padded shape M and keeps the trailing N block.
pub fn generate_with_filters(
    model: &CovarianceModel,
    filters: &[RationalFilter1D],
    n: &[usize],
    seed: u64,
    beta: f64,
) -> Result<(FieldGrid, NoiseGrid)> {
    let d = model.dims();
    if n.len() != d {
        return Err(GrfError::DimensionMismatch { expected: d, got: n.len() });
    }
    if filters.len() != d {
        return Err(GrfError::DimensionMismatch { expected: d, got: filters.len() });
    }
    check_shape(n)?;
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(GrfError::InvalidParameter(format!("beta must be ≥ 0, got {beta}")));
    }
    let big: Vec<usize> = n.iter().zip(filters).map(|(&nj, f)| padded_extent(nj, f.m(), beta)).collect();
    let mut noise = white_noise(&big, seed)?;
    noise.t = model.t.clone();
    let mut work = noise.data.clone();
    for (axis, f) in filters.iter().enumerate() {
        filter_axis_in_place(&mut work, &big, f, axis)?;
    }
    let offset: Vec<usize> = big.iter().zip(n).map(|(&m, &nj)| m - nj).collect();
    let data = extract_block(&work, &big, &offset, n);
    let field = FieldGrid {
        n: n.to_vec(),
        t: model.t.clone(),
        data,
        meta: FieldMeta { seed, scale_level: 0, generator: GENERATOR_VERSION.to_string() },
    };
    Ok((field, noise))
}

/// Copies the sub-block starting at `offset` with extents `n` out of a row-major grid.
pub fn extract_block(data: &[f64], shape: &[usize], offset: &[usize], n: &[usize]) -> Vec<f64> {
    let d = shape.len();
    let total: usize = n.iter().product();
    let row = n[d - 1];
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; d];
    for _ in 0..total / row {
        let src: Vec<usize> = idx.iter().zip(offset).map(|(&i, &o)| i + o).collect();
        let start = flat_index(shape, &src);
        out.extend_from_slice(&data[start..start + row]);
        // advance over all but the last axis
        for j in (0..d - 1).rev() {
            idx[j] += 1;
            if idx[j] < n[j] {
                break;
            }
            idx[j] = 0;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::Kernel1D;

    #[test]
    fn noise_is_deterministic() {
        let a = white_noise(&[4], 42).unwrap();
        let b = white_noise(&[4], 42).unwrap();
        assert_eq!(a.data, b.data);
        let c = white_noise(&[2, 3], 1).unwrap();
        let d = white_noise(&[2, 3], 2).unwrap();
        assert_ne!(c.data, d.data);
        assert!(white_noise(&[3, 0], 1).is_err());
    }

    #[test]
    fn lines_are_shared_across_shapes() {
        let small = white_noise(&[2, 5], 9).unwrap();
        let big = white_noise(&[4, 5], 9).unwrap();
        assert_eq!(small.data[..], big.data[..10]);
    }

    #[test]
    fn noise_moments() {
        let w = white_noise(&[1_000_000], 3).unwrap();
        let n = w.data.len() as f64;
        let mean = w.data.iter().sum::<f64>() / n;
        let var = w.data.iter().map(|v| v * v).sum::<f64>() / n - mean * mean;
        assert!(mean.abs() < 4.0 / n.sqrt());
        assert!((var - 1.0).abs() < 0.01);
    }

    #[test]
    fn identity_and_impulse() {
        let id = RationalFilter1D::new(vec![1.0], vec![1.0]).unwrap();
        let x = vec![0.3, -1.0, 2.0, 0.5];
        assert_eq!(filter_axis(&x, &[4], &id, 0).unwrap(), x);

        let f = RationalFilter1D::new(vec![0.7], vec![1.0, -0.6]).unwrap();
        let mut imp = vec![0.0; 8];
        imp[0] = 1.0;
        let h = filter_axis(&imp, &[8], &f, 0).unwrap();
        for (k, v) in h.iter().enumerate() {
            assert!((v - 0.7 * 0.6f64.powi(k as i32)).abs() < 1e-15);
        }
    }

    #[test]
    fn strided_axis_matches_line_filter() {
        let f = RationalFilter1D::new(vec![1.0, 0.3], vec![1.0, -0.5, 0.1]).unwrap();
        let shape = [6, 70, 3];
        let x = white_noise(&shape, 5).unwrap().data;
        let y = filter_axis(&x, &shape, &f, 1).unwrap();
        for i in 0..6 {
            for l in 0..3 {
                let mut line: Vec<f64> = (0..70).map(|j| x[flat_index(&shape, &[i, j, l])]).collect();
                filter_line(&mut line, &f);
                for j in 0..70 {
                    assert_eq!(line[j], y[flat_index(&shape, &[i, j, l])]);
                }
            }
        }
    }

    #[test]
    fn rejects_short_axis() {
        let f = RationalFilter1D::new(vec![1.0], vec![1.0, -0.5, 0.1]).unwrap();
        assert!(filter_axis(&[1.0, 2.0], &[2], &f, 0).is_err());
    }

    #[test]
    fn padding_rules() {
        assert_eq!(padded_extent(64, 1, 0.1), 115);
        assert_eq!(padded_extent(1000, 1, 0.1), 1101);
    }

    #[test]
    fn white_model_is_scaled_noise() {
        let k = Kernel1D::custom(vec![4.0]).unwrap();
        let model = CovarianceModel::new(vec![k.clone(), k], vec![1.0, 1.0]).unwrap();
        let (field, noise) = generate(&model, &[3, 5], 11, 0.1).unwrap();
        let off: Vec<usize> = noise.n.iter().zip(&field.n).map(|(m, n)| m - n).collect();
        let block = extract_block(&noise.data, &noise.n, &off, &field.n);
        for (y, w) in field.data.iter().zip(&block) {
            assert!((y - 4.0 * w).abs() < 1e-12);
        }
    }
}
