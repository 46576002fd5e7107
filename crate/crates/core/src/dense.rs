//! Explicit sensing matrix for small instances.
//!
//! This exists only as brute-force ground truth for the matrix-free
//! operator. Everything here is `O(n^2 C)` memory and refuses to run beyond
//! [`MAX_DENSE_ENTRIES`].

use nalgebra::DMatrix;

use crate::error::{mismatch, Error, Result};
use crate::operator::{shift_cube, SensingOperator};
use crate::sim::{gen_mask, random_cube, repair_full_rank, seeded_rng};
use crate::tensor::{flatten_index, flatten_pixel, HsiCube, Measurement, SceneConfig, ShiftedCube};
use rand::Rng;

/// Hard cap on dense matrix entries (32 MB of `f64`).
pub const MAX_DENSE_ENTRIES: usize = 4_194_304;

/// Singular values below this fraction of the largest are treated as zero.
pub const PINV_RCOND: f64 = 1e-12;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

fn check_cap(rows: usize, cols: usize) -> Result<()> {
    let entries = rows.saturating_mul(cols);
    if entries > MAX_DENSE_ENTRIES {
        return Err(Error::InstanceTooLarge {
            entries,
            cap: MAX_DENSE_ENTRIES,
        });
    }
    Ok(())
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        check_cap(rows, cols)?;
        Ok(DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        })
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut m = Self::zeros(n, n)?;
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        Ok(m)
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_cap(rows, cols)?;
        if data.len() != rows * cols {
            return Err(mismatch("dense matrix", rows * cols, data.len()));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    fn from_nalgebra(m: &DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = m.shape();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(m[(r, c)]);
            }
        }
        Self::from_row_major(rows, cols, data)
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut data = Vec::with_capacity(self.data.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                data.push(self.get(r, c));
            }
        }
        DenseMatrix {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != rhs.rows {
            return Err(mismatch("matrix product", self.cols, rhs.rows));
        }
        check_cap(self.rows, rhs.cols)?;
        Self::from_nalgebra(&(self.to_nalgebra() * rhs.to_nalgebra()))
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Frobenius norm of `self - other`.
    pub fn distance(&self, other: &DenseMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Materialize `Phi` as an `n x nC` matrix, `n = H*W'`.
///
/// Rows follow [`flatten_pixel`], columns follow [`flatten_index`]; block `c`
/// is `diag(vec(M(:, :, c)))`.
pub fn build_dense(op: &SensingOperator) -> Result<DenseMatrix> {
    let cfg = op.config();
    let n = cfg.measurement_len();
    let cols = n.saturating_mul(cfg.bands());
    let mut phi = DenseMatrix::zeros(n, cols)?;
    let mask = op.shifted_mask();
    for c in 0..cfg.bands() {
        for u in 0..cfg.height() {
            for v in 0..cfg.measurement_width() {
                let r = flatten_pixel(u, v, cfg)?;
                let k = flatten_index(u, v, c, cfg)?;
                phi.data[r * cols + k] = mask.get(u, v, c);
            }
        }
    }
    Ok(phi)
}

/// Moore-Penrose pseudo-inverse via SVD.
pub fn dense_pinv(m: &DenseMatrix) -> Result<DenseMatrix> {
    check_cap(m.rows, m.cols)?;
    let svd = m
        .to_nalgebra()
        .try_svd(true, true, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::NumericalFailure("SVD did not converge".into()))?;
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let s_max = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = PINV_RCOND * s_max;
    let k = svd.singular_values.len();
    // pinv = V diag(1/s) U^T, with small singular values dropped.
    let mut pinv = DMatrix::<f64>::zeros(m.cols, m.rows);
    for i in 0..k {
        let s = svd.singular_values[i];
        if s <= cutoff || s == 0.0 {
            continue;
        }
        let v_col = v_t.row(i).transpose();
        let u_col = u.column(i);
        pinv += (v_col * u_col.transpose()) / s;
    }
    DenseMatrix::from_nalgebra(&pinv)
}

/// Plain matrix-vector product.
pub fn dense_apply(m: &DenseMatrix, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != m.cols {
        return Err(mismatch("dense matrix-vector product", m.cols, v.len()));
    }
    Ok(m.data
        .chunks_exact(m.cols)
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect())
}

/// Vectorize a detector-domain cube in [`flatten_index`] order.
pub fn vectorize_shifted(cube: &ShiftedCube) -> Vec<f64> {
    let cfg = cube.config();
    let mut out = vec![0.0; cfg.measurement_len() * cfg.bands()];
    for c in 0..cfg.bands() {
        for u in 0..cfg.height() {
            for v in 0..cfg.measurement_width() {
                out[flatten_index(u, v, c, cfg).expect("in range")] = cube.get(u, v, c);
            }
        }
    }
    out
}

/// Inverse of [`vectorize_shifted`].
pub fn unvectorize_shifted(config: &SceneConfig, x: &[f64]) -> Result<ShiftedCube> {
    if x.len() != config.measurement_len() * config.bands() {
        return Err(mismatch(
            "vectorized cube",
            config.measurement_len() * config.bands(),
            x.len(),
        ));
    }
    ShiftedCube::from_fn(config, |u, v, c| {
        x[flatten_index(u, v, c, config).expect("in range")]
    })
}

/// Vectorize a measurement in [`flatten_pixel`] order.
pub fn vectorize_measurement(meas: &Measurement) -> Vec<f64> {
    let cfg = meas.config();
    let mut out = vec![0.0; cfg.measurement_len()];
    for u in 0..cfg.height() {
        for v in 0..cfg.measurement_width() {
            out[flatten_pixel(u, v, cfg).expect("in range")] = meas.get(u, v);
        }
    }
    out
}

pub fn unvectorize_measurement(config: &SceneConfig, y: &[f64]) -> Result<Measurement> {
    if y.len() != config.measurement_len() {
        return Err(mismatch(
            "vectorized measurement",
            config.measurement_len(),
            y.len(),
        ));
    }
    Measurement::from_fn(config, |u, v| {
        y[flatten_pixel(u, v, config).expect("in range")]
    })
}

/// Relative error of every matrix-free operation against the dense oracle,
/// measured in `flatten_index` coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OracleComparison {
    pub phi: f64,
    pub phi_t: f64,
    pub pinv: f64,
    pub range: f64,
    pub null: f64,
    pub rnd_combine: f64,
}

impl OracleComparison {
    /// `(name, relative error)` pairs in a fixed order.
    pub fn entries(&self) -> [(&'static str, f64); 6] {
        [
            ("phi_apply", self.phi),
            ("phi_t_apply", self.phi_t),
            ("pinv_apply", self.pinv),
            ("range_project", self.range),
            ("null_project", self.null),
            ("rnd_combine", self.rnd_combine),
        ]
    }

    pub fn max(&self) -> f64 {
        self.entries().iter().map(|(_, e)| *e).fold(0.0, f64::max)
    }

    /// First operation whose error exceeds `tol`.
    pub fn first_breach(&self, tol: f64) -> Option<(&'static str, f64)> {
        self.entries()
            .into_iter()
            .find(|(_, e)| e.is_nan() || *e > tol)
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Normwise relative error `|a - b| / max(|b|, input_norm)`. The input norm
/// keeps the ratio meaningful when the exact result is zero, e.g. the null
/// projection of a single-band instance.
fn relative_error(actual: &[f64], expected: &[f64], input_norm: f64) -> f64 {
    let diff = actual
        .iter()
        .zip(expected)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let scale = l2(expected).max(input_norm);
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Run every matrix-free map on `x`, `q`, `y` and compare with `Phi`,
/// `Phi^T` and the SVD pseudo-inverse built from the same operator.
pub fn compare_with_oracle(
    op: &SensingOperator,
    x: &HsiCube,
    q: &HsiCube,
    y: &Measurement,
) -> Result<OracleComparison> {
    let phi = build_dense(op)?;
    let phi_t = phi.transpose();
    let pinv = dense_pinv(&phi)?;
    let projector = pinv.matmul(&phi)?;

    let scene_vec = |cube: &HsiCube| vectorize_shifted(&shift_cube(cube));
    let xv = scene_vec(x);
    let qv = scene_vec(q);
    let yv = vectorize_measurement(y);

    let phi_ref = dense_apply(&phi, &xv)?;
    let phi_t_ref = dense_apply(&phi_t, &yv)?;
    let pinv_ref = dense_apply(&pinv, &yv)?;
    let range_ref = dense_apply(&projector, &xv)?;
    let null_ref: Vec<f64> = xv.iter().zip(&range_ref).map(|(a, b)| a - b).collect();
    let q_range = dense_apply(&projector, &qv)?;
    let rnd_ref: Vec<f64> = pinv_ref
        .iter()
        .zip(&qv)
        .zip(&q_range)
        .map(|((p, q), r)| p + q - r)
        .collect();

    let (nx, ny) = (l2(&xv), l2(&yv));
    Ok(OracleComparison {
        phi: relative_error(&vectorize_measurement(&op.phi_apply(x)?), &phi_ref, nx),
        phi_t: relative_error(&scene_vec(&op.phi_t_apply(y)?), &phi_t_ref, ny),
        pinv: relative_error(&scene_vec(&op.pinv_apply(y)?), &pinv_ref, ny),
        range: relative_error(&scene_vec(&op.range_project(x)?), &range_ref, nx),
        null: relative_error(&scene_vec(&op.null_project(x)?), &null_ref, nx),
        rnd_combine: relative_error(
            &scene_vec(&op.rnd_combine(y, q)?),
            &rnd_ref,
            ny.max(l2(&qv)),
        ),
    })
}

/// Random oracle instance: Bernoulli(`density`) mask made full rank,
/// uniform cubes `x` and `q`, and a uniform measurement `y`.
#[derive(Debug, Clone)]
pub struct OracleInstance {
    pub op: SensingOperator,
    pub x: HsiCube,
    pub q: HsiCube,
    pub y: Measurement,
}

impl OracleInstance {
    pub fn random(config: &SceneConfig, density: f64, seed: u64) -> Result<Self> {
        let cols = config.measurement_len().saturating_mul(config.bands());
        check_cap(config.measurement_len(), cols)?;
        let mask = gen_mask(config.height(), config.width(), density, seed)?;
        let (mask, _) = repair_full_rank(&mask, config)?;
        let op = SensingOperator::new(&mask, config)?;
        let x = random_cube(config, -1.0, 1.0, seed ^ 0x5851_f42d)?;
        let q = random_cube(config, -1.0, 1.0, seed ^ 0x1405_7b7e)?;
        let mut rng = seeded_rng(seed ^ 0x2545_f491);
        let y = Measurement::from_fn(config, |_, _| rng.random::<f64>() * 2.0 - 1.0)?;
        Ok(OracleInstance { op, x, q, y })
    }

    pub fn compare(&self) -> Result<OracleComparison> {
        compare_with_oracle(&self.op, &self.x, &self.q, &self.y)
    }
}
