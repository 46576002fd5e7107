//! Anisotropic total-variation denoising.
//!
//! Solves, per band,
//!
//! ```text
//! min_z  1/2 |z - f|^2 + strength * sum(|z[i+1,j] - z[i,j]| + |z[i,j+1] - z[i,j]|)
//! ```
//!
//! by fast gradient projection on the dual (box-constrained) problem. The
//! iteration count is fixed, so the output is deterministic.

use rayon::prelude::*;

use crate::error::Result;
use crate::tensor::HsiCube;

use super::Prior;

/// Lipschitz bound of `D D^T` for 2D forward differences.
const DIFF_NORM_SQ: f64 = 8.0;

/// Total-variation prior with a fixed inner iteration budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvPrior {
    pub inner_iterations: usize,
}

impl Default for TvPrior {
    fn default() -> Self {
        TvPrior {
            inner_iterations: 20,
        }
    }
}

impl Prior for TvPrior {
    fn denoise(&self, cube: &HsiCube, strength: f64) -> Result<HsiCube> {
        tv_denoise(cube, strength, self.inner_iterations)
    }
}

/// TV proximal step applied independently to every band.
pub fn tv_denoise(cube: &HsiCube, strength: f64, inner_iterations: usize) -> Result<HsiCube> {
    if strength <= 0.0 || inner_iterations == 0 {
        return Ok(cube.clone());
    }
    let h = cube.config().height();
    let w = cube.plane_width();
    let mut data = cube.data().to_vec();
    data.par_chunks_mut(h * w)
        .for_each(|plane| denoise_plane(plane, h, w, strength, inner_iterations));
    HsiCube::new(cube.config(), data)
}

/// Dual variables: `p` on vertical edges (`(h-1) x w`), `q` on horizontal
/// edges (`h x (w-1)`).
struct Dual {
    p: Vec<f64>,
    q: Vec<f64>,
}

impl Dual {
    fn zeros(h: usize, w: usize) -> Self {
        Dual {
            p: vec![0.0; h.saturating_sub(1) * w],
            q: vec![0.0; h * w.saturating_sub(1)],
        }
    }
}

/// `out = f - lambda * D^T(dual)`.
fn primal(f: &[f64], dual: &Dual, h: usize, w: usize, lambda: f64, out: &mut [f64]) {
    out.copy_from_slice(f);
    for i in 0..h.saturating_sub(1) {
        for j in 0..w {
            let e = lambda * dual.p[i * w + j];
            // D^T p: +p on the upper pixel's outflow, -p on the lower.
            out[i * w + j] += e;
            out[(i + 1) * w + j] -= e;
        }
    }
    let wq = w.saturating_sub(1);
    for i in 0..h {
        for j in 0..wq {
            let e = lambda * dual.q[i * wq + j];
            out[i * w + j] += e;
            out[i * w + j + 1] -= e;
        }
    }
}

fn denoise_plane(plane: &mut [f64], h: usize, w: usize, lambda: f64, iterations: usize) {
    let f = plane.to_vec();
    let mut z = vec![0.0; f.len()];
    let mut dual = Dual::zeros(h, w);
    let mut extrap = Dual::zeros(h, w);
    let mut t = 1.0_f64;
    let step = 1.0 / (DIFF_NORM_SQ * lambda);
    let wq = w.saturating_sub(1);

    for _ in 0..iterations {
        primal(&f, &extrap, h, w, lambda, &mut z);

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;

        for i in 0..h.saturating_sub(1) {
            for j in 0..w {
                let k = i * w + j;
                let grad = z[(i + 1) * w + j] - z[k];
                let next = (extrap.p[k] + step * grad).clamp(-1.0, 1.0);
                extrap.p[k] = next + momentum * (next - dual.p[k]);
                dual.p[k] = next;
            }
        }
        for i in 0..h {
            for j in 0..wq {
                let k = i * wq + j;
                let grad = z[i * w + j + 1] - z[i * w + j];
                let next = (extrap.q[k] + step * grad).clamp(-1.0, 1.0);
                extrap.q[k] = next + momentum * (next - dual.q[k]);
                dual.q[k] = next;
            }
        }
        t = t_next;
    }
    primal(&f, &dual, h, w, lambda, plane);
}

/// Anisotropic TV of one row-major plane.
pub fn anisotropic_tv(plane: &[f64], h: usize, w: usize) -> f64 {
    let mut tv = 0.0;
    for i in 0..h {
        for j in 0..w {
            let v = plane[i * w + j];
            if i + 1 < h {
                tv += (plane[(i + 1) * w + j] - v).abs();
            }
            if j + 1 < w {
                tv += (plane[i * w + j + 1] - v).abs();
            }
        }
    }
    tv
}
