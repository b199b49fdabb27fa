//! Plan-cached 2D complex FFTs on row-major buffers.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use once_cell::sync::Lazy;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

static PLANS: Lazy<Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>> =
    Lazy::new(|| Mutex::new(HashMap::new()));

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut cache = PLANS.lock().unwrap();
    cache
        .entry((len, inverse))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if inverse {
                planner.plan_fft_inverse(len)
            } else {
                planner.plan_fft_forward(len)
            }
        })
        .clone()
}

/// 2D transform over an `nx × ny` row-major buffer (rows of length `ny`
/// contiguous). Forward and inverse are both unnormalized; callers apply
/// `1/(nx·ny)` on the forward side.
pub(crate) struct Fft2d {
    nx: usize,
    ny: usize,
    fwd_row: Arc<dyn Fft<f64>>,
    fwd_col: Arc<dyn Fft<f64>>,
    inv_row: Arc<dyn Fft<f64>>,
    inv_col: Arc<dyn Fft<f64>>,
    transposed: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Fft2d {
    pub fn new(nx: usize, ny: usize) -> Self {
        let fwd_row = plan(ny, false);
        let fwd_col = plan(nx, false);
        let inv_row = plan(ny, true);
        let inv_col = plan(nx, true);
        let scratch_len = fwd_row
            .get_inplace_scratch_len()
            .max(fwd_col.get_inplace_scratch_len())
            .max(inv_row.get_inplace_scratch_len())
            .max(inv_col.get_inplace_scratch_len());
        Fft2d {
            nx,
            ny,
            fwd_row,
            fwd_col,
            inv_row,
            inv_col,
            transposed: vec![Complex64::ZERO; nx * ny],
            scratch: vec![Complex64::ZERO; scratch_len],
        }
    }

    fn transform(&mut self, data: &mut [Complex64], inverse: bool) {
        assert_eq!(data.len(), self.nx * self.ny);
        let (row, col) = if inverse {
            (self.inv_row.clone(), self.inv_col.clone())
        } else {
            (self.fwd_row.clone(), self.fwd_col.clone())
        };
        row.process_with_scratch(data, &mut self.scratch);
        transpose(data, &mut self.transposed, self.nx, self.ny);
        col.process_with_scratch(&mut self.transposed, &mut self.scratch);
        transpose(&self.transposed, data, self.ny, self.nx);
    }

    pub fn forward(&mut self, data: &mut [Complex64]) {
        self.transform(data, false);
    }

    pub fn inverse(&mut self, data: &mut [Complex64]) {
        self.transform(data, true);
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_matches_input() {
        let (nx, ny) = (8, 12);
        let mut fft = Fft2d::new(nx, ny);
        let orig: Vec<Complex64> = (0..nx * ny)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let mut buf = orig.clone();
        fft.forward(&mut buf);
        fft.inverse(&mut buf);
        let norm = (nx * ny) as f64;
        for (a, b) in buf.iter().zip(&orig) {
            assert!((a.re / norm - b.re).abs() < 1e-12);
            assert!((a.im / norm - b.im).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_of_single_mode_is_delta() {
        let (nx, ny) = (16, 16);
        let mut fft = Fft2d::new(nx, ny);
        // f(x,y) = exp(2*pi*i*(3x + 2y)) sampled on the lattice
        let mut buf = vec![Complex64::ZERO; nx * ny];
        for ix in 0..nx {
            for iy in 0..ny {
                let phase = 2.0 * std::f64::consts::PI
                    * (3.0 * ix as f64 / nx as f64 + 2.0 * iy as f64 / ny as f64);
                buf[ix * ny + iy] = Complex64::new(phase.cos(), phase.sin());
            }
        }
        fft.forward(&mut buf);
        let n = (nx * ny) as f64;
        for ix in 0..nx {
            for iy in 0..ny {
                let v = buf[ix * ny + iy] / n;
                let expect = if ix == 3 && iy == 2 { 1.0 } else { 0.0 };
                assert!((v.re - expect).abs() < 1e-12 && v.im.abs() < 1e-12);
            }
        }
    }
}
