//! Scalar grayscale images on the periodic pixel lattice.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::grid::GridSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pixels: Array2<f64>,
}

impl Image {
    pub fn zeros(nx: usize, ny: usize) -> Self {
        Image {
            pixels: Array2::zeros((nx, ny)),
        }
    }

    pub fn from_pixels(pixels: Array2<f64>) -> Self {
        Image { pixels }
    }

    pub fn constant(nx: usize, ny: usize, value: f64) -> Self {
        Image {
            pixels: Array2::from_elem((nx, ny), value),
        }
    }

    pub fn nx(&self) -> usize {
        self.pixels.dim().0
    }

    pub fn ny(&self) -> usize {
        self.pixels.dim().1
    }

    pub fn pixels(&self) -> &Array2<f64> {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut Array2<f64> {
        &mut self.pixels
    }

    pub fn min_max(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &p in self.pixels.iter() {
            lo = lo.min(p);
            hi = hi.max(p);
        }
        (lo, hi)
    }

    pub fn is_finite(&self) -> bool {
        self.pixels.iter().all(|p| p.is_finite())
    }

    pub fn same_shape(&self, other: &Image) -> Result<()> {
        if self.pixels.dim() == other.pixels.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "images of shape {:?} and {:?}",
                self.pixels.dim(),
                other.pixels.dim()
            )))
        }
    }

    pub fn matches_grid(&self, g: &GridSpec) -> Result<()> {
        if self.pixels.dim() == (g.nx, g.ny) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "image of shape {:?} on a {}x{} grid",
                self.pixels.dim(),
                g.nx,
                g.ny
            )))
        }
    }

    /// Bilinear sample at domain coordinates `(x, y)` with periodic wrap.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let (nx, ny) = self.pixels.dim();
        let gx = x * nx as f64;
        let gy = y * ny as f64;
        let ix = gx.floor();
        let iy = gy.floor();
        let fx = gx - ix;
        let fy = gy - iy;
        let i0 = (ix as i64).rem_euclid(nx as i64) as usize;
        let j0 = (iy as i64).rem_euclid(ny as i64) as usize;
        let i1 = (i0 + 1) % nx;
        let j1 = (j0 + 1) % ny;
        let p = &self.pixels;
        (1.0 - fx) * (1.0 - fy) * p[[i0, j0]]
            + fx * (1.0 - fy) * p[[i1, j0]]
            + (1.0 - fx) * fy * p[[i0, j1]]
            + fx * fy * p[[i1, j1]]
    }

    /// Pixelwise mean and biased (1/n) variance of a sample of images.
    pub fn sample_moments(images: &[Image]) -> Result<(Image, Image)> {
        let first = images
            .first()
            .ok_or_else(|| Error::InvalidParameter("empty image sample".into()))?;
        let (nx, ny) = first.pixels.dim();
        for img in images {
            first.same_shape(img)?;
        }
        let n = images.len() as f64;
        let mut mean = Array2::zeros((nx, ny));
        for img in images {
            mean += &img.pixels;
        }
        mean.mapv_inplace(|v| v / n);
        let mut var = Array2::zeros((nx, ny));
        for img in images {
            let d = &img.pixels - &mean;
            var += &(&d * &d);
        }
        var.mapv_inplace(|v| v / n);
        Ok((Image::from_pixels(mean), Image::from_pixels(var)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_is_exact_on_lattice() {
        let mut img = Image::zeros(8, 8);
        for ix in 0..8 {
            for iy in 0..8 {
                img.pixels_mut()[[ix, iy]] = (ix * 8 + iy) as f64;
            }
        }
        for ix in 0..8 {
            for iy in 0..8 {
                let v = img.sample(ix as f64 / 8.0, iy as f64 / 8.0);
                assert!((v - img.pixels()[[ix, iy]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bilinear_wraps_periodically() {
        let mut img = Image::zeros(4, 4);
        img.pixels_mut()[[0, 0]] = 1.0;
        // halfway between the last and first pixel along x
        let v = img.sample(1.0 - 0.5 / 4.0, 0.0);
        assert!((v - 0.5).abs() < 1e-12);
        let v = img.sample(-0.1, -0.1);
        assert!(v.is_finite());
    }

    #[test]
    fn moments_of_two_images() {
        let a = Image::constant(4, 4, 0.0);
        let b = Image::constant(4, 4, 1.0);
        let (mean, var) = Image::sample_moments(&[a, b]).unwrap();
        assert!((mean.pixels()[[2, 2]] - 0.5).abs() < 1e-15);
        assert!((var.pixels()[[1, 3]] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn single_image_has_zero_variance() {
        let a = Image::constant(4, 4, 0.7);
        let (_, var) = Image::sample_moments(&[a]).unwrap();
        assert!(var.pixels().iter().all(|&v| v == 0.0));
    }
}
