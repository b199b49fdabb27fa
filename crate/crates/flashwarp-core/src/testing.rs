//! Synthetic inputs for tests and examples: random bandlimited fields and a
//! smooth phantom image. Kept in the library so integration tests and the CLI
//! examples share one source of fixtures.

use rand::Rng;
use rustfft::num_complex::Complex64;

use crate::fields::FourierVelocity;
use crate::grid::GridSpec;
use crate::image::Image;

/// Random Hermitian-symmetric field with spectrum strictly inside the band,
/// scaled so the spatial sup-norm is roughly `amplitude`.
pub fn random_bandlimited<R: Rng>(rng: &mut R, grid: GridSpec, amplitude: f64) -> FourierVelocity {
    let mut v = FourierVelocity::zeros(grid);
    let h = (grid.trunc / 2) as i64;
    for k1 in -(h - 1)..h {
        for k2 in -(h - 1)..h {
            // fill each conjugate pair once
            if (k1, k2) < (-k1, -k2) {
                continue;
            }
            for comp in 0..2 {
                let decay = 1.0 / (1.0 + (k1 * k1 + k2 * k2) as f64);
                let c = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                    * decay;
                let c = if k1 == 0 && k2 == 0 {
                    Complex64::new(c.re, 0.0)
                } else {
                    c
                };
                v.coeffs_mut()[[grid.band_index(k1), grid.band_index(k2), comp]] = c;
                v.coeffs_mut()[[grid.band_index(-k1), grid.band_index(-k2), comp]] = c.conj();
            }
        }
    }
    let sup = crate::fields::to_spatial(&v, &grid)
        .expect("fresh symmetric field")
        .max_abs();
    if sup > 0.0 {
        v.scale(amplitude / sup);
    }
    v
}

/// Smooth low-frequency velocity field with sup-norm `amplitude`; suitable for
/// geodesic-shooting tests where fold-over must not occur.
pub fn smooth_velocity(grid: GridSpec, amplitude: f64) -> FourierVelocity {
    let tau = 2.0 * std::f64::consts::PI;
    let f = crate::fields::SpatialVectorField::from_fn(grid, |x, y| {
        [
            (tau * x).sin() * (tau * y).cos() + 0.3 * (tau * y).sin(),
            -(tau * x).cos() * (tau * y).sin() + 0.2 * (2.0 * tau * x).cos(),
        ]
    });
    let mut v = crate::fields::to_spectral(&f, &grid).expect("grids match");
    let sup = crate::fields::to_spatial(&v, &grid).unwrap().max_abs();
    v.scale(amplitude / sup);
    v
}

/// Concentric smooth blob phantom in `[0,1]` intensities. Rich gradients out
/// to radius ≈ 0.37 so a 3×3 grid of noise centers all see image structure.
pub fn phantom(nx: usize, ny: usize) -> Image {
    let mut img = Image::zeros(nx, ny);
    let rings: [(f64, f64, f64); 4] = [
        // (radius, width, amplitude)
        (0.0, 0.085, 0.95),
        (0.16, 0.030, -0.55),
        (0.26, 0.028, 0.60),
        (0.355, 0.022, 0.45),
    ];
    for ix in 0..nx {
        let x = ix as f64 / nx as f64;
        for iy in 0..ny {
            let y = iy as f64 / ny as f64;
            let r = ((x - 0.5).powi(2) + (y - 0.5).powi(2)).sqrt();
            let mut v = 0.05;
            for (r0, w, a) in rings {
                v += a * (-(r - r0).powi(2) / (2.0 * w * w)).exp();
            }
            img.pixels_mut()[[ix, iy]] = v.clamp(0.0, 1.0);
        }
    }
    img
}
