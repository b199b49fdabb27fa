//! Bandlimited spectral vector fields and their spatial counterparts.
//!
//! A [`FourierVelocity`] stores the `trunc × trunc` block of signed
//! frequencies `k ∈ {-t/2, …, t/2-1}` per component. Real spatial fields
//! require Hermitian symmetry `c(-k) = conj(c(k))`; for even `trunc` the
//! unpaired `-t/2` edge is kept identically zero, so the effective band is
//! `|k| ≤ t/2 - 1`.

use ndarray::{Array3, Zip};
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::Fft2d;
use crate::grid::GridSpec;

/// Symmetry residuals above this mark a spectral state as corrupt.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Real vector field sampled on the full pixel lattice, components last.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialVectorField {
    grid: GridSpec,
    values: Array3<f64>,
}

impl SpatialVectorField {
    pub fn zeros(grid: GridSpec) -> Self {
        SpatialVectorField {
            grid,
            values: Array3::zeros((grid.nx, grid.ny, 2)),
        }
    }

    pub fn from_values(grid: GridSpec, values: Array3<f64>) -> Result<Self> {
        if values.dim() != (grid.nx, grid.ny, 2) {
            return Err(Error::DimensionMismatch(format!(
                "spatial field of shape {:?} on a {}x{} grid",
                values.dim(),
                grid.nx,
                grid.ny
            )));
        }
        Ok(SpatialVectorField { grid, values })
    }

    /// Build a field by evaluating `f(x, y) -> [vx, vy]` on the lattice.
    pub fn from_fn(grid: GridSpec, mut f: impl FnMut(f64, f64) -> [f64; 2]) -> Self {
        let mut values = Array3::zeros((grid.nx, grid.ny, 2));
        for ix in 0..grid.nx {
            let x = ix as f64 * grid.hx();
            for iy in 0..grid.ny {
                let y = iy as f64 * grid.hy();
                let v = f(x, y);
                values[[ix, iy, 0]] = v[0];
                values[[ix, iy, 1]] = v[1];
            }
        }
        SpatialVectorField { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array3<f64> {
        &mut self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Bilinear sample of both components at domain coordinates, periodic wrap.
    pub fn sample(&self, x: f64, y: f64) -> [f64; 2] {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
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
        let mut out = [0.0; 2];
        for (comp, o) in out.iter_mut().enumerate() {
            let v = &self.values;
            *o = (1.0 - fx) * (1.0 - fy) * v[[i0, j0, comp]]
                + fx * (1.0 - fy) * v[[i1, j0, comp]]
                + (1.0 - fx) * fy * v[[i0, j1, comp]]
                + fx * fy * v[[i1, j1, comp]];
        }
        out
    }
}

/// Complex coefficients of a bandlimited 2D vector field.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierVelocity {
    grid: GridSpec,
    coeffs: Array3<Complex64>,
}

impl FourierVelocity {
    pub fn zeros(grid: GridSpec) -> Self {
        FourierVelocity {
            grid,
            coeffs: Array3::zeros((grid.trunc, grid.trunc, 2)),
        }
    }

    pub fn from_coeffs(grid: GridSpec, coeffs: Array3<Complex64>) -> Result<Self> {
        if coeffs.dim() != (grid.trunc, grid.trunc, 2) {
            return Err(Error::DimensionMismatch(format!(
                "spectral field of shape {:?} with trunc {}",
                coeffs.dim(),
                grid.trunc
            )));
        }
        let v = FourierVelocity { grid, coeffs };
        let residual = v.hermitian_residual();
        if residual > SYMMETRY_TOL * (1.0 + v.max_abs()) {
            return Err(Error::SymmetryViolation { residual });
        }
        Ok(v)
    }

    /// Single real mode `amp·cos(2π k·x + phase)` in one component, written as
    /// the conjugate coefficient pair.
    pub fn single_mode(grid: GridSpec, k: [i64; 2], comp: usize, amp: f64, phase: f64) -> Self {
        let mut v = FourierVelocity::zeros(grid);
        let c = 0.5 * amp * Complex64::new(phase.cos(), phase.sin());
        if k == [0, 0] {
            v.coeffs[[grid.band_index(0), grid.band_index(0), comp]] = Complex64::new(amp, 0.0);
            return v;
        }
        assert!(grid.freq_is_paired(k[0]) && grid.freq_is_paired(k[1]));
        v.coeffs[[grid.band_index(k[0]), grid.band_index(k[1]), comp]] = c;
        v.coeffs[[grid.band_index(-k[0]), grid.band_index(-k[1]), comp]] = c.conj();
        v
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn coeffs(&self) -> &Array3<Complex64> {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut Array3<Complex64> {
        &mut self.coeffs
    }

    /// Coefficient at signed frequency `(k1, k2)`.
    pub fn coeff(&self, k1: i64, k2: i64, comp: usize) -> Complex64 {
        self.coeffs[[self.grid.band_index(k1), self.grid.band_index(k2), comp]]
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.norm()))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.re == 0.0 && c.im == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn scale(&mut self, a: f64) {
        self.coeffs.mapv_inplace(|c| c * a);
    }

    pub fn add_scaled(&mut self, a: f64, other: &FourierVelocity) {
        Zip::from(&mut self.coeffs)
            .and(&other.coeffs)
            .for_each(|dst, src| *dst += a * src);
    }

    /// Max deviation from `c(-k) = conj(c(k))`, counting any unpaired-edge
    /// content as a violation.
    pub fn hermitian_residual(&self) -> f64 {
        let g = &self.grid;
        let mut residual: f64 = 0.0;
        for a1 in 0..g.trunc {
            let k1 = g.freq(a1);
            for a2 in 0..g.trunc {
                let k2 = g.freq(a2);
                for comp in 0..2 {
                    let c = self.coeffs[[a1, a2, comp]];
                    if g.freq_is_paired(k1) && g.freq_is_paired(k2) {
                        let mirror = self.coeffs[[g.band_index(-k1), g.band_index(-k2), comp]];
                        residual = residual.max((c - mirror.conj()).norm());
                    } else {
                        residual = residual.max(c.norm());
                    }
                }
            }
        }
        residual
    }

    /// L² pairing `Σ_k Re(a(k)·conj(b(k)))` over both components; with the
    /// forward-normalized transform this equals the lattice average of `a·b`.
    pub fn inner(&self, other: &FourierVelocity) -> f64 {
        Zip::from(&self.coeffs)
            .and(&other.coeffs)
            .fold(0.0, |acc, a, b| acc + (a * b.conj()).re)
    }
}

impl crate::integrators::OdeState for FourierVelocity {
    fn scaled_add(&mut self, a: f64, other: &Self) {
        self.add_scaled(a, other);
    }
}

/// Forward transform: full-grid FFT, band extraction, unpaired edge zeroed.
pub fn to_spectral(f: &SpatialVectorField, g: &GridSpec) -> Result<FourierVelocity> {
    f.grid().ensure_matches(g)?;
    let mut fft = Fft2d::new(g.nx, g.ny);
    let mut out = FourierVelocity::zeros(*g);
    let mut buf = vec![Complex64::ZERO; g.nx * g.ny];
    let norm = 1.0 / (g.nx * g.ny) as f64;
    for comp in 0..2 {
        for ix in 0..g.nx {
            for iy in 0..g.ny {
                buf[ix * g.ny + iy] = Complex64::new(f.values()[[ix, iy, comp]], 0.0);
            }
        }
        fft.forward(&mut buf);
        for a1 in 0..g.trunc {
            let k1 = g.freq(a1);
            let src1 = GridSpec::wrap_freq(k1, g.nx);
            for a2 in 0..g.trunc {
                let k2 = g.freq(a2);
                if g.freq_is_paired(k1) && g.freq_is_paired(k2) {
                    let src2 = GridSpec::wrap_freq(k2, g.ny);
                    out.coeffs_mut()[[a1, a2, comp]] = buf[src1 * g.ny + src2] * norm;
                }
            }
        }
    }
    debug_assert!(out.hermitian_residual() <= SYMMETRY_TOL * (1.0 + out.max_abs()));
    Ok(out)
}

/// Inverse transform: zero-padded embedding and unnormalized inverse FFT.
/// Fails if Hermitian symmetry is violated beyond [`SYMMETRY_TOL`].
pub fn to_spatial(v: &FourierVelocity, g: &GridSpec) -> Result<SpatialVectorField> {
    v.grid().ensure_matches(g)?;
    let residual = v.hermitian_residual();
    if residual > SYMMETRY_TOL * (1.0 + v.max_abs()) {
        return Err(Error::SymmetryViolation { residual });
    }
    let mut fft = Fft2d::new(g.nx, g.ny);
    let mut out = SpatialVectorField::zeros(*g);
    let mut buf = vec![Complex64::ZERO; g.nx * g.ny];
    for comp in 0..2 {
        buf.fill(Complex64::ZERO);
        for a1 in 0..g.trunc {
            let dst1 = GridSpec::wrap_freq(g.freq(a1), g.nx);
            for a2 in 0..g.trunc {
                let dst2 = GridSpec::wrap_freq(g.freq(a2), g.ny);
                buf[dst1 * g.ny + dst2] = v.coeffs()[[a1, a2, comp]];
            }
        }
        fft.inverse(&mut buf);
        for ix in 0..g.nx {
            for iy in 0..g.ny {
                out.values_mut()[[ix, iy, comp]] = buf[ix * g.ny + iy].re;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::new(64, 64, 16).unwrap()
    }

    #[test]
    fn constant_field_is_dc_only() {
        let g = grid();
        let f = SpatialVectorField::from_fn(g, |_, _| [1.0, 0.0]);
        let v = to_spectral(&f, &g).unwrap();
        for a1 in 0..g.trunc {
            for a2 in 0..g.trunc {
                for comp in 0..2 {
                    let c = v.coeffs()[[a1, a2, comp]];
                    let expect = if g.freq(a1) == 0 && g.freq(a2) == 0 && comp == 0 {
                        1.0
                    } else {
                        0.0
                    };
                    assert!((c.re - expect).abs() < 1e-13 && c.im.abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn single_sine_gives_conjugate_pair() {
        let g = grid();
        let f = SpatialVectorField::from_fn(g, |x, _| [(2.0 * std::f64::consts::PI * x).sin(), 0.0]);
        let v = to_spectral(&f, &g).unwrap();
        // sin(2πx) = (e^{2πix} − e^{−2πix}) / 2i
        let mut nonzero = 0;
        for a1 in 0..g.trunc {
            for a2 in 0..g.trunc {
                for comp in 0..2 {
                    let c = v.coeffs()[[a1, a2, comp]];
                    if c.norm() > 1e-12 {
                        nonzero += 1;
                        assert_eq!(comp, 0);
                        assert_eq!(g.freq(a2), 0);
                        let k1 = g.freq(a1);
                        assert!(k1 == 1 || k1 == -1);
                        let expect = Complex64::new(0.0, -0.5 * k1 as f64);
                        assert!((c - expect).norm() < 1e-12);
                    }
                }
            }
        }
        assert_eq!(nonzero, 2);
    }

    #[test]
    fn roundtrip_identity_on_bandlimited_fields() {
        use rand::prelude::*;
        let g = grid();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let v = crate::testing::random_bandlimited(&mut rng, g, 1.0);
        let f = to_spatial(&v, &g).unwrap();
        let back = to_spectral(&f, &g).unwrap();
        let scale = v.max_abs();
        let mut err: f64 = 0.0;
        for (a, b) in back.coeffs().iter().zip(v.coeffs().iter()) {
            err = err.max((a - b).norm());
        }
        assert!(err / scale < 1e-12, "roundtrip error {err:.3e}");
    }

    #[test]
    fn to_spatial_of_zero_and_dc() {
        let g = grid();
        let z = FourierVelocity::zeros(g);
        let f = to_spatial(&z, &g).unwrap();
        assert_eq!(f.max_abs(), 0.0);

        let mut dc = FourierVelocity::zeros(g);
        dc.coeffs_mut()[[g.band_index(0), g.band_index(0), 1]] = Complex64::new(0.37, 0.0);
        let f = to_spatial(&dc, &g).unwrap();
        for ix in 0..g.nx {
            for iy in 0..g.ny {
                assert!((f.values()[[ix, iy, 1]] - 0.37).abs() < 1e-13);
                assert!(f.values()[[ix, iy, 0]].abs() < 1e-13);
            }
        }
    }

    #[test]
    fn broken_symmetry_is_rejected() {
        let g = grid();
        let mut v = FourierVelocity::zeros(g);
        v.coeffs_mut()[[g.band_index(2), g.band_index(1), 0]] = Complex64::new(1.0, 0.5);
        // mirror left at zero
        let err = to_spatial(&v, &g).unwrap_err();
        assert!(matches!(err, Error::SymmetryViolation { .. }));
    }

    #[test]
    fn transforms_are_linear() {
        use rand::prelude::*;
        let g = GridSpec::new(32, 32, 16).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let a = crate::testing::random_bandlimited(&mut rng, g, 1.0);
        let b = crate::testing::random_bandlimited(&mut rng, g, 1.0);
        let mut combo = a.clone();
        combo.scale(0.7);
        combo.add_scaled(-1.3, &b);
        let fa = to_spatial(&a, &g).unwrap();
        let fb = to_spatial(&b, &g).unwrap();
        let fc = to_spatial(&combo, &g).unwrap();
        for ix in 0..g.nx {
            for iy in 0..g.ny {
                for comp in 0..2 {
                    let expect = 0.7 * fa.values()[[ix, iy, comp]] - 1.3 * fb.values()[[ix, iy, comp]];
                    assert!((fc.values()[[ix, iy, comp]] - expect).abs() < 1e-11);
                }
            }
        }
    }
}
