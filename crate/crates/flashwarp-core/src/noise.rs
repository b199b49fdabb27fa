//! Eulerian noise fields: isotropic Gaussian kernels fixed on the domain,
//! each modulating one scalar Wiener process.

use ndarray::Array4;

use crate::error::{Error, Result};
use crate::fields::{to_spatial, to_spectral, FourierVelocity, SpatialVectorField};
use crate::grid::GridSpec;

/// One Gaussian noise kernel. Both vector components carry the scalar profile
/// `lambda * tau * exp(-‖x-mu‖² / 2tau²)` (min-image distance on the periodic
/// domain), so the kernel's peak speed is `lambda * tau`: amplitudes measure
/// strength per unit kernel width. The spatial and spectral caches are the
/// bandlimited forms and stay consistent under `to_spectral` by construction;
/// every consumer (path integration and moment evolution alike) sees the same
/// field.
#[derive(Debug, Clone)]
pub struct NoiseField {
    mu: [f64; 2],
    tau: f64,
    lambda: f64,
    spatial: SpatialVectorField,
    spectrum: FourierVelocity,
    /// Cached central-difference Jacobian of the spatial form:
    /// `jacobian[[ix, iy, comp, axis]] = ∂_axis σ_comp`.
    jacobian: Array4<f64>,
}

impl NoiseField {
    pub fn new(mu: [f64; 2], tau: f64, lambda: f64, grid: &GridSpec) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "lambda must be finite and non-negative, got {lambda}"
            )));
        }
        let peak = lambda * tau;
        let raw = SpatialVectorField::from_fn(*grid, |x, y| {
            let dx = min_image(x - mu[0]);
            let dy = min_image(y - mu[1]);
            let p = peak * (-(dx * dx + dy * dy) / (2.0 * tau * tau)).exp();
            [p, p]
        });
        let mut nf = Self::from_raw_field(&raw, grid)?;
        nf.mu = mu;
        nf.tau = tau;
        nf.lambda = lambda;
        Ok(nf)
    }

    /// Build from an arbitrary raw spatial field (bandlimited on construction);
    /// lets tests exercise degenerate kernels such as constants.
    #[doc(hidden)]
    pub fn from_raw_field(raw: &SpatialVectorField, grid: &GridSpec) -> Result<Self> {
        let spectrum = to_spectral(raw, grid)?;
        let spatial = to_spatial(&spectrum, grid)?;
        let mut jacobian = Array4::zeros((grid.nx, grid.ny, 2, 2));
        let mut ws = crate::operators::SpectralWorkspace::new(*grid);
        let mut buf = ws.spatial_buffer();
        for comp in 0..2 {
            for axis in 0..2 {
                ws.band_to_spatial(&spectrum, comp, Some(axis), &mut buf);
                for ix in 0..grid.nx {
                    for iy in 0..grid.ny {
                        jacobian[[ix, iy, comp, axis]] = buf[ix * grid.ny + iy];
                    }
                }
            }
        }
        let lambda = if spatial.max_abs() == 0.0 { 0.0 } else { 1.0 };
        Ok(NoiseField {
            mu: [0.5, 0.5],
            tau: 1.0,
            lambda,
            spatial,
            spectrum,
            jacobian,
        })
    }

    pub fn mu(&self) -> [f64; 2] {
        self.mu
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn is_silent(&self) -> bool {
        self.lambda == 0.0
    }

    /// Bandlimited spatial form σ_k(x).
    pub fn spatial(&self) -> &SpatialVectorField {
        &self.spatial
    }

    /// Bandlimited spectrum σ̃_k.
    pub fn spectrum(&self) -> &FourierVelocity {
        &self.spectrum
    }

    pub fn jacobian(&self) -> &Array4<f64> {
        &self.jacobian
    }
}

#[inline]
fn min_image(d: f64) -> f64 {
    d - d.round()
}
