//! Deterministic evolution of the transition moments (⟨ψ⟩, Var[ψ], ⟨ṽ⟩)
//! under the independence closure: means of products are replaced by products
//! of means, closing the system derived from the Kolmogorov operator. Every
//! right-hand side is a pure function of the moment state itself.

use ndarray::{Array3, Zip};

use crate::error::{Error, Result};
use crate::fields::{to_spatial, FourierVelocity, SpatialVectorField};
use crate::flow::{warp_image, DeformationGrid};
use crate::grid::GridSpec;
use crate::image::Image;
use crate::integrators::{rk4_step, OdeState};
use crate::kernel::{momentum_to_velocity, velocity_to_momentum, KernelParams};
use crate::noise::NoiseField;
use crate::operators::{coadjoint_core, coadjoint_fixed_field, SpectralWorkspace};

/// Coupled first and (diagonal) second moments of the inverse flow and the
/// spectral velocity.
#[derive(Debug, Clone)]
pub struct MomentState {
    pub mean_psi: DeformationGrid,
    /// Per-component variances ⟨(ψ^γ − ⟨ψ^γ⟩)²⟩, shape (nx, ny, 2).
    pub var_psi: Array3<f64>,
    pub mean_v: FourierVelocity,
}

impl MomentState {
    pub fn initial(v0: &FourierVelocity) -> Self {
        let g = *v0.grid();
        MomentState {
            mean_psi: DeformationGrid::identity(g),
            var_psi: Array3::zeros((g.nx, g.ny, 2)),
            mean_v: v0.clone(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.mean_psi.is_finite()
            && self.var_psi.iter().all(|v| v.is_finite())
            && self.mean_v.is_finite()
    }

    fn clamp_variance(&mut self) {
        // small negative excursions are discretization noise
        self.var_psi.mapv_inplace(|v| v.max(0.0));
    }
}

impl OdeState for MomentState {
    fn scaled_add(&mut self, a: f64, other: &Self) {
        Zip::from(self.mean_psi.map_mut())
            .and(other.mean_psi.map())
            .for_each(|x, y| *x += a * y);
        Zip::from(&mut self.var_psi)
            .and(&other.var_psi)
            .for_each(|x, y| *x += a * y);
        self.mean_v.add_scaled(a, &other.mean_v);
    }
}

/// Moment images assembled from the first-order Taylor expansion of the
/// warped image around the mean deformation.
#[derive(Debug, Clone)]
pub struct MomentImages {
    pub mean_image: Image,
    pub var_image: Image,
}

/// Right-hand side of d⟨ṽ⟩/dt: the deterministic EPDiff drift at the mean
/// plus half the Stratonovich-to-Itô correction of the noise terms,
/// `-K ad*_⟨ṽ⟩⟨m̃⟩ + ½ Σ_k K ad*_σ̃_k (ad*_σ̃_k ⟨m̃⟩)`.
///
/// The diffusion `B_k(ṽ) = -K ad*_σ̃_k L ṽ` is linear in ṽ, so its Itô drift
/// correction is `½ B_k(B_k(ṽ))`, which is this nested coadjoint. Replacing
/// it by the self-advection `½ D̃[K ad*_σ̃ m̃] ∗ (K ad*_σ̃ m̃)` biases the mean
/// velocity at leading order in λ² (and, being quadratic in the momentum,
/// blows up in finite time at large amplitudes); Monte-Carlo ensembles single
/// out the nested form.
pub fn mean_v_rhs(
    mean_v: &FourierVelocity,
    noise: &[NoiseField],
    kernel: &KernelParams,
) -> Result<FourierVelocity> {
    let g = *mean_v.grid();
    for nf in noise {
        nf.spectrum().grid().ensure_matches(&g)?;
    }
    let mut ws = SpectralWorkspace::new(g);
    Ok(mean_v_rhs_ws(&mut ws, mean_v, noise, kernel))
}

fn mean_v_rhs_ws(
    ws: &mut SpectralWorkspace,
    mean_v: &FourierVelocity,
    noise: &[NoiseField],
    kernel: &KernelParams,
) -> FourierVelocity {
    let g = ws.grid;
    // the momentum vanishes with the mean velocity and annihilates every term
    if mean_v.is_zero() {
        return FourierVelocity::zeros(g);
    }
    let n = g.nx * g.ny;
    let m = velocity_to_momentum(mean_v, kernel);
    let mut v_sp = vec![0.0; 2 * n];
    let mut m_sp = vec![0.0; 2 * n];
    for comp in 0..2 {
        ws.band_to_spatial(mean_v, comp, None, &mut v_sp[comp * n..(comp + 1) * n]);
        ws.band_to_spatial(&m, comp, None, &mut m_sp[comp * n..(comp + 1) * n]);
    }
    let mut ad = FourierVelocity::zeros(g);
    coadjoint_core(ws, &v_sp, &m_sp, &mut ad);
    let mut out = momentum_to_velocity(&ad, kernel);
    out.scale(-1.0);

    let mut inner = FourierVelocity::zeros(g);
    let mut inner_sp = vec![0.0; 2 * n];
    let mut outer = FourierVelocity::zeros(g);
    for nf in noise {
        if nf.is_silent() {
            continue;
        }
        coadjoint_fixed_field(ws, nf.spatial().values(), nf.jacobian(), &m_sp, &mut inner);
        for comp in 0..2 {
            ws.band_to_spatial(&inner, comp, None, &mut inner_sp[comp * n..(comp + 1) * n]);
        }
        coadjoint_fixed_field(ws, nf.spatial().values(), nf.jacobian(), &inner_sp, &mut outer);
        let corr = momentum_to_velocity(&outer, kernel);
        out.add_scaled(0.5, &corr);
    }
    out
}

/// Right-hand side of d⟨ψ⟩/dt at every pixel:
/// `-D⟨ψ⟩·⟨v⟩ + ½ Σ_k D[D⟨ψ⟩σ_k]·(D⟨ψ⟩σ_k)`, all Jacobians by central
/// differences with periodic wrap.
pub fn mean_psi_rhs(
    mean_psi: &DeformationGrid,
    mean_v: &SpatialVectorField,
    noise: &[NoiseField],
) -> Result<Array3<f64>> {
    mean_psi.grid().ensure_matches(mean_v.grid())?;
    let g = *mean_psi.grid();
    let mut out = Array3::zeros((g.nx, g.ny, 2));
    let mut var_scratch = Array3::zeros((g.nx, g.ny, 2));
    psi_rates(&g, mean_psi, Some(mean_v), noise, &mut out, &mut var_scratch);
    Ok(out)
}

/// Right-hand side of dVar[ψ^γ]/dt at every pixel: `Σ_k (D⟨ψ⟩σ_k)_γ²`, the
/// diagonal of the diffusion matrix evaluated at the mean deformation.
pub fn var_psi_rhs(mean_psi: &DeformationGrid, noise: &[NoiseField]) -> Result<Array3<f64>> {
    let g = *mean_psi.grid();
    let mut drift_scratch = Array3::zeros((g.nx, g.ny, 2));
    let mut out = Array3::zeros((g.nx, g.ny, 2));
    psi_rates(&g, mean_psi, None, noise, &mut drift_scratch, &mut out);
    Ok(out)
}

/// Shared kernel for the ψ-moment rates: fills `mean_rate` with the transport
/// plus Stratonovich correction and `var_rate` with the diffusion diagonal.
fn psi_rates(
    g: &GridSpec,
    mean_psi: &DeformationGrid,
    mean_v: Option<&SpatialVectorField>,
    noise: &[NoiseField],
    mean_rate: &mut Array3<f64>,
    var_rate: &mut Array3<f64>,
) {
    let n = g.nx * g.ny;
    let mut jac = vec![0.0; 4 * n];
    mean_psi.jacobian_into(&mut jac);

    // transport term -D⟨ψ⟩·⟨v⟩
    if let Some(v) = mean_v {
        let vv = v.values();
        for ix in 0..g.nx {
            for iy in 0..g.ny {
                let idx = ix * g.ny + iy;
                let (vx, vy) = (vv[[ix, iy, 0]], vv[[ix, iy, 1]]);
                mean_rate[[ix, iy, 0]] = -(jac[idx] * vx + jac[n + idx] * vy);
                mean_rate[[ix, iy, 1]] = -(jac[2 * n + idx] * vx + jac[3 * n + idx] * vy);
            }
        }
    } else {
        mean_rate.fill(0.0);
    }
    var_rate.fill(0.0);

    let mut b = vec![0.0; 2 * n];
    for nf in noise {
        if nf.is_silent() {
            continue;
        }
        let sig = nf.spatial().values();
        for ix in 0..g.nx {
            for iy in 0..g.ny {
                let idx = ix * g.ny + iy;
                let (sx, sy) = (sig[[ix, iy, 0]], sig[[ix, iy, 1]]);
                b[idx] = jac[idx] * sx + jac[n + idx] * sy;
                b[n + idx] = jac[2 * n + idx] * sx + jac[3 * n + idx] * sy;
            }
        }
        let inv2hx = 1.0 / (2.0 * g.hx());
        let inv2hy = 1.0 / (2.0 * g.hy());
        for ix in 0..g.nx {
            let xp = (ix + 1) % g.nx;
            let xm = (ix + g.nx - 1) % g.nx;
            for iy in 0..g.ny {
                let yp = (iy + 1) % g.ny;
                let ym = (iy + g.ny - 1) % g.ny;
                let idx = ix * g.ny + iy;
                let (bx, by) = (b[idx], b[n + idx]);
                for alpha in 0..2 {
                    let off = alpha * n;
                    let db_dx = (b[off + xp * g.ny + iy] - b[off + xm * g.ny + iy]) * inv2hx;
                    let db_dy = (b[off + ix * g.ny + yp] - b[off + ix * g.ny + ym]) * inv2hy;
                    mean_rate[[ix, iy, alpha]] += 0.5 * (db_dx * bx + db_dy * by);
                }
                var_rate[[ix, iy, 0]] += bx * bx;
                var_rate[[ix, iy, 1]] += by * by;
            }
        }
    }
}

/// Deterministic stiffness bound for the closure's `½(σ·∇)²` diffusion under
/// central differences plus the transport CFL; RK4 stays stable for
/// `dt · bound ≲ 2.5`.
fn stability_bound(g: &GridSpec, v0: &FourierVelocity, noise: &[NoiseField]) -> f64 {
    let mut diffusion: f64 = 0.0;
    let (nx, ny) = (g.nx as f64, g.ny as f64);
    for ix in 0..g.nx {
        for iy in 0..g.ny {
            let mut point = 0.0;
            for nf in noise {
                let sig = nf.spatial().values();
                let reach = nx * sig[[ix, iy, 0]].abs() + ny * sig[[ix, iy, 1]].abs();
                point += 0.5 * reach * reach;
            }
            diffusion = diffusion.max(point);
        }
    }
    let advection = match to_spatial(v0, g) {
        Ok(f) => 1.5 * (nx + ny) * f.max_abs(),
        Err(_) => 0.0,
    };
    diffusion + advection
}

/// Co-integrate (⟨ṽ⟩, ⟨ψ⟩, Var[ψ]) with RK4, refreshing ⟨v⟩ from ⟨ṽ⟩ at each
/// stage. The macro step `1/nsteps` is internally subdivided by a
/// deterministic factor when the noise amplitudes demand a smaller stable
/// step, so large-amplitude probes stay finite. Variance is clamped at zero
/// after every step. Optionally records the state every `record_every` macro
/// steps.
pub fn evolve_moments(
    v0: &FourierVelocity,
    noise: &[NoiseField],
    nsteps: usize,
    kernel: &KernelParams,
    record_every: Option<usize>,
) -> Result<(MomentState, Vec<(usize, MomentState)>)> {
    if nsteps == 0 {
        return Err(Error::InvalidParameter("nsteps must be at least 1".into()));
    }
    let g = *v0.grid();
    for nf in noise {
        nf.spectrum().grid().ensure_matches(&g)?;
    }
    let mut ws = SpectralWorkspace::new(g);
    let macro_dt = 1.0 / nsteps as f64;
    let bound = stability_bound(&g, v0, noise);
    let substeps = ((macro_dt * bound / 2.5).ceil() as usize).max(1);
    let dt = macro_dt / substeps as f64;

    let mut state = MomentState::initial(v0);
    let mut snapshots = Vec::new();
    if let Some(k) = record_every {
        if k > 0 {
            snapshots.push((0, state.clone()));
        }
    }

    let noise_ref = noise;
    let kernel = *kernel;
    let mut rhs = |s: &MomentState, out: &mut MomentState| {
        out.mean_v = mean_v_rhs_ws(&mut ws, &s.mean_v, noise_ref, &kernel);
        let v_spatial = if s.mean_v.is_zero() {
            SpatialVectorField::zeros(g)
        } else {
            to_spatial(&s.mean_v, &g).expect("moment state keeps Hermitian symmetry")
        };
        let mut mean_rate = Array3::zeros((g.nx, g.ny, 2));
        let mut var_rate = Array3::zeros((g.nx, g.ny, 2));
        psi_rates(&g, &s.mean_psi, Some(&v_spatial), noise_ref, &mut mean_rate, &mut var_rate);
        *out.mean_psi.map_mut() = mean_rate;
        out.var_psi = var_rate;
    };

    for step in 0..nsteps {
        for _ in 0..substeps {
            rk4_step(&mut rhs, &mut state, dt);
            state.clamp_variance();
        }
        if !state.is_finite() {
            return Err(Error::NonFinite(format!(
                "moment state after step {}",
                step + 1
            )));
        }
        if let Some(k) = record_every {
            if k > 0 && (step + 1) % k == 0 {
                snapshots.push((step + 1, state.clone()));
            }
        }
    }
    Ok((state, snapshots))
}

/// Taylor moment images: the mean image warps Î₀ by ⟨ψ₁⟩; the variance image
/// contracts the elementwise-squared gradient of the warped image with the
/// per-component deformation variances.
pub fn moment_images(i0: &Image, s: &MomentState) -> Result<MomentImages> {
    i0.matches_grid(s.mean_psi.grid())?;
    let g = *s.mean_psi.grid();
    let mean_image = warp_image(i0, &s.mean_psi)?;
    let mut var_image = Image::zeros(g.nx, g.ny);
    let p = mean_image.pixels();
    let inv2hx = 1.0 / (2.0 * g.hx());
    let inv2hy = 1.0 / (2.0 * g.hy());
    for ix in 0..g.nx {
        let xp = (ix + 1) % g.nx;
        let xm = (ix + g.nx - 1) % g.nx;
        for iy in 0..g.ny {
            let yp = (iy + 1) % g.ny;
            let ym = (iy + g.ny - 1) % g.ny;
            let gx = (p[[xp, iy]] - p[[xm, iy]]) * inv2hx;
            let gy = (p[[ix, yp]] - p[[ix, ym]]) * inv2hy;
            var_image.pixels_mut()[[ix, iy]] =
                gx * gx * s.var_psi[[ix, iy, 0]] + gy * gy * s.var_psi[[ix, iy, 1]];
        }
    }
    Ok(MomentImages {
        mean_image,
        var_image,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn grid() -> GridSpec {
        GridSpec::new(32, 32, 16).unwrap()
    }

    #[test]
    fn zero_mean_velocity_has_zero_rhs() {
        let g = grid();
        let noise = vec![NoiseField::new([0.5, 0.5], 0.1, 1.0, &g).unwrap()];
        let rhs = mean_v_rhs(&FourierVelocity::zeros(g), &noise, &KernelParams::default()).unwrap();
        assert!(rhs.is_zero());
    }

    #[test]
    fn silent_noise_reduces_to_deterministic_rhs() {
        let g = grid();
        let kernel = KernelParams::default();
        let v = crate::testing::smooth_velocity(g, 0.2);
        let noise = vec![NoiseField::new([0.5, 0.5], 0.06, 0.0, &g).unwrap()];
        let with_noise = mean_v_rhs(&v, &noise, &kernel).unwrap();
        let without = mean_v_rhs(&v, &[], &kernel).unwrap();
        assert_eq!(with_noise.coeffs(), without.coeffs());
    }

    #[test]
    fn psi_rhs_at_identity_without_noise_is_pure_transport() {
        let g = grid();
        let psi = DeformationGrid::identity(g);
        let v = SpatialVectorField::from_fn(g, |x, y| {
            [
                (2.0 * std::f64::consts::PI * y).cos() * 0.1,
                (2.0 * std::f64::consts::PI * x).sin() * 0.1,
            ]
        });
        let rhs = mean_psi_rhs(&psi, &v, &[]).unwrap();
        for ix in 0..g.nx {
            for iy in 0..g.ny {
                for comp in 0..2 {
                    // Dψ = Id at identity, so transport is just -v
                    assert!((rhs[[ix, iy, comp]] + v.values()[[ix, iy, comp]]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn psi_correction_vanishes_for_constant_noise() {
        // spatially constant kernel: the composite field is constant and its
        // Jacobian is exactly zero
        let g = grid();
        let psi = DeformationGrid::identity(g);
        let v = SpatialVectorField::zeros(g);
        let raw = SpatialVectorField::from_fn(g, |_, _| [0.3, 0.3]);
        let nf = NoiseField::from_raw_field(&raw, &g).unwrap();
        let rhs = mean_psi_rhs(&psi, &v, &[nf]).unwrap();
        let sup = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(sup < 1e-12, "correction sup {sup:.3e}");
    }

    #[test]
    fn variance_rate_matches_closed_form_at_identity() {
        let g = GridSpec::new(64, 64, 16).unwrap();
        let psi = DeformationGrid::identity(g);
        // wide kernel so bandlimiting is negligible
        let (tau, lambda) = (0.1, 1.3);
        let nf = NoiseField::new([0.5, 0.5], tau, lambda, &g).unwrap();
        let rate = var_psi_rhs(&psi, &[nf]).unwrap();
        for &(ix, iy) in &[(32usize, 32usize), (36, 30), (28, 35)] {
            let x = ix as f64 / 64.0;
            let y = iy as f64 / 64.0;
            let r2 = (x - 0.5).powi(2) + (y - 0.5).powi(2);
            // per component: ((λτ) e^{-r²/2τ²})² = λ²τ² e^{-r²/τ²}
            let expect = lambda * lambda * tau * tau * (-r2 / (tau * tau)).exp();
            for comp in 0..2 {
                let got = rate[[ix, iy, comp]];
                assert!(
                    (got - expect).abs() < 2e-3 * expect.max(1e-12),
                    "rate {got:.6e} vs {expect:.6e}"
                );
            }
        }
    }

    #[test]
    fn variance_rate_is_nonnegative_and_zero_without_noise() {
        let g = grid();
        let psi = DeformationGrid::identity(g);
        let rate = var_psi_rhs(&psi, &[]).unwrap();
        assert!(rate.iter().all(|&r| r == 0.0));
        let nf = NoiseField::new([0.3, 0.7], 0.08, 2.0, &g).unwrap();
        let rate = var_psi_rhs(&psi, &[nf]).unwrap();
        assert!(rate.iter().all(|&r| r >= 0.0));
    }

    #[test]
    fn stationary_without_velocity_and_noise() {
        let g = grid();
        let v0 = FourierVelocity::zeros(g);
        let (state, _) = evolve_moments(&v0, &[], 20, &KernelParams::default(), None).unwrap();
        let id = DeformationGrid::identity(g);
        assert_eq!(state.mean_psi.map(), id.map());
        assert!(state.var_psi.iter().all(|&v| v == 0.0));
        assert!(state.mean_v.is_zero());
    }

    #[test]
    fn moment_images_trivial_cases() {
        let g = grid();
        let v0 = FourierVelocity::zeros(g);
        let mut state = MomentState::initial(&v0);
        let i0 = crate::testing::phantom(g.nx, g.ny);
        // zero variance -> zero variance image
        let imgs = moment_images(&i0, &state).unwrap();
        assert!(imgs.var_image.pixels().iter().all(|&v| v == 0.0));
        assert_eq!(imgs.mean_image.pixels(), i0.pixels());
        // constant image -> zero variance image regardless of var_psi
        state.var_psi.fill(0.5);
        let flat = Image::constant(g.nx, g.ny, 0.4);
        let imgs = moment_images(&flat, &state).unwrap();
        assert!(imgs.var_image.pixels().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rhs_evaluations_are_deterministic() {
        let g = grid();
        let v = crate::testing::smooth_velocity(g, 0.15);
        let noise = vec![NoiseField::new([0.4, 0.6], 0.07, 1.1, &g).unwrap()];
        let k = KernelParams::default();
        let a = mean_v_rhs(&v, &noise, &k).unwrap();
        let b = mean_v_rhs(&v, &noise, &k).unwrap();
        assert_eq!(a.coeffs(), b.coeffs());
    }
}
