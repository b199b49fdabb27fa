//! Spectral operators of the truncated EPDiff system: central-difference
//! Jacobian, coadjoint action and truncated convolutions.
//!
//! Products of bandlimited fields are formed by zero-padded inverse transform
//! to the full grid, pointwise multiplication in space and re-truncation of
//! the forward transform; exact for in-band content since the grid resolves
//! twice the band without aliasing.

use ndarray::Array4;
use rustfft::num_complex::Complex64;

use crate::error::Result;
use crate::fft::Fft2d;
use crate::fields::{FourierVelocity, SYMMETRY_TOL};
use crate::grid::GridSpec;

/// Spectral 2×2 Jacobian field: `entries[[a1, a2, comp, axis]]` holds
/// `∂_axis v_comp` at the signed frequency stored at `(a1, a2)`.
#[derive(Debug, Clone)]
pub struct SpectralJacobian {
    pub grid: GridSpec,
    pub entries: Array4<Complex64>,
}

/// Scratch buffers shared by the spectral operators; one per integration so
/// hot loops avoid reallocating transforms.
pub(crate) struct SpectralWorkspace {
    pub grid: GridSpec,
    fft: Fft2d,
    cplx: Vec<Complex64>,
    // persistent spatial scratch for the coadjoint kernels
    pair_a: Vec<f64>,
    pair_b: Vec<f64>,
    work: Vec<f64>,

}

impl SpectralWorkspace {
    pub fn new(grid: GridSpec) -> Self {
        let n = grid.nx * grid.ny;
        SpectralWorkspace {
            grid,
            fft: Fft2d::new(grid.nx, grid.ny),
            cplx: vec![Complex64::ZERO; n],
            pair_a: vec![0.0; 2 * n],
            pair_b: vec![0.0; 2 * n],
            work: vec![0.0; n],

        }
    }

    /// Inverse transform of one band component into a real spatial buffer.
    /// `deriv_axis` optionally applies the central-difference symbol first.
    pub fn band_to_spatial(
        &mut self,
        v: &FourierVelocity,
        comp: usize,
        deriv_axis: Option<usize>,
        out: &mut [f64],
    ) {
        let g = self.grid;
        debug_assert_eq!(out.len(), g.nx * g.ny);
        self.cplx.fill(Complex64::ZERO);
        for a1 in 0..g.trunc {
            let k1 = g.freq(a1);
            let dst1 = GridSpec::wrap_freq(k1, g.nx);
            for a2 in 0..g.trunc {
                let k2 = g.freq(a2);
                let dst2 = GridSpec::wrap_freq(k2, g.ny);
                let mut c = v.coeffs()[[a1, a2, comp]];
                if let Some(axis) = deriv_axis {
                    let s = if axis == 0 {
                        GridSpec::diff_symbol(k1, g.nx)
                    } else {
                        GridSpec::diff_symbol(k2, g.ny)
                    };
                    c = Complex64::new(0.0, s) * c;
                }
                self.cplx[dst1 * g.ny + dst2] = c;
            }
        }
        self.fft.inverse(&mut self.cplx);
        for (dst, src) in out.iter_mut().zip(self.cplx.iter()) {
            *dst = src.re;
        }
    }

    /// Forward transform of a real spatial buffer into one band component.
    pub fn spatial_to_band(&mut self, src: &[f64], v: &mut FourierVelocity, comp: usize) {
        let g = self.grid;
        debug_assert_eq!(src.len(), g.nx * g.ny);
        for (dst, s) in self.cplx.iter_mut().zip(src.iter()) {
            *dst = Complex64::new(*s, 0.0);
        }
        self.fft.forward(&mut self.cplx);
        let norm = 1.0 / (g.nx * g.ny) as f64;
        for a1 in 0..g.trunc {
            let k1 = g.freq(a1);
            for a2 in 0..g.trunc {
                let k2 = g.freq(a2);
                let c = if g.freq_is_paired(k1) && g.freq_is_paired(k2) {
                    let src1 = GridSpec::wrap_freq(k1, g.nx);
                    let src2 = GridSpec::wrap_freq(k2, g.ny);
                    self.cplx[src1 * g.ny + src2] * norm
                } else {
                    Complex64::ZERO
                };
                v.coeffs_mut()[[a1, a2, comp]] = c;
            }
        }
    }

    pub fn spatial_buffer(&self) -> Vec<f64> {
        vec![0.0; self.grid.nx * self.grid.ny]
    }
}

/// `acc[i] += (∂_axis field)[i] · weight[i]` with the periodic central
/// difference; the circulant twin of the spectral symbol `i sin(2πkh)/h`.
pub(crate) fn accumulate_derivative_product(
    g: &GridSpec,
    field: &[f64],
    axis: usize,
    weight: &[f64],
    acc: &mut [f64],
) {
    let (nx, ny) = (g.nx, g.ny);
    if axis == 0 {
        let inv2h = 1.0 / (2.0 * g.hx());
        for ix in 0..nx {
            let xp = (ix + 1) % nx;
            let xm = (ix + nx - 1) % nx;
            for iy in 0..ny {
                let idx = ix * ny + iy;
                acc[idx] += (field[xp * ny + iy] - field[xm * ny + iy]) * inv2h * weight[idx];
            }
        }
    } else {
        let inv2h = 1.0 / (2.0 * g.hy());
        for ix in 0..nx {
            for iy in 0..ny {
                let yp = (iy + 1) % ny;
                let ym = (iy + ny - 1) % ny;
                let idx = ix * ny + iy;
                acc[idx] += (field[ix * ny + yp] - field[ix * ny + ym]) * inv2h * weight[idx];
            }
        }
    }
}

/// Core of the coadjoint action given precomputed spatial forms; overwrites
/// `out`. `v_sp`/`m_sp` hold both components in flat `[comp*n + idx]` layout.
pub(crate) fn coadjoint_core(
    ws: &mut SpectralWorkspace,
    v_sp: &[f64],
    m_sp: &[f64],
    out: &mut FourierVelocity,
) {
    let g = ws.grid;
    let n = g.nx * g.ny;
    let mut work = std::mem::take(&mut ws.work);

    // term1_alpha = Σ_beta (∂_alpha v_beta) m_beta
    for alpha in 0..2 {
        work.fill(0.0);
        for beta in 0..2 {
            accumulate_derivative_product(
                &g,
                &v_sp[beta * n..(beta + 1) * n],
                alpha,
                &m_sp[beta * n..(beta + 1) * n],
                &mut work,
            );
        }
        ws.spatial_to_band(&work, out, alpha);
    }

    // term2_alpha = Σ_beta ∂̃_beta (m_alpha v_beta), assembled in the band
    let mut prod_band = FourierVelocity::zeros(g);
    for alpha in 0..2 {
        for beta in 0..2 {
            for i in 0..n {
                work[i] = m_sp[alpha * n + i] * v_sp[beta * n + i];
            }
            ws.spatial_to_band(&work, &mut prod_band, 0);
            for a1 in 0..g.trunc {
                let s1 = GridSpec::diff_symbol(g.freq(a1), g.nx);
                for a2 in 0..g.trunc {
                    let s = if beta == 0 {
                        s1
                    } else {
                        GridSpec::diff_symbol(g.freq(a2), g.ny)
                    };
                    let c = prod_band.coeffs()[[a1, a2, 0]];
                    out.coeffs_mut()[[a1, a2, alpha]] += Complex64::new(0.0, s) * c;
                }
            }
        }
    }
    ws.work = work;
    debug_assert!(out.hermitian_residual() <= SYMMETRY_TOL * (1.0 + out.max_abs()));
}

/// `ad*_σ m` for a fixed field with cached spatial values and Jacobian;
/// `m_sp` in flat layout. Overwrites `out`.
pub(crate) fn coadjoint_fixed_field(
    ws: &mut SpectralWorkspace,
    sigma: &ndarray::Array3<f64>,
    sigma_jac: &Array4<f64>,
    m_sp: &[f64],
    out: &mut FourierVelocity,
) {
    let g = ws.grid;
    let n = g.nx * g.ny;
    let mut work = std::mem::take(&mut ws.work);

    // term1_alpha = Σ_beta (∂_alpha σ_beta) m_beta
    for alpha in 0..2 {
        for ix in 0..g.nx {
            for iy in 0..g.ny {
                let idx = ix * g.ny + iy;
                work[idx] = sigma_jac[[ix, iy, 0, alpha]] * m_sp[idx]
                    + sigma_jac[[ix, iy, 1, alpha]] * m_sp[n + idx];
            }
        }
        ws.spatial_to_band(&work, out, alpha);
    }

    // term2_alpha = Σ_beta ∂̃_beta (m_alpha σ_beta)
    let mut prod_band = FourierVelocity::zeros(g);
    for alpha in 0..2 {
        for beta in 0..2 {
            for ix in 0..g.nx {
                for iy in 0..g.ny {
                    let idx = ix * g.ny + iy;
                    work[idx] = m_sp[alpha * n + idx] * sigma[[ix, iy, beta]];
                }
            }
            ws.spatial_to_band(&work, &mut prod_band, 0);
            for a1 in 0..g.trunc {
                let s1 = GridSpec::diff_symbol(g.freq(a1), g.nx);
                for a2 in 0..g.trunc {
                    let s = if beta == 0 {
                        s1
                    } else {
                        GridSpec::diff_symbol(g.freq(a2), g.ny)
                    };
                    let c = prod_band.coeffs()[[a1, a2, 0]];
                    out.coeffs_mut()[[a1, a2, alpha]] += Complex64::new(0.0, s) * c;
                }
            }
        }
    }
    ws.work = work;
}

/// Central-difference spectral Jacobian `D̃ṽ`.
pub fn spectral_jacobian(v: &FourierVelocity, g: &GridSpec) -> Result<SpectralJacobian> {
    v.grid().ensure_matches(g)?;
    let mut entries = Array4::zeros((g.trunc, g.trunc, 2, 2));
    for a1 in 0..g.trunc {
        let s1 = GridSpec::diff_symbol(g.freq(a1), g.nx);
        for a2 in 0..g.trunc {
            let s2 = GridSpec::diff_symbol(g.freq(a2), g.ny);
            for comp in 0..2 {
                let c = v.coeffs()[[a1, a2, comp]];
                entries[[a1, a2, comp, 0]] = Complex64::new(0.0, s1) * c;
                entries[[a1, a2, comp, 1]] = Complex64::new(0.0, s2) * c;
            }
        }
    }
    Ok(SpectralJacobian { grid: *g, entries })
}

/// Coadjoint action `ad*_v m = (Dv)ᵀm + Dm·v + m·div v`, evaluated in the
/// adjoint-consistent divergence form `(Dv)ᵀm + div(m ⊗ v)` so the pairing
/// `⟨ad*_v m, v⟩` vanishes identically on the lattice and geodesic shooting
/// conserves the metric energy up to time-integration error.
pub fn coadjoint(v: &FourierVelocity, m: &FourierVelocity, g: &GridSpec) -> Result<FourierVelocity> {
    v.grid().ensure_matches(g)?;
    m.grid().ensure_matches(g)?;
    let mut ws = SpectralWorkspace::new(*g);
    Ok(coadjoint_ws(&mut ws, v, m))
}

pub(crate) fn coadjoint_ws(
    ws: &mut SpectralWorkspace,
    v: &FourierVelocity,
    m: &FourierVelocity,
) -> FourierVelocity {
    let g = ws.grid;
    // bilinear in (v, m); an exactly-zero operand annihilates the result
    if v.is_zero() || m.is_zero() {
        return FourierVelocity::zeros(g);
    }
    let n = g.nx * g.ny;
    let mut v_sp = std::mem::take(&mut ws.pair_a);
    let mut m_sp = std::mem::take(&mut ws.pair_b);
    for comp in 0..2 {
        ws.band_to_spatial(v, comp, None, &mut v_sp[comp * n..(comp + 1) * n]);
        ws.band_to_spatial(m, comp, None, &mut m_sp[comp * n..(comp + 1) * n]);
    }
    let mut out = FourierVelocity::zeros(g);
    coadjoint_core(ws, &v_sp, &m_sp, &mut out);
    ws.pair_a = v_sp;
    ws.pair_b = m_sp;
    out
}

/// `(b·∇)a` in the band: the spectral Jacobian of `a` contracted against `b`
/// by truncated convolution.
pub fn jacobian_contraction(
    a: &FourierVelocity,
    b: &FourierVelocity,
    g: &GridSpec,
) -> Result<FourierVelocity> {
    a.grid().ensure_matches(g)?;
    b.grid().ensure_matches(g)?;
    let mut ws = SpectralWorkspace::new(*g);
    Ok(jacobian_contraction_ws(&mut ws, a, b))
}

pub(crate) fn jacobian_contraction_ws(
    ws: &mut SpectralWorkspace,
    a: &FourierVelocity,
    b: &FourierVelocity,
) -> FourierVelocity {
    let g = ws.grid;
    if a.is_zero() || b.is_zero() {
        return FourierVelocity::zeros(g);
    }
    let n = g.nx * g.ny;
    let mut a_sp = std::mem::take(&mut ws.pair_a);
    let mut b_sp = std::mem::take(&mut ws.pair_b);
    for comp in 0..2 {
        ws.band_to_spatial(a, comp, None, &mut a_sp[comp * n..(comp + 1) * n]);
        ws.band_to_spatial(b, comp, None, &mut b_sp[comp * n..(comp + 1) * n]);
    }
    let mut work = std::mem::take(&mut ws.work);
    let mut out = FourierVelocity::zeros(g);
    for alpha in 0..2 {
        work.fill(0.0);
        for beta in 0..2 {
            accumulate_derivative_product(
                &g,
                &a_sp[alpha * n..(alpha + 1) * n],
                beta,
                &b_sp[beta * n..(beta + 1) * n],
                &mut work,
            );
        }
        ws.spatial_to_band(&work, &mut out, alpha);
    }
    ws.work = work;
    ws.pair_a = a_sp;
    ws.pair_b = b_sp;
    debug_assert!(out.hermitian_residual() <= SYMMETRY_TOL * (1.0 + out.max_abs()));
    out
}

/// Componentwise truncated convolution `(a ∗ b)(k)`, i.e. the bandlimited
/// spectrum of the pointwise product of the two spatial fields.
pub fn truncated_convolution(
    a: &FourierVelocity,
    b: &FourierVelocity,
    g: &GridSpec,
) -> Result<FourierVelocity> {
    a.grid().ensure_matches(g)?;
    b.grid().ensure_matches(g)?;
    let mut ws = SpectralWorkspace::new(*g);
    let n = g.nx * g.ny;
    let mut a_sp = ws.spatial_buffer();
    let mut b_sp = ws.spatial_buffer();
    let mut prod = ws.spatial_buffer();
    let mut out = FourierVelocity::zeros(*g);
    for comp in 0..2 {
        ws.band_to_spatial(a, comp, None, &mut a_sp);
        ws.band_to_spatial(b, comp, None, &mut b_sp);
        for i in 0..n {
            prod[i] = a_sp[i] * b_sp[i];
        }
        ws.spatial_to_band(&prod, &mut out, comp);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{to_spatial, to_spectral, SpatialVectorField};
    use rand::SeedableRng;

    fn grid() -> GridSpec {
        GridSpec::new(32, 32, 16).unwrap()
    }

    #[test]
    fn jacobian_of_constant_is_zero() {
        let g = grid();
        let f = SpatialVectorField::from_fn(g, |_, _| [2.0, -1.0]);
        let v = to_spectral(&f, &g).unwrap();
        let j = spectral_jacobian(&v, &g).unwrap();
        assert!(j.entries.iter().all(|c| c.norm() < 1e-12));
    }

    #[test]
    fn jacobian_symbol_of_single_mode() {
        let g = GridSpec::new(64, 64, 16).unwrap();
        let v = FourierVelocity::single_mode(g, [1, 0], 0, 1.0, -std::f64::consts::FRAC_PI_2);
        // coefficient at k=(1,0) is -i/2; ∂x multiplies by i*sin(2π h)/h
        let j = spectral_jacobian(&v, &g).unwrap();
        let s = GridSpec::diff_symbol(1, 64);
        let expect = Complex64::new(0.0, s) * v.coeff(1, 0, 0);
        let got = j.entries[[g.band_index(1), g.band_index(0), 0, 0]];
        assert!((got - expect).norm() < 1e-14);
    }

    #[test]
    fn jacobian_matches_spatial_central_differences() {
        let g = grid();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let v = crate::testing::random_bandlimited(&mut rng, g, 1.0);
        let j = spectral_jacobian(&v, &g).unwrap();
        let f = to_spatial(&v, &g).unwrap();
        // spatial stencil on the full lattice vs transformed spectral entries
        let mut ws = SpectralWorkspace::new(g);
        let mut buf = ws.spatial_buffer();
        let scale = v.max_abs().max(1.0);
        for comp in 0..2 {
            for axis in 0..2 {
                ws.band_to_spatial(&j_as_velocity(&j, comp, axis), 0, None, &mut buf);
                for ix in 0..g.nx {
                    for iy in 0..g.ny {
                        let (up, dn) = if axis == 0 {
                            (
                                f.values()[[(ix + 1) % g.nx, iy, comp]],
                                f.values()[[(ix + g.nx - 1) % g.nx, iy, comp]],
                            )
                        } else {
                            (
                                f.values()[[ix, (iy + 1) % g.ny, comp]],
                                f.values()[[ix, (iy + g.ny - 1) % g.ny, comp]],
                            )
                        };
                        let h = if axis == 0 { g.hx() } else { g.hy() };
                        let stencil = (up - dn) / (2.0 * h);
                        let got = buf[ix * g.ny + iy];
                        assert!(
                            (got - stencil).abs() / scale < 1e-10,
                            "comp {comp} axis {axis}: {got} vs {stencil}"
                        );
                    }
                }
            }
        }
    }

    fn j_as_velocity(j: &SpectralJacobian, comp: usize, axis: usize) -> FourierVelocity {
        let g = j.grid;
        let mut v = FourierVelocity::zeros(g);
        for a1 in 0..g.trunc {
            for a2 in 0..g.trunc {
                v.coeffs_mut()[[a1, a2, 0]] = j.entries[[a1, a2, comp, axis]];
            }
        }
        v
    }

    #[test]
    fn coadjoint_is_bilinear() {
        let g = grid();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let v = crate::testing::random_bandlimited(&mut rng, g, 0.8);
        let m = crate::testing::random_bandlimited(&mut rng, g, 1.4);
        let z = FourierVelocity::zeros(g);
        assert!(coadjoint(&z, &m, &g).unwrap().is_zero());
        assert!(coadjoint(&v, &z, &g).unwrap().is_zero());

        let base = coadjoint(&v, &m, &g).unwrap();
        let mut va = v.clone();
        va.scale(2.5);
        let mut mb = m.clone();
        mb.scale(-1.25);
        let scaled = coadjoint(&va, &mb, &g).unwrap();
        let mut err: f64 = 0.0;
        for (s, b) in scaled.coeffs().iter().zip(base.coeffs().iter()) {
            err = err.max((s - b * (2.5 * -1.25)).norm());
        }
        assert!(err / base.max_abs() < 1e-12);

        // additivity in the first slot
        let w = crate::testing::random_bandlimited(&mut rng, g, 0.5);
        let mut sum = v.clone();
        sum.add_scaled(1.0, &w);
        let lhs = coadjoint(&sum, &m, &g).unwrap();
        let mut rhs = coadjoint(&v, &m, &g).unwrap();
        rhs.add_scaled(1.0, &coadjoint(&w, &m, &g).unwrap());
        let mut err: f64 = 0.0;
        for (a, b) in lhs.coeffs().iter().zip(rhs.coeffs().iter()) {
            err = err.max((a - b).norm());
        }
        assert!(err / lhs.max_abs().max(1e-30) < 1e-10);
    }

    #[test]
    fn coadjoint_pairing_with_velocity_vanishes() {
        // ⟨ad*_v m, v⟩ = 0 exactly is what makes shooting conservative
        let g = grid();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let v = crate::testing::random_bandlimited(&mut rng, g, 1.0);
        let m = crate::testing::random_bandlimited(&mut rng, g, 2.0);
        let ad = coadjoint(&v, &m, &g).unwrap();
        let pairing = ad.inner(&v);
        let scale = ad.max_abs() * v.max_abs();
        assert!(
            pairing.abs() / scale.max(1e-30) < 1e-12,
            "pairing {pairing:.3e}"
        );
    }

    #[test]
    fn truncated_convolution_matches_direct_sum() {
        let g = grid();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let a = crate::testing::random_bandlimited(&mut rng, g, 1.0);
        let b = crate::testing::random_bandlimited(&mut rng, g, 1.0);
        let got = truncated_convolution(&a, &b, &g).unwrap();
        // direct O(t⁴) convolution over the band
        let h = (g.trunc / 2) as i64;
        let mut err: f64 = 0.0;
        for k1 in -h..h {
            for k2 in -h..h {
                if !(g.freq_is_paired(k1) && g.freq_is_paired(k2)) {
                    continue;
                }
                for comp in 0..2 {
                    let mut sum = Complex64::ZERO;
                    for q1 in -h..h {
                        for q2 in -h..h {
                            let (r1, r2) = (k1 - q1, k2 - q2);
                            if r1 < -h || r1 >= h || r2 < -h || r2 >= h {
                                continue;
                            }
                            sum += a.coeff(q1, q2, comp) * b.coeff(r1, r2, comp);
                        }
                    }
                    err = err.max((got.coeff(k1, k2, comp) - sum).norm());
                }
            }
        }
        assert!(err < 1e-12, "max convolution error {err:.3e}");
    }

    #[test]
    fn jacobian_contraction_matches_manual_product() {
        let g = grid();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let a = crate::testing::random_bandlimited(&mut rng, g, 1.0);
        let b = crate::testing::random_bandlimited(&mut rng, g, 1.0);
        let got = jacobian_contraction(&a, &b, &g).unwrap();
        // oracle: build (b·∇)a from spatial stencils of the inverse transforms
        let fa = to_spatial(&a, &g).unwrap();
        let fb = to_spatial(&b, &g).unwrap();
        let mut spatial = SpatialVectorField::zeros(g);
        for ix in 0..g.nx {
            for iy in 0..g.ny {
                for alpha in 0..2 {
                    let mut acc = 0.0;
                    for beta in 0..2 {
                        let (up, dn, h) = if beta == 0 {
                            (
                                fa.values()[[(ix + 1) % g.nx, iy, alpha]],
                                fa.values()[[(ix + g.nx - 1) % g.nx, iy, alpha]],
                                g.hx(),
                            )
                        } else {
                            (
                                fa.values()[[ix, (iy + 1) % g.ny, alpha]],
                                fa.values()[[ix, (iy + g.ny - 1) % g.ny, alpha]],
                                g.hy(),
                            )
                        };
                        acc += (up - dn) / (2.0 * h) * fb.values()[[ix, iy, beta]];
                    }
                    spatial.values_mut()[[ix, iy, alpha]] = acc;
                }
            }
        }
        let expect = to_spectral(&spatial, &g).unwrap();
        let mut err: f64 = 0.0;
        for (x, y) in got.coeffs().iter().zip(expect.coeffs().iter()) {
            err = err.max((x - y).norm());
        }
        assert!(err / got.max_abs() < 1e-10);
    }
}
