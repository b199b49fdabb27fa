//! Stochastic and deterministic flows of deformations: joint integration of
//! the spectral velocity, the forward map φ and the inverse map ψ, plus image
//! warping.
//!
//! One trajectory is sequential in time; distinct seeds are independent and
//! safe to integrate concurrently against shared read-only inputs.

use ndarray::{Array2, Array3, Zip};
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::fields::{FourierVelocity, SpatialVectorField};
use crate::grid::GridSpec;
use crate::image::Image;
use crate::integrators::{heun_step, rk4_step, OdeState, SdeSystem};
use crate::kernel::{momentum_to_velocity, velocity_to_momentum, KernelParams};
use crate::noise::NoiseField;
use crate::operators::SpectralWorkspace;

/// Per-pixel map φ(x_i, y_j) or ψ(x_i, y_j) in domain coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationGrid {
    grid: GridSpec,
    map: Array3<f64>,
}

impl DeformationGrid {
    pub fn identity(grid: GridSpec) -> Self {
        let mut map = Array3::zeros((grid.nx, grid.ny, 2));
        for ix in 0..grid.nx {
            for iy in 0..grid.ny {
                map[[ix, iy, 0]] = ix as f64 * grid.hx();
                map[[ix, iy, 1]] = iy as f64 * grid.hy();
            }
        }
        DeformationGrid { grid, map }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn map(&self) -> &Array3<f64> {
        &self.map
    }

    pub fn map_mut(&mut self) -> &mut Array3<f64> {
        &mut self.map
    }

    pub fn from_map(grid: GridSpec, map: Array3<f64>) -> Result<Self> {
        if map.dim() != (grid.nx, grid.ny, 2) {
            return Err(Error::DimensionMismatch(format!(
                "deformation map of shape {:?} on a {}x{} grid",
                map.dim(),
                grid.nx,
                grid.ny
            )));
        }
        Ok(DeformationGrid { grid, map })
    }

    pub fn is_finite(&self) -> bool {
        self.map.iter().all(|v| v.is_finite())
    }

    /// Sup-norm distance to another map.
    pub fn max_distance(&self, other: &DeformationGrid) -> f64 {
        let mut d: f64 = 0.0;
        Zip::from(&self.map).and(&other.map).for_each(|a, b| {
            d = d.max((a - b).abs());
        });
        d
    }

    /// Central-difference Jacobian, differencing the periodic displacement
    /// `ψ - id` and adding the identity. Layout: `out[(alpha*2+beta)*n + idx]`
    /// holds `∂_beta ψ_alpha` at pixel `idx = ix*ny + iy`.
    pub fn jacobian_into(&self, out: &mut [f64]) {
        let g = self.grid;
        let n = g.nx * g.ny;
        debug_assert_eq!(out.len(), 4 * n);
        let inv2hx = 1.0 / (2.0 * g.hx());
        let inv2hy = 1.0 / (2.0 * g.hy());
        for ix in 0..g.nx {
            let xp = (ix + 1) % g.nx;
            let xm = (ix + g.nx - 1) % g.nx;
            for iy in 0..g.ny {
                let yp = (iy + 1) % g.ny;
                let ym = (iy + g.ny - 1) % g.ny;
                let idx = ix * g.ny + iy;
                for alpha in 0..2 {
                    // displacement differences; the lattice part of ψ
                    // contributes δ_{alpha,beta} exactly
                    let dxp = self.map[[xp, iy, alpha]] - ident(xp, iy, alpha, &g);
                    let dxm = self.map[[xm, iy, alpha]] - ident(xm, iy, alpha, &g);
                    let dyp = self.map[[ix, yp, alpha]] - ident(ix, yp, alpha, &g);
                    let dym = self.map[[ix, ym, alpha]] - ident(ix, ym, alpha, &g);
                    let d_dx = (dxp - dxm) * inv2hx + if alpha == 0 { 1.0 } else { 0.0 };
                    let d_dy = (dyp - dym) * inv2hy + if alpha == 1 { 1.0 } else { 0.0 };
                    out[(alpha * 2) * n + idx] = d_dx;
                    out[(alpha * 2 + 1) * n + idx] = d_dy;
                }
            }
        }
    }

    /// Minimum of `det Dψ` over the lattice; non-positive values indicate
    /// fold-over.
    pub fn min_jacobian_det(&self) -> f64 {
        let n = self.grid.nx * self.grid.ny;
        let mut jac = vec![0.0; 4 * n];
        self.jacobian_into(&mut jac);
        let mut min_det = f64::INFINITY;
        for idx in 0..n {
            let det = jac[idx] * jac[3 * n + idx] - jac[n + idx] * jac[2 * n + idx];
            min_det = min_det.min(det);
        }
        min_det
    }
}

#[inline]
fn ident(ix: usize, iy: usize, alpha: usize, g: &GridSpec) -> f64 {
    if alpha == 0 {
        ix as f64 * g.hx()
    } else {
        iy as f64 * g.hy()
    }
}

/// Seeded Gaussian increments, `increments[[step, k]] ~ N(0, dt)`.
#[derive(Debug, Clone)]
pub struct WienerPath {
    seed: u64,
    dt: f64,
    increments: Array2<f64>,
}

impl WienerPath {
    /// Draw all increments for `nsteps` steps of `p` processes over `[0,1]`.
    /// Large paths are sanity-checked: the empirical variance must be within
    /// 10% of `dt` once `nsteps·p ≥ 10⁴`.
    pub fn generate(seed: u64, nsteps: usize, p: usize) -> Result<Self> {
        if nsteps == 0 {
            return Err(Error::InvalidParameter("nsteps must be at least 1".into()));
        }
        let dt = 1.0 / nsteps as f64;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let sqrt_dt = dt.sqrt();
        let mut increments = Array2::zeros((nsteps, p));
        for step in 0..nsteps {
            for k in 0..p {
                let z: f64 = StandardNormal.sample(&mut rng);
                increments[[step, k]] = z * sqrt_dt;
            }
        }
        if nsteps * p >= 10_000 {
            let n = (nsteps * p) as f64;
            let var = increments.iter().map(|d| d * d).sum::<f64>() / n;
            if (var - dt).abs() > 0.1 * dt {
                return Err(Error::WienerVariance {
                    sample: var,
                    expected: dt,
                });
            }
        }
        Ok(WienerPath {
            seed,
            dt,
            increments,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn nsteps(&self) -> usize {
        self.increments.dim().0
    }

    pub fn num_processes(&self) -> usize {
        self.increments.dim().1
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step_increments(&self, step: usize) -> Vec<f64> {
        self.increments.row(step).to_vec()
    }
}

/// SplitMix64 mix of a master seed and a sample index; used to derive
/// independent per-sample seeds deterministically.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9E3779B97F4A7C15);
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Joint state of one flow trajectory. `phi` is absent when the forward map
/// is not tracked.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub v: FourierVelocity,
    pub phi: Option<DeformationGrid>,
    pub psi: DeformationGrid,
}

impl FlowState {
    pub fn is_finite(&self) -> bool {
        self.v.is_finite()
            && self.psi.is_finite()
            && self.phi.as_ref().map_or(true, |p| p.is_finite())
    }
}

impl OdeState for FlowState {
    fn scaled_add(&mut self, a: f64, other: &Self) {
        self.v.add_scaled(a, &other.v);
        match (&mut self.phi, &other.phi) {
            (Some(p), Some(q)) => {
                Zip::from(p.map_mut()).and(q.map()).for_each(|x, y| *x += a * y);
            }
            (None, None) => {}
            _ => panic!("mismatched phi tracking between flow states"),
        }
        Zip::from(self.psi.map_mut())
            .and(other.psi.map())
            .for_each(|x, y| *x += a * y);
    }
}

/// Which intermediate states to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordMode {
    FinalOnly,
    Every(usize),
}

#[derive(Debug, Clone, Copy)]
pub struct FlowOptions {
    pub record: RecordMode,
    /// Track the forward map φ in addition to ψ.
    pub track_forward: bool,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            record: RecordMode::FinalOnly,
            track_forward: true,
        }
    }
}

#[derive(Debug)]
pub struct FlowResult {
    pub state: FlowState,
    /// `(step, state)` pairs when recording was requested; step 0 is t=0.
    pub snapshots: Vec<(usize, FlowState)>,
    /// Steps whose recorded state had `det Dψ ≤ 0` somewhere (a warning).
    pub fold_over_steps: Vec<usize>,
}

struct FlowSystem<'a> {
    grid: GridSpec,
    kernel: KernelParams,
    noise: &'a [NoiseField],
    ws: SpectralWorkspace,
    // caches for the state last passed to `drift`
    v_sp: Vec<f64>,
    m_sp: Vec<f64>,
    psi_jac: Vec<f64>,
    v_is_zero: bool,
}

impl<'a> FlowSystem<'a> {
    fn new(grid: GridSpec, kernel: KernelParams, noise: &'a [NoiseField]) -> Self {
        let n = grid.nx * grid.ny;
        FlowSystem {
            grid,
            kernel,
            noise,
            ws: SpectralWorkspace::new(grid),
            v_sp: vec![0.0; 2 * n],
            m_sp: vec![0.0; 2 * n],
            psi_jac: vec![0.0; 4 * n],
            v_is_zero: true,
        }
    }

    /// `-Dψ·w` at every pixel for a lattice field `w`, using the cached ψ
    /// Jacobian.
    fn transport_psi(&self, w: &[f64], out: &mut DeformationGrid) {
        let g = self.grid;
        let n = g.nx * g.ny;
        let jac = &self.psi_jac;
        let map = out.map_mut();
        for ix in 0..g.nx {
            for iy in 0..g.ny {
                let idx = ix * g.ny + iy;
                let (wx, wy) = (w[idx], w[n + idx]);
                map[[ix, iy, 0]] = -(jac[idx] * wx + jac[n + idx] * wy);
                map[[ix, iy, 1]] = -(jac[2 * n + idx] * wx + jac[3 * n + idx] * wy);
            }
        }
    }

    /// `w(φ(x))` at every pixel by bilinear sampling of a spatial field.
    fn advect_phi(field: &SpatialVectorField, phi: &DeformationGrid, out: &mut DeformationGrid) {
        let (nx, ny) = (phi.grid().nx, phi.grid().ny);
        for ix in 0..nx {
            for iy in 0..ny {
                let x = phi.map()[[ix, iy, 0]];
                let y = phi.map()[[ix, iy, 1]];
                let v = field.sample(x, y);
                out.map_mut()[[ix, iy, 0]] = v[0];
                out.map_mut()[[ix, iy, 1]] = v[1];
            }
        }
    }
}

impl<'a> SdeSystem for FlowSystem<'a> {
    type State = FlowState;

    fn drift(&mut self, s: &FlowState, out: &mut FlowState) {
        let g = self.grid;
        let n = g.nx * g.ny;
        s.psi.jacobian_into(&mut self.psi_jac);
        self.v_is_zero = s.v.is_zero();

        if self.v_is_zero {
            // momentum vanishes with the velocity; every drift block is zero
            self.v_sp.fill(0.0);
            self.m_sp.fill(0.0);
            out.v = FourierVelocity::zeros(g);
            if let Some(p) = &mut out.phi {
                p.map_mut().fill(0.0);
            }
            out.psi.map_mut().fill(0.0);
            return;
        }

        let m = velocity_to_momentum(&s.v, &self.kernel);
        for comp in 0..2 {
            self.ws
                .band_to_spatial(&s.v, comp, None, &mut self.v_sp[comp * n..(comp + 1) * n]);
            self.ws
                .band_to_spatial(&m, comp, None, &mut self.m_sp[comp * n..(comp + 1) * n]);
        }
        let mut ad = FourierVelocity::zeros(g);
        crate::operators::coadjoint_core(&mut self.ws, &self.v_sp, &self.m_sp, &mut ad);
        let mut dv = momentum_to_velocity(&ad, &self.kernel);
        dv.scale(-1.0);
        out.v = dv;

        let v_field = spatial_from_flat(g, &self.v_sp);
        if let (Some(p_out), Some(p_in)) = (&mut out.phi, &s.phi) {
            FlowSystem::advect_phi(&v_field, p_in, p_out);
        }
        self.transport_psi(&self.v_sp, &mut out.psi);
    }

    fn num_noise(&self) -> usize {
        self.noise.len()
    }

    fn diffusion(&mut self, s: &FlowState, k: usize, out: &mut FlowState) -> bool {
        let nf = &self.noise[k];
        if nf.is_silent() {
            return false;
        }
        let g = self.grid;
        let n = g.nx * g.ny;

        // velocity block: -K ad*_σ m, zero whenever the momentum vanishes
        if self.v_is_zero {
            out.v = FourierVelocity::zeros(g);
        } else {
            let mut ad = FourierVelocity::zeros(g);
            crate::operators::coadjoint_fixed_field(
                &mut self.ws,
                nf.spatial().values(),
                nf.jacobian(),
                &self.m_sp,
                &mut ad,
            );
            let mut dv = momentum_to_velocity(&ad, &self.kernel);
            dv.scale(-1.0);
            out.v = dv;
        }

        if let (Some(p_out), Some(p_in)) = (&mut out.phi, &s.phi) {
            FlowSystem::advect_phi(nf.spatial(), p_in, p_out);
        }
        let sig = nf.spatial().values();
        let mut w = vec![0.0; 2 * n];
        for ix in 0..g.nx {
            for iy in 0..g.ny {
                let idx = ix * g.ny + iy;
                w[idx] = sig[[ix, iy, 0]];
                w[n + idx] = sig[[ix, iy, 1]];
            }
        }
        self.transport_psi(&w, &mut out.psi);
        true
    }
}

fn spatial_from_flat(g: GridSpec, flat: &[f64]) -> SpatialVectorField {
    let n = g.nx * g.ny;
    let mut f = SpatialVectorField::zeros(g);
    for ix in 0..g.nx {
        for iy in 0..g.ny {
            let idx = ix * g.ny + iy;
            f.values_mut()[[ix, iy, 0]] = flat[idx];
            f.values_mut()[[ix, iy, 1]] = flat[n + idx];
        }
    }
    f
}

/// One RK4 step of the deterministic EPDiff equation `dṽ/dt = -K ad*_ṽ m̃`.
pub fn epdiff_deterministic_step(
    v: &FourierVelocity,
    dt: f64,
    kernel: &KernelParams,
) -> Result<FourierVelocity> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let g = *v.grid();
    let mut ws = SpectralWorkspace::new(g);
    let mut state = v.clone();
    let kernel = *kernel;
    let mut rhs = |s: &FourierVelocity, out: &mut FourierVelocity| {
        *out = epdiff_rhs(&mut ws, s, &kernel);
    };
    rk4_step(&mut rhs, &mut state, dt);
    if !state.is_finite() {
        return Err(Error::NonFinite("EPDiff step".into()));
    }
    Ok(state)
}

fn epdiff_rhs(ws: &mut SpectralWorkspace, v: &FourierVelocity, kernel: &KernelParams) -> FourierVelocity {
    let m = velocity_to_momentum(v, kernel);
    let ad = crate::operators::coadjoint_ws(ws, v, &m);
    let mut out = momentum_to_velocity(&ad, kernel);
    out.scale(-1.0);
    out
}

/// One Heun step of the stochastic EPDiff equation with Eulerian noise. With
/// every amplitude zero this reduces bit-exactly to the drift-only Heun step.
pub fn epdiff_stochastic_step(
    v: &FourierVelocity,
    noise: &[NoiseField],
    dw: &[f64],
    dt: f64,
    kernel: &KernelParams,
) -> Result<FourierVelocity> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    if dw.len() != noise.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} Wiener increments for {} noise fields",
            dw.len(),
            noise.len()
        )));
    }
    let g = *v.grid();
    let mut sys = VelocitySystem {
        kernel: *kernel,
        noise,
        ws: SpectralWorkspace::new(g),
        v_sp: vec![0.0; 2 * g.nx * g.ny],
        m_sp: vec![0.0; 2 * g.nx * g.ny],
        v_is_zero: true,
    };
    let mut state = v.clone();
    heun_step(&mut sys, &mut state, dt, dw);
    if !state.is_finite() {
        return Err(Error::NonFinite("stochastic EPDiff step".into()));
    }
    Ok(state)
}

struct VelocitySystem<'a> {
    kernel: KernelParams,
    noise: &'a [NoiseField],
    ws: SpectralWorkspace,
    v_sp: Vec<f64>,
    m_sp: Vec<f64>,
    v_is_zero: bool,
}

impl<'a> SdeSystem for VelocitySystem<'a> {
    type State = FourierVelocity;

    fn drift(&mut self, s: &FourierVelocity, out: &mut FourierVelocity) {
        let g = self.ws.grid;
        let n = g.nx * g.ny;
        self.v_is_zero = s.is_zero();
        if self.v_is_zero {
            self.m_sp.fill(0.0);
            *out = FourierVelocity::zeros(g);
            return;
        }
        let m = velocity_to_momentum(s, &self.kernel);
        for comp in 0..2 {
            self.ws
                .band_to_spatial(s, comp, None, &mut self.v_sp[comp * n..(comp + 1) * n]);
            self.ws
                .band_to_spatial(&m, comp, None, &mut self.m_sp[comp * n..(comp + 1) * n]);
        }
        let mut ad = FourierVelocity::zeros(g);
        crate::operators::coadjoint_core(&mut self.ws, &self.v_sp, &self.m_sp, &mut ad);
        *out = momentum_to_velocity(&ad, &self.kernel);
        out.scale(-1.0);
    }

    fn num_noise(&self) -> usize {
        self.noise.len()
    }

    fn diffusion(&mut self, _s: &FourierVelocity, k: usize, out: &mut FourierVelocity) -> bool {
        let nf = &self.noise[k];
        if nf.is_silent() {
            return false;
        }
        if self.v_is_zero {
            *out = FourierVelocity::zeros(self.ws.grid);
            return true;
        }
        let mut ad = FourierVelocity::zeros(self.ws.grid);
        crate::operators::coadjoint_fixed_field(
            &mut self.ws,
            nf.spatial().values(),
            nf.jacobian(),
            &self.m_sp,
            &mut ad,
        );
        *out = momentum_to_velocity(&ad, &self.kernel);
        out.scale(-1.0);
        true
    }
}

/// Integrate the coupled Stratonovich system for (ṽ, φ, ψ) with shared
/// Wiener increments. Fold-over of ψ at recorded steps is reported as a
/// warning in the result, never an error.
pub fn integrate_flow(
    v0: &FourierVelocity,
    noise: &[NoiseField],
    path: &WienerPath,
    kernel: &KernelParams,
    opts: &FlowOptions,
) -> Result<FlowResult> {
    if path.num_processes() != noise.len() {
        return Err(Error::DimensionMismatch(format!(
            "Wiener path drives {} processes but {} noise fields given",
            path.num_processes(),
            noise.len()
        )));
    }
    let g = *v0.grid();
    for nf in noise {
        nf.spectrum().grid().ensure_matches(&g)?;
    }
    let mut sys = FlowSystem::new(g, *kernel, noise);
    let state = FlowState {
        v: v0.clone(),
        phi: opts.track_forward.then(|| DeformationGrid::identity(g)),
        psi: DeformationGrid::identity(g),
    };
    run_flow(state, path.nsteps(), opts, |s, step| {
        let dw = path.step_increments(step);
        heun_step(&mut sys, s, path.dt(), &dw);
    })
}

/// Drift-only flow under RK4; the deterministic pipeline used by the moment
/// and estimation paths.
pub fn integrate_flow_deterministic(
    v0: &FourierVelocity,
    nsteps: usize,
    kernel: &KernelParams,
    opts: &FlowOptions,
) -> Result<FlowResult> {
    if nsteps == 0 {
        return Err(Error::InvalidParameter("nsteps must be at least 1".into()));
    }
    let g = *v0.grid();
    let mut sys = FlowSystem::new(g, *kernel, &[]);
    let state = FlowState {
        v: v0.clone(),
        phi: opts.track_forward.then(|| DeformationGrid::identity(g)),
        psi: DeformationGrid::identity(g),
    };
    let dt = 1.0 / nsteps as f64;
    let mut rhs = |s: &FlowState, out: &mut FlowState| sys.drift(s, out);
    run_flow(state, nsteps, opts, |s, _step| {
        rk4_step(&mut rhs, s, dt);
    })
}

fn run_flow(
    mut state: FlowState,
    nsteps: usize,
    opts: &FlowOptions,
    mut advance: impl FnMut(&mut FlowState, usize),
) -> Result<FlowResult> {
    let mut snapshots = Vec::new();
    let mut fold_over_steps = Vec::new();
    let maybe_record = |step: usize, s: &FlowState, folds: &mut Vec<usize>, snaps: &mut Vec<(usize, FlowState)>| {
        let due = match opts.record {
            RecordMode::FinalOnly => false,
            RecordMode::Every(k) => k > 0 && step % k == 0,
        };
        if due || step == nsteps {
            if s.psi.min_jacobian_det() <= 0.0 {
                folds.push(step);
            }
        }
        if due {
            snaps.push((step, s.clone()));
        }
    };
    maybe_record(0, &state, &mut fold_over_steps, &mut snapshots);
    for step in 0..nsteps {
        advance(&mut state, step);
        if !state.is_finite() {
            return Err(Error::NonFinite(format!("flow state after step {}", step + 1)));
        }
        maybe_record(step + 1, &state, &mut fold_over_steps, &mut snapshots);
    }
    Ok(FlowResult {
        state,
        snapshots,
        fold_over_steps,
    })
}

/// Pull an image back through a deformation: output pixel (i,j) samples the
/// input at ψ(x_i, y_j) with periodic wrap.
pub fn warp_image(img: &Image, psi: &DeformationGrid) -> Result<Image> {
    img.matches_grid(psi.grid())?;
    let g = psi.grid();
    let mut out = Image::zeros(g.nx, g.ny);
    for ix in 0..g.nx {
        for iy in 0..g.ny {
            let x = psi.map()[[ix, iy, 0]];
            let y = psi.map()[[ix, iy, 1]];
            out.pixels_mut()[[ix, iy]] = img.sample(x, y);
        }
    }
    Ok(out)
}
