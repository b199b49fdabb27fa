//! Method-of-moments estimation of the noise-field parameters: stage 1
//! recovers the kernel widths τ by matching moment images under normalized
//! mutual information, stage 2 recovers the amplitudes λ under L² plus
//! unnormalized mutual information, both by finite-difference gradient
//! descent with backtracking line search from a random-search start.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::FourierVelocity;
use crate::grid::GridSpec;
use crate::image::Image;
use crate::kernel::KernelParams;
use crate::moments::{evolve_moments, moment_images, MomentImages};
use crate::noise::NoiseField;
use crate::similarity::{l2_distance, mutual_information, normalized_mutual_information, HistogramConfig};

/// Free parameters of the noise model; centers and everything else live in
/// [`MomentModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub taus: Vec<f64>,
    pub lambdas: Vec<f64>,
}

/// Sample moments of the observed images plus the reference image Î₀.
#[derive(Debug, Clone)]
pub struct DataMoments {
    pub mean: Image,
    pub variance: Image,
    pub n: usize,
    pub reference: Image,
}

impl DataMoments {
    pub fn from_samples(samples: &[Image], reference: Image) -> Result<Self> {
        let (mean, variance) = Image::sample_moments(samples)?;
        reference.same_shape(&mean)?;
        Ok(DataMoments {
            mean,
            variance,
            n: samples.len(),
            reference,
        })
    }
}

/// Fixed context of the generative model during estimation: grid, kernel,
/// known noise centers, initial velocity and the ODE step budget.
#[derive(Debug, Clone)]
pub struct MomentModel {
    pub grid: GridSpec,
    pub kernel: KernelParams,
    pub centers: Vec<[f64; 2]>,
    pub v0: FourierVelocity,
    pub nsteps: usize,
    pub bins: usize,
}

impl MomentModel {
    pub fn num_fields(&self) -> usize {
        self.centers.len()
    }

    /// Model moment images at the given parameters.
    pub fn images(&self, taus: &[f64], lambdas: &[f64], i0: &Image) -> Result<MomentImages> {
        if taus.len() != self.centers.len() || lambdas.len() != self.centers.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} taus / {} lambdas for {} noise centers",
                taus.len(),
                lambdas.len(),
                self.centers.len()
            )));
        }
        let noise: Vec<NoiseField> = self
            .centers
            .iter()
            .zip(taus.iter().zip(lambdas.iter()))
            .map(|(&mu, (&tau, &lambda))| NoiseField::new(mu, tau, lambda, &self.grid))
            .collect::<Result<_>>()?;
        let (state, _) = evolve_moments(&self.v0, &noise, self.nsteps, &self.kernel, None)?;
        moment_images(i0, &state)
    }
}

/// Affine min-max rescale to [0,1]; constant images map to zero.
fn normalize_unit(img: &Image) -> Image {
    let (lo, hi) = img.min_max();
    let mut out = img.clone();
    if hi > lo {
        out.pixels_mut().mapv_inplace(|v| (v - lo) / (hi - lo));
    } else {
        out.pixels_mut().fill(0.0);
    }
    out
}

/// Stage-1 objective (to minimize): negated NMI match of the mean and
/// variance images. Intensities are min-max normalized before binning, which
/// is what makes the value insensitive to the amplitudes λ. Divergent moment
/// solves return +∞.
pub fn objective_f(model: &MomentModel, taus: &[f64], lambdas: &[f64], data: &DataMoments) -> f64 {
    if taus.iter().any(|t| !(*t > 0.0)) {
        return f64::INFINITY;
    }
    let imgs = match model.images(taus, lambdas, &data.reference) {
        Ok(i) => i,
        Err(_) => return f64::INFINITY,
    };
    let h = HistogramConfig {
        bins: model.bins,
        lo: 0.0,
        hi: 1.0,
    };
    let nmi_mean = normalized_mutual_information(
        &normalize_unit(&imgs.mean_image),
        &normalize_unit(&data.mean),
        &h,
    );
    let nmi_var = normalized_mutual_information(
        &normalize_unit(&imgs.var_image),
        &normalize_unit(&data.variance),
        &h,
    );
    match (nmi_mean, nmi_var) {
        (Ok(a), Ok(b)) if a.is_finite() && b.is_finite() => -(a + b),
        _ => f64::INFINITY,
    }
}

/// Stage-2 objective (to minimize): `‖mean − μ₁‖ − MI(mean, μ₁) + ‖var −
/// svar‖ − MI(var, svar)` with MI over the shared intensity range of each
/// pair. Negative amplitudes are outside the model domain and return +∞.
pub fn objective_g(model: &MomentModel, lambdas: &[f64], taus: &[f64], data: &DataMoments) -> f64 {
    if lambdas.iter().any(|l| *l < 0.0 || !l.is_finite()) {
        return f64::INFINITY;
    }
    let imgs = match model.images(taus, lambdas, &data.reference) {
        Ok(i) => i,
        Err(_) => return f64::INFINITY,
    };
    let term = |a: &Image, b: &Image| -> Result<f64> {
        let (alo, ahi) = a.min_max();
        let (blo, bhi) = b.min_max();
        let lo = alo.min(blo);
        let hi = ahi.max(bhi).max(lo + 1e-12);
        let h = HistogramConfig::new(model.bins, lo, hi)?;
        Ok(l2_distance(a, b)? - mutual_information(a, b, &h)?)
    };
    match (
        term(&imgs.mean_image, &data.mean),
        term(&imgs.var_image, &data.variance),
    ) {
        (Ok(a), Ok(b)) if a.is_finite() && b.is_finite() => a + b,
        _ => f64::INFINITY,
    }
}

/// Uniform random search: draws `trials` points inside `bounds`, evaluates
/// them concurrently and returns the argmin. Deterministic given the seed.
pub fn random_init<F>(f: F, bounds: &[(f64, f64)], trials: usize, seed: u64) -> Result<(Vec<f64>, f64)>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    use rand::Rng;
    use rand::SeedableRng;
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<Vec<f64>> = (0..trials)
        .map(|_| {
            bounds
                .iter()
                .map(|&(lo, hi)| rng.random_range(lo..=hi))
                .collect()
        })
        .collect();
    let values: Vec<f64> = draws.par_iter().map(|x| f(x)).collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_finite() && best.map_or(true, |(_, bv)| v < bv) {
            best = Some((i, v));
        }
    }
    match best {
        Some((i, v)) => Ok((draws[i].clone(), v)),
        None => Err(Error::SearchFailed(trials)),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DescentOptions {
    /// Relative central-difference step per coordinate.
    pub fd_rel_step: f64,
    /// Absolute floor added to the FD step so coordinates at zero still move.
    pub fd_abs_floor: f64,
    pub armijo_c: f64,
    pub max_halvings: u32,
    pub initial_step: f64,
    pub grad_tol: f64,
    pub rel_obj_tol: f64,
    pub max_iters: usize,
}

impl Default for DescentOptions {
    fn default() -> Self {
        DescentOptions {
            fd_rel_step: 1e-2,
            fd_abs_floor: 1e-3,
            armijo_c: 1e-4,
            max_halvings: 20,
            initial_step: 1.0,
            grad_tol: 1e-4,
            rel_obj_tol: 1e-6,
            max_iters: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DescentStatus {
    /// Gradient norm or relative objective change under tolerance.
    Converged,
    MaxIters,
    /// No admissible Armijo step from the current iterate.
    Stalled,
}

/// One accepted iterate of a descent run.
#[derive(Debug, Clone)]
pub struct TraceRecord {
    pub iteration: usize,
    pub params: Vec<f64>,
    pub objective: f64,
    pub step: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Default)]
pub struct OptTrace {
    pub records: Vec<TraceRecord>,
}

impl OptTrace {
    /// Objectives never increase along accepted steps.
    pub fn is_monotone(&self) -> bool {
        self.records
            .windows(2)
            .all(|w| w[1].objective <= w[0].objective + 1e-12)
    }
}

/// Finite-difference gradient descent with Armijo backtracking. Probes are
/// evaluated concurrently; the descent loop itself is sequential. Returns the
/// best (last accepted) iterate.
pub fn gradient_descent<F>(
    f: F,
    x0: &[f64],
    opts: &DescentOptions,
) -> Result<(Vec<f64>, OptTrace, DescentStatus)>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    if !fx.is_finite() {
        return Err(Error::InvalidParameter(
            "objective is not finite at the starting point".into(),
        ));
    }
    let dim = x.len();
    let mut trace = OptTrace::default();
    trace.records.push(TraceRecord {
        iteration: 0,
        params: x.clone(),
        objective: fx,
        step: 0.0,
        grad_norm: f64::NAN,
    });

    for iter in 1..=opts.max_iters {
        // central finite differences, all probes in parallel
        let steps: Vec<f64> = x
            .iter()
            .map(|xi| opts.fd_rel_step * (xi.abs() + opts.fd_abs_floor))
            .collect();
        let probe_values: Vec<f64> = (0..2 * dim)
            .into_par_iter()
            .map(|j| {
                let i = j / 2;
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                let mut p = x.clone();
                p[i] += sign * steps[i];
                f(&p)
            })
            .collect();
        let mut grad = vec![0.0; dim];
        for i in 0..dim {
            let (fp, fm) = (probe_values[2 * i], probe_values[2 * i + 1]);
            grad[i] = match (fp.is_finite(), fm.is_finite()) {
                (true, true) => (fp - fm) / (2.0 * steps[i]),
                (true, false) => (fp - fx) / steps[i],
                (false, true) => (fx - fm) / steps[i],
                (false, false) => 0.0,
            };
        }
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if grad_norm < opts.grad_tol {
            return Ok((x, trace, DescentStatus::Converged));
        }

        // Armijo backtracking along the negative gradient
        let mut t = opts.initial_step;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let cand: Vec<f64> = x.iter().zip(&grad).map(|(xi, gi)| xi - t * gi).collect();
            let fc = f(&cand);
            if fc.is_finite() && fc <= fx - opts.armijo_c * t * grad_norm * grad_norm {
                accepted = Some((cand, fc, t));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, fc, t)) = accepted else {
            return Ok((x, trace, DescentStatus::Stalled));
        };
        let rel_change = (fx - fc) / fx.abs().max(1.0);
        x = cand;
        fx = fc;
        trace.records.push(TraceRecord {
            iteration: iter,
            params: x.clone(),
            objective: fx,
            step: t,
            grad_norm,
        });
        if rel_change < opts.rel_obj_tol {
            return Ok((x, trace, DescentStatus::Converged));
        }
    }
    Ok((x, trace, DescentStatus::MaxIters))
}

#[derive(Debug, Clone, Copy)]
pub struct SearchBounds {
    pub tau: (f64, f64),
    pub lambda: (f64, f64),
}

impl Default for SearchBounds {
    fn default() -> Self {
        SearchBounds {
            tau: (0.02, 0.2),
            lambda: (0.1, 5.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EstimateOptions {
    pub bounds: SearchBounds,
    pub trials: usize,
    pub seed: u64,
    pub descent: DescentOptions,
    /// Skip the amplitude stage (τ-only estimation).
    pub skip_lambda_stage: bool,
    /// Fields whose data-variance mass near the center falls below this
    /// fraction of the best field are flagged low-information.
    pub low_info_fraction: f64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            bounds: SearchBounds::default(),
            trials: 40,
            seed: 0,
            descent: DescentOptions::default(),
            skip_lambda_stage: false,
            low_info_fraction: 0.25,
        }
    }
}

/// Per-iteration row carrying the full parameter vector, for CSV emission.
#[derive(Debug, Clone)]
pub struct EstimateTraceRow {
    pub iteration: usize,
    pub taus: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub objective: f64,
    pub step: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct EstimateResult {
    pub params: ParamVector,
    pub stage1: Vec<EstimateTraceRow>,
    pub stage1_status: DescentStatus,
    pub stage2: Option<Vec<EstimateTraceRow>>,
    pub stage2_status: Option<DescentStatus>,
    /// Data-variance mass near each center (the information proxy).
    pub information: Vec<f64>,
    pub low_information: Vec<bool>,
}

impl EstimateResult {
    pub fn trace_csv(rows: &[EstimateTraceRow]) -> String {
        let p = rows.first().map_or(0, |r| r.taus.len());
        let mut out = String::from("iteration");
        for i in 1..=p {
            out.push_str(&format!(",tau_{i}"));
        }
        for i in 1..=p {
            out.push_str(&format!(",lambda_{i}"));
        }
        out.push_str(",objective,step,grad_norm\n");
        for r in rows {
            out.push_str(&r.iteration.to_string());
            for t in &r.taus {
                out.push_str(&format!(",{t:.12e}"));
            }
            for l in &r.lambdas {
                out.push_str(&format!(",{l:.12e}"));
            }
            out.push_str(&format!(
                ",{:.12e},{:.12e},{:.12e}\n",
                r.objective, r.step, r.grad_norm
            ));
        }
        out
    }
}

/// Variance mass of the data within 2.5τ of each center (min-image metric).
pub fn field_information(data: &DataMoments, centers: &[[f64; 2]], taus: &[f64]) -> Vec<f64> {
    let (nx, ny) = (data.variance.nx(), data.variance.ny());
    centers
        .iter()
        .zip(taus)
        .map(|(&mu, &tau)| {
            let radius = 2.5 * tau;
            let mut mass = 0.0;
            for ix in 0..nx {
                let x = ix as f64 / nx as f64;
                for iy in 0..ny {
                    let y = iy as f64 / ny as f64;
                    let dx = wrap_half(x - mu[0]);
                    let dy = wrap_half(y - mu[1]);
                    if dx * dx + dy * dy <= radius * radius {
                        mass += data.variance.pixels()[[ix, iy]];
                    }
                }
            }
            mass
        })
        .collect()
}

#[inline]
fn wrap_half(d: f64) -> f64 {
    d - d.round()
}

/// Two-stage method-of-moments estimation. Stage 1 searches and descends the
/// widths τ under [`objective_f`] in log-τ coordinates with the amplitudes
/// held at the midpoint of their bounds; stage 2 re-searches and descends the
/// amplitudes under [`objective_g`] in linear coordinates with τ frozen.
pub fn estimate(model: &MomentModel, data: &DataMoments, opts: &EstimateOptions) -> Result<EstimateResult> {
    let p = model.num_fields();
    if p == 0 {
        return Err(Error::InvalidParameter("no noise centers to estimate".into()));
    }
    if data.n < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 samples for data moments, got {}",
            data.n
        )));
    }
    let (tau_lo, tau_hi) = opts.bounds.tau;
    let (lam_lo, lam_hi) = opts.bounds.lambda;
    let lam_init = vec![0.5 * (lam_lo + lam_hi); p];

    // stage 1: widths under the NMI objective
    let f_tau = |taus: &[f64]| objective_f(model, taus, &lam_init, data);
    let tau_bounds = vec![(tau_lo, tau_hi); p];
    let (tau0, _) = random_init(&f_tau, &tau_bounds, opts.trials, opts.seed)
        .map_err(|e| Error::Stage { stage: "tau", source: Box::new(e) })?;
    let log_tau0: Vec<f64> = tau0.iter().map(|t| t.ln()).collect();
    let f_log_tau = |lt: &[f64]| {
        let taus: Vec<f64> = lt.iter().map(|v| v.exp()).collect();
        f_tau(&taus)
    };
    let (log_tau_hat, trace1, status1) = gradient_descent(&f_log_tau, &log_tau0, &opts.descent)
        .map_err(|e| Error::Stage { stage: "tau", source: Box::new(e) })?;
    let tau_hat: Vec<f64> = log_tau_hat.iter().map(|v| v.exp()).collect();
    let stage1_rows: Vec<EstimateTraceRow> = trace1
        .records
        .iter()
        .map(|r| EstimateTraceRow {
            iteration: r.iteration,
            taus: r.params.iter().map(|v| v.exp()).collect(),
            lambdas: lam_init.clone(),
            objective: r.objective,
            step: r.step,
            grad_norm: r.grad_norm,
        })
        .collect();

    // stage 2: amplitudes under the L2 + MI objective
    let (lambda_hat, stage2_rows, status2) = if opts.skip_lambda_stage {
        (lam_init.clone(), None, None)
    } else {
        let g_lam = |lams: &[f64]| objective_g(model, lams, &tau_hat, data);
        let lam_bounds = vec![(lam_lo, lam_hi); p];
        let (lam0, _) = random_init(&g_lam, &lam_bounds, opts.trials, opts.seed.wrapping_add(1))
            .map_err(|e| Error::Stage { stage: "lambda", source: Box::new(e) })?;
        let (lam_hat, trace2, status2) = gradient_descent(&g_lam, &lam0, &opts.descent)
            .map_err(|e| Error::Stage { stage: "lambda", source: Box::new(e) })?;
        let rows: Vec<EstimateTraceRow> = trace2
            .records
            .iter()
            .map(|r| EstimateTraceRow {
                iteration: r.iteration,
                taus: tau_hat.clone(),
                lambdas: r.params.clone(),
                objective: r.objective,
                step: r.step,
                grad_norm: r.grad_norm,
            })
            .collect();
        (lam_hat, Some(rows), Some(status2))
    };

    let information = field_information(data, &model.centers, &tau_hat);
    let max_info = information.iter().cloned().fold(0.0f64, f64::max);
    let low_information = information
        .iter()
        .map(|&m| m < opts.low_info_fraction * max_info)
        .collect();

    Ok(EstimateResult {
        params: ParamVector {
            taus: tau_hat,
            lambdas: lambda_hat,
        },
        stage1: stage1_rows,
        stage1_status: status1,
        stage2: stage2_rows,
        stage2_status: status2,
        information,
        low_information,
    })
}
