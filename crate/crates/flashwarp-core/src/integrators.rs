//! Generic explicit steppers: RK4 for deterministic drift and the Heun
//! predictor-corrector for Stratonovich SDEs. Both operate on any state with
//! an axpy, so flow states, moment states and scalar test equations all run
//! through the same code.

/// State vectors the steppers can advance.
pub trait OdeState: Clone {
    /// `self += a * other`
    fn scaled_add(&mut self, a: f64, other: &Self);
}

impl OdeState for f64 {
    fn scaled_add(&mut self, a: f64, other: &Self) {
        *self += a * other;
    }
}

/// Right-hand sides of a Stratonovich system `dX = A(X) dt + Σ_k B_k(X)∘dW_k`.
/// During one step the integrator calls `drift` before any `diffusion` on the
/// same state, letting implementations cache shared spatial transforms.
pub trait SdeSystem {
    type State: OdeState;

    fn drift(&mut self, state: &Self::State, out: &mut Self::State);

    fn num_noise(&self) -> usize;

    /// Writes `B_k(state)` into `out` and returns `true`, or returns `false`
    /// when the term is identically zero (the integrator then skips the
    /// accumulation entirely, keeping zero-amplitude runs bit-identical to
    /// drift-only runs).
    fn diffusion(&mut self, state: &Self::State, k: usize, out: &mut Self::State) -> bool;
}

/// One classical RK4 step of `dX/dt = f(X)`. The right-hand side must
/// overwrite `out` completely; `out` arrives holding stale values.
pub fn rk4_step<S: OdeState, F: FnMut(&S, &mut S)>(f: &mut F, state: &mut S, dt: f64) {
    let mut k1 = state.clone();
    f(&*state, &mut k1);
    let mut mid = state.clone();
    mid.scaled_add(0.5 * dt, &k1);
    let mut k2 = state.clone();
    f(&mid, &mut k2);
    let mut mid = state.clone();
    mid.scaled_add(0.5 * dt, &k2);
    let mut k3 = state.clone();
    f(&mid, &mut k3);
    let mut end = state.clone();
    end.scaled_add(dt, &k3);
    let mut k4 = state.clone();
    f(&end, &mut k4);

    state.scaled_add(dt / 6.0, &k1);
    state.scaled_add(dt / 3.0, &k2);
    state.scaled_add(dt / 3.0, &k3);
    state.scaled_add(dt / 6.0, &k4);
}

/// One Heun (predictor-corrector) step; converges to the Stratonovich
/// solution for the smooth diffusion fields used here.
pub fn heun_step<Sys: SdeSystem>(sys: &mut Sys, state: &mut Sys::State, dt: f64, dw: &[f64]) {
    assert_eq!(dw.len(), sys.num_noise());

    let mut drift0 = state.clone();
    sys.drift(&*state, &mut drift0);
    let mut diffs0: Vec<Option<Sys::State>> = Vec::with_capacity(dw.len());
    let mut scratch = state.clone();
    for k in 0..dw.len() {
        if sys.diffusion(state, k, &mut scratch) {
            diffs0.push(Some(scratch.clone()));
        } else {
            diffs0.push(None);
        }
    }

    let mut predictor = state.clone();
    predictor.scaled_add(dt, &drift0);
    for (k, d) in diffs0.iter().enumerate() {
        if let Some(d) = d {
            predictor.scaled_add(dw[k], d);
        }
    }

    let mut drift1 = state.clone();
    sys.drift(&predictor, &mut drift1);

    state.scaled_add(0.5 * dt, &drift0);
    state.scaled_add(0.5 * dt, &drift1);
    for (k, d) in diffs0.iter().enumerate() {
        if let Some(d) = d {
            state.scaled_add(0.5 * dw[k], d);
            if sys.diffusion(&predictor, k, &mut scratch) {
                state.scaled_add(0.5 * dw[k], &scratch);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn rk4_is_fourth_order_on_exponential() {
        // dx/dt = -x, x(1) = e^{-1}
        let run = |nsteps: usize| {
            let mut x = 1.0f64;
            let dt = 1.0 / nsteps as f64;
            let mut f = |s: &f64, out: &mut f64| *out = -s;
            for _ in 0..nsteps {
                rk4_step(&mut f, &mut x, dt);
            }
            (x - (-1.0f64).exp()).abs()
        };
        let e1 = run(20);
        let e2 = run(40);
        let ratio = e1 / e2;
        assert!(ratio > 12.0 && ratio < 20.0, "ratio {ratio}");
    }

    struct Gbm {
        a: f64,
        b: f64,
    }

    impl SdeSystem for Gbm {
        type State = f64;
        fn drift(&mut self, s: &f64, out: &mut f64) {
            *out = self.a * s;
        }
        fn num_noise(&self) -> usize {
            1
        }
        fn diffusion(&mut self, s: &f64, _k: usize, out: &mut f64) -> bool {
            if self.b == 0.0 {
                return false;
            }
            *out = self.b * s;
            true
        }
    }

    /// Strong error of Heun on Stratonovich geometric Brownian motion decays
    /// like O(dt); exact solution x exp(a t + b W_t).
    #[test]
    fn heun_is_strong_order_one_on_gbm() {
        let (a, b) = (0.4, 0.7);
        let paths = 4000;
        let mut errs = Vec::new();
        for &nsteps in &[50usize, 100, 200] {
            let dt = 1.0 / nsteps as f64;
            let mut total = 0.0;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
            for _ in 0..paths {
                let mut sys = Gbm { a, b };
                let mut x = 1.0f64;
                let mut w = 0.0;
                for _ in 0..nsteps {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let dw = z * dt.sqrt();
                    heun_step(&mut sys, &mut x, dt, &[dw]);
                    w += dw;
                }
                let exact = (a + 0.0) * 1.0 + b * w; // Stratonovich exponent
                total += (x - exact.exp()).abs();
            }
            errs.push(total / paths as f64);
        }
        let r1 = errs[0] / errs[1];
        let r2 = errs[1] / errs[2];
        assert!(r1 > 1.5 && r1 < 3.0, "halving ratios {errs:?}");
        assert!(r2 > 1.5 && r2 < 3.0, "halving ratios {errs:?}");
    }

    #[test]
    fn heun_with_zero_diffusion_matches_drift_only_bitwise() {
        let mut sys_noisy = Gbm { a: 0.3, b: 0.0 };
        let mut sys_quiet = Gbm { a: 0.3, b: 0.0 };
        let mut x1 = 1.234f64;
        let mut x2 = 1.234f64;
        let dw = [0.5];
        for _ in 0..50 {
            heun_step(&mut sys_noisy, &mut x1, 0.01, &dw);
            heun_step(&mut sys_quiet, &mut x2, 0.01, &[0.9]);
        }
        assert_eq!(x1.to_bits(), x2.to_bits());
    }
}
