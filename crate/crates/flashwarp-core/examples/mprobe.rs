// Temporary development probe; removed before release.
use flashwarp::*;
fn main() {
    let g = GridSpec::new(128, 128, 16).unwrap();
    let k = KernelParams::default();
    let noise = vec![NoiseField::new([0.5, 0.5], 0.06, 2.0, &g).unwrap()];
    for amp in [0.0, 0.05, 0.15] {
        for nsteps in [100usize, 200, 400] {
            let v0 = if amp == 0.0 { FourierVelocity::zeros(g) } else { testing::smooth_velocity(g, amp) };
            let t0 = std::time::Instant::now();
            match evolve_moments(&v0, &noise, nsteps, &k, None) {
                Ok((s, _)) => println!("amp={amp} nsteps={nsteps}: ok {:?} |v|={:.3e} varmax={:.3e}", t0.elapsed(), s.mean_v.max_abs(), s.var_psi.iter().cloned().fold(0.0f64, f64::max)),
                Err(e) => println!("amp={amp} nsteps={nsteps}: FAILED {e} after {:?}", t0.elapsed()),
            }
        }
    }
}
