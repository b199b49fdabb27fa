use flashwarp::*;
fn hamiltonian(v: &FourierVelocity, k: &KernelParams) -> f64 {
    0.5 * velocity_to_momentum(v, k).inner(v)
}
fn main() {
    let g = GridSpec::new(64, 64, 16).unwrap();
    let k = KernelParams::default();
    for amp in [0.3, 0.5, 0.8, 1.2] {
        let v0 = testing::smooth_velocity(g, amp);
        let mut drifts = Vec::new();
        for nsteps in [50usize, 100, 200, 400] {
            let dt = 1.0 / nsteps as f64;
            let mut v = v0.clone();
            let h0 = hamiltonian(&v, &k);
            let mut maxd: f64 = 0.0;
            for _ in 0..nsteps {
                v = epdiff_deterministic_step(&v, dt, &k).unwrap();
                maxd = maxd.max(((hamiltonian(&v, &k) - h0) / h0).abs());
            }
            drifts.push(maxd);
        }
        let r: Vec<String> = drifts.windows(2).map(|w| format!("{:.1}", w[0]/w[1])).collect();
        println!("amp={amp}: drifts={drifts:?} ratios={r:?}");
    }
}
