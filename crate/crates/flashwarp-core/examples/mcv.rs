// Temporary development probe; removed before release.
use flashwarp::*;
use rayon::prelude::*;

fn main() {
    let g = GridSpec::new(32, 32, 16).unwrap();
    let k = KernelParams::default();
    let amp: f64 = std::env::args().nth(1).map(|s| s.parse().unwrap()).unwrap_or(0.05);
    let paths: usize = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(4000);
    let v0 = FourierVelocity::single_mode(g, [1, 0], 1, amp, -std::f64::consts::FRAC_PI_2);
    let noise = vec![NoiseField::new([0.45, 0.55], 0.06, 0.5, &g).unwrap()];
    let nsteps = 100;
    let opts = FlowOptions { record: RecordMode::FinalOnly, track_forward: false };
    let chunk = 50;
    let nchunks = paths / chunk;
    let nv = g.trunc * g.trunc * 2 * 2;
    let t0 = std::time::Instant::now();
    let sums: Vec<_> = (0..nchunks).into_par_iter().map(|c| {
        let mut v_sum = vec![0.0f64; nv];
        let mut v_sq = vec![0.0f64; nv];
        for i in 0..chunk {
            let seed = derive_seed(99, (c * chunk + i) as u64);
            let path = WienerPath::generate(seed, nsteps, 1).unwrap();
            let res = integrate_flow(&v0, &noise, &path, &k, &opts).unwrap();
            for (j, cf) in res.state.v.coeffs().iter().enumerate() {
                v_sum[2 * j] += cf.re; v_sq[2 * j] += cf.re * cf.re;
                v_sum[2 * j + 1] += cf.im; v_sq[2 * j + 1] += cf.im * cf.im;
            }
        }
        (v_sum, v_sq)
    }).collect();
    println!("{} paths in {:?}", nchunks * chunk, t0.elapsed());
    let n = (nchunks * chunk) as f64;
    let mut mean = vec![0.0; nv];
    let mut var = vec![0.0; nv];
    for (s, q) in &sums {
        for j in 0..nv { mean[j] += s[j]; var[j] += q[j]; }
    }
    for j in 0..nv {
        mean[j] /= n;
        var[j] = (var[j] / n - mean[j] * mean[j]).max(0.0);
    }
    let (state, _) = evolve_moments(&v0, &noise, 200, &k, None).unwrap();
    let mut max_z: f64 = 0.0;
    let mut viol = 0;
    let mut max_diff: f64 = 0.0;
    for (j, c) in state.mean_v.coeffs().iter().enumerate() {
        for (part, idx) in [(c.re, 2 * j), (c.im, 2 * j + 1)] {
            let se = (var[idx] / n).sqrt().max(1e-15);
            let z = (mean[idx] - part).abs() / se;
            max_diff = max_diff.max((mean[idx] - part).abs());
            if z > 3.0 { viol += 1; }
            max_z = max_z.max(z);
        }
    }
    println!("v: max_z={max_z:.2} viol={viol}/{nv} max_diff={max_diff:.3e} scale={:.3e}", state.mean_v.max_abs());
}
