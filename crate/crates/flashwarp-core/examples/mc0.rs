// Temporary development probe; removed before release.
use flashwarp::*;
use rayon::prelude::*;

fn main() {
    let g = GridSpec::new(32, 32, 16).unwrap();
    let k = KernelParams::default();
    let amp: f64 = std::env::args().nth(1).map(|s| s.parse().unwrap()).unwrap_or(0.0);
    let paths: usize = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(2000);
    let v0 = if amp == 0.0 {
        FourierVelocity::zeros(g)
    } else {
        FourierVelocity::single_mode(g, [1, 0], 1, amp, -std::f64::consts::FRAC_PI_2)
    };
    let noise = vec![NoiseField::new([0.45, 0.55], 0.06, 0.5, &g).unwrap()];
    let nsteps = 100;
    let opts = FlowOptions { record: RecordMode::FinalOnly, track_forward: false };
    let t0 = std::time::Instant::now();
    let chunk = 50;
    let nchunks = paths / chunk;
    let sums: Vec<_> = (0..nchunks).into_par_iter().map(|c| {
        let mut psi_sum = vec![0.0f64; g.nx * g.ny * 2];
        let mut psi_sq = vec![0.0f64; g.nx * g.ny * 2];
        for i in 0..chunk {
            let seed = derive_seed(1234, (c * chunk + i) as u64);
            let path = WienerPath::generate(seed, nsteps, 1).unwrap();
            let res = integrate_flow(&v0, &noise, &path, &k, &opts).unwrap();
            for (j, m) in res.state.psi.map().iter().enumerate() {
                psi_sum[j] += m;
                psi_sq[j] += m * m;
            }
        }
        (psi_sum, psi_sq)
    }).collect();
    println!("{} paths in {:?}", nchunks * chunk, t0.elapsed());
    let n = (nchunks * chunk) as f64;
    let nn = g.nx * g.ny * 2;
    let mut mc_mean = vec![0.0; nn];
    let mut mc_var = vec![0.0; nn];
    for (ps, pq) in &sums {
        for j in 0..nn { mc_mean[j] += ps[j]; mc_var[j] += pq[j]; }
    }
    for j in 0..nn {
        mc_mean[j] /= n;
        mc_var[j] = (mc_var[j] / n - mc_mean[j] * mc_mean[j]).max(0.0);
    }
    let (state, _) = evolve_moments(&v0, &noise, 200, &k, None).unwrap();
    let mut max_z: f64 = 0.0;
    let mut viol = 0;
    let mut max_diff: f64 = 0.0;
    for (j, m) in state.mean_psi.map().iter().enumerate() {
        let se = (mc_var[j] / n).sqrt().max(1e-12);
        let z = (mc_mean[j] - m).abs() / se;
        max_diff = max_diff.max((mc_mean[j] - m).abs());
        if z > 3.0 { viol += 1; }
        max_z = max_z.max(z);
    }
    println!("psi: max_z={max_z:.2} viol={viol}/{nn} max_diff={max_diff:.3e}");
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (j, v) in state.var_psi.iter().enumerate() {
        let (x, y) = (mc_var[j], *v);
        sx += x; sy += y; sxx += x * x; syy += y * y; sxy += x * y;
    }
    let cnt = nn as f64;
    let corr = (cnt * sxy - sx * sy) / ((cnt * sxx - sx * sx).sqrt() * (cnt * syy - sy * sy).sqrt());
    println!("var corr={corr:.4}  (ode varmax={:.3e} mc varmax={:.3e})", state.var_psi.iter().cloned().fold(0.0f64, f64::max), mc_var.iter().cloned().fold(0.0f64, f64::max));
}
