// Temporary development probe; removed before release.
use std::time::Instant;

use flashwarp::*;

fn hamiltonian(v: &FourierVelocity, k: &KernelParams) -> f64 {
    0.5 * velocity_to_momentum(v, k).inner(v)
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let what = args.get(1).map(String::as_str).unwrap_or("all");

    if what == "all" || what == "energy" {
        let g = GridSpec::new(64, 64, 16).unwrap();
        let k = KernelParams::default();
        for amp in [0.2, 0.5] {
            let v0 = testing::smooth_velocity(g, amp);
            for nsteps in [100usize, 200] {
                let dt = 1.0 / nsteps as f64;
                let mut v = v0.clone();
                let h0 = hamiltonian(&v, &k);
                let mut max_drift: f64 = 0.0;
                for _ in 0..nsteps {
                    v = epdiff_deterministic_step(&v, dt, &k).unwrap();
                    max_drift = max_drift.max(((hamiltonian(&v, &k) - h0) / h0).abs());
                }
                println!("energy amp={amp} nsteps={nsteps}: H0={h0:.6e} drift={max_drift:.6e}");
            }
        }
    }

    if what == "all" || what == "stiff" {
        // moment solve stability at the headline parameters
        let g = GridSpec::new(64, 64, 16).unwrap();
        let k = KernelParams::default();
        let v0 = FourierVelocity::zeros(g);
        for (lambda, nsteps) in [(0.5, 100usize), (2.0, 50), (2.0, 100), (5.0, 100)] {
            let noise = vec![NoiseField::new([0.5, 0.5], 0.06, lambda, &g).unwrap()];
            let t0 = Instant::now();
            match evolve_moments(&v0, &noise, nsteps, &k, None) {
                Ok((s, _)) => {
                    let vmax = s.var_psi.iter().cloned().fold(0.0f64, f64::max);
                    let disp = {
                        let id = DeformationGrid::identity(g);
                        s.mean_psi.max_distance(&id)
                    };
                    println!(
                        "stiff lambda={lambda} nsteps={nsteps}: ok in {:?}, max var={vmax:.4e} max|psi-id|={disp:.4e}",
                        t0.elapsed()
                    );
                }
                Err(e) => println!("stiff lambda={lambda} nsteps={nsteps}: DIVERGED ({e})"),
            }
        }
    }

    if what == "all" || what == "timing" {
        let g = GridSpec::new(128, 128, 16).unwrap();
        let k = KernelParams::default();
        let v0 = testing::smooth_velocity(g, 0.15);
        let noise = vec![NoiseField::new([0.5, 0.5], 0.06, 2.0, &g).unwrap()];
        let path = WienerPath::generate(7, 100, 1).unwrap();
        // warm plans
        let _ = integrate_flow(&v0, &noise, &path, &k, &FlowOptions::default()).unwrap();
        let t0 = Instant::now();
        let res = integrate_flow(&v0, &noise, &path, &k, &FlowOptions::default()).unwrap();
        println!(
            "timing shoot 128x128/100 steps/1 field: {:?} (folds: {:?})",
            t0.elapsed(),
            res.fold_over_steps
        );
        let t0 = Instant::now();
        let v0m = testing::smooth_velocity(g, 0.15);
        let (_s, _) = evolve_moments(&v0m, &noise, 100, &k, None).unwrap();
        println!("timing moments 128x128/100 steps/1 field: {:?}", t0.elapsed());
    }

    if what == "all" || what == "mc" {
        // small ensemble vs moment ODE at modest noise
        use rayon::prelude::*;
        let g = GridSpec::new(32, 32, 16).unwrap();
        let k = KernelParams::default();
        let v0 = FourierVelocity::single_mode(g, [1, 0], 1, 0.15, -std::f64::consts::FRAC_PI_2);
        let (tau, lambda) = (0.06, 0.5);
        let noise = vec![NoiseField::new([0.45, 0.55], tau, lambda, &g).unwrap()];
        let paths = 2000usize;
        let nsteps = 100;
        let opts = FlowOptions {
            record: RecordMode::FinalOnly,
            track_forward: false,
        };
        let t0 = Instant::now();
        let chunk = 100;
        let sums: Vec<_> = (0..paths / chunk)
            .into_par_iter()
            .map(|c| {
                let mut psi_sum = vec![0.0f64; g.nx * g.ny * 2];
                let mut psi_sq = vec![0.0f64; g.nx * g.ny * 2];
                let mut v_sum = vec![0.0f64; g.trunc * g.trunc * 4];
                for i in 0..chunk {
                    let seed = derive_seed(1234, (c * chunk + i) as u64);
                    let path = WienerPath::generate(seed, nsteps, 1).unwrap();
                    let res = integrate_flow(&v0, &noise, &path, &k, &opts).unwrap();
                    for (j, m) in res.state.psi.map().iter().enumerate() {
                        psi_sum[j] += m;
                        psi_sq[j] += m * m;
                    }
                    for (j, cfe) in res.state.v.coeffs().iter().enumerate() {
                        v_sum[2 * j] += cfe.re;
                        v_sum[2 * j + 1] += cfe.im;
                    }
                }
                (psi_sum, psi_sq, v_sum)
            })
            .collect();
        println!("mc {} paths in {:?}", paths, t0.elapsed());
        let n = paths as f64;
        let mut psi_mean = vec![0.0; g.nx * g.ny * 2];
        let mut psi_var = vec![0.0; g.nx * g.ny * 2];
        let mut v_mean = vec![0.0; g.trunc * g.trunc * 4];
        for (ps, pq, vs) in &sums {
            for j in 0..psi_mean.len() {
                psi_mean[j] += ps[j];
                psi_var[j] += pq[j];
            }
            for j in 0..v_mean.len() {
                v_mean[j] += vs[j];
            }
        }
        for j in 0..psi_mean.len() {
            psi_mean[j] /= n;
            psi_var[j] = psi_var[j] / n - psi_mean[j] * psi_mean[j];
        }
        for vm in v_mean.iter_mut() {
            *vm /= n;
        }

        let (state, _) = evolve_moments(&v0, &noise, 200, &k, None).unwrap();
        // z-scores of the ODE mean vs the MC mean
        let mut max_z: f64 = 0.0;
        let mut viol = 0usize;
        for (j, m) in state.mean_psi.map().iter().enumerate() {
            let se = (psi_var[j].max(0.0) / n).sqrt().max(1e-12);
            let z = (psi_mean[j] - m).abs() / se;
            if z > 3.0 {
                viol += 1;
            }
            max_z = max_z.max(z);
        }
        println!(
            "mc psi: max_z={max_z:.2} violations={viol}/{} ",
            psi_mean.len()
        );
        // variance correlation
        let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let cnt = psi_var.len() as f64;
        for (j, v) in state.var_psi.iter().enumerate() {
            let x = psi_var[j];
            let y = *v;
            sx += x;
            sy += y;
            sxx += x * x;
            syy += y * y;
            sxy += x * y;
        }
        let corr = (cnt * sxy - sx * sy)
            / ((cnt * sxx - sx * sx).sqrt() * (cnt * syy - sy * sy).sqrt());
        println!("mc var corr={corr:.4}");
        // v mean z
        let mut max_zv: f64 = 0.0;
        for (j, c) in state.mean_v.coeffs().iter().enumerate() {
            for (part, got) in [(c.re, v_mean[2 * j]), (c.im, v_mean[2 * j + 1])] {
                // reuse path variance as rough scale: skip exact SE, report abs diff
                let z = (part - got).abs();
                max_zv = max_zv.max(z);
            }
        }
        println!("mc v mean: max abs diff={max_zv:.3e} (scale {:.3e})", state.mean_v.max_abs());
    }
}
