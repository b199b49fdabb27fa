// Temporary development probe; removed before release.
use flashwarp::*;
use std::time::Instant;

fn main() {
    for (alpha, power) in [(3.0, 1u32), (1.0, 1), (3.0, 2), (3.0, 3)] {
        let k = KernelParams::new(alpha, 1.0, power).unwrap();
        // 128^2 stochastic shoot
        let g = GridSpec::new(128, 128, 16).unwrap();
        let v0 = testing::smooth_velocity(g, 0.15);
        let noise = vec![NoiseField::new([0.5, 0.5], 0.06, 2.0, &g).unwrap()];
        let path = WienerPath::generate(7, 100, 1).unwrap();
        let t0 = Instant::now();
        let r = integrate_flow(&v0, &noise, &path, &k, &FlowOptions::default());
        match &r {
            Ok(res) => println!(
                "kernel a={alpha} c={power}: shoot ok {:?}, |v1|={:.3e}, folds={}",
                t0.elapsed(),
                res.state.v.max_abs(),
                res.fold_over_steps.len()
            ),
            Err(e) => println!("kernel a={alpha} c={power}: shoot FAILED ({e})"),
        }
        // small 32^2 ensemble sanity (20 paths)
        let g2 = GridSpec::new(32, 32, 16).unwrap();
        let v02 = FourierVelocity::single_mode(g2, [1, 0], 1, 0.15, -std::f64::consts::FRAC_PI_2);
        let noise2 = vec![NoiseField::new([0.45, 0.55], 0.06, 0.5, &g2).unwrap()];
        let mut bad = 0;
        let mut supv: f64 = 0.0;
        for i in 0..20u64 {
            let p = WienerPath::generate(derive_seed(5, i), 100, 1).unwrap();
            match integrate_flow(&v02, &noise2, &p, &k, &FlowOptions { record: RecordMode::FinalOnly, track_forward: false }) {
                Ok(res) => supv = supv.max(res.state.v.max_abs()),
                Err(_) => bad += 1,
            }
        }
        println!("   mc32: {bad}/20 failed, sup|v1|={supv:.3e}");
    }
}
