//! Image similarity measures used as moment-matching losses: L² distance,
//! mutual information and normalized mutual information over hard-binned
//! joint histograms (entropies in nats).

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramConfig {
    pub bins: usize,
    pub lo: f64,
    pub hi: f64,
}

impl HistogramConfig {
    pub fn new(bins: usize, lo: f64, hi: f64) -> Result<Self> {
        if bins < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 bins, got {bins}"
            )));
        }
        if !(hi > lo) {
            return Err(Error::InvalidParameter(format!(
                "histogram range [{lo}, {hi}] is empty"
            )));
        }
        Ok(HistogramConfig { bins, lo, hi })
    }

    #[inline]
    fn bin(&self, v: f64) -> usize {
        let t = (v - self.lo) / (self.hi - self.lo);
        ((t * self.bins as f64) as isize).clamp(0, self.bins as isize - 1) as usize
    }
}

impl Default for HistogramConfig {
    fn default() -> Self {
        HistogramConfig {
            bins: 32,
            lo: 0.0,
            hi: 1.0,
        }
    }
}

/// Discrete L² distance `sqrt(Σ (A-B)² · hx·hy)`; zero iff identical.
pub fn l2_distance(a: &Image, b: &Image) -> Result<f64> {
    a.same_shape(b)?;
    let cell = 1.0 / (a.nx() * a.ny()) as f64;
    let sum: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels().iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok((sum * cell).sqrt())
}

/// Joint bin probabilities of an image pair.
fn joint_histogram(a: &Image, b: &Image, h: &HistogramConfig) -> Vec<f64> {
    let bins = h.bins;
    let mut counts = vec![0.0f64; bins * bins];
    let n = (a.nx() * a.ny()) as f64;
    for (x, y) in a.pixels().iter().zip(b.pixels().iter()) {
        counts[h.bin(*x) * bins + h.bin(*y)] += 1.0;
    }
    for c in counts.iter_mut() {
        *c /= n;
    }
    counts
}

fn entropy(p: impl Iterator<Item = f64>) -> f64 {
    let mut s = 0.0;
    for q in p {
        if q > 0.0 {
            s -= q * q.ln();
        }
    }
    s
}

/// Mutual information `Σ p(a,b) ln(p(a,b)/(p(a)p(b)))` in nats. A degenerate
/// image occupying a single bin gives zero, not an error.
pub fn mutual_information(a: &Image, b: &Image, h: &HistogramConfig) -> Result<f64> {
    a.same_shape(b)?;
    let joint = joint_histogram(a, b, h);
    let bins = h.bins;
    let mut pa = vec![0.0; bins];
    let mut pb = vec![0.0; bins];
    for i in 0..bins {
        for j in 0..bins {
            pa[i] += joint[i * bins + j];
            pb[j] += joint[i * bins + j];
        }
    }
    let mut mi = 0.0;
    for i in 0..bins {
        for j in 0..bins {
            let pij = joint[i * bins + j];
            if pij > 0.0 {
                mi += pij * (pij / (pa[i] * pb[j])).ln();
            }
        }
    }
    // tiny negatives are rounding in the log sums
    Ok(mi.max(0.0))
}

/// Studholme normalized mutual information `(H(A)+H(B))/H(A,B) ∈ [1,2]`;
/// defined as 1 when both images are constant.
pub fn normalized_mutual_information(a: &Image, b: &Image, h: &HistogramConfig) -> Result<f64> {
    a.same_shape(b)?;
    let joint = joint_histogram(a, b, h);
    let bins = h.bins;
    let mut pa = vec![0.0; bins];
    let mut pb = vec![0.0; bins];
    for i in 0..bins {
        for j in 0..bins {
            pa[i] += joint[i * bins + j];
            pb[j] += joint[i * bins + j];
        }
    }
    let hab = entropy(joint.iter().copied());
    if hab == 0.0 {
        return Ok(1.0);
    }
    Ok((entropy(pa.into_iter()) + entropy(pb.into_iter())) / hab)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    fn smooth_image(nx: usize, ny: usize, seed: f64) -> Image {
        let mut img = Image::zeros(nx, ny);
        for ix in 0..nx {
            for iy in 0..ny {
                let x = ix as f64 / nx as f64;
                let y = iy as f64 / ny as f64;
                let tau = 2.0 * std::f64::consts::PI;
                let v = 0.5
                    + 0.25 * (tau * (x + seed)).sin()
                    + 0.2 * (tau * (y - seed)).cos() * (tau * x).sin();
                img.pixels_mut()[[ix, iy]] = v.clamp(0.0, 1.0);
            }
        }
        img
    }

    fn shuffled(img: &Image, seed: u64) -> Image {
        let mut vals: Vec<f64> = img.pixels().iter().copied().collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        vals.shuffle(&mut rng);
        let mut out = Image::zeros(img.nx(), img.ny());
        for (dst, src) in out.pixels_mut().iter_mut().zip(vals) {
            *dst = src;
        }
        out
    }

    #[test]
    fn l2_of_identical_images_is_zero() {
        let a = smooth_image(32, 32, 0.1);
        assert_eq!(l2_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn l2_of_constant_offset_has_closed_form() {
        let a = smooth_image(32, 32, 0.3);
        let mut b = a.clone();
        b.pixels_mut().mapv_inplace(|v| v + 0.125);
        let n = (32 * 32) as f64;
        let expect = 0.125 * (n / n).sqrt();
        assert!((l2_distance(&a, &b).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn mi_of_identical_image_is_marginal_entropy() {
        let a = smooth_image(64, 64, 0.7);
        let h = HistogramConfig::default();
        let mi = mutual_information(&a, &a, &h).unwrap();
        let joint = joint_histogram(&a, &a, &h);
        let mut pa = vec![0.0; h.bins];
        for i in 0..h.bins {
            for j in 0..h.bins {
                pa[i] += joint[i * h.bins + j];
            }
        }
        let ha = entropy(pa.into_iter());
        assert!((mi - ha).abs() < 1e-12);
    }

    /// Few-level segmented image: keeps the finite-sample MI bias
    /// (≈ occupied joint cells / 2N nats) well under the shuffle threshold.
    fn segmented_phantom(nx: usize, ny: usize) -> Image {
        let mut img = crate::testing::phantom(nx, ny);
        img.pixels_mut()
            .mapv_inplace(|v| (v * 8.0).floor().min(7.0) / 8.0);
        img
    }

    #[test]
    fn mi_of_shuffled_pair_is_near_zero() {
        let a = segmented_phantom(64, 64);
        let b = shuffled(&a, 5);
        let mi = mutual_information(&a, &b, &HistogramConfig::default()).unwrap();
        assert!(mi < 0.05, "shuffled MI {mi}");
    }

    #[test]
    fn mi_is_invariant_under_bin_relabeling() {
        let a = smooth_image(64, 64, 0.4);
        let b = smooth_image(64, 64, 0.9);
        let h = HistogramConfig::default();
        let base = mutual_information(&a, &b, &h).unwrap();
        // flip intensities of one image: bins permute, MI unchanged
        let mut flipped = b.clone();
        flipped.pixels_mut().mapv_inplace(|v| {
            // map to the mirrored bin center to keep occupancy bijective
            let bin = ((v * 32.0) as usize).min(31);
            (31 - bin) as f64 / 32.0 + 0.5 / 32.0
        });
        let mi = mutual_information(&a, &flipped, &h).unwrap();
        assert!((mi - base).abs() < 1e-12);
    }

    #[test]
    fn nmi_self_similarity_is_two() {
        let a = smooth_image(64, 64, 0.5);
        let h = HistogramConfig::default();
        let nmi = normalized_mutual_information(&a, &a, &h).unwrap();
        assert!((nmi - 2.0).abs() < 1e-12);
    }

    #[test]
    fn nmi_of_shuffles_is_near_one_and_in_range() {
        let a = segmented_phantom(64, 64);
        let b = shuffled(&a, 11);
        let h = HistogramConfig::default();
        let nmi = normalized_mutual_information(&a, &b, &h).unwrap();
        assert!((nmi - 1.0).abs() < 0.05, "shuffled NMI {nmi}");
        assert!((1.0..=2.0).contains(&nmi));
    }

    #[test]
    fn nmi_of_two_constants_is_one() {
        let a = Image::constant(16, 16, 0.5);
        let b = Image::constant(16, 16, 0.5);
        let nmi = normalized_mutual_information(&a, &b, &HistogramConfig::default()).unwrap();
        assert_eq!(nmi, 1.0);
    }

    #[test]
    fn nmi_invariant_under_bin_bijective_scaling() {
        // quantize to bin centers in the lower half, scale by exactly 2
        let mut a = smooth_image(64, 64, 0.8);
        a.pixels_mut().mapv_inplace(|v| {
            let bin = ((v * 0.5) * 32.0) as usize; // bins 0..16
            bin as f64 / 32.0 + 0.5 / 32.0
        });
        let mut b = a.clone();
        b.pixels_mut().mapv_inplace(|v| v * 2.0 - 0.5 / 32.0);
        let h = HistogramConfig::default();
        let base = normalized_mutual_information(&a, &a, &h).unwrap();
        let scaled = normalized_mutual_information(&a, &b, &h).unwrap();
        assert!((scaled - base).abs() < 1e-12);
    }

    #[test]
    fn measures_are_symmetric() {
        let a = smooth_image(48, 48, 0.15);
        let b = smooth_image(48, 48, 0.85);
        let h = HistogramConfig::default();
        assert_eq!(l2_distance(&a, &b).unwrap(), l2_distance(&b, &a).unwrap());
        let mab = mutual_information(&a, &b, &h).unwrap();
        let mba = mutual_information(&b, &a, &h).unwrap();
        assert!((mab - mba).abs() < 1e-14);
        let nab = normalized_mutual_information(&a, &b, &h).unwrap();
        let nba = normalized_mutual_information(&b, &a, &h).unwrap();
        assert!((nab - nba).abs() < 1e-14);
    }

    #[test]
    fn mi_ordering_stable_across_bin_counts() {
        let a = smooth_image(64, 64, 0.0);
        let close = smooth_image(64, 64, 0.02);
        let far = shuffled(&a, 3);
        for bins in [16usize, 64] {
            let h = HistogramConfig::new(bins, 0.0, 1.0).unwrap();
            let mi_close = mutual_information(&a, &close, &h).unwrap();
            let mi_far = mutual_information(&a, &far, &h).unwrap();
            assert!(
                mi_close > mi_far,
                "ordering flipped at {bins} bins: {mi_close} vs {mi_far}"
            );
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = Image::zeros(16, 16);
        let b = Image::zeros(16, 17);
        assert!(l2_distance(&a, &b).is_err());
        assert!(mutual_information(&a, &b, &HistogramConfig::default()).is_err());
    }
}
