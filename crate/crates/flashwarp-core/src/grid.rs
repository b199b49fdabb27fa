use crate::error::{Error, Result};

/// Discretization of the periodic unit square `[0,1)²`: pixel counts per axis
/// and the number of retained signed frequencies per axis (the band limit).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub trunc: usize,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, trunc: usize) -> Result<Self> {
        if nx < 4 || ny < 4 {
            return Err(Error::InvalidParameter(format!(
                "grid must be at least 4x4, got {nx}x{ny}"
            )));
        }
        if trunc < 2 || trunc > nx.min(ny) {
            return Err(Error::InvalidParameter(format!(
                "trunc must satisfy 2 <= trunc <= min(nx, ny), got {trunc} for {nx}x{ny}"
            )));
        }
        Ok(GridSpec { nx, ny, trunc })
    }

    #[inline]
    pub fn hx(&self) -> f64 {
        1.0 / self.nx as f64
    }

    #[inline]
    pub fn hy(&self) -> f64 {
        1.0 / self.ny as f64
    }

    /// Signed frequency stored at band-array index `a`: the band covers
    /// `-trunc/2 ..= trunc/2 - 1` (all of `-h ..= h` for odd trunc).
    #[inline]
    pub fn freq(&self, a: usize) -> i64 {
        a as i64 - (self.trunc / 2) as i64
    }

    /// Whether `-k` is also representable inside the band. For even trunc the
    /// `-trunc/2` edge has no mirror and must stay zero for real fields.
    #[inline]
    pub fn freq_is_paired(&self, k: i64) -> bool {
        let h = (self.trunc / 2) as i64;
        -k >= -h && -k < self.trunc as i64 - h
    }

    /// Band-array index of signed frequency `k`.
    #[inline]
    pub fn band_index(&self, k: i64) -> usize {
        (k + (self.trunc / 2) as i64) as usize
    }

    /// Full-grid FFT index of signed frequency `k` along an axis of length `n`.
    #[inline]
    pub fn wrap_freq(k: i64, n: usize) -> usize {
        k.rem_euclid(n as i64) as usize
    }

    fn key(&self) -> (usize, usize, usize) {
        (self.nx, self.ny, self.trunc)
    }

    pub(crate) fn ensure_matches(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                expected: self.key(),
                got: other.key(),
            })
        }
    }

    /// Central-difference derivative symbol `i sin(2π k h)/h` for one axis.
    #[inline]
    pub fn diff_symbol(k: i64, n: usize) -> f64 {
        let h = 1.0 / n as f64;
        (2.0 * std::f64::consts::PI * k as f64 * h).sin() / h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_layout_even() {
        let g = GridSpec::new(64, 64, 16).unwrap();
        assert_eq!(g.freq(0), -8);
        assert_eq!(g.freq(8), 0);
        assert_eq!(g.freq(15), 7);
        assert!(!g.freq_is_paired(-8));
        assert!(g.freq_is_paired(-7));
        assert!(g.freq_is_paired(7));
        assert_eq!(g.band_index(-8), 0);
        assert_eq!(g.band_index(0), 8);
    }

    #[test]
    fn band_layout_odd() {
        let g = GridSpec::new(32, 32, 17).unwrap();
        assert_eq!(g.freq(0), -8);
        assert_eq!(g.freq(16), 8);
        assert!(g.freq_is_paired(-8));
        assert!(g.freq_is_paired(8));
    }

    #[test]
    fn rejects_bad_dims() {
        assert!(GridSpec::new(2, 64, 16).is_err());
        assert!(GridSpec::new(64, 64, 128).is_err());
        assert!(GridSpec::new(64, 64, 1).is_err());
    }

    #[test]
    fn wrap_and_symbol() {
        assert_eq!(GridSpec::wrap_freq(-1, 64), 63);
        assert_eq!(GridSpec::wrap_freq(3, 64), 3);
        // symbol of k=1 on n=64 equals sin(2*pi/64)*64
        let s = GridSpec::diff_symbol(1, 64);
        let expect = (2.0 * std::f64::consts::PI / 64.0).sin() * 64.0;
        assert!((s - expect).abs() < 1e-12);
        assert_eq!(GridSpec::diff_symbol(0, 64), 0.0);
    }
}
