//! The symbolic base space: bi-infinite fair-coin sequences truncated to
//! finite windows.
//!
//! A point of the full space is a two-sided binary sequence; the metric is
//! dyadic, `dist(w, w') = 2^-k` with `k` the smallest `|j|` at which the
//! sequences differ. We store only a finite contiguous window of
//! coordinates. Every coordinate read outside the stored window is a hard
//! error: silent zero-filling would corrupt the sampling distribution that
//! the downstream splice construction relies on.

use rand::Rng;
use smallvec::SmallVec;

use crate::error::{Error, Result};

/// A finite window of a two-sided binary sequence.
///
/// Stores coordinates `lo..=hi` bit-packed. Immutable after construction;
/// all operations are pure given their random stream.
#[derive(Clone, PartialEq, Eq)]
pub struct SymbolPoint {
    lo: i64,
    len: u32,
    words: SmallVec<[u64; 4]>,
}

impl std::fmt::Debug for SymbolPoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SymbolPoint[{}..={}]=", self.lo, self.hi())?;
        for j in self.lo..=self.hi() {
            write!(f, "{}", self.bit_unchecked(j))?;
        }
        Ok(())
    }
}

impl SymbolPoint {
    /// Builds a point from explicit symbols covering `lo..lo+bits.len()`.
    pub fn from_bits(lo: i64, bits: &[u8]) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::InvalidWindow { lo, hi: lo - 1 });
        }
        let mut p = Self::zeroed(lo, bits.len() as u32);
        for (i, &b) in bits.iter().enumerate() {
            match b {
                0 => {}
                1 => p.set_pos(i),
                _ => {
                    return Err(Error::InvalidTable(format!(
                        "symbol {b} at offset {i} is not binary"
                    )))
                }
            }
        }
        Ok(p)
    }

    fn zeroed(lo: i64, len: u32) -> Self {
        let n_words = (len as usize).div_ceil(64);
        SymbolPoint {
            lo,
            len,
            words: smallvec::smallvec![0u64; n_words],
        }
    }

    fn set_pos(&mut self, pos: usize) {
        self.words[pos / 64] |= 1u64 << (pos % 64);
    }

    /// Lowest stored coordinate index.
    pub fn lo(&self) -> i64 {
        self.lo
    }

    /// Highest stored coordinate index.
    pub fn hi(&self) -> i64 {
        self.lo + i64::from(self.len) - 1
    }

    /// Number of stored coordinates.
    pub fn window_len(&self) -> u32 {
        self.len
    }

    /// True when the stored window contains `lo..=hi`.
    pub fn covers(&self, lo: i64, hi: i64) -> bool {
        self.lo <= lo && hi <= self.hi()
    }

    /// Reads the coordinate at an absolute index.
    pub fn get(&self, index: i64) -> Result<u8> {
        if index < self.lo || index > self.hi() {
            return Err(Error::OutOfWindow {
                index,
                lo: self.lo,
                hi: self.hi(),
            });
        }
        Ok(self.bit_unchecked(index))
    }

    #[inline]
    fn bit_unchecked(&self, index: i64) -> u8 {
        let pos = (index - self.lo) as usize;
        ((self.words[pos / 64] >> (pos % 64)) & 1) as u8
    }

    /// Reads the window `center-radius ..= center+radius` as a binary
    /// number with the lowest index most significant.
    pub fn pattern(&self, center: i64, radius: u32) -> Result<usize> {
        let lo = center - i64::from(radius);
        let hi = center + i64::from(radius);
        if !self.covers(lo, hi) {
            return Err(Error::InsufficientResolution {
                op: "pattern",
                index: if lo < self.lo { lo } else { hi },
                detail: format!("stored window is [{}, {}]", self.lo, self.hi()),
            });
        }
        let mut idx = 0usize;
        for j in lo..=hi {
            idx = (idx << 1) | usize::from(self.bit_unchecked(j));
        }
        Ok(idx)
    }

    /// The point shifted `k` steps: coordinate `j` of the result reads
    /// coordinate `j + k` of `self`. Storage is shared; only the window
    /// moves, to `[lo-k, hi-k]`.
    pub fn shifted_by(&self, k: i64) -> SymbolPoint {
        SymbolPoint {
            lo: self.lo - k,
            len: self.len,
            words: self.words.clone(),
        }
    }
}

/// One application of the left shift: the result reads index `j` as the
/// input's index `j+1`, so the window moves to `[lo-1, hi-1]`.
pub fn shift(p: &SymbolPoint) -> SymbolPoint {
    p.shifted_by(1)
}

/// Draws every coordinate of the window `lo..=hi` as an independent fair
/// bit, i.e. the restriction of the product measure to the window.
pub fn sample_point<R: Rng + ?Sized>(lo: i64, hi: i64, rng: &mut R) -> Result<SymbolPoint> {
    if lo > hi {
        return Err(Error::InvalidWindow { lo, hi });
    }
    let len = (hi - lo + 1) as u32;
    let n_words = (len as usize).div_ceil(64);
    let mut words: SmallVec<[u64; 4]> = SmallVec::with_capacity(n_words);
    for _ in 0..n_words {
        words.push(rng.random::<u64>());
    }
    // Mask unused high bits so equality on points is structural.
    let tail = (len as usize) % 64;
    if tail != 0 {
        let last = words.len() - 1;
        words[last] &= (1u64 << tail) - 1;
    }
    Ok(SymbolPoint { lo, len, words })
}

/// Dyadic distance between two windows, or a below-resolution flag when
/// the stored data cannot distinguish the points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SymbolicDistance {
    /// The points first differ at `|j| = k`; the distance is `2^-k`.
    Resolved(f64),
    /// No difference inside the common symmetric window `[-W, W]`;
    /// the true distance is below `resolution = 2^-W`.
    BelowResolution { resolution: f64 },
}

impl SymbolicDistance {
    /// The resolved distance, or 0 when below resolution.
    pub fn value(&self) -> f64 {
        match *self {
            SymbolicDistance::Resolved(v) => v,
            SymbolicDistance::BelowResolution { .. } => 0.0,
        }
    }

    pub fn is_below_resolution(&self) -> bool {
        matches!(self, SymbolicDistance::BelowResolution { .. })
    }
}

/// Exact dyadic metric on the common symmetric window of both points.
///
/// Returns `2^-k` with `k = min{ |j| <= W : p^(j) != q^(j) }` where
/// `[-W, W]` is the largest symmetric range both windows store; if the
/// points agree on all of it the result is the below-resolution flag.
pub fn distance(p: &SymbolPoint, q: &SymbolPoint) -> Result<SymbolicDistance> {
    let w = p.hi().min(q.hi()).min(-p.lo()).min(-q.lo());
    if w < 0 {
        return Err(Error::IncomparablePoints);
    }
    for k in 0..=w {
        if p.bit_unchecked(k) != q.bit_unchecked(k)
            || (k > 0 && p.bit_unchecked(-k) != q.bit_unchecked(-k))
        {
            return Ok(SymbolicDistance::Resolved(pow2(-k as i32)));
        }
    }
    Ok(SymbolicDistance::BelowResolution {
        resolution: pow2(-(w as i32)),
    })
}

#[inline]
fn pow2(e: i32) -> f64 {
    f64::powi(2.0, e)
}

/// The unique `n >= 0` with `2^-(n+1) < d <= 2^-n`.
///
/// Two points are within distance `d` exactly when they agree on all
/// indices `|j| <= n`.
pub fn agreement_radius(d: f64) -> Result<u32> {
    if !(d > 0.0 && d <= 1.0) {
        return Err(Error::InvalidRadius { d });
    }
    // Float log2 can land one off at exact powers of two; fix up exactly.
    let mut n = (-d.log2()).floor() as i64;
    n = n.clamp(0, 2000);
    while n > 0 && d > pow2(-(n as i32)) {
        n -= 1;
    }
    while pow2(-(n as i32 + 1)) >= d {
        n += 1;
    }
    debug_assert!(pow2(-(n as i32 + 1)) < d && d <= pow2(-(n as i32)));
    Ok(n as u32)
}

/// Samples from the product measure conditioned on the open ball of
/// radius `d` around `center`.
///
/// The result stores `lo..=hi`; coordinates with `|j| <= n` (for
/// `n = agreement_radius(d)`) are copied from `center`, every other
/// stored coordinate is an independent fair bit. The requested window
/// must contain the copied core `[-n, n]`, and so must `center`.
pub fn ball_sample<R: Rng + ?Sized>(
    center: &SymbolPoint,
    d: f64,
    lo: i64,
    hi: i64,
    rng: &mut R,
) -> Result<SymbolPoint> {
    let n = agreement_radius(d)? as i64;
    if lo > hi {
        return Err(Error::InvalidWindow { lo, hi });
    }
    if !center.covers(-n, n) {
        return Err(Error::InsufficientResolution {
            op: "ball_sample",
            index: if center.lo() > -n { -n } else { n },
            detail: format!(
                "center stores [{}, {}], ball of radius {d} needs [-{n}, {n}]",
                center.lo(),
                center.hi()
            ),
        });
    }
    if lo > -n || hi < n {
        return Err(Error::InsufficientResolution {
            op: "ball_sample",
            index: if lo > -n { -n } else { n },
            detail: format!("requested window [{lo}, {hi}] must contain [-{n}, {n}]"),
        });
    }
    let mut p = SymbolPoint::zeroed(lo, (hi - lo + 1) as u32);
    for j in lo..=hi {
        let bit = if j.abs() <= n {
            center.bit_unchecked(j)
        } else {
            u8::from(rng.random::<bool>())
        };
        if bit == 1 {
            p.set_pos((j - lo) as usize);
        }
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn sample_window_arithmetic() {
        let p = sample_point(-2, 3, &mut rng(1)).unwrap();
        assert_eq!(p.lo(), -2);
        assert_eq!(p.hi(), 3);
        assert_eq!(p.window_len(), 6);
        assert!(p.get(-3).is_err());
        assert!(p.get(4).is_err());
    }

    #[test]
    fn sample_rejects_reversed_window() {
        assert!(matches!(
            sample_point(1, 0, &mut rng(1)),
            Err(Error::InvalidWindow { .. })
        ));
    }

    #[test]
    fn single_bit_is_fair() {
        let mut r = rng(7);
        let trials = 100_000;
        let mut ones = 0u64;
        for _ in 0..trials {
            ones += u64::from(sample_point(0, 0, &mut r).unwrap().get(0).unwrap());
        }
        let freq = ones as f64 / trials as f64;
        assert!((freq - 0.5).abs() < 0.01, "frequency of 1 was {freq}");
    }

    #[test]
    fn window_patterns_uniform_chi_square() {
        // All 32 patterns of a depth-2 window, 10^6 draws: each frequency
        // within 3 sigma of 1/32 and the aggregate chi-square below the
        // 10^-3 critical value for 31 degrees of freedom.
        let mut r = rng(42);
        let trials = 1_000_000u64;
        let mut counts = [0u64; 32];
        for _ in 0..trials {
            let p = sample_point(-2, 2, &mut r).unwrap();
            counts[p.pattern(0, 2).unwrap()] += 1;
        }
        let expected = trials as f64 / 32.0;
        let sigma = (trials as f64 * (1.0 / 32.0) * (31.0 / 32.0)).sqrt();
        let mut chi2 = 0.0;
        for (i, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - expected).abs() < 3.0 * sigma,
                "pattern {i} count {c} vs expected {expected}"
            );
            chi2 += (c as f64 - expected).powi(2) / expected;
        }
        // chi-square critical value, df=31, significance 1e-3
        assert!(chi2 < 61.1, "chi2 = {chi2}");
    }

    #[test]
    fn shift_reindexes() {
        let p = SymbolPoint::from_bits(-1, &[1, 0, 1]).unwrap();
        let s = shift(&p);
        assert_eq!(s.lo(), -2);
        assert_eq!(s.hi(), 0);
        for j in -2..=0 {
            assert_eq!(s.get(j).unwrap(), p.get(j + 1).unwrap());
        }
    }

    #[test]
    fn shift_composes() {
        let p = sample_point(-8, 8, &mut rng(2)).unwrap();
        let mut s = p.clone();
        for _ in 0..5 {
            s = shift(&s);
        }
        for j in -13..=3 {
            assert_eq!(s.get(j).unwrap(), p.get(j + 5).unwrap());
        }
        assert_eq!(p.shifted_by(5), s);
        // Shifting back restores every coordinate.
        assert_eq!(s.shifted_by(-5), p);
    }

    #[test]
    fn shift_distance_relation_matches_direct_recomputation() {
        // Distance of shifted pairs re-derived by scanning shifted reads.
        let mut r = rng(3);
        for _ in 0..200 {
            let p = sample_point(-12, 12, &mut r).unwrap();
            let q = sample_point(-12, 12, &mut r).unwrap();
            let ds = distance(&shift(&p), &shift(&q)).unwrap();
            // direct: smallest |j| <= 11 with p(j+1) != q(j+1)
            let mut expect = SymbolicDistance::BelowResolution {
                resolution: f64::powi(2.0, -11),
            };
            'outer: for k in 0..=11i64 {
                for j in [k, -k] {
                    if p.get(j + 1).unwrap() != q.get(j + 1).unwrap() {
                        expect = SymbolicDistance::Resolved(f64::powi(2.0, -(k as i32)));
                        break 'outer;
                    }
                }
            }
            assert_eq!(ds, expect);
        }
    }

    #[test]
    fn distance_first_difference_at_two() {
        // Agree at -1, 0, 1, 2; first difference at -2.
        let p = SymbolPoint::from_bits(-2, &[0, 1, 1, 0, 1]).unwrap();
        let q = SymbolPoint::from_bits(-2, &[1, 1, 1, 0, 1]).unwrap();
        assert_eq!(distance(&p, &q).unwrap(), SymbolicDistance::Resolved(0.25));
    }

    #[test]
    fn distance_identity_below_resolution() {
        let p = sample_point(-5, 5, &mut rng(4)).unwrap();
        let d = distance(&p, &p).unwrap();
        assert!(d.is_below_resolution());
        assert_eq!(d.value(), 0.0);
        assert_eq!(
            d,
            SymbolicDistance::BelowResolution {
                resolution: f64::powi(2.0, -5)
            }
        );
    }

    #[test]
    fn distance_difference_at_origin() {
        let p = SymbolPoint::from_bits(0, &[0]).unwrap();
        let q = SymbolPoint::from_bits(0, &[1]).unwrap();
        assert_eq!(distance(&p, &q).unwrap(), SymbolicDistance::Resolved(1.0));
    }

    #[test]
    fn distance_incomparable() {
        let p = SymbolPoint::from_bits(1, &[1, 0]).unwrap();
        let q = SymbolPoint::from_bits(-1, &[1, 0, 1]).unwrap();
        assert!(matches!(distance(&p, &q), Err(Error::IncomparablePoints)));
    }

    #[test]
    fn distance_is_symmetric_and_ultrametric() {
        let mut r = rng(5);
        for _ in 0..500 {
            let p = sample_point(-6, 6, &mut r).unwrap();
            let q = sample_point(-6, 6, &mut r).unwrap();
            let s = sample_point(-6, 6, &mut r).unwrap();
            let dpq = distance(&p, &q).unwrap();
            assert_eq!(dpq, distance(&q, &p).unwrap());
            let dpr = distance(&p, &s).unwrap().value();
            let dqr = distance(&q, &s).unwrap().value();
            assert!(dpr <= dpq.value().max(dqr) || dpq.is_below_resolution());
        }
    }

    #[test]
    fn agreement_radius_examples() {
        assert_eq!(agreement_radius(0.3).unwrap(), 1);
        assert_eq!(agreement_radius(1.0).unwrap(), 0);
        assert_eq!(agreement_radius(f64::powi(2.0, -5)).unwrap(), 5);
        assert_eq!(agreement_radius(0.5).unwrap(), 1);
        assert_eq!(agreement_radius(0.5000001).unwrap(), 0);
        assert!(agreement_radius(0.0).is_err());
        assert!(agreement_radius(1.5).is_err());
        assert!(agreement_radius(-0.25).is_err());
    }

    #[test]
    fn agreement_radius_dyadic_boundaries() {
        for n in 0..60i32 {
            let d = f64::powi(2.0, -n);
            assert_eq!(agreement_radius(d).unwrap(), n as u32, "d = 2^-{n}");
            // Just above the boundary belongs to the next-coarser shell.
            if n > 0 {
                let above = d * (1.0 + 1e-12);
                assert_eq!(agreement_radius(above).unwrap(), (n - 1) as u32);
            }
        }
    }

    #[test]
    fn ball_sample_radius_one_copies_only_origin() {
        let mut r = rng(6);
        let center = sample_point(-4, 4, &mut r).unwrap();
        let mut mismatch_seen = [false; 9];
        for _ in 0..2000 {
            let s = ball_sample(&center, 1.0, -4, 4, &mut r).unwrap();
            assert_eq!(s.get(0).unwrap(), center.get(0).unwrap());
            for j in -4..=4i64 {
                if j != 0 && s.get(j).unwrap() != center.get(j).unwrap() {
                    mismatch_seen[(j + 4) as usize] = true;
                }
            }
        }
        for j in -4..=4i64 {
            if j != 0 {
                assert!(mismatch_seen[(j + 4) as usize], "index {j} never resampled");
            }
        }
    }

    #[test]
    fn ball_sample_small_d_copies_full_window() {
        let mut r = rng(8);
        let hi = 5i64;
        let center = sample_point(-hi, hi, &mut r).unwrap();
        let d = f64::powi(2.0, -(hi as i32));
        let s = ball_sample(&center, d, -hi, hi, &mut r).unwrap();
        assert_eq!(s, center);
    }

    #[test]
    fn ball_sample_frequencies() {
        // d = 0.3 gives n = 1: indices -1, 0, 1 always match the center,
        // index 2 is a fair bit.
        let mut r = rng(9);
        let center = sample_point(-3, 3, &mut r).unwrap();
        let trials = 100_000;
        let mut ones_at_2 = 0u64;
        for _ in 0..trials {
            let s = ball_sample(&center, 0.3, -3, 3, &mut r).unwrap();
            for j in -1..=1 {
                assert_eq!(s.get(j).unwrap(), center.get(j).unwrap());
            }
            ones_at_2 += u64::from(s.get(2).unwrap());
        }
        let freq = ones_at_2 as f64 / trials as f64;
        assert!((freq - 0.5).abs() < 0.01, "index-2 frequency {freq}");
    }

    #[test]
    fn ball_sample_stays_in_ball() {
        let mut r = rng(10);
        for _ in 0..500 {
            let center = sample_point(-7, 7, &mut r).unwrap();
            for d in [1.0, 0.6, 0.3, 0.1, 0.02] {
                let s = ball_sample(&center, d, -7, 7, &mut r).unwrap();
                assert!(distance(&s, &center).unwrap().value() < d);
            }
        }
    }

    #[test]
    fn ball_sample_insufficient_center() {
        let mut r = rng(11);
        let center = sample_point(-1, 1, &mut r).unwrap();
        // d = 0.1 needs [-3, 3] on the center.
        assert!(matches!(
            ball_sample(&center, 0.1, -3, 3, &mut r),
            Err(Error::InsufficientResolution { .. })
        ));
    }

    #[test]
    fn from_bits_rejects_non_binary() {
        assert!(SymbolPoint::from_bits(0, &[0, 2]).is_err());
        assert!(SymbolPoint::from_bits(0, &[]).is_err());
    }
}
