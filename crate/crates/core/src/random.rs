//! Random variate generation: seeded chain streams, gamma-family draws and
//! the truncated normal used for latent-variable augmentation.

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};

use crate::math::{norm_cdf, norm_inv_cdf};

/// Generator used by every sampler in the crate.
pub type ChainRng = rand_chacha::ChaCha8Rng;

/// Truncated-normal bounds (in standard deviations) beyond which the
/// inverse-CDF route hands over to exponential rejection.
pub const TAIL_SWITCH_SD: f64 = 6.0;

/// Independent generator for `stream` under a common `seed`.
pub fn chain_rng(seed: u64, stream: u64) -> ChainRng {
    let mut rng = ChainRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer; derives well-separated child seeds from a master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64) -> f64 {
    mean + sd * std_normal(rng)
}

/// Uniform on the open interval (0, 1).
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Ga(shape, rate) with mean shape / rate.
pub fn gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    debug_assert!(shape > 0.0 && rate > 0.0, "gamma({shape}, {rate})");
    let g = Gamma::new(shape, 1.0 / rate).expect("gamma parameters must be positive");
    // Shapes below one can underflow to exactly zero; keep the draw positive.
    g.sample(rng).max(f64::MIN_POSITIVE)
}

/// IG(shape, scale): the reciprocal of a Ga(shape, scale) draw.
pub fn inv_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, scale: f64) -> f64 {
    1.0 / gamma(rng, shape, scale)
}

/// Standard normal restricted to `[lo, hi]` (either bound may be infinite).
pub fn truncated_std_normal<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    debug_assert!(lo < hi);
    if lo >= TAIL_SWITCH_SD {
        return upper_tail(rng, lo, hi);
    }
    if hi <= -TAIL_SWITCH_SD {
        return -upper_tail(rng, -hi, -lo);
    }
    // Work on the side of zero that keeps the CDF values away from 1.
    if lo > 0.0 {
        let p_lo = norm_cdf(-hi);
        let p_hi = norm_cdf(-lo);
        let u = p_lo + (p_hi - p_lo) * open_unit(rng);
        (-norm_inv_cdf(u)).clamp(lo, hi)
    } else {
        let p_lo = norm_cdf(lo);
        let p_hi = norm_cdf(hi);
        let u = p_lo + (p_hi - p_lo) * open_unit(rng);
        norm_inv_cdf(u).clamp(lo, hi)
    }
}

/// Robert (1995) translated-exponential rejection sampler for `[lo, hi]`, `lo > 0`.
fn upper_tail<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let rate = 0.5 * (lo + libm::sqrt(lo * lo + 4.0));
    loop {
        let e: f64 = Exp1.sample(rng);
        let z = lo + e / rate;
        if z > hi {
            continue;
        }
        let d = z - rate;
        if open_unit(rng) <= libm::exp(-0.5 * d * d) {
            return z;
        }
    }
}

/// N(mean, sd^2) restricted to `[lo, hi]`.
pub fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let z = truncated_std_normal(rng, (lo - mean) / sd, (hi - mean) / sd);
    (mean + sd * z).clamp(lo, hi)
}
