//! Seed handling. Germ draws use a stateless counter-based generator so any
//! sample can be regenerated independently of evaluation order; bulk
//! simulation streams use ChaCha8 seeded from named sub-streams of a root seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash of a tuple of counters.
pub fn key(parts: &[u64]) -> u64 {
    parts.iter().fold(0x6A09_E667_F3BC_C909, |h, &p| splitmix(h ^ splitmix(p)))
}

/// Uniform draw in the open interval (0, 1).
pub fn unit_open(k: u64) -> f64 {
    ((splitmix(k) >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal via Box-Muller on two derived uniforms.
pub fn standard_normal(k: u64) -> f64 {
    let a = unit_open(k);
    let b = unit_open(k ^ 0xD1B5_4A32_D192_ED03);
    (-2.0 * a.ln()).sqrt() * (std::f64::consts::TAU * b).cos()
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xCBF2_9CE4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01B3))
}

/// Seed of a named sub-stream, e.g. `("disturbance", sample_index)`.
pub fn substream(root: u64, name: &str, index: u64) -> u64 {
    key(&[root, fnv1a(name), index])
}

pub fn stream(root: u64, name: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(substream(root, name, index))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_moments() {
        let n = 200_000u64;
        let (mut s, mut s2) = (0.0, 0.0);
        for i in 0..n {
            let u = unit_open(key(&[7, i]));
            assert!(u > 0.0 && u < 1.0);
            s += u;
            s2 += u * u;
        }
        let m = s / n as f64;
        assert!((m - 0.5).abs() < 0.005);
        assert!((s2 / n as f64 - m * m - 1.0 / 12.0).abs() < 0.002);
    }

    #[test]
    fn substreams_differ() {
        assert_ne!(substream(1, "data", 0), substream(1, "init", 0));
        assert_ne!(substream(1, "data", 0), substream(1, "data", 1));
        assert_eq!(substream(1, "data", 3), substream(1, "data", 3));
    }
}
