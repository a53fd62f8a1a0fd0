//! Per-level perturbation of the seed matrix.
//!
//! Each cascade level `i` gets its own seed `theta_S + N_i` with
//!
//! ```text
//! N_i = [[ -2 n_f a / (a + d),  n_f                ],
//!        [  n_f,               -2 n_f d / (a + d)  ]]
//! ```
//!
//! which sums to zero, and `n_f ~ U[0, eps * min((a + d) / 2, b, c)]` keeps
//! every entry inside `[0, 1]`. Padding levels use the marginals of the
//! perturbed seed.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SeedMatrix;
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_NOISE_STRENGTH: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Strength `eps` in `[0, 1]`.
    pub strength: f64,
    /// Drawn `n_f` for each cascade level.
    pub level_noise: Vec<f64>,
    /// Seed the per-level draws came from; level `i` uses stream `i`.
    pub seed: u64,
}

impl NoiseConfig {
    pub fn none() -> Self {
        NoiseConfig { strength: 0.0, level_noise: Vec::new(), seed: 0 }
    }

    /// Draws `n_f` for `levels` cascade levels.
    pub fn draw(seed_matrix: &SeedMatrix, strength: f64, levels: u32, seed: u64) -> Result<Self> {
        check_strength(strength)?;
        let bound = noise_bound(seed_matrix, strength);
        let level_noise = (0..levels as u64)
            .map(|i| draw_level(bound, &mut rng::stream(seed, rng::domain::NOISE, i)))
            .collect();
        Ok(NoiseConfig { strength, level_noise, seed })
    }

    /// Re-draws for a different level count. Levels both configs share keep
    /// their values because each level has its own stream.
    pub fn resized(&self, seed_matrix: &SeedMatrix, levels: u32) -> Result<Self> {
        Self::draw(seed_matrix, self.strength, levels, self.seed)
    }

    /// Perturbed seed for cascade level `level`; levels without a draw are
    /// left untouched.
    pub fn level_seed(&self, seed_matrix: &SeedMatrix, level: usize) -> SeedMatrix {
        match self.level_noise.get(level) {
            Some(&nf) => apply_noise(seed_matrix, nf),
            None => *seed_matrix,
        }
    }
}

fn check_strength(strength: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&strength) {
        return Err(Error::Config(format!("noise strength must lie in [0, 1], got {strength}")));
    }
    Ok(())
}

/// Upper end of the `n_f` distribution; zero when `a + d = 0`.
pub fn noise_bound(s: &SeedMatrix, strength: f64) -> f64 {
    let ad = s.a + s.d;
    if ad <= 0.0 {
        return 0.0;
    }
    strength * (ad / 2.0).min(s.b).min(s.c)
}

fn draw_level<R: Rng>(bound: f64, rng: &mut R) -> f64 {
    if bound > 0.0 {
        rng.random::<f64>() * bound
    } else {
        0.0
    }
}

/// The zero-sum noise matrix for a given `n_f`, as `[a, b, c, d]` deltas.
pub fn noise_matrix(s: &SeedMatrix, nf: f64) -> [f64; 4] {
    let ad = s.a + s.d;
    if ad <= 0.0 || nf == 0.0 {
        return [0.0; 4];
    }
    [-2.0 * nf * s.a / ad, nf, nf, -2.0 * nf * s.d / ad]
}

pub fn apply_noise(s: &SeedMatrix, nf: f64) -> SeedMatrix {
    let delta = noise_matrix(s, nf);
    SeedMatrix {
        a: (s.a + delta[0]).max(0.0),
        b: s.b + delta[1],
        c: s.c + delta[2],
        d: (s.d + delta[3]).max(0.0),
    }
}

/// One perturbed seed with a fresh `n_f` draw.
pub fn sample_noise<R: Rng>(s: &SeedMatrix, strength: f64, rng: &mut R) -> Result<SeedMatrix> {
    check_strength(strength)?;
    Ok(apply_noise(s, draw_level(noise_bound(s, strength), rng)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn skewed() -> SeedMatrix {
        SeedMatrix::new(0.57, 0.19, 0.19, 0.05).unwrap()
    }

    #[test]
    fn zero_strength_is_identity() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(sample_noise(&skewed(), 0.0, &mut r).unwrap(), skewed());
        }
        let cfg = NoiseConfig::draw(&skewed(), 0.0, 12, 9).unwrap();
        assert!(cfg.level_noise.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn noise_sums_to_zero_and_stays_valid() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let s = sample_noise(&skewed(), 1.0, &mut r).unwrap();
            s.validate().unwrap();
        }
        let n = noise_matrix(&skewed(), 0.1);
        assert!(n.iter().sum::<f64>().abs() < 1e-15);
    }

    #[test]
    fn degenerate_diagonal_skips_noise() {
        let s = SeedMatrix::new(0.0, 0.5, 0.5, 0.0).unwrap();
        assert_eq!(noise_bound(&s, 1.0), 0.0);
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        assert_eq!(sample_noise(&s, 1.0, &mut r).unwrap(), s);
    }

    #[test]
    fn resizing_keeps_shared_levels() {
        let a = NoiseConfig::draw(&skewed(), 0.5, 8, 4).unwrap();
        let b = a.resized(&skewed(), 12).unwrap();
        assert_eq!(&b.level_noise[..8], &a.level_noise[..]);
        let c = a.resized(&skewed(), 3).unwrap();
        assert_eq!(&c.level_noise[..], &a.level_noise[..3]);
    }

    #[test]
    fn strength_out_of_range_is_a_config_error() {
        assert!(NoiseConfig::draw(&skewed(), 1.5, 3, 0).is_err());
    }
}
