//! Seeded weight initializers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// Standard deviation of a unit normal truncated to `[-2, 2]`.
const TRUNCATED_STD: f64 = 0.879_625_661_034_239_8;

fn check_fan(fan_in: usize) -> Result<()> {
    if fan_in == 0 {
        return Err(Error::InvalidInput("fan_in must be at least 1".into()));
    }
    Ok(())
}

/// Truncated normal (±2σ before rescaling) with variance `1/fan_in`.
pub fn init_variance_scaling(len: usize, fan_in: usize, seed: u64) -> Result<Vec<f64>> {
    check_fan(fan_in)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = (1.0 / fan_in as f64).sqrt() / TRUNCATED_STD;
    Ok((0..len)
        .map(|_| loop {
            let z: f64 = rng.sample(StandardNormal);
            if z.abs() <= 2.0 {
                break z * scale;
            }
        })
        .collect())
}

/// Normal with variance `2/fan_in`.
pub fn init_he_normal(len: usize, fan_in: usize, seed: u64) -> Result<Vec<f64>> {
    check_fan(fan_in)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = (2.0 / fan_in as f64).sqrt();
    Ok((0..len).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect())
}
