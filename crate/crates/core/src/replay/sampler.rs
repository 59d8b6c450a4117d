use rand::Rng;

use super::{Dataset, EpisodeRecord, ReplayBuffer};
use crate::error::{Error, Result};

/// Offline share of a batch of `batch_size`: `round(ρ·B)`, ties to even.
pub fn offline_count(rho: f64, batch_size: usize) -> usize {
    (rho * batch_size as f64).round_ties_even() as usize
}

/// Episodes drawn for one update, offline ones first.
#[derive(Debug, Clone)]
pub struct MixedSample<'a> {
    pub episodes: Vec<&'a EpisodeRecord>,
    pub offline: usize,
}

/// Draws a fixed offline/online composition per batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixingRatioSampler {
    rho: f64,
}

impl MixingRatioSampler {
    pub fn new(rho: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::Config(format!("mixing ratio {rho} outside [0, 1]")));
        }
        Ok(Self { rho })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// `(offline, online)` episode counts for a batch.
    pub fn composition(&self, batch_size: usize) -> (usize, usize) {
        let off = offline_count(self.rho, batch_size);
        (off, batch_size - off)
    }

    pub fn sample<'a, R: Rng + ?Sized>(
        &self,
        offline: Option<&'a Dataset>,
        online: &'a ReplayBuffer,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<MixedSample<'a>> {
        let (n_off, n_on) = self.composition(batch_size);
        let mut episodes = Vec::with_capacity(batch_size);
        if n_off > 0 {
            let data = offline
                .filter(|d| !d.is_empty())
                .ok_or_else(|| Error::Config("mixing ratio > 0 needs an offline dataset".into()))?;
            episodes.extend(
                (0..n_off).map(|_| &data.episodes[rng.random_range(0..data.episodes.len())]),
            );
        }
        episodes.extend(online.sample(n_on, rng)?);
        Ok(MixedSample {
            episodes,
            offline: n_off,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composition_examples() {
        assert_eq!(MixingRatioSampler::new(0.0).unwrap().composition(32), (0, 32));
        assert_eq!(MixingRatioSampler::new(0.5).unwrap().composition(32), (16, 16));
        assert_eq!(MixingRatioSampler::new(0.1).unwrap().composition(32), (3, 29));
        assert_eq!(MixingRatioSampler::new(0.3).unwrap().composition(32), (10, 22));
        // 0.25·10 = 2.5 rounds to the even neighbour
        assert_eq!(offline_count(0.25, 10), 2);
        assert_eq!(offline_count(0.5, 5), 2);
        assert_eq!(offline_count(0.5, 7), 4);
    }

    #[test]
    fn ratio_out_of_range_rejected() {
        assert!(MixingRatioSampler::new(1.5).is_err());
        assert!(MixingRatioSampler::new(-0.1).is_err());
    }
}
