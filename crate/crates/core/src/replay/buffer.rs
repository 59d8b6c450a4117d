use std::collections::VecDeque;

use rand::Rng;

use super::EpisodeRecord;
use crate::error::{Error, Result};

/// FIFO episode store with uniform sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    episodes: VecDeque<EpisodeRecord>,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            episodes: VecDeque::with_capacity(capacity.min(1024)),
            inserted: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    /// Total insertions ever made, including evicted episodes.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn push(&mut self, episode: EpisodeRecord) {
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(episode);
        self.inserted += 1;
    }

    pub fn iter(&self) -> impl Iterator<Item = &EpisodeRecord> {
        self.episodes.iter()
    }

    pub fn get(&self, i: usize) -> Option<&EpisodeRecord> {
        self.episodes.get(i)
    }

    /// `n` uniform draws with replacement.
    pub fn sample<'a, R: Rng + ?Sized>(
        &'a self,
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<&'a EpisodeRecord>> {
        if n > 0 && self.episodes.is_empty() {
            return Err(Error::NotReady("replay buffer is empty".into()));
        }
        Ok((0..n)
            .map(|_| &self.episodes[rng.random_range(0..self.episodes.len())])
            .collect())
    }

    pub(crate) fn restore(capacity: usize, episodes: Vec<EpisodeRecord>, inserted: u64) -> Self {
        Self {
            capacity,
            episodes: episodes.into(),
            inserted,
        }
    }
}
