use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_pcg::Pcg64;

/// Deterministic mini-batch indices: a fresh seeded shuffle of `0..n` per epoch.
#[derive(Debug, Clone)]
pub(crate) struct EpochSampler {
    n: usize,
    queue: Vec<usize>,
    rng: Pcg64,
}

impl EpochSampler {
    pub(crate) fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            queue: Vec::new(),
            rng: Pcg64::seed_from_u64(seed),
        }
    }

    pub(crate) fn next_index(&mut self) -> usize {
        if self.queue.is_empty() {
            self.queue = (0..self.n).rev().collect();
            self.queue.shuffle(&mut self.rng);
        }
        self.queue.pop().expect("n ≥ 1")
    }
}
