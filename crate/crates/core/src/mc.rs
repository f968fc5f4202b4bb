//! Monte Carlo plumbing: reproducible per-block random streams and
//! running moment estimates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Replicates handled by one random stream.
pub const BLOCK: usize = 4096;

/// Independent stream `stream` derived from `seed`.
pub fn block_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Splits `replicates` into blocks, runs `f(rng, len)` on each block in
/// parallel and returns the block results in block order. The output only
/// depends on `seed`, not on thread scheduling.
pub fn run_blocks<T, F>(replicates: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, usize) -> T + Sync,
{
    let blocks = replicates.div_ceil(BLOCK);
    (0..blocks)
        .into_par_iter()
        .map(|b| {
            let len = BLOCK.min(replicates - b * BLOCK);
            let mut rng = block_rng(seed, b as u64);
            f(&mut rng, len)
        })
        .collect()
}

/// Running sums for a sample mean and its standard error.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(mut self, other: &Moments) -> Moments {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0)
    }

    pub fn std_error(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }
}
