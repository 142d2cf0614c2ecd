use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::diff::Array;

/// Fixed table of standard-normal noise vectors. Starting noise for
/// consistency targets and inference is drawn from this table instead of
/// the full Gaussian, which avoids low-probability draws.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    table: Array,
    seed: u64,
}

impl Codebook {
    pub fn new(size: usize, dim: usize, seed: u64) -> Self {
        assert!(size > 0, "codebook needs at least one entry");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..size * dim)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        Self {
            table: Array::matrix(size, dim, data),
            seed,
        }
    }

    pub fn size(&self) -> usize {
        self.table.rows()
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn entry(&self, i: usize) -> &[f64] {
        self.table.row(i)
    }

    pub fn table(&self) -> &Array {
        &self.table
    }

    /// Uniformly chosen table index.
    pub fn draw_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng.random_range(0..self.size())
    }
}

/// One noise vector: a uniform codebook entry when a codebook is given,
/// otherwise a fresh standard-normal draw.
pub fn draw_noise<R: Rng + ?Sized>(codebook: Option<&Codebook>, dim: usize, rng: &mut R) -> Array {
    match codebook {
        Some(cb) => {
            debug_assert_eq!(cb.dim(), dim);
            Array::vector(cb.entry(cb.draw_index(rng)).to_vec())
        }
        None => Array::vector((0..dim).map(|_| rng.sample(StandardNormal)).collect()),
    }
}

/// `rows x dim` matrix of noise, one [`draw_noise`] per row.
pub fn draw_noise_batch<R: Rng + ?Sized>(
    codebook: Option<&Codebook>,
    rows: usize,
    dim: usize,
    rng: &mut R,
) -> Array {
    let mut data = Vec::with_capacity(rows * dim);
    for _ in 0..rows {
        match codebook {
            Some(cb) => data.extend_from_slice(cb.entry(cb.draw_index(rng))),
            None => data.extend((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal))),
        }
    }
    Array::matrix(rows, dim, data)
}
