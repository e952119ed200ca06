//! Counter-based random streams.
//!
//! Every (seed, replication, particle) triple owns an independent ChaCha8
//! stream, so a particle's draws never depend on scheduling or thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub replication: u32,
    pub particle: u32,
}

impl StreamKey {
    pub fn new(seed: u64, replication: usize, particle: usize) -> Self {
        Self {
            seed,
            replication: replication as u32,
            particle: particle as u32,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((self.replication as u64) << 32) | self.particle as u64);
        rng
    }
}

/// A particle's initial draws followed by its Brownian increments.
///
/// The draw order is fixed: first `initial_dim` standard normals used for the
/// initial condition, then `n_steps * dim` increment normals in time-major order.
pub struct ParticleNoise {
    pub initial: Vec<f64>,
    /// Brownian increments, `dw[step * dim + c]`, already scaled by `sqrt(dt)`.
    pub dw: Vec<f64>,
}

pub fn particle_noise(key: StreamKey, n_steps: usize, dim: usize, dt: f64) -> ParticleNoise {
    particle_noise_with_initial(key, 1, n_steps, dim, dt)
}

pub fn particle_noise_with_initial(key: StreamKey, initial_dim: usize, n_steps: usize, dim: usize, dt: f64) -> ParticleNoise {
    let mut rng = key.rng();
    let initial: Vec<f64> = (0..initial_dim).map(|_| rng.sample(StandardNormal)).collect();
    let sq = dt.sqrt();
    let dw = (0..n_steps * dim)
        .map(|_| sq * rng.sample::<f64, _>(StandardNormal))
        .collect();
    ParticleNoise { initial, dw }
}

/// `count` standard normals from one stream.
pub fn normals(key: StreamKey, count: usize) -> Vec<f64> {
    let mut rng = key.rng();
    (0..count).map(|_| rng.sample(StandardNormal)).collect()
}
