#![allow(dead_code)]

use jumpflow::{JumpKernel, StateSpace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random general space with `n` points on a line and weights in `[0.5, 2]`.
pub fn random_space(n: usize, rng: &mut ChaCha8Rng, normalize: bool) -> StateSpace {
    let positions: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 + rng.random_range(0.0..0.5)]).collect();
    let mut m: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    if normalize {
        let total: f64 = m.iter().sum();
        m.iter_mut().for_each(|x| *x /= total);
    }
    StateSpace::general(positions, m).unwrap()
}

/// Reversible kernel `J_ij = γ_ij / m_i` with each edge present with
/// probability `p`.
pub fn random_kernel(space: &StateSpace, p: f64, rng: &mut ChaCha8Rng) -> JumpKernel {
    let n = space.len();
    let m = space.weights();
    let mut j = vec![vec![0.0; n]; n];
    for a in 0..n {
        for b in (a + 1)..n {
            if rng.random_bool(p) {
                let g = rng.random_range(0.1..2.0);
                j[a][b] = g / m[a];
                j[b][a] = g / m[b];
            }
        }
    }
    JumpKernel::dense(space, j).unwrap()
}
