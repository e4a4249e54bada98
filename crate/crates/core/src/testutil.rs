//! Random inputs shared by unit tests.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random row-major density matrix `G G† / tr(G G†)`.
pub fn random_density(d: usize, seed: u64) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g: Vec<C64> = (0..d * d)
        .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    let mut rho = vec![C64::new(0.0, 0.0); d * d];
    for r in 0..d {
        for c in 0..d {
            rho[r * d + c] = (0..d).map(|k| g[r * d + k] * g[c * d + k].conj()).sum();
        }
    }
    let tr: f64 = (0..d).map(|i| rho[i * d + i].re).sum();
    rho.iter_mut().for_each(|z| *z /= tr);
    rho
}
