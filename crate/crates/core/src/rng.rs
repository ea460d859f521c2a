//! Seeded sampling of smooth random fields.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Low-frequency trigonometric field evaluated at the given coordinates.
///
/// Few modes with random phases keep ties between neighbors rare.
#[derive(Clone, Debug)]
pub struct TrigField {
    modes: Vec<(Vec<f64>, f64, f64)>,
    offset: f64,
}

impl TrigField {
    pub fn sample<R: Rng>(rng: &mut R, dim: usize, modes: usize, max_freq: f64) -> Self {
        let modes = (0..modes)
            .map(|_| {
                let k: Vec<f64> = (0..dim).map(|_| rng.gen_range(-max_freq..max_freq)).collect();
                let phase = rng.gen_range(0.0..std::f64::consts::TAU);
                let amp = rng.gen_range(0.2..1.0);
                (k, phase, amp)
            })
            .collect();
        TrigField { modes, offset: rng.gen_range(-0.5..0.5) }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.offset
            + self
                .modes
                .iter()
                .map(|(k, ph, a)| {
                    let arg: f64 = k.iter().zip(x).map(|(ki, xi)| ki * xi).sum::<f64>() + ph;
                    a * arg.sin()
                })
                .sum::<f64>()
    }
}
