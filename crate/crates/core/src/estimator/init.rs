use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::weights::{Architecture, ModelWeights};

fn glorot(rng: &mut ChaCha8Rng, blob: &mut [f64], fan_in: usize, fan_out: usize) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in blob {
        *v = rng.random_range(-limit..limit);
    }
}

/// Glorot-uniform initialization with unit forget-gate bias and identity
/// feature normalization. Deterministic in `seed`.
pub fn random_weights(arch: Architecture, seed: u64) -> ModelWeights {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = ModelWeights::zeros(arch);
    let (c, f, k, h, d) = (
        arch.input_channels,
        arch.conv_filters,
        arch.kernel,
        arch.lstm_hidden,
        arch.dense1,
    );
    let p = &mut w.params;
    glorot(&mut rng, &mut p.conv_kernel, c * k, f * k);
    glorot(&mut rng, &mut p.lstm_input, f, 4 * h);
    glorot(&mut rng, &mut p.lstm_recurrent, h, 4 * h);
    glorot(&mut rng, &mut p.dense1_w, h, d);
    glorot(&mut rng, &mut p.dense2_w, d, 1);
    p.lstm_bias[h..2 * h].iter_mut().for_each(|b| *b = 1.0);
    w
}
