use super::weights::{Architecture, ModelWeights, Params};
use super::{EstimatorError, WINDOW_FRAMES};

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn check_window(window: &[f64], arch: &Architecture) -> Result<(), EstimatorError> {
    let expected = WINDOW_FRAMES * arch.input_channels;
    if window.len() != expected {
        return Err(EstimatorError::ShapeMismatch(format!(
            "window must be {WINDOW_FRAMES}x{} = {expected} values, got {}",
            arch.input_channels,
            window.len()
        )));
    }
    Ok(())
}

fn conv_pre_activation(window: &[f64], arch: &Architecture, p: &Params, out: &mut Vec<f64>) {
    let (c, k, f) = (arch.input_channels, arch.kernel, arch.conv_filters);
    out.clear();
    for t in 0..arch.conv_steps() {
        for filt in 0..f {
            let w = &p.conv_kernel[filt * c * k..(filt + 1) * c * k];
            let mut acc = p.conv_bias[filt];
            for ch in 0..c {
                let taps = &w[ch * k..(ch + 1) * k];
                for (tap, wv) in taps.iter().enumerate() {
                    acc += wv * window[(t + tap) * c + ch];
                }
            }
            out.push(acc);
        }
    }
}

/// Valid convolution over a row-major `6 x channels` window, followed by
/// ReLU. Returns a row-major `(6 - kernel + 1) x filters` matrix.
pub fn conv1d_forward(window: &[f64], weights: &ModelWeights) -> Result<Vec<f64>, EstimatorError> {
    check_window(window, &weights.arch)?;
    let mut out = Vec::new();
    conv_pre_activation(window, &weights.arch, &weights.params, &mut out);
    out.iter_mut().for_each(|v| *v = v.max(0.0));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Gate activations of one step, stacked `[i; f; g; o]`.
fn lstm_gates(state: &LstmState, input: &[f64], arch: &Architecture, p: &Params) -> Vec<f64> {
    let (h, fin) = (arch.lstm_hidden, arch.conv_filters);
    let mut gates = Vec::with_capacity(4 * h);
    for row in 0..4 * h {
        let wi = &p.lstm_input[row * fin..(row + 1) * fin];
        let wr = &p.lstm_recurrent[row * h..(row + 1) * h];
        let mut z = p.lstm_bias[row];
        z += wi.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
        z += wr.iter().zip(&state.h).map(|(a, b)| a * b).sum::<f64>();
        gates.push(if row / h == 2 { z.tanh() } else { sigmoid(z) });
    }
    gates
}

fn lstm_combine(state: &LstmState, gates: &[f64], hidden: usize) -> LstmState {
    let mut next = LstmState::zeros(hidden);
    for j in 0..hidden {
        let (i, f, g, o) = (
            gates[j],
            gates[hidden + j],
            gates[2 * hidden + j],
            gates[3 * hidden + j],
        );
        next.c[j] = f * state.c[j] + i * g;
        next.h[j] = o * next.c[j].tanh();
    }
    next
}

/// One LSTM cell update with gates ordered (i, f, g, o).
pub fn lstm_step(
    state: &LstmState,
    input: &[f64],
    weights: &ModelWeights,
) -> Result<LstmState, EstimatorError> {
    let arch = &weights.arch;
    if state.h.len() != arch.lstm_hidden || state.c.len() != arch.lstm_hidden {
        return Err(EstimatorError::ShapeMismatch(format!(
            "state must have {} units",
            arch.lstm_hidden
        )));
    }
    if input.len() != arch.conv_filters {
        return Err(EstimatorError::ShapeMismatch(format!(
            "lstm input must have {} values, got {}",
            arch.conv_filters,
            input.len()
        )));
    }
    let gates = lstm_gates(state, input, arch, &weights.params);
    Ok(lstm_combine(state, &gates, arch.lstm_hidden))
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub conv_pre: Vec<f64>,
    pub conv_out: Vec<f64>,
    /// Per LSTM step: gate activations `[i; f; g; o]`.
    pub gates: Vec<Vec<f64>>,
    /// States `0..=steps`; entry 0 is the zero initial state.
    pub states: Vec<LstmState>,
    /// LSTM output after dropout.
    pub dropped: Vec<f64>,
    pub dense1_pre: Vec<f64>,
    pub dense1_out: Vec<f64>,
    pub output: f64,
}

/// Full forward pass. `dropout` is an optional per-unit multiplier applied to
/// the final LSTM output (already scaled for inverted dropout).
pub(crate) fn forward_trace(
    arch: &Architecture,
    p: &Params,
    window: &[f64],
    dropout: Option<&[f64]>,
) -> ForwardTrace {
    let (fin, h) = (arch.conv_filters, arch.lstm_hidden);
    let mut conv_pre = Vec::new();
    conv_pre_activation(window, arch, p, &mut conv_pre);
    let conv_out: Vec<f64> = conv_pre.iter().map(|v| v.max(0.0)).collect();

    let mut states = vec![LstmState::zeros(h)];
    let mut gates = Vec::with_capacity(arch.conv_steps());
    for t in 0..arch.conv_steps() {
        let x = &conv_out[t * fin..(t + 1) * fin];
        let prev = states.last().unwrap();
        let g = lstm_gates(prev, x, arch, p);
        let next = lstm_combine(prev, &g, h);
        gates.push(g);
        states.push(next);
    }

    let last = &states.last().unwrap().h;
    let dropped: Vec<f64> = match dropout {
        Some(mask) => last.iter().zip(mask).map(|(a, m)| a * m).collect(),
        None => last.clone(),
    };

    let d = arch.dense1;
    let mut dense1_pre = Vec::with_capacity(d);
    for u in 0..d {
        let w = &p.dense1_w[u * h..(u + 1) * h];
        dense1_pre.push(p.dense1_b[u] + w.iter().zip(&dropped).map(|(a, b)| a * b).sum::<f64>());
    }
    let dense1_out: Vec<f64> = dense1_pre.iter().map(|v| v.max(0.0)).collect();
    let output = p.dense2_b[0]
        + p.dense2_w
            .iter()
            .zip(&dense1_out)
            .map(|(a, b)| a * b)
            .sum::<f64>();

    ForwardTrace {
        conv_pre,
        conv_out,
        gates,
        states,
        dropped,
        dense1_pre,
        dense1_out,
        output,
    }
}

/// Inference on one normalized window (dropout is the identity).
pub fn forward_window(weights: &ModelWeights, window: &[f64]) -> Result<f64, EstimatorError> {
    check_window(window, &weights.arch)?;
    Ok(forward_trace(&weights.arch, &weights.params, window, None).output)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::random_weights;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single_channel() -> Architecture {
        Architecture {
            input_channels: 1,
            conv_filters: 1,
            kernel: 5,
            lstm_hidden: 2,
            dense1: 2,
        }
    }

    #[test]
    fn delta_kernel_selects_centre_frames() {
        let mut w = ModelWeights::zeros(single_channel());
        w.params.conv_kernel = vec![0.0, 0.0, 1.0, 0.0, 0.0];
        let window = [0.5, 1.0, 2.0, 3.0, 4.0, 5.0];
        let out = conv1d_forward(&window, &w).unwrap();
        // Output step t sees frames t..t+4; the centre tap is frame t+2,
        // i.e. the third and fourth frames.
        assert_eq!(out, vec![2.0, 3.0]);
    }

    #[test]
    fn zero_kernel_outputs_bias() {
        let mut w = ModelWeights::zeros(Architecture::FULL);
        w.params.conv_bias = vec![0.25; 128];
        let window = vec![3.0; 6 * 42];
        let out = conv1d_forward(&window, &w).unwrap();
        assert_eq!(out.len(), 2 * 128);
        assert!(out.iter().all(|&v| v == 0.25));
    }

    #[test]
    fn wrong_window_length() {
        let w = ModelWeights::zeros(Architecture::FULL);
        assert!(conv1d_forward(&vec![0.0; 5 * 42], &w).is_err());
        assert!(forward_window(&w, &vec![0.0; 7 * 42]).is_err());
    }

    #[test]
    fn lstm_zero_weights() {
        let w = ModelWeights::zeros(Architecture::FULL);
        let s = lstm_step(&LstmState::zeros(64), &[0.3; 128], &w).unwrap();
        assert!(s.h.iter().chain(&s.c).all(|&v| v == 0.0));

        let ones = LstmState {
            h: vec![0.0; 64],
            c: vec![1.0; 64],
        };
        let s = lstm_step(&ones, &[0.0; 128], &w).unwrap();
        let h_expected = 0.5 * 0.5f64.tanh();
        assert!(s.c.iter().all(|&v| v == 0.5));
        assert!(s.h.iter().all(|&v| (v - h_expected).abs() < 1e-15));
    }

    #[test]
    fn lstm_rejects_bad_shapes() {
        let w = ModelWeights::zeros(Architecture::FULL);
        assert!(lstm_step(&LstmState::zeros(63), &[0.0; 128], &w).is_err());
        assert!(lstm_step(&LstmState::zeros(64), &[0.0; 127], &w).is_err());
    }

    #[test]
    fn dropout_mask_of_ones_is_identity() {
        let w = random_weights(Architecture::FULL, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let window: Vec<f64> = (0..252).map(|_| rng.random_range(-2.0..2.0)).collect();
        let plain = forward_trace(&w.arch, &w.params, &window, None).output;
        let ones = vec![1.0; 64];
        let masked = forward_trace(&w.arch, &w.params, &window, Some(&ones)).output;
        assert_eq!(plain, masked);
    }
}
