//! Analytic gradients of the mean-squared error, and a central-difference
//! checker for them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::net::forward_trace;
use super::weights::{Architecture, ModelWeights, Params, BLOB_NAMES};
use super::{EstimatorError, WINDOW_FRAMES};

/// Normalized windows (row-major, `6 x channels` each) and their targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub windows: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

/// Per-sample inverted-dropout multipliers on the LSTM output.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks(pub Vec<Vec<f64>>);

impl DropoutMasks {
    /// Each unit is kept with probability `1 - rate` and scaled by
    /// `1 / (1 - rate)`.
    pub fn sample(rate: f64, samples: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let keep = 1.0 - rate;
        DropoutMasks(
            (0..samples)
                .map(|_| {
                    (0..hidden)
                        .map(|_| {
                            if rng.random::<f64>() < keep {
                                1.0 / keep
                            } else {
                                0.0
                            }
                        })
                        .collect()
                })
                .collect(),
        )
    }

    pub fn seeded(rate: f64, samples: usize, hidden: usize, seed: u64) -> Self {
        Self::sample(rate, samples, hidden, &mut ChaCha8Rng::seed_from_u64(seed))
    }
}

fn check_batch(
    arch: &Architecture,
    batch: &Batch,
    masks: Option<&DropoutMasks>,
) -> Result<(), EstimatorError> {
    if batch.windows.is_empty() {
        return Err(EstimatorError::EmptyBatch);
    }
    if batch.windows.len() != batch.targets.len() {
        return Err(EstimatorError::ShapeMismatch(format!(
            "{} windows but {} targets",
            batch.windows.len(),
            batch.targets.len()
        )));
    }
    let len = WINDOW_FRAMES * arch.input_channels;
    if let Some(w) = batch.windows.iter().find(|w| w.len() != len) {
        return Err(EstimatorError::ShapeMismatch(format!(
            "window of {} values, expected {len}",
            w.len()
        )));
    }
    if let Some(DropoutMasks(m)) = masks {
        if m.len() != batch.windows.len() || m.iter().any(|r| r.len() != arch.lstm_hidden) {
            return Err(EstimatorError::ShapeMismatch("dropout masks".into()));
        }
    }
    Ok(())
}

/// Mean-squared error of the batch.
pub(crate) fn batch_loss(
    arch: &Architecture,
    p: &Params,
    batch: &Batch,
    masks: Option<&DropoutMasks>,
) -> f64 {
    let n = batch.windows.len() as f64;
    batch
        .windows
        .iter()
        .zip(&batch.targets)
        .enumerate()
        .map(|(s, (w, t))| {
            let mask = masks.map(|m| m.0[s].as_slice());
            let e = forward_trace(arch, p, w, mask).output - t;
            e * e
        })
        .sum::<f64>()
        / n
}

/// Accumulates `d loss / d params` for one sample into `g`, given
/// `d loss / d output`. Returns the prediction.
pub(crate) fn backprop_sample(
    arch: &Architecture,
    p: &Params,
    window: &[f64],
    mask: Option<&[f64]>,
    output_grad: impl FnOnce(f64) -> f64,
    g: &mut Params,
) -> f64 {
    let (c, k, fin, h, d) = (
        arch.input_channels,
        arch.kernel,
        arch.conv_filters,
        arch.lstm_hidden,
        arch.dense1,
    );
    let tr = forward_trace(arch, p, window, mask);
    let dy = output_grad(tr.output);

    // Output and hidden dense layers.
    g.dense2_b[0] += dy;
    let mut dz1 = vec![0.0; d];
    for u in 0..d {
        g.dense2_w[u] += dy * tr.dense1_out[u];
        if tr.dense1_pre[u] > 0.0 {
            dz1[u] = dy * p.dense2_w[u];
        }
    }
    let mut dh = vec![0.0; h];
    for u in 0..d {
        if dz1[u] == 0.0 {
            continue;
        }
        g.dense1_b[u] += dz1[u];
        let row = u * h;
        for j in 0..h {
            g.dense1_w[row + j] += dz1[u] * tr.dropped[j];
            dh[j] += dz1[u] * p.dense1_w[row + j];
        }
    }
    if let Some(mask) = mask {
        dh.iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
    }

    // LSTM, backwards through time from the zero initial state.
    let steps = arch.conv_steps();
    let mut dc = vec![0.0; h];
    let mut dconv = vec![0.0; steps * fin];
    let mut dz = vec![0.0; 4 * h];
    for t in (0..steps).rev() {
        let gates = &tr.gates[t];
        let prev = &tr.states[t];
        let cur = &tr.states[t + 1];
        for j in 0..h {
            let (i, f, gg, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
            let tc = cur.c[j].tanh();
            let dcj = dc[j] + dh[j] * o * (1.0 - tc * tc);
            dz[j] = dcj * gg * i * (1.0 - i);
            dz[h + j] = dcj * prev.c[j] * f * (1.0 - f);
            dz[2 * h + j] = dcj * i * (1.0 - gg * gg);
            dz[3 * h + j] = dh[j] * tc * o * (1.0 - o);
            dc[j] = dcj * f;
        }
        let x = &tr.conv_out[t * fin..(t + 1) * fin];
        let dx = &mut dconv[t * fin..(t + 1) * fin];
        let mut dh_prev = vec![0.0; h];
        for (row, &dzr) in dz.iter().enumerate() {
            g.lstm_bias[row] += dzr;
            if dzr == 0.0 {
                continue;
            }
            let wi = &p.lstm_input[row * fin..(row + 1) * fin];
            let gi = &mut g.lstm_input[row * fin..(row + 1) * fin];
            for q in 0..fin {
                gi[q] += dzr * x[q];
                dx[q] += dzr * wi[q];
            }
            let wr = &p.lstm_recurrent[row * h..(row + 1) * h];
            let gr = &mut g.lstm_recurrent[row * h..(row + 1) * h];
            for j in 0..h {
                gr[j] += dzr * prev.h[j];
                dh_prev[j] += dzr * wr[j];
            }
        }
        dh = dh_prev;
    }

    // Convolution (ReLU gate on the pre-activation).
    for t in 0..steps {
        for filt in 0..fin {
            let idx = t * fin + filt;
            if tr.conv_pre[idx] <= 0.0 {
                continue;
            }
            let dp = dconv[idx];
            g.conv_bias[filt] += dp;
            let gk = &mut g.conv_kernel[filt * c * k..(filt + 1) * c * k];
            for ch in 0..c {
                for tap in 0..k {
                    gk[ch * k + tap] += dp * window[(t + tap) * c + ch];
                }
            }
        }
    }
    tr.output
}

/// MSE over the batch and its gradient with respect to every parameter.
pub fn compute_gradients(
    weights: &ModelWeights,
    batch: &Batch,
    masks: Option<&DropoutMasks>,
) -> Result<(f64, Params), EstimatorError> {
    let arch = &weights.arch;
    check_batch(arch, batch, masks)?;
    let n = batch.windows.len() as f64;
    let mut g = Params::zeros(arch);
    let mut loss = 0.0;
    for (s, (w, &t)) in batch.windows.iter().zip(&batch.targets).enumerate() {
        let mask = masks.map(|m| m.0[s].as_slice());
        backprop_sample(
            arch,
            &weights.params,
            w,
            mask,
            |y| {
                loss += (y - t) * (y - t);
                2.0 * (y - t) / n
            },
            &mut g,
        );
    }
    Ok((loss / n, g))
}

#[derive(Debug, Clone)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Worst relative error per parameter blob.
    pub per_blob: Vec<(&'static str, f64)>,
    pub checked: usize,
}

/// Compares analytic gradients to central differences for every parameter.
/// Relative error is `|a - n| / max(|a|, |n|, floor)`.
pub fn finite_difference_check(
    weights: &ModelWeights,
    batch: &Batch,
    masks: Option<&DropoutMasks>,
    eps: f64,
    floor: f64,
) -> Result<GradCheck, EstimatorError> {
    let (_, analytic) = compute_gradients(weights, batch, masks)?;
    let arch = weights.arch;
    let mut params = weights.params.clone();
    let mut per_blob = Vec::new();
    let mut checked = 0;
    for (b, name) in BLOB_NAMES.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for i in 0..arch.blob_lens()[b] {
            let orig = params.blobs()[b][i];
            params.blobs_mut()[b][i] = orig + eps;
            let up = batch_loss(&arch, &params, batch, masks);
            params.blobs_mut()[b][i] = orig - eps;
            let down = batch_loss(&arch, &params, batch, masks);
            params.blobs_mut()[b][i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic.blobs()[b][i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            worst = worst.max(rel);
            checked += 1;
        }
        per_blob.push((*name, worst));
    }
    Ok(GradCheck {
        max_rel_error: per_blob.iter().map(|(_, e)| *e).fold(0.0, f64::max),
        per_blob,
        checked,
    })
}
