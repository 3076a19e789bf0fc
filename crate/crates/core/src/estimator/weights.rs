//! Model parameters and the `.agrfw` weight file.
//!
//! Layout (little-endian): magic "AGRF", version u8, input_channels u16,
//! conv_filters u16, kernel u8, lstm_hidden u16, dense1 u16, then the channel
//! means and scales (f32 each), then the parameter blobs in the order of
//! [`Params::blobs`]. All blobs are f32, row-major; LSTM gate rows are stacked
//! in the order input, forget, candidate, output.

use super::EstimatorError;

pub const WEIGHTS_MAGIC: [u8; 4] = *b"AGRF";
pub const WEIGHTS_VERSION: u8 = 1;

/// Layer sizes. The window length is fixed at [`super::WINDOW_FRAMES`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub input_channels: usize,
    pub conv_filters: usize,
    pub kernel: usize,
    pub lstm_hidden: usize,
    pub dense1: usize,
}

impl Architecture {
    /// 42 input channels, 128 filters of width 5, 64 LSTM units, 32 dense units.
    pub const FULL: Architecture = Architecture {
        input_channels: super::FEATURE_CHANNELS,
        conv_filters: 128,
        kernel: 5,
        lstm_hidden: 64,
        dense1: 32,
    };

    pub fn conv_steps(&self) -> usize {
        super::WINDOW_FRAMES + 1 - self.kernel
    }

    pub fn gates(&self) -> usize {
        4 * self.lstm_hidden
    }

    /// Expected length of each parameter blob, in [`Params::blobs`] order.
    pub fn blob_lens(&self) -> [usize; 9] {
        let (c, f, k, h, d) = (
            self.input_channels,
            self.conv_filters,
            self.kernel,
            self.lstm_hidden,
            self.dense1,
        );
        [f * c * k, f, 4 * h * f, 4 * h * h, 4 * h, d * h, d, d, 1]
    }

    pub fn param_count(&self) -> usize {
        self.blob_lens().iter().sum()
    }

    fn validate(&self) -> Result<(), EstimatorError> {
        let dims = [
            self.input_channels,
            self.conv_filters,
            self.kernel,
            self.lstm_hidden,
            self.dense1,
        ];
        if dims.contains(&0) || self.kernel > super::WINDOW_FRAMES {
            return Err(EstimatorError::BadHeader(format!(
                "invalid architecture {self:?}"
            )));
        }
        Ok(())
    }
}

/// The nine trainable blobs. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// `[filters][channels][kernel]`
    pub conv_kernel: Vec<f64>,
    pub conv_bias: Vec<f64>,
    /// `[4*hidden][filters]`
    pub lstm_input: Vec<f64>,
    /// `[4*hidden][hidden]`
    pub lstm_recurrent: Vec<f64>,
    pub lstm_bias: Vec<f64>,
    /// `[dense1][hidden]`
    pub dense1_w: Vec<f64>,
    pub dense1_b: Vec<f64>,
    /// `[1][dense1]`
    pub dense2_w: Vec<f64>,
    pub dense2_b: Vec<f64>,
}

pub const BLOB_NAMES: [&str; 9] = [
    "conv_kernel",
    "conv_bias",
    "lstm_input",
    "lstm_recurrent",
    "lstm_bias",
    "dense1_w",
    "dense1_b",
    "dense2_w",
    "dense2_b",
];

impl Params {
    pub fn zeros(arch: &Architecture) -> Self {
        let l = arch.blob_lens();
        Params {
            conv_kernel: vec![0.0; l[0]],
            conv_bias: vec![0.0; l[1]],
            lstm_input: vec![0.0; l[2]],
            lstm_recurrent: vec![0.0; l[3]],
            lstm_bias: vec![0.0; l[4]],
            dense1_w: vec![0.0; l[5]],
            dense1_b: vec![0.0; l[6]],
            dense2_w: vec![0.0; l[7]],
            dense2_b: vec![0.0; l[8]],
        }
    }

    pub fn blobs(&self) -> [&[f64]; 9] {
        [
            &self.conv_kernel,
            &self.conv_bias,
            &self.lstm_input,
            &self.lstm_recurrent,
            &self.lstm_bias,
            &self.dense1_w,
            &self.dense1_b,
            &self.dense2_w,
            &self.dense2_b,
        ]
    }

    pub fn blobs_mut(&mut self) -> [&mut Vec<f64>; 9] {
        [
            &mut self.conv_kernel,
            &mut self.conv_bias,
            &mut self.lstm_input,
            &mut self.lstm_recurrent,
            &mut self.lstm_bias,
            &mut self.dense1_w,
            &mut self.dense1_b,
            &mut self.dense2_w,
            &mut self.dense2_b,
        ]
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &Params, scale: f64) {
        for (dst, src) in self.blobs_mut().into_iter().zip(other.blobs()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for blob in self.blobs_mut() {
            blob.iter_mut().for_each(|v| *v *= k);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.blobs()
            .iter()
            .flat_map(|b| b.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.blobs().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    fn check_shapes(&self, arch: &Architecture) -> Result<(), EstimatorError> {
        for ((blob, expected), name) in self.blobs().iter().zip(arch.blob_lens()).zip(BLOB_NAMES) {
            if blob.len() != expected {
                return Err(EstimatorError::ShapeMismatch(format!(
                    "{name}: expected {expected}, got {}",
                    blob.len()
                )));
            }
        }
        Ok(())
    }
}

/// Per-channel z-score statistics stored with the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureNorm {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl FeatureNorm {
    pub fn identity(channels: usize) -> Self {
        FeatureNorm {
            mean: vec![0.0; channels],
            scale: vec![1.0; channels],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub arch: Architecture,
    pub norm: FeatureNorm,
    pub params: Params,
}

impl ModelWeights {
    pub fn zeros(arch: Architecture) -> Self {
        ModelWeights {
            norm: FeatureNorm::identity(arch.input_channels),
            params: Params::zeros(&arch),
            arch,
        }
    }

    pub fn validate(&self) -> Result<(), EstimatorError> {
        self.arch.validate()?;
        self.params.check_shapes(&self.arch)?;
        let c = self.arch.input_channels;
        if self.norm.mean.len() != c || self.norm.scale.len() != c {
            return Err(EstimatorError::ShapeMismatch(format!(
                "normalization stats must have {c} channels"
            )));
        }
        if !self.params.all_finite() || self.norm.mean.iter().any(|v| !v.is_finite()) {
            return Err(EstimatorError::NonFiniteWeight);
        }
        if self.norm.scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(EstimatorError::BadHeader(
                "normalization scales must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Rounds every value to single precision, the precision of the file.
    pub fn round_to_f32(&mut self) {
        let round = |v: &mut f64| *v = *v as f32 as f64;
        self.norm.mean.iter_mut().for_each(round);
        self.norm.scale.iter_mut().for_each(round);
        for blob in self.params.blobs_mut() {
            blob.iter_mut().for_each(round);
        }
    }

    /// Serializes to the `.agrfw` format. Values are stored as f32, so
    /// `load_weights(save_weights(w)) == w` whenever `w` is f32-representable
    /// (always true for loaded or [`round_to_f32`](Self::round_to_f32)ed weights).
    pub fn to_bytes(&self) -> Result<Vec<u8>, EstimatorError> {
        self.validate()?;
        let a = &self.arch;
        let narrow16 = |v: usize| {
            u16::try_from(v).map_err(|_| EstimatorError::BadHeader(format!("{v} exceeds u16")))
        };
        let mut out = Vec::with_capacity(16 + 4 * (2 * a.input_channels + a.param_count()));
        out.extend_from_slice(&WEIGHTS_MAGIC);
        out.push(WEIGHTS_VERSION);
        out.extend_from_slice(&narrow16(a.input_channels)?.to_le_bytes());
        out.extend_from_slice(&narrow16(a.conv_filters)?.to_le_bytes());
        out.push(u8::try_from(a.kernel).map_err(|_| EstimatorError::BadHeader("kernel".into()))?);
        out.extend_from_slice(&narrow16(a.lstm_hidden)?.to_le_bytes());
        out.extend_from_slice(&narrow16(a.dense1)?.to_le_bytes());
        let blobs = self.params.blobs();
        for v in self
            .norm
            .mean
            .iter()
            .chain(&self.norm.scale)
            .chain(blobs.iter().flat_map(|b| b.iter()))
        {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        Ok(out)
    }
}

const HEADER_BYTES: usize = 4 + 1 + 2 + 2 + 1 + 2 + 2;

/// Parses and validates a `.agrfw` weight file.
pub fn load_weights(source: &[u8]) -> Result<ModelWeights, EstimatorError> {
    if source.len() < HEADER_BYTES {
        return Err(EstimatorError::BadHeader("file shorter than header".into()));
    }
    if source[0..4] != WEIGHTS_MAGIC {
        return Err(EstimatorError::BadHeader("bad magic".into()));
    }
    if source[4] != WEIGHTS_VERSION {
        return Err(EstimatorError::BadHeader(format!(
            "unsupported version {}",
            source[4]
        )));
    }
    let u16_at = |o: usize| u16::from_le_bytes([source[o], source[o + 1]]) as usize;
    let arch = Architecture {
        input_channels: u16_at(5),
        conv_filters: u16_at(7),
        kernel: source[9] as usize,
        lstm_hidden: u16_at(10),
        dense1: u16_at(12),
    };
    arch.validate()?;

    let body = &source[HEADER_BYTES..];
    if body.len() % 4 != 0 {
        return Err(EstimatorError::ShapeMismatch(
            "payload is not a whole number of f32 values".into(),
        ));
    }
    let values: Vec<f64> = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    let c = arch.input_channels;
    let expected = 2 * c + arch.param_count();
    if values.len() != expected {
        return Err(EstimatorError::ShapeMismatch(format!(
            "expected {expected} values for {arch:?}, found {}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(EstimatorError::NonFiniteWeight);
    }
    let mut rest = &values[..];
    let mut take = |n: usize| {
        let (head, tail) = rest.split_at(n);
        rest = tail;
        head.to_vec()
    };
    let norm = FeatureNorm {
        mean: take(c),
        scale: take(c),
    };
    let mut params = Params::zeros(&arch);
    for (blob, len) in params.blobs_mut().into_iter().zip(arch.blob_lens()) {
        *blob = take(len);
    }
    let w = ModelWeights { arch, norm, params };
    w.validate()?;
    Ok(w)
}
