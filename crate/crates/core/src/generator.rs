//! U-Net generator: a stride-2 convolutional encoder, a mirrored
//! transposed-convolution decoder, and skip connections joining encoder
//! level `i` to decoder level `depth - i`.

use candle_core::{DType, Tensor};

use crate::config::RunConfig;
use crate::error::{shape_err, Error, Result};
use crate::nn::{dropout, leaky_relu, relu, BatchNorm2d, Conv2d, ConvTranspose2d, Mode, NamedVar, LEAK_SLOPE};
use crate::rng::SeededRng;

pub const KERNEL: usize = 4;
pub const DROPOUT_RATE: f64 = 0.5;
/// Leading decoder blocks that carry dropout noise.
pub const DROPOUT_BLOCKS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Leaky,
    Relu,
    Tanh,
}

/// One row of the layer graph, for introspection.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerInfo {
    pub name: String,
    pub transposed: bool,
    pub in_channels: usize,
    pub out_channels: usize,
    pub batch_norm: bool,
    pub dropout: bool,
    pub activation: Activation,
}

#[derive(Debug)]
struct EncoderBlock {
    conv: Conv2d,
    bn: Option<BatchNorm2d>,
}

#[derive(Debug)]
struct DecoderBlock {
    conv: ConvTranspose2d,
    bn: Option<BatchNorm2d>,
    dropout: bool,
}

#[derive(Debug)]
pub struct Generator {
    size: usize,
    encoder: Vec<EncoderBlock>,
    decoder: Vec<DecoderBlock>,
    output: ConvTranspose2d,
}

/// Encoder widths: `w, 2w, 4w, 8w, 8w, ...` (64..512 at the reference width).
pub fn encoder_widths(base: usize, depth: usize) -> Vec<usize> {
    (0..depth).map(|i| base * (1usize << i.min(3))).collect()
}

impl Generator {
    /// Image channels plus the label channel.
    pub const IN_CHANNELS: usize = 4;

    pub fn build(cfg: &RunConfig, rng: &mut SeededRng) -> Result<Self> {
        cfg.validate()?;
        Self::build_with(cfg.image_size, cfg.depth(), cfg.base_width, cfg.precision.dtype(), rng)
    }

    pub fn build_with(
        size: usize,
        depth: usize,
        base_width: usize,
        dtype: DType,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if !size.is_power_of_two() || depth < 2 || (1usize << depth) > size {
            return Err(Error::InvalidValue(format!(
                "unsupported generator geometry: size {size}, depth {depth}"
            )));
        }
        let enc = encoder_widths(base_width, depth);
        let mut encoder = Vec::with_capacity(depth);
        for i in 0..depth {
            let c_in = if i == 0 { Self::IN_CHANNELS } else { enc[i - 1] };
            let bn = i > 0;
            encoder.push(EncoderBlock {
                conv: Conv2d::new(c_in, enc[i], KERNEL, 2, 1, !bn, dtype, rng)?,
                bn: if bn { Some(BatchNorm2d::new(enc[i], dtype)?) } else { None },
            });
        }
        // Decoder block j (0-based) outputs the width of encoder level depth-2-j.
        let mut decoder = Vec::with_capacity(depth - 1);
        for j in 0..depth - 1 {
            let c_in = if j == 0 {
                enc[depth - 1]
            } else {
                enc[depth - 1 - j] * 2
            };
            let c_out = enc[depth - 2 - j];
            let bn = j > 0;
            decoder.push(DecoderBlock {
                conv: ConvTranspose2d::new(c_in, c_out, KERNEL, 2, 1, !bn, dtype, rng)?,
                bn: if bn { Some(BatchNorm2d::new(c_out, dtype)?) } else { None },
                dropout: j < DROPOUT_BLOCKS,
            });
        }
        let output = ConvTranspose2d::new(enc[0] * 2, 3, KERNEL, 2, 1, true, dtype, rng)?;
        Ok(Self {
            size,
            encoder,
            decoder,
            output,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn depth(&self) -> usize {
        self.encoder.len()
    }

    pub fn layer_table(&self) -> Vec<LayerInfo> {
        let mut rows = Vec::new();
        for (i, b) in self.encoder.iter().enumerate() {
            rows.push(LayerInfo {
                name: format!("enc{i}"),
                transposed: false,
                in_channels: b.conv.in_channels(),
                out_channels: b.conv.out_channels(),
                batch_norm: b.bn.is_some(),
                dropout: false,
                activation: Activation::Leaky,
            });
        }
        for (j, b) in self.decoder.iter().enumerate() {
            rows.push(LayerInfo {
                name: format!("dec{j}"),
                transposed: true,
                in_channels: b.conv.in_channels(),
                out_channels: b.conv.out_channels(),
                batch_norm: b.bn.is_some(),
                dropout: b.dropout,
                activation: Activation::Relu,
            });
        }
        rows.push(LayerInfo {
            name: "out".into(),
            transposed: true,
            in_channels: self.output.in_channels(),
            out_channels: self.output.out_channels(),
            batch_norm: false,
            dropout: false,
            activation: Activation::Tanh,
        });
        rows
    }

    /// `x`: `(B, 3, S, S)` images, `label`: `(B, 1, S, S)` channels.
    /// Returns `(B, 3, S, S)` in `(-1, 1)`.
    pub fn forward(&self, x: &Tensor, label: &Tensor, mode: Mode, rng: &mut SeededRng) -> Result<Tensor> {
        self.forward_inner(x, label, mode, rng, None)
    }

    /// Same as [`forward`](Self::forward) with the activation of encoder
    /// level `zero_skip` replaced by zeros on its skip path only.
    pub(crate) fn forward_inner(
        &self,
        x: &Tensor,
        label: &Tensor,
        mode: Mode,
        rng: &mut SeededRng,
        zero_skip: Option<usize>,
    ) -> Result<Tensor> {
        let (b, c, h, w) = x.dims4()?;
        if (c, h, w) != (3, self.size, self.size) {
            return Err(shape_err(
                "generator image input",
                format!("Bx3x{0}x{0}", self.size),
                format!("{b}x{c}x{h}x{w}"),
            ));
        }
        let ld = label.dims4()?;
        if ld != (b, 1, self.size, self.size) {
            return Err(shape_err(
                "generator label channel",
                format!("{b}x1x{0}x{0}", self.size),
                format!("{}x{}x{}x{}", ld.0, ld.1, ld.2, ld.3),
            ));
        }
        let mut h = Tensor::cat(&[x, label], 1)?;
        let mut skips = Vec::with_capacity(self.encoder.len());
        for blk in &self.encoder {
            h = blk.conv.forward(&h)?;
            if let Some(bn) = &blk.bn {
                h = bn.forward(&h, mode)?;
            }
            h = leaky_relu(&h, LEAK_SLOPE)?;
            skips.push(h.clone());
        }
        if let Some(level) = zero_skip {
            skips[level] = skips[level].zeros_like()?;
        }
        let depth = self.encoder.len();
        for (j, blk) in self.decoder.iter().enumerate() {
            if j > 0 {
                h = Tensor::cat(&[&h, &skips[depth - 1 - j]], 1)?;
            }
            h = blk.conv.forward(&h)?;
            if let Some(bn) = &blk.bn {
                h = bn.forward(&h, mode)?;
            }
            if blk.dropout && mode.dropout() {
                h = dropout(&h, DROPOUT_RATE, rng)?;
            }
            h = relu(&h)?;
        }
        h = Tensor::cat(&[&h, &skips[0]], 1)?;
        Ok(self.output.forward(&h)?.tanh()?)
    }

    pub fn collect(&self, prefix: &str, out: &mut Vec<NamedVar>) {
        for (i, b) in self.encoder.iter().enumerate() {
            b.conv.collect(&format!("{prefix}.enc{i}.conv"), out);
            if let Some(bn) = &b.bn {
                bn.collect(&format!("{prefix}.enc{i}.bn"), out);
            }
        }
        for (j, b) in self.decoder.iter().enumerate() {
            b.conv.collect(&format!("{prefix}.dec{j}.conv"), out);
            if let Some(bn) = &b.bn {
                bn.collect(&format!("{prefix}.dec{j}.bn"), out);
            }
        }
        self.output.collect(&format!("{prefix}.out"), out);
    }
}
