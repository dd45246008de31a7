//! Convolutional real/fake classifier shared by the standard and the
//! differential discriminator. Stride-2 4x4 convolutions halve the input
//! down to 4x4, then a valid 4x4 convolution produces one logit.

use candle_core::{DType, Tensor};

use crate::error::{shape_err, Error, Result};
use crate::nn::{leaky_relu, sigmoid, BatchNorm2d, Conv2d, Mode, NamedVar, LEAK_SLOPE};
use crate::rng::SeededRng;

#[derive(Debug)]
struct Block {
    conv: Conv2d,
    bn: Option<BatchNorm2d>,
}

#[derive(Debug)]
pub struct Discriminator {
    size: usize,
    blocks: Vec<Block>,
    head: Conv2d,
}

/// `(in, out, batch_norm)` per convolution, head last.
pub fn layer_shapes(size: usize, base_width: usize) -> Vec<(usize, usize, bool)> {
    let n = size.trailing_zeros() as usize - 2;
    let mut rows = Vec::with_capacity(n + 1);
    let mut c_in = 3;
    for i in 0..n {
        let c_out = base_width * (1usize << i.min(3));
        rows.push((c_in, c_out, i > 0));
        c_in = c_out;
    }
    rows.push((c_in, 1, false));
    rows
}

impl Discriminator {
    pub fn build(size: usize, base_width: usize, dtype: DType, rng: &mut SeededRng) -> Result<Self> {
        if !size.is_power_of_two() || size < 8 {
            return Err(Error::InvalidValue(format!(
                "unsupported discriminator input size {size}"
            )));
        }
        let shapes = layer_shapes(size, base_width);
        let (head_shape, body) = shapes.split_last().expect("at least the head");
        let mut blocks = Vec::with_capacity(body.len());
        for &(c_in, c_out, bn) in body {
            blocks.push(Block {
                conv: Conv2d::new(c_in, c_out, 4, 2, 1, !bn, dtype, rng)?,
                bn: if bn { Some(BatchNorm2d::new(c_out, dtype)?) } else { None },
            });
        }
        let head = Conv2d::new(head_shape.0, 1, 4, 1, 0, true, dtype, rng)?;
        Ok(Self { size, blocks, head })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Same triples as [`layer_shapes`], read back from the built layers.
    pub fn shapes(&self) -> Vec<(usize, usize, bool)> {
        let mut rows: Vec<_> = self
            .blocks
            .iter()
            .map(|b| (b.conv.in_channels(), b.conv.out_channels(), b.bn.is_some()))
            .collect();
        rows.push((self.head.in_channels(), 1, false));
        rows
    }

    /// Raw logits, `(B,)`. Accepts any real input range.
    pub fn logits(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let (b, c, h, w) = x.dims4()?;
        if (c, h, w) != (3, self.size, self.size) {
            return Err(shape_err(
                "discriminator input",
                format!("Bx3x{0}x{0}", self.size),
                format!("{b}x{c}x{h}x{w}"),
            ));
        }
        let mut h = x.clone();
        for blk in &self.blocks {
            h = blk.conv.forward(&h)?;
            if let Some(bn) = &blk.bn {
                h = bn.forward(&h, mode)?;
            }
            h = leaky_relu(&h, LEAK_SLOPE)?;
        }
        Ok(self.head.forward(&h)?.reshape(b)?)
    }

    /// Probabilities in `(0, 1)`, `(B,)`.
    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        sigmoid(&self.logits(x, mode)?)
    }

    pub fn collect(&self, prefix: &str, out: &mut Vec<NamedVar>) {
        for (i, b) in self.blocks.iter().enumerate() {
            b.conv.collect(&format!("{prefix}.conv{i}"), out);
            if let Some(bn) = &b.bn {
                bn.collect(&format!("{prefix}.conv{i}.bn"), out);
            }
        }
        self.head.collect(&format!("{prefix}.head"), out);
    }
}
