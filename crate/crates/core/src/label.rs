//! Label codes and the learned embedding that turns them into a spatial
//! label channel concatenated onto the generator input.

use std::path::Path;

use candle_core::{DType, Device, Tensor};

use crate::error::{shape_err, Error, Result};
use crate::nn::{leaky_relu, Linear, NamedVar, LEAK_SLOPE};
use crate::rng::SeededRng;

/// Attribute intensities, one entry per label, each in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelCode(Vec<f64>);

impl LabelCode {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidValue(format!(
                "label code entry {v} outside [0, 1]"
            )));
        }
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn one_hot(n: usize, index: usize, intensity: f64) -> Result<Self> {
        scale_intensity(&Self::zeros(n), index, intensity)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Returns a copy of `code` with `values[label_index] = intensity`.
pub fn scale_intensity(code: &LabelCode, label_index: usize, intensity: f64) -> Result<LabelCode> {
    if label_index >= code.len() {
        return Err(Error::LabelIndex {
            index: label_index,
            count: code.len(),
        });
    }
    if !(0.0..=1.0).contains(&intensity) {
        return Err(Error::InvalidValue(format!(
            "intensity {intensity} outside [0, 1]"
        )));
    }
    let mut values = code.0.clone();
    values[label_index] = intensity;
    Ok(LabelCode(values))
}

/// A `size x size x 1` map, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelChannel {
    size: usize,
    values: Vec<f64>,
}

impl LabelChannel {
    pub fn from_vec(size: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != size * size {
            return Err(shape_err("label channel", size * size, values.len()));
        }
        Ok(Self { size, values })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.size..(r + 1) * self.size]
    }

    /// `(1, 1, size, size)` tensor.
    pub fn to_tensor(&self, dtype: DType) -> Result<Tensor> {
        Ok(
            Tensor::from_vec(self.values.clone(), (1, 1, self.size, self.size), &Device::Cpu)?
                .to_dtype(dtype)?,
        )
    }
}

/// Binary spatial mask selecting the first channel (1) or the second (0).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    size: usize,
    values: Vec<bool>,
}

impl Mask {
    pub fn from_values(size: usize, values: &[f64]) -> Result<Self> {
        if values.len() != size * size {
            return Err(shape_err("mask", size * size, values.len()));
        }
        let mut out = Vec::with_capacity(values.len());
        for &v in values {
            if v == 1.0 {
                out.push(true);
            } else if v == 0.0 {
                out.push(false);
            } else {
                return Err(Error::InvalidValue(format!("mask entry {v} is not 0 or 1")));
            }
        }
        Ok(Self { size, values: out })
    }

    pub fn from_fn(size: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let values = (0..size * size).map(|i| f(i / size, i % size)).collect();
        Self { size, values }
    }

    pub fn ones(size: usize) -> Self {
        Self::from_fn(size, |_, _| true)
    }

    pub fn zeros(size: usize) -> Self {
        Self::from_fn(size, |_, _| false)
    }

    pub fn upper_half(size: usize) -> Self {
        Self::from_fn(size, |r, _| r < size / 2)
    }

    pub fn lower_half(size: usize) -> Self {
        Self::from_fn(size, |r, _| r >= size / 2)
    }

    pub fn left_half(size: usize) -> Self {
        Self::from_fn(size, |_, c| c < size / 2)
    }

    /// Grayscale PNG; pixels above mid-gray select the first channel.
    pub fn from_png(path: &Path, size: usize) -> Result<Self> {
        let img = image::open(path)
            .map_err(|e| Error::ImageFile {
                path: path.to_path_buf(),
                msg: e.to_string(),
            })?
            .to_luma8();
        if img.dimensions() != (size as u32, size as u32) {
            return Err(shape_err(
                "mask image",
                format!("{size}x{size}"),
                format!("{}x{}", img.width(), img.height()),
            ));
        }
        Ok(Self::from_fn(size, |r, c| img.get_pixel(c as u32, r as u32)[0] >= 128))
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.values[r * self.size + c]
    }
}

/// `mask * a + (1 - mask) * b`, elementwise.
pub fn compose_label_channels(a: &LabelChannel, b: &LabelChannel, mask: &Mask) -> Result<LabelChannel> {
    if a.size != b.size || a.size != mask.size {
        return Err(shape_err(
            "label channel composition",
            format!("{0}x{0}", a.size),
            format!("{0}x{0} / mask {1}x{1}", b.size, mask.size),
        ));
    }
    let values = a
        .values
        .iter()
        .zip(&b.values)
        .zip(&mask.values)
        .map(|((&va, &vb), &m)| if m { va } else { vb })
        .collect();
    Ok(LabelChannel {
        size: a.size,
        values,
    })
}

/// Two fully connected layers, `N -> hidden -> size*size`, each followed by
/// a leaky rectifier; the output is reshaped row-major to `size x size`.
#[derive(Debug)]
pub struct LabelEmbedding {
    pub fc1: Linear,
    pub fc2: Linear,
    code_len: usize,
    size: usize,
}

impl LabelEmbedding {
    pub fn new(
        code_len: usize,
        hidden: usize,
        size: usize,
        dtype: DType,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        Ok(Self {
            fc1: Linear::new(code_len, hidden, dtype, rng)?,
            fc2: Linear::new(hidden, size * size, dtype, rng)?,
            code_len,
            size,
        })
    }

    pub fn from_layers(fc1: Linear, fc2: Linear, size: usize) -> Result<Self> {
        let code_len = fc1.weight.dims()[1];
        if fc2.weight.dims()[0] != size * size || fc2.weight.dims()[1] != fc1.weight.dims()[0] {
            return Err(shape_err(
                "embedding layers",
                format!("fc2 {}x{}", size * size, fc1.weight.dims()[0]),
                format!("{:?}", fc2.weight.dims()),
            ));
        }
        Ok(Self {
            fc1,
            fc2,
            code_len,
            size,
        })
    }

    pub fn code_len(&self) -> usize {
        self.code_len
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn dtype(&self) -> DType {
        self.fc1.weight.dtype()
    }

    /// `(B, N)` codes to `(B, 1, size, size)` channels.
    pub fn forward(&self, codes: &Tensor) -> Result<Tensor> {
        let (b, n) = codes.dims2()?;
        if n != self.code_len {
            return Err(Error::LabelLength {
                expected: self.code_len,
                actual: n,
            });
        }
        let h = leaky_relu(&self.fc1.forward(codes)?, LEAK_SLOPE)?;
        let out = leaky_relu(&self.fc2.forward(&h)?, LEAK_SLOPE)?;
        Ok(out.reshape((b, 1, self.size, self.size))?)
    }

    pub fn codes_tensor(&self, codes: &[&LabelCode]) -> Result<Tensor> {
        let mut flat = Vec::with_capacity(codes.len() * self.code_len);
        for c in codes {
            if c.len() != self.code_len {
                return Err(Error::LabelLength {
                    expected: self.code_len,
                    actual: c.len(),
                });
            }
            flat.extend_from_slice(c.values());
        }
        Ok(Tensor::from_vec(flat, (codes.len(), self.code_len), &Device::Cpu)?.to_dtype(self.dtype())?)
    }

    pub fn collect(&self, prefix: &str, out: &mut Vec<NamedVar>) {
        self.fc1.collect(&format!("{prefix}.fc1"), out);
        self.fc2.collect(&format!("{prefix}.fc2"), out);
    }
}

/// Embeds one or more codes, concatenated in order, into a label channel.
pub fn embed_label_code(codes: &[&LabelCode], p: &LabelEmbedding) -> Result<LabelChannel> {
    let values: Vec<f64> = codes.iter().flat_map(|c| c.values().iter().copied()).collect();
    if values.len() != p.code_len {
        return Err(Error::LabelLength {
            expected: p.code_len,
            actual: values.len(),
        });
    }
    let joined = LabelCode(values);
    let t = p.forward(&p.codes_tensor(&[&joined])?)?;
    let values = t.flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?;
    LabelChannel::from_vec(p.size, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::Var;
    use proptest::prelude::*;

    fn lin(w: Vec<f64>, b: Vec<f64>, d_out: usize, d_in: usize) -> Linear {
        Linear {
            weight: Var::from_tensor(&Tensor::from_vec(w, (d_out, d_in), &Device::Cpu).unwrap()).unwrap(),
            bias: Var::from_tensor(&Tensor::from_vec(b, (d_out,), &Device::Cpu).unwrap()).unwrap(),
        }
    }

    fn leaky(v: f64) -> f64 {
        if v >= 0.0 {
            v
        } else {
            0.2 * v
        }
    }

    #[test]
    fn seven_label_code_gives_full_size_channel() {
        let mut rng = SeededRng::new(0);
        let emb = LabelEmbedding::new(7, 256, 64, DType::F32, &mut rng).unwrap();
        let code = LabelCode::one_hot(7, 4, 1.0).unwrap();
        let ch = embed_label_code(&[&code], &emb).unwrap();
        assert_eq!(ch.size(), 64);
        assert_eq!(ch.values().len(), 64 * 64);
        assert_eq!(ch, embed_label_code(&[&code], &emb).unwrap());
    }

    #[test]
    fn matches_manual_matrix_products() {
        // fc1: 2 -> 3, fc2: 3 -> 16 (4x4 channel)
        let w1 = vec![0.5, -1.0, -0.25, 0.75, 1.5, 0.1];
        let b1 = vec![0.1, -0.2, 0.05];
        let w2: Vec<f64> = (0..48).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.13).collect();
        let b2: Vec<f64> = (0..16).map(|i| (i as f64 - 8.0) * 0.01).collect();
        let emb = LabelEmbedding::from_layers(
            lin(w1.clone(), b1.clone(), 3, 2),
            lin(w2.clone(), b2.clone(), 16, 3),
            4,
        )
        .unwrap();
        let code = LabelCode::new(vec![1.0, 0.0]).unwrap();
        let got = embed_label_code(&[&code], &emb).unwrap();

        let x = [1.0, 0.0];
        let h: Vec<f64> = (0..3)
            .map(|i| leaky(w1[i * 2] * x[0] + w1[i * 2 + 1] * x[1] + b1[i]))
            .collect();
        for (j, v) in got.values().iter().enumerate() {
            let z: f64 = (0..3).map(|i| w2[j * 3 + i] * h[i]).sum::<f64>() + b2[j];
            assert!((v - leaky(z)).abs() < 1e-10, "entry {j}");
        }
        // row-major reshape
        assert_eq!(got.row(1), &got.values()[4..8]);
    }

    #[test]
    fn code_length_mismatch_names_expected() {
        let mut rng = SeededRng::new(0);
        let emb = LabelEmbedding::new(7, 8, 16, DType::F64, &mut rng).unwrap();
        let err = embed_label_code(&[&LabelCode::zeros(5)], &emb).unwrap_err();
        assert!(matches!(err, Error::LabelLength { expected: 7, actual: 5 }));
        // concatenated multi-code conditioning
        let emb2 = LabelEmbedding::new(9, 8, 16, DType::F64, &mut rng).unwrap();
        let pose = LabelCode::one_hot(5, 2, 1.0).unwrap();
        let light = LabelCode::one_hot(4, 1, 1.0).unwrap();
        assert!(embed_label_code(&[&pose, &light], &emb2).is_ok());
    }

    #[test]
    fn composition_endpoints_and_rows() {
        let a = LabelChannel::from_vec(64, (0..4096).map(|i| i as f64).collect()).unwrap();
        let b = LabelChannel::from_vec(64, (0..4096).map(|i| -(i as f64)).collect()).unwrap();
        assert_eq!(compose_label_channels(&a, &b, &Mask::ones(64)).unwrap(), a);
        assert_eq!(compose_label_channels(&a, &b, &Mask::zeros(64)).unwrap(), b);
        assert_eq!(compose_label_channels(&a, &a, &Mask::upper_half(64)).unwrap(), a);
        let c = compose_label_channels(&a, &b, &Mask::upper_half(64)).unwrap();
        for r in 0..64 {
            let expect = if r < 32 { a.row(r) } else { b.row(r) };
            assert_eq!(c.row(r), expect, "row {r}");
        }
        assert!(Mask::from_values(2, &[0.0, 1.0, 0.5, 1.0]).is_err());
    }

    #[test]
    fn intensity_editing() {
        let happy = LabelCode::one_hot(7, 4, 1.0).unwrap();
        let half = scale_intensity(&happy, 4, 0.5).unwrap();
        assert_eq!(half.values(), &[0.0, 0.0, 0.0, 0.0, 0.5, 0.0, 0.0]);
        assert_eq!(scale_intensity(&LabelCode::zeros(7), 4, 1.0).unwrap(), happy);
        assert!(matches!(
            scale_intensity(&happy, 7, 0.5),
            Err(Error::LabelIndex { index: 7, count: 7 })
        ));
        assert!(scale_intensity(&happy, 1, 1.5).is_err());
        // happiness 1 -> 0 while anger 0 -> 1
        for i in 0..10 {
            let t = i as f64 / 9.0;
            let c = scale_intensity(&scale_intensity(&LabelCode::zeros(7), 4, 1.0 - t).unwrap(), 1, t).unwrap();
            assert!(c.values().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    proptest! {
        #[test]
        fn positive_scaling_on_shared_activation_region(
            seed in 0u64..1000, alpha in 0.1f64..3.0,
            code in prop::collection::vec(0.05f64..1.0, 3)) {
            let mut rng = SeededRng::new(seed);
            // Biases stay zero at init, so every layer is positively homogeneous:
            // scaling the code by alpha keeps each unit's sign and scales the output.
            let emb = LabelEmbedding::new(3, 16, 4, DType::F64, &mut rng).unwrap();
            let scaled: Vec<f64> = code.iter().map(|v| v * alpha).collect();
            let base = emb.forward(&Tensor::from_vec(code, (1, 3), &Device::Cpu).unwrap()).unwrap();
            let out = emb.forward(&Tensor::from_vec(scaled, (1, 3), &Device::Cpu).unwrap()).unwrap();
            let base: Vec<f64> = base.flatten_all().unwrap().to_vec1().unwrap();
            let out: Vec<f64> = out.flatten_all().unwrap().to_vec1().unwrap();
            for (b, o) in base.iter().zip(&out) {
                prop_assert!((o - alpha * b).abs() < 1e-12);
            }
        }
    }
}
