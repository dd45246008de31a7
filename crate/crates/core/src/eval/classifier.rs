//! Small convolutional attribute classifier: three stride-2 convolutions
//! and two fully connected layers, trained with cross-entropy.

use candle_core::{DType, Device, Tensor, D};

use crate::error::{Error, Result};
use crate::image::{images_to_tensor, ImageTensor};
use crate::nn::{const_var, gaussian_var, leaky_relu, Conv2d, Linear, NamedVar, LEAK_SLOPE};
use crate::optim::{Adam, AdamConfig};
use crate::rng::SeededRng;

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierConfig {
    pub width: usize,
    pub hidden: usize,
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            width: 16,
            hidden: 64,
            iterations: 400,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug)]
pub struct Classifier {
    convs: Vec<Conv2d>,
    fc1: Linear,
    fc2: Linear,
    size: usize,
    classes: usize,
}

fn he_conv(c_in: usize, c_out: usize, rng: &mut SeededRng) -> Result<Conv2d> {
    let std = (2.0 / (c_in * 16) as f64).sqrt();
    Ok(Conv2d {
        weight: gaussian_var(&[c_out, c_in, 4, 4], std, DType::F32, rng)?,
        bias: Some(const_var(&[c_out], 0.0, DType::F32)?),
        stride: 2,
        padding: 1,
    })
}

fn he_linear(d_in: usize, d_out: usize, rng: &mut SeededRng) -> Result<Linear> {
    Ok(Linear {
        weight: gaussian_var(&[d_out, d_in], (2.0 / d_in as f64).sqrt(), DType::F32, rng)?,
        bias: const_var(&[d_out], 0.0, DType::F32)?,
    })
}

impl Classifier {
    fn build(size: usize, classes: usize, cfg: &ClassifierConfig, rng: &mut SeededRng) -> Result<Self> {
        if size % 8 != 0 {
            return Err(Error::InvalidValue(format!("classifier input size {size} not divisible by 8")));
        }
        let w = cfg.width;
        let convs = vec![he_conv(3, w, rng)?, he_conv(w, 2 * w, rng)?, he_conv(2 * w, 4 * w, rng)?];
        let flat = 4 * w * (size / 8) * (size / 8);
        Ok(Self {
            convs,
            fc1: he_linear(flat, cfg.hidden, rng)?,
            fc2: he_linear(cfg.hidden, classes, rng)?,
            size,
            classes,
        })
    }

    fn vars(&self) -> Vec<NamedVar> {
        let mut out = Vec::new();
        for (i, c) in self.convs.iter().enumerate() {
            c.collect(&format!("conv{i}"), &mut out);
        }
        self.fc1.collect("fc1", &mut out);
        self.fc2.collect("fc2", &mut out);
        out
    }

    fn logits(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for c in &self.convs {
            h = leaky_relu(&c.forward(&h)?, LEAK_SLOPE)?;
        }
        let h = h.flatten_from(1)?;
        let h = self.fc1.forward(&h)?.relu()?;
        self.fc2.forward(&h)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn classify_many(&self, images: &[&ImageTensor]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(128) {
            for img in chunk {
                img.expect_model_shape(self.size)?;
            }
            let logits = self.logits(&images_to_tensor(chunk, DType::F32)?)?;
            out.extend(logits.argmax(D::Minus1)?.to_vec1::<u32>()?.into_iter().map(|v| v as usize));
        }
        Ok(out)
    }

    pub fn classify(&self, image: &ImageTensor) -> Result<usize> {
        Ok(self.classify_many(&[image])?[0])
    }

    pub fn accuracy(&self, images: &[&ImageTensor], labels: &[usize]) -> Result<f64> {
        if images.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let pred = self.classify_many(images)?;
        let hits = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
        Ok(hits as f64 / images.len() as f64)
    }
}

/// Mean cross-entropy of `logits` `(B, K)` against integer labels.
fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let (b, k) = logits.dims2()?;
    let max = logits.max_keepdim(1)?.detach();
    let shifted = logits.broadcast_sub(&max)?;
    let lse = shifted.exp()?.sum_keepdim(1)?.log()?;
    let log_probs = shifted.broadcast_sub(&lse)?;
    let mut onehot = vec![0f32; b * k];
    for (i, &l) in labels.iter().enumerate() {
        onehot[i * k + l] = 1.0;
    }
    let onehot = Tensor::from_vec(onehot, (b, k), &Device::Cpu)?;
    Ok((log_probs * onehot)?.sum_all()?.neg()?.affine(1.0 / b as f64, 0.0)?)
}

/// Trains on `labels` in `0..classes`. At least two distinct labels are
/// required.
pub fn train_classifier(
    images: &[&ImageTensor],
    labels: &[usize],
    classes: usize,
    cfg: &ClassifierConfig,
) -> Result<Classifier> {
    if images.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if images.len() != labels.len() {
        return Err(Error::InvalidValue(format!(
            "{} images but {} labels",
            images.len(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelIndex { index: bad, count: classes });
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(Error::InvalidValue("training set has a single class".into()));
    }
    let size = images[0].height();
    let mut rng = SeededRng::new(cfg.seed);
    let model = Classifier::build(size, classes, cfg, &mut rng)?;
    let mut opt = Adam::new(
        &model.vars(),
        AdamConfig {
            learning_rate: cfg.learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        },
    )?;
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    for _ in 0..cfg.iterations {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size.min(images.len()) {
            if cursor >= order.len() {
                order = (0..images.len()).collect();
                rng.shuffle(&mut order);
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }
        let imgs: Vec<&ImageTensor> = batch.iter().map(|&i| images[i]).collect();
        let ys: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
        let loss = cross_entropy(&model.logits(&images_to_tensor(&imgs, DType::F32)?)?, &ys)?;
        opt.step(&loss.backward()?)?;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob(bright: bool, rng: &mut SeededRng) -> ImageTensor {
        let base = if bright { 0.6 } else { -0.6 };
        let v = (0..16 * 16 * 3).map(|_| base + rng.uniform_range(-0.3, 0.3) as f32).collect();
        ImageTensor::from_vec(16, 16, 3, v).unwrap()
    }

    #[test]
    fn separable_toy_set_is_learned() {
        let mut rng = SeededRng::new(1);
        let imgs: Vec<ImageTensor> = (0..20).map(|i| blob(i % 2 == 0, &mut rng)).collect();
        let labels: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let refs: Vec<&ImageTensor> = imgs.iter().collect();
        let cfg = ClassifierConfig {
            width: 4,
            hidden: 8,
            iterations: 60,
            batch_size: 8,
            ..Default::default()
        };
        let clf = train_classifier(&refs, &labels, 2, &cfg).unwrap();
        assert_eq!(clf.accuracy(&refs, &labels).unwrap(), 1.0);
        let p = clf.classify(&imgs[3]).unwrap();
        assert_eq!(p, clf.classify(&imgs[3]).unwrap());
        assert!(p < 2);
    }

    #[test]
    fn single_class_and_bad_labels_rejected() {
        let mut rng = SeededRng::new(2);
        let imgs: Vec<ImageTensor> = (0..4).map(|_| blob(true, &mut rng)).collect();
        let refs: Vec<&ImageTensor> = imgs.iter().collect();
        let cfg = ClassifierConfig::default();
        assert!(train_classifier(&refs, &[1, 1, 1, 1], 3, &cfg).is_err());
        assert!(train_classifier(&refs, &[0, 1, 5, 1], 3, &cfg).is_err());
        assert!(train_classifier(&[], &[], 3, &cfg).is_err());
    }

    #[test]
    fn cross_entropy_matches_direct_formula() {
        let logits = Tensor::new(&[[1.0f32, 2.0, 0.5], [0.0, -1.0, 3.0]], &Device::Cpu).unwrap();
        let ce = cross_entropy(&logits, &[1, 2]).unwrap().to_scalar::<f32>().unwrap() as f64;
        let row = |v: [f64; 3], y: usize| -(v[y].exp() / v.iter().map(|x| x.exp()).sum::<f64>()).ln();
        let want = (row([1.0, 2.0, 0.5], 1) + row([0.0, -1.0, 3.0], 2)) / 2.0;
        assert!((ce - want).abs() < 1e-5);
    }
}
