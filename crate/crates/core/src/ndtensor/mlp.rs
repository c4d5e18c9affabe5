use super::{Result, Tensor, TensorError};
use rand::Rng;

/// What to do when the channel count is not a multiple of the reduction ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BottleneckPolicy {
    /// Bottleneck width is `max(C / r, 1)`.
    #[default]
    Clamp,
    /// Reject `C < r` and `C % r != 0`.
    Strict,
}

impl BottleneckPolicy {
    pub fn hidden_width(self, channels: usize, ratio: usize) -> Result<usize> {
        if ratio == 0 || channels == 0 {
            return Err(TensorError::Param(format!(
                "channels ({channels}) and reduction ratio ({ratio}) must be positive"
            )));
        }
        match self {
            BottleneckPolicy::Clamp => Ok((channels / ratio).max(1)),
            BottleneckPolicy::Strict if channels % ratio == 0 => Ok(channels / ratio),
            BottleneckPolicy::Strict => Err(TensorError::Param(format!(
                "{channels} channels not divisible by reduction ratio {ratio}"
            ))),
        }
    }
}

/// Two-layer bottleneck `C -> C/r -> C` with a rectifier in between.
///
/// `w1` is `[hidden, C]`, `w2` is `[C, hidden]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMlp {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl ChannelMlp {
    pub fn new(w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor) -> Result<Self> {
        let &[hidden, channels] = w1.shape() else {
            return Err(TensorError::Shape(format!("w1 must be [hidden, C], got {:?}", w1.shape())));
        };
        if hidden == 0 || channels == 0 {
            return Err(TensorError::Param("zero-width channel MLP".into()));
        }
        if b1.shape() != [hidden] || w2.shape() != [channels, hidden] || b2.shape() != [channels] {
            return Err(TensorError::Shape(format!(
                "inconsistent MLP shapes: w1 {:?}, b1 {:?}, w2 {:?}, b2 {:?}",
                w1.shape(),
                b1.shape(),
                w2.shape(),
                b2.shape()
            )));
        }
        Ok(Self { w1, b1, w2, b2 })
    }

    pub fn zeros(channels: usize, ratio: usize, policy: BottleneckPolicy) -> Result<Self> {
        let hidden = policy.hidden_width(channels, ratio)?;
        Ok(Self {
            w1: Tensor::zeros(&[hidden, channels]),
            b1: Tensor::zeros(&[hidden]),
            w2: Tensor::zeros(&[channels, hidden]),
            b2: Tensor::zeros(&[channels]),
        })
    }

    /// Uniform initialisation in `±1/sqrt(fan_in)`.
    pub fn random<R: Rng + ?Sized>(channels: usize, ratio: usize, policy: BottleneckPolicy, rng: &mut R) -> Result<Self> {
        let hidden = policy.hidden_width(channels, ratio)?;
        let a1 = 1.0 / (channels as f64).sqrt();
        let a2 = 1.0 / (hidden as f64).sqrt();
        Ok(Self {
            w1: Tensor::random_uniform(&[hidden, channels], -a1, a1, rng),
            b1: Tensor::random_uniform(&[hidden], -a1, a1, rng),
            w2: Tensor::random_uniform(&[channels, hidden], -a2, a2, rng),
            b2: Tensor::random_uniform(&[channels], -a2, a2, rng),
        })
    }

    pub fn channels(&self) -> usize {
        self.w1.shape()[1]
    }

    pub fn hidden(&self) -> usize {
        self.w1.shape()[0]
    }

    fn hidden_pre(&self, z: &[f64]) -> Vec<f64> {
        let c = self.channels();
        (0..self.hidden())
            .map(|j| {
                let row = &self.w1.data()[j * c..(j + 1) * c];
                self.b1.data()[j] + row.iter().zip(z).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub input: Vec<f64>,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

fn check_len(z: &[f64], mlp: &ChannelMlp) -> Result<()> {
    if z.len() != mlp.channels() {
        return Err(TensorError::Shape(format!(
            "channel vector has {} entries, MLP expects {}",
            z.len(),
            mlp.channels()
        )));
    }
    Ok(())
}

/// `W2 · relu(W1 · z + b1) + b2`.
pub fn mlp_channel(z: &[f64], mlp: &ChannelMlp) -> Result<Vec<f64>> {
    check_len(z, mlp)?;
    let hidden: Vec<f64> = mlp.hidden_pre(z).into_iter().map(|v| v.max(0.0)).collect();
    let h = mlp.hidden();
    Ok((0..mlp.channels())
        .map(|i| {
            let row = &mlp.w2.data()[i * h..(i + 1) * h];
            mlp.b2.data()[i] + row.iter().zip(&hidden).map(|(w, v)| w * v).sum::<f64>()
        })
        .collect())
}

pub fn mlp_channel_backward(z: &[f64], mlp: &ChannelMlp, grad_out: &[f64]) -> Result<MlpGrads> {
    check_len(z, mlp)?;
    check_len(grad_out, mlp)?;
    let (c, h) = (mlp.channels(), mlp.hidden());
    let pre = mlp.hidden_pre(z);
    let act: Vec<f64> = pre.iter().map(|v| v.max(0.0)).collect();

    let mut gw2 = vec![0.0; c * h];
    let mut gact = vec![0.0; h];
    for i in 0..c {
        for j in 0..h {
            gw2[i * h + j] = grad_out[i] * act[j];
            gact[j] += grad_out[i] * mlp.w2.data()[i * h + j];
        }
    }
    let gpre: Vec<f64> = gact
        .iter()
        .zip(&pre)
        .map(|(g, p)| if *p > 0.0 { *g } else { 0.0 })
        .collect();
    let mut gw1 = vec![0.0; h * c];
    let mut gz = vec![0.0; c];
    for j in 0..h {
        for i in 0..c {
            gw1[j * c + i] = gpre[j] * z[i];
            gz[i] += gpre[j] * mlp.w1.data()[j * c + i];
        }
    }
    Ok(MlpGrads {
        input: gz,
        w1: Tensor::from_parts(vec![h, c], gw1),
        b1: Tensor::from_parts(vec![h], gpre),
        w2: Tensor::from_parts(vec![c, h], gw2),
        b2: Tensor::from_parts(vec![c], grad_out.to_vec()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndtensor::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn eye(n: usize) -> Tensor {
        Tensor::from_fn(&[n, n], |i| if i / n == i % n { 1.0 } else { 0.0 }).unwrap()
    }

    #[test]
    fn zero_map() {
        let mlp = ChannelMlp::zeros(16, 16, BottleneckPolicy::Clamp).unwrap();
        assert_eq!(mlp_channel(&[0.3; 16], &mlp).unwrap(), vec![0.0; 16]);
    }

    #[test]
    fn identity_composition_on_non_negative_input() {
        let mlp = ChannelMlp::new(eye(4), Tensor::zeros(&[4]), eye(4), Tensor::zeros(&[4])).unwrap();
        let z = [0.0, 1.5, 2.0, 0.25];
        assert_eq!(mlp_channel(&z, &mlp).unwrap(), z.to_vec());
    }

    #[test]
    fn matches_matrix_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mlp = ChannelMlp::random(16, 16, BottleneckPolicy::Strict, &mut rng).unwrap();
        assert_eq!(mlp.hidden(), 1);
        let z: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).sin()).collect();
        // explicit matrix products
        let mut hidden = mlp.b1.data().to_vec();
        for (j, hv) in hidden.iter_mut().enumerate() {
            for (i, zi) in z.iter().enumerate() {
                *hv += mlp.w1.data()[j * 16 + i] * zi;
            }
            *hv = hv.max(0.0);
        }
        let expected: Vec<f64> = (0..16)
            .map(|i| mlp.b2.data()[i] + mlp.w2.data()[i] * hidden[0])
            .collect();
        for (a, e) in mlp_channel(&z, &mlp).unwrap().iter().zip(expected) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn bottleneck_policies() {
        assert_eq!(BottleneckPolicy::Clamp.hidden_width(8, 16).unwrap(), 1);
        assert_eq!(BottleneckPolicy::Clamp.hidden_width(64, 16).unwrap(), 4);
        assert!(BottleneckPolicy::Strict.hidden_width(8, 16).is_err());
        assert!(BottleneckPolicy::Strict.hidden_width(24, 16).is_err());
        assert!(BottleneckPolicy::Clamp.hidden_width(8, 0).is_err());
    }

    #[test]
    fn shape_errors() {
        let mlp = ChannelMlp::zeros(4, 2, BottleneckPolicy::Clamp).unwrap();
        assert!(mlp_channel(&[0.0; 3], &mlp).is_err());
        assert!(ChannelMlp::new(eye(4), Tensor::zeros(&[3]), eye(4), Tensor::zeros(&[4])).is_err());
    }

    #[test]
    fn input_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mlp = ChannelMlp::random(12, 4, BottleneckPolicy::Clamp, &mut rng).unwrap();
        let up: Vec<f64> = (0..12).map(|i| (i as f64).cos()).collect();
        let z = Tensor::random_uniform(&[12], -1.0, 1.0, &mut rng);
        let f = |t: &Tensor| {
            let out = mlp_channel(t.data(), &mlp)?;
            let v = out.iter().zip(&up).map(|(a, b)| a * b).sum();
            let g = mlp_channel_backward(t.data(), &mlp, &up)?;
            Ok((v, Tensor::new(vec![12], g.input)?))
        };
        let rep = grad_check(f, &z, 1e-6, 1e-7).unwrap();
        assert!(rep.pass, "{rep:?}");
    }
}
