use ndarray::Array2;
use rand::Rng;

use super::{ModelError, Module};
use crate::exec::Execution;
use crate::nn::{
    global_avg_pool, global_avg_pool_backward, maxpool2, maxpool2_backward, relu,
    relu_backward_inplace, Conv2d, Linear, Param, PoolIndex, Tensor,
};

/// Small from-scratch classifier: three 3×3 conv stages with 2×2 pooling
/// between them, global average pooling, and a linear head with one logit
/// per finding.
#[derive(Clone, Debug)]
pub struct TinyCnn {
    conv1: Conv2d,
    conv2: Conv2d,
    conv3: Conv2d,
    fc: Linear,
    pub exec: Execution,
}

pub struct TinyCnnTape {
    x: Tensor,
    a1: Tensor,
    i1: PoolIndex,
    p1: Tensor,
    a2: Tensor,
    i2: PoolIndex,
    p2: Tensor,
    a3: Tensor,
    g: Array2<f32>,
}

impl TinyCnn {
    pub fn new(width: usize, n_classes: usize, rng: &mut impl Rng) -> Self {
        Self {
            conv1: Conv2d::new("conv1", 3, width, 3, rng),
            conv2: Conv2d::new("conv2", width, 2 * width, 3, rng),
            conv3: Conv2d::new("conv3", 2 * width, 2 * width, 3, rng),
            fc: Linear::new("fc", 2 * width, n_classes, rng),
            exec: Execution::default(),
        }
    }

    pub fn n_classes(&self) -> usize {
        self.fc.out_features
    }
}

impl Module for TinyCnn {
    type Output = Array2<f32>;
    type Tape = TinyCnnTape;

    fn in_channels(&self) -> usize {
        3
    }

    fn forward_train(&self, x: &Tensor) -> Result<(Array2<f32>, TinyCnnTape), ModelError> {
        self.check_input(x)?;
        let e = self.exec;
        let a1 = relu(&self.conv1.forward(x, e));
        let (p1, i1) = maxpool2(&a1);
        let a2 = relu(&self.conv2.forward(&p1, e));
        let (p2, i2) = maxpool2(&a2);
        let a3 = relu(&self.conv3.forward(&p2, e));
        let g = global_avg_pool(&a3);
        let logits = self.fc.forward(&g);
        Ok((
            logits,
            TinyCnnTape {
                x: x.clone(),
                a1,
                i1,
                p1,
                a2,
                i2,
                p2,
                a3,
                g,
            },
        ))
    }

    fn backward(&mut self, t: TinyCnnTape, grad: &Array2<f32>) -> Tensor {
        let e = self.exec;
        let dg = self.fc.backward(&t.g, grad);
        let (_, _, h3, w3) = t.a3.dim();
        let mut da3 = global_avg_pool_backward(&dg, h3, w3);
        relu_backward_inplace(&mut da3, &t.a3);
        let dp2 = self.conv3.backward(&t.p2, &da3, e);
        let mut da2 = maxpool2_backward(&dp2, &t.i2);
        relu_backward_inplace(&mut da2, &t.a2);
        let dp1 = self.conv2.backward(&t.p1, &da2, e);
        let mut da1 = maxpool2_backward(&dp1, &t.i1);
        relu_backward_inplace(&mut da1, &t.a1);
        self.conv1.backward(&t.x, &da1, e)
    }

    fn params(&self) -> Vec<&Param> {
        let mut v = Vec::with_capacity(8);
        v.extend(self.conv1.params());
        v.extend(self.conv2.params());
        v.extend(self.conv3.params());
        v.extend(self.fc.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = Vec::with_capacity(8);
        v.extend(self.conv1.params_mut());
        v.extend(self.conv2.params_mut());
        v.extend(self.conv3.params_mut());
        v.extend(self.fc.params_mut());
        v
    }

    fn set_exec(&mut self, exec: Execution) {
        self.exec = exec;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::random_tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn output_shape_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = TinyCnn::new(4, 23, &mut rng);
        let x = random_tensor((2, 3, 16, 20), 2);
        let a = net.forward(&x).unwrap();
        assert_eq!(a.dim(), (2, 23));
        assert_eq!(a, net.forward(&x).unwrap());
        let bad = random_tensor((1, 4, 16, 20), 2);
        assert!(matches!(net.forward(&bad), Err(ModelError::Channels { .. })));
    }

    #[test]
    fn end_to_end_gradient_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = TinyCnn::new(3, 5, &mut rng);
        let x = random_tensor((2, 3, 8, 8), 4);
        let probe = Array2::from_shape_fn((2, 5), |(i, j)| (i as f32 + 1.0) * (j as f32 - 2.0) * 0.1);
        let f = |n: &TinyCnn| -> f64 {
            n.forward(&x)
                .unwrap()
                .iter()
                .zip(probe.iter())
                .map(|(a, b)| (a * b) as f64)
                .sum()
        };
        let (_, tape) = net.forward_train(&x).unwrap();
        net.backward(tape, &probe);
        let h = 1e-2f32;
        for (pi, wi) in [(0usize, 3usize), (2, 10), (4, 7), (6, 4)] {
            let analytic = net.params()[pi].grad[wi] as f64;
            let mut up = net.clone();
            up.params_mut()[pi].value[wi] += h;
            let mut dn = net.clone();
            dn.params_mut()[pi].value[wi] -= h;
            let fd = (f(&up) - f(&dn)) / (2.0 * h as f64);
            assert!((fd - analytic).abs() < 2e-3 * (1.0 + fd.abs()), "param {pi}[{wi}]: {fd} vs {analytic}");
        }
    }
}
