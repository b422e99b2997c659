use rand::Rng;

use super::{ModelError, Module};
use crate::exec::Execution;
use crate::nn::{
    concat_channels, maxpool2, maxpool2_backward, relu, relu_backward_inplace, split_channels,
    upsample2, upsample2_backward, Conv2d, Param, PoolIndex, Tensor,
};

/// conv3×3 → ReLU → conv3×3 → ReLU.
#[derive(Clone, Debug)]
struct DoubleConv {
    c1: Conv2d,
    c2: Conv2d,
}

struct DoubleConvTape {
    x: Tensor,
    a: Tensor,
    b: Tensor,
}

impl DoubleConv {
    fn new(name: &str, cin: usize, cout: usize, rng: &mut impl Rng) -> Self {
        Self {
            c1: Conv2d::new(&format!("{name}.0"), cin, cout, 3, rng),
            c2: Conv2d::new(&format!("{name}.1"), cout, cout, 3, rng),
        }
    }

    fn forward(&self, x: Tensor, e: Execution) -> (Tensor, DoubleConvTape) {
        let a = relu(&self.c1.forward(&x, e));
        let b = relu(&self.c2.forward(&a, e));
        (b.clone(), DoubleConvTape { x, a, b })
    }

    fn backward(&mut self, t: DoubleConvTape, mut db: Tensor, e: Execution) -> Tensor {
        relu_backward_inplace(&mut db, &t.b);
        let mut da = self.c2.backward(&t.a, &db, e);
        relu_backward_inplace(&mut da, &t.a);
        self.c1.backward(&t.x, &da, e)
    }

    fn params(&self) -> impl Iterator<Item = &Param> {
        self.c1.params().into_iter().chain(self.c2.params())
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.c1.params_mut().into_iter().chain(self.c2.params_mut())
    }
}

/// Two-level U-Net: encoder widths (w, 2w), bottleneck 4w, decoder with skip
/// concatenation, and a 1×1 head producing one logit per pixel. Output has
/// the input's spatial size; H and W must be multiples of 4.
#[derive(Clone, Debug)]
pub struct TinyUnet {
    in_ch: usize,
    enc1: DoubleConv,
    enc2: DoubleConv,
    bottleneck: DoubleConv,
    dec2: DoubleConv,
    dec1: DoubleConv,
    head: Conv2d,
    pub exec: Execution,
}

pub struct TinyUnetTape {
    t_enc1: DoubleConvTape,
    i1: PoolIndex,
    t_enc2: DoubleConvTape,
    i2: PoolIndex,
    t_bott: DoubleConvTape,
    t_dec2: DoubleConvTape,
    t_dec1: DoubleConvTape,
    d1: Tensor,
    w: usize,
}

impl TinyUnet {
    pub fn new(prefix: &str, in_ch: usize, width: usize, rng: &mut impl Rng) -> Self {
        let w = width;
        Self {
            in_ch,
            enc1: DoubleConv::new(&format!("{prefix}.enc1"), in_ch, w, rng),
            enc2: DoubleConv::new(&format!("{prefix}.enc2"), w, 2 * w, rng),
            bottleneck: DoubleConv::new(&format!("{prefix}.bottleneck"), 2 * w, 4 * w, rng),
            dec2: DoubleConv::new(&format!("{prefix}.dec2"), 6 * w, 2 * w, rng),
            dec1: DoubleConv::new(&format!("{prefix}.dec1"), 3 * w, w, rng),
            head: Conv2d::new(&format!("{prefix}.head"), w, 1, 1, rng),
            exec: Execution::default(),
        }
    }

    fn width(&self) -> usize {
        self.enc1.c1.out_ch
    }
}

impl Module for TinyUnet {
    type Output = Tensor;
    type Tape = TinyUnetTape;

    fn in_channels(&self) -> usize {
        self.in_ch
    }

    fn spatial_divisor(&self) -> usize {
        4
    }

    fn forward_train(&self, x: &Tensor) -> Result<(Tensor, TinyUnetTape), ModelError> {
        self.check_input(x)?;
        let e = self.exec;
        let (e1, t_enc1) = self.enc1.forward(x.clone(), e);
        let (q1, i1) = maxpool2(&e1);
        let (e2, t_enc2) = self.enc2.forward(q1, e);
        let (q2, i2) = maxpool2(&e2);
        let (b, t_bott) = self.bottleneck.forward(q2, e);
        let (d2, t_dec2) = self.dec2.forward(concat_channels(&upsample2(&b), &e2), e);
        let (d1, t_dec1) = self.dec1.forward(concat_channels(&upsample2(&d2), &e1), e);
        let out = self.head.forward(&d1, e);
        Ok((
            out,
            TinyUnetTape {
                t_enc1,
                i1,
                t_enc2,
                i2,
                t_bott,
                t_dec2,
                t_dec1,
                d1,
                w: self.width(),
            },
        ))
    }

    fn backward(&mut self, t: TinyUnetTape, grad: &Tensor) -> Tensor {
        let e = self.exec;
        let w = t.w;
        let dd1 = self.head.backward(&t.d1, grad, e);
        let dcat1 = self.dec1.backward(t.t_dec1, dd1, e);
        let (du1, de1_skip) = split_channels(&dcat1, 2 * w);
        let dd2 = upsample2_backward(&du1);
        let dcat2 = self.dec2.backward(t.t_dec2, dd2, e);
        let (du2, de2_skip) = split_channels(&dcat2, 4 * w);
        let db = upsample2_backward(&du2);
        let dq2 = self.bottleneck.backward(t.t_bott, db, e);
        let de2 = maxpool2_backward(&dq2, &t.i2) + &de2_skip;
        let dq1 = self.enc2.backward(t.t_enc2, de2, e);
        let de1 = maxpool2_backward(&dq1, &t.i1) + &de1_skip;
        self.enc1.backward(t.t_enc1, de1, e)
    }

    fn params(&self) -> Vec<&Param> {
        self.enc1
            .params()
            .chain(self.enc2.params())
            .chain(self.bottleneck.params())
            .chain(self.dec2.params())
            .chain(self.dec1.params())
            .chain(self.head.params())
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.enc1
            .params_mut()
            .chain(self.enc2.params_mut())
            .chain(self.bottleneck.params_mut())
            .chain(self.dec2.params_mut())
            .chain(self.dec1.params_mut())
            .chain(self.head.params_mut())
            .collect()
    }

    fn set_exec(&mut self, exec: Execution) {
        self.exec = exec;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::{dot, random_tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn preserves_spatial_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = TinyUnet::new("u", 3, 4, &mut rng);
        for (h, w) in [(8, 8), (16, 20), (64, 80)] {
            let y = net.forward(&random_tensor((2, 3, h, w), 1)).unwrap();
            assert_eq!(y.dim(), (2, 1, h, w));
        }
        assert!(matches!(
            net.forward(&random_tensor((1, 3, 10, 8), 1)),
            Err(ModelError::Spatial { .. })
        ));
    }

    #[test]
    fn input_gradient_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = TinyUnet::new("u", 2, 2, &mut rng);
        let x = random_tensor((1, 2, 8, 8), 3);
        let probe = random_tensor((1, 1, 8, 8), 4);
        let (_, tape) = net.forward_train(&x).unwrap();
        let dx = net.backward(tape, &probe);
        // small step: larger ones straddle ReLU / max-pool switch points
        let h = 2e-3f32;
        for idx in [[0, 0, 1, 1], [0, 1, 4, 6], [0, 0, 7, 0], [0, 1, 3, 3]] {
            let mut xp = x.clone();
            xp[idx] += h;
            let mut xm = x.clone();
            xm[idx] -= h;
            let fd = (dot(&net.forward(&xp).unwrap(), &probe) - dot(&net.forward(&xm).unwrap(), &probe))
                / (2.0 * h as f64);
            assert!((fd - dx[idx] as f64).abs() < 5e-3 * (1.0 + fd.abs()), "{fd} vs {}", dx[idx]);
        }
    }
}
