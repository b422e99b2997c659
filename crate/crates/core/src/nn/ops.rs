use ndarray::{concatenate, s, Array2, Axis, Zip};
use rand::Rng;

use super::{Param, Tensor};
use crate::losses::sigmoid;

pub fn relu(x: &Tensor) -> Tensor {
    x.mapv(|v| v.max(0.0))
}

/// Masks `dy` where the ReLU output `y` was clamped.
pub fn relu_backward_inplace(dy: &mut Tensor, y: &Tensor) {
    Zip::from(dy).and(y).for_each(|g, &v| {
        if v <= 0.0 {
            *g = 0.0;
        }
    });
}

pub fn sigmoid_inplace(x: &mut Tensor) {
    x.mapv_inplace(|v| sigmoid(v as f64) as f32);
}

/// Flat argmax positions recorded by [`maxpool2`].
#[derive(Clone, Debug)]
pub struct PoolIndex {
    input_dim: (usize, usize, usize, usize),
    argmax: Vec<usize>,
}

/// 2×2 max pooling with stride 2. Odd trailing rows/columns are dropped.
pub fn maxpool2(x: &Tensor) -> (Tensor, PoolIndex) {
    let (n, c, h, w) = x.dim();
    let (ho, wo) = (h / 2, w / 2);
    let x = x.as_standard_layout();
    let xs = x.as_slice().expect("standard layout");
    let mut y = Tensor::zeros((n, c, ho, wo));
    let mut argmax = Vec::with_capacity(n * c * ho * wo);
    let ys = y.as_slice_mut().expect("fresh tensor");
    let mut o = 0;
    for plane in 0..n * c {
        let base = plane * h * w;
        for yy in 0..ho {
            for xx in 0..wo {
                let i0 = base + 2 * yy * w + 2 * xx;
                let mut best = i0;
                for cand in [i0 + 1, i0 + w, i0 + w + 1] {
                    if xs[cand] > xs[best] {
                        best = cand;
                    }
                }
                ys[o] = xs[best];
                argmax.push(best);
                o += 1;
            }
        }
    }
    (
        y,
        PoolIndex {
            input_dim: (n, c, h, w),
            argmax,
        },
    )
}

pub fn maxpool2_backward(dy: &Tensor, index: &PoolIndex) -> Tensor {
    let mut dx = Tensor::zeros(index.input_dim);
    let dxs = dx.as_slice_mut().expect("fresh tensor");
    for (&i, &g) in index.argmax.iter().zip(dy.iter()) {
        dxs[i] += g;
    }
    dx
}

/// Nearest-neighbour 2× upsampling.
pub fn upsample2(x: &Tensor) -> Tensor {
    let (n, c, h, w) = x.dim();
    Tensor::from_shape_fn((n, c, 2 * h, 2 * w), |(b, ch, y, xx)| x[[b, ch, y / 2, xx / 2]])
}

pub fn upsample2_backward(dy: &Tensor) -> Tensor {
    let (n, c, h2, w2) = dy.dim();
    let mut dx = Tensor::zeros((n, c, h2 / 2, w2 / 2));
    for ((b, ch, y, x), &g) in dy.indexed_iter() {
        dx[[b, ch, y / 2, x / 2]] += g;
    }
    dx
}

pub fn concat_channels(a: &Tensor, b: &Tensor) -> Tensor {
    concatenate(Axis(1), &[a.view(), b.view()]).expect("matching N, H, W")
}

/// Splits a channel-concatenated gradient back into its two parts.
pub fn split_channels(d: &Tensor, first: usize) -> (Tensor, Tensor) {
    (
        d.slice(s![.., ..first, .., ..]).to_owned(),
        d.slice(s![.., first.., .., ..]).to_owned(),
    )
}

pub fn global_avg_pool(x: &Tensor) -> Array2<f32> {
    let (_, _, h, w) = x.dim();
    x.sum_axis(Axis(3)).sum_axis(Axis(2)) / (h * w) as f32
}

pub fn global_avg_pool_backward(dy: &Array2<f32>, h: usize, w: usize) -> Tensor {
    let (n, c) = dy.dim();
    let scale = 1.0 / (h * w) as f32;
    Tensor::from_shape_fn((n, c, h, w), |(b, ch, _, _)| dy[[b, ch]] * scale)
}

/// Reverses the spatial axes: `horizontal` mirrors columns, `vertical` rows.
pub fn flip_spatial(x: &Tensor, horizontal: bool, vertical: bool) -> Tensor {
    let mut v = x.view();
    if horizontal {
        v.invert_axis(Axis(3));
    }
    if vertical {
        v.invert_axis(Axis(2));
    }
    v.as_standard_layout().into_owned()
}

/// Fully connected layer on (N, in) rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
    pub in_features: usize,
    pub out_features: usize,
}

impl Linear {
    pub fn new(name: &str, in_features: usize, out_features: usize, rng: &mut impl Rng) -> Self {
        let mut weight = Param::he_normal(
            format!("{name}.weight"),
            &[out_features, in_features],
            in_features,
            rng,
        );
        // Classifier heads start near uniform.
        weight.value.iter_mut().for_each(|v| *v *= 0.5);
        Self {
            weight,
            bias: Param::zeros(format!("{name}.bias"), &[out_features]),
            in_features,
            out_features,
        }
    }

    fn wmat(&self) -> ndarray::ArrayView2<'_, f32> {
        ndarray::ArrayView2::from_shape((self.out_features, self.in_features), &self.weight.value)
            .expect("weight shape")
    }

    pub fn forward(&self, x: &Array2<f32>) -> Array2<f32> {
        let mut y = x.dot(&self.wmat().t());
        for mut row in y.rows_mut() {
            row.iter_mut().zip(&self.bias.value).for_each(|(v, b)| *v += b);
        }
        y
    }

    pub fn backward(&mut self, x: &Array2<f32>, dy: &Array2<f32>) -> Array2<f32> {
        let dw = dy.t().dot(x);
        for (g, v) in self.weight.grad.iter_mut().zip(dw.iter()) {
            *g += v;
        }
        for (g, v) in self.bias.grad.iter_mut().zip(dy.sum_axis(Axis(0)).iter()) {
            *g += v;
        }
        dy.dot(&self.wmat())
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.weight, &mut self.bias]
    }
}
