use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};
use rand::Rng;

use super::{Param, Tensor};
use crate::exec::Execution;

/// Square-kernel convolution, stride 1, "same" zero padding (`k / 2`).
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    pub weight: Param,
    pub bias: Param,
    pub in_ch: usize,
    pub out_ch: usize,
    pub k: usize,
}

/// Unfolds one (C, H, W) sample into a (C·k·k, H·W) patch matrix.
fn im2col(x: &[f32], c: usize, h: usize, w: usize, k: usize, cols: &mut [f32]) {
    let p = (k / 2) as isize;
    let hw = h * w;
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((ci * k + ky) * k + kx) * hw..][..hw];
                let dx = kx as isize - p;
                let dy = ky as isize - p;
                let x_lo = (-dx).max(0) as usize;
                let x_hi = (w as isize - dx).min(w as isize).max(0) as usize;
                for y in 0..h {
                    let out = &mut row[y * w..(y + 1) * w];
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize || x_lo >= x_hi {
                        out.fill(0.0);
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    out[..x_lo].fill(0.0);
                    out[x_hi..].fill(0.0);
                    let s0 = (x_lo as isize + dx) as usize;
                    out[x_lo..x_hi].copy_from_slice(&src[s0..s0 + (x_hi - x_lo)]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the sample.
fn col2im(cols: &[f32], c: usize, h: usize, w: usize, k: usize, dx: &mut [f32]) {
    let p = (k / 2) as isize;
    let hw = h * w;
    for ci in 0..c {
        let plane = &mut dx[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((ci * k + ky) * k + kx) * hw..][..hw];
                let ddx = kx as isize - p;
                let ddy = ky as isize - p;
                let x_lo = (-ddx).max(0) as usize;
                let x_hi = (w as isize - ddx).min(w as isize).max(0) as usize;
                if x_lo >= x_hi {
                    continue;
                }
                for y in 0..h {
                    let sy = y as isize + ddy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let s0 = (x_lo as isize + ddx) as usize;
                    let dst = &mut plane[sy as usize * w + s0..][..x_hi - x_lo];
                    for (d, &g) in dst.iter_mut().zip(&row[y * w + x_lo..y * w + x_hi]) {
                        *d += g;
                    }
                }
            }
        }
    }
}

impl Conv2d {
    pub fn new(name: &str, in_ch: usize, out_ch: usize, k: usize, rng: &mut impl Rng) -> Self {
        assert!(k % 2 == 1, "kernel size must be odd");
        let fan_in = in_ch * k * k;
        Self {
            weight: Param::he_normal(format!("{name}.weight"), &[out_ch, fan_in], fan_in, rng),
            bias: Param::zeros(format!("{name}.bias"), &[out_ch]),
            in_ch,
            out_ch,
            k,
        }
    }

    fn patch_len(&self) -> usize {
        self.in_ch * self.k * self.k
    }

    fn patches(&self, sample: &[f32], h: usize, w: usize) -> Vec<f32> {
        if self.k == 1 {
            return sample.to_vec();
        }
        let mut cols = vec![0.0; self.patch_len() * h * w];
        im2col(sample, self.in_ch, h, w, self.k, &mut cols);
        cols
    }

    pub fn forward(&self, x: &Tensor, exec: Execution) -> Tensor {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.in_ch, "{}: channel mismatch", self.weight.name);
        let x = x.as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        let hw = h * w;
        let mut out = Tensor::zeros((n, self.out_ch, h, w));
        let wmat = ArrayView2::from_shape((self.out_ch, self.patch_len()), &self.weight.value)
            .expect("weight shape");
        let mut chunks: Vec<&mut [f32]> = out
            .as_slice_mut()
            .expect("fresh tensor")
            .chunks_mut(self.out_ch * hw)
            .collect();
        exec.for_each_mut(&mut chunks, |i, dst| {
            let cols = self.patches(&xs[i * c * hw..(i + 1) * c * hw], h, w);
            let cols = ArrayView2::from_shape((self.patch_len(), hw), &cols).expect("cols shape");
            for (o, b) in self.bias.value.iter().enumerate() {
                dst[o * hw..(o + 1) * hw].fill(*b);
            }
            let mut y = ArrayViewMut2::from_shape((self.out_ch, hw), dst).expect("out shape");
            general_mat_mul(1.0, &wmat, &cols, 1.0, &mut y);
        });
        out
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    pub fn backward(&mut self, x: &Tensor, dy: &Tensor, exec: Execution) -> Tensor {
        let (n, c, h, w) = x.dim();
        let hw = h * w;
        let x = x.as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        let dy = dy.as_standard_layout();
        let dys = dy.as_slice().expect("standard layout");
        let ckk = self.patch_len();
        let (out_ch, k) = (self.out_ch, self.k);
        let wmat = ArrayView2::from_shape((out_ch, ckk), &self.weight.value).expect("weight shape");

        let per_sample = exec.map_range(n, |i| {
            let cols = self.patches(&xs[i * c * hw..(i + 1) * c * hw], h, w);
            let cols = ArrayView2::from_shape((ckk, hw), &cols).expect("cols shape");
            let g = ArrayView2::from_shape((out_ch, hw), &dys[i * out_ch * hw..(i + 1) * out_ch * hw])
                .expect("dy shape");
            let dw = g.dot(&cols.t());
            let db: Vec<f32> = g.rows().into_iter().map(|r| r.sum()).collect();
            let dcols = wmat.t().dot(&g);
            let dcols = dcols.as_standard_layout();
            let dcols = dcols.as_slice().expect("standard layout");
            let dx = if k == 1 {
                dcols.to_vec()
            } else {
                let mut dx = vec![0.0; c * hw];
                col2im(dcols, c, h, w, k, &mut dx);
                dx
            };
            (dw, db, dx)
        });

        let mut dx = Tensor::zeros((n, c, h, w));
        let dxs = dx.as_slice_mut().expect("fresh tensor");
        for (i, (dw, db, dxi)) in per_sample.into_iter().enumerate() {
            for (g, v) in self.weight.grad.iter_mut().zip(dw.iter()) {
                *g += v;
            }
            for (g, v) in self.bias.grad.iter_mut().zip(&db) {
                *g += v;
            }
            dxs[i * c * hw..(i + 1) * c * hw].copy_from_slice(&dxi);
        }
        dx
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::{dot, random_tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct 7-loop convolution, the reference for the GEMM path.
    fn naive(conv: &Conv2d, x: &Tensor) -> Tensor {
        let (n, c, h, w) = x.dim();
        let k = conv.k;
        let p = (k / 2) as isize;
        let mut y = Tensor::zeros((n, conv.out_ch, h, w));
        for b in 0..n {
            for o in 0..conv.out_ch {
                for yy in 0..h {
                    for xx in 0..w {
                        let mut acc = conv.bias.value[o] as f64;
                        for ci in 0..c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let sy = yy as isize + ky as isize - p;
                                    let sx = xx as isize + kx as isize - p;
                                    if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                        continue;
                                    }
                                    let wi = o * c * k * k + (ci * k + ky) * k + kx;
                                    acc += conv.weight.value[wi] as f64
                                        * x[[b, ci, sy as usize, sx as usize]] as f64;
                                }
                            }
                        }
                        y[[b, o, yy, xx]] = acc as f32;
                    }
                }
            }
        }
        y
    }

    #[test]
    fn gemm_path_matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in [1, 3, 5] {
            let mut conv = Conv2d::new("c", 3, 4, k, &mut rng);
            conv.bias.value = vec![0.1, -0.2, 0.3, 0.0];
            let x = random_tensor((2, 3, 5, 7), 11);
            let fast = conv.forward(&x, Execution::default());
            let slow = naive(&conv, &x);
            let err = (&fast - &slow).mapv(f32::abs).fold(0.0f32, |a, &b| a.max(b));
            assert!(err < 1e-5, "k={k}: {err}");
        }
    }

    #[test]
    fn sequential_and_parallel_agree_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut a = Conv2d::new("c", 2, 3, 3, &mut rng);
        let mut b = a.clone();
        let x = random_tensor((4, 2, 6, 6), 1);
        let dy = random_tensor((4, 3, 6, 6), 2);
        assert_eq!(a.forward(&x, Execution::Sequential), b.forward(&x, Execution::Parallel));
        let da = a.backward(&x, &dy, Execution::Sequential);
        let db = b.backward(&x, &dy, Execution::Parallel);
        assert_eq!(da, db);
        assert_eq!(a.weight.grad, b.weight.grad);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut conv = Conv2d::new("c", 2, 3, 3, &mut rng);
        let x = random_tensor((2, 2, 4, 5), 7);
        let probe = random_tensor((2, 3, 4, 5), 8);
        let dx = conv.backward(&x, &probe, Execution::default());
        let f = |conv: &Conv2d, x: &Tensor| dot(&conv.forward(x, Execution::Sequential), &probe);
        let h = 1e-2f32;
        for idx in [[0, 0, 0, 0], [1, 1, 2, 3], [0, 1, 3, 4]] {
            let mut xp = x.clone();
            xp[idx] += h;
            let mut xm = x.clone();
            xm[idx] -= h;
            let fd = (f(&conv, &xp) - f(&conv, &xm)) / (2.0 * h as f64);
            assert!((fd - dx[idx] as f64).abs() < 1e-3, "{fd} vs {}", dx[idx]);
        }
        for wi in [0, 7, 17, 53] {
            let mut cp = conv.clone();
            cp.weight.value[wi] += h;
            let mut cm = conv.clone();
            cm.weight.value[wi] -= h;
            let fd = (f(&cp, &x) - f(&cm, &x)) / (2.0 * h as f64);
            assert!((fd - conv.weight.grad[wi] as f64).abs() < 1e-3);
        }
        let fd_b = probe.index_axis(ndarray::Axis(1), 1).sum() as f64;
        assert!((fd_b - conv.bias.grad[1] as f64).abs() < 1e-3);
    }
}
