use serde::{Deserialize, Serialize};

use super::Param;

/// SGD with heavy-ball momentum and L2 weight decay:
/// `v ← μ·v + (g + λ·w)`, `w ← w − lr·v`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Sgd {
    pub momentum: f32,
    pub weight_decay: f32,
    pub velocity: Vec<Vec<f32>>,
}

impl Sgd {
    pub fn new(momentum: f32, weight_decay: f32) -> Self {
        Self {
            momentum,
            weight_decay,
            velocity: Vec::new(),
        }
    }

    /// Applies one update and clears the gradients.
    pub fn step(&mut self, params: &mut [&mut Param], lr: f32) {
        if self.velocity.len() != params.len() {
            self.velocity = params.iter().map(|p| vec![0.0; p.len()]).collect();
        }
        for (p, v) in params.iter_mut().zip(&mut self.velocity) {
            for ((w, g), vel) in p.value.iter_mut().zip(&p.grad).zip(v.iter_mut()) {
                *vel = self.momentum * *vel + g + self.weight_decay * *w;
                *w -= lr * *vel;
            }
            p.zero_grad();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn momentum_accumulates() {
        let mut p = Param::zeros("w", &[1]);
        let mut opt = Sgd::new(0.9, 0.0);
        p.grad[0] = 1.0;
        opt.step(&mut [&mut p], 0.1);
        assert!((p.value[0] + 0.1).abs() < 1e-7);
        assert_eq!(p.grad[0], 0.0);
        p.grad[0] = 1.0;
        opt.step(&mut [&mut p], 0.1);
        assert!((p.value[0] + 0.1 + 0.19).abs() < 1e-6);
    }
}
