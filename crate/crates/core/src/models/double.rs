use ndarray::{s, Zip};

use super::{ModelError, Module};
use crate::nn::{concat_channels, sigmoid_inplace, split_channels, Param, Tensor};

/// Two encoder-decoders in sequence. The second sees the RGB input stacked
/// with the logistic of the first one's logits as a fourth channel.
#[derive(Clone, Debug)]
pub struct DoubleEncoderDecoder<A, B> {
    pub first: A,
    pub second: B,
}

/// Logits of both stages; both are supervised during training.
#[derive(Clone, Debug, PartialEq)]
pub struct DualLogits {
    pub first: Tensor,
    pub second: Tensor,
}

pub struct DoubleTape<TA, TB> {
    first: TA,
    second: TB,
    attention: Tensor,
    rgb_channels: usize,
}

impl<A, B> DoubleEncoderDecoder<A, B>
where
    A: Module<Output = Tensor>,
    B: Module<Output = Tensor>,
{
    pub fn new(first: A, second: B) -> Result<Self, ModelError> {
        if second.in_channels() != first.in_channels() + 1 {
            return Err(ModelError::SecondStageChannels(second.in_channels()));
        }
        Ok(Self { first, second })
    }

    /// First-stage logits and the stacked input the second stage receives.
    pub fn stacked_input(&self, x: &Tensor) -> Result<(Tensor, Tensor), ModelError> {
        let logits_1 = self.first.forward(x)?;
        let mut attention = logits_1.clone();
        sigmoid_inplace(&mut attention);
        Ok((logits_1, concat_channels(x, &attention)))
    }
}

impl<A, B> Module for DoubleEncoderDecoder<A, B>
where
    A: Module<Output = Tensor>,
    B: Module<Output = Tensor>,
{
    type Output = DualLogits;
    type Tape = DoubleTape<A::Tape, B::Tape>;

    fn in_channels(&self) -> usize {
        self.first.in_channels()
    }

    fn spatial_divisor(&self) -> usize {
        let (a, b) = (self.first.spatial_divisor(), self.second.spatial_divisor());
        a.max(b)
    }

    fn forward_train(&self, x: &Tensor) -> Result<(DualLogits, Self::Tape), ModelError> {
        self.check_input(x)?;
        let (logits_1, t1) = self.first.forward_train(x)?;
        let mut attention = logits_1.clone();
        sigmoid_inplace(&mut attention);
        let stacked = concat_channels(x, &attention);
        let (logits_2, t2) = self.second.forward_train(&stacked)?;
        Ok((
            DualLogits {
                first: logits_1,
                second: logits_2,
            },
            DoubleTape {
                first: t1,
                second: t2,
                attention,
                rgb_channels: x.dim().1,
            },
        ))
    }

    /// Gradients reach the first network both from its own supervision and
    /// through the attention channel of the second.
    fn backward(&mut self, t: Self::Tape, grad: &DualLogits) -> Tensor {
        let d_stacked = self.second.backward(t.second, &grad.second);
        let (dx_direct, d_attention) = split_channels(&d_stacked, t.rgb_channels);
        let mut d_logits_1 = grad.first.clone();
        Zip::from(&mut d_logits_1)
            .and(&d_attention)
            .and(&t.attention)
            .for_each(|g, &da, &s| *g += da * s * (1.0 - s));
        let dx_first = self.first.backward(t.first, &d_logits_1);
        dx_direct + dx_first
    }

    fn params(&self) -> Vec<&Param> {
        let mut v = self.first.params();
        v.extend(self.second.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.first.params_mut();
        v.extend(self.second.params_mut());
        v
    }

    fn set_exec(&mut self, exec: crate::exec::Execution) {
        self.first.set_exec(exec);
        self.second.set_exec(exec);
    }
}

/// Parameter-free network that returns one of its input channels as logits.
/// Used to inspect what a stage receives.
#[derive(Clone, Copy, Debug)]
pub struct ChannelProbe {
    pub in_ch: usize,
    pub channel: usize,
}

impl Module for ChannelProbe {
    type Output = Tensor;
    type Tape = (usize, usize, usize, usize);

    fn in_channels(&self) -> usize {
        self.in_ch
    }

    fn forward_train(&self, x: &Tensor) -> Result<(Tensor, Self::Tape), ModelError> {
        self.check_input(x)?;
        let c = self.channel;
        Ok((x.slice(s![.., c..c + 1, .., ..]).to_owned(), x.dim()))
    }

    fn backward(&mut self, dim: Self::Tape, grad: &Tensor) -> Tensor {
        let mut dx = Tensor::zeros(dim);
        let c = self.channel;
        dx.slice_mut(s![.., c..c + 1, .., ..]).assign(grad);
        dx
    }

    fn params(&self) -> Vec<&Param> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        Vec::new()
    }
}
