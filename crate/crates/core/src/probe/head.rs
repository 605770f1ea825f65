//! Probe on top of the layer stack: learnable layer weighting, pointwise
//! convolutions, temporal mean pooling and a dense classifier.

use alloc::format;
use alloc::vec::Vec;

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nn::{gelu, gelu_grad, softmax, Linear, LinearGrads};
use super::{LayerStack, LayerWeighting, ProbeConfig, ProbeError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeHead {
    pub weighting: LayerWeighting,
    /// Softmax logits, or the raw weights when unconstrained.
    pub layer_logits: Array1<f64>,
    /// Pointwise (kernel size 1) convolutions, each followed by GELU.
    pub conv: Vec<Linear>,
    /// Dense classifier; GELU between layers, none after the last.
    pub fc: Vec<Linear>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrads {
    pub layer_logits: Array1<f64>,
    pub conv: Vec<LinearGrads>,
    pub fc: Vec<LinearGrads>,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct HeadTrace {
    weights: Array1<f64>,
    /// Input of every conv layer (the aggregate first), then the last output.
    conv_inputs: Vec<Array2<f64>>,
    conv_pre: Vec<Array2<f64>>,
    fc_inputs: Vec<Array2<f64>>,
    fc_pre: Vec<Array2<f64>>,
}

impl ProbeHead {
    pub fn init<R: Rng + ?Sized>(config: &ProbeConfig, rng: &mut R) -> Result<Self, ProbeError> {
        config.validate()?;
        let layer_logits = match config.layer_weighting {
            LayerWeighting::Softmax => Array1::zeros(config.num_layers),
            LayerWeighting::Unconstrained => Array1::from_elem(config.num_layers, 1.0 / config.num_layers as f64),
        };
        let mut width = config.feature_dim;
        let mut conv = Vec::new();
        for &c in &config.conv_channels {
            conv.push(Linear::init(width, c, rng));
            width = c;
        }
        let mut fc = Vec::new();
        for &h in config.head_hidden.iter().chain(core::iter::once(&config.num_classes)) {
            fc.push(Linear::init(width, h, rng));
            width = h;
        }
        Ok(ProbeHead {
            weighting: config.layer_weighting,
            layer_logits,
            conv,
            fc,
        })
    }

    /// Mixing weights actually applied to the layers.
    pub fn layer_weights(&self) -> Array1<f64> {
        match self.weighting {
            LayerWeighting::Softmax => Array1::from(softmax(self.layer_logits.as_slice().expect("contiguous"))),
            LayerWeighting::Unconstrained => self.layer_logits.clone(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.fc.last().map_or(0, Linear::output_dim)
    }

    fn check(&self, stack: &LayerStack) -> Result<(), ProbeError> {
        if self.conv.is_empty() || self.fc.is_empty() {
            return Err(ProbeError::Uninitialized);
        }
        if stack.layers.len() != self.layer_logits.len() {
            return Err(ProbeError::DimensionMismatch(format!(
                "stack has {} layers, probe expects {}",
                stack.layers.len(),
                self.layer_logits.len()
            )));
        }
        if stack.feature_dim() != self.conv[0].input_dim() {
            return Err(ProbeError::DimensionMismatch(format!(
                "stack has {} features, probe expects {}",
                stack.feature_dim(),
                self.conv[0].input_dim()
            )));
        }
        Ok(())
    }

    /// Weighted sum of layers, `T x D`.
    pub fn aggregate(stack: &LayerStack, weights: &Array1<f64>) -> Result<Array2<f64>, ProbeError> {
        if weights.len() != stack.layers.len() {
            return Err(ProbeError::DimensionMismatch(format!(
                "{} weights for {} layers",
                weights.len(),
                stack.layers.len()
            )));
        }
        let mut out = Array2::zeros(stack.layers[0].raw_dim());
        for (w, layer) in weights.iter().zip(&stack.layers) {
            out.scaled_add(*w, layer);
        }
        Ok(out)
    }

    fn run_conv(&self, mut x: Array2<f64>, trace: Option<&mut HeadTrace>) -> Array2<f64> {
        let mut inputs = Vec::new();
        let mut pres = Vec::new();
        for layer in &self.conv {
            let pre = layer.forward(&x);
            let next = pre.mapv(gelu);
            if trace.is_some() {
                inputs.push(x);
                pres.push(pre);
            }
            x = next;
        }
        if let Some(t) = trace {
            t.conv_inputs = inputs;
            t.conv_pre = pres;
        }
        x
    }

    fn run_fc(&self, mut x: Array2<f64>, trace: Option<&mut HeadTrace>) -> Array2<f64> {
        let last = self.fc.len() - 1;
        let mut inputs = Vec::new();
        let mut pres = Vec::new();
        for (i, layer) in self.fc.iter().enumerate() {
            let pre = layer.forward(&x);
            let next = if i == last { pre.clone() } else { pre.mapv(gelu) };
            if trace.is_some() {
                inputs.push(x);
                pres.push(pre);
            }
            x = next;
        }
        if let Some(t) = trace {
            t.fc_inputs = inputs;
            t.fc_pre = pres;
        }
        x
    }

    pub fn forward(&self, stack: &LayerStack) -> Result<Vec<f64>, ProbeError> {
        self.check(stack)?;
        let agg = Self::aggregate(stack, &self.layer_weights())?;
        let conv = self.run_conv(agg, None);
        let pooled = conv.mean_axis(Axis(0)).expect("T >= 1").insert_axis(Axis(0));
        Ok(self.run_fc(pooled, None).row(0).to_vec())
    }

    pub fn forward_traced(&self, stack: &LayerStack) -> Result<(Vec<f64>, HeadTrace), ProbeError> {
        self.check(stack)?;
        let weights = self.layer_weights();
        let agg = Self::aggregate(stack, &weights)?;
        let mut trace = HeadTrace {
            weights,
            conv_inputs: Vec::new(),
            conv_pre: Vec::new(),
            fc_inputs: Vec::new(),
            fc_pre: Vec::new(),
        };
        let conv = self.run_conv(agg, Some(&mut trace));
        let pooled = conv.mean_axis(Axis(0)).expect("T >= 1").insert_axis(Axis(0));
        let logits = self.run_fc(pooled, Some(&mut trace)).row(0).to_vec();
        Ok((logits, trace))
    }

    /// Padded batch forward. Padding frames never reach the pooled mean.
    pub fn forward_batch(&self, stacks: &[LayerStack]) -> Result<Vec<Vec<f64>>, ProbeError> {
        if stacks.is_empty() {
            return Ok(Vec::new());
        }
        for s in stacks {
            self.check(s)?;
        }
        let d = stacks[0].feature_dim();
        let t_max = stacks.iter().map(LayerStack::frames).max().expect("nonempty");
        let b = stacks.len();
        let weights = self.layer_weights();
        let mut agg = Array2::<f64>::zeros((b * t_max, d));
        for (i, s) in stacks.iter().enumerate() {
            let t = s.frames();
            let mut block = agg.slice_mut(s![i * t_max..i * t_max + t, ..]);
            for (w, layer) in weights.iter().zip(&s.layers) {
                block.scaled_add(*w, layer);
            }
        }
        let conv = self.run_conv(agg, None);
        let width = conv.ncols();
        let mut pooled = Array2::<f64>::zeros((b, width));
        for (i, s) in stacks.iter().enumerate() {
            let t = s.frames();
            let valid = conv.slice(s![i * t_max..i * t_max + t, ..]);
            pooled.row_mut(i).assign(&valid.mean_axis(Axis(0)).expect("T >= 1"));
        }
        let logits = self.run_fc(pooled, None);
        Ok(logits.rows().into_iter().map(|r| r.to_vec()).collect())
    }

    /// Returns the head gradients and `dL/d layer_k` for every layer.
    pub fn backward(&self, stack: &LayerStack, trace: &HeadTrace, dlogits: &[f64]) -> (HeadGrads, Vec<Array2<f64>>) {
        let last = self.fc.len() - 1;
        let mut g = Array2::from_shape_vec((1, dlogits.len()), dlogits.to_vec()).expect("row vector");
        let mut fc_grads = Vec::with_capacity(self.fc.len());
        for i in (0..self.fc.len()).rev() {
            if i != last {
                g *= &trace.fc_pre[i].mapv(gelu_grad);
            }
            let (dx, lg) = self.fc[i].backward(&trace.fc_inputs[i], &g);
            fc_grads.push(lg);
            g = dx;
        }
        fc_grads.reverse();

        // Mean pool: every frame receives 1/T of the pooled gradient.
        let t = stack.frames();
        let mut g = Array2::from_shape_fn((t, g.ncols()), |(_, c)| g[[0, c]] / t as f64);
        let mut conv_grads = Vec::with_capacity(self.conv.len());
        for i in (0..self.conv.len()).rev() {
            g *= &trace.conv_pre[i].mapv(gelu_grad);
            let (dx, lg) = self.conv[i].backward(&trace.conv_inputs[i], &g);
            conv_grads.push(lg);
            g = dx;
        }
        conv_grads.reverse();

        let dagg = g;
        let dweights: Array1<f64> = stack.layers.iter().map(|h| (h * &dagg).sum()).collect();
        let dlogit = match self.weighting {
            LayerWeighting::Softmax => {
                let w = &trace.weights;
                let mean = w.dot(&dweights);
                w * &(dweights - mean)
            }
            LayerWeighting::Unconstrained => dweights,
        };
        let dlayers = trace.weights.iter().map(|&w| &dagg * w).collect();
        (
            HeadGrads {
                layer_logits: dlogit,
                conv: conv_grads,
                fc: fc_grads,
            },
            dlayers,
        )
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_logits.len()
            + self.conv.iter().map(Linear::parameter_count).sum::<usize>()
            + self.fc.iter().map(Linear::parameter_count).sum::<usize>()
    }
}

impl HeadGrads {
    pub fn zeros_like(h: &ProbeHead) -> Self {
        HeadGrads {
            layer_logits: Array1::zeros(h.layer_logits.raw_dim()),
            conv: h.conv.iter().map(LinearGrads::zeros_like).collect(),
            fc: h.fc.iter().map(LinearGrads::zeros_like).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &HeadGrads) {
        self.layer_logits += &other.layer_logits;
        for (a, b) in self.conv.iter_mut().zip(&other.conv) {
            a.add_assign(b);
        }
        for (a, b) in self.fc.iter_mut().zip(&other.fc) {
            a.add_assign(b);
        }
    }
}
