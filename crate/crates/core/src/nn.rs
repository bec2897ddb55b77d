//! Dense ReLU networks with explicit forward/backward passes.
//!
//! Batched activations are stored column-per-sample: an input batch for a net
//! with `layer_sizes = [in, h, out]` is an `in x n` matrix. Layer `k` holds a
//! weight matrix of shape `(layer_sizes[k+1], layer_sizes[k])` and a bias of
//! length `layer_sizes[k+1]`. Hidden layers use ReLU, the output layer is linear.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{contract, Result};

/// Anything that owns trainable parameters laid out as named flat blocks.
///
/// Block order is stable for the lifetime of a model and matches the order of
/// the [`GradientBuffer`] blocks produced by the model's backward passes.
pub trait Parameterized {
    fn param_blocks(&self) -> Vec<(String, &[f64])>;
    fn param_blocks_mut(&mut self) -> Vec<(String, &mut [f64])>;

    /// Re-establish parameter constraints (clamps) after an optimizer step.
    fn project(&mut self) {}

    fn num_params(&self) -> usize {
        self.param_blocks().iter().map(|(_, b)| b.len()).sum()
    }
}

/// One gradient slot per parameter, block-aligned with a [`Parameterized`] model.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBuffer {
    blocks: Vec<Vec<f64>>,
}

impl GradientBuffer {
    pub fn zeros_like<M: Parameterized + ?Sized>(model: &M) -> Self {
        Self { blocks: model.param_blocks().iter().map(|(_, b)| vec![0.0; b.len()]).collect() }
    }

    pub fn from_blocks(blocks: Vec<Vec<f64>>) -> Self {
        Self { blocks }
    }

    pub fn blocks(&self) -> &[Vec<f64>] {
        &self.blocks
    }

    pub fn block_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.blocks[i]
    }

    pub fn into_blocks(self) -> Vec<Vec<f64>> {
        self.blocks
    }

    pub fn push_block(&mut self, block: Vec<f64>) {
        self.blocks.push(block);
    }

    pub fn zero(&mut self) {
        for b in &mut self.blocks {
            b.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn is_all_zero(&self) -> bool {
        self.blocks.iter().flatten().all(|&g| g == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks.iter().flatten().fold(0.0_f64, |m, g| m.max(g.abs()))
    }

    /// Checks that block count and sizes mirror `model` exactly.
    pub fn matches<M: Parameterized + ?Sized>(&self, model: &M) -> bool {
        let params = model.param_blocks();
        params.len() == self.blocks.len() && params.iter().zip(&self.blocks).all(|((_, p), g)| p.len() == g.len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    sizes: Vec<usize>,
    layers: Vec<Layer>,
}

/// Activations recorded by [`DenseNet::forward_cached`], consumed by
/// [`DenseNet::backward`]. `inputs[k]` is the input to layer `k`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    sizes: Vec<usize>,
    inputs: Vec<DMatrix<f64>>,
}

impl ForwardCache {
    pub fn batch_len(&self) -> usize {
        self.inputs.first().map_or(0, |m| m.ncols())
    }
}

fn validate_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(contract("a network needs at least input and output sizes"));
    }
    if sizes.contains(&0) {
        return Err(contract(format!("layer sizes must be positive, got {sizes:?}")));
    }
    Ok(())
}

impl DenseNet {
    /// He-uniform weights (`U(-sqrt(6/fan_in), sqrt(6/fan_in))`) and zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        validate_sizes(sizes)?;
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / fan_in as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
                // Row-major fill so the draw order is independent of storage layout.
                let mut weight = DMatrix::zeros(fan_out, fan_in);
                for r in 0..fan_out {
                    for c in 0..fan_in {
                        weight[(r, c)] = dist.sample(rng);
                    }
                }
                Layer { weight, bias: DVector::zeros(fan_out) }
            })
            .collect();
        Ok(Self { sizes: sizes.to_vec(), layers })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        validate_sizes(sizes)?;
        let layers = sizes
            .windows(2)
            .map(|w| Layer { weight: DMatrix::zeros(w[1], w[0]), bias: DVector::zeros(w[1]) })
            .collect();
        Ok(Self { sizes: sizes.to_vec(), layers })
    }

    /// Builds a net from explicit layers; shapes must chain.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        let first = layers.first().ok_or_else(|| contract("a network needs at least one layer"))?;
        let mut sizes = vec![first.weight.ncols()];
        for l in &layers {
            if l.weight.ncols() != *sizes.last().unwrap() || l.bias.len() != l.weight.nrows() {
                return Err(contract("layer shapes do not chain"));
            }
            sizes.push(l.weight.nrows());
        }
        validate_sizes(&sizes)?;
        Ok(Self { sizes, layers })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(contract(format!(
                "input length {} does not match net input size {}",
                input.len(),
                self.input_dim()
            )));
        }
        let mut x = DVector::from_column_slice(input);
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = &layer.weight * &x + &layer.bias;
            if k < last {
                relu_in_place(z.as_mut_slice());
            }
            x = z;
        }
        Ok(x.as_slice().to_vec())
    }

    pub fn forward_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_batch(x)?;
        let mut a = x.clone();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            a = affine(layer, &a);
            if k < last {
                relu_in_place(a.as_mut_slice());
            }
        }
        Ok(a)
    }

    pub fn forward_cached(&self, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, ForwardCache)> {
        self.check_batch(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut a = x.clone();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = affine(layer, &a);
            if k < last {
                relu_in_place(z.as_mut_slice());
            }
            inputs.push(a);
            a = z;
        }
        Ok((a, ForwardCache { sizes: self.sizes.clone(), inputs }))
    }

    /// Gradients of `sum(upstream .* output)` with respect to every parameter
    /// and the input batch.
    pub fn backward(&self, cache: &ForwardCache, upstream: &DMatrix<f64>) -> Result<(GradientBuffer, DMatrix<f64>)> {
        if cache.sizes != self.sizes || cache.inputs.len() != self.layers.len() {
            return Err(contract("forward cache does not belong to this network"));
        }
        let n = cache.batch_len();
        if upstream.nrows() != self.output_dim() || upstream.ncols() != n {
            return Err(contract(format!(
                "upstream gradient is {}x{}, expected {}x{}",
                upstream.nrows(),
                upstream.ncols(),
                self.output_dim(),
                n
            )));
        }
        let mut blocks = vec![Vec::new(); 2 * self.layers.len()];
        let mut g = upstream.clone();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let input = &cache.inputs[k];
            let dw = &g * input.transpose();
            let db: Vec<f64> = g.column_sum().as_slice().to_vec();
            blocks[2 * k] = dw.as_slice().to_vec();
            blocks[2 * k + 1] = db;
            let mut gin = layer.weight.transpose() * &g;
            if k > 0 {
                // input to layer k is relu(z_{k-1}); zero where the unit was inactive
                for (gi, &ai) in gin.as_mut_slice().iter_mut().zip(input.as_slice()) {
                    if ai <= 0.0 {
                        *gi = 0.0;
                    }
                }
            }
            g = gin;
        }
        Ok((GradientBuffer::from_blocks(blocks), g))
    }

    fn check_batch(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.nrows() != self.input_dim() {
            return Err(contract(format!("batch has {} rows, net expects {}", x.nrows(), self.input_dim())));
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weight.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite()))
    }
}

fn affine(layer: &Layer, a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut z = &layer.weight * a;
    for mut col in z.column_iter_mut() {
        col += &layer.bias;
    }
    z
}

fn relu_in_place(xs: &mut [f64]) {
    for v in xs {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

impl Parameterized for DenseNet {
    fn param_blocks(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for (k, l) in self.layers.iter().enumerate() {
            out.push((format!("layer{k}.weight"), l.weight.as_slice()));
            out.push((format!("layer{k}.bias"), l.bias.as_slice()));
        }
        out
    }

    fn param_blocks_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for (k, l) in self.layers.iter_mut().enumerate() {
            out.push((format!("layer{k}.weight"), l.weight.as_mut_slice()));
            out.push((format!("layer{k}.bias"), l.bias.as_mut_slice()));
        }
        out
    }
}
