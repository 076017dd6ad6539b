//! The DOA classification network: three conv stages (conv -> batch norm ->
//! max pool -> dropout -> leaky ReLU), two hidden dense layers and a linear
//! 72-class output.

use rand::Rng;

use crate::error::Result;
use crate::features::GccFeatureMap;
use crate::nn::config::ModelConfig;
use crate::nn::layers::{
    bn_backward, bn_forward, conv_backward, conv_forward, dense_backward, dense_forward,
    dropout_forward, leaky_backward, leaky_forward, pool_backward, pool_forward, softmax_rows,
    BnCache,
};
use crate::rng::rng as seed_rng;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnParams {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub cfg: ModelConfig,
    pub conv: Vec<ConvParams>,
    pub bn: Vec<BnParams>,
    /// fc1, fc2, output
    pub dense: Vec<DenseParams>,
}

/// Momentum of the batch-norm running statistics.
pub const BN_MOMENTUM: f64 = 0.99;

impl Model {
    /// Learnable tensors in their declared (serialization) order.
    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for s in 0..self.conv.len() {
            names.push(format!("conv{}.w", s + 1));
            names.push(format!("conv{}.b", s + 1));
            names.push(format!("bn{}.gamma", s + 1));
            names.push(format!("bn{}.beta", s + 1));
        }
        for (i, label) in ["fc1", "fc2", "out"].iter().enumerate().take(self.dense.len()) {
            let _ = i;
            names.push(format!("{label}.w"));
            names.push(format!("{label}.b"));
        }
        names
    }

    pub fn visit_params<'a>(&'a self, mut f: impl FnMut(&'a [f64])) {
        for s in 0..self.conv.len() {
            f(&self.conv[s].w);
            f(&self.conv[s].b);
            f(&self.bn[s].gamma);
            f(&self.bn[s].beta);
        }
        for d in &self.dense {
            f(&d.w);
            f(&d.b);
        }
    }

    pub fn visit_params_mut(&mut self, mut f: impl FnMut(&mut Vec<f64>)) {
        for s in 0..self.conv.len() {
            f(&mut self.conv[s].w);
            f(&mut self.conv[s].b);
            f(&mut self.bn[s].gamma);
            f(&mut self.bn[s].beta);
        }
        for d in &mut self.dense {
            f(&mut d.w);
            f(&mut d.b);
        }
    }
}

/// Sum of learnable parameters (weights, biases, batch-norm scale/shift;
/// running statistics excluded).
pub fn param_count(model: &Model) -> usize {
    let mut n = 0;
    model.visit_params(|t| n += t.len());
    n
}

/// He-uniform initialization scaled by fan-in; biases zero, batch-norm
/// scale 1 / shift 0. Deterministic per seed.
pub fn model_init(cfg: &ModelConfig, seed: u64) -> Result<Model> {
    cfg.validate()?;
    let mut rng = seed_rng(seed);
    let k2 = cfg.kernel * cfg.kernel;
    let mut conv = Vec::new();
    let mut bn = Vec::new();
    let mut cin = cfg.input_channels;
    for &cout in &cfg.conv_channels {
        let fan_in = cin * k2;
        let limit = (6.0 / fan_in as f64).sqrt();
        let w = (0..cout * cin * k2)
            .map(|_| rng.gen_range(-limit..limit))
            .collect();
        conv.push(ConvParams {
            w,
            b: vec![0.0; cout],
        });
        bn.push(BnParams {
            gamma: vec![1.0; cout],
            beta: vec![0.0; cout],
            running_mean: vec![0.0; cout],
            running_var: vec![1.0; cout],
        });
        cin = cout;
    }
    let mut dense = Vec::new();
    let mut width = cfg.conv_channels[2];
    let outs = [cfg.fc_widths[0], cfg.fc_widths[1], cfg.classes];
    for &n_out in &outs {
        let limit = (6.0 / width as f64).sqrt();
        let w = (0..n_out * width)
            .map(|_| rng.gen_range(-limit..limit))
            .collect();
        dense.push(DenseParams {
            w,
            b: vec![0.0; n_out],
        });
        width = n_out;
    }
    Ok(Model {
        cfg: cfg.clone(),
        conv,
        bn,
        dense,
    })
}

struct StageCache {
    x_in: Vec<f64>,
    bn: BnCache,
    pool_argmax: Vec<usize>,
    dropout_mask: Option<Vec<f64>>,
    /// values entering the leaky ReLU
    pre_act: Vec<f64>,
}

pub struct ForwardCache {
    stages: Vec<StageCache>,
    flat: Vec<f64>,
    fc_pre: Vec<Vec<f64>>,  // pre-activations of fc1, fc2
    fc_act: Vec<Vec<f64>>,  // activations of fc1, fc2
    batch: usize,
}

impl ForwardCache {
    /// Per-channel batch statistics of each conv stage (for running-stat
    /// updates during training).
    pub fn bn_stats(&self) -> Vec<(&[f64], &[f64])> {
        self.stages
            .iter()
            .map(|s| (s.bn.mean.as_slice(), s.bn.var.as_slice()))
            .collect()
    }
}

/// Forward pass over a batch of flattened inputs ([b][c][h][w], c = 24,
/// h = w = 15). Training mode uses batch statistics and dropout; inference
/// uses running statistics and no dropout.
pub fn forward<R: Rng>(
    model: &Model,
    inputs: &[f64],
    batch: usize,
    training: bool,
    rng: &mut R,
) -> (Vec<f64>, ForwardCache) {
    let cfg = &model.cfg;
    let extents = cfg.stage_extents();
    let mut x = inputs.to_vec();
    let mut cin = cfg.input_channels;
    let mut stages = Vec::with_capacity(3);
    for s in 0..3 {
        let cout = cfg.conv_channels[s];
        let hw = extents[s];
        let hw_out = extents[s + 1];
        let mut conv_out = vec![0.0; batch * cout * hw * hw];
        conv_forward(
            &x,
            &model.conv[s].w,
            &model.conv[s].b,
            batch,
            cin,
            cout,
            hw,
            cfg.kernel,
            &mut conv_out,
        );
        let mut bn_out = vec![0.0; conv_out.len()];
        let stats = if training {
            None
        } else {
            Some((
                model.bn[s].running_mean.as_slice(),
                model.bn[s].running_var.as_slice(),
            ))
        };
        let bn_cache = bn_forward(
            &conv_out,
            &model.bn[s].gamma,
            &model.bn[s].beta,
            batch,
            cout,
            hw * hw,
            stats,
            &mut bn_out,
        );
        let mut pooled = vec![0.0; batch * cout * hw_out * hw_out];
        let mut argmax = vec![0usize; pooled.len()];
        pool_forward(&bn_out, batch, cout, hw, cfg.pools[s], &mut pooled, &mut argmax);
        let dropout_mask = if training && cfg.dropout_rate > 0.0 {
            Some(dropout_forward(&mut pooled, cfg.dropout_rate, rng))
        } else {
            None
        };
        let pre_act = pooled.clone();
        leaky_forward(&mut pooled, cfg.leaky_slope);
        stages.push(StageCache {
            x_in: x,
            bn: bn_cache,
            pool_argmax: argmax,
            dropout_mask,
            pre_act,
        });
        x = pooled;
        cin = cout;
    }

    // flatten: final spatial extent is 1x1, so x is already [b][c]
    let flat = x;
    let mut fc_pre = Vec::with_capacity(2);
    let mut fc_act = Vec::with_capacity(2);
    let mut cur = flat.clone();
    let mut width = cfg.conv_channels[2];
    for d in 0..2 {
        let n_out = cfg.fc_widths[d];
        let mut y = vec![0.0; batch * n_out];
        dense_forward(&cur, &model.dense[d].w, &model.dense[d].b, batch, width, n_out, &mut y);
        fc_pre.push(y.clone());
        leaky_forward(&mut y, cfg.leaky_slope);
        fc_act.push(y.clone());
        cur = y;
        width = n_out;
    }
    let mut logits = vec![0.0; batch * cfg.classes];
    dense_forward(
        &cur,
        &model.dense[2].w,
        &model.dense[2].b,
        batch,
        width,
        cfg.classes,
        &mut logits,
    );
    (
        logits,
        ForwardCache {
            stages,
            flat,
            fc_pre,
            fc_act,
            batch,
        },
    )
}

/// Gradients for every learnable tensor, in declared order.
pub struct Grads {
    pub tensors: Vec<Vec<f64>>,
}

/// A training batch: flattened inputs and class labels.
pub struct Batch {
    pub inputs: Vec<f64>,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn from_maps(maps: &[(GccFeatureMap, usize)]) -> Batch {
        let mut inputs = Vec::with_capacity(maps.len() * INPUT_LEN);
        let mut labels = Vec::with_capacity(maps.len());
        for (m, label) in maps {
            inputs.extend_from_slice(&map_to_input(m));
            labels.push(*label);
        }
        Batch { inputs, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub const INPUT_LEN: usize = 24 * 15 * 15;

/// Reorders a feature map ([k][l][lag]) into the network input layout
/// ([lag][k][l]): the 24 lags are the input channels.
pub fn map_to_input(map: &GccFeatureMap) -> Vec<f64> {
    let mut out = vec![0.0; INPUT_LEN];
    for k in 0..15 {
        for l in 0..15 {
            for lag in 0..24 {
                out[(lag * 15 + k) * 15 + l] = map.values[(k * 15 + l) * 24 + lag];
            }
        }
    }
    out
}

/// Mean softmax cross-entropy over the batch together with exact analytic
/// gradients for every learnable parameter. Dropout can be disabled for
/// gradient verification.
pub fn loss_and_grads<R: Rng>(
    model: &Model,
    batch: &Batch,
    rng: &mut R,
    use_dropout: bool,
) -> (f64, Grads, ForwardCache) {
    let cfg = &model.cfg;
    let b = batch.labels.len();
    let model_eff;
    let model_ref = if use_dropout {
        model
    } else {
        model_eff = Model {
            cfg: ModelConfig {
                dropout_rate: 0.0,
                ..cfg.clone()
            },
            conv: model.conv.clone(),
            bn: model.bn.clone(),
            dense: model.dense.clone(),
        };
        &model_eff
    };
    let (mut logits, cache) = forward(model_ref, &batch.inputs, b, true, rng);

    // softmax + cross entropy
    let classes = cfg.classes;
    softmax_rows(&mut logits, b, classes);
    let mut loss = 0.0;
    for (i, &label) in batch.labels.iter().enumerate() {
        loss -= (logits[i * classes + label] + 1e-300).ln();
    }
    loss /= b as f64;
    let mut dlogits = logits;
    for (i, &label) in batch.labels.iter().enumerate() {
        dlogits[i * classes + label] -= 1.0;
    }
    for v in dlogits.iter_mut() {
        *v /= b as f64;
    }

    let grads = backward(model_ref, &cache, &dlogits);
    (loss, grads, cache)
}

fn backward(model: &Model, cache: &ForwardCache, dlogits: &[f64]) -> Grads {
    let cfg = &model.cfg;
    let b = cache.batch;
    let extents = cfg.stage_extents();

    // dense stack, reverse order
    let mut d_out_w = vec![0.0; model.dense[2].w.len()];
    let mut d_out_b = vec![0.0; model.dense[2].b.len()];
    let mut d_fc2_act = vec![0.0; b * cfg.fc_widths[1]];
    dense_backward(
        &cache.fc_act[1],
        &model.dense[2].w,
        dlogits,
        b,
        cfg.fc_widths[1],
        cfg.classes,
        &mut d_fc2_act,
        &mut d_out_w,
        &mut d_out_b,
    );
    leaky_backward(&cache.fc_pre[1], &mut d_fc2_act, cfg.leaky_slope);
    let mut d_fc2_w = vec![0.0; model.dense[1].w.len()];
    let mut d_fc2_b = vec![0.0; model.dense[1].b.len()];
    let mut d_fc1_act = vec![0.0; b * cfg.fc_widths[0]];
    dense_backward(
        &cache.fc_act[0],
        &model.dense[1].w,
        &d_fc2_act,
        b,
        cfg.fc_widths[0],
        cfg.fc_widths[1],
        &mut d_fc1_act,
        &mut d_fc2_w,
        &mut d_fc2_b,
    );
    leaky_backward(&cache.fc_pre[0], &mut d_fc1_act, cfg.leaky_slope);
    let mut d_fc1_w = vec![0.0; model.dense[0].w.len()];
    let mut d_fc1_b = vec![0.0; model.dense[0].b.len()];
    let mut d_flat = vec![0.0; cache.flat.len()];
    dense_backward(
        &cache.flat,
        &model.dense[0].w,
        &d_fc1_act,
        b,
        cfg.conv_channels[2],
        cfg.fc_widths[0],
        &mut d_flat,
        &mut d_fc1_w,
        &mut d_fc1_b,
    );

    // conv stages, reverse
    let mut d_stage_out = d_flat;
    let mut conv_grads: Vec<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> = Vec::with_capacity(3);
    for s in (0..3).rev() {
        let stage = &cache.stages[s];
        let cout = cfg.conv_channels[s];
        let cin = if s == 0 {
            cfg.input_channels
        } else {
            cfg.conv_channels[s - 1]
        };
        let hw = extents[s];
        // leaky
        let mut d_pool = d_stage_out;
        leaky_backward(&stage.pre_act, &mut d_pool, cfg.leaky_slope);
        // dropout
        if let Some(mask) = &stage.dropout_mask {
            for (g, &m) in d_pool.iter_mut().zip(mask.iter()) {
                *g *= m;
            }
        }
        // pool
        let mut d_bn_out = vec![0.0; b * cout * hw * hw];
        pool_backward(&d_pool, &stage.pool_argmax, &mut d_bn_out);
        // batch norm
        let mut d_conv_out = vec![0.0; d_bn_out.len()];
        let mut d_gamma = vec![0.0; cout];
        let mut d_beta = vec![0.0; cout];
        bn_backward(
            &stage.bn,
            &model.bn[s].gamma,
            &d_bn_out,
            b,
            cout,
            hw * hw,
            &mut d_conv_out,
            &mut d_gamma,
            &mut d_beta,
        );
        // conv
        let mut d_x = vec![0.0; b * cin * hw * hw];
        let mut d_w = vec![0.0; model.conv[s].w.len()];
        let mut d_b = vec![0.0; model.conv[s].b.len()];
        conv_backward(
            &stage.x_in,
            &model.conv[s].w,
            &d_conv_out,
            b,
            cin,
            cout,
            hw,
            cfg.kernel,
            &mut d_x,
            &mut d_w,
            &mut d_b,
        );
        conv_grads.push((d_w, d_b, d_gamma, d_beta));
        d_stage_out = d_x;
    }
    conv_grads.reverse();

    let mut tensors = Vec::with_capacity(18);
    for (d_w, d_b, d_gamma, d_beta) in conv_grads {
        tensors.push(d_w);
        tensors.push(d_b);
        tensors.push(d_gamma);
        tensors.push(d_beta);
    }
    tensors.push(d_fc1_w);
    tensors.push(d_fc1_b);
    tensors.push(d_fc2_w);
    tensors.push(d_fc2_b);
    tensors.push(d_out_w);
    tensors.push(d_out_b);
    Grads { tensors }
}

/// One optimizer step on a batch: forward/backward with dropout, running
/// batch-norm statistics update, Adam update. Returns the batch loss.
pub fn train_step<R: Rng>(
    model: &mut Model,
    adam: &mut crate::nn::adam::AdamState,
    batch: &Batch,
    rng: &mut R,
) -> f64 {
    let (loss, grads, cache) = loss_and_grads(model, batch, rng, true);
    let stats = cache.bn_stats();
    for (s, (mean, var)) in stats.iter().enumerate() {
        let bn = &mut model.bn[s];
        for c in 0..bn.running_mean.len() {
            bn.running_mean[c] = BN_MOMENTUM * bn.running_mean[c] + (1.0 - BN_MOMENTUM) * mean[c];
            bn.running_var[c] = BN_MOMENTUM * bn.running_var[c] + (1.0 - BN_MOMENTUM) * var[c];
        }
    }
    adam.apply(model, &grads);
    loss
}

/// Class prediction for one feature map (inference mode); ties break toward
/// the lowest index.
pub fn predict(model: &Model, map: &GccFeatureMap) -> usize {
    let input = map_to_input(map);
    let mut dummy = seed_rng(0);
    let (logits, _) = forward(model, &input, 1, false, &mut dummy);
    argmax_lowest(&logits)
}

pub fn argmax_lowest(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best
}
