//! Autoregressive density backbone.
//!
//! A single GRU cell rolled over the state's dimensions factorizes the joint
//! distribution into per-dimension conditionals. The parameter count depends
//! only on the candidate-state count L and hidden width H, never on the
//! dimension d: the recurrence carries position, and the dimension index is
//! not an input.
//!
//! Weight layout (three augmented blocks, each row = incoming weights ++ bias):
//! - `embed`  H x (L+1): one-hot of the previous value -> input features. The
//!   first dimension sees an all-zero one-hot, so its input is the bias row
//!   alone, which doubles as the learned start embedding.
//! - `gru`    3H x (2H+1): one fused gate matrix over [input; hidden]. Update
//!   and reset gates come from a first pass over [x; h]; the candidate comes
//!   from a second pass over [x; r*h] reading the last H rows.
//! - `head`   L x (H+1) for the categorical head (logits clamped to +-30), or
//!   3K x (H+1) for a mixture-density head (K weight logits, K means, K
//!   log-stds with stds clamped to [1e-3, 1e3]).

use crate::error::{Error, Result};
use crate::layout::{LayerSpec, ParamLayout};
use crate::optim::ParamSet;
use crate::rng::Stream;
use crate::table::ProbTable;
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;

pub const LOGIT_CLAMP: f64 = 30.0;
pub const LOG_STD_MIN: f64 = -6.907755278982137; // ln 1e-3
pub const LOG_STD_MAX: f64 = 6.907755278982137; // ln 1e3
const HALF_LN_TAU: f64 = 0.9189385332046727; // 0.5 * ln(2 pi)

#[derive(Debug, Clone, PartialEq)]
pub enum HeadKind {
    /// Distribution over `states_per_dim` discrete values per dimension.
    Categorical,
    /// Gaussian mixture per dimension for continuous states.
    Mdn { components: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackboneConfig {
    /// State dimension d.
    pub dim: usize,
    /// Candidate states per dimension L (categorical head).
    pub states_per_dim: usize,
    /// GRU hidden width H; the input embedding shares this width.
    pub hidden: usize,
    /// Order in which dimensions are processed: a permutation of 0..d.
    pub order: Vec<usize>,
    pub head: HeadKind,
}

impl BackboneConfig {
    pub fn categorical(dim: usize, states_per_dim: usize, hidden: usize) -> Result<BackboneConfig> {
        BackboneConfig::new(dim, states_per_dim, hidden, (0..dim).collect(), HeadKind::Categorical)
    }

    pub fn mdn(dim: usize, hidden: usize, components: usize) -> Result<BackboneConfig> {
        BackboneConfig::new(dim, 2, hidden, (0..dim).collect(), HeadKind::Mdn { components })
    }

    pub fn new(
        dim: usize,
        states_per_dim: usize,
        hidden: usize,
        order: Vec<usize>,
        head: HeadKind,
    ) -> Result<BackboneConfig> {
        if dim == 0 {
            return Err(Error::Config("dimension must be at least 1".into()));
        }
        if states_per_dim < 2 {
            return Err(Error::Config(format!("need at least 2 states per dim, got {states_per_dim}")));
        }
        if hidden == 0 {
            return Err(Error::Config("hidden width must be at least 1".into()));
        }
        if let HeadKind::Mdn { components } = head {
            if components < 1 {
                return Err(Error::Config("mixture needs at least 1 component".into()));
            }
        }
        let config = BackboneConfig { dim, states_per_dim, hidden, order, head };
        config.check_order(&config.order)?;
        Ok(config)
    }

    fn check_order(&self, order: &[usize]) -> Result<()> {
        let mut seen = vec![false; self.dim];
        if order.len() != self.dim {
            return Err(Error::Config(format!(
                "order has {} entries for dimension {}",
                order.len(),
                self.dim
            )));
        }
        for &o in order {
            if o >= self.dim || seen[o] {
                return Err(Error::Config(format!("invalid autoregressive order {order:?}")));
            }
            seen[o] = true;
        }
        Ok(())
    }

    /// Same architecture, new autoregressive order.
    pub fn permute_order(&self, order: Vec<usize>) -> Result<BackboneConfig> {
        self.check_order(&order)?;
        let mut out = self.clone();
        out.order = order;
        Ok(out)
    }

    /// Input one-hot width (categorical) or 1 (scalar input, MDN).
    fn input_width(&self) -> usize {
        match self.head {
            HeadKind::Categorical => self.states_per_dim,
            HeadKind::Mdn { .. } => 1,
        }
    }

    fn head_rows(&self) -> usize {
        match self.head {
            HeadKind::Categorical => self.states_per_dim,
            HeadKind::Mdn { components } => 3 * components,
        }
    }

    /// Canonical parameter layout; identical for every d at fixed (L, H).
    pub fn layout(&self) -> ParamLayout {
        let h = self.hidden;
        ParamLayout::new(vec![
            LayerSpec { name: "embed".into(), rows: h, cols: self.input_width(), has_bias: true },
            LayerSpec { name: "gru".into(), rows: 3 * h, cols: 2 * h, has_bias: true },
            LayerSpec { name: "head".into(), rows: self.head_rows(), cols: h, has_bias: true },
        ])
    }
}

/// Flat weight vector plus the layout that slices it.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneWeights {
    pub theta: Tensor,
    pub layout: ParamLayout,
}

impl BackboneWeights {
    pub fn zeros(config: &BackboneConfig) -> BackboneWeights {
        let layout = config.layout();
        BackboneWeights { theta: Tensor::zeros(vec![layout.total_params()]), layout }
    }

    pub fn from_theta(config: &BackboneConfig, theta: Tensor) -> Result<BackboneWeights> {
        let layout = config.layout();
        if theta.numel() != layout.total_params() {
            return Err(Error::Shape {
                op: "backbone_weights",
                detail: format!("theta has {} params, layout wants {}", theta.numel(), layout.total_params()),
            });
        }
        Ok(BackboneWeights { theta, layout })
    }
}

/// Glorot-uniform matrices with zero biases, deterministic in the seed.
pub fn init_weights(config: &BackboneConfig, seed: u64) -> BackboneWeights {
    let mut rng = Stream::derive(seed, "init", 0);
    let mut set = ParamSet::new();
    for layer in &config.layout().layers {
        set.push_glorot(&layer.name, layer.rows, layer.cols, &mut rng);
    }
    BackboneWeights {
        theta: Tensor::from_vec(vec![config.layout().total_params()], set.flatten())
            .expect("layout total matches flattened params"),
        layout: config.layout(),
    }
}

/// Weight and bias views of one layer, sliced out of the flat theta node.
fn layer_mats(
    tape: &mut Tape,
    theta: NodeId,
    layout: &ParamLayout,
    idx: usize,
) -> Result<(NodeId, NodeId)> {
    let spec = &layout.layers[idx];
    let aug = tape.slice(theta, 0, layout.offset(idx), spec.param_count())?;
    let aug = tape.reshape(aug, vec![spec.rows, spec.cols + 1])?;
    let w = tape.slice(aug, 1, 0, spec.cols)?;
    let b = tape.slice(aug, 1, spec.cols, 1)?;
    let b = tape.reshape(b, vec![1, spec.rows])?;
    Ok((w, b))
}

fn linear(tape: &mut Tape, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
    let y = tape.matmul_nt(x, w)?;
    tape.add_row(y, b)
}

/// Backbone weights bound onto a tape, ready for forward passes.
pub struct BoundBackbone {
    pub theta: NodeId,
    embed_w: NodeId,
    embed_b: NodeId,
    gru_w: NodeId,
    gru_b: NodeId,
    head_w: NodeId,
    head_b: NodeId,
    hidden: usize,
}

impl BoundBackbone {
    /// Slice layer views out of an already-placed theta node.
    pub fn from_theta_node(
        tape: &mut Tape,
        theta: NodeId,
        config: &BackboneConfig,
        layout: &ParamLayout,
    ) -> Result<BoundBackbone> {
        if tape.value(theta).numel() != layout.total_params() {
            return Err(Error::Shape {
                op: "bind_backbone",
                detail: format!(
                    "theta node has {} params, layout wants {}",
                    tape.value(theta).numel(),
                    layout.total_params()
                ),
            });
        }
        let (embed_w, embed_b) = layer_mats(tape, theta, layout, 0)?;
        let (gru_w, gru_b) = layer_mats(tape, theta, layout, 1)?;
        let (head_w, head_b) = layer_mats(tape, theta, layout, 2)?;
        Ok(BoundBackbone {
            theta,
            embed_w,
            embed_b,
            gru_w,
            gru_b,
            head_w,
            head_b,
            hidden: config.hidden,
        })
    }

    pub fn bind(tape: &mut Tape, weights: &BackboneWeights, config: &BackboneConfig) -> Result<BoundBackbone> {
        let theta = tape.leaf(weights.theta.clone());
        BoundBackbone::from_theta_node(tape, theta, config, &weights.layout)
    }

    /// One autoregressive step: encode the raw input, advance the GRU.
    pub fn step(&self, tape: &mut Tape, raw_input: NodeId, hidden: NodeId) -> Result<NodeId> {
        let x = linear(tape, raw_input, self.embed_w, self.embed_b)?;
        let h = self.hidden;
        let xh = tape.concat(1, &[x, hidden])?;
        let gates = linear(tape, xh, self.gru_w, self.gru_b)?;
        let z_pre = tape.slice(gates, 1, 0, h)?;
        let r_pre = tape.slice(gates, 1, h, h)?;
        let z = tape.sigmoid(z_pre)?;
        let r = tape.sigmoid(r_pre)?;
        let rh = tape.mul(r, hidden)?;
        let xrh = tape.concat(1, &[x, rh])?;
        let gates2 = linear(tape, xrh, self.gru_w, self.gru_b)?;
        let cand_pre = tape.slice(gates2, 1, 2 * h, h)?;
        let cand = tape.tanh(cand_pre)?;
        let keep = tape.mul(z, hidden)?;
        let one_minus_z = tape.affine(z, -1.0, 1.0)?;
        let update = tape.mul(one_minus_z, cand)?;
        tape.add(update, keep)
    }

    /// Clamped head logits (categorical) or raw mixture parameters (MDN).
    pub fn head(&self, tape: &mut Tape, hidden: NodeId) -> Result<NodeId> {
        linear(tape, hidden, self.head_w, self.head_b)
    }

    pub fn logits(&self, tape: &mut Tape, hidden: NodeId) -> Result<NodeId> {
        let raw = self.head(tape, hidden)?;
        tape.clamp(raw, -LOGIT_CLAMP, LOGIT_CLAMP)
    }
}

/// A batch of states pre-encoded for the autoregressive forward pass, in the
/// config's dimension order. Built once per minibatch and reused per epoch.
pub struct EncodedBatch {
    pub n: usize,
    /// Step inputs: entry 0 is the zero start input; entry i>0 encodes the
    /// value of dimension order[i-1].
    pub inputs: Vec<Tensor>,
    /// Categorical: one-hot mask of the target value at each step.
    pub target_masks: Vec<Tensor>,
    /// MDN: target value column at each step.
    pub target_values: Vec<Tensor>,
}

/// Encode integer states for the categorical head.
pub fn encode_int_batch(config: &BackboneConfig, states: &[i64]) -> Result<EncodedBatch> {
    let d = config.dim;
    let l = config.states_per_dim;
    if states.is_empty() || states.len() % d != 0 {
        return Err(Error::Config(format!("batch of {} values is not a multiple of dim {d}", states.len())));
    }
    let n = states.len() / d;
    let mut inputs = Vec::with_capacity(d);
    let mut target_masks = Vec::with_capacity(d);
    for step in 0..d {
        let mut mask = Tensor::zeros(vec![n, l]);
        let target_dim = config.order[step];
        for row in 0..n {
            let v = states[row * d + target_dim];
            if v < 0 || v >= l as i64 {
                return Err(Error::Config(format!("state value {v} outside [0, {l})")));
            }
            mask.data_mut()[row * l + v as usize] = 1.0;
        }
        if step == 0 {
            inputs.push(Tensor::zeros(vec![n, l]));
        } else {
            inputs.push(target_masks[step - 1].clone());
        }
        target_masks.push(mask);
    }
    Ok(EncodedBatch { n, inputs, target_masks, target_values: Vec::new() })
}

/// Encode continuous states for the MDN head.
pub fn encode_float_batch(config: &BackboneConfig, states: &[f64]) -> Result<EncodedBatch> {
    let d = config.dim;
    if states.is_empty() || states.len() % d != 0 {
        return Err(Error::Config(format!("batch of {} values is not a multiple of dim {d}", states.len())));
    }
    let n = states.len() / d;
    let mut inputs = Vec::with_capacity(d);
    let mut target_values = Vec::with_capacity(d);
    for step in 0..d {
        let target_dim = config.order[step];
        let col = Tensor::from_fn(vec![n, 1], |row| states[row * d + target_dim]);
        if step == 0 {
            inputs.push(Tensor::zeros(vec![n, 1]));
        } else {
            inputs.push(target_values[step - 1].clone());
        }
        target_values.push(col);
    }
    Ok(EncodedBatch { n, inputs, target_masks: Vec::new(), target_values })
}

/// Per-row joint log probability, differentiable through theta: (n x 1) node.
pub fn log_prob_rows(
    tape: &mut Tape,
    bound: &BoundBackbone,
    config: &BackboneConfig,
    batch: &EncodedBatch,
) -> Result<NodeId> {
    let n = batch.n;
    let mut hidden = tape.leaf(Tensor::zeros(vec![n, config.hidden]));
    let mut total: Option<NodeId> = None;
    for step in 0..config.dim {
        let input = tape.leaf(batch.inputs[step].clone());
        hidden = bound.step(tape, input, hidden)?;
        let step_lp = match config.head {
            HeadKind::Categorical => {
                let logits = bound.logits(tape, hidden)?;
                let logp = tape.log_softmax(logits)?;
                let mask = tape.leaf(batch.target_masks[step].clone());
                let selected = tape.mul(logp, mask)?;
                let ones = tape.leaf(Tensor::full(vec![config.states_per_dim, 1], 1.0));
                tape.matmul(selected, ones)?
            }
            HeadKind::Mdn { components } => {
                let params = bound.head(tape, hidden)?;
                let target = tape.leaf(batch.target_values[step].clone());
                mdn_log_density(tape, params, target, components)?
            }
        };
        total = Some(match total {
            None => step_lp,
            Some(acc) => tape.add(acc, step_lp)?,
        });
    }
    Ok(total.expect("dim >= 1"))
}

/// log density of a Gaussian mixture head: params (n x 3K), target (n x 1) -> (n x 1).
fn mdn_log_density(tape: &mut Tape, params: NodeId, target: NodeId, k: usize) -> Result<NodeId> {
    let weight_logits = tape.slice(params, 1, 0, k)?;
    let means = tape.slice(params, 1, k, k)?;
    let log_stds_raw = tape.slice(params, 1, 2 * k, k)?;
    let log_stds = tape.clamp(log_stds_raw, LOG_STD_MIN, LOG_STD_MAX)?;
    let log_weights = tape.log_softmax(weight_logits)?;

    let ones_row = tape.leaf(Tensor::full(vec![1, k], 1.0));
    let target_tiled = tape.matmul(target, ones_row)?;
    let diff = tape.sub(target_tiled, means)?;
    let neg_log_stds = tape.scale(log_stds, -1.0)?;
    let inv_stds = tape.exp(neg_log_stds)?;
    let zscore = tape.mul(diff, inv_stds)?;
    let z2 = tape.square(zscore)?;
    let neg_half_z2 = tape.scale(z2, -0.5)?;
    let gauss = tape.add(neg_half_z2, neg_log_stds)?;
    let gauss = tape.affine(gauss, 1.0, -HALF_LN_TAU)?;
    let weighted = tape.add(log_weights, gauss)?;
    tape.logsumexp(weighted)
}

/// Mean negative log likelihood over a batch; gradient flows to theta.
pub fn nll(
    tape: &mut Tape,
    bound: &BoundBackbone,
    config: &BackboneConfig,
    batch: &EncodedBatch,
) -> Result<NodeId> {
    if batch.n == 0 {
        return Err(Error::Config("empty batch".into()));
    }
    let rows = log_prob_rows(tape, bound, config, batch)?;
    let mean = tape.mean(rows)?;
    tape.scale(mean, -1.0)
}

/// Joint log probability of a single integer state.
pub fn joint_log_prob(weights: &BackboneWeights, config: &BackboneConfig, state: &[i64]) -> Result<f64> {
    let batch = encode_int_batch(config, state)?;
    let mut tape = Tape::new();
    let bound = BoundBackbone::bind(&mut tape, weights, config)?;
    let rows = log_prob_rows(&mut tape, &bound, config, &batch)?;
    Ok(tape.value(rows).item())
}

/// Conditional distribution of the next dimension (in config order) given a
/// prefix of values for order[0..prefix.len()].
pub fn conditional_distribution(
    weights: &BackboneWeights,
    config: &BackboneConfig,
    prefix: &[i64],
) -> Result<Vec<f64>> {
    if prefix.len() >= config.dim {
        return Err(Error::Config(format!(
            "prefix of {} values leaves no dimension to predict (d = {})",
            prefix.len(),
            config.dim
        )));
    }
    let l = config.states_per_dim;
    let mut tape = Tape::new();
    let bound = BoundBackbone::bind(&mut tape, weights, config)?;
    let mut hidden = tape.leaf(Tensor::zeros(vec![1, config.hidden]));
    for step in 0..=prefix.len() {
        let input = if step == 0 {
            Tensor::zeros(vec![1, l])
        } else {
            let v = prefix[step - 1];
            if v < 0 || v >= l as i64 {
                return Err(Error::Config(format!("prefix value {v} outside [0, {l})")));
            }
            Tensor::from_fn(vec![1, l], |i| if i == v as usize { 1.0 } else { 0.0 })
        };
        let input = tape.leaf(input);
        hidden = bound.step(&mut tape, input, hidden)?;
    }
    let logits = bound.logits(&mut tape, hidden)?;
    let probs = tape.softmax(logits)?;
    Ok(tape.value(probs).data().to_vec())
}

/// Gaussian mixture conditional for the MDN head.
#[derive(Debug, Clone)]
pub struct MdnMixture {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub log_stds: Vec<f64>,
}

impl MdnMixture {
    pub fn log_density(&self, x: f64) -> f64 {
        let terms: Vec<f64> = self
            .weights
            .iter()
            .zip(self.means.iter().zip(&self.log_stds))
            .map(|(&w, (&mu, &ls))| {
                let z = (x - mu) * (-ls).exp();
                w.ln() - HALF_LN_TAU - ls - 0.5 * z * z
            })
            .collect();
        let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        max + terms.iter().map(|&t| (t - max).exp()).sum::<f64>().ln()
    }

    pub fn density(&self, x: f64) -> f64 {
        self.log_density(x).exp()
    }
}

/// Mixture parameters for the next dimension given a continuous prefix.
pub fn mdn_conditional(
    weights: &BackboneWeights,
    config: &BackboneConfig,
    prefix: &[f64],
) -> Result<MdnMixture> {
    let HeadKind::Mdn { components } = config.head else {
        return Err(Error::Config("mdn_conditional requires an MDN head".into()));
    };
    if prefix.len() >= config.dim {
        return Err(Error::Config("prefix leaves no dimension to predict".into()));
    }
    let mut tape = Tape::new();
    let bound = BoundBackbone::bind(&mut tape, weights, config)?;
    let mut hidden = tape.leaf(Tensor::zeros(vec![1, config.hidden]));
    for step in 0..=prefix.len() {
        let input = if step == 0 {
            Tensor::zeros(vec![1, 1])
        } else {
            Tensor::scalar(prefix[step - 1]).reshape(vec![1, 1])?
        };
        let input = tape.leaf(input);
        hidden = bound.step(&mut tape, input, hidden)?;
    }
    let params = bound.head(&mut tape, hidden)?;
    let row = tape.value(params).data();
    let k = components;
    let logits = &row[0..k];
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(MdnMixture {
        weights: exps.iter().map(|&e| e / total).collect(),
        means: row[k..2 * k].to_vec(),
        log_stds: row[2 * k..3 * k].iter().map(|&v| v.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect(),
    })
}

/// Ancestral samples; integer states for the categorical head, continuous for MDN.
pub fn sample(
    weights: &BackboneWeights,
    config: &BackboneConfig,
    count: usize,
    rng: &mut Stream,
) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::Config("sample count must be positive".into()));
    }
    let d = config.dim;
    let mut tape = Tape::new();
    let bound = BoundBackbone::bind(&mut tape, weights, config)?;
    let mut hidden = tape.leaf(Tensor::zeros(vec![count, config.hidden]));
    let mut out = vec![0.0; count * d];
    let mut prev: Option<Tensor> = None;

    for step in 0..d {
        let input = tape.leaf(match &prev {
            None => Tensor::zeros(vec![count, config.input_width()]),
            Some(enc) => enc.clone(),
        });
        hidden = bound.step(&mut tape, input, hidden)?;
        let target_dim = config.order[step];
        match config.head {
            HeadKind::Categorical => {
                let l = config.states_per_dim;
                let logits = bound.logits(&mut tape, hidden)?;
                let probs = tape.softmax(logits)?;
                let mut enc = Tensor::zeros(vec![count, l]);
                for row in 0..count {
                    let v = rng.categorical(tape.value(probs).row(row));
                    out[row * d + target_dim] = v as f64;
                    enc.data_mut()[row * l + v] = 1.0;
                }
                prev = Some(enc);
            }
            HeadKind::Mdn { components } => {
                let params = bound.head(&mut tape, hidden)?;
                let mut enc = Tensor::zeros(vec![count, 1]);
                for row in 0..count {
                    let p = tape.value(params).row(row);
                    let logits = &p[0..components];
                    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let ws: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
                    let k = rng.categorical(&ws);
                    let sigma = p[2 * components + k].clamp(LOG_STD_MIN, LOG_STD_MAX).exp();
                    let v = p[components + k] + sigma * rng.normal();
                    out[row * d + target_dim] = v;
                    enc.data_mut()[row] = v;
                }
                prev = Some(enc);
            }
        }
    }
    Ok(out)
}

/// Integer-valued samples for the categorical head.
pub fn sample_int(
    weights: &BackboneWeights,
    config: &BackboneConfig,
    count: usize,
    rng: &mut Stream,
) -> Result<Vec<i64>> {
    if !matches!(config.head, HeadKind::Categorical) {
        return Err(Error::Config("integer sampling requires the categorical head".into()));
    }
    Ok(sample(weights, config, count, rng)?.into_iter().map(|v| v as i64).collect())
}

/// Exact joint table by running the chain rule over every state.
///
/// Level-ordered: hidden states for all length-i prefixes are advanced as one
/// batch, multiplying the batch by L per level.
pub fn enumerate_joint(weights: &BackboneWeights, config: &BackboneConfig) -> Result<ProbTable> {
    if !matches!(config.head, HeadKind::Categorical) {
        return Err(Error::Config("enumerate_joint requires the categorical head".into()));
    }
    let d = config.dim;
    let l = config.states_per_dim;
    let dims = vec![l; d];
    ProbTable::check_size(&dims)?;

    let mut tape = Tape::new();
    let bound = BoundBackbone::bind(&mut tape, weights, config)?;
    // log joint over prefixes in order-major layout, expanded level by level
    let mut log_joint = vec![0.0f64];
    let mut hidden_val = Tensor::zeros(vec![1, config.hidden]);

    for step in 0..d {
        let rows = log_joint.len();
        let input_val = if step == 0 {
            Tensor::zeros(vec![rows, l])
        } else {
            // rows = prev_rows * l; row r chose value r % l at the previous level
            Tensor::from_fn(vec![rows, l], |i| {
                let (row, col) = (i / l, i % l);
                if row % l == col {
                    1.0
                } else {
                    0.0
                }
            })
        };
        let input = tape.leaf(input_val);
        let hidden = tape.leaf(hidden_val.clone());
        let new_hidden = bound.step(&mut tape, input, hidden)?;
        let logits = bound.logits(&mut tape, new_hidden)?;
        let logp = tape.log_softmax(logits)?;
        let logp_val = tape.value(logp);

        let mut next = Vec::with_capacity(rows * l);
        for r in 0..rows {
            let base = log_joint[r];
            next.extend(logp_val.row(r).iter().map(|&lp| base + lp));
        }
        log_joint = next;

        if step + 1 < d {
            // repeat each hidden row L times to cover the expanded prefixes
            let h = config.hidden;
            let hv = tape.value(new_hidden);
            hidden_val = Tensor::from_fn(vec![rows * l, h], |i| {
                let (row, col) = (i / h, i % h);
                hv.at(row / l, col)
            });
        }
    }

    // reorder from order-major to natural dimension-major indexing
    let mut probs = vec![0.0f64; log_joint.len()];
    let mut values = vec![0usize; d];
    for (flat, &lp) in log_joint.iter().enumerate() {
        let mut rest = flat;
        for step in (0..d).rev() {
            values[config.order[step]] = rest % l;
            rest /= l;
        }
        let mut idx = 0;
        for &v in values.iter() {
            idx = idx * l + v;
        }
        probs[idx] = lp.exp();
    }
    ProbTable::new(dims, probs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> BackboneConfig {
        BackboneConfig::categorical(2, 8, 4).unwrap()
    }

    #[test]
    fn layout_totals_fixed_for_default_architecture() {
        // GRU backbone at L=32, H=8: embed 8x33 + gru 24x17 + head 32x9 = 960
        let config = BackboneConfig::categorical(5, 32, 8).unwrap();
        let layout = config.layout();
        assert_eq!(layout.layers[0].param_count(), 8 * 33);
        assert_eq!(layout.layers[1].param_count(), 24 * 17);
        assert_eq!(layout.layers[2].param_count(), 32 * 9);
        assert_eq!(layout.total_params(), 960);
        assert_eq!(layout.node_count(), 8 + 24 + 32);
    }

    #[test]
    fn parameter_count_is_dimension_independent() {
        let a = BackboneConfig::categorical(2, 32, 8).unwrap().layout();
        let b = BackboneConfig::categorical(10, 32, 8).unwrap().layout();
        assert_eq!(a, b);
    }

    #[test]
    fn init_is_seed_deterministic() {
        let config = small_config();
        let a = init_weights(&config, 11);
        let b = init_weights(&config, 11);
        assert_eq!(a.theta, b.theta);
        let c = init_weights(&config, 12);
        assert_ne!(a.theta, c.theta);
    }

    #[test]
    fn zero_theta_gives_uniform_conditionals() {
        let config = small_config();
        let weights = BackboneWeights::zeros(&config);
        let probs = conditional_distribution(&weights, &config, &[]).unwrap();
        for &p in &probs {
            assert!((p - 1.0 / 8.0).abs() < 1e-12);
        }
        let probs2 = conditional_distribution(&weights, &config, &[3]).unwrap();
        for &p in &probs2 {
            assert!((p - 1.0 / 8.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_theta_log_prob_is_uniform() {
        let config = small_config();
        let weights = BackboneWeights::zeros(&config);
        let lp = joint_log_prob(&weights, &config, &[1, 5]).unwrap();
        let expected = -(config.dim as f64) * (config.states_per_dim as f64).ln();
        assert!((lp - expected).abs() < 1e-12);
    }

    #[test]
    fn conditionals_are_normalized_and_deterministic() {
        let config = small_config();
        let weights = init_weights(&config, 3);
        let a = conditional_distribution(&weights, &config, &[2]).unwrap();
        let b = conditional_distribution(&weights, &config, &[2]).unwrap();
        assert_eq!(a, b);
        let total: f64 = a.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(a.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn out_of_range_prefix_rejected() {
        let config = small_config();
        let weights = BackboneWeights::zeros(&config);
        assert!(conditional_distribution(&weights, &config, &[8]).is_err());
        assert!(conditional_distribution(&weights, &config, &[1, 2]).is_err());
    }

    #[test]
    fn enumerated_joint_sums_to_one() {
        let config = BackboneConfig::categorical(3, 4, 4).unwrap();
        let weights = init_weights(&config, 7);
        let table = enumerate_joint(&weights, &config).unwrap();
        assert_eq!(table.cells(), 64);
        table.check_normalized(1e-10).unwrap();
    }

    #[test]
    fn joint_log_prob_matches_enumeration() {
        let config = small_config();
        let weights = init_weights(&config, 5);
        let table = enumerate_joint(&weights, &config).unwrap();
        for state in [[0i64, 0], [3, 7], [5, 2], [7, 7]] {
            let lp = joint_log_prob(&weights, &config, &state).unwrap();
            let table_p = table.prob(&[state[0] as usize, state[1] as usize]);
            assert!((lp - table_p.ln()).abs() < 1e-10, "state {state:?}");
        }
    }

    #[test]
    fn product_of_conditionals_sums_to_one() {
        let config = BackboneConfig::categorical(3, 4, 4).unwrap();
        let weights = init_weights(&config, 9);
        let mut total = 0.0;
        for a in 0..4i64 {
            let pa = conditional_distribution(&weights, &config, &[]).unwrap();
            for b in 0..4i64 {
                let pb = conditional_distribution(&weights, &config, &[a]).unwrap();
                for c in 0..4i64 {
                    let pc = conditional_distribution(&weights, &config, &[a, b]).unwrap();
                    total += pa[a as usize] * pb[b as usize] * pc[c as usize];
                }
            }
        }
        assert!((total - 1.0).abs() < 1e-10, "total {total}");
    }

    #[test]
    fn nll_of_zero_theta_is_d_ln_l() {
        let config = small_config();
        let weights = BackboneWeights::zeros(&config);
        let batch = encode_int_batch(&config, &[1, 2, 3, 4, 0, 7]).unwrap();
        let mut tape = Tape::new();
        let bound = BoundBackbone::bind(&mut tape, &weights, &config).unwrap();
        let loss = nll(&mut tape, &bound, &config, &batch).unwrap();
        let expected = 2.0 * 8f64.ln();
        assert!((tape.value(loss).item() - expected).abs() < 1e-12);
    }

    #[test]
    fn empty_batch_rejected() {
        let config = small_config();
        assert!(encode_int_batch(&config, &[]).is_err());
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let config = small_config();
        let weights = init_weights(&config, 2);
        let mut r1 = Stream::derive(5, "eval", 0);
        let mut r2 = Stream::derive(5, "eval", 0);
        let a = sample_int(&weights, &config, 64, &mut r1).unwrap();
        let b = sample_int(&weights, &config, 64, &mut r2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn identity_permutation_preserves_outputs() {
        let config = small_config();
        let weights = init_weights(&config, 4);
        let same = config.permute_order(vec![0, 1]).unwrap();
        assert_eq!(
            enumerate_joint(&weights, &config).unwrap(),
            enumerate_joint(&weights, &same).unwrap()
        );
    }

    #[test]
    fn permuted_order_still_normalizes() {
        let config = BackboneConfig::categorical(3, 4, 4).unwrap();
        let weights = init_weights(&config, 13);
        let permuted = config.permute_order(vec![2, 0, 1]).unwrap();
        let table = enumerate_joint(&weights, &permuted).unwrap();
        table.check_normalized(1e-10).unwrap();
        // zero weights are order-invariant: uniform under any order
        let zero = BackboneWeights::zeros(&config);
        let t0 = enumerate_joint(&zero, &permuted).unwrap();
        for &p in t0.probs() {
            assert!((p - 1.0 / 64.0).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_permutations_rejected() {
        let config = small_config();
        assert!(config.permute_order(vec![0, 0]).is_err());
        assert!(config.permute_order(vec![1]).is_err());
        assert!(config.permute_order(vec![1, 2]).is_err());
    }

    #[test]
    fn mdn_zero_theta_gives_standard_components() {
        let config = BackboneConfig::mdn(2, 4, 5).unwrap();
        let weights = BackboneWeights::zeros(&config);
        let mix = mdn_conditional(&weights, &config, &[]).unwrap();
        for &w in &mix.weights {
            assert!((w - 0.2).abs() < 1e-12);
        }
        assert!(mix.means.iter().all(|&m| m == 0.0));
        assert!(mix.log_stds.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn mdn_single_component_matches_gaussian_closed_form() {
        let config = BackboneConfig::mdn(1, 4, 1).unwrap();
        let weights = init_weights(&config, 21);
        let mix = mdn_conditional(&weights, &config, &[]).unwrap();
        let (mu, ls) = (mix.means[0], mix.log_stds[0]);
        for x in [-1.5, 0.0, 2.25] {
            let z = (x - mu) * (-ls).exp();
            let expected = -HALF_LN_TAU - ls - 0.5 * z * z;
            assert!((mix.log_density(x) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn mdn_rejects_zero_components() {
        assert!(BackboneConfig::mdn(2, 4, 0).is_err());
    }

    #[test]
    fn mdn_log_prob_matches_mixture_density() {
        let config = BackboneConfig::mdn(2, 4, 3).unwrap();
        let weights = init_weights(&config, 8);
        let state = [0.7, -0.3];
        let batch = encode_float_batch(&config, &state).unwrap();
        let mut tape = Tape::new();
        let bound = BoundBackbone::bind(&mut tape, &weights, &config).unwrap();
        let rows = log_prob_rows(&mut tape, &bound, &config, &batch).unwrap();
        let lp = tape.value(rows).item();

        let m0 = mdn_conditional(&weights, &config, &[]).unwrap();
        let m1 = mdn_conditional(&weights, &config, &[state[0]]).unwrap();
        let expected = m0.log_density(state[0]) + m1.log_density(state[1]);
        assert!((lp - expected).abs() < 1e-10, "{lp} vs {expected}");
    }
}
