//! Single-spike context-gated SNN: sigmoid encoder front end, temporally
//! coded non-leaky IF layers where each neuron fires at most once, exact
//! spike-time gradients in the z-domain, reward-weighted latency loss, and
//! STDP plasticity restricted to the context-gate weights.

use crate::model::{DecisionModel, Schedule, TrainError, TrainLog};
use crate::numerics::{sigmoid, Matrix, RngStream};
use crate::taskgen::{Curriculum, Decision, Stimulus, TaskId};
use serde::{Deserialize, Serialize};

/// Latency-coding horizon: intensity a maps to spike time t = T_MAX * (1 - a).
pub const T_MAX: f64 = 2.0;

/// Threshold of the non-leaky IF units.
pub const V_TH: f64 = 1.0;

/// z value substituted for silent outputs in the loss (no gradient flows to
/// the silent side).
pub fn z_cap() -> f64 {
    T_MAX.exp() * 10.0
}

pub const NUM_CONTEXT: usize = 2;

/// Each spiking layer also receives one synchronization line firing at t = 0
/// (z = 1) regardless of the stimulus. Its trainable weight acts as a timing
/// bias, which the layers otherwise lack.
pub const NUM_SYNC: usize = 1;

/// Layered single-spike network. The spiking hidden layer sees the encoder
/// lines followed by the two context lines; `context_mask` is 1 exactly on
/// the context columns of `hidden_w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleSpikeNet {
    pub enc_w: Matrix,
    pub enc_b: Vec<f64>,
    pub hidden_w: Matrix,
    pub out_w: Matrix,
    pub context_mask: Matrix,
    pub v_th: f64,
}

impl SingleSpikeNet {
    pub fn new(n_inputs: usize, n_encoder: usize, n_hidden: usize, rng: &mut RngStream) -> Self {
        let mut enc_w = Matrix::zeros(n_encoder, n_inputs);
        // A sharp encoder (large weight variance) spreads first-layer
        // latencies enough for every seed to escape the chance plateau.
        let scale = 8.0 / (n_inputs as f64).sqrt();
        for v in enc_w.data.iter_mut() {
            *v = rng.normal() * scale;
        }
        let enc_b = vec![0.0; n_encoder];

        // Spiking layers start with an expected input-weight sum of 4 so
        // units cross threshold from the first trials, but with signed
        // high-variance weights so different neurons weight different inputs
        // and stimulus differences survive the layer.
        let n_in_hidden = n_encoder + NUM_CONTEXT + NUM_SYNC;
        let mut hidden_w = Matrix::zeros(n_hidden, n_in_hidden);
        let hid_std = 1.0 / (n_in_hidden as f64).sqrt();
        for v in hidden_w.data.iter_mut() {
            *v = 4.0 / n_in_hidden as f64 + rng.normal() * hid_std;
        }
        let mut out_w = Matrix::zeros(2, n_hidden + NUM_SYNC);
        let out_std = 1.0 / (n_hidden as f64).sqrt();
        for v in out_w.data.iter_mut() {
            *v = 4.0 / n_hidden as f64 + rng.normal() * out_std;
        }

        let mut context_mask = Matrix::zeros(n_hidden, n_in_hidden);
        for j in 0..n_hidden {
            for c in 0..NUM_CONTEXT {
                context_mask.set(j, n_encoder + c, 1.0);
                // Context gates start closed; only local plasticity opens them.
                hidden_w.set(j, n_encoder + c, 0.0);
            }
        }
        SingleSpikeNet { enc_w, enc_b, hidden_w, out_w, context_mask, v_th: V_TH }
    }

    pub fn n_encoder(&self) -> usize {
        self.enc_w.rows
    }

    pub fn n_hidden(&self) -> usize {
        self.hidden_w.rows
    }

    /// Mean |weight| on the context columns vs all other columns of the
    /// gated hidden layer.
    pub fn context_weight_summary(&self) -> (f64, f64) {
        let e = self.n_encoder();
        let (mut ctx, mut other) = (0.0, 0.0);
        let (mut n_ctx, mut n_other) = (0usize, 0usize);
        for j in 0..self.hidden_w.rows {
            let row = self.hidden_w.row(j);
            for (i, w) in row.iter().enumerate() {
                if (e..e + NUM_CONTEXT).contains(&i) {
                    ctx += w.abs();
                    n_ctx += 1;
                } else if i < e {
                    other += w.abs();
                    n_other += 1;
                }
            }
        }
        (ctx / n_ctx as f64, other / n_other as f64)
    }
}

/// Spike outcome of one spiking layer: z = exp(t) per neuron
/// (`f64::INFINITY` marks silence), the causal input set, and the causal
/// weight sum needed by the exact gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeTimesLayer {
    pub z: Vec<f64>,
    pub causal_sets: Vec<Vec<usize>>,
    pub causal_weight_sum: Vec<f64>,
}

/// Intensity-to-latency coding: t = T_MAX * (1 - intensity), z = exp(t).
/// Stronger signals fire earlier.
pub fn latency_encode(intensity: f64) -> f64 {
    (T_MAX * (1.0 - intensity)).exp()
}

/// Sigmoid MLP front end producing per-unit intensities in (0, 1).
pub fn encoder_forward(net: &SingleSpikeNet, features: &[f64]) -> Vec<f64> {
    let mut pre = net.enc_w.matvec(features);
    for (p, b) in pre.iter_mut().zip(&net.enc_b) {
        *p = sigmoid(*p + *b);
    }
    pre
}

/// z-domain forward pass of one non-leaky IF layer under the at-most-one-
/// spike rule. For each output neuron the minimal ascending-z input prefix
/// with causal weight sum > 1 whose implied output spike lands before the
/// next input spike determines z_out = sum(w z) / (sum w - 1).
pub fn spiking_forward(weights: &Matrix, input_z: &[f64]) -> SpikeTimesLayer {
    assert_eq!(weights.cols, input_z.len());
    // Ascending order over the finite inputs; silent inputs can never join a
    // causal set.
    let mut order: Vec<usize> = (0..input_z.len()).filter(|&i| input_z[i].is_finite()).collect();
    order.sort_by(|&a, &b| input_z[a].partial_cmp(&input_z[b]).unwrap());

    let n_out = weights.rows;
    let mut z = vec![f64::INFINITY; n_out];
    let mut causal_sets = vec![Vec::new(); n_out];
    let mut causal_weight_sum = vec![0.0; n_out];

    for j in 0..n_out {
        let row = weights.row(j);
        let mut sw = 0.0;
        let mut swz = 0.0;
        for (k, &i) in order.iter().enumerate() {
            sw += row[i];
            swz += row[i] * input_z[i];
            if sw <= 1.0 {
                continue;
            }
            let z_out = swz / (sw - 1.0);
            let z_next = order.get(k + 1).map_or(f64::INFINITY, |&n| input_z[n]);
            if z_out >= input_z[i] && z_out <= z_next {
                z[j] = z_out;
                causal_sets[j] = order[..=k].to_vec();
                causal_weight_sum[j] = sw;
                break;
            }
        }
    }
    SpikeTimesLayer { z, causal_sets, causal_weight_sum }
}

/// Reward-weighted softmin loss on the two output spike latencies (t = ln z);
/// see `RewardMode` for the treatment of the reward multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardMode {
    /// L = -r * p_accept with signed reward r.
    Signed,
    /// L = -|r| * p_target, target = accept for r > 0, reject for r < 0.
    Magnitude,
}

/// `o0`, `o1` are spike latencies: L = -r * exp(-o0)/(exp(-o0) + exp(-o1)).
pub fn loss_single(r: f64, o0: f64, o1: f64, mode: RewardMode) -> f64 {
    let p_accept = sigmoid(o1 - o0);
    match mode {
        RewardMode::Signed => -r * p_accept,
        RewardMode::Magnitude => {
            if r >= 0.0 {
                -r * p_accept
            } else {
                r * (1.0 - p_accept)
            }
        }
    }
}

/// Full forward trace of one trial, retained for the backward pass and the
/// local plasticity step.
#[derive(Debug, Clone)]
pub struct SingleTrace {
    pub enc_act: Vec<f64>,
    /// z per hidden-layer input line: encoder lines, the 2 context lines,
    /// then the sync line.
    pub input_z: Vec<f64>,
    pub hidden: SpikeTimesLayer,
    /// z per output-layer input line: hidden spikes then the sync line.
    pub out_input: Vec<f64>,
    pub out: SpikeTimesLayer,
    /// Output z with silent outputs replaced by the cap.
    pub out_z_capped: [f64; 2],
    /// Output latencies t = ln z, silent outputs at ln(z_cap).
    pub out_t_capped: [f64; 2],
}

pub fn forward(net: &SingleSpikeNet, features: &[f64], context: TaskId) -> SingleTrace {
    let enc_act = encoder_forward(net, features);
    let e = net.n_encoder();
    let mut input_z = Vec::with_capacity(e + NUM_CONTEXT + NUM_SYNC);
    for &a in &enc_act {
        input_z.push(latency_encode(a));
    }
    // The active context line fires at t = 0 (z = 1); the inactive line is
    // silent.
    for c in 0..NUM_CONTEXT {
        input_z.push(if c == context.index() { 1.0 } else { f64::INFINITY });
    }
    input_z.push(1.0);
    let hidden = spiking_forward(&net.hidden_w, &input_z);
    let mut out_input = hidden.z.clone();
    out_input.push(1.0);
    let out = spiking_forward(&net.out_w, &out_input);
    let cap = z_cap();
    let out_z_capped = [
        if out.z[0].is_finite() { out.z[0] } else { cap },
        if out.z[1].is_finite() { out.z[1] } else { cap },
    ];
    let out_t_capped = [out_z_capped[0].ln(), out_z_capped[1].ln()];
    SingleTrace { enc_act, input_z, hidden, out_input, out, out_z_capped, out_t_capped }
}

#[derive(Debug, Clone)]
pub struct SingleGrads {
    pub enc_w: Matrix,
    pub enc_b: Vec<f64>,
    pub hidden_w: Matrix,
    pub out_w: Matrix,
}

impl SingleGrads {
    pub fn zeros_like(net: &SingleSpikeNet) -> Self {
        SingleGrads {
            enc_w: Matrix::zeros(net.enc_w.rows, net.enc_w.cols),
            enc_b: vec![0.0; net.enc_b.len()],
            hidden_w: Matrix::zeros(net.hidden_w.rows, net.hidden_w.cols),
            out_w: Matrix::zeros(net.out_w.rows, net.out_w.cols),
        }
    }

    fn scale(&mut self, s: f64) {
        for v in self.enc_w.data.iter_mut() {
            *v *= s;
        }
        for v in self.enc_b.iter_mut() {
            *v *= s;
        }
        for v in self.hidden_w.data.iter_mut() {
            *v *= s;
        }
        for v in self.out_w.data.iter_mut() {
            *v *= s;
        }
    }
}

/// Exact spike-time gradients of the trial loss with causal sets held fixed:
/// dz_out/dw_i = (z_i - z_out) / (sum_C w - 1) for i in C, and
/// dz_out/dz_i = w_i / (sum_C w - 1). Silent outputs propagate zero gradient.
pub fn backward_global(
    net: &SingleSpikeNet,
    trace: &SingleTrace,
    features: &[f64],
    reward: f64,
    mode: RewardMode,
    grads: &mut SingleGrads,
) -> f64 {
    let [o0, o1] = trace.out_t_capped;
    let loss = loss_single(reward, o0, o1, mode);
    let p = sigmoid(o1 - o0);
    let w = p * (1.0 - p);
    // Both reward modes share this derivative: for r < 0 the magnitude form
    // differs from the signed form only by a constant offset. The loss reads
    // latencies, so each output's z-gradient picks up dt/dz = 1/z.
    let dl_do = [
        reward * w / trace.out_z_capped[0],
        -reward * w / trace.out_z_capped[1],
    ];

    let e = net.n_encoder();
    let mut dz_hidden = vec![0.0; net.n_hidden()];
    for k in 0..2 {
        if !trace.out.z[k].is_finite() || dl_do[k] == 0.0 {
            continue;
        }
        let denom = trace.out.causal_weight_sum[k] - 1.0;
        let zk = trace.out.z[k];
        for &i in &trace.out.causal_sets[k] {
            let zi = trace.out_input[i];
            grads.out_w.data[k * net.out_w.cols + i] += dl_do[k] * (zi - zk) / denom;
            if i < dz_hidden.len() {
                dz_hidden[i] += dl_do[k] * net.out_w.get(k, i) / denom;
            }
        }
    }

    let mut dz_input = vec![0.0; trace.input_z.len()];
    for j in 0..net.n_hidden() {
        if dz_hidden[j] == 0.0 || !trace.hidden.z[j].is_finite() {
            continue;
        }
        let denom = trace.hidden.causal_weight_sum[j] - 1.0;
        let zj = trace.hidden.z[j];
        for &i in &trace.hidden.causal_sets[j] {
            let zi = trace.input_z[i];
            grads.hidden_w.data[j * net.hidden_w.cols + i] += dz_hidden[j] * (zi - zj) / denom;
            dz_input[i] += dz_hidden[j] * net.hidden_w.get(j, i) / denom;
        }
    }

    // Chain through latency coding and the sigmoid encoder; context lines
    // carry no parameters.
    for i in 0..e {
        if dz_input[i] == 0.0 {
            continue;
        }
        let a = trace.enc_act[i];
        let dz_da = -T_MAX * trace.input_z[i];
        let d_pre = dz_input[i] * dz_da * a * (1.0 - a);
        grads.enc_b[i] += d_pre;
        let row = grads.enc_w.row_mut(i);
        for (g, &x) in row.iter_mut().zip(features) {
            *g += d_pre * x;
        }
    }
    loss
}

/// STDP window parameters and the local learning rate / repeat count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StdpConfig {
    pub a_plus: f64,
    pub a_minus: f64,
    pub tau_plus: f64,
    pub tau_minus: f64,
    pub lambda_local: f64,
    /// Soft bound for potentiation: LTP is scaled by (w_max − w)/w_max, so a
    /// context weight saturates below the firing threshold instead of
    /// drowning out the stimulus pathway.
    pub w_max: f64,
}

impl Default for StdpConfig {
    fn default() -> Self {
        StdpConfig {
            a_plus: 0.1,
            a_minus: -0.05,
            tau_plus: 5.0,
            tau_minus: 5.0,
            lambda_local: 0.02,
            w_max: 2.0,
        }
    }
}

/// Exponentially decaying STDP window: potentiation when the presynaptic
/// spike leads, depression when it lags, zero at exact coincidence.
pub fn stdp_delta(t_pre: f64, t_post: f64, cfg: &StdpConfig) -> f64 {
    if t_post > t_pre {
        cfg.a_plus * (-(t_post - t_pre) / cfg.tau_plus).exp()
    } else if t_post < t_pre {
        cfg.a_minus * (-(t_pre - t_post) / cfg.tau_minus).exp()
    } else {
        0.0
    }
}

/// One local plasticity step on the active context column. For STDP the
/// context line's spike time is clamped to the earliest encoder spike of the
/// trial; only weights with context_mask == 1 move.
pub fn apply_context_stdp(
    net: &mut SingleSpikeNet,
    trace: &SingleTrace,
    context: TaskId,
    cfg: &StdpConfig,
) {
    let e = net.n_encoder();
    let t_clamp = trace.input_z[..e]
        .iter()
        .fold(f64::INFINITY, |m, &z| m.min(z))
        .ln();
    let col = e + context.index();
    for j in 0..net.n_hidden() {
        let zj = trace.hidden.z[j];
        if !zj.is_finite() {
            continue;
        }
        let mut delta = stdp_delta(t_clamp, zj.ln(), cfg);
        let idx = j * net.hidden_w.cols + col;
        if delta > 0.0 {
            delta *= ((cfg.w_max - net.hidden_w.data[idx]) / cfg.w_max).clamp(0.0, 1.0);
        }
        net.hidden_w.data[idx] += cfg.lambda_local * delta * net.context_mask.data[idx];
    }
}

/// Global-norm gradient clip for the single-spike SGD step. Gradients spike
/// when a causal-set weight sum approaches the firing threshold (the 1/(Σw−1)
/// factor), and unclipped steps knock the network into silence.
pub const GRAD_CLIP_NORM: f64 = 16.0;

impl SingleGrads {
    /// Rescales all gradient buffers so their joint L2 norm is at most
    /// `max_norm`.
    pub fn clip_global_norm(&mut self, max_norm: f64) {
        let mut sq = 0.0;
        for part in [&self.enc_w.data, &self.hidden_w.data, &self.out_w.data] {
            sq += part.iter().map(|v| v * v).sum::<f64>();
        }
        sq += self.enc_b.iter().map(|v| v * v).sum::<f64>();
        let norm = sq.sqrt();
        if norm > max_norm {
            let s = max_norm / norm;
            self.scale(s);
        }
    }
}

/// Minimum row weight sum kept by [`enforce_weight_sum_floor`]; a row sum
/// above 1 guarantees the neuron eventually fires, and the margin keeps the
/// causal-set denominator away from its singularity.
pub const WEIGHT_SUM_FLOOR: f64 = 1.2;

/// Projects every spiking-layer row back to a weight sum of at least
/// [`WEIGHT_SUM_FLOOR`] by adding a uniform offset. Without the floor, SGD
/// drives rows below the firing threshold, the neurons fall silent, and their
/// gradients vanish permanently.
pub fn enforce_weight_sum_floor(net: &mut SingleSpikeNet) {
    for m in [&mut net.hidden_w, &mut net.out_w] {
        let cols = m.cols;
        for j in 0..m.rows {
            let s: f64 = m.row(j).iter().sum();
            if s < WEIGHT_SUM_FLOOR {
                let add = (WEIGHT_SUM_FLOOR - s) / cols as f64;
                for v in m.row_mut(j).iter_mut() {
                    *v += add;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleTrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub schedule: Schedule,
    pub stdp: StdpConfig,
    pub reward_mode: RewardMode,
    /// Evaluate both tasks' template sets every this many training trials.
    pub eval_every: usize,
}

impl Default for SingleTrainConfig {
    fn default() -> Self {
        SingleTrainConfig {
            learning_rate: 0.5,
            batch_size: 16,
            schedule: Schedule { i_m: 5, i_n: 1 },
            stdp: StdpConfig::default(),
            reward_mode: RewardMode::Signed,
            eval_every: 25,
        }
    }
}

impl DecisionModel for SingleSpikeNet {
    fn decide(&self, features: &[f64], context: TaskId) -> Decision {
        let trace = forward(self, features, context);
        // Output 0 is the accept neuron; ties (including both silent) reject.
        if trace.out_z_capped[0] < trace.out_z_capped[1] {
            Decision::Accept
        } else {
            Decision::Reject
        }
    }

    fn hidden_activity(&self, features: &[f64], context: TaskId) -> Vec<f64> {
        let trace = forward(self, features, context);
        let silent = -z_cap().ln();
        trace
            .hidden
            .z
            .iter()
            .map(|&z| if z.is_finite() { -z.ln() } else { silent })
            .collect()
    }
}

/// Iterative global/local training: per minibatch, `i_m` SGD steps on the
/// latency loss followed by `i_n` STDP passes on the context weights.
pub fn train_single(
    net: &mut SingleSpikeNet,
    curriculum: &Curriculum,
    templates: &[Stimulus],
    cfg: &SingleTrainConfig,
) -> Result<TrainLog, TrainError> {
    let mut log = TrainLog::default();
    let mut trials_seen = 0usize;
    let mut next_eval = 0usize;
    let mut loss_acc = 0.0;
    let mut loss_n = 0usize;

    let evaluate = |net: &SingleSpikeNet,
                        trials_seen: usize,
                        loss_acc: &mut f64,
                        loss_n: &mut usize,
                        log: &mut TrainLog| {
        log.eval_trials.push(trials_seen);
        log.acc_task1.push(crate::model::accuracy_on(net, templates, TaskId::Task1));
        log.acc_task2.push(crate::model::accuracy_on(net, templates, TaskId::Task2));
        log.mean_loss.push(if *loss_n > 0 { *loss_acc / *loss_n as f64 } else { 0.0 });
        let (ctx, other) = net.context_weight_summary();
        log.context_weight_abs.push(ctx);
        log.other_weight_abs.push(other);
        *loss_acc = 0.0;
        *loss_n = 0;
    };

    evaluate(net, 0, &mut loss_acc, &mut loss_n, &mut log);
    next_eval += cfg.eval_every;

    for batch in curriculum.trials.chunks(cfg.batch_size) {
        for _ in 0..cfg.schedule.i_m {
            let mut grads = SingleGrads::zeros_like(net);
            for stim in batch {
                let trace = forward(net, &stim.features, stim.context);
                let loss = backward_global(
                    net,
                    &trace,
                    &stim.features,
                    stim.reward as f64,
                    cfg.reward_mode,
                    &mut grads,
                );
                if !loss.is_finite() {
                    return Err(TrainError::DivergedLoss(trials_seen));
                }
                loss_acc += loss;
                loss_n += 1;
            }
            grads.clip_global_norm(GRAD_CLIP_NORM);
            grads.scale(cfg.learning_rate / batch.len() as f64);
            for (w, g) in net.enc_w.data.iter_mut().zip(&grads.enc_w.data) {
                *w -= g;
            }
            for (b, g) in net.enc_b.iter_mut().zip(&grads.enc_b) {
                *b -= g;
            }
            for (w, g) in net.hidden_w.data.iter_mut().zip(&grads.hidden_w.data) {
                *w -= g;
            }
            for (w, g) in net.out_w.data.iter_mut().zip(&grads.out_w.data) {
                *w -= g;
            }
            enforce_weight_sum_floor(net);
        }
        for _ in 0..cfg.schedule.i_n {
            for stim in batch {
                let trace = forward(net, &stim.features, stim.context);
                apply_context_stdp(net, &trace, stim.context, &cfg.stdp);
            }
        }
        trials_seen += batch.len();
        while trials_seen >= next_eval {
            evaluate(net, trials_seen, &mut loss_acc, &mut loss_n, &mut log);
            next_eval += cfg.eval_every;
        }
    }
    Ok(log)
}
