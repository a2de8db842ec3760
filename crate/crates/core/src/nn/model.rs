use std::collections::VecDeque;

use rand::Rng;

use super::linalg::{gemm, View};
use super::params::{axpy, dot, Parameters};
use super::{ModelConfig, Mode};
use crate::error::{Error, Result};
use crate::trajectory::Token;

/// A token window and the token that follows it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub window: Vec<Token>,
    pub next: Token,
}

/// Tokens run through the network from a zero recurrent state, with
/// predictions read out at selected timesteps.
///
/// The prediction at timestep `t` attends over the last `span` timesteps up
/// to and including `t`, so several targets can share one run.
#[derive(Clone, Debug)]
pub struct Run<'a> {
    pub tokens: &'a [Token],
    /// `(timestep, expected next token)` pairs.
    pub targets: Vec<(usize, Token)>,
    pub span: usize,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    v.iter_mut().for_each(|x| *x /= sum);
}

/// Turns gate pre-activations into i, f, g, o and advances the cell.
fn activate(hidden: usize, gates: &mut [f64], c_prev: &[f64], c: &mut [f64], tanh_c: &mut [f64], h: &mut [f64]) {
    let (ig, rest) = gates.split_at_mut(hidden);
    let (fg, rest) = rest.split_at_mut(hidden);
    let (gg, og) = rest.split_at_mut(hidden);
    for j in 0..hidden {
        ig[j] = sigmoid(ig[j]);
        fg[j] = sigmoid(fg[j]);
        gg[j] = gg[j].tanh();
        og[j] = sigmoid(og[j]);
        c[j] = fg[j] * c_prev[j] + ig[j] * gg[j];
        tanh_c[j] = c[j].tanh();
        h[j] = og[j] * tanh_c[j];
    }
}

struct LayerCache {
    h: Vec<f64>,
    c: Vec<f64>,
    /// Post-activation gates, `n x 4·hidden`.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
    /// Scaled dropout mask over the layer output; empty when no dropout.
    mask: Vec<f64>,
}

struct RunCache {
    n: usize,
    emb_mask: Vec<f64>,
    /// `n x concat_size`: dropped embedding then each dropped layer output.
    concat: Vec<f64>,
    scores: Vec<f64>,
    layers: Vec<LayerCache>,
}

fn draw_mask(mode: &mut Mode<'_>, dropout: f64, len: usize) -> Vec<f64> {
    match mode {
        Mode::Train(rng) if dropout > 0.0 => {
            let keep = 1.0 / (1.0 - dropout);
            (0..len).map(|_| if rng.r#gen::<f64>() < dropout { 0.0 } else { keep }).collect()
        }
        _ => Vec::new(),
    }
}

fn check_tokens(cfg: &ModelConfig, tokens: &[Token]) -> Result<()> {
    if tokens.is_empty() {
        return Err(Error::Domain("empty token window".into()));
    }
    match tokens.iter().find(|&&t| t as usize >= cfg.vocab_size) {
        Some(t) => Err(Error::Domain(format!("token {t} outside vocabulary of {}", cfg.vocab_size))),
        None => Ok(()),
    }
}

fn run_forward(params: &Parameters, tokens: &[Token], mode: &mut Mode<'_>) -> RunCache {
    let cfg = &params.config;
    let (e, hsz, n) = (cfg.embedding_size, cfg.layer_size, tokens.len());
    let (c_dim, width) = (cfg.concat_size(), 4 * cfg.layer_size);
    let emb_mask = draw_mask(mode, cfg.dropout, n * e);
    let mut concat = vec![0.0; n * c_dim];
    let emb = params.embedding();
    for (t, &tok) in tokens.iter().enumerate() {
        let row = &mut concat[t * c_dim..t * c_dim + e];
        let tok = tok as usize;
        row.copy_from_slice(&emb[tok * e..(tok + 1) * e]);
        if !emb_mask.is_empty() {
            row.iter_mut().zip(&emb_mask[t * e..]).for_each(|(v, m)| *v *= m);
        }
    }

    let mut layers = Vec::with_capacity(cfg.n_layers);
    let zeros = vec![0.0; hsz];
    for l in 0..cfg.n_layers {
        let in_dim = if l == 0 { e } else { hsz };
        let in_lo = if l == 0 { 0 } else { e + (l - 1) * hsz };
        let out_lo = e + l * hsz;
        let weight = params.lstm_weight(l);
        let (w_x, w_h) = weight.split_at(in_dim * width);
        let mut layer = LayerCache {
            h: vec![0.0; n * hsz],
            c: vec![0.0; n * hsz],
            gates: params.lstm_bias(l).repeat(n),
            tanh_c: vec![0.0; n * hsz],
            mask: draw_mask(mode, cfg.dropout, n * hsz),
        };
        // input contributions for all timesteps at once
        gemm(
            1.0,
            View::new(&concat[in_lo..], n, in_dim, c_dim),
            View::new(w_x, in_dim, width, width),
            1.0,
            &mut layer.gates,
            width,
        );
        for t in 0..n {
            let (h_done, h_rest) = layer.h.split_at_mut(t * hsz);
            let (c_done, c_rest) = layer.c.split_at_mut(t * hsz);
            let gates = &mut layer.gates[t * width..(t + 1) * width];
            let c_prev = if t == 0 {
                &zeros[..]
            } else {
                let h_prev = &h_done[(t - 1) * hsz..];
                for (j, &hj) in h_prev.iter().enumerate() {
                    axpy(gates, hj, &w_h[j * width..(j + 1) * width]);
                }
                &c_done[(t - 1) * hsz..]
            };
            let h = &mut h_rest[..hsz];
            activate(hsz, gates, c_prev, &mut c_rest[..hsz], &mut layer.tanh_c[t * hsz..(t + 1) * hsz], h);
            let y = &mut concat[t * c_dim + out_lo..t * c_dim + out_lo + hsz];
            y.copy_from_slice(h);
            if !layer.mask.is_empty() {
                y.iter_mut().zip(&layer.mask[t * hsz..]).for_each(|(v, m)| *v *= m);
            }
        }
        layers.push(layer);
    }
    let scores = concat.chunks_exact(c_dim).map(|row| dot(params.attention(), row)).collect();
    RunCache { n, emb_mask, concat, scores, layers }
}

/// Attention weights, pooled features and logits for a set of readout timesteps.
struct Readouts {
    lo: Vec<usize>,
    /// Dense `m x n`; zero outside each target's span.
    alpha: Vec<f64>,
    z: Vec<f64>,
    logits: Vec<f64>,
}

fn run_readouts(params: &Parameters, cache: &RunCache, steps: &[usize], span: usize) -> Readouts {
    let cfg = &params.config;
    let (c_dim, v, n, m) = (cfg.concat_size(), cfg.vocab_size, cache.n, steps.len());
    let mut alpha = vec![0.0; m * n];
    let mut lo = Vec::with_capacity(m);
    for (i, &t) in steps.iter().enumerate() {
        let start = t + 1 - span.min(t + 1);
        let row = &mut alpha[i * n + start..=i * n + t];
        row.copy_from_slice(&cache.scores[start..=t]);
        softmax_in_place(row);
        lo.push(start);
    }
    let mut z = vec![0.0; m * c_dim];
    gemm(1.0, View::new(&alpha, m, n, n), View::new(&cache.concat, n, c_dim, c_dim), 0.0, &mut z, c_dim);
    let mut logits = params.output_bias().repeat(m);
    gemm(1.0, View::new(&z, m, c_dim, c_dim), View::new(params.output_weight(), c_dim, v, v), 1.0, &mut logits, v);
    Readouts { lo, alpha, z, logits }
}

/// Next-token logits after reading `window` from a fresh state.
pub fn forward_logits(params: &Parameters, window: &[Token], mut mode: Mode<'_>) -> Result<Vec<f64>> {
    check_tokens(&params.config, window)?;
    if window.len() > params.config.max_length {
        return Err(Error::Domain(format!(
            "window of {} tokens exceeds max_length {}",
            window.len(),
            params.config.max_length
        )));
    }
    let cache = run_forward(params, window, &mut mode);
    Ok(run_readouts(params, &cache, &[window.len() - 1], window.len()).logits)
}

/// Next-token probability distribution for a window of at most `max_length` tokens.
pub fn forward(params: &Parameters, window: &[Token], mode: Mode<'_>) -> Result<Vec<f64>> {
    let mut p = forward_logits(params, window, mode)?;
    softmax_in_place(&mut p);
    Ok(p)
}

/// Mean cross-entropy over the batch and its gradient for every parameter block.
pub fn loss_and_gradients(params: &Parameters, batch: &[Example], mode: Mode<'_>) -> Result<(f64, Parameters)> {
    if let Some(ex) = batch.iter().find(|ex| ex.window.len() > params.config.max_length) {
        return Err(Error::Domain(format!("window of {} tokens exceeds max_length", ex.window.len())));
    }
    let runs: Vec<Run<'_>> = batch
        .iter()
        .map(|ex| Run {
            tokens: &ex.window,
            targets: vec![(ex.window.len().saturating_sub(1), ex.next)],
            span: ex.window.len(),
        })
        .collect();
    loss_and_gradients_runs(params, &runs, mode)
}

/// Mean cross-entropy over every target of every run, with BPTT gradients.
pub fn loss_and_gradients_runs(params: &Parameters, runs: &[Run<'_>], mut mode: Mode<'_>) -> Result<(f64, Parameters)> {
    let cfg = &params.config;
    let total: usize = runs.iter().map(|r| r.targets.len()).sum();
    if total == 0 {
        return Err(Error::Domain("batch has no prediction targets".into()));
    }
    for run in runs {
        check_tokens(cfg, run.tokens)?;
        for &(t, label) in &run.targets {
            if t >= run.tokens.len() || label as usize >= cfg.vocab_size || run.span == 0 {
                return Err(Error::Domain(format!("invalid target ({t}, {label})")));
            }
        }
    }
    let scale = 1.0 / total as f64;
    let mut grads = params.zeros_like();
    let mut loss = 0.0;
    for run in runs {
        let cache = run_forward(params, run.tokens, &mut mode);
        loss += backward_run(params, run, &cache, scale, &mut grads);
    }
    Ok((loss * scale, grads))
}

fn add_column_sums(acc: &mut [f64], rows: &[f64]) {
    for row in rows.chunks_exact(acc.len()) {
        axpy(acc, 1.0, row);
    }
}

/// Accumulates `scale`-weighted gradients of one run; returns its summed loss.
fn backward_run(params: &Parameters, run: &Run<'_>, cache: &RunCache, scale: f64, grads: &mut Parameters) -> f64 {
    let cfg = &params.config;
    let (e, hsz, v, n_layers) = (cfg.embedding_size, cfg.layer_size, cfg.vocab_size, cfg.n_layers);
    let (c_dim, width, n) = (cfg.concat_size(), 4 * cfg.layer_size, cache.n);
    let steps: Vec<usize> = run.targets.iter().map(|&(t, _)| t).collect();
    let m = steps.len();
    let r = run_readouts(params, cache, &steps, run.span);

    // output layer
    let mut loss = 0.0;
    let mut dlogits = r.logits;
    for (row, &(_, label)) in dlogits.chunks_exact_mut(v).zip(&run.targets) {
        softmax_in_place(row);
        loss -= row[label as usize].max(f64::MIN_POSITIVE).ln();
        row[label as usize] -= 1.0;
        row.iter_mut().for_each(|d| *d *= scale);
    }
    let idx_out = 2 + 2 * n_layers;
    add_column_sums(&mut grads.blocks[idx_out + 1].data, &dlogits);
    gemm(
        1.0,
        View::new(&r.z, m, c_dim, c_dim).t(),
        View::new(&dlogits, m, v, v),
        1.0,
        &mut grads.blocks[idx_out].data,
        v,
    );
    let mut dz = vec![0.0; m * c_dim];
    gemm(
        1.0,
        View::new(&dlogits, m, v, v),
        View::new(params.output_weight(), c_dim, v, v).t(),
        0.0,
        &mut dz,
        c_dim,
    );

    // attention: dalpha becomes the score gradient in place
    let mut dalpha = vec![0.0; m * n];
    gemm(1.0, View::new(&dz, m, c_dim, c_dim), View::new(&cache.concat, n, c_dim, c_dim).t(), 0.0, &mut dalpha, n);
    let mut dscores = vec![0.0; n];
    for (i, &t) in steps.iter().enumerate() {
        let lo = r.lo[i];
        let a = &r.alpha[i * n + lo..=i * n + t];
        let d = &mut dalpha[i * n..(i + 1) * n];
        let weighted: f64 = a.iter().zip(&d[lo..=t]).map(|(x, y)| x * y).sum();
        for (k, ak) in (lo..=t).zip(a) {
            dscores[k] += ak * (d[k] - weighted);
        }
    }
    let mut dconcat = vec![0.0; n * c_dim];
    gemm(1.0, View::new(&r.alpha, m, n, n).t(), View::new(&dz, m, c_dim, c_dim), 0.0, &mut dconcat, c_dim);
    let attn = params.attention();
    {
        let dattn = &mut grads.blocks[1 + 2 * n_layers].data;
        for (t, &ds) in dscores.iter().enumerate() {
            if ds != 0.0 {
                axpy(dattn, ds, &cache.concat[t * c_dim..(t + 1) * c_dim]);
                axpy(&mut dconcat[t * c_dim..(t + 1) * c_dim], ds, attn);
            }
        }
    }

    // gradient w.r.t. the (dropped) input of the layer above
    let mut d_above: Vec<f64> = Vec::new();
    for l in (0..n_layers).rev() {
        let layer = &cache.layers[l];
        let in_dim = if l == 0 { e } else { hsz };
        let in_lo = if l == 0 { 0 } else { e + (l - 1) * hsz };
        let out_lo = e + l * hsz;
        let weight = params.lstm_weight(l);
        let (w_x, w_h) = weight.split_at(in_dim * width);
        let mut dpre_all = vec![0.0; n * width];
        let mut dh_next = vec![0.0; hsz];
        let mut dc_next = vec![0.0; hsz];
        for t in (0..n).rev() {
            let gates = &layer.gates[t * width..(t + 1) * width];
            let (ig, fg, gg, og) = (&gates[..hsz], &gates[hsz..2 * hsz], &gates[2 * hsz..3 * hsz], &gates[3 * hsz..]);
            let tanh_c = &layer.tanh_c[t * hsz..(t + 1) * hsz];
            let dpre = &mut dpre_all[t * width..(t + 1) * width];
            for j in 0..hsz {
                let mut dy = dconcat[t * c_dim + out_lo + j];
                if !d_above.is_empty() {
                    dy += d_above[t * hsz + j];
                }
                if !layer.mask.is_empty() {
                    dy *= layer.mask[t * hsz + j];
                }
                let dh = dy + dh_next[j];
                let c_prev = if t == 0 { 0.0 } else { layer.c[(t - 1) * hsz + j] };
                let d_o = dh * tanh_c[j];
                let dc = dc_next[j] + dh * og[j] * (1.0 - tanh_c[j] * tanh_c[j]);
                dc_next[j] = dc * fg[j];
                dpre[j] = dc * gg[j] * ig[j] * (1.0 - ig[j]);
                dpre[hsz + j] = dc * c_prev * fg[j] * (1.0 - fg[j]);
                dpre[2 * hsz + j] = dc * ig[j] * (1.0 - gg[j] * gg[j]);
                dpre[3 * hsz + j] = d_o * og[j] * (1.0 - og[j]);
            }
            for (j, dh) in dh_next.iter_mut().enumerate() {
                *dh = dot(&w_h[j * width..(j + 1) * width], dpre);
            }
        }
        add_column_sums(&mut grads.blocks[2 + 2 * l].data, &dpre_all);
        let dw = &mut grads.blocks[1 + 2 * l].data;
        let (dw_x, dw_h) = dw.split_at_mut(in_dim * width);
        gemm(
            1.0,
            View::new(&cache.concat[in_lo..], n, in_dim, c_dim).t(),
            View::new(&dpre_all, n, width, width),
            1.0,
            dw_x,
            width,
        );
        if n > 1 {
            gemm(
                1.0,
                View::new(&layer.h[..(n - 1) * hsz], n - 1, hsz, hsz).t(),
                View::new(&dpre_all[width..], n - 1, width, width),
                1.0,
                dw_h,
                width,
            );
        }
        let mut d_input = vec![0.0; n * in_dim];
        gemm(
            1.0,
            View::new(&dpre_all, n, width, width),
            View::new(w_x, in_dim, width, width).t(),
            0.0,
            &mut d_input,
            in_dim,
        );
        d_above = d_input;
    }

    let demb = &mut grads.blocks[0].data;
    for (t, &tok) in run.tokens.iter().enumerate() {
        let tok = tok as usize;
        for k in 0..e {
            let mut d = dconcat[t * c_dim + k] + d_above[t * e + k];
            if !cache.emb_mask.is_empty() {
                d *= cache.emb_mask[t * e + k];
            }
            demb[tok * e + k] += d;
        }
    }
    loss
}

/// Incremental eval-mode state for streaming generation: recurrent state is
/// carried forward and attention covers the trailing `max_length` steps.
#[derive(Clone, Debug)]
pub struct StreamState {
    h: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    history: VecDeque<(f64, Vec<f64>)>,
}

impl StreamState {
    pub fn new(config: &ModelConfig) -> Self {
        StreamState {
            h: vec![vec![0.0; config.layer_size]; config.n_layers],
            c: vec![vec![0.0; config.layer_size]; config.n_layers],
            history: VecDeque::with_capacity(config.max_length),
        }
    }

    pub fn push(&mut self, params: &Parameters, token: Token) -> Result<()> {
        let cfg = &params.config;
        check_tokens(cfg, &[token])?;
        let (e, hsz) = (cfg.embedding_size, cfg.layer_size);
        let mut row = vec![0.0; cfg.concat_size()];
        let tok = token as usize;
        row[..e].copy_from_slice(&params.embedding()[tok * e..(tok + 1) * e]);
        let width = 4 * hsz;
        let mut tanh_c = vec![0.0; hsz];
        for l in 0..cfg.n_layers {
            let in_dim = if l == 0 { e } else { hsz };
            let in_lo = if l == 0 { 0 } else { e + (l - 1) * hsz };
            let out_lo = e + l * hsz;
            let weight = params.lstm_weight(l);
            let mut gates = params.lstm_bias(l).to_vec();
            let (head, out) = row.split_at_mut(out_lo);
            let x = head[in_lo..in_lo + in_dim].iter().chain(&self.h[l]);
            for (k, &xk) in x.enumerate() {
                axpy(&mut gates, xk, &weight[k * width..(k + 1) * width]);
            }
            let c_prev = self.c[l].clone();
            activate(hsz, &mut gates, &c_prev, &mut self.c[l], &mut tanh_c, &mut self.h[l]);
            out[..hsz].copy_from_slice(&self.h[l]);
        }
        let score = dot(params.attention(), &row);
        if self.history.len() == cfg.max_length {
            self.history.pop_front();
        }
        self.history.push_back((score, row));
        Ok(())
    }

    /// Next-token logits given everything pushed so far.
    pub fn logits(&self, params: &Parameters) -> Result<Vec<f64>> {
        if self.history.is_empty() {
            return Err(Error::Domain("no tokens pushed yet".into()));
        }
        let cfg = &params.config;
        let (c_dim, v) = (cfg.concat_size(), cfg.vocab_size);
        let mut alpha: Vec<f64> = self.history.iter().map(|(s, _)| *s).collect();
        softmax_in_place(&mut alpha);
        let mut z = vec![0.0; c_dim];
        for (a, (_, row)) in alpha.iter().zip(&self.history) {
            axpy(&mut z, *a, row);
        }
        let mut logits = params.output_bias().to_vec();
        let w = params.output_weight();
        for (k, &zk) in z.iter().enumerate() {
            axpy(&mut logits, zk, &w[k * v..(k + 1) * v]);
        }
        Ok(logits)
    }
}
