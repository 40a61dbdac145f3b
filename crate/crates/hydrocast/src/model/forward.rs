//! Batched forward pass on the autodiff tape.
//!
//! One training or prediction batch stacks B (gauge, issue date) pairs.
//! Every tensor that varies over time is a per-step matrix `[B x width]`,
//! so each LSTM step is two matmuls over the whole batch rather than B
//! small ones. The tape holds every intermediate, which bounds batch and
//! window sizes; callers chunk prediction batches accordingly.

use super::density::DensityParams;
use super::{ForecastModelState, LstmWeights, ModelConfig, ModelError};
use crate::autodiff::{Graph, NodeId, Tensor};
use crate::data::BasinInputs;

/// Tape node ids of one LSTM's weights.
#[derive(Debug, Clone, Copy)]
pub struct LstmNodes {
    pub w_input: NodeId,
    pub w_hidden: NodeId,
    pub bias: NodeId,
}

/// Tape node ids of every parameter, in [`ForecastModelState::named_params`]
/// order so gradients can be zipped back onto optimizer state.
#[derive(Debug, Clone)]
pub struct StateNodes {
    pub encoder: LstmNodes,
    pub decoder: LstmNodes,
    pub cell_transfer: (NodeId, NodeId),
    pub hidden_transfer: (NodeId, NodeId),
    pub heads: Vec<(NodeId, NodeId)>,
    pub hidden_size: usize,
}

impl StateNodes {
    pub fn ordered(&self) -> Vec<NodeId> {
        let mut out = vec![
            self.encoder.w_input,
            self.encoder.w_hidden,
            self.encoder.bias,
            self.decoder.w_input,
            self.decoder.w_hidden,
            self.decoder.bias,
            self.cell_transfer.0,
            self.cell_transfer.1,
            self.hidden_transfer.0,
            self.hidden_transfer.1,
        ];
        for (w, b) in &self.heads {
            out.push(*w);
            out.push(*b);
        }
        out
    }
}

/// Put every parameter on the tape as a differentiable leaf.
pub fn stage_state(g: &mut Graph, state: &ForecastModelState) -> StateNodes {
    let stage_lstm = |g: &mut Graph, w: &LstmWeights| LstmNodes {
        w_input: g.leaf(w.w_input.clone()),
        w_hidden: g.leaf(w.w_hidden.clone()),
        bias: g.leaf(w.bias.clone()),
    };
    let encoder = stage_lstm(g, &state.encoder);
    let decoder = stage_lstm(g, &state.decoder);
    let cell_transfer = (g.leaf(state.cell_transfer.w.clone()), g.leaf(state.cell_transfer.b.clone()));
    let hidden_transfer =
        (g.leaf(state.hidden_transfer.w.clone()), g.leaf(state.hidden_transfer.b.clone()));
    let heads = state
        .heads
        .iter()
        .map(|h| (g.leaf(h.w.clone()), g.leaf(h.b.clone())))
        .collect();
    StateNodes {
        encoder,
        decoder,
        cell_transfer,
        hidden_transfer,
        heads,
        hidden_size: state.hidden_size(),
    }
}

/// Inputs of one batch, already windowed, stacked, and NaN-checked.
#[derive(Debug, Clone)]
pub struct ForecastBatch {
    /// One `[batch x encoder_width]` matrix per hindcast day, oldest first.
    pub encoder_steps: Vec<Tensor>,
    /// One `[batch x decoder_width]` matrix per lead, lead 0 first.
    pub decoder_steps: Vec<Tensor>,
    /// `[batch x horizon]` standardized discharge; masked slots hold 0.
    pub targets: Tensor,
    /// `[batch x horizon]`, 1 where the target is observed, else 0.
    pub mask: Tensor,
    pub n_targets: usize,
    pub batch: usize,
}

/// Window and stack `(basin, issue index)` pairs into one batch. The issue
/// index addresses the basin's calendar axis; the hindcast window is the
/// `hindcast_length` days ending on the issue date, and leads run from the
/// issue date itself.
pub fn assemble_batch(
    pairs: &[(&BasinInputs, usize)],
    config: &ModelConfig,
) -> Result<ForecastBatch, ModelError> {
    let hc = config.hindcast_length;
    let horizon = config.horizon_steps;
    let batch = pairs.len();
    assert!(batch > 0, "empty batch");
    let enc_feat = pairs[0].0.hindcast.cols;
    let dec_feat = pairs[0].0.forecast.cols;
    let n_statics = pairs[0].0.statics.len();
    let enc_width = enc_feat + n_statics;
    let dec_width = dec_feat + if config.statics_to_decoder { n_statics } else { 0 };

    let mut encoder_steps = vec![vec![0.0; batch * enc_width]; hc];
    let mut decoder_steps = vec![vec![0.0; batch * dec_width]; horizon];
    let mut targets = vec![0.0; batch * horizon];
    let mut mask = vec![0.0; batch * horizon];
    let mut n_targets = 0usize;

    for (row, &(inputs, t)) in pairs.iter().enumerate() {
        let axis_len = inputs.axis.len();
        if t + 1 < hc || t + horizon > axis_len {
            return Err(ModelError::BadIssueIndex { index: t, axis_len });
        }
        debug_assert_eq!(inputs.hindcast.cols, enc_feat);
        debug_assert_eq!(inputs.forecast.cols, dec_feat);
        debug_assert_eq!(inputs.statics.len(), n_statics);
        for step in 0..hc {
            let day = t + 1 - hc + step;
            let dst = &mut encoder_steps[step][row * enc_width..(row + 1) * enc_width];
            dst[..enc_feat].copy_from_slice(inputs.hindcast.row(day));
            dst[enc_feat..].copy_from_slice(&inputs.statics);
        }
        for lead in 0..horizon {
            let day = t + lead;
            let dst = &mut decoder_steps[lead][row * dec_width..(row + 1) * dec_width];
            dst[..dec_feat].copy_from_slice(inputs.forecast.row(day));
            if config.statics_to_decoder {
                dst[dec_feat..].copy_from_slice(&inputs.statics);
            }
            if let Some(y) = inputs.target_std[day] {
                targets[row * horizon + lead] = y;
                mask[row * horizon + lead] = 1.0;
                n_targets += 1;
            }
        }
    }

    let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
    if !encoder_steps.iter().all(|s| finite(s))
        || !decoder_steps.iter().all(|s| finite(s))
        || !finite(&targets)
    {
        return Err(ModelError::NonFiniteInput);
    }

    let to_tensor = |cols: usize, data: Vec<f64>| Tensor::from_vec(vec![batch, cols], data).unwrap();
    Ok(ForecastBatch {
        encoder_steps: encoder_steps.into_iter().map(|d| to_tensor(enc_width, d)).collect(),
        decoder_steps: decoder_steps.into_iter().map(|d| to_tensor(dec_width, d)).collect(),
        targets: to_tensor(horizon, targets),
        mask: to_tensor(horizon, mask),
        n_targets,
        batch,
    })
}

fn lstm_step(
    g: &mut Graph,
    w: &LstmNodes,
    hidden: usize,
    x: NodeId,
    h: NodeId,
    c: NodeId,
) -> Result<(NodeId, NodeId), ModelError> {
    let xi = g.matmul(x, w.w_input)?;
    let hh = g.matmul(h, w.w_hidden)?;
    let pre = g.add(xi, hh)?;
    let pre = g.add_row(pre, w.bias)?;
    let i_raw = g.slice_cols(pre, 0, hidden)?;
    let f_raw = g.slice_cols(pre, hidden, 2 * hidden)?;
    let g_raw = g.slice_cols(pre, 2 * hidden, 3 * hidden)?;
    let o_raw = g.slice_cols(pre, 3 * hidden, 4 * hidden)?;
    let i = g.sigmoid(i_raw);
    let f = g.sigmoid(f_raw);
    let cand = g.tanh(g_raw);
    let o = g.sigmoid(o_raw);
    let kept = g.mul(f, c)?;
    let written = g.mul(i, cand)?;
    let c_new = g.add(kept, written)?;
    let c_act = g.tanh(c_new);
    let h_new = g.mul(o, c_act)?;
    Ok((h_new, c_new))
}

/// Run the hindcast LSTM over `steps`, returning final `(hidden, cell)`.
pub fn run_encoder(
    g: &mut Graph,
    w: &LstmNodes,
    hidden: usize,
    steps: &[Tensor],
) -> Result<(NodeId, NodeId), ModelError> {
    let batch = steps[0].shape()[0];
    let mut h = g.constant(Tensor::zeros(vec![batch, hidden]));
    let mut c = g.constant(Tensor::zeros(vec![batch, hidden]));
    for step in steps {
        let x = g.constant(step.clone());
        (h, c) = lstm_step(g, w, hidden, x, h, c)?;
    }
    Ok((h, c))
}

/// Map encoder state to decoder initial state. The cell goes through a
/// linear layer, the hidden state through a tanh layer; both start as
/// identity maps at initialization.
pub fn transfer_state(
    g: &mut Graph,
    nodes: &StateNodes,
    h: NodeId,
    c: NodeId,
) -> Result<(NodeId, NodeId), ModelError> {
    let c_lin = g.matmul(c, nodes.cell_transfer.0)?;
    let c0 = g.add_row(c_lin, nodes.cell_transfer.1)?;
    let h_lin = g.matmul(h, nodes.hidden_transfer.0)?;
    let h_aff = g.add_row(h_lin, nodes.hidden_transfer.1)?;
    let h0 = g.tanh(h_aff);
    Ok((h0, c0))
}

/// Run the forecast LSTM, returning the hidden state after each lead.
pub fn run_decoder(
    g: &mut Graph,
    w: &LstmNodes,
    hidden: usize,
    steps: &[Tensor],
    h0: NodeId,
    c0: NodeId,
) -> Result<Vec<NodeId>, ModelError> {
    let (mut h, mut c) = (h0, c0);
    let mut hiddens = Vec::with_capacity(steps.len());
    for step in steps {
        let x = g.constant(step.clone());
        (h, c) = lstm_step(g, w, hidden, x, h, c)?;
        hiddens.push(h);
    }
    Ok(hiddens)
}

/// Density parameters for a whole batch, each `[batch x horizon]`.
#[derive(Debug, Clone, Copy)]
pub struct ForwardOutput {
    pub location: NodeId,
    pub scale: NodeId,
    pub asymmetry: NodeId,
}

/// Full forward pass: encoder, state transfer, decoder, output heads.
/// Raw head outputs become density parameters here: softplus plus a floor
/// keeps the scale positive, and a squashed sigmoid keeps the asymmetry
/// inside an open interval.
pub fn build_forward(
    g: &mut Graph,
    nodes: &StateNodes,
    batch: &ForecastBatch,
    config: &ModelConfig,
) -> Result<ForwardOutput, ModelError> {
    let hidden = nodes.hidden_size;
    let (h_end, c_end) = run_encoder(g, &nodes.encoder, hidden, &batch.encoder_steps)?;
    let (h0, c0) = transfer_state(g, nodes, h_end, c_end)?;
    let hiddens = run_decoder(g, &nodes.decoder, hidden, &batch.decoder_steps, h0, c0)?;

    let margin = config.asymmetry_margin;
    let mut locations = Vec::with_capacity(hiddens.len());
    let mut scales = Vec::with_capacity(hiddens.len());
    let mut asymmetries = Vec::with_capacity(hiddens.len());
    for (lead, &h) in hiddens.iter().enumerate() {
        let (w, b) = if config.per_lead_heads { nodes.heads[lead] } else { nodes.heads[0] };
        let lin = g.matmul(h, w)?;
        let out = g.add_row(lin, b)?;
        locations.push(g.slice_cols(out, 0, 1)?);
        let raw_scale = g.slice_cols(out, 1, 2)?;
        let sp = g.softplus(raw_scale);
        scales.push(g.add_const(sp, config.scale_floor));
        let raw_asym = g.slice_cols(out, 2, 3)?;
        let sig = g.sigmoid(raw_asym);
        let squeezed = g.scale(sig, 1.0 - 2.0 * margin);
        asymmetries.push(g.add_const(squeezed, margin));
    }
    Ok(ForwardOutput {
        location: g.concat_cols(&locations)?,
        scale: g.concat_cols(&scales)?,
        asymmetry: g.concat_cols(&asymmetries)?,
    })
}

/// Mean negative log-likelihood over the batch's unmasked targets, as a
/// scalar tape node. The check loss enters the tape as an elementwise max
/// of its two linear pieces, so its gradient is exact away from zero.
pub fn build_nll_loss(
    g: &mut Graph,
    out: &ForwardOutput,
    batch: &ForecastBatch,
) -> Result<NodeId, ModelError> {
    if batch.n_targets == 0 {
        return Err(ModelError::NoTargets);
    }
    let y = g.constant(batch.targets.clone());
    let mask = g.constant(batch.mask.clone());

    let resid = g.sub(y, out.location)?;
    let u = g.div(resid, out.scale)?;
    let tu = g.mul(out.asymmetry, u)?;
    let t_minus_1 = g.add_const(out.asymmetry, -1.0);
    let t1u = g.mul(t_minus_1, u)?;
    let rho = g.max(tu, t1u)?;

    let log_scale = g.log(out.scale);
    let neg_t = g.scale(out.asymmetry, -1.0);
    let one_minus_t = g.add_const(neg_t, 1.0);
    let t_prod = g.mul(out.asymmetry, one_minus_t)?;
    let log_norm = g.log(t_prod);

    let per_elem = g.sub(log_scale, log_norm)?;
    let per_elem = g.add(per_elem, rho)?;
    let masked = g.mul(per_elem, mask)?;
    let total = g.sum_all(masked);
    Ok(g.scale(total, 1.0 / batch.n_targets as f64))
}

/// Read the forward output back off the tape as plain density parameters,
/// row-major: `result[b][lead]`.
pub fn extract_densities(g: &Graph, out: &ForwardOutput) -> Vec<Vec<DensityParams>> {
    let loc = g.value(out.location);
    let scale = g.value(out.scale);
    let asym = g.value(out.asymmetry);
    let (rows, cols) = (loc.shape()[0], loc.shape()[1]);
    (0..rows)
        .map(|r| {
            (0..cols)
                .map(|c| DensityParams {
                    location: loc.data()[r * cols + c],
                    scale: scale.data()[r * cols + c],
                    asymmetry: asym.data()[r * cols + c],
                })
                .collect()
        })
        .collect()
}
