//! Word representations and the stacked bidirectional LSTM.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::model::{InstanceFeatures, LstmDirection, LstmLayer, SrlModel};
use crate::vocab::UNK;

/// Top-layer states of one predicate instance.
#[derive(Clone, Debug)]
pub struct EncoderStates {
    /// `v_i` for every token, width `2·d_h`.
    pub states: Vec<Var>,
    /// `v_p`, the state at the predicate position.
    pub predicate: Var,
}

/// Tape handles for the weights of one LSTM direction.
#[derive(Clone, Copy, Debug)]
pub struct DirectionVars {
    pub w_input: Var,
    pub w_hidden: Var,
    pub bias: Var,
    pub hidden: usize,
}

impl DirectionVars {
    pub fn record(tape: &mut Tape, dir: &LstmDirection) -> Self {
        let w_input = tape.param(dir.w_input);
        let w_hidden = tape.param(dir.w_hidden);
        let bias = tape.param(dir.bias);
        let hidden = tape.shape(w_hidden)[1];
        DirectionVars {
            w_input,
            w_hidden,
            bias,
            hidden,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LayerVars {
    pub forward: DirectionVars,
    pub backward: DirectionVars,
}

impl LayerVars {
    pub fn record(tape: &mut Tape, layer: &LstmLayer) -> Self {
        LayerVars {
            forward: DirectionVars::record(tape, &layer.forward),
            backward: DirectionVars::record(tape, &layer.backward),
        }
    }
}

/// Tokens replaced by UNK through word dropout.
#[derive(Clone, Copy, Debug)]
pub struct DroppedWords<'a> {
    pub mask: &'a [bool],
    /// Also swap the pretrained vector for its UNK row.
    pub pretrained: bool,
}

/// Per-token input vectors `x^re ∘ x^pe ∘ x^pos ∘ x^le ∘ flag`.
///
/// Pass `None` for `dropped` at evaluation time.
///
/// With the predicate flag enabled the lemma block is filled only at the
/// current predicate. Without it, the lemma block is filled at every
/// predicate of the sentence so that the input no longer depends on which
/// predicate is being labeled.
pub fn represent_words(
    tape: &mut Tape,
    model: &SrlModel,
    feats: &InstanceFeatures,
    dropped: Option<DroppedWords<'_>>,
) -> Result<Vec<Var>> {
    let cfg = &model.config;
    let n = feats.len();
    if let Some(d) = dropped {
        if d.mask.len() != n {
            return Err(Error::shape("represent_words", &[d.mask.len()], &[n]));
        }
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let is_dropped = dropped.is_some_and(|d| d.mask[i]);
        let word_id = if is_dropped { UNK } else { feats.words[i] };
        let word = tape.lookup(model.layout.word, word_id)?;

        let drop_pre = is_dropped && dropped.is_some_and(|d| d.pretrained);
        let pre_row = if drop_pre { None } else { feats.pretrained[i] };
        let pre = tape.constant(&[cfg.d_pretrained], model.pretrained.vector(pre_row).to_vec())?;

        let pos = if cfg.use_pos {
            tape.lookup(model.layout.pos, feats.pos[i])?
        } else {
            tape.zeros(&[cfg.d_pos])
        };

        let is_current = i == feats.predicate;
        let lemma_active = if cfg.use_predicate_flag {
            is_current
        } else {
            feats.lemmas[i].is_some()
        };
        let lemma = match feats.lemmas[i] {
            Some(l) if lemma_active => tape.lookup(model.layout.lemma, l)?,
            _ => tape.zeros(&[cfg.d_lemma]),
        };

        let flag_value = if cfg.use_predicate_flag && is_current { 1.0 } else { 0.0 };
        let flag = tape.constant(&[1], vec![flag_value])?;
        out.push(tape.concat(&[word, pre, pos, lemma, flag], 0)?);
    }
    Ok(out)
}

/// One LSTM step with input, forget and output gates and no peepholes.
pub fn lstm_step(tape: &mut Tape, x: Var, h_prev: Var, c_prev: Var, dir: &DirectionVars) -> Result<(Var, Var)> {
    let h = dir.hidden;
    let wx = tape.matmul(dir.w_input, x)?;
    let uh = tape.matmul(dir.w_hidden, h_prev)?;
    let pre = tape.add(wx, uh)?;
    let pre = tape.add(pre, dir.bias)?;
    let i_pre = tape.slice(pre, 0, h)?;
    let f_pre = tape.slice(pre, h, h)?;
    let g_pre = tape.slice(pre, 2 * h, h)?;
    let o_pre = tape.slice(pre, 3 * h, h)?;
    let i = tape.sigmoid(i_pre)?;
    let f = tape.sigmoid(f_pre)?;
    let g = tape.tanh(g_pre)?;
    let o = tape.sigmoid(o_pre)?;
    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let c_act = tape.tanh(c)?;
    let h_t = tape.mul(o, c_act)?;
    Ok((h_t, c))
}

fn run_direction(tape: &mut Tape, inputs: &[Var], dir: &DirectionVars, reverse: bool) -> Result<Vec<Var>> {
    let n = inputs.len();
    let mut h = tape.zeros(&[dir.hidden]);
    let mut c = tape.zeros(&[dir.hidden]);
    let mut out = vec![h; n];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..n).rev())
    } else {
        Box::new(0..n)
    };
    for t in order {
        let (h_t, c_t) = lstm_step(tape, inputs[t], h, c, dir)?;
        h = h_t;
        c = c_t;
        out[t] = h;
    }
    Ok(out)
}

/// Runs the stacked BiLSTM over arbitrary input vectors and returns the
/// top layer's `forward ∘ backward` state at every position.
pub fn encode_sequence(tape: &mut Tape, layers: &[LayerVars], inputs: &[Var]) -> Result<Vec<Var>> {
    if inputs.is_empty() {
        return Err(Error::Data("cannot encode an empty sentence".into()));
    }
    let mut current = inputs.to_vec();
    for layer in layers {
        let fwd = run_direction(tape, &current, &layer.forward, false)?;
        let bwd = run_direction(tape, &current, &layer.backward, true)?;
        current = fwd
            .iter()
            .zip(&bwd)
            .map(|(&f, &b)| tape.concat(&[f, b], 0))
            .collect::<Result<_>>()?;
    }
    Ok(current)
}

pub fn encode(
    tape: &mut Tape,
    model: &SrlModel,
    feats: &InstanceFeatures,
    dropped: Option<DroppedWords<'_>>,
) -> Result<EncoderStates> {
    if feats.is_empty() {
        return Err(Error::Data("cannot encode an empty sentence".into()));
    }
    let inputs = represent_words(tape, model, feats, dropped)?;
    let layers: Vec<LayerVars> = model.layout.layers.iter().map(|l| LayerVars::record(tape, l)).collect();
    let states = encode_sequence(tape, &layers, &inputs)?;
    let predicate = states[feats.predicate];
    Ok(EncoderStates { states, predicate })
}
