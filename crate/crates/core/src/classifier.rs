//! Role scoring and local argmax decoding.

use crate::autodiff::{softmax, Tape, Var};
use crate::conll::PredicateInstance;
use crate::encoder::{encode, EncoderStates};
use crate::error::{Error, Result};
use crate::model::{ClassifierParams, InstanceFeatures, SrlModel};

/// `W_r v_i`
pub fn score_basic(tape: &mut Tape, weights: Var, v_i: Var) -> Result<Var> {
    tape.matmul(weights, v_i)
}

/// `W_r (v_i ∘ v_p)`
pub fn score_with_predicate(tape: &mut Tape, weights: Var, v_i: Var, v_p: Var) -> Result<Var> {
    let joined = tape.concat(&[v_i, v_p], 0)?;
    tape.matmul(weights, joined)
}

/// All `W_{l,r} = ReLU(U (u_l ∘ v_r))` for one lemma, stacked as an
/// `[R × 4·d_h]` matrix.
pub fn compositional_weights(tape: &mut Tape, combine: Var, roles: Var, lemma: Var) -> Result<Var> {
    let role_shape = tape.shape(roles).to_vec();
    let lemma_shape = tape.shape(lemma).to_vec();
    if role_shape.len() != 2 || lemma_shape.len() != 1 {
        return Err(Error::shape("compositional_weights", &role_shape, &lemma_shape));
    }
    let r = role_shape[0];
    let row = tape.reshape(lemma, &[1, lemma_shape[0]])?;
    let repeated = tape.concat(&vec![row; r], 0)?;
    let pairs = tape.concat(&[repeated, roles], 1)?;
    let u_t = tape.transpose(combine)?;
    let pre = tape.matmul(pairs, u_t)?;
    tape.relu(pre)
}

/// `W_{l,r} · (v_i ∘ v_p)` for every role, given the stacked weights.
pub fn score_compositional(tape: &mut Tape, weights: Var, v_i: Var, v_p: Var) -> Result<Var> {
    score_with_predicate(tape, weights, v_i, v_p)
}

/// Classifier weights recorded once per predicate instance.
#[derive(Clone, Copy, Debug)]
pub enum ClassifierVars {
    Basic(Var),
    PredicateState(Var),
    /// Already composed for the instance's predicate lemma.
    Compositional(Var),
}

impl ClassifierVars {
    pub fn record(tape: &mut Tape, model: &SrlModel, predicate_lemma: usize) -> Result<Self> {
        Ok(match model.layout.classifier {
            ClassifierParams::Basic { weights } => ClassifierVars::Basic(tape.param(weights)),
            ClassifierParams::PredicateState { weights } => ClassifierVars::PredicateState(tape.param(weights)),
            ClassifierParams::Compositional { combine, roles, lemmas } => {
                let u = tape.param(combine);
                let v_r = tape.param(roles);
                let u_l = tape.lookup(lemmas, predicate_lemma)?;
                ClassifierVars::Compositional(compositional_weights(tape, u, v_r, u_l)?)
            }
        })
    }

    pub fn logits(&self, tape: &mut Tape, v_i: Var, v_p: Var) -> Result<Var> {
        match *self {
            ClassifierVars::Basic(w) => score_basic(tape, w, v_i),
            ClassifierVars::PredicateState(w) => score_with_predicate(tape, w, v_i, v_p),
            ClassifierVars::Compositional(w) => score_compositional(tape, w, v_i, v_p),
        }
    }
}

/// Per-token logits for an encoded instance.
pub fn instance_logits(
    tape: &mut Tape,
    model: &SrlModel,
    feats: &InstanceFeatures,
    states: &EncoderStates,
) -> Result<Vec<Var>> {
    let cls = ClassifierVars::record(tape, model, feats.predicate_lemma())?;
    states
        .states
        .iter()
        .map(|&v| cls.logits(tape, v, states.predicate))
        .collect()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Role distribution for every token of an already mapped instance.
pub fn feature_distributions(model: &SrlModel, feats: &InstanceFeatures) -> Result<Vec<Vec<f64>>> {
    let mut tape = Tape::with_params(&model.params);
    let states = encode(&mut tape, model, feats, None)?;
    let logits = instance_logits(&mut tape, model, feats, &states)?;
    Ok(logits.iter().map(|&l| softmax(tape.value(l))).collect())
}

pub fn role_distributions(model: &SrlModel, instance: &PredicateInstance) -> Result<Vec<Vec<f64>>> {
    feature_distributions(model, &model.features(instance))
}

/// Local decoding: each token takes its most probable role on its own.
pub fn predict_roles(model: &SrlModel, instance: &PredicateInstance) -> Result<Vec<usize>> {
    Ok(role_distributions(model, instance)?.iter().map(|d| argmax(d)).collect())
}

/// Role labels for each token, `None` for NULL.
pub fn predict_labels(model: &SrlModel, instance: &PredicateInstance) -> Result<Vec<Option<String>>> {
    Ok(predict_roles(model, instance)?
        .into_iter()
        .map(|id| model.vocab.role_label(id).map(str::to_string))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{ParamStore, Tensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn zero_weights_give_uniform_distribution() {
        let mut tape = Tape::new();
        let w = tape.zeros(&[3, 4]);
        let v = tape.constant(&[4], vec![1.0, -2.0, 3.0, 0.5]).unwrap();
        let l = score_basic(&mut tape, w, v).unwrap();
        assert_eq!(softmax(tape.value(l)), vec![1.0 / 3.0; 3]);
        assert_eq!(argmax(tape.value(l)), 0);
    }

    #[test]
    fn selector_rows() {
        let mut tape = Tape::new();
        let w = tape.constant(&[2, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        let v = tape.constant(&[3], vec![3.0, 1.0, 0.0]).unwrap();
        let l = score_basic(&mut tape, w, v).unwrap();
        assert_eq!(tape.value(l), &[3.0, 1.0]);
    }

    #[test]
    fn predicate_state_with_equal_halves() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (r, d) = (3, 4);
        let w = random(&mut rng, r * 2 * d);
        let v = random(&mut rng, d);
        let mut summed = vec![0.0; r * d];
        for i in 0..r {
            for j in 0..d {
                summed[i * d + j] = w[i * 2 * d + j] + w[i * 2 * d + d + j];
            }
        }
        let mut tape = Tape::new();
        let wv = tape.constant(&[r, 2 * d], w).unwrap();
        let sv = tape.constant(&[r, d], summed).unwrap();
        let vi = tape.constant(&[d], v).unwrap();
        let a = score_with_predicate(&mut tape, wv, vi, vi).unwrap();
        let b = score_basic(&mut tape, sv, vi).unwrap();
        for (x, y) in tape.value(a).iter().zip(tape.value(b)) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn compositional_matches_per_role_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (r, dl, dr, h2) = (4, 3, 2, 6);
        let u = random(&mut rng, 2 * h2 * (dl + dr));
        let roles = random(&mut rng, r * dr);
        let lemma = random(&mut rng, dl);
        let vi = random(&mut rng, h2);
        let vp = random(&mut rng, h2);

        let mut tape = Tape::new();
        let uv = tape.constant(&[2 * h2, dl + dr], u.clone()).unwrap();
        let rv = tape.constant(&[r, dr], roles.clone()).unwrap();
        let lv = tape.constant(&[dl], lemma.clone()).unwrap();
        let iv = tape.constant(&[h2], vi.clone()).unwrap();
        let pv = tape.constant(&[h2], vp.clone()).unwrap();
        let w = compositional_weights(&mut tape, uv, rv, lv).unwrap();
        let logits = score_compositional(&mut tape, w, iv, pv).unwrap();

        let both: Vec<f64> = vi.iter().chain(&vp).copied().collect();
        for role in 0..r {
            let pair: Vec<f64> = lemma
                .iter()
                .chain(&roles[role * dr..(role + 1) * dr])
                .copied()
                .collect();
            let mut logit = 0.0;
            for row in 0..2 * h2 {
                let mut s = 0.0;
                for (k, p) in pair.iter().enumerate() {
                    s += u[row * (dl + dr) + k] * p;
                }
                logit += s.max(0.0) * both[row];
            }
            assert!((tape.value(logits)[role] - logit).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_combine_gives_uniform() {
        let mut tape = Tape::new();
        let u = tape.zeros(&[4, 3]);
        let roles = tape.constant(&[3, 2], vec![1.0; 6]).unwrap();
        let lemma = tape.constant(&[1], vec![2.0]).unwrap();
        let v = tape.constant(&[2], vec![5.0, -5.0]).unwrap();
        let w = compositional_weights(&mut tape, u, roles, lemma).unwrap();
        let l = score_compositional(&mut tape, w, v, v).unwrap();
        assert_eq!(tape.value(l), &[0.0; 3]);
    }

    #[test]
    fn equal_lemma_rows_give_equal_logits() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let row = random(&mut rng, 3);
        let table: Vec<f64> = row.iter().chain(&row).copied().collect();
        let lemmas = store.add("lemmas", Tensor::matrix(2, 3, table).unwrap());
        let u = store.add("u", Tensor::matrix(4, 5, random(&mut rng, 20)).unwrap());
        let roles = store.add("roles", Tensor::matrix(3, 2, random(&mut rng, 6)).unwrap());
        let mut tape = Tape::with_params(&store);
        let v = tape.constant(&[2], vec![0.3, -0.7]).unwrap();
        let mut out = Vec::new();
        for l in 0..2 {
            let uv = tape.param(u);
            let rv = tape.param(roles);
            let lv = tape.lookup(lemmas, l).unwrap();
            let w = compositional_weights(&mut tape, uv, rv, lv).unwrap();
            let logits = score_compositional(&mut tape, w, v, v).unwrap();
            out.push(tape.value(logits).to_vec());
        }
        assert_eq!(out[0], out[1]);
    }

    #[test]
    fn compositional_can_express_predicate_state_table() {
        // Two roles, one lemma. One-hot role embeddings select a column of U,
        // so ReLU(U(u_l ∘ v_r)) can be any non-negative row. Shifting every
        // row by the same vector changes logits by a role-independent amount,
        // which leaves the distribution unchanged.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let width = 6;
        let table = random(&mut rng, 2 * width);
        let shift: Vec<f64> = (0..width).map(|j| -table[j].min(table[width + j])).collect();
        let mut u = vec![0.0; width * 3];
        for j in 0..width {
            for r in 0..2 {
                u[j * 3 + 1 + r] = table[r * width + j] + shift[j];
            }
        }
        let mut tape = Tape::new();
        let w = tape.constant(&[2, width], table).unwrap();
        let uv = tape.constant(&[width, 3], u).unwrap();
        let roles = tape.constant(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let lemma = tape.constant(&[1], vec![0.0]).unwrap();
        let comp = compositional_weights(&mut tape, uv, roles, lemma).unwrap();
        for _ in 0..5 {
            let vi = tape.constant(&[width / 2], random(&mut rng, width / 2)).unwrap();
            let vp = tape.constant(&[width / 2], random(&mut rng, width / 2)).unwrap();
            let a = score_with_predicate(&mut tape, w, vi, vp).unwrap();
            let b = score_compositional(&mut tape, comp, vi, vp).unwrap();
            let (pa, pb) = (softmax(tape.value(a)), softmax(tape.value(b)));
            for (x, y) in pa.iter().zip(&pb) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.5, 0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.1, 0.7, 0.7]), 1);
        assert_eq!(argmax(&[-1.0, -3.0, 2.0]), 2);
    }
}
