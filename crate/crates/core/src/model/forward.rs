use super::{ModelParams, SimpleKt, Variant};
use crate::data::Batch;
use crate::error::{Error, Result};
use crate::numerics::{SeededRng, Tape, Tensor, Var};

const NORM_EPS: f64 = 1e-5;

/// Which earlier steps a position may attend to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HistoryMode {
    /// Every step strictly before the position.
    Step,
    /// Every step strictly before the first step of the position's
    /// interaction, so sibling KC steps of the same question are hidden.
    Interaction,
}

impl HistoryMode {
    /// Number of leading steps visible to each position of a row.
    pub fn limits(self, interactions: &[usize]) -> Vec<usize> {
        match self {
            HistoryMode::Step => (0..interactions.len()).collect(),
            HistoryMode::Interaction => {
                let mut starts = Vec::with_capacity(interactions.len());
                for p in 0..interactions.len() {
                    starts.push(if p > 0 && interactions[p - 1] == interactions[p] { starts[p - 1] } else { p });
                }
                starts
            }
        }
    }
}

/// Parameter leaves of one tape, in [`ModelParams::named`] order.
struct ParamVars {
    kc_embed: Var,
    kc_variation: Option<Var>,
    difficulty: Option<Var>,
    response_embed: Var,
    blocks: Vec<BlockVars>,
    w1: Var,
    b1: Var,
    w2: Var,
    b2: Var,
    w_out: Var,
    b_out: Var,
    all: Vec<Var>,
}

struct BlockVars {
    w_query: Var,
    w_key: Var,
    w_value: Var,
    w_out: Var,
    norm: Option<(Var, Var)>,
}

impl ParamVars {
    fn new<'a>(tape: &mut Tape<'a>, p: &'a ModelParams) -> Self {
        let mut all = Vec::new();
        let mut leaf = |t: &'a Tensor| {
            let v = tape.param(t);
            all.push(v);
            v
        };
        let kc_embed = leaf(&p.kc_embed);
        let kc_variation = p.kc_variation.as_ref().map(&mut leaf);
        let difficulty = p.difficulty.as_ref().map(&mut leaf);
        let response_embed = leaf(&p.response_embed);
        let blocks = p
            .blocks
            .iter()
            .map(|b| BlockVars {
                w_query: leaf(&b.w_query),
                w_key: leaf(&b.w_key),
                w_value: leaf(&b.w_value),
                w_out: leaf(&b.w_out),
                norm: b.norm.as_ref().map(|(g, bias)| (leaf(g), leaf(bias))),
            })
            .collect();
        let (w1, b1, w2, b2, w_out, b_out) =
            (leaf(&p.w1), leaf(&p.b1), leaf(&p.w2), leaf(&p.b2), leaf(&p.w_out), leaf(&p.b_out));
        Self { kc_embed, kc_variation, difficulty, response_embed, blocks, w1, b1, w2, b2, w_out, b_out, all }
    }
}

/// One unpadded sequence with the history limit of every position.
struct RowInput<'b> {
    kc: &'b [usize],
    question: &'b [usize],
    response: &'b [u8],
    limits: &'b [usize],
}

/// Logits of a batch; entries where `valid` is false are 0 and meaningless.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceOutput {
    pub logits: Vec<Vec<f64>>,
    pub valid: Vec<Vec<bool>>,
}

/// Loss of one batch recorded on a tape, ready for [`LossGraph::gradients`].
pub struct LossGraph<'a> {
    pub tape: Tape<'a>,
    pub loss: Var,
    pub n_predictions: usize,
    params: Vec<Var>,
}

impl LossGraph<'_> {
    pub fn loss_value(&self) -> f64 {
        self.tape.value(self.loss)[0]
    }

    /// Gradient for every parameter group, in [`ModelParams::named`] order.
    pub fn gradients(&self) -> Result<Vec<Vec<f64>>> {
        let grads = self.tape.backward(self.loss)?;
        Ok(self
            .params
            .iter()
            .map(|&v| grads.get(v).map_or_else(|| vec![0.0; self.tape.value(v).len()], <[f64]>::to_vec))
            .collect())
    }
}

fn check_len(what: &'static str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Shape { op: "forward", detail: format!("{what}: expected {want}, got {got}") });
    }
    Ok(())
}

impl SimpleKt {
    fn embed_vars<'a>(
        &'a self,
        tape: &mut Tape<'a>,
        pv: &ParamVars,
        kc: &[usize],
        question: &[usize],
        response: &[u8],
    ) -> Result<(Var, Var)> {
        let z = tape.gather_rows(pv.kc_embed, kc)?;
        let x = match (self.config.variant, pv.difficulty, pv.kc_variation) {
            (Variant::NoDiff, ..) => z,
            (Variant::Full, Some(m), Some(v)) => {
                let m = tape.gather_rows(m, question)?;
                let v = tape.gather_rows(v, kc)?;
                let mv = tape.mul(m, v)?;
                tape.add(z, mv)?
            }
            (Variant::ScalarDiff, Some(m), Some(v)) => {
                let m = tape.gather_rows(m, question)?;
                let v = tape.gather_rows(v, kc)?;
                let mv = tape.scale_rows(m, v)?;
                tape.add(z, mv)?
            }
            _ => return Err(Error::Config(format!("{} model is missing its difficulty parameters", self.config.variant))),
        };
        let resp: Vec<usize> = response.iter().map(|&r| usize::from(r)).collect();
        let r = tape.gather_rows(pv.response_embed, &resp)?;
        let y = tape.add(z, r)?;
        Ok((x, y))
    }

    /// Multi-head attention of `query_in` rows over the first `limits[p]`
    /// rows of `key_in` / `value_in`.
    #[allow(clippy::too_many_arguments)]
    fn attend<'a>(
        &'a self,
        tape: &mut Tape<'a>,
        block: &BlockVars,
        query_in: Var,
        key_in: Var,
        value_in: Var,
        mask: &[bool],
        training: bool,
        rng: &mut SeededRng,
    ) -> Result<Var> {
        let heads = self.config.n_heads;
        let dk = self.config.head_dim();
        let q = tape.matmul_t(query_in, block.w_query)?;
        let k = tape.matmul_t(key_in, block.w_key)?;
        let v = tape.matmul_t(value_in, block.w_value)?;
        let scale = 1.0 / (dk as f64).sqrt();
        let mut outs = Vec::with_capacity(heads);
        for h in 0..heads {
            let (qh, kh, vh) = if heads == 1 {
                (q, k, v)
            } else {
                (tape.slice_cols(q, h * dk, dk)?, tape.slice_cols(k, h * dk, dk)?, tape.slice_cols(v, h * dk, dk)?)
            };
            let scores = tape.matmul_t(qh, kh)?;
            let scores = tape.scale(scores, scale)?;
            let weights = tape.softmax_masked_or_zero(scores, mask)?;
            let weights = tape.dropout(weights, self.config.dropout, training, rng)?;
            outs.push(tape.matmul(weights, vh)?);
        }
        let merged = if heads == 1 { outs[0] } else { tape.concat(&outs)? };
        tape.matmul_t(merged, block.w_out)
    }

    /// Knowledge state for every row of `x`/`y` given per-row history limits.
    #[allow(clippy::too_many_arguments)]
    fn knowledge_vars<'a>(
        &'a self,
        tape: &mut Tape<'a>,
        pv: &ParamVars,
        x: Var,
        y: Var,
        limits: &[usize],
        training: bool,
        rng: &mut SeededRng,
    ) -> Result<Var> {
        let t = limits.len();
        let mut mask = vec![false; t * t];
        for (p, &lim) in limits.iter().enumerate() {
            mask[p * t..p * t + lim].fill(true);
        }
        let mut h = self.attend(tape, &pv.blocks[0], x, x, y, &mask, training, rng)?;
        for block in &pv.blocks[1..] {
            let a = self.attend(tape, block, h, x, h, &mask, training, rng)?;
            let res = tape.add(h, a)?;
            let normed = tape.layer_norm(res, NORM_EPS)?;
            let (gain, bias) = block.norm.expect("blocks after the first carry a norm");
            let scaled = tape.mul_row(normed, gain)?;
            h = tape.add_row(scaled, bias)?;
        }
        if pv.blocks.len() > 1 && limits.contains(&0) {
            let keep: Vec<f64> = limits.iter().map(|&l| if l == 0 { 0.0 } else { 1.0 }).collect();
            let keep = tape.constant(&[t, 1], keep)?;
            h = tape.scale_rows(keep, h)?;
        }
        Ok(h)
    }

    fn head_vars<'a>(
        &'a self,
        tape: &mut Tape<'a>,
        pv: &ParamVars,
        h: Var,
        x: Var,
        training: bool,
        rng: &mut SeededRng,
    ) -> Result<Var> {
        let hx = tape.concat(&[h, x])?;
        let a1 = tape.matmul_t(hx, pv.w1)?;
        let a1 = tape.add_row(a1, pv.b1)?;
        let a1 = tape.relu(a1)?;
        let a1 = tape.dropout(a1, self.config.dropout, training, rng)?;
        let a2 = tape.matmul_t(a1, pv.w2)?;
        let a2 = tape.add_row(a2, pv.b2)?;
        let a2 = tape.relu(a2)?;
        let a2 = tape.dropout(a2, self.config.dropout, training, rng)?;
        let eta = tape.matmul_t(a2, pv.w_out)?;
        tape.add_row(eta, pv.b_out)
    }

    fn row_logits<'a>(
        &'a self,
        tape: &mut Tape<'a>,
        pv: &ParamVars,
        input: &RowInput<'_>,
        training: bool,
        rng: &mut SeededRng,
    ) -> Result<Var> {
        let (x, y) = self.embed_vars(tape, pv, input.kc, input.question, input.response)?;
        let h = self.knowledge_vars(tape, pv, x, y, input.limits, training, rng)?;
        self.head_vars(tape, pv, h, x, training, rng)
    }

    /// Query/key vector `x` and value vector `y` of a single step.
    pub fn embed_step(&self, kc: usize, question: usize, response: u8) -> Result<(Vec<f64>, Vec<f64>)> {
        let p = &self.params;
        let row = |t: &Tensor, i: usize, what: &'static str| {
            if i < t.rows() {
                Ok(t.row(i).to_vec())
            } else {
                Err(Error::Index { what, index: i, len: t.rows() })
            }
        };
        let z = row(&p.kc_embed, kc, "kc_embed")?;
        let x = match (self.config.variant, &p.difficulty, &p.kc_variation) {
            (Variant::NoDiff, ..) => z.clone(),
            (variant, Some(m), Some(v)) => {
                let m = row(m, question, "difficulty")?;
                let v = row(v, kc, "kc_variation")?;
                let scalar = variant == Variant::ScalarDiff;
                z.iter().zip(&v).enumerate().map(|(j, (z, v))| z + if scalar { m[0] } else { m[j] } * v).collect()
            }
            _ => return Err(Error::Config("missing difficulty parameters".into())),
        };
        let r = row(&p.response_embed, usize::from(response), "response_embed")?;
        let y = z.iter().zip(&r).map(|(a, b)| a + b).collect();
        Ok((x, y))
    }

    /// Knowledge state for `x_query` given the full (already causal) history
    /// `x_hist`/`y_hist` of `t` rows each. An empty history gives zeros.
    pub fn knowledge_state(&self, x_query: &[f64], x_hist: &[Vec<f64>], y_hist: &[Vec<f64>]) -> Result<Vec<f64>> {
        let d = self.config.d;
        check_len("query", x_query.len(), d)?;
        check_len("history values", y_hist.len(), x_hist.len())?;
        if x_hist.is_empty() {
            return Ok(vec![0.0; d]);
        }
        let t = x_hist.len() + 1;
        let mut xs = Vec::with_capacity(t * d);
        let mut ys = Vec::with_capacity(t * d);
        for (xr, yr) in x_hist.iter().zip(y_hist) {
            check_len("history row", xr.len(), d)?;
            check_len("history row", yr.len(), d)?;
            xs.extend_from_slice(xr);
            ys.extend_from_slice(yr);
        }
        xs.extend_from_slice(x_query);
        ys.extend(std::iter::repeat_n(0.0, d));
        let mut tape = Tape::new();
        let pv = ParamVars::new(&mut tape, &self.params);
        let x = tape.constant(&[t, d], xs)?;
        let y = tape.constant(&[t, d], ys)?;
        let limits: Vec<usize> = (0..t).collect();
        let h = self.knowledge_vars(&mut tape, &pv, x, y, &limits, false, &mut SeededRng::new(0))?;
        Ok(tape.value(h)[(t - 1) * d..].to_vec())
    }

    /// Prediction-head logit `η` for knowledge state `h` and query `x`.
    pub fn predict_logit(&self, h: &[f64], x: &[f64]) -> Result<f64> {
        let d = self.config.d;
        check_len("h", h.len(), d)?;
        check_len("x", x.len(), d)?;
        let mut tape = Tape::new();
        let pv = ParamVars::new(&mut tape, &self.params);
        let h = tape.constant(&[1, d], h.to_vec())?;
        let x = tape.constant(&[1, d], x.to_vec())?;
        let eta = self.head_vars(&mut tape, &pv, h, x, false, &mut SeededRng::new(0))?;
        Ok(tape.value(eta)[0])
    }

    /// Inference logits of one sequence where position `p` attends to the
    /// first `limits[p]` steps. Positions with `limits[p] == 0` get logits
    /// computed from an empty history and should be ignored by callers.
    pub fn logits_with_limits(
        &self,
        kc: &[usize],
        question: &[usize],
        response: &[u8],
        limits: &[usize],
    ) -> Result<Vec<f64>> {
        let t = kc.len();
        check_len("question ids", question.len(), t)?;
        check_len("responses", response.len(), t)?;
        check_len("limits", limits.len(), t)?;
        if let Some(p) = limits.iter().enumerate().position(|(p, &l)| l > p) {
            return Err(Error::Shape { op: "forward", detail: format!("limit at position {p} reaches the future") });
        }
        if t == 0 {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let pv = ParamVars::new(&mut tape, &self.params);
        let input = RowInput { kc, question, response, limits };
        let eta = self.row_logits(&mut tape, &pv, &input, false, &mut SeededRng::new(0))?;
        Ok(tape.value(eta).to_vec())
    }

    /// Logits for every position of `batch`. Position `p` sees history per
    /// `history`; positions with an empty history and padded positions are
    /// marked invalid. Dropout is active only when `training`.
    pub fn forward_sequence(
        &self,
        batch: &Batch,
        training: bool,
        history: HistoryMode,
        rng: &mut SeededRng,
    ) -> Result<SequenceOutput> {
        let mut tape = Tape::new();
        let pv = ParamVars::new(&mut tape, &self.params);
        let l = batch.max_len();
        let mut out = SequenceOutput { logits: Vec::new(), valid: Vec::new() };
        for b in 0..batch.size() {
            let t = batch.row_len(b);
            let mut logits = vec![0.0; l];
            let mut valid = vec![false; l];
            if t > 0 {
                let limits = history.limits(&batch.interactions[b][..t]);
                let input = RowInput {
                    kc: &batch.kc_ids[b][..t],
                    question: &batch.question_ids[b][..t],
                    response: &batch.responses[b][..t],
                    limits: &limits,
                };
                let eta = self.row_logits(&mut tape, &pv, &input, training, rng)?;
                for (p, &v) in tape.value(eta).iter().enumerate() {
                    logits[p] = v;
                    valid[p] = limits[p] > 0;
                }
            }
            out.logits.push(logits);
            out.valid.push(valid);
        }
        Ok(out)
    }

    /// Mean binary cross-entropy over the valid predictions of `batch`.
    pub fn loss_graph(
        &self,
        batch: &Batch,
        training: bool,
        history: HistoryMode,
        rng: &mut SeededRng,
    ) -> Result<LossGraph<'_>> {
        let mut tape = Tape::new();
        let pv = ParamVars::new(&mut tape, &self.params);
        let mut total: Option<Var> = None;
        let mut n_predictions = 0;
        for b in 0..batch.size() {
            let t = batch.row_len(b);
            if t == 0 {
                continue;
            }
            let limits = history.limits(&batch.interactions[b][..t]);
            let input = RowInput {
                kc: &batch.kc_ids[b][..t],
                question: &batch.question_ids[b][..t],
                response: &batch.responses[b][..t],
                limits: &limits,
            };
            let eta = self.row_logits(&mut tape, &pv, &input, training, rng)?;
            let targets: Vec<f64> = input.response.iter().map(|&r| f64::from(r)).collect();
            let mask: Vec<bool> = limits.iter().map(|&l| l > 0).collect();
            n_predictions += mask.iter().filter(|&&m| m).count();
            let bce = tape.bce_with_logits(eta, &targets, &mask)?;
            total = Some(match total {
                Some(acc) => tape.add(acc, bce)?,
                None => bce,
            });
        }
        let total = match total {
            Some(t) => t,
            None => tape.constant(&[1], vec![0.0])?,
        };
        let loss = tape.scale(total, 1.0 / n_predictions.max(1) as f64)?;
        Ok(LossGraph { tape, loss, n_predictions, params: pv.all })
    }
}
