//! Transformer graph builders shared by the generation backbone and the
//! instance encoder. Pre-LN blocks with a final layer norm; fixed sinusoidal
//! positions; GELU feed-forward.

use std::collections::BTreeMap;

use crate::autodiff::{Tape, Var};
use crate::numerics::{Matrix, SeededRng};

pub(crate) const LN_EPS: f64 = 1e-5;
const MASK_NEG: f64 = -1e30;

/// Weight tensors lifted onto a tape as leaves, addressable by name.
pub(crate) struct WeightVars {
    map: BTreeMap<String, Var>,
}

impl WeightVars {
    pub fn from_weights(tape: &mut Tape, weights: &BTreeMap<String, Matrix>) -> Self {
        let map = weights
            .iter()
            .map(|(name, m)| (name.clone(), tape.leaf(m.clone())))
            .collect();
        WeightVars { map }
    }

    pub fn get(&self, name: &str) -> Var {
        *self
            .map
            .get(name)
            .unwrap_or_else(|| panic!("missing weight {name}"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.map.iter()
    }
}

/// Fixed sinusoidal positional encodings, `max_len x dim`.
pub(crate) fn sinusoidal_positions(max_len: usize, dim: usize) -> Matrix {
    Matrix::from_fn(max_len, dim, |pos, j| {
        let pair = (j / 2) as f64;
        let rate = 10_000f64.powf(2.0 * pair / dim as f64);
        let angle = pos as f64 / rate;
        if j % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

fn xavier(rng: &mut SeededRng, rows: usize, cols: usize) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.uniform(-bound, bound))
}

/// Inserts one linear weight under `name`, seeded by a per-name stream so
/// initialization does not depend on insertion order.
fn init_linear(map: &mut BTreeMap<String, Matrix>, rng: &SeededRng, name: &str, rows: usize, cols: usize) {
    let mut stream = rng.derive(name);
    map.insert(name.to_string(), xavier(&mut stream, rows, cols));
}

fn init_layer_norm(map: &mut BTreeMap<String, Matrix>, name: &str, dim: usize) {
    map.insert(format!("{name}.g"), Matrix::from_fn(1, dim, |_, _| 1.0));
    map.insert(format!("{name}.b"), Matrix::zeros(1, dim));
}

fn init_attention(map: &mut BTreeMap<String, Matrix>, rng: &SeededRng, name: &str, dim: usize) {
    for w in ["wq", "wk", "wv", "wo"] {
        init_linear(map, rng, &format!("{name}.{w}"), dim, dim);
    }
}

fn init_ffn(map: &mut BTreeMap<String, Matrix>, rng: &SeededRng, name: &str, dim: usize, ffn: usize) {
    init_linear(map, rng, &format!("{name}.w1"), dim, ffn);
    map.insert(format!("{name}.b1"), Matrix::zeros(1, ffn));
    init_linear(map, rng, &format!("{name}.w2"), ffn, dim);
    map.insert(format!("{name}.b2"), Matrix::zeros(1, dim));
}

/// Encoder-stack weights under `prefix` ("enc0.attn.wq", ..., "enc.ln.g").
pub(crate) fn init_encoder_weights(
    map: &mut BTreeMap<String, Matrix>,
    rng: &SeededRng,
    prefix: &str,
    layers: usize,
    dim: usize,
    ffn: usize,
) {
    for i in 0..layers {
        let base = format!("{prefix}{i}");
        init_layer_norm(map, &format!("{base}.ln1"), dim);
        init_attention(map, rng, &format!("{base}.attn"), dim);
        init_layer_norm(map, &format!("{base}.ln2"), dim);
        init_ffn(map, rng, &format!("{base}.ffn"), dim, ffn);
    }
    init_layer_norm(map, &format!("{prefix}.ln"), dim);
}

pub(crate) fn init_decoder_weights(
    map: &mut BTreeMap<String, Matrix>,
    rng: &SeededRng,
    prefix: &str,
    layers: usize,
    dim: usize,
    ffn: usize,
) {
    for i in 0..layers {
        let base = format!("{prefix}{i}");
        init_layer_norm(map, &format!("{base}.ln1"), dim);
        init_attention(map, rng, &format!("{base}.self"), dim);
        init_layer_norm(map, &format!("{base}.ln2"), dim);
        init_attention(map, rng, &format!("{base}.cross"), dim);
        init_layer_norm(map, &format!("{base}.ln3"), dim);
        init_ffn(map, rng, &format!("{base}.ffn"), dim, ffn);
    }
    init_layer_norm(map, &format!("{prefix}.ln"), dim);
}

fn layer_norm(tape: &mut Tape, w: &WeightVars, name: &str, x: Var) -> Var {
    let g = w.get(&format!("{name}.g"));
    let b = w.get(&format!("{name}.b"));
    tape.layer_norm(x, g, b, LN_EPS)
}

/// Multi-head attention. `queries` attend over `keys_values`; `mask` (if any)
/// is added to every head's score matrix before the softmax.
fn attention(
    tape: &mut Tape,
    w: &WeightVars,
    name: &str,
    heads: usize,
    queries: Var,
    keys_values: Var,
    mask: Option<Var>,
) -> Var {
    let q = {
        let wq = w.get(&format!("{name}.wq"));
        tape.matmul(queries, wq)
    };
    let k = {
        let wk = w.get(&format!("{name}.wk"));
        tape.matmul(keys_values, wk)
    };
    let v = {
        let wv = w.get(&format!("{name}.wv"));
        tape.matmul(keys_values, wv)
    };
    let dim = tape.value(q).cols();
    let dh = dim / heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let mut contexts = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = tape.col_slice(q, h * dh, dh);
        let kh = tape.col_slice(k, h * dh, dh);
        let vh = tape.col_slice(v, h * dh, dh);
        let scores = tape.matmul_nt(qh, kh);
        let mut scores = tape.scale(scores, scale);
        if let Some(m) = mask {
            scores = tape.add(scores, m);
        }
        let attn = tape.softmax_rows(scores);
        contexts.push(tape.matmul(attn, vh));
    }
    let ctx = tape.concat_cols(&contexts);
    let wo = w.get(&format!("{name}.wo"));
    tape.matmul(ctx, wo)
}

fn feed_forward(tape: &mut Tape, w: &WeightVars, name: &str, x: Var) -> Var {
    let w1 = w.get(&format!("{name}.w1"));
    let b1 = w.get(&format!("{name}.b1"));
    let w2 = w.get(&format!("{name}.w2"));
    let b2 = w.get(&format!("{name}.b2"));
    let h = tape.matmul(x, w1);
    let h = tape.add_row(h, b1);
    let h = tape.gelu(h);
    let h = tape.matmul(h, w2);
    tape.add_row(h, b2)
}

/// Pre-LN encoder stack; returns the final-norm hidden states.
pub(crate) fn encoder_stack(
    tape: &mut Tape,
    w: &WeightVars,
    prefix: &str,
    layers: usize,
    heads: usize,
    input: Var,
) -> Var {
    let mut x = input;
    for i in 0..layers {
        let base = format!("{prefix}{i}");
        let normed = layer_norm(tape, w, &format!("{base}.ln1"), x);
        let attn = attention(tape, w, &format!("{base}.attn"), heads, normed, normed, None);
        x = tape.add(x, attn);
        let normed = layer_norm(tape, w, &format!("{base}.ln2"), x);
        let ff = feed_forward(tape, w, &format!("{base}.ffn"), normed);
        x = tape.add(x, ff);
    }
    layer_norm(tape, w, &format!("{prefix}.ln"), x)
}

/// Causal self-attention + cross-attention decoder stack.
pub(crate) fn decoder_stack(
    tape: &mut Tape,
    w: &WeightVars,
    prefix: &str,
    layers: usize,
    heads: usize,
    input: Var,
    enc_out: Var,
) -> Var {
    let n = tape.value(input).rows();
    let mask_matrix = Matrix::from_fn(n, n, |i, j| if j > i { MASK_NEG } else { 0.0 });
    let mask = tape.leaf(mask_matrix);

    let mut x = input;
    for i in 0..layers {
        let base = format!("{prefix}{i}");
        let normed = layer_norm(tape, w, &format!("{base}.ln1"), x);
        let self_attn =
            attention(tape, w, &format!("{base}.self"), heads, normed, normed, Some(mask));
        x = tape.add(x, self_attn);
        let normed = layer_norm(tape, w, &format!("{base}.ln2"), x);
        let cross = attention(tape, w, &format!("{base}.cross"), heads, normed, enc_out, None);
        x = tape.add(x, cross);
        let normed = layer_norm(tape, w, &format!("{base}.ln3"), x);
        let ff = feed_forward(tape, w, &format!("{base}.ffn"), normed);
        x = tape.add(x, ff);
    }
    layer_norm(tape, w, &format!("{prefix}.ln"), x)
}
