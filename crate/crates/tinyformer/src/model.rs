use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use vocabflip_core::{special, TokenId, TokenTable};

use crate::error::ModelError;
use crate::tape::{Mask, Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            enc_layers: 2,
            dec_layers: 2,
            d_model: 64,
            n_heads: 4,
            d_ff: 256,
            vocab_size: TokenTable::standard().len(),
            max_len: 32,
            dropout: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.d_model == 0 || self.n_heads == 0 || self.d_ff == 0 {
            return bad("d_model, n_heads and d_ff must be positive");
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return bad("d_model must be divisible by n_heads");
        }
        if !self.d_model.is_multiple_of(2) {
            return bad("d_model must be even for sinusoidal positions");
        }
        if self.vocab_size <= special::ONE.index() {
            return bad("vocab_size too small for the special tokens");
        }
        if self.max_len < 2 {
            return bad("max_len must be at least 2");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

#[derive(Debug, Clone, Copy)]
struct NormIdx {
    gain: usize,
    bias: usize,
}

#[derive(Debug, Clone, Copy)]
struct AttnIdx {
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
}

#[derive(Debug, Clone, Copy)]
struct FfnIdx {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Debug, Clone)]
struct EncLayer {
    ln1: NormIdx,
    attn: AttnIdx,
    ln2: NormIdx,
    ffn: FfnIdx,
}

#[derive(Debug, Clone)]
struct DecLayer {
    ln1: NormIdx,
    self_attn: AttnIdx,
    ln2: NormIdx,
    cross: AttnIdx,
    ln3: NormIdx,
    ffn: FfnIdx,
}

#[derive(Debug, Clone)]
struct Layout {
    embed: usize,
    enc: Vec<EncLayer>,
    enc_ln: NormIdx,
    dec: Vec<DecLayer>,
    dec_ln: NormIdx,
}

/// Parameter names and shapes in storage order.
struct Builder {
    specs: Vec<(String, Vec<usize>, Init)>,
}

#[derive(Clone, Copy)]
enum Init {
    Uniform(f64),
    Zeros,
    Ones,
}

impl Builder {
    fn add(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        self.specs.push((name, shape, init));
        self.specs.len() - 1
    }

    fn weight(&mut self, name: String, fan_in: usize, fan_out: usize) -> usize {
        let a = 1.0 / (fan_in as f64).sqrt();
        self.add(name, vec![fan_in, fan_out], Init::Uniform(a))
    }

    fn bias(&mut self, name: String, n: usize) -> usize {
        self.add(name, vec![n], Init::Zeros)
    }

    fn norm(&mut self, prefix: &str, d: usize) -> NormIdx {
        NormIdx {
            gain: self.add(format!("{prefix}.gain"), vec![d], Init::Ones),
            bias: self.add(format!("{prefix}.bias"), vec![d], Init::Zeros),
        }
    }

    fn attn(&mut self, prefix: &str, d: usize) -> AttnIdx {
        let mut proj = |n: &str| {
            (
                self.weight(format!("{prefix}.w{n}"), d, d),
                self.bias(format!("{prefix}.b{n}"), d),
            )
        };
        let (wq, bq) = proj("q");
        let (wk, bk) = proj("k");
        let (wv, bv) = proj("v");
        let (wo, bo) = proj("o");
        AttnIdx {
            wq,
            bq,
            wk,
            bk,
            wv,
            bv,
            wo,
            bo,
        }
    }

    fn ffn(&mut self, prefix: &str, d: usize, f: usize) -> FfnIdx {
        FfnIdx {
            w1: self.weight(format!("{prefix}.w1"), d, f),
            b1: self.bias(format!("{prefix}.b1"), f),
            w2: self.weight(format!("{prefix}.w2"), f, d),
            b2: self.bias(format!("{prefix}.b2"), d),
        }
    }
}

fn build_layout(c: &ModelConfig) -> (Layout, Builder) {
    let d = c.d_model;
    let mut b = Builder { specs: Vec::new() };
    let embed = b.add(
        "embed".into(),
        vec![c.vocab_size, d],
        Init::Uniform(1.0 / (d as f64).sqrt()),
    );
    let enc = (0..c.enc_layers)
        .map(|l| {
            let p = format!("enc.{l}");
            EncLayer {
                ln1: b.norm(&format!("{p}.ln1"), d),
                attn: b.attn(&format!("{p}.attn"), d),
                ln2: b.norm(&format!("{p}.ln2"), d),
                ffn: b.ffn(&format!("{p}.ffn"), d, c.d_ff),
            }
        })
        .collect();
    let enc_ln = b.norm("enc.ln", d);
    let dec = (0..c.dec_layers)
        .map(|l| {
            let p = format!("dec.{l}");
            DecLayer {
                ln1: b.norm(&format!("{p}.ln1"), d),
                self_attn: b.attn(&format!("{p}.self"), d),
                ln2: b.norm(&format!("{p}.ln2"), d),
                cross: b.attn(&format!("{p}.cross"), d),
                ln3: b.norm(&format!("{p}.ln3"), d),
                ffn: b.ffn(&format!("{p}.ffn"), d, c.d_ff),
            }
        })
        .collect();
    let dec_ln = b.norm("dec.ln", d);
    (
        Layout {
            embed,
            enc,
            enc_ln,
            dec,
            dec_ln,
        },
        b,
    )
}

/// Sinusoidal table: `pe[p, 2i] = sin(p / 10000^(2i/d))`, `pe[p, 2i+1] = cos(..)`.
pub fn positional_encoding(max_len: usize, d: usize) -> Vec<f64> {
    let mut pe = vec![0.0; max_len * d];
    for p in 0..max_len {
        for i in 0..d / 2 {
            let angle = p as f64 / 10000f64.powf(2.0 * i as f64 / d as f64);
            pe[p * d + 2 * i] = angle.sin();
            pe[p * d + 2 * i + 1] = angle.cos();
        }
    }
    pe
}

/// Multi-head scaled dot-product attention over already projected `q`, `k`, `v`.
pub fn attention(
    tape: &mut Tape<'_>,
    q: Var,
    k: Var,
    v: Var,
    mask: &Mask,
    n_heads: usize,
) -> Result<Var, ModelError> {
    let (_, d) = tape.shape(q);
    if d % n_heads != 0 || tape.shape(k) != tape.shape(v) || tape.shape(k).1 != d {
        return Err(ModelError::Shape("attention operand widths".into()));
    }
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut heads = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let (qh, kh, vh) = if n_heads == 1 {
            (q, k, v)
        } else {
            (
                tape.slice_cols(q, h * dh, dh),
                tape.slice_cols(k, h * dh, dh),
                tape.slice_cols(v, h * dh, dh),
            )
        };
        let s = tape.matmul_bt(qh, kh);
        let s = tape.scale(s, scale);
        let a = tape.masked_softmax(s, mask)?;
        heads.push(tape.matmul(a, vh));
    }
    Ok(if n_heads == 1 {
        heads[0]
    } else {
        tape.concat_cols(&heads)
    })
}

/// Encoder input: content followed by EOS.
pub fn source_ids(tokens: &[TokenId]) -> Vec<usize> {
    tokens
        .iter()
        .map(|t| t.index())
        .chain(std::iter::once(special::EOS.index()))
        .collect()
}

/// Decoder input under teacher forcing: BOS followed by the target.
pub fn decoder_ids(target: &[TokenId]) -> Vec<usize> {
    std::iter::once(special::BOS.index())
        .chain(target.iter().map(|t| t.index()))
        .collect()
}

/// Labels under teacher forcing: the target followed by EOS.
pub fn label_ids(target: &[TokenId]) -> Vec<usize> {
    source_ids(target)
}

/// Result of greedy decoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    /// Emitted tokens, EOS excluded.
    pub ids: Vec<TokenId>,
    /// Whether EOS was produced within the step budget.
    pub terminated: bool,
}

/// Teacher-forced statistics for one example.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherForced {
    /// Summed token cross-entropy.
    pub loss_sum: f64,
    pub tokens: usize,
    /// Argmax agrees with the label at every position, EOS included.
    pub exact: bool,
}

#[derive(Debug, Clone)]
pub struct TransformerModel {
    config: ModelConfig,
    params: Vec<Tensor>,
    names: Vec<String>,
    layout: Layout,
    pe: Vec<f64>,
}

impl TransformerModel {
    /// Fresh model. Weight matrices are drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
    /// layer-norm gains start at 1 and every bias at 0.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let (layout, builder) = build_layout(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(builder.specs.len());
        let mut names = Vec::with_capacity(builder.specs.len());
        for (name, shape, init) in builder.specs {
            let n: usize = shape.iter().product();
            let data = match init {
                Init::Uniform(a) => (0..n).map(|_| rng.gen_range(-a..a)).collect(),
                Init::Zeros => vec![0.0; n],
                Init::Ones => vec![1.0; n],
            };
            params.push(Tensor::new(shape, data)?);
            names.push(name);
        }
        let pe = positional_encoding(config.max_len, config.d_model);
        Ok(TransformerModel {
            config,
            params,
            names,
            layout,
            pe,
        })
    }

    /// Rebuilds a model from stored tensors, checking names and shapes.
    pub fn from_parts(
        config: ModelConfig,
        named: Vec<(String, Tensor)>,
    ) -> Result<Self, ModelError> {
        let mut model = Self::new(config, 0)?;
        if named.len() != model.params.len() {
            return Err(ModelError::Checkpoint(format!(
                "expected {} tensors, found {}",
                model.params.len(),
                named.len()
            )));
        }
        for (i, (name, t)) in named.into_iter().enumerate() {
            if name != model.names[i] || t.shape() != model.params[i].shape() {
                return Err(ModelError::Checkpoint(format!(
                    "tensor {i}: expected {} {:?}, found {name} {:?}",
                    model.names[i],
                    model.params[i].shape(),
                    t.shape()
                )));
            }
            model.params[i] = t;
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    fn check_ids(&self, ids: &[usize]) -> Result<(), ModelError> {
        if ids.is_empty() {
            return Err(ModelError::EmptySequence);
        }
        if ids.len() > self.config.max_len {
            return Err(ModelError::SequenceTooLong {
                len: ids.len(),
                max: self.config.max_len,
            });
        }
        if let Some(&id) = ids.iter().find(|&&i| i >= self.config.vocab_size) {
            return Err(ModelError::TokenOutOfRange {
                id,
                vocab: self.config.vocab_size,
            });
        }
        Ok(())
    }

    fn dropout(&self, tape: &mut Tape<'_>, x: Var, rng: &mut Option<&mut ChaCha8Rng>) -> Var {
        let p = self.config.dropout;
        match rng {
            Some(r) if p > 0.0 => {
                let (rows, cols) = tape.shape(x);
                let keep_scale = 1.0 / (1.0 - p);
                let keep = (0..rows * cols)
                    .map(|_| if r.gen::<f64>() < p { 0.0 } else { keep_scale })
                    .collect();
                tape.dropout(x, keep)
            }
            _ => x,
        }
    }

    fn embed(&self, tape: &mut Tape<'_>, ids: &[usize], rng: &mut Option<&mut ChaCha8Rng>) -> Var {
        let d = self.config.d_model;
        let table = tape.param(self.layout.embed);
        let e = tape.gather(table, ids);
        let e = tape.scale(e, (d as f64).sqrt());
        let pos = tape.input(ids.len(), d, self.pe[..ids.len() * d].to_vec());
        let x = tape.add(e, pos);
        self.dropout(tape, x, rng)
    }

    fn norm(&self, tape: &mut Tape<'_>, x: Var, n: NormIdx) -> Var {
        let g = tape.param(n.gain);
        let b = tape.param(n.bias);
        tape.layer_norm(x, g, b)
    }

    fn mha(
        &self,
        tape: &mut Tape<'_>,
        x: Var,
        memory: Var,
        a: AttnIdx,
        mask: &Mask,
    ) -> Result<Var, ModelError> {
        let p = |t: &mut Tape<'_>, i| t.param(i);
        let (wq, bq, wk, bk) = (p(tape, a.wq), p(tape, a.bq), p(tape, a.wk), p(tape, a.bk));
        let (wv, bv, wo, bo) = (p(tape, a.wv), p(tape, a.bv), p(tape, a.wo), p(tape, a.bo));
        let q = tape.linear(x, wq, bq);
        let k = tape.linear(memory, wk, bk);
        let v = tape.linear(memory, wv, bv);
        let o = attention(tape, q, k, v, mask, self.config.n_heads)?;
        Ok(tape.linear(o, wo, bo))
    }

    fn ffn(&self, tape: &mut Tape<'_>, x: Var, f: FfnIdx) -> Var {
        let (w1, b1) = (tape.param(f.w1), tape.param(f.b1));
        let (w2, b2) = (tape.param(f.w2), tape.param(f.b2));
        let h = tape.linear(x, w1, b1);
        let h = tape.gelu(h);
        tape.linear(h, w2, b2)
    }

    fn residual(
        &self,
        tape: &mut Tape<'_>,
        x: Var,
        sub: Var,
        rng: &mut Option<&mut ChaCha8Rng>,
    ) -> Var {
        let sub = self.dropout(tape, sub, rng);
        tape.add(x, sub)
    }

    /// Encoder states for `src`. Positions holding PAD are hidden from attention.
    pub fn encode(
        &self,
        tape: &mut Tape<'_>,
        src: &[usize],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var, ModelError> {
        self.check_ids(src)?;
        let mask = Mask::key_padding(src.len(), &key_valid(src));
        let mut x = self.embed(tape, src, &mut rng);
        for layer in &self.layout.enc {
            let h = self.norm(tape, x, layer.ln1);
            let a = self.mha(tape, h, h, layer.attn, &mask)?;
            x = self.residual(tape, x, a, &mut rng);
            let h = self.norm(tape, x, layer.ln2);
            let f = self.ffn(tape, h, layer.ffn);
            x = self.residual(tape, x, f, &mut rng);
        }
        Ok(self.norm(tape, x, self.layout.enc_ln))
    }

    /// Next-token logits `[dec.len(), vocab]` given encoder states.
    pub fn decode(
        &self,
        tape: &mut Tape<'_>,
        memory: Var,
        src: &[usize],
        dec: &[usize],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var, ModelError> {
        self.check_ids(dec)?;
        if tape.shape(memory).0 != src.len() {
            return Err(ModelError::Shape(
                "memory rows differ from source length".into(),
            ));
        }
        let n = dec.len();
        let causal = Mask::causal(n);
        let cross = Mask::key_padding(n, &key_valid(src));
        let mut x = self.embed(tape, dec, &mut rng);
        for layer in &self.layout.dec {
            let h = self.norm(tape, x, layer.ln1);
            let a = self.mha(tape, h, h, layer.self_attn, &causal)?;
            x = self.residual(tape, x, a, &mut rng);
            let h = self.norm(tape, x, layer.ln2);
            let a = self.mha(tape, h, memory, layer.cross, &cross)?;
            x = self.residual(tape, x, a, &mut rng);
            let h = self.norm(tape, x, layer.ln3);
            let f = self.ffn(tape, h, layer.ffn);
            x = self.residual(tape, x, f, &mut rng);
        }
        let h = self.norm(tape, x, self.layout.dec_ln);
        let table = tape.param(self.layout.embed);
        Ok(tape.matmul_bt(h, table))
    }

    /// Teacher-forced `scale * Σ CE` for one (source, target) pair, plus the logits.
    pub fn loss(
        &self,
        tape: &mut Tape<'_>,
        source: &[TokenId],
        target: &[TokenId],
        scale: f64,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Var, Var), ModelError> {
        let src = source_ids(source);
        let dec = decoder_ids(target);
        let labels: Vec<Option<usize>> = label_ids(target).into_iter().map(Some).collect();
        let memory = self.encode(tape, &src, rng.as_deref_mut())?;
        let logits = self.decode(tape, memory, &src, &dec, rng)?;
        let l = tape.cross_entropy(logits, &labels, scale)?;
        Ok((l, logits))
    }

    /// Deterministic teacher-forced loss and exact-match flag.
    pub fn teacher_forced(
        &self,
        source: &[TokenId],
        target: &[TokenId],
    ) -> Result<TeacherForced, ModelError> {
        let mut tape = Tape::new(&self.params);
        let (l, logits) = self.loss(&mut tape, source, target, 1.0, None)?;
        let labels = label_ids(target);
        let v = self.config.vocab_size;
        let values = tape.value(logits);
        let exact = labels
            .iter()
            .enumerate()
            .all(|(r, &t)| argmax(&values[r * v..(r + 1) * v]) == t);
        Ok(TeacherForced {
            loss_sum: tape.scalar(l),
            tokens: labels.len(),
            exact,
        })
    }

    /// Greedy decoding for at most `max_out_len` steps.
    pub fn greedy_decode(
        &self,
        source: &[TokenId],
        max_out_len: usize,
    ) -> Result<Decoded, ModelError> {
        let src = source_ids(source);
        let memory = {
            let mut tape = Tape::new(&self.params);
            let m = self.encode(&mut tape, &src, None)?;
            tape.value(m).to_vec()
        };
        let d = self.config.d_model;
        let v = self.config.vocab_size;
        let mut dec = vec![special::BOS.index()];
        let mut ids = Vec::new();
        let budget = max_out_len.min(self.config.max_len);
        for _ in 0..budget {
            let mut tape = Tape::new(&self.params);
            let mem = tape.input(src.len(), d, memory.clone());
            let logits = self.decode(&mut tape, mem, &src, &dec, None)?;
            let last = dec.len() - 1;
            let next = argmax(&tape.value(logits)[last * v..(last + 1) * v]);
            if next == special::EOS.index() {
                return Ok(Decoded {
                    ids,
                    terminated: true,
                });
            }
            let id = u16::try_from(next)
                .map_err(|_| ModelError::TokenOutOfRange { id: next, vocab: v })?;
            ids.push(TokenId(id));
            dec.push(next);
        }
        Ok(Decoded {
            ids,
            terminated: false,
        })
    }
}

fn key_valid(ids: &[usize]) -> Vec<bool> {
    ids.iter().map(|&i| i != special::PAD.index()).collect()
}

/// Index of the first maximum.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
