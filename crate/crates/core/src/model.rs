//! A tiny per-token multilingual translator.
//!
//! Each target position is predicted from its source token and the target
//! language: `x = E_tok[src] + E_lang[ℓ]`, `h = tanh(x·W₁ + b₁)`,
//! `logits = h·W₂ + b₂`. The recorded (tape) path and the inference path use
//! the same kernels and produce bitwise-identical logits.

use std::io::{self, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grad::{self, GradError, Graph, NodeId, ParamId, Parameterized, Tensor};

pub type Token = u32;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model dims: {0}")]
    InvalidDims(String),
    #[error("token {token} at position {position} is out of range for vocabulary of {vocab}")]
    TokenOutOfRange { position: usize, token: Token, vocab: usize },
    #[error("language {language} is out of range ({num_languages} languages)")]
    LanguageOutOfRange { language: usize, num_languages: usize },
    #[error("malformed batch: {0}")]
    BadBatch(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Grad(#[from] GradError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDims {
    pub vocab: usize,
    pub num_languages: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
}

impl ModelDims {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.embed_dim < 2 || self.hidden_dim < 2 {
            return Err(ModelError::InvalidDims(format!(
                "embed_dim and hidden_dim must be at least 2 (got {} and {})",
                self.embed_dim, self.hidden_dim
            )));
        }
        if self.num_languages == 0 || self.vocab < 2 {
            return Err(ModelError::InvalidDims(format!(
                "need at least one language and two vocabulary entries (got {} and {})",
                self.num_languages, self.vocab
            )));
        }
        Ok(())
    }

    /// Vocabulary must hold the alphabet plus one tag per language.
    pub fn check_alphabet(&self, alphabet: usize) -> Result<(), ModelError> {
        if self.vocab < alphabet + self.num_languages {
            return Err(ModelError::InvalidDims(format!(
                "vocab {} is smaller than alphabet {} + {} language tags",
                self.vocab, alphabet, self.num_languages
            )));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let (v, l, d, h) = (self.vocab, self.num_languages, self.embed_dim, self.hidden_dim);
        v * d + l * d + d * h + h + h * v + v
    }
}

/// One language's sentences sharing a target tag.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub language: usize,
    pub sources: Vec<Vec<Token>>,
    pub targets: Vec<Vec<Token>>,
}

impl Batch {
    pub fn new(language: usize, sources: Vec<Vec<Token>>, targets: Vec<Vec<Token>>) -> Result<Self, ModelError> {
        let b = Batch {
            language,
            sources,
            targets,
        };
        b.check_shape()?;
        Ok(b)
    }

    fn check_shape(&self) -> Result<(), ModelError> {
        if self.sources.len() != self.targets.len() {
            return Err(ModelError::BadBatch(format!(
                "{} sources but {} targets",
                self.sources.len(),
                self.targets.len()
            )));
        }
        for (i, (s, t)) in self.sources.iter().zip(&self.targets).enumerate() {
            if s.len() != t.len() {
                return Err(ModelError::BadBatch(format!(
                    "sentence {i}: source length {} != target length {}",
                    s.len(),
                    t.len()
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn num_positions(&self) -> usize {
        self.sources.iter().map(Vec::len).sum()
    }

    pub fn flat_sources(&self) -> Vec<usize> {
        self.sources.iter().flatten().map(|&t| t as usize).collect()
    }

    pub fn flat_targets(&self) -> Vec<usize> {
        self.targets.iter().flatten().map(|&t| t as usize).collect()
    }
}

pub const TOKEN_EMBEDDING: ParamId = ParamId(0);
pub const LANGUAGE_EMBEDDING: ParamId = ParamId(1);
pub const HIDDEN_WEIGHT: ParamId = ParamId(2);
pub const HIDDEN_BIAS: ParamId = ParamId(3);
pub const OUTPUT_WEIGHT: ParamId = ParamId(4);
pub const OUTPUT_BIAS: ParamId = ParamId(5);

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    dims: ModelDims,
    pub token_embedding: Tensor,
    pub language_embedding: Tensor,
    pub hidden_weight: Tensor,
    pub hidden_bias: Tensor,
    pub output_weight: Tensor,
    pub output_bias: Tensor,
}

impl Parameterized for ModelParams {
    fn params(&self) -> Vec<(ParamId, &Tensor)> {
        vec![
            (TOKEN_EMBEDDING, &self.token_embedding),
            (LANGUAGE_EMBEDDING, &self.language_embedding),
            (HIDDEN_WEIGHT, &self.hidden_weight),
            (HIDDEN_BIAS, &self.hidden_bias),
            (OUTPUT_WEIGHT, &self.output_weight),
            (OUTPUT_BIAS, &self.output_bias),
        ]
    }

    fn params_mut(&mut self) -> Vec<(ParamId, &mut Tensor)> {
        vec![
            (TOKEN_EMBEDDING, &mut self.token_embedding),
            (LANGUAGE_EMBEDDING, &mut self.language_embedding),
            (HIDDEN_WEIGHT, &mut self.hidden_weight),
            (HIDDEN_BIAS, &mut self.hidden_bias),
            (OUTPUT_WEIGHT, &mut self.output_weight),
            (OUTPUT_BIAS, &mut self.output_bias),
        ]
    }
}

fn shapes(dims: &ModelDims) -> [Vec<usize>; 6] {
    let (v, l, d, h) = (dims.vocab, dims.num_languages, dims.embed_dim, dims.hidden_dim);
    [vec![v, d], vec![l, d], vec![d, h], vec![h], vec![h, v], vec![v]]
}

/// Draws every entry i.i.d. uniform in [-0.1, 0.1].
pub fn init_params(dims: ModelDims, seed: u64) -> Result<ModelParams, ModelError> {
    dims.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |shape: Vec<usize>| {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-0.1..=0.1)).collect();
        Tensor::from_parts(shape, data)
    };
    let [te, le, hw, hb, ow, ob] = shapes(&dims);
    Ok(ModelParams {
        dims,
        token_embedding: draw(te),
        language_embedding: draw(le),
        hidden_weight: draw(hw),
        hidden_bias: draw(hb),
        output_weight: draw(ow),
        output_bias: draw(ob),
    })
}

impl ModelParams {
    pub fn zeros(dims: ModelDims) -> Result<Self, ModelError> {
        dims.validate()?;
        let [te, le, hw, hb, ow, ob] = shapes(&dims);
        Ok(ModelParams {
            dims,
            token_embedding: Tensor::zeros(&te),
            language_embedding: Tensor::zeros(&le),
            hidden_weight: Tensor::zeros(&hw),
            hidden_bias: Tensor::zeros(&hb),
            output_weight: Tensor::zeros(&ow),
            output_bias: Tensor::zeros(&ob),
        })
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn all_finite(&self) -> bool {
        self.params().iter().all(|(_, t)| t.all_finite())
    }

    fn check_batch(&self, batch: &Batch) -> Result<(), ModelError> {
        batch.check_shape()?;
        if batch.language >= self.dims.num_languages {
            return Err(ModelError::LanguageOutOfRange {
                language: batch.language,
                num_languages: self.dims.num_languages,
            });
        }
        if batch.num_positions() == 0 {
            return Err(ModelError::BadBatch("batch has no token positions".into()));
        }
        let vocab = self.dims.vocab;
        let all = batch.sources.iter().flatten().chain(batch.targets.iter().flatten());
        let n = batch.num_positions();
        for (position, &token) in all.enumerate() {
            if token as usize >= vocab {
                return Err(ModelError::TokenOutOfRange {
                    position: position % n,
                    token,
                    vocab,
                });
            }
        }
        Ok(())
    }

    /// Records the forward pass on `graph`; parameter leaves get ids
    /// `base + k` in declaration order. Returns the `[positions × vocab]`
    /// logits node.
    pub fn record(&self, graph: &mut Graph, batch: &Batch, base: usize) -> Result<NodeId, ModelError> {
        self.check_batch(batch)?;
        let n = batch.num_positions();
        let leaves: Vec<NodeId> = self
            .params()
            .into_iter()
            .map(|(id, t)| graph.param(ParamId(base + id.0), t.clone()))
            .collect();
        let tok = graph.row_lookup(leaves[0], batch.flat_sources())?;
        let lang = graph.row_lookup(leaves[1], vec![batch.language; n])?;
        let x = graph.add(tok, lang)?;
        let pre = graph.matmul(x, leaves[2])?;
        let pre = graph.add(pre, leaves[3])?;
        let hidden = graph.tanh(pre)?;
        let out = graph.matmul(hidden, leaves[4])?;
        Ok(graph.add(out, leaves[5])?)
    }

    /// Per-position logits, `[positions × vocab]`, without recording a tape.
    pub fn forward_logits(&self, batch: &Batch) -> Result<Tensor, ModelError> {
        self.check_batch(batch)?;
        let n = batch.num_positions();
        let (v, d, h) = (self.dims.vocab, self.dims.embed_dim, self.dims.hidden_dim);
        let tok = grad::gather_rows(self.token_embedding.data(), d, &batch.flat_sources());
        let lang = grad::gather_rows(self.language_embedding.data(), d, &vec![batch.language; n]);
        let x: Vec<f64> = tok.iter().zip(&lang).map(|(a, b)| a + b).collect();
        let pre = grad::add_row_bias(&grad::matmul(&x, self.hidden_weight.data(), n, d, h), self.hidden_bias.data());
        let hidden: Vec<f64> = pre.iter().map(|v| v.tanh()).collect();
        let logits = grad::add_row_bias(&grad::matmul(&hidden, self.output_weight.data(), n, h, v), self.output_bias.data());
        Ok(Tensor::from_parts(vec![n, v], logits))
    }

    /// Softmax rows of [`forward_logits`](Self::forward_logits).
    pub fn predict_distribution(&self, batch: &Batch) -> Result<Tensor, ModelError> {
        let logits = self.forward_logits(batch)?;
        Ok(softmax(&logits))
    }

    /// Row-wise log-probabilities.
    pub fn log_probs(&self, batch: &Batch) -> Result<Tensor, ModelError> {
        let logits = self.forward_logits(batch)?;
        let cols = logits.cols();
        Ok(Tensor::from_parts(logits.shape().to_vec(), grad::log_softmax_rows(logits.data(), cols)))
    }
}

pub fn softmax(logits: &Tensor) -> Tensor {
    Tensor::from_parts(logits.shape().to_vec(), grad::softmax_rows(logits.data(), logits.cols()))
}

// Checkpoint layout: 16-byte header (8-byte magic, u32 version, u32
// reserved), four u64 dims (vocab, languages, embed, hidden), then every
// array in declaration order as little-endian f64.
const MAGIC: &[u8; 8] = b"PMDCKPT\0";
const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(params: &ModelParams, mut w: W) -> Result<(), ModelError> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&0u32.to_le_bytes())?;
    let d = params.dims;
    for x in [d.vocab, d.num_languages, d.embed_dim, d.hidden_dim] {
        w.write_all(&(x as u64).to_le_bytes())?;
    }
    for (_, t) in params.params() {
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<ModelParams, ModelError> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if &header[..8] != MAGIC {
        return Err(ModelError::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(header[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(ModelError::Checkpoint(format!("unsupported version {version}")));
    }
    let mut read_u64 = || -> Result<u64, ModelError> {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    };
    let dims = ModelDims {
        vocab: read_u64()? as usize,
        num_languages: read_u64()? as usize,
        embed_dim: read_u64()? as usize,
        hidden_dim: read_u64()? as usize,
    };
    dims.validate()?;
    let mut params = ModelParams::zeros(dims)?;
    for (_, t) in params.params_mut() {
        for v in t.data_mut() {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            *v = f64::from_le_bytes(b);
        }
    }
    if !params.all_finite() {
        return Err(ModelError::Checkpoint("non-finite parameter".into()));
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(ModelError::Checkpoint("trailing bytes after parameters".into()));
    }
    Ok(params)
}
