//! Synthetic long-tailed multilingual parallel data.
//!
//! Language `ℓ` translates by a substitution cipher `π_ℓ` over an alphabet of
//! `A` symbols. Language 0 (the largest) gets a uniform random bijection; every
//! other language keeps `π_0` on a random `r`-fraction of the alphabet and
//! reshuffles the remaining images among the remaining symbols.

use std::collections::HashSet;
use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Batch, Token};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid corpus spec: {0}")]
    InvalidSpec(String),
    #[error("unknown language id {language} (corpus has {num_languages})")]
    UnknownLanguage { language: usize, num_languages: usize },
    #[error("{split:?} split of language {language} is empty")]
    EmptySplit { language: usize, split: Split },
    #[error("corpus file {path}, line {line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("corpus header: {0}")]
    Header(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSpec {
    pub num_languages: usize,
    pub alphabet_size: usize,
    /// Total sentence count per language (train + valid), non-increasing.
    pub sizes: Vec<usize>,
    pub min_len: usize,
    pub max_len: usize,
    pub relatedness: f64,
    pub valid_size: usize,
    pub trial_fraction: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            num_languages: 4,
            alphabet_size: 24,
            sizes: vec![8000, 2000, 400, 80],
            min_len: 4,
            max_len: 10,
            relatedness: 0.7,
            valid_size: 64,
            trial_fraction: 0.1,
            seed: 2023,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitSizes {
    pub train: usize,
    pub valid: usize,
    pub trial: usize,
}

/// `round(ρ · train)`, at least 1.
pub fn trial_count(train: usize, trial_fraction: f64) -> usize {
    ((trial_fraction * train as f64).round() as usize).max(1)
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: String| Err(CorpusError::InvalidSpec(m));
        if self.num_languages == 0 {
            return bad("num_languages must be at least 1".into());
        }
        if self.sizes.len() != self.num_languages {
            return bad(format!(
                "sizes has {} entries but num_languages is {}",
                self.sizes.len(),
                self.num_languages
            ));
        }
        if self.alphabet_size < 2 {
            return bad(format!("alphabet_size must be at least 2, got {}", self.alphabet_size));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return bad(format!("length range [{}, {}] is empty or zero", self.min_len, self.max_len));
        }
        if !(0.0..=1.0).contains(&self.relatedness) {
            return bad(format!("relatedness must lie in [0, 1], got {}", self.relatedness));
        }
        if !(self.trial_fraction > 0.0 && self.trial_fraction < 1.0) {
            return bad(format!("trial_fraction must lie in (0, 1), got {}", self.trial_fraction));
        }
        if self.valid_size == 0 {
            return bad("valid_size must be at least 1".into());
        }
        for (l, &n) in self.sizes.iter().enumerate() {
            if n < self.valid_size + 10 {
                return bad(format!(
                    "language {l}: size {n} is below valid_size + 10 = {}",
                    self.valid_size + 10
                ));
            }
        }
        if self.sizes.windows(2).any(|w| w[0] < w[1]) {
            return bad(format!("sizes must be sorted high- to low-resource, got {:?}", self.sizes));
        }
        Ok(())
    }

    pub fn train_sizes(&self) -> Vec<usize> {
        self.sizes.iter().map(|n| n - self.valid_size).collect()
    }

    pub fn split_sizes(&self) -> Vec<SplitSizes> {
        self.train_sizes()
            .into_iter()
            .map(|train| SplitSizes {
                train,
                valid: self.valid_size,
                trial: trial_count(train, self.trial_fraction),
            })
            .collect()
    }

    /// Languages in the top half by size (ties resolved by order).
    pub fn high_resource(&self) -> Vec<usize> {
        (0..self.num_languages / 2).collect()
    }

    pub fn low_resource(&self) -> Vec<usize> {
        (self.num_languages / 2..self.num_languages).collect()
    }

    /// Vocabulary size the alphabet and language tags require.
    pub fn vocab_size(&self) -> usize {
        self.alphabet_size + self.num_languages
    }
}

pub fn split_sizes(spec: &CorpusSpec) -> Result<Vec<SplitSizes>, CorpusError> {
    spec.validate()?;
    Ok(spec.split_sizes())
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SentencePair {
    pub source: Vec<Token>,
    pub target: Vec<Token>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Valid,
    Trial,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LanguageData {
    pub cipher: Vec<Token>,
    pub train: Vec<SentencePair>,
    pub valid: Vec<SentencePair>,
    /// Indices into `train`, ascending.
    pub trial_indices: Vec<usize>,
    pub trial: Vec<SentencePair>,
}

impl LanguageData {
    pub fn split(&self, split: Split) -> &[SentencePair] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Trial => &self.trial,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultilingualCorpus {
    spec: CorpusSpec,
    languages: Vec<LanguageData>,
}

fn random_sentence(rng: &mut ChaCha8Rng, spec: &CorpusSpec, cipher: &[Token]) -> SentencePair {
    let len = rng.random_range(spec.min_len..=spec.max_len);
    let source: Vec<Token> = (0..len).map(|_| rng.random_range(0..spec.alphabet_size) as Token).collect();
    let target = source.iter().map(|&s| cipher[s as usize]).collect();
    SentencePair { source, target }
}

fn derive_ciphers(spec: &CorpusSpec, rng: &mut ChaCha8Rng) -> Vec<Vec<Token>> {
    let a = spec.alphabet_size;
    let mut root: Vec<Token> = (0..a as Token).collect();
    root.shuffle(rng);
    let shared = (spec.relatedness * a as f64).round() as usize;
    let mut ciphers = vec![root.clone()];
    for _ in 1..spec.num_languages {
        let mut symbols: Vec<usize> = (0..a).collect();
        symbols.shuffle(rng);
        let rest = &symbols[shared..];
        let mut images: Vec<Token> = rest.iter().map(|&s| root[s]).collect();
        images.shuffle(rng);
        let mut cipher = root.clone();
        for (&s, &img) in rest.iter().zip(&images) {
            cipher[s] = img;
        }
        ciphers.push(cipher);
    }
    ciphers
}

/// Generates the corpus; identical specs (including seed) give identical corpora.
pub fn generate(spec: &CorpusSpec) -> Result<MultilingualCorpus, CorpusError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ciphers = derive_ciphers(spec, &mut rng);
    let mut languages = Vec::with_capacity(spec.num_languages);
    for (l, cipher) in ciphers.into_iter().enumerate() {
        let n_train = spec.sizes[l] - spec.valid_size;
        let train: Vec<SentencePair> = (0..n_train).map(|_| random_sentence(&mut rng, spec, &cipher)).collect();
        let seen: HashSet<&SentencePair> = train.iter().collect();
        let mut valid = Vec::with_capacity(spec.valid_size);
        let mut attempts = 0usize;
        while valid.len() < spec.valid_size {
            let pair = random_sentence(&mut rng, spec, &cipher);
            attempts += 1;
            if !seen.contains(&pair) {
                valid.push(pair);
            } else if attempts > 1000 * spec.valid_size {
                return Err(CorpusError::InvalidSpec(format!(
                    "language {l}: cannot draw {} validation sentences disjoint from training data",
                    spec.valid_size
                )));
            }
        }
        drop(seen);
        let k = trial_count(n_train, spec.trial_fraction);
        let mut trial_indices = rand::seq::index::sample(&mut rng, n_train, k).into_vec();
        trial_indices.sort_unstable();
        let trial = trial_indices.iter().map(|&i| train[i].clone()).collect();
        languages.push(LanguageData {
            cipher,
            train,
            valid,
            trial_indices,
            trial,
        });
    }
    Ok(MultilingualCorpus {
        spec: spec.clone(),
        languages,
    })
}

impl MultilingualCorpus {
    pub fn spec(&self) -> &CorpusSpec {
        &self.spec
    }

    pub fn num_languages(&self) -> usize {
        self.languages.len()
    }

    pub fn language(&self, l: usize) -> Result<&LanguageData, CorpusError> {
        self.languages.get(l).ok_or(CorpusError::UnknownLanguage {
            language: l,
            num_languages: self.languages.len(),
        })
    }

    pub fn languages(&self) -> &[LanguageData] {
        &self.languages
    }

    pub fn train_sizes(&self) -> Vec<u64> {
        self.languages.iter().map(|d| d.train.len() as u64).collect()
    }

    /// Whole split of one language as a single batch.
    pub fn split_batch(&self, l: usize, split: Split) -> Result<Batch, CorpusError> {
        let data = self.language(l)?.split(split);
        if data.is_empty() {
            return Err(CorpusError::EmptySplit { language: l, split });
        }
        Ok(make_batch(l, data.iter()))
    }
}

pub(crate) fn make_batch<'a>(language: usize, pairs: impl Iterator<Item = &'a SentencePair>) -> Batch {
    let (sources, targets) = pairs.map(|p| (p.source.clone(), p.target.clone())).unzip();
    Batch {
        language,
        sources,
        targets,
    }
}

#[derive(Clone, Debug)]
struct Cursor {
    order: Vec<usize>,
    pos: usize,
}

/// Draws batches without replacement within an epoch-cycle; each language's
/// pool is reshuffled when exhausted.
#[derive(Clone, Debug)]
pub struct BatchSampler {
    split: Split,
    rng: ChaCha8Rng,
    cursors: Vec<Option<Cursor>>,
}

impl BatchSampler {
    pub fn new(num_languages: usize, split: Split, seed: u64) -> Self {
        BatchSampler {
            split,
            rng: ChaCha8Rng::seed_from_u64(seed),
            cursors: vec![None; num_languages],
        }
    }

    pub fn split(&self) -> Split {
        self.split
    }

    /// Next batch of up to `batch_size` pairs; the last batch of a cycle is
    /// clipped to what remains in the pool.
    pub fn draw(&mut self, corpus: &MultilingualCorpus, language: usize, batch_size: usize) -> Result<Batch, CorpusError> {
        let data = corpus.language(language)?.split(self.split);
        if data.is_empty() {
            return Err(CorpusError::EmptySplit {
                language,
                split: self.split,
            });
        }
        if language >= self.cursors.len() {
            self.cursors.resize(language + 1, None);
        }
        let rng = &mut self.rng;
        let cursor = self.cursors[language].get_or_insert_with(|| Cursor {
            order: Vec::new(),
            pos: 0,
        });
        if cursor.pos >= cursor.order.len() {
            cursor.order = (0..data.len()).collect();
            cursor.order.shuffle(rng);
            cursor.pos = 0;
        }
        let take = batch_size.max(1).min(cursor.order.len() - cursor.pos);
        let picked = &cursor.order[cursor.pos..cursor.pos + take];
        cursor.pos += take;
        Ok(make_batch(language, picked.iter().map(|&i| &data[i])))
    }
}

pub fn draw_batch(
    corpus: &MultilingualCorpus,
    language: usize,
    batch_size: usize,
    sampler: &mut BatchSampler,
) -> Result<Batch, CorpusError> {
    sampler.draw(corpus, language, batch_size)
}

// -- dump / load ------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u32,
    spec: CorpusSpec,
    languages: Vec<HeaderLanguage>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderLanguage {
    cipher: Vec<Token>,
    train: usize,
    valid: usize,
    trial_indices: Vec<usize>,
}

const HEADER_VERSION: u32 = 1;

/// Sidecar header path for a corpus data file: `<data>.meta.toml`.
pub fn header_path(data: &Path) -> PathBuf {
    let mut s = data.as_os_str().to_owned();
    s.push(".meta.toml");
    PathBuf::from(s)
}

fn join_tokens(tokens: &[Token]) -> String {
    let parts: Vec<String> = tokens.iter().map(|t| t.to_string()).collect();
    parts.join(" ")
}

/// Writes one `lang<TAB>source<TAB>target` line per pair (each language's
/// train pairs, then its valid pairs) plus the sidecar header.
pub fn dump(corpus: &MultilingualCorpus, data: &Path) -> Result<(), CorpusError> {
    let mut w = BufWriter::new(fs::File::create(data)?);
    for (l, lang) in corpus.languages.iter().enumerate() {
        for p in lang.train.iter().chain(&lang.valid) {
            writeln!(w, "{l}\t{}\t{}", join_tokens(&p.source), join_tokens(&p.target))?;
        }
    }
    w.flush()?;
    let header = Header {
        version: HEADER_VERSION,
        spec: corpus.spec.clone(),
        languages: corpus
            .languages
            .iter()
            .map(|l| HeaderLanguage {
                cipher: l.cipher.clone(),
                train: l.train.len(),
                valid: l.valid.len(),
                trial_indices: l.trial_indices.clone(),
            })
            .collect(),
    };
    let text = toml::to_string(&header).map_err(|e| CorpusError::Header(e.to_string()))?;
    fs::write(header_path(data), text)?;
    Ok(())
}

pub fn load(data: &Path) -> Result<MultilingualCorpus, CorpusError> {
    let text = fs::read_to_string(header_path(data))?;
    let header: Header = toml::from_str(&text).map_err(|e| CorpusError::Header(e.to_string()))?;
    if header.version != HEADER_VERSION {
        return Err(CorpusError::Header(format!("unsupported version {}", header.version)));
    }
    if header.languages.len() != header.spec.num_languages {
        return Err(CorpusError::Header("language table does not match spec".into()));
    }
    let mut pairs: Vec<Vec<SentencePair>> = vec![Vec::new(); header.languages.len()];
    let reader = io::BufReader::new(fs::File::open(data)?);
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let err = |msg: String| CorpusError::Parse {
            path: data.to_path_buf(),
            line: i + 1,
            msg,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(err(format!("expected 3 tab-separated fields, got {}", fields.len())));
        }
        let l: usize = fields[0].parse().map_err(|_| err(format!("bad language id {:?}", fields[0])))?;
        let parse = |s: &str| -> Result<Vec<Token>, CorpusError> {
            s.split(' ')
                .map(|t| t.parse::<Token>().map_err(|_| err(format!("bad token {t:?}"))))
                .collect()
        };
        let (source, target) = (parse(fields[1])?, parse(fields[2])?);
        let lang = header.languages.get(l).ok_or_else(|| err(format!("unknown language {l}")))?;
        if source.len() != target.len() {
            return Err(err("source and target lengths differ".into()));
        }
        for (&s, &t) in source.iter().zip(&target) {
            if lang.cipher.get(s as usize) != Some(&t) {
                return Err(err(format!("pair violates the language {l} cipher")));
            }
        }
        pairs[l].push(SentencePair { source, target });
    }
    let mut languages = Vec::new();
    for (l, (meta, mut all)) in header.languages.into_iter().zip(pairs).enumerate() {
        if all.len() != meta.train + meta.valid {
            return Err(CorpusError::Header(format!(
                "language {l}: header lists {} pairs, data has {}",
                meta.train + meta.valid,
                all.len()
            )));
        }
        let valid = all.split_off(meta.train);
        if meta.trial_indices.iter().any(|&i| i >= all.len()) {
            return Err(CorpusError::Header(format!("language {l}: trial index out of range")));
        }
        let trial = meta.trial_indices.iter().map(|&i| all[i].clone()).collect();
        languages.push(LanguageData {
            cipher: meta.cipher,
            train: all,
            valid,
            trial_indices: meta.trial_indices,
            trial,
        });
    }
    Ok(MultilingualCorpus {
        spec: header.spec,
        languages,
    })
}
