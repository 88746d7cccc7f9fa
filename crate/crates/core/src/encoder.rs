//! Quote and context encoders over the transformer backbone.
//!
//! A quote `q` is encoded as `[CLS] q` and represented by the final hidden
//! state at `[CLS]`. A context is encoded in one of two layouts:
//!
//! - mask slot: `[CLS] left [MASK] right`, read at `[MASK]`;
//! - separator: `[CLS] left [SEP] right`, read at `[CLS]`.
//!
//! Sememe fusion, when enabled, applies to quote token embeddings only.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::QuoteCatalog;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::kv::{self, KvFile};
use crate::nn::{BackboneConfig, SeqBatch, Transformer};
use crate::sememe::{FusionPlan, SememeLexicon};
use crate::tokenizer::{Tokenizer, CLS, MASK, SEP};
use crate::QuoteId;

const FORMAT: &str = "quoter-encoder-1";
const ENCODE_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextMode {
    MaskSlot,
    SepCls,
}

impl fmt::Display for ContextMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ContextMode::MaskSlot => "mask_slot",
            ContextMode::SepCls => "sep_cls",
        })
    }
}

impl FromStr for ContextMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mask_slot" => Ok(ContextMode::MaskSlot),
            "sep_cls" => Ok(ContextMode::SepCls),
            other => Err(Error::Config(format!("unknown context mode {other:?} (mask_slot|sep_cls)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn: usize,
    pub max_quote_tokens: usize,
    pub max_context_tokens: usize,
    pub context_mode: ContextMode,
    pub sememe_fusion: bool,
    pub sememe_weight: f64,
    pub share_weights: bool,
    /// Vocabulary cap when the tokenizer is trained from data.
    pub vocab_limit: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            hidden: 128,
            layers: 4,
            heads: 4,
            ffn: 512,
            max_quote_tokens: 64,
            max_context_tokens: 160,
            context_mode: ContextMode::MaskSlot,
            sememe_fusion: true,
            sememe_weight: 0.5,
            share_weights: false,
            vocab_limit: 8000,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_quote_tokens < 2 {
            return Err(Error::Config("max_quote_tokens must be at least 2".into()));
        }
        if self.max_context_tokens < 3 {
            return Err(Error::Config("max_context_tokens must be at least 3".into()));
        }
        Ok(())
    }

    fn backbone(&self, vocab_size: usize, max_positions: usize, num_sememes: usize) -> BackboneConfig {
        BackboneConfig {
            vocab_size,
            hidden: self.hidden,
            layers: self.layers,
            heads: self.heads,
            ffn: self.ffn,
            max_positions,
            num_sememes,
            sememe_weight: self.sememe_weight,
        }
    }
}

/// A tokenized sequence ready for batching.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub ids: Vec<u32>,
    pub output: usize,
    pub fusion: Option<FusionPlan>,
}

pub fn batch_of<'a>(items: impl IntoIterator<Item = &'a Prepared>) -> Result<SeqBatch> {
    let mut batch = SeqBatch::new();
    for p in items {
        batch.push(&p.ids, p.output, p.fusion.as_ref())?;
    }
    Ok(batch)
}

/// Quote vectors for a catalog, row `i` for `ids[i]`, tagged with the
/// fingerprint of the quote encoder that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct QuoteIndex {
    pub ids: Vec<QuoteId>,
    pub matrix: Array2<f32>,
    pub fingerprint: String,
}

impl QuoteIndex {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    /// Dot-product logits `Q c`.
    pub fn logits(&self, context: ArrayView1<'_, f32>) -> Result<Vec<f64>> {
        if context.len() != self.dim() {
            return Err(Error::Shape(format!("context width {} vs index width {}", context.len(), self.dim())));
        }
        Ok(self
            .matrix
            .outer_iter()
            .map(|row| row.iter().zip(context).map(|(&a, &b)| a as f64 * b as f64).sum())
            .collect())
    }

    /// Binary layout: a JSON header line, then row-major little-endian `f32`.
    pub fn save(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Header<'a> {
            ids: &'a [QuoteId],
            dim: usize,
            fingerprint: &'a str,
        }
        let mut out = serde_json::to_vec(&Header {
            ids: &self.ids,
            dim: self.dim(),
            fingerprint: &self.fingerprint,
        })?;
        out.push(b'\n');
        for v in self.matrix.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            ids: Vec<QuoteId>,
            dim: usize,
            fingerprint: String,
        }
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::parse(path, 1, "missing index header"))?;
        let header: Header = serde_json::from_slice(&bytes[..nl]).map_err(|e| Error::parse(path, 1, e.to_string()))?;
        let values = read_f32(&bytes[nl + 1..]).ok_or_else(|| Error::parse(path, 2, "truncated index body"))?;
        let matrix = Array2::from_shape_vec((header.ids.len(), header.dim), values)
            .map_err(|e| Error::parse(path, 2, e.to_string()))?;
        Ok(QuoteIndex {
            ids: header.ids,
            matrix,
            fingerprint: header.fingerprint,
        })
    }
}

fn read_f32(bytes: &[u8]) -> Option<Vec<f32>> {
    if bytes.len() % 4 != 0 {
        return None;
    }
    Some(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

fn write_f32(path: &Path, values: &[f32]) -> Result<()> {
    let mut out = Vec::with_capacity(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone)]
pub struct DualEncoder {
    config: EncoderConfig,
    tokenizer: Tokenizer,
    lexicon: Option<SememeLexicon>,
    quote: Transformer<f32>,
    /// `None` when the context side shares the quote encoder's weights.
    context: Option<Transformer<f32>>,
}

impl DualEncoder {
    /// Fresh weights. `lexicon` is required when fusion is enabled and
    /// ignored otherwise.
    pub fn new(config: EncoderConfig, tokenizer: Tokenizer, lexicon: Option<SememeLexicon>) -> Result<Self> {
        config.validate()?;
        let lexicon = if config.sememe_fusion {
            let lex = lexicon.ok_or_else(|| Error::Config("sememe fusion enabled without a lexicon".into()))?;
            if lex.num_sememes() == 0 {
                return Err(Error::Config("sememe lexicon is empty".into()));
            }
            Some(lex)
        } else {
            None
        };
        let num_sememes = lexicon.as_ref().map_or(0, SememeLexicon::num_sememes);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let vocab = tokenizer.vocab_size();
        let max_pos = config.max_quote_tokens.max(config.max_context_tokens);
        let quote = Transformer::new(config.backbone(vocab, max_pos, num_sememes), &mut rng)?;
        let context = if config.share_weights {
            None
        } else {
            Some(Transformer::new(config.backbone(vocab, max_pos, 0), &mut rng)?)
        };
        Ok(DualEncoder {
            config,
            tokenizer,
            lexicon,
            quote,
            context,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    pub fn lexicon(&self) -> Option<&SememeLexicon> {
        self.lexicon.as_ref()
    }

    pub fn quote_encoder(&self) -> &Transformer<f32> {
        &self.quote
    }

    pub fn quote_encoder_mut(&mut self) -> &mut Transformer<f32> {
        &mut self.quote
    }

    pub fn context_encoder(&self) -> &Transformer<f32> {
        self.context.as_ref().unwrap_or(&self.quote)
    }

    pub fn context_encoder_mut(&mut self) -> &mut Transformer<f32> {
        match &mut self.context {
            Some(c) => c,
            None => &mut self.quote,
        }
    }

    pub fn shares_weights(&self) -> bool {
        self.context.is_none()
    }

    /// Gives the context side its own copy of the shared weights.
    pub fn untie(&mut self) {
        if self.context.is_none() {
            let mut c = self.quote.clone();
            c.set_sememe_weight(0.0);
            self.context = Some(c);
        }
    }

    pub fn prepare_quote(&self, text: &str) -> Result<Prepared> {
        let mut enc = self.tokenizer.encode(text);
        if enc.is_empty() {
            return Err(Error::Empty("quote text"));
        }
        enc.truncate_end(self.config.max_quote_tokens - 1);
        let mut ids = Vec::with_capacity(enc.len() + 1);
        ids.push(CLS);
        ids.extend_from_slice(&enc.ids);
        let fusion = match &self.lexicon {
            Some(lex) => {
                let plan = FusionPlan::build(&enc.words, lex, enc.len())?.shifted(1);
                (!plan.is_empty()).then_some(plan)
            }
            None => None,
        };
        Ok(Prepared { ids, output: 0, fusion })
    }

    pub fn prepare_context(&self, left: &str, right: &str) -> Result<Prepared> {
        self.prepare_context_as(left, right, self.config.context_mode)
    }

    /// Each side gets half of the token budget; a short side lends what it
    /// does not use. The left side keeps its last tokens and the right side
    /// its first, i.e. those nearest the quote slot.
    pub fn prepare_context_as(&self, left: &str, right: &str, mode: ContextMode) -> Result<Prepared> {
        let mut l = self.tokenizer.encode(left);
        let mut r = self.tokenizer.encode(right);
        if l.is_empty() && r.is_empty() {
            return Err(Error::Empty("context (both sides)"));
        }
        let budget = self.config.max_context_tokens - 2;
        let half = budget / 2;
        let l_keep = l.len().min(budget - r.len().min(budget - half));
        let r_keep = r.len().min(budget - l_keep);
        l.truncate_start(l_keep);
        r.truncate_end(r_keep);
        let mut ids = Vec::with_capacity(2 + l.len() + r.len());
        ids.push(CLS);
        ids.extend_from_slice(&l.ids);
        let slot = ids.len();
        ids.push(match mode {
            ContextMode::MaskSlot => MASK,
            ContextMode::SepCls => SEP,
        });
        ids.extend_from_slice(&r.ids);
        let output = match mode {
            ContextMode::MaskSlot => slot,
            ContextMode::SepCls => 0,
        };
        Ok(Prepared {
            ids,
            output,
            fusion: None,
        })
    }

    fn encode_prepared(&self, model: &Transformer<f32>, items: &[Prepared], exec: Exec) -> Result<Array2<f32>> {
        if items.is_empty() {
            return Ok(Array2::zeros((0, self.config.hidden)));
        }
        let chunks: Vec<&[Prepared]> = items.chunks(ENCODE_CHUNK).collect();
        // Chunks fan out; inside a chunk the forward pass runs sequentially.
        let parts = exec.try_map(&chunks, |chunk| model.forward(&batch_of(chunk.iter())?, Exec::Sequential))?;
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        ndarray::concatenate(ndarray::Axis(0), &views).map_err(|e| Error::Shape(e.to_string()))
    }

    pub fn encode_quotes(&self, texts: &[&str], exec: Exec) -> Result<Array2<f32>> {
        let items = texts.iter().map(|t| self.prepare_quote(t)).collect::<Result<Vec<_>>>()?;
        self.encode_prepared(&self.quote, &items, exec)
    }

    pub fn encode_quote(&self, text: &str) -> Result<Vec<f32>> {
        Ok(self.encode_quotes(&[text], Exec::Sequential)?.row(0).to_vec())
    }

    pub fn encode_prepared_quotes(&self, items: &[Prepared], exec: Exec) -> Result<Array2<f32>> {
        self.encode_prepared(&self.quote, items, exec)
    }

    pub fn encode_prepared_contexts(&self, items: &[Prepared], exec: Exec) -> Result<Array2<f32>> {
        self.encode_prepared(self.context_encoder(), items, exec)
    }

    pub fn encode_contexts(&self, contexts: &[(&str, &str)], exec: Exec) -> Result<Array2<f32>> {
        let items = contexts
            .iter()
            .map(|(l, r)| self.prepare_context(l, r))
            .collect::<Result<Vec<_>>>()?;
        self.encode_prepared(self.context_encoder(), &items, exec)
    }

    pub fn encode_context(&self, left: &str, right: &str) -> Result<Vec<f32>> {
        Ok(self.encode_contexts(&[(left, right)], Exec::Sequential)?.row(0).to_vec())
    }

    /// Hash of everything that determines quote vectors: quote-encoder
    /// weights, vocabulary, lexicon and quote-side settings.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(FORMAT.as_bytes());
        for p in self.quote.params() {
            h.update(p.to_le_bytes());
        }
        for id in 0..self.tokenizer.vocab_size() as u32 {
            h.update(self.tokenizer.token(id).unwrap_or_default().as_bytes());
            h.update([0]);
        }
        h.update(self.config.sememe_weight.to_le_bytes());
        h.update((self.config.max_quote_tokens as u64).to_le_bytes());
        if let Some(lex) = &self.lexicon {
            let mut words: Vec<_> = lex.entries().collect();
            words.sort();
            for (w, sememes) in words {
                h.update(w.as_bytes());
                h.update([0]);
                for s in sememes {
                    h.update(s.0.to_le_bytes());
                }
            }
        }
        hex::encode(h.finalize())
    }

    pub fn build_quote_index(&self, catalog: &QuoteCatalog, exec: Exec) -> Result<QuoteIndex> {
        let texts: Vec<&str> = catalog.quotes().iter().map(|q| q.text.as_str()).collect();
        Ok(QuoteIndex {
            ids: catalog.ids().to_vec(),
            matrix: self.encode_quotes(&texts, exec)?,
            fingerprint: self.fingerprint(),
        })
    }

    /// Checkpoint directory: `manifest.txt` (key = value), `vocab.txt`,
    /// `sememes.jsonl` when fusion is on, and little-endian `f32` weight blobs
    /// `quote_encoder.bin` and (unless shared) `context_encoder.bin`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let c = &self.config;
        let manifest = kv::render(&[
            ("format", FORMAT.to_string()),
            ("context_mode", c.context_mode.to_string()),
            ("hidden", c.hidden.to_string()),
            ("layers", c.layers.to_string()),
            ("heads", c.heads.to_string()),
            ("ffn", c.ffn.to_string()),
            ("max_quote_tokens", c.max_quote_tokens.to_string()),
            ("max_context_tokens", c.max_context_tokens.to_string()),
            ("sememe_fusion", c.sememe_fusion.to_string()),
            ("sememe_weight", c.sememe_weight.to_string()),
            ("share_weights", self.shares_weights().to_string()),
            ("vocab_limit", c.vocab_limit.to_string()),
            ("seed", c.seed.to_string()),
            ("fingerprint", self.fingerprint()),
        ]);
        let path = dir.join("manifest.txt");
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(manifest.as_bytes()).map_err(|e| Error::io(&path, e))?;
        self.tokenizer.save(&dir.join("vocab.txt"))?;
        if let Some(lex) = &self.lexicon {
            lex.save(&dir.join("sememes.jsonl"))?;
        }
        write_f32(&dir.join("quote_encoder.bin"), self.quote.params())?;
        if let Some(ctx) = &self.context {
            write_f32(&dir.join("context_encoder.bin"), ctx.params())?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let kv = KvFile::read(&dir.join("manifest.txt"))?;
        let format: String = kv.require("format")?;
        if format != FORMAT {
            return Err(Error::Checkpoint(format!("unsupported format {format:?}")));
        }
        let config = EncoderConfig {
            hidden: kv.require("hidden")?,
            layers: kv.require("layers")?,
            heads: kv.require("heads")?,
            ffn: kv.require("ffn")?,
            max_quote_tokens: kv.require("max_quote_tokens")?,
            max_context_tokens: kv.require("max_context_tokens")?,
            context_mode: kv.require("context_mode")?,
            sememe_fusion: kv.require("sememe_fusion")?,
            sememe_weight: kv.require("sememe_weight")?,
            share_weights: kv.require("share_weights")?,
            vocab_limit: kv.require("vocab_limit")?,
            seed: kv.require("seed")?,
        };
        config.validate()?;
        let tokenizer = Tokenizer::load(&dir.join("vocab.txt"))?;
        let lexicon = if config.sememe_fusion {
            Some(SememeLexicon::load(&dir.join("sememes.jsonl"))?)
        } else {
            None
        };
        let num_sememes = lexicon.as_ref().map_or(0, SememeLexicon::num_sememes);
        let vocab = tokenizer.vocab_size();
        let max_pos = config.max_quote_tokens.max(config.max_context_tokens);
        let blob = |name: &str| -> Result<Vec<f32>> {
            let path = dir.join(name);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            read_f32(&bytes).ok_or_else(|| Error::Checkpoint(format!("{name} is not a whole number of f32 values")))
        };
        let quote = Transformer::from_params(config.backbone(vocab, max_pos, num_sememes), blob("quote_encoder.bin")?)
            .map_err(|e| Error::Checkpoint(format!("quote encoder: {e}")))?;
        let context = if config.share_weights {
            None
        } else {
            Some(
                Transformer::from_params(config.backbone(vocab, max_pos, 0), blob("context_encoder.bin")?)
                    .map_err(|e| Error::Checkpoint(format!("context encoder: {e}")))?,
            )
        };
        let encoder = DualEncoder {
            config,
            tokenizer,
            lexicon,
            quote,
            context,
        };
        let recorded: String = kv.require("fingerprint")?;
        let actual = encoder.fingerprint();
        if recorded != actual {
            return Err(Error::Checkpoint(format!(
                "manifest fingerprint {recorded} does not match weights ({actual})"
            )));
        }
        Ok(encoder)
    }
}
