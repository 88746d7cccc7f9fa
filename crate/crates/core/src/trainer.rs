//! Two-stage training of the dual encoder.
//!
//! Stage 1 updates both encoders with the pseudo-rank loss against `N`
//! negatives drawn per example. Stage 2 freezes the quote encoder, encodes
//! the catalog once and retrains the context encoder with the full softmax
//! over every quote. After every epoch the model is scored on the validation
//! split and the best state so far is kept.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ContextQuotePair, Dataset, Split};
use crate::encoder::{batch_of, ContextMode, DualEncoder, EncoderConfig, Prepared, QuoteIndex};
use crate::error::{Error, Result};
use crate::evaluate::{evaluate, EvalMode, EvalReport, NeuralScorer};
use crate::exec::Exec;
use crate::kv::KvFile;
use crate::loss::{pseudo_rank_loss_grad, softmax_xent};
use crate::nn::{clip_grad_norms, AdamW, LinearSchedule};
use crate::sememe::SememeLexicon;
use crate::tokenizer::Tokenizer;
use crate::QuoteId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    Full,
    NoSememe,
    NoRetrain,
    NoSimtrain,
    SimBaseline,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [
        Ablation::Full,
        Ablation::NoSememe,
        Ablation::NoRetrain,
        Ablation::NoSimtrain,
        Ablation::SimBaseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoSememe => "no_sememe",
            Ablation::NoRetrain => "no_retrain",
            Ablation::NoSimtrain => "no_simtrain",
            Ablation::SimBaseline => "sim_baseline",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::UnknownAblation(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub ablation: Ablation,
    pub encoder: EncoderConfig,
    /// Negatives per example in stage 1.
    pub negatives: usize,
    /// Keep the quote encoder at its initial weights during stage 1.
    pub freeze_quote_encoder: bool,
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    pub batch_size: usize,
    /// Peak learning rate of each stage; it decays linearly to zero.
    pub lr: f64,
    pub warmup_fraction: f64,
    pub weight_decay: f64,
    pub max_grad_norm: f64,
    /// Epochs without a validation improvement before a stage stops early.
    pub patience: usize,
    pub seed: u64,
    /// Validate on at most this many pairs (in split order).
    pub validation_limit: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            ablation: Ablation::Full,
            encoder: EncoderConfig::default(),
            negatives: 19,
            freeze_quote_encoder: false,
            stage1_epochs: 3,
            stage2_epochs: 3,
            batch_size: 32,
            lr: 1e-3,
            warmup_fraction: 0.0,
            weight_decay: 0.01,
            max_grad_norm: 1.0,
            patience: 2,
            seed: 0,
            validation_limit: None,
        }
    }
}

const CONFIG_KEYS: &[&str] = &[
    "ablation",
    "negatives",
    "sememe_weight",
    "stage1_epochs",
    "stage2_epochs",
    "batch_size",
    "lr",
    "warmup_fraction",
    "weight_decay",
    "max_grad_norm",
    "patience",
    "seed",
    "validation_limit",
    "hidden",
    "layers",
    "heads",
    "ffn",
    "max_quote_tokens",
    "max_context_tokens",
    "share_weights",
    "vocab_limit",
];

/// Defaults with the switches of the named ablation applied.
pub fn configure_ablation(name: &str) -> Result<TrainConfig> {
    let mut c = TrainConfig::default();
    c.apply_ablation(name.parse()?);
    Ok(c)
}

impl TrainConfig {
    /// Sets the switches an ablation controls: sememe fusion, stage 2, the
    /// stage-1 quote freeze and the context layout.
    pub fn apply_ablation(&mut self, ablation: Ablation) {
        self.ablation = ablation;
        let (fusion, retrain, freeze, mode) = match ablation {
            Ablation::Full => (true, true, false, ContextMode::MaskSlot),
            Ablation::NoSememe => (false, true, false, ContextMode::MaskSlot),
            Ablation::NoRetrain => (false, false, false, ContextMode::MaskSlot),
            Ablation::NoSimtrain => (false, true, true, ContextMode::MaskSlot),
            Ablation::SimBaseline => (false, true, true, ContextMode::SepCls),
        };
        self.encoder.sememe_fusion = fusion;
        self.freeze_quote_encoder = freeze;
        self.encoder.context_mode = mode;
        if !retrain {
            self.stage2_epochs = 0;
        }
    }

    /// Reads a flat `key = value` file over the defaults. The ablation is
    /// applied last, so it overrides the switches it controls.
    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        kv.reject_unknown(CONFIG_KEYS)?;
        let mut c = TrainConfig::default();
        macro_rules! set {
            ($field:expr, $key:literal) => {
                if let Some(v) = kv.get($key)? {
                    $field = v;
                }
            };
        }
        set!(c.negatives, "negatives");
        set!(c.encoder.sememe_weight, "sememe_weight");
        set!(c.stage1_epochs, "stage1_epochs");
        set!(c.stage2_epochs, "stage2_epochs");
        set!(c.batch_size, "batch_size");
        set!(c.lr, "lr");
        set!(c.warmup_fraction, "warmup_fraction");
        set!(c.weight_decay, "weight_decay");
        set!(c.max_grad_norm, "max_grad_norm");
        set!(c.patience, "patience");
        set!(c.seed, "seed");
        set!(c.encoder.hidden, "hidden");
        set!(c.encoder.layers, "layers");
        set!(c.encoder.heads, "heads");
        set!(c.encoder.ffn, "ffn");
        set!(c.encoder.max_quote_tokens, "max_quote_tokens");
        set!(c.encoder.max_context_tokens, "max_context_tokens");
        set!(c.encoder.share_weights, "share_weights");
        set!(c.encoder.vocab_limit, "vocab_limit");
        if let Some(v) = kv.get("validation_limit")? {
            c.validation_limit = Some(v);
        }
        let ablation = kv.get::<Ablation>("ablation")?.unwrap_or(Ablation::Full);
        c.apply_ablation(ablation);
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.negatives == 0 {
            return Err(Error::Config("negatives must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("invalid learning rate {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::Config("warmup_fraction must be in [0, 1)".into()));
        }
        if !(self.encoder.sememe_weight >= 0.0 && self.encoder.sememe_weight.is_finite()) {
            return Err(Error::Config(format!("invalid sememe weight {}", self.encoder.sememe_weight)));
        }
        self.encoder.validate()
    }
}

/// `n` distinct catalog positions drawn uniformly without replacement from
/// every position except `gold`.
pub fn sample_negative_positions<R: Rng>(gold: usize, num_quotes: usize, n: usize, rng: &mut R) -> Result<Vec<usize>> {
    if gold >= num_quotes {
        return Err(Error::OutOfRange(format!("gold position {gold} of {num_quotes}")));
    }
    if n >= num_quotes {
        return Err(Error::Config(format!(
            "{n} negatives need a catalog of more than {n} quotes, have {num_quotes}"
        )));
    }
    Ok(index::sample(rng, num_quotes - 1, n)
        .into_iter()
        .map(|i| if i >= gold { i + 1 } else { i })
        .collect())
}

/// Quote ids version of [`sample_negative_positions`] over `ids`.
pub fn sample_negatives<R: Rng>(gold: QuoteId, ids: &[QuoteId], n: usize, rng: &mut R) -> Result<Vec<QuoteId>> {
    let g = ids.iter().position(|&q| q == gold).ok_or(Error::UnknownQuote(gold))?;
    Ok(sample_negative_positions(g, ids.len(), n, rng)?
        .into_iter()
        .map(|i| ids[i])
        .collect())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub stage: u8,
    pub epoch: usize,
    pub step: usize,
    pub best_valid_mrr: Option<f64>,
    /// Every new best, in the order reached.
    pub best_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub stage: u8,
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub stage: u8,
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_mrr: f64,
    pub improved: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    /// One `key=value` record per line: steps, then epoch summaries.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            out.push_str(&format!(
                "step stage={} epoch={} step={} loss={:.6} lr={:.3e}\n",
                s.stage, s.epoch, s.step, s.loss, s.lr
            ));
        }
        for e in &self.epochs {
            out.push_str(&format!(
                "epoch stage={} epoch={} train_loss={:.6} valid_mrr={:.6} improved={}\n",
                e.stage, e.epoch, e.train_loss, e.valid_mrr, e.improved
            ));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub encoder: DualEncoder,
    pub state: TrainState,
    pub log: TrainLog,
}

struct Prep {
    quotes: Vec<Prepared>,
    /// (context, gold catalog position)
    train: Vec<(Prepared, usize)>,
    valid: Vec<ContextQuotePair>,
}

fn prepare(encoder: &DualEncoder, dataset: &Dataset, limit: Option<usize>) -> Result<Prep> {
    let quotes = dataset
        .catalog
        .quotes()
        .iter()
        .map(|q| encoder.prepare_quote(&q.text))
        .collect::<Result<Vec<_>>>()?;
    let train = dataset
        .split(Split::Train)
        .map(|p| {
            let gold = dataset.catalog.position(p.quote_id).ok_or(Error::UnknownQuote(p.quote_id))?;
            Ok((encoder.prepare_context(&p.left, &p.right)?, gold))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut valid = dataset.split_pairs(Split::Valid);
    if let Some(n) = limit {
        valid.truncate(n);
    }
    Ok(Prep { quotes, train, valid })
}

/// Builds the tokenizer vocabulary from the training contexts and every
/// catalog quote.
pub fn train_tokenizer(dataset: &Dataset, vocab_limit: usize) -> Tokenizer {
    let texts = dataset
        .split(Split::Train)
        .flat_map(|p| [p.left.as_str(), p.right.as_str()])
        .chain(dataset.catalog.quotes().iter().map(|q| q.text.as_str()));
    Tokenizer::train(texts, vocab_limit, 1)
}

fn valid_mrr(encoder: &DualEncoder, index: &QuoteIndex, valid: &[ContextQuotePair], exec: Exec) -> Result<f64> {
    let scorer = NeuralScorer::new(encoder, index)?;
    Ok(evaluate(&scorer, valid, EvalMode::Full, exec)?.metrics.mrr)
}

/// Mean pseudo-rank loss of a batch and its gradients. `quote` is `None`
/// when the quote encoder is not trained. With shared weights both vectors
/// index the same parameters and must be summed by the caller.
#[derive(Debug, Clone)]
pub struct BatchGrads {
    pub loss: f64,
    pub context: Vec<f32>,
    pub quote: Option<Vec<f32>>,
}

/// Stage-1 step without the update. `contexts` pairs each prepared context
/// with its gold position in `quotes`; `negatives[b]` are positions too.
pub fn pseudo_rank_batch(
    encoder: &DualEncoder,
    quotes: &[Prepared],
    contexts: &[(&Prepared, usize)],
    negatives: &[Vec<usize>],
    quote_trainable: bool,
    exec: Exec,
) -> Result<BatchGrads> {
    if contexts.is_empty() || contexts.len() != negatives.len() {
        return Err(Error::Shape(format!("{} contexts, {} negative lists", contexts.len(), negatives.len())));
    }
    // Each distinct quote in the batch is encoded once; negatives stay per
    // example.
    let uniq: Vec<usize> = contexts
        .iter()
        .map(|c| c.1)
        .chain(negatives.iter().flatten().copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if let Some(&bad) = uniq.iter().find(|&&p| p >= quotes.len()) {
        return Err(Error::OutOfRange(format!("quote position {bad} of {}", quotes.len())));
    }
    let row_of: HashMap<usize, usize> = uniq.iter().enumerate().map(|(r, &p)| (p, r)).collect();
    let qbatch = batch_of(uniq.iter().map(|&p| &quotes[p]))?;
    let (qvec, qtape) = if quote_trainable {
        let (o, t) = encoder.quote_encoder().forward_train(&qbatch, exec)?;
        (o, Some(t))
    } else {
        (encoder.quote_encoder().forward(&qbatch, exec)?, None)
    };
    let cbatch = batch_of(contexts.iter().map(|c| c.0))?;
    let (cvec, ctape) = encoder.context_encoder().forward_train(&cbatch, exec)?;
    let q64 = qvec.mapv(f64::from);
    let c64 = cvec.mapv(f64::from);
    let mut dq = Array2::<f64>::zeros(q64.dim());
    let mut dc = Array2::<f64>::zeros(c64.dim());
    let mut loss = 0.0;
    for (b, (&(_, gold), negs)) in contexts.iter().zip(negatives).enumerate() {
        let g = row_of[&gold];
        let rows: Vec<usize> = negs.iter().map(|p| row_of[p]).collect();
        let r = pseudo_rank_loss_grad(q64.row(g), c64.row(b), q64.select(Axis(0), &rows).view())?;
        loss += r.loss;
        let mut row = dc.row_mut(b);
        row += &r.d_context;
        let mut row = dq.row_mut(g);
        row += &r.d_gold;
        for (k, &nr) in rows.iter().enumerate() {
            let mut row = dq.row_mut(nr);
            row += &r.d_negatives.row(k);
        }
    }
    let scale = 1.0 / contexts.len() as f64;
    let mut context = vec![0f32; encoder.context_encoder().num_params()];
    let dc = dc.mapv(|v| (v * scale) as f32);
    encoder.context_encoder().backward(&cbatch, ctape, dc.view(), &mut context, exec)?;
    let quote = match qtape {
        Some(t) => {
            let mut qg = vec![0f32; encoder.quote_encoder().num_params()];
            let dq = dq.mapv(|v| (v * scale) as f32);
            encoder.quote_encoder().backward(&qbatch, t, dq.view(), &mut qg, exec)?;
            Some(qg)
        }
        None => None,
    };
    Ok(BatchGrads {
        loss: loss * scale,
        context,
        quote,
    })
}

struct Run<'a> {
    config: &'a TrainConfig,
    exec: Exec,
    prep: Prep,
    encoder: DualEncoder,
    best: DualEncoder,
    state: TrainState,
    log: TrainLog,
    rng: ChaCha8Rng,
    catalog: &'a crate::corpus::QuoteCatalog,
}

impl Run<'_> {
    fn diverged(&self, loss: f64) -> Error {
        Error::Diverged {
            stage: self.state.stage,
            step: self.state.step,
            loss,
            state: Box::new(self.state.clone()),
        }
    }

    fn schedule(&self, epochs: usize) -> LinearSchedule {
        let per_epoch = self.prep.train.len().div_ceil(self.config.batch_size);
        let total = per_epoch * epochs;
        LinearSchedule {
            peak: self.config.lr,
            warmup: (self.config.warmup_fraction * total as f64) as usize,
            total,
        }
    }

    /// Records the epoch and keeps the encoder if it is the best so far.
    fn end_epoch(&mut self, train_loss: f64, mrr: f64) -> bool {
        let improved = self.state.best_valid_mrr.map_or(true, |b| mrr > b);
        if improved {
            self.state.best_valid_mrr = Some(mrr);
            self.state.best_history.push(mrr);
            self.best = self.encoder.clone();
        }
        log::info!(
            "stage {} epoch {}: train loss {:.4}, valid MRR {:.4}{}",
            self.state.stage,
            self.state.epoch,
            train_loss,
            mrr,
            if improved { " (best)" } else { "" }
        );
        self.log.epochs.push(EpochRecord {
            stage: self.state.stage,
            epoch: self.state.epoch,
            train_loss,
            valid_mrr: mrr,
            improved,
        });
        improved
    }

    fn stage1(&mut self) -> Result<()> {
        let cfg = self.config;
        self.state.stage = 1;
        let schedule = self.schedule(cfg.stage1_epochs);
        let quote_trainable = !cfg.freeze_quote_encoder;
        if !quote_trainable && self.encoder.shares_weights() {
            self.encoder.untie();
        }
        let shared = self.encoder.shares_weights();
        let ctx_params = self.encoder.context_encoder().num_params();
        let mut ctx_opt = AdamW::new(ctx_params, &self.encoder.context_encoder().decayed_ranges(), cfg.weight_decay);
        let mut q_opt = (quote_trainable && !shared).then(|| {
            let q = self.encoder.quote_encoder();
            AdamW::new(q.num_params(), &q.decayed_ranges(), cfg.weight_decay)
        });
        let num_quotes = self.prep.quotes.len();
        let mut stale = 0;
        for epoch in 0..cfg.stage1_epochs {
            self.state.epoch = epoch;
            let mut order: Vec<usize> = (0..self.prep.train.len()).collect();
            order.shuffle(&mut self.rng);
            let mut loss_sum = 0.0;
            let mut batches = 0;
            for chunk in order.chunks(cfg.batch_size) {
                let negatives = chunk
                    .iter()
                    .map(|&i| sample_negative_positions(self.prep.train[i].1, num_quotes, cfg.negatives, &mut self.rng))
                    .collect::<Result<Vec<_>>>()?;
                let contexts: Vec<(&Prepared, usize)> =
                    chunk.iter().map(|&i| (&self.prep.train[i].0, self.prep.train[i].1)).collect();
                let g = pseudo_rank_batch(&self.encoder, &self.prep.quotes, &contexts, &negatives, quote_trainable, self.exec)
                    .map_err(|_| self.diverged(f64::NAN))?;
                let loss = g.loss;
                if !loss.is_finite() {
                    return Err(self.diverged(loss));
                }
                let lr = schedule.lr(self.state.step);
                let (mut cg, mut qg) = (g.context, g.quote.unwrap_or_default());
                if shared {
                    cg.iter_mut().zip(&qg).for_each(|(c, q)| *c += q);
                    clip_grad_norms(&mut [&mut cg], cfg.max_grad_norm);
                } else {
                    clip_grad_norms(&mut [&mut cg, &mut qg], cfg.max_grad_norm);
                }
                ctx_opt.step(self.encoder.context_encoder_mut().params_mut(), &cg, lr, None);
                if let Some(opt) = q_opt.as_mut() {
                    opt.step(self.encoder.quote_encoder_mut().params_mut(), &qg, lr, None);
                }
                self.log.steps.push(StepRecord {
                    stage: 1,
                    epoch,
                    step: self.state.step,
                    loss,
                    lr,
                });
                self.state.step += 1;
                loss_sum += loss;
                batches += 1;
            }
            let index = self.encoder.build_quote_index(self.catalog, self.exec)?;
            let mrr = valid_mrr(&self.encoder, &index, &self.prep.valid, self.exec)?;
            if self.end_epoch(loss_sum / batches.max(1) as f64, mrr) {
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    break;
                }
            }
        }
        self.encoder = self.best.clone();
        Ok(())
    }

    fn stage2(&mut self) -> Result<()> {
        let cfg = self.config;
        self.state.stage = 2;
        self.encoder.untie();
        let schedule = self.schedule(cfg.stage2_epochs);
        let index = self.encoder.build_quote_index(self.catalog, self.exec)?;
        let qmat = index.matrix.mapv(f64::from);
        let ctx_params = self.encoder.context_encoder().num_params();
        let mut opt = AdamW::new(ctx_params, &self.encoder.context_encoder().decayed_ranges(), cfg.weight_decay);
        let mut stale = 0;
        let mut step_in_stage = 0;
        for epoch in 0..cfg.stage2_epochs {
            self.state.epoch = epoch;
            let mut order: Vec<usize> = (0..self.prep.train.len()).collect();
            order.shuffle(&mut self.rng);
            let mut loss_sum = 0.0;
            let mut batches = 0;
            for chunk in order.chunks(cfg.batch_size) {
                let cbatch = batch_of(chunk.iter().map(|&i| &self.prep.train[i].0))?;
                let (cvec, tape) = self.encoder.context_encoder().forward_train(&cbatch, self.exec)?;
                let c64 = cvec.mapv(f64::from);
                let logits = c64.dot(&qmat.t());
                let mut dlogits = Array2::<f64>::zeros(logits.dim());
                let mut loss = 0.0;
                for (b, &i) in chunk.iter().enumerate() {
                    let row = logits.row(b).to_vec();
                    let (l, g) = softmax_xent(&row, self.prep.train[i].1).map_err(|_| self.diverged(f64::NAN))?;
                    loss += l;
                    dlogits.row_mut(b).assign(&ndarray::ArrayView1::from(&g));
                }
                let scale = 1.0 / chunk.len() as f64;
                loss *= scale;
                if !loss.is_finite() {
                    return Err(self.diverged(loss));
                }
                let dc = dlogits.dot(&qmat).mapv(|v| (v * scale) as f32);
                let mut grads = vec![0f32; ctx_params];
                self.encoder.context_encoder().backward(&cbatch, tape, dc.view(), &mut grads, self.exec)?;
                clip_grad_norms(&mut [&mut grads], cfg.max_grad_norm);
                let lr = schedule.lr(step_in_stage);
                opt.step(self.encoder.context_encoder_mut().params_mut(), &grads, lr, None);
                self.log.steps.push(StepRecord {
                    stage: 2,
                    epoch,
                    step: self.state.step,
                    loss,
                    lr,
                });
                self.state.step += 1;
                step_in_stage += 1;
                loss_sum += loss;
                batches += 1;
            }
            let mrr = valid_mrr(&self.encoder, &index, &self.prep.valid, self.exec)?;
            if self.end_epoch(loss_sum / batches.max(1) as f64, mrr) {
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    break;
                }
            }
        }
        self.encoder = self.best.clone();
        Ok(())
    }
}

/// Trains a fresh dual encoder on `dataset`. The lexicon is required when the
/// configuration enables sememe fusion.
pub fn run_two_stage(
    config: &TrainConfig,
    dataset: &Dataset,
    lexicon: Option<&SememeLexicon>,
    exec: Exec,
) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.split(Split::Train).next().is_none() {
        return Err(Error::Empty("training split"));
    }
    if dataset.split(Split::Valid).next().is_none() {
        return Err(Error::Empty("validation split"));
    }
    let mut enc_config = config.encoder.clone();
    enc_config.seed = config.seed;
    let tokenizer = train_tokenizer(dataset, enc_config.vocab_limit);
    let lexicon = if enc_config.sememe_fusion {
        Some(
            lexicon
                .cloned()
                .ok_or_else(|| Error::Config("sememe fusion enabled but no lexicon given".into()))?,
        )
    } else {
        None
    };
    let encoder = DualEncoder::new(enc_config, tokenizer, lexicon)?;
    let prep = prepare(&encoder, dataset, config.validation_limit)?;
    if prep.valid.is_empty() {
        return Err(Error::Empty("validation split"));
    }
    let mut run = Run {
        config,
        exec,
        prep,
        best: encoder.clone(),
        encoder,
        state: TrainState::default(),
        log: TrainLog::default(),
        rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15),
        catalog: &dataset.catalog,
    };
    if config.stage1_epochs > 0 {
        run.stage1()?;
    }
    if config.stage2_epochs > 0 {
        run.stage2()?;
    }
    if run.state.best_valid_mrr.is_none() {
        // No training epochs at all: report the untrained model's score.
        let index = run.encoder.build_quote_index(&dataset.catalog, exec)?;
        let mrr = valid_mrr(&run.encoder, &index, &run.prep.valid, exec)?;
        run.state.best_valid_mrr = Some(mrr);
        run.state.best_history.push(mrr);
    }
    Ok(TrainOutcome {
        encoder: run.best,
        state: run.state,
        log: run.log,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub negatives: usize,
    pub report: EvalReport,
}

/// Trains once per negative count with everything else, the seed included,
/// held fixed, and evaluates each model on the validation split.
pub fn negative_sample_sweep(
    config: &TrainConfig,
    dataset: &Dataset,
    lexicon: Option<&SememeLexicon>,
    negatives: &[usize],
    exec: Exec,
) -> Result<Vec<SweepRow>> {
    if negatives.is_empty() {
        return Err(Error::Empty("negative sample counts"));
    }
    let valid = dataset.split_pairs(Split::Valid);
    negatives
        .iter()
        .map(|&n| {
            let mut c = config.clone();
            c.negatives = n;
            let out = run_two_stage(&c, dataset, lexicon, exec)?;
            let index = out.encoder.build_quote_index(&dataset.catalog, exec)?;
            let scorer = NeuralScorer::new(&out.encoder, &index)?;
            let report = evaluate(&scorer, &valid, EvalMode::Full, exec)?;
            log::info!("negatives {n}: valid MRR {:.4}", report.metrics.mrr);
            Ok(SweepRow { negatives: n, report })
        })
        .collect()
}
