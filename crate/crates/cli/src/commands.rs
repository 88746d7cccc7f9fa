use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use quoter::corpus::{build_dataset, load_quote_set, read_corpus, BuildConfig, Dataset, DocMode, Split};
use quoter::crm::CrmModel;
use quoter::evaluate::{evaluate, frequency_buckets, EvalMode, EvalReport, FrequencyBucketReport, NeuralScorer, DEFAULT_BUCKET_EDGES};
use quoter::kv::KvFile;
use quoter::ranker::Recommender;
use quoter::sememe::SememeLexicon;
use quoter::synthetic::{toy_task, CorpusPlan, CorpusSpec, ToySpec};
use quoter::text::{PunctuationSplitter, Unit};
use quoter::trainer::{negative_sample_sweep, run_two_stage, Ablation, TrainConfig};
use quoter::{Error, Exec};
use serde::Serialize;

use crate::service::{self, AppState};

#[derive(Parser, Debug)]
#[command(name = "quoter", version, about = "Quote recommendation from writing context")]
pub struct Cli {
    /// Run everything on one thread
    #[arg(long, global = true)]
    pub sequential: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Mine context-quote pairs from a corpus and split them
    BuildDataset {
        #[arg(long)]
        quotes: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// file: one document per file; blocks: blank-line separated
        #[arg(long, default_value = "file")]
        doc_mode: DocMode,
        #[arg(long, default_value = "word")]
        unit: Unit,
        /// Context units per side (default 40 words or 50 characters)
        #[arg(long)]
        window: Option<usize>,
        /// Quotes with fewer distinct pairs are dropped
        #[arg(long = "min-occ", alias = "min-occurrences", default_value_t = 5)]
        min_occurrences: usize,
        /// Pairs kept per quote at most
        #[arg(long = "cap", alias = "max-pairs", default_value_t = 200)]
        max_pairs: usize,
        /// train:valid:test
        #[arg(long = "ratios", alias = "split", default_value = "8:1:1")]
        split: quoter::corpus::SplitRatios,
        #[arg(long, default_value_t = 100)]
        zero_shot: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write generated data: a planted corpus or a ready-split toy dataset
    Synth {
        #[arg(long, value_parser = ["corpus", "toy"])]
        kind: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a dual encoder and write a checkpoint
    Train {
        /// key = value training configuration
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// full | no_sememe | no_retrain | no_simtrain | sim_baseline
        #[arg(long)]
        ablation: Option<Ablation>,
        /// Sememe lexicon (JSON Lines); defaults to DATA/sememes.jsonl
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Rank every pair of a split and report the metrics
    Evaluate {
        #[arg(long, env = "QUOTER_CHECKPOINT")]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long, default_value = "full")]
        mode: EvalMode,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Retrain per negative-sample count and report validation metrics
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ablation: Option<Ablation>,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "4,9,19,29,39")]
        n: Vec<usize>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Evaluate the tf-idf context-relevance baseline
    BaselineCrm {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long, default_value = "full")]
        mode: EvalMode,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Print the top quotes for one context
    Recommend {
        #[arg(long, env = "QUOTER_CHECKPOINT")]
        checkpoint: PathBuf,
        #[arg(long)]
        left: String,
        #[arg(long, default_value = "")]
        right: String,
        #[arg(short, default_value_t = service::DEFAULT_K)]
        k: usize,
    },
    /// Serve recommendations over HTTP
    Serve {
        #[arg(long, env = "QUOTER_CHECKPOINT")]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Static files served under /ui
        #[arg(long)]
        ui: Option<PathBuf>,
        /// Enable the /api/echo debugging endpoint
        #[arg(long)]
        dev: bool,
    },
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_config(path: Option<&Path>, ablation: Option<Ablation>, seed: Option<u64>) -> Result<TrainConfig> {
    let mut config = match path {
        Some(p) => TrainConfig::from_kv(&KvFile::read(p)?)?,
        None => TrainConfig::default(),
    };
    if let Some(a) = ablation {
        config.apply_ablation(a);
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    config.validate()?;
    Ok(config)
}

fn load_lexicon(config: &TrainConfig, explicit: Option<&Path>, data: &Path) -> Result<Option<SememeLexicon>> {
    if !config.encoder.sememe_fusion {
        return Ok(None);
    }
    let path = explicit.map(Path::to_path_buf).unwrap_or_else(|| data.join("sememes.jsonl"));
    let lex = SememeLexicon::load(&path).with_context(|| format!("sememe fusion is on; reading lexicon {}", path.display()))?;
    Ok(Some(lex))
}

/// Default edges, stretched when a training count exceeds the last one.
fn bucket_edges(dataset: &Dataset) -> Vec<usize> {
    let mut edges = DEFAULT_BUCKET_EDGES.to_vec();
    let max = dataset.train_counts().values().copied().max().unwrap_or(0);
    if let Some(last) = edges.last_mut() {
        *last = (*last).max(max + 1);
    }
    edges
}

#[derive(Serialize)]
struct EvaluateOutput<'a> {
    split: Split,
    #[serde(flatten)]
    report: &'a EvalReport,
    frequency_buckets: FrequencyBucketReport,
}

fn report_eval(report: &EvalReport, dataset: &Dataset, split: Split, out: Option<&Path>) -> Result<()> {
    let m = &report.metrics;
    println!(
        "{} {} {split}: queries={} MRR={:.4} NDCG@5={:.4} R@1={:.4} R@10={:.4} R@100={:.4} median={} mean={:.1} std={:.1}",
        report.scorer,
        report.mode,
        m.queries,
        m.mrr,
        m.ndcg_at_5,
        m.recall_at_1,
        m.recall_at_10,
        m.recall_at_100,
        m.median_rank,
        m.mean_rank,
        m.std_rank
    );
    if let Some(path) = out {
        let buckets = frequency_buckets(report, &dataset.train_counts(), &bucket_edges(dataset))?;
        write_json(
            path,
            &EvaluateOutput {
                split,
                report,
                frequency_buckets: buckets,
            },
        )?;
    }
    Ok(())
}

fn split_pairs(dataset: &Dataset, split: Split) -> Result<Vec<quoter::corpus::ContextQuotePair>> {
    let pairs = dataset.split_pairs(split);
    if pairs.is_empty() {
        bail!("split {split} is empty");
    }
    Ok(pairs)
}

pub fn run(cli: Cli) -> Result<()> {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    match cli.command {
        Command::BuildDataset {
            quotes,
            corpus,
            out,
            doc_mode,
            unit,
            window,
            min_occurrences,
            max_pairs,
            split,
            zero_shot,
            seed,
        } => {
            let base = match unit {
                Unit::Word => BuildConfig::default(),
                Unit::Char => BuildConfig::character_windows(),
            };
            let config = BuildConfig {
                window: window.unwrap_or(base.window),
                unit,
                min_occurrences,
                max_pairs_per_quote: max_pairs,
                split_ratios: split,
                zero_shot_quotes: zero_shot,
                seed,
            };
            let catalog = load_quote_set(&quotes, &PunctuationSplitter)?.catalog;
            let docs = read_corpus(&corpus, doc_mode)?;
            let (dataset, report) = build_dataset(&catalog, docs, &config, exec)?;
            dataset.save(&out)?;
            write_json(&out.join("build_report.json"), &report)?;
            println!(
                "{} documents, {} pairs over {} quotes (train {}, valid {}, test {}; {} zero-shot)",
                report.documents,
                report.pairs,
                report.quotes,
                report.train_pairs,
                report.valid_pairs,
                report.test_pairs,
                report.zero_shot_quotes.len()
            );
        }
        Command::Synth { kind, out, seed } => match kind.as_str() {
            "corpus" => {
                let plan = CorpusPlan::generate(&CorpusSpec {
                    seed,
                    ..Default::default()
                })?;
                plan.write(&out)?;
                write_json(&out.join("plan.json"), &plan.plantings)?;
                println!("{} documents, {} citations of {} quotes", plan.documents.len(), plan.plantings.len(), plan.catalog.len());
            }
            _ => {
                let task = toy_task(&ToySpec {
                    seed,
                    ..Default::default()
                })?;
                task.dataset.save(&out)?;
                task.lexicon.save(&out.join("sememes.jsonl"))?;
                println!("{} pairs over {} quotes", task.dataset.pairs.len(), task.dataset.catalog.len());
            }
        },
        Command::Train {
            config,
            data,
            out,
            ablation,
            lexicon,
            seed,
        } => {
            let config = load_config(config.as_deref(), ablation, seed)?;
            let dataset = Dataset::load(&data)?;
            let lexicon = load_lexicon(&config, lexicon.as_deref(), &data)?;
            let started = Instant::now();
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let outcome = match run_two_stage(&config, &dataset, lexicon.as_ref(), exec) {
                Ok(o) => o,
                Err(Error::Diverged { stage, step, loss, state }) => {
                    write_json(&out.join("diverged_state.json"), &state)?;
                    bail!("training diverged in stage {stage} at step {step} (loss {loss}); state written to {}", out.display());
                }
                Err(e) => return Err(e.into()),
            };
            let recommender = Recommender::new(outcome.encoder, dataset.catalog.clone(), exec)?;
            recommender.save(&out)?;
            fs::write(out.join("train_log.txt"), outcome.log.to_lines())?;
            write_json(&out.join("train_state.json"), &outcome.state)?;
            write_json(&out.join("train_config.json"), &config)?;
            println!(
                "trained {} in {:.1}s; best valid MRR {:.4}; fingerprint {}",
                config.ablation,
                started.elapsed().as_secs_f64(),
                outcome.state.best_valid_mrr.unwrap_or(f64::NAN),
                recommender.fingerprint()
            );
        }
        Command::Evaluate {
            model,
            data,
            split,
            mode,
            report,
        } => {
            let recommender = Recommender::load(&model, exec)?;
            let dataset = Dataset::load(&data)?;
            if recommender.catalog().ids() != dataset.catalog.ids() {
                bail!("checkpoint catalog does not match the dataset catalog");
            }
            let scorer = NeuralScorer::new(recommender.encoder(), recommender.index())?;
            let result = evaluate(&scorer, &split_pairs(&dataset, split)?, mode, exec)?;
            report_eval(&result, &dataset, split, report.as_deref())?;
        }
        Command::Sweep {
            config,
            data,
            ablation,
            lexicon,
            n,
            report,
        } => {
            let config = load_config(config.as_deref(), ablation, None)?;
            let dataset = Dataset::load(&data)?;
            let lexicon = load_lexicon(&config, lexicon.as_deref(), &data)?;
            let rows = negative_sample_sweep(&config, &dataset, lexicon.as_ref(), &n, exec)?;
            for r in &rows {
                println!("N={:<3} valid MRR={:.4} NDCG@5={:.4}", r.negatives, r.report.metrics.mrr, r.report.metrics.ndcg_at_5);
            }
            if let Some(path) = report {
                write_json(&path, &rows)?;
            }
        }
        Command::BaselineCrm {
            data,
            split,
            mode,
            report,
        } => {
            let dataset = Dataset::load(&data)?;
            let crm = CrmModel::build(&dataset.catalog, &dataset.split_pairs(Split::Train), dataset.meta.unit);
            let result = evaluate(&crm, &split_pairs(&dataset, split)?, mode, exec)?;
            report_eval(&result, &dataset, split, report.as_deref())?;
        }
        Command::Recommend {
            checkpoint,
            left,
            right,
            k,
        } => {
            let recommender = Recommender::load(&checkpoint, exec)?;
            for r in recommender.recommend(&left, &right, k)? {
                println!("{}\t{:.4}\t{}\t{}", r.rank, r.score, r.quote_id, r.quote_text);
            }
        }
        Command::Serve {
            checkpoint,
            port,
            ui,
            dev,
        } => {
            let recommender = Recommender::load(&checkpoint, exec)
                .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
            let state = AppState::new(recommender, dev);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(service::serve(state, port, ui))?;
        }
    }
    Ok(())
}
