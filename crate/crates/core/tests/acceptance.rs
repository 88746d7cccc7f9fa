//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion not listed in `KNOWN_GAPS` fails.
//!
//! Run alone with `cargo test -p quoter --test acceptance`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{ensure, Result};
use ndarray::{Array1, Array2};
use quoter::corpus::{
    build_dataset, mine_pairs, BuildConfig, ContextQuotePair, Dataset, DocumentId, QuoteMatcher, Split, SplitRatios,
};
use quoter::encoder::EncoderConfig;
use quoter::evaluate::{evaluate, EvalMode, NeuralScorer, QuoteScorer, RandomScorer};
use quoter::loss::{full_softmax_loss, pseudo_rank_loss, pseudo_rank_loss_grad, pseudo_rank_prob};
use quoter::metrics::{mean_ndcg_at_k, mrr, ndcg_at_k, rank_stats, recall_at_k};
use quoter::sememe::{fuse, FusionPlan, SememeLexicon, SememeTable};
use quoter::synthetic::{toy_task, CorpusPlan, CorpusSpec, ToySpec};
use quoter::tokenizer::WordSpan;
use quoter::trainer::{configure_ablation, run_two_stage, TrainConfig};
use quoter::{Exec, QuoteId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria that are reported but do not fail the gate. Each entry has a
/// matching note in the project's decision log.
const KNOWN_GAPS: &[&str] = &["ablation"];

const FLOAT_TOL: f64 = 1e-9;
const METRIC_TOL: f64 = 1e-12;
const GRAD_TOL: f64 = 1e-4;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

// ---------------------------------------------------------------- metrics

/// Replays a fixed score matrix; the left context carries the row number.
struct MatrixScorer {
    ids: Vec<QuoteId>,
    rows: Vec<Vec<f64>>,
}

impl QuoteScorer for MatrixScorer {
    fn name(&self) -> &str {
        "matrix"
    }

    fn quote_ids(&self) -> &[QuoteId] {
        &self.ids
    }

    fn score(&self, contexts: &[(&str, &str)], _exec: Exec) -> quoter::Result<Vec<Vec<f64>>> {
        Ok(contexts.iter().map(|(l, _)| self.rows[l.parse::<usize>().unwrap()].clone()).collect())
    }
}

fn query(row: usize, quote: QuoteId) -> ContextQuotePair {
    ContextQuotePair {
        left: row.to_string(),
        right: String::new(),
        quote_id: quote,
        source_document_id: DocumentId(0),
        split: Split::Test,
    }
}

/// Position of the gold quote after sorting by (score desc, id asc).
fn brute_rank(scores: &[f64], ids: &[QuoteId], gold: QuoteId) -> usize {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(ids[a].cmp(&ids[b])));
    order.iter().position(|&i| ids[i] == gold).unwrap() + 1
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= METRIC_TOL
}

fn metric_oracle() -> Result<Outcome> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n_quotes = rng.random_range(1..=50usize);
        let n_queries = rng.random_range(1..=30usize);
        let mut ids: Vec<QuoteId> = (0..n_quotes as u32).map(|i| QuoteId(i * 5 + rng.random_range(0..5))).collect();
        ids.reverse();
        // Coarse integer scores force ties in about half of the matrices.
        let coarse = rng.random_bool(0.5);
        let rows: Vec<Vec<f64>> = (0..n_queries)
            .map(|_| {
                (0..n_quotes)
                    .map(|_| if coarse { rng.random_range(0..4) as f64 } else { rng.random_range(-3.0..3.0) })
                    .collect()
            })
            .collect();
        let pairs: Vec<ContextQuotePair> = (0..n_queries).map(|r| query(r, ids[rng.random_range(0..n_quotes)])).collect();
        let scorer = MatrixScorer { ids: ids.clone(), rows };
        let report = evaluate(&scorer, &pairs, EvalMode::Full, Exec::default())?;

        let ranks: Vec<usize> = pairs
            .iter()
            .enumerate()
            .map(|(r, p)| brute_rank(&scorer.rows[r], &ids, p.quote_id))
            .collect();
        let n = ranks.len() as f64;
        let b_mrr = ranks.iter().fold(0.0, |acc, &r| acc + 1.0 / r as f64) / n;
        let b_ndcg = ranks
            .iter()
            .map(|&r| if r <= 5 { 2f64.ln() / ((r + 1) as f64).ln() } else { 0.0 })
            .sum::<f64>()
            / n;
        let recall = |k: usize| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
        let mut sorted = ranks.clone();
        sorted.sort();
        let median = sorted[(sorted.len() - 1) / 2];
        let mean = sorted.iter().sum::<usize>() as f64 / n;
        let std = (sorted.iter().map(|&r| (r as f64 - mean) * (r as f64 - mean)).sum::<f64>() / n).sqrt();

        let m = report.metrics;
        let ok = report.ranks() == ranks
            && close(m.mrr, b_mrr)
            && close(m.ndcg_at_5, b_ndcg)
            && close(m.recall_at_1, recall(1))
            && close(m.recall_at_10, recall(10))
            && close(m.recall_at_100, recall(100))
            && m.median_rank == median
            && close(m.mean_rank, mean)
            && close(m.std_rank, std)
            && close(mrr(&ranks)?, b_mrr)
            && close(mean_ndcg_at_k(&ranks, 5)?, b_ndcg)
            && close(recall_at_k(&ranks, 10)?, recall(10))
            && rank_stats(&ranks)?.median == median;
        if !ok {
            mismatches += 1;
        }
    }
    let elapsed = started.elapsed();
    outcome(
        mismatches == 0 && elapsed < Duration::from_secs(60),
        format!("1000 matrices, {mismatches} mismatches, tol {METRIC_TOL:e}, {:.2}s (limit 60s)", elapsed.as_secs_f64()),
    )
}

fn spot_checks() -> Result<Outcome> {
    let ndcg = ndcg_at_k(3, 5);
    let m = mrr(&[1, 2, 4])?;
    let mut worst_sym: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in [1usize, 4, 19, 39] {
        let v = Array1::from_shape_fn(8, |_| rng.random_range(-1.0..1.0));
        let c = Array1::from_shape_fn(8, |_| rng.random_range(-1.0..1.0));
        let negs = Array2::from_shape_fn((n, 8), |(_, j)| v[j]);
        let p = pseudo_rank_prob(v.view(), c.view(), negs.view())?;
        worst_sym = worst_sym.max((p - 1.0 / (n as f64 + 1.0)).abs());
    }
    let pass = (ndcg - 0.5).abs() <= FLOAT_TOL && (m - 7.0 / 12.0).abs() <= FLOAT_TOL && worst_sym <= FLOAT_TOL;
    outcome(
        pass,
        format!("ndcg(3,5)={ndcg:.12} mrr([1,2,4])={m:.12} max|p*-1/(N+1)|={worst_sym:.1e}, tol {FLOAT_TOL:e}"),
    )
}

fn loss_reduction() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(2..40usize);
        let d = rng.random_range(1..24usize);
        let quotes = Array2::from_shape_fn((n, d), |_| rng.random_range(-2.0..2.0));
        let c = Array1::from_shape_fn(d, |_| rng.random_range(-2.0..2.0));
        let g = rng.random_range(0..n);
        let rest: Vec<usize> = (0..n).filter(|&i| i != g).collect();
        let negatives = quotes.select(ndarray::Axis(0), &rest);
        let pseudo = pseudo_rank_loss(quotes.row(g), c.view(), negatives.view())?;
        let full = full_softmax_loss(c.view(), quotes.view(), g)?;
        worst = worst.max((pseudo - full).abs());
    }
    outcome(worst <= FLOAT_TOL, format!("200 draws, max |diff|={worst:.1e}, tol {FLOAT_TOL:e}"))
}

fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic.iter().zip(numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(numeric.iter().map(|b| b * b).sum::<f64>().sqrt());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Central differences of `f` around `x`.
fn numeric_grad(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let up = f(&x);
            x[i] = orig - h;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn gradient_checks() -> Result<Outcome> {
    const D: usize = 8;
    const H: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst: f64 = 0.0;

    for _ in 0..20 {
        let n = 5;
        let gold = Array1::from_shape_fn(D, |_| rng.random_range(-1.0..1.0));
        let c = Array1::from_shape_fn(D, |_| rng.random_range(-1.0..1.0));
        let negs = Array2::from_shape_fn((n, D), |_| rng.random_range(-1.0..1.0));
        let g = pseudo_rank_loss_grad(gold.view(), c.view(), negs.view())?;
        let loss = |gold: &[f64], c: &[f64], negs: &[f64]| {
            pseudo_rank_loss(
                Array1::from(gold.to_vec()).view(),
                Array1::from(c.to_vec()).view(),
                Array2::from_shape_vec((n, D), negs.to_vec()).unwrap().view(),
            )
            .unwrap()
        };
        let (gs, cs, ns) = (gold.to_vec(), c.to_vec(), negs.iter().copied().collect::<Vec<_>>());
        let num_c = numeric_grad(&cs, H, |x| loss(&gs, x, &ns));
        let num_g = numeric_grad(&gs, H, |x| loss(x, &cs, &ns));
        let num_n = numeric_grad(&ns, H, |x| loss(&gs, &cs, x));
        worst = worst.max(rel_error(&g.d_context.to_vec(), &num_c));
        worst = worst.max(rel_error(&g.d_gold.to_vec(), &num_g));
        worst = worst.max(rel_error(&g.d_negatives.iter().copied().collect::<Vec<_>>(), &num_n));
    }

    // Fusion: objective sum(W * fuse(E, S)) for a random weighting W.
    let lexicon = SememeLexicon::from_entries([
        ("river", vec!["water", "flow"]),
        ("dawn", vec!["time"]),
        ("tide", vec!["water", "time", "moon"]),
    ]);
    let spans = vec![
        WordSpan { word: "river".into(), tokens: 0..2 },
        WordSpan { word: "stone".into(), tokens: 2..3 },
        WordSpan { word: "tide".into(), tokens: 3..4 },
        WordSpan { word: "dawn".into(), tokens: 4..6 },
        WordSpan { word: "river".into(), tokens: 6..7 },
    ];
    let rows = 7;
    let alpha = 0.5;
    let plan = FusionPlan::build(&spans, &lexicon, rows)?;
    for _ in 0..10 {
        let table: SememeTable<f64> = SememeTable::random(lexicon.num_sememes(), D, 1.0, &mut rng);
        let emb = Array2::from_shape_fn((rows, D), |_| rng.random_range(-1.0..1.0));
        let w = Array2::from_shape_fn((rows, D), |_| rng.random_range(-1.0..1.0));
        let objective = |emb: &[f64], tab: &[f64]| {
            let e = Array2::from_shape_vec((rows, D), emb.to_vec()).unwrap();
            let t = SememeTable {
                weights: Array2::from_shape_vec(table.weights.raw_dim(), tab.to_vec()).unwrap(),
                trainable: true,
            };
            (fuse(&e, &spans, &lexicon, &t, alpha).unwrap() * &w).sum()
        };
        let es: Vec<f64> = emb.iter().copied().collect();
        let ts: Vec<f64> = table.weights.iter().copied().collect();
        let num_e = numeric_grad(&es, H, |x| objective(x, &ts));
        let num_t = numeric_grad(&ts, H, |x| objective(&es, x));
        // Fusion is additive, so the embedding gradient is W itself.
        worst = worst.max(rel_error(&w.iter().copied().collect::<Vec<_>>(), &num_e));
        let mut d_table = Array2::zeros(table.weights.raw_dim());
        plan.backward(w.view(), alpha, &mut d_table.view_mut());
        worst = worst.max(rel_error(&d_table.iter().copied().collect::<Vec<_>>(), &num_t));
    }
    outcome(worst < GRAD_TOL, format!("d={D}, h={H:e}, max relative error {worst:.1e} (limit {GRAD_TOL:e})"))
}

// --------------------------------------------------------------- pipeline

type PairKey = (u32, QuoteId, String, String);

fn key(p: &ContextQuotePair) -> PairKey {
    (p.source_document_id.0, p.quote_id, p.left.clone(), p.right.clone())
}

fn multiset(pairs: &[ContextQuotePair]) -> BTreeMap<PairKey, usize> {
    let mut m = BTreeMap::new();
    for p in pairs {
        *m.entry(key(p)).or_insert(0) += 1;
    }
    m
}

fn dir_bytes(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        out.insert(path.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&path)?);
    }
    Ok(out)
}

fn pipeline_recovery() -> Result<Outcome> {
    let started = Instant::now();
    let spec = CorpusSpec {
        seed: 41,
        ..Default::default()
    };
    ensure!(spec.documents == 200 && spec.quotes == 50);
    let plan = CorpusPlan::generate(&spec)?;
    let tmp = tempfile::tempdir()?;
    plan.write(tmp.path())?;
    let config = BuildConfig {
        window: 40,
        min_occurrences: 5,
        max_pairs_per_quote: 25,
        split_ratios: SplitRatios::default(),
        zero_shot_quotes: 4,
        seed: 3,
        ..Default::default()
    };
    let read = || quoter::corpus::read_corpus(&tmp.path().join("corpus"), quoter::corpus::DocMode::File);
    let catalog = quoter::corpus::load_quote_set(&tmp.path().join("quotes.jsonl"), &quoter::text::PunctuationSplitter)?.catalog;
    let mut problems = Vec::new();

    // Raw mining must reproduce the plan exactly.
    let matcher = QuoteMatcher::new(&catalog, config.unit)?;
    let mined = mine_pairs(read()?, &matcher, &config, Exec::default());
    let expected = plan.expected_pairs(config.window);
    if multiset(&mined.pairs) != multiset(&expected) {
        problems.push(format!("mined {} pairs, planted {}", mined.pairs.len(), expected.len()));
    }

    // Independent expectation after dedup and min-occurrence filtering.
    let mut distinct: BTreeMap<QuoteId, BTreeSet<(String, String)>> = BTreeMap::new();
    for p in &expected {
        distinct.entry(p.quote_id).or_default().insert((p.left.clone(), p.right.clone()));
    }
    let surviving: BTreeSet<QuoteId> =
        distinct.iter().filter(|(_, s)| s.len() >= config.min_occurrences).map(|(&q, _)| q).collect();

    let (dataset, report) = build_dataset(&catalog, read()?, &config, Exec::default())?;
    let kept: BTreeSet<QuoteId> = dataset.catalog.ids().iter().copied().collect();
    if kept != surviving {
        problems.push(format!("kept {} quotes, expected {}", kept.len(), surviving.len()));
    }
    let mut per_quote: BTreeMap<QuoteId, Vec<&ContextQuotePair>> = BTreeMap::new();
    for p in &dataset.pairs {
        per_quote.entry(p.quote_id).or_default().push(p);
    }
    let mut zero_shot = 0;
    let mut capped = 0;
    for (&q, pairs) in &per_quote {
        let want = &distinct[&q];
        let got: BTreeSet<(String, String)> = pairs.iter().map(|p| (p.left.clone(), p.right.clone())).collect();
        if got.len() != pairs.len() || !got.is_subset(want) {
            problems.push(format!("quote {} has duplicate or unplanted pairs", q.0));
        }
        let expect_len = want.len().min(config.max_pairs_per_quote);
        if pairs.len() != expect_len {
            problems.push(format!("quote {} has {} pairs, expected {expect_len}", q.0, pairs.len()));
        }
        capped += usize::from(want.len() > config.max_pairs_per_quote);
        let count = |s: Split| pairs.iter().filter(|p| p.split == s).count();
        if count(Split::Valid) == 0 || count(Split::Test) == 0 || count(Split::Unassigned) > 0 {
            problems.push(format!("quote {} missing from an evaluation split", q.0));
        }
        zero_shot += usize::from(count(Split::Train) == 0);
    }
    if zero_shot != config.zero_shot_quotes || report.zero_shot_quotes.len() != zero_shot {
        problems.push(format!("{zero_shot} zero-shot quotes, expected {}", config.zero_shot_quotes));
    }
    if capped == 0 || report.capped_quotes != capped {
        problems.push(format!("cap applied to {capped} quotes, report says {}", report.capped_quotes));
    }

    // Byte determinism across runs and execution policies.
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    dataset.save(&a)?;
    build_dataset(&catalog, read()?, &config, Exec::Sequential)?.0.save(&b)?;
    if dir_bytes(&a)? != dir_bytes(&b)? {
        problems.push("dataset bytes differ between runs".into());
    }
    ensure!(Dataset::load(&a)?.pairs.len() == dataset.pairs.len());

    let elapsed = started.elapsed();
    if elapsed >= Duration::from_secs(120) {
        problems.push("over the 120s limit".into());
    }
    outcome(
        problems.is_empty(),
        format!(
            "{} planted, {} mined, {} quotes kept, {} pairs, {capped} capped, {zero_shot} zero-shot, {:.2}s (limit 120s){}",
            expected.len(),
            mined.pairs.len(),
            kept.len(),
            dataset.pairs.len(),
            elapsed.as_secs_f64(),
            if problems.is_empty() { String::new() } else { format!("; {}", problems.join("; ")) }
        ),
    )
}

// --------------------------------------------------------------- learning

fn train_and_test(config: &TrainConfig, spec: &ToySpec) -> Result<(f64, f64, f64)> {
    let task = toy_task(spec)?;
    let out = run_two_stage(config, &task.dataset, Some(&task.lexicon), Exec::default())?;
    let index = out.encoder.build_quote_index(&task.dataset.catalog, Exec::default())?;
    let scorer = NeuralScorer::new(&out.encoder, &index)?;
    let test = task.dataset.split_pairs(Split::Test);
    let full = evaluate(&scorer, &test, EvalMode::Full, Exec::default())?.metrics;
    let left = evaluate(&scorer, &test, EvalMode::LeftOnly, Exec::default())?.metrics;
    Ok((full.recall_at_1, full.mrr, left.mrr))
}

/// Default 4x128 backbone and optimizer settings with longer stages.
fn learnability_config() -> Result<TrainConfig> {
    let mut c = configure_ablation("full")?;
    c.stage1_epochs = 20;
    c.stage2_epochs = 20;
    c.seed = 0;
    Ok(c)
}

/// Smaller 2x64 backbone so twelve runs fit the time budget.
fn ablation_config(name: &str, seed: u64) -> Result<TrainConfig> {
    let mut c = configure_ablation(name)?;
    c.encoder = EncoderConfig {
        hidden: 64,
        layers: 2,
        heads: 4,
        ffn: 256,
        ..c.encoder
    };
    c.lr = 5e-4;
    c.stage1_epochs = 10;
    if c.stage2_epochs > 0 {
        c.stage2_epochs = 10;
    }
    c.patience = 2;
    c.seed = seed;
    Ok(c)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs[xs.len() / 2]
}

fn ablation() -> Result<Outcome> {
    let names = ["full", "no_sememe", "sim_baseline", "no_retrain"];
    let mut mrrs: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for seed in 0..3u64 {
        let spec = ToySpec {
            seed,
            ..Default::default()
        };
        for name in names {
            let (_, m, _) = train_and_test(&ablation_config(name, seed)?, &spec)?;
            mrrs.entry(name).or_default().push(m);
        }
    }
    let med = |n: &str| median(mrrs[n].clone());
    let (full, no_sememe, sim, no_retrain) = (med("full"), med("no_sememe"), med("sim_baseline"), med("no_retrain"));
    let pass = full >= no_sememe && no_sememe >= sim && no_retrain <= full - 0.05;
    let detail = names
        .iter()
        .map(|n| format!("{n}={:.4} {:.4?}", med(n), mrrs[n]))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(
        pass,
        format!("median test MRR over seeds 0-2: {detail}; need full >= no_sememe >= sim_baseline and no_retrain <= full - 0.05"),
    )
}

fn random_calibration() -> Result<Outcome> {
    let ids: Vec<QuoteId> = (0..100).map(QuoteId).collect();
    let scorer = RandomScorer::new(ids.clone(), 7);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let pairs: Vec<ContextQuotePair> = (0..1000)
        .map(|i| ContextQuotePair {
            left: format!("query {i}"),
            right: String::new(),
            quote_id: ids[rng.random_range(0..100)],
            source_document_id: DocumentId(0),
            split: Split::Test,
        })
        .collect();
    let m = evaluate(&scorer, &pairs, EvalMode::Full, Exec::default())?.metrics.mrr;
    let analytic = (1..=100).map(|r| 1.0 / r as f64).sum::<f64>() / 100.0;
    outcome((0.03..=0.08).contains(&m), format!("MRR {m:.4} (analytic {analytic:.4}), band [0.03, 0.08]"))
}

fn main() -> ExitCode {
    let mut failed_gate = false;
    let mut report = |name: &str, result: Result<Outcome>| {
        let (pass, detail) = match result {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e:#}")),
        };
        let gap = KNOWN_GAPS.contains(&name);
        let tag = match (pass, gap) {
            (true, _) => "PASS",
            (false, false) => "FAIL",
            (false, true) => "FAIL (known gap)",
        };
        println!("{tag} {name}: {detail}");
        failed_gate |= !pass && !gap;
    };

    report("metric_oracle", metric_oracle());
    report("spot_checks", spot_checks());
    report("pseudo_loss_reduces_to_softmax", loss_reduction());
    report("gradient_checks", gradient_checks());
    report("pipeline_recovery", pipeline_recovery());

    let started = Instant::now();
    let learned = learnability_config().and_then(|c| train_and_test(&c, &ToySpec::default()));
    let elapsed = started.elapsed();
    match learned {
        Ok((r1, full, left)) => {
            report(
                "learnability",
                outcome(
                    r1 >= 0.8 && elapsed < Duration::from_secs(1800),
                    format!("4x128 test R@1 {r1:.4} (need >= 0.8), MRR {full:.4}, {:.0}s (limit 1800s)", elapsed.as_secs_f64()),
                ),
            );
            report(
                "left_only_degradation",
                outcome(left <= full, format!("left_only MRR {left:.4} <= full MRR {full:.4}")),
            );
        }
        Err(e) => {
            let msg = format!("{e:#}");
            report("learnability", Err(anyhow::anyhow!(msg.clone())));
            report("left_only_degradation", Err(anyhow::anyhow!(msg)));
        }
    }

    report("ablation", ablation());
    report("random_calibration", random_calibration());

    if failed_gate {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
