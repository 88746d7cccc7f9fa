//! Trains one ablation on the synthetic cue task and prints test metrics.
//!
//! `cargo run --release -p quoter --example toy_train -- full 0`
//!
//! Environment overrides: E1, E2 (epochs per stage), LR, LAYERS, HIDDEN,
//! BATCH, WARMUP, PATIENCE for training; ZS, SHARED, QW, SYN for the task.

use std::time::Instant;

use quoter::corpus::Split;
use quoter::evaluate::{evaluate, EvalMode, NeuralScorer};
use quoter::synthetic::{toy_task, ToySpec};
use quoter::trainer::{configure_ablation, run_two_stage};
use quoter::Exec;

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().collect();
    let ablation = args.get(1).map(String::as_str).unwrap_or("full");
    let seed: u64 = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let mut spec = ToySpec { seed, ..Default::default() };
    if let Ok(v) = std::env::var("ZS") { spec.zero_shot_quotes = v.parse()?; }
    if let Ok(v) = std::env::var("SHARED") { spec.shared_words = v.parse()?; }
    if let Ok(v) = std::env::var("QW") { spec.quote_words = v.parse()?; }
    if let Ok(v) = std::env::var("SYN") { spec.synonyms = v.parse()?; }
    let task = toy_task(&spec)?;
    let mut config = configure_ablation(ablation)?;
    config.seed = seed;
    let env = |k: &str| std::env::var(k).ok();
    if let Some(v) = env("E1") { config.stage1_epochs = v.parse()?; }
    if let Some(v) = env("E2") { if config.stage2_epochs > 0 { config.stage2_epochs = v.parse()?; } }
    if let Some(v) = env("LR") { config.lr = v.parse()?; }
    if let Some(v) = env("LAYERS") { config.encoder.layers = v.parse()?; }
    if let Some(v) = env("HIDDEN") { config.encoder.hidden = v.parse()?; config.encoder.ffn = 4 * config.encoder.hidden; }
    if let Some(v) = env("BATCH") { config.batch_size = v.parse()?; }
    if let Some(v) = env("WARMUP") { config.warmup_fraction = v.parse()?; }
    if let Some(v) = env("PATIENCE") { config.patience = v.parse()?; }
    let start = Instant::now();
    let out = run_two_stage(&config, &task.dataset, Some(&task.lexicon), Exec::default())?;
    let index = out.encoder.build_quote_index(&task.dataset.catalog, Exec::default())?;
    let scorer = NeuralScorer::new(&out.encoder, &index)?;
    let test = task.dataset.split_pairs(Split::Test);
    for mode in [EvalMode::Full, EvalMode::LeftOnly] {
        let report = evaluate(&scorer, &test, mode, Exec::default())?;
        println!(
            "{ablation} seed={seed} mode={mode} mrr={:.4} r@1={:.4}",
            report.metrics.mrr, report.metrics.recall_at_1
        );
    }
    let counts = task.dataset.train_counts();
    let (seen, unseen): (Vec<_>, Vec<_>) = test.iter().cloned().partition(|p| counts[&p.quote_id] > 0);
    for (name, part) in [("seen", seen), ("zero_shot", unseen)] {
        if part.is_empty() { continue; }
        let r = evaluate(&scorer, &part, EvalMode::Full, Exec::default())?;
        println!("  {name}: n={} mrr={:.4}", part.len(), r.metrics.mrr);
    }
    for e in &out.log.epochs {
        println!("  stage {} epoch {} loss {:.4} valid {:.4}", e.stage, e.epoch, e.train_loss, e.valid_mrr);
    }
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
