use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};
use log::info;

use hierchar::diagnostics::{self, DiagError};
use hierchar::ids::{load_rule_table, LinearOrder, RuleTable, DEFAULT_MAX_DEPTH};
use hierchar::lm::{self, EmbeddingCache, LmConfig, LmError, LmModel};
use hierchar::phono::{
    build_scenario, parse_unihan_readings, parse_unihan_variants, read_split_csv, write_split_csv, Corpus,
    DatasetSplit, Partition, PhonoError, Scenario,
};
use hierchar::pron::{self, EvalReport, Grid, PronError, PronModel, RunConfig};
use hierchar::tooling::{self, Categorized, Category, Manifest, ToolError};
use hierchar::{autodiff::AutodiffError, ids::IdsError};

#[derive(Parser)]
#[command(name = "hierchar", version, about = "Hierarchical character embeddings: decomposition, pronunciation and language models")]
struct Cli {
    /// Overrides the seed of the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads for grid cells.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the glyph tree of each character.
    Decompose {
        chars: String,
        #[arg(long, default_value = "data/ids.txt")]
        rules: PathBuf,
        #[arg(long, value_parser = parse_order)]
        order: Option<LinearOrder>,
    },
    /// Expand every rule and report cycles and depth statistics.
    ValidateRules {
        #[arg(long, default_value = "data/ids.txt")]
        rules: PathBuf,
    },
    /// Build train/validation/test split files from the Unihan tables.
    PrepareData {
        #[arg(long, default_value = "data/Unihan_Readings.txt")]
        readings: PathBuf,
        #[arg(long, default_value = "data/Unihan_Variants.txt")]
        variants: PathBuf,
        #[arg(long, default_value = "data/ids.txt")]
        rules: PathBuf,
        /// Scenario numbers; all three when omitted.
        #[arg(long)]
        scenario: Vec<u8>,
    },
    TrainPron {
        #[arg(long)]
        split: PathBuf,
        #[arg(long, default_value = "data/ids.txt")]
        rules: PathBuf,
    },
    EvalPron {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long, default_value = "test")]
        partition: Partition,
        #[arg(long, default_value = "data/ids.txt")]
        rules: PathBuf,
    },
    GridSearch {
        #[arg(long)]
        split: PathBuf,
        /// JSON `{learning_rates, dropouts}`; the default grid when omitted.
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long, default_value = "data/ids.txt")]
        rules: PathBuf,
    },
    RunMatrix {
        /// Directory holding `split-s{N}.csv` files.
        #[arg(long)]
        splits: PathBuf,
        #[arg(long, default_value = "data/ids.txt")]
        rules: PathBuf,
    },
    TrainLm {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        valid: Option<PathBuf>,
        /// Needed for hierarchical embeddings.
        #[arg(long)]
        rules: Option<PathBuf>,
    },
    EvalLm {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Recompute composed embeddings for every window.
        #[arg(long)]
        no_cache: bool,
    },
    /// Left/right forget-gate comparison on ⿰-rooted characters.
    GateBias {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long, default_value = "test")]
        partition: Partition,
        #[arg(long, default_value = "data/ids.txt")]
        rules: PathBuf,
    },
    /// Decode every intermediate hidden state of one character.
    Probe {
        ch: char,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "data/ids.txt")]
        rules: PathBuf,
    },
    /// Cosine nearest neighbours in embedding space.
    Neighbors {
        ch: char,
        #[arg(short, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Candidate characters for a pronunciation model (all partitions).
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Treat the checkpoint as a language model.
        #[arg(long)]
        lm: bool,
    },
}

fn parse_order(s: &str) -> Result<LinearOrder, String> {
    LinearOrder::ALL.into_iter().find(|o| o.name() == s).ok_or_else(|| format!("unknown order `{s}` (pre, post or in)"))
}

fn rules_at(path: &Path) -> Result<RuleTable> {
    let t = load_rule_table(path)?;
    info!("{} rules from {}", t.len(), path.display());
    Ok(t)
}

fn run_config(cli: &Cli) -> Result<RunConfig> {
    let mut c = match &cli.config {
        Some(p) => tooling::load_run_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    Ok(c)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| ToolError::Io { path: dir.to_path_buf(), source })?;
    Ok(())
}

fn create(path: &Path) -> Result<File> {
    Ok(File::create(path).map_err(|source| ToolError::Io { path: path.to_path_buf(), source })?)
}

fn report_json(r: &EvalReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(r)?)
}

fn write_history(path: &Path, h: &[pron::EpochStats]) -> Result<()> {
    let mut f = create(path)?;
    writeln!(f, "epoch,train_loss,val_ter")?;
    for s in h {
        let loss = s.train_loss.map_or(String::new(), |l| format!("{l:.6}"));
        writeln!(f, "{},{loss},{:.4}", s.epoch, s.val_ter)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    rayon::ThreadPoolBuilder::new().num_threads(cli.threads.max(1)).build_global().ok();
    let out = cli.out_dir.clone();
    match &cli.command {
        Command::Decompose { chars, rules, order } => {
            let t = rules_at(rules)?;
            let mut stdout = io::stdout().lock();
            for c in chars.chars() {
                let tree = t.decompose(c, DEFAULT_MAX_DEPTH)?;
                write!(stdout, "{c}\t{tree}")?;
                if let Some(o) = order {
                    let seq: String = tree.linearize(*o).iter().map(|t| t.to_string()).collect();
                    write!(stdout, "\t{seq}")?;
                }
                writeln!(stdout)?;
            }
        }
        Command::ValidateRules { rules } => {
            let t = rules_at(rules)?;
            let report = t.validate(DEFAULT_MAX_DEPTH);
            println!("{report}");
            if !report.failures.is_empty() {
                bail!(PronError::Data(format!("{} rules failed to expand", report.failures.len())));
            }
        }
        Command::PrepareData { readings, variants, rules, scenario } => {
            let seed = cli.seed.unwrap_or(0);
            let mut manifest = Manifest::start("prepare-data", &serde_json::json!({ "scenarios": scenario }), seed)?;
            for p in [readings, variants, rules] {
                manifest.add_data(p)?;
            }
            let rd = parse_unihan_readings(readings)?;
            let var = parse_unihan_variants(variants)?;
            let table = rules_at(rules)?;
            let corpus = Corpus::build(&rd, &var, Some(&table), seed);
            info!("{} characters after filtering", corpus.entries.len());
            create_dir(&out)?;
            let which: Vec<u8> = if scenario.is_empty() { vec![1, 2, 3] } else { scenario.clone() };
            for n in which {
                let s = Scenario::from_number(n).ok_or_else(|| PhonoError::Data(format!("no scenario {n}")))?;
                let split = build_scenario(&corpus, s, s.default_sizes(), &var, seed)?;
                let path = out.join(format!("split-s{n}.csv"));
                write_split_csv(&split, &path)?;
                println!(
                    "scenario {n}: {} train, {} validation, {} test -> {}",
                    split.train.len(),
                    split.validation.len(),
                    split.test.len(),
                    path.display()
                );
                manifest.add_output(path);
            }
            manifest.finish(&out)?;
        }
        Command::TrainPron { split, rules } => {
            let cfg = run_config(&cli)?;
            let mut manifest = Manifest::start("train-pron", &cfg, cfg.seed)?;
            manifest.add_data(split)?;
            manifest.add_data(rules)?;
            let data = read_split_csv(split)?;
            let table = rules_at(rules)?;
            let outcome = pron::train(&cfg, &data, &table)?;
            create_dir(&out)?;
            let ckpt = out.join("pron.ckpt");
            outcome.model.save(&ckpt)?;
            let hist = out.join("history.csv");
            write_history(&hist, &outcome.history)?;
            println!("best validation TER {:.2} at epoch {}", outcome.best_val_ter, outcome.best_epoch);
            manifest.add_output(ckpt);
            manifest.add_output(hist);
            manifest.finish(&out)?;
        }
        Command::EvalPron { checkpoint, split, partition, rules } => {
            let model = PronModel::load(checkpoint)?;
            let data = read_split_csv(split)?;
            let table = rules_at(rules)?;
            let report = pron::evaluate(&model, data.partition(*partition), &table)?;
            println!("{}", report_json(&report)?);
        }
        Command::GridSearch { split, grid, rules } => {
            let cfg = run_config(&cli)?;
            let grid = match grid {
                Some(p) => tooling::load_grid(p)?,
                None => Grid::default(),
            };
            let mut manifest =
                Manifest::start("grid-search", &serde_json::json!({ "base": &cfg, "grid": &grid }), cfg.seed)?;
            manifest.add_data(split)?;
            manifest.add_data(rules)?;
            let data = read_split_csv(split)?;
            let table = rules_at(rules)?;
            let result = pron::grid_search(&cfg, &data, &table, &grid, cli.threads > 1)?;
            create_dir(&out)?;
            let table_path = out.join("grid.csv");
            let mut f = create(&table_path)?;
            writeln!(f, "learning_rate,dropout,val_ter,best_epoch")?;
            for c in &result.cells {
                writeln!(f, "{},{},{:.4},{}", c.learning_rate, c.dropout, c.val_ter, c.best_epoch)?;
            }
            let best_path = out.join("best-config.json");
            fs::write(&best_path, serde_json::to_string_pretty(&result.best)?)?;
            let ckpt = out.join("pron.ckpt");
            result.outcome.model.save(&ckpt)?;
            println!(
                "best lr {} dropout {}: validation TER {:.2}",
                result.best.learning_rate, result.best.dropout, result.outcome.best_val_ter
            );
            for p in [table_path, best_path, ckpt] {
                manifest.add_output(p);
            }
            manifest.finish(&out)?;
        }
        Command::RunMatrix { splits, rules } => {
            let mut mc = match &cli.config {
                Some(p) => tooling::load_matrix_config(p)?,
                None => tooling::MatrixConfig::default(),
            };
            if let Some(s) = cli.seed {
                mc.base.seed = s;
            }
            let mut manifest = Manifest::start("run-matrix", &mc, mc.base.seed)?;
            manifest.add_data(rules)?;
            let table = rules_at(rules)?;
            let mut by_scenario: BTreeMap<u8, DatasetSplit> = BTreeMap::new();
            for &n in &mc.matrix.scenarios {
                let p = splits.join(format!("split-s{n}.csv"));
                manifest.add_data(&p)?;
                by_scenario.insert(n, read_split_csv(&p)?);
            }
            let rows = pron::run_matrix(&mc.base, &mc.matrix, &by_scenario, &table, &mc.grid, cli.threads > 1)?;
            create_dir(&out)?;
            let path = out.join("matrix.csv");
            pron::write_matrix_csv(&rows, create(&path)?)?;
            pron::write_matrix_csv(&rows, io::stdout().lock())?;
            manifest.add_output(path);
            manifest.finish(&out)?;
        }
        Command::TrainLm { train, valid, rules } => {
            let mut cfg = match &cli.config {
                Some(p) => tooling::load_lm_config(p)?,
                None => LmConfig::default(),
            };
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let mut manifest = Manifest::start("train-lm", &cfg, cfg.seed)?;
            manifest.add_data(train)?;
            let train_lines = lm::read_corpus(train)?;
            let valid_lines = match valid {
                Some(p) => {
                    manifest.add_data(p)?;
                    Some(lm::read_corpus(p)?)
                }
                None => None,
            };
            let table = match rules {
                Some(p) => {
                    manifest.add_data(p)?;
                    Some(rules_at(p)?)
                }
                None => None,
            };
            let outcome = lm::train_lm(&cfg, &train_lines, valid_lines.as_deref(), table.as_ref())?;
            create_dir(&out)?;
            let ckpt = out.join("lm.ckpt");
            outcome.model.save(&ckpt)?;
            let hist = out.join("lm-history.csv");
            let mut f = create(&hist)?;
            writeln!(f, "epoch,train_bpc,valid_bpc")?;
            for e in &outcome.history {
                writeln!(f, "{},{:.6},{}", e.epoch, e.train_bpc, e.valid_bpc.map_or(String::new(), |v| format!("{v:.6}")))?;
            }
            println!("trained {} epochs; kept epoch {}", outcome.history.len(), outcome.best_epoch);
            manifest.add_output(ckpt);
            manifest.add_output(hist);
            manifest.finish(&out)?;
        }
        Command::EvalLm { checkpoint, corpus, rules, no_cache } => {
            let model = LmModel::load(checkpoint)?;
            let lines = lm::read_corpus(corpus)?;
            let table = rules.as_deref().map(rules_at).transpose()?;
            let mut cache = EmbeddingCache::new();
            let cache = (!no_cache).then_some(&mut cache);
            let r = lm::eval_lm(&model, &lines, table.as_ref(), cache)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
        }
        Command::GateBias { checkpoint, split, partition, rules } => {
            let model = PronModel::load(checkpoint)?;
            let data = read_split_csv(split)?;
            let table = rules_at(rules)?;
            let trees = pron::decompose_entries(&table, data.partition(*partition))?;
            let r = diagnostics::gate_bias(&model, &trees)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
            eprintln!("{r}");
        }
        Command::Probe { ch, checkpoint, rules } => {
            let model = PronModel::load(checkpoint)?;
            let table = rules_at(rules)?;
            let tree = table.decompose(*ch, DEFAULT_MAX_DEPTH)?;
            let trace = diagnostics::probe(&model, &tree)?;
            create_dir(&out)?;
            let path = out.join(format!("probe-{:04X}.csv", *ch as u32));
            trace.write_csv(create(&path)?)?;
            for r in &trace.rows {
                println!("{}\t{}\t{}", r.node, r.label, r.prediction);
            }
        }
        Command::Neighbors { ch, k, checkpoint, split, rules, lm } => {
            let table = rules.as_deref().map(rules_at).transpose()?;
            let emb = if *lm {
                let model = LmModel::load(checkpoint)?;
                diagnostics::lm_embeddings(&model, table.as_ref())?
            } else {
                let model = PronModel::load(checkpoint)?;
                let rules = table.as_ref().ok_or_else(|| ToolError::Config("--rules is required".into()))?;
                let split = split.as_ref().ok_or_else(|| ToolError::Config("--split is required".into()))?;
                let data = read_split_csv(split)?;
                let mut chars: Vec<char> =
                    data.train.iter().chain(&data.validation).chain(&data.test).map(|e| e.ch).collect();
                if !chars.contains(ch) {
                    chars.push(*ch);
                }
                diagnostics::pron_embeddings(&model, &chars, rules)?
            };
            for n in diagnostics::nearest_neighbors(&emb, *ch, *k)? {
                println!("{}\t{:.6}", n.ch, n.similarity);
            }
        }
    }
    Ok(())
}

fn category(e: &anyhow::Error) -> Category {
    for cause in e.chain() {
        if let Some(x) = cause.downcast_ref::<ToolError>() {
            return x.category();
        }
        if let Some(x) = cause.downcast_ref::<PronError>() {
            return x.category();
        }
        if let Some(x) = cause.downcast_ref::<LmError>() {
            return x.category();
        }
        if let Some(x) = cause.downcast_ref::<DiagError>() {
            return x.category();
        }
        if let Some(x) = cause.downcast_ref::<IdsError>() {
            return x.category();
        }
        if let Some(x) = cause.downcast_ref::<PhonoError>() {
            return x.category();
        }
        if let Some(x) = cause.downcast_ref::<AutodiffError>() {
            return x.category();
        }
        if cause.downcast_ref::<io::Error>().is_some() {
            return Category::Io;
        }
    }
    Category::Data
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let c = category(&e);
            eprintln!("{}: {e}", c.name());
            ExitCode::from(c.exit_code() as u8)
        }
    }
}
