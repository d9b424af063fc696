//! The `webcolor` command line.
//!
//! Every subcommand reads and writes plain files: page documents (`*.json`),
//! checkpoints, frequency tables, reports and PNG previews. Exit codes: 0 on
//! success, 1 for usage errors, 2 for data errors and 3 for numeric failures.
//! When `WEBCOLOR_SEED` is set it replaces every `--seed` value.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::baselines::{FrequencyTable, StatsMode};
use crate::codec::quantize_style;
use crate::corpus::{read_pages, write_corpus, CorpusConfig, Grammar, DEFAULT_RATIOS};
use crate::metrics::{
    accuracy, aggregate_contrast, contrast_summary, fcd_scores, macro_f, page_slots, to_canonical_json, ChannelScores,
    ContrastSummary, FcdScores,
};
use crate::models::{train, Colorizer, ModelBundle, ModelConfig, ModelKind, Strategy, TrainConfig};
use crate::page::{read_page, write_page, PageTree};
use crate::pipeline::{generate_variations, variation_seeds, Finisher};
use crate::render::{render_page, write_png};
use crate::upsampler::Upsampler;
use crate::{Error, Result};

pub const SEED_ENV: &str = "WEBCOLOR_SEED";

#[derive(Debug, Parser)]
#[command(name = "webcolor", version, about = "Generative colorization of structured web pages")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus: <out>/{train,val,test}/*.json + manifest.json.
    GenCorpus(GenCorpusArgs),
    /// Train a core model or the upsampler and write a checkpoint.
    Train(TrainArgs),
    /// Colorize pages with a trained core model.
    Generate(GenerateArgs),
    /// Replace the colors of styled pages by upsampled versions of their bins.
    Upsample(UpsampleArgs),
    /// Fit or apply the frequency-table baselines.
    Stats(StatsArgs),
    /// Score predicted pages against references.
    Evaluate(EvaluateArgs),
    /// Render styled pages to PNG previews.
    Render(RenderArgs),
    /// Report text/background contrast violations.
    Audit(AuditArgs),
}

#[derive(Debug, Args)]
pub struct GenCorpusArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// JSON corpus configuration; explicit flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub pages: Option<usize>,
    /// tag_deterministic, parent_conditional or noisy(p).
    #[arg(long)]
    pub grammar: Option<Grammar>,
    #[arg(long)]
    pub min_elements: Option<usize>,
    #[arg(long)]
    pub max_elements: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// Train/val/test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = DEFAULT_RATIOS)]
    pub ratios: Vec<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// d 256, 8 heads, 4 layers, FFN 512.
    Default,
    /// d 32, 2 heads, 2 layers, FFN 64.
    Toy,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub model: ModelKind,
    /// Corpus directory (its `train/` split is used when present) or page directory.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub iters: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.01)]
    pub weight_decay: f64,
    #[arg(long, value_enum, default_value_t = Preset::Default)]
    pub preset: Preset,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub n_heads: Option<usize>,
    #[arg(long)]
    pub n_layers: Option<usize>,
    #[arg(long)]
    pub d_ffn: Option<usize>,
    /// KL weight of the CVAE objective.
    #[arg(long)]
    pub kl_weight: Option<f64>,
    /// Disable hierarchical message passing.
    #[arg(long)]
    pub no_mp: bool,
    /// Drop the residual connection around message passing.
    #[arg(long)]
    pub no_residual: bool,
    /// Write per-step statistics as JSON lines.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long, short)]
    pub quiet: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Greedy,
    TopP,
    Prior,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Page file or directory of pages.
    #[arg(long)]
    pub pages: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = StrategyArg::Greedy)]
    pub strategy: StrategyArg,
    /// Nucleus mass for `top-p`.
    #[arg(long, default_value_t = 0.9)]
    pub p: f64,
    /// Candidates generated per page.
    #[arg(long, default_value_t = 1)]
    pub variations: usize,
    /// Most distinct candidates kept per page (default: all).
    #[arg(long)]
    pub select: Option<usize>,
    /// Upsampler checkpoint; bin centers are used without one.
    #[arg(long)]
    pub upsampler: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct UpsampleArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub pages: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("action").required(true).args(["fit", "mode", "sample"])))]
pub struct StatsArgs {
    /// Fit a table on `--corpus` and write it to `--table`.
    #[arg(long)]
    pub fit: bool,
    /// Colorize `--pages` with the most frequent colors.
    #[arg(long)]
    pub mode: bool,
    /// Colorize `--pages` with frequency-weighted draws.
    #[arg(long)]
    pub sample: bool,
    #[arg(long)]
    pub table: PathBuf,
    #[arg(long, required_if_eq("fit", "true"))]
    pub corpus: Option<PathBuf>,
    #[arg(long, required_unless_present = "fit")]
    pub pages: Option<PathBuf>,
    #[arg(long, required_unless_present = "fit")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub upsampler: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub pred_dir: PathBuf,
    #[arg(long)]
    pub gt_dir: PathBuf,
    /// `all` or a comma list of accuracy, macro_f, fcd, contrast.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    pub metrics: Vec<String>,
    /// Report file; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed of the FCD half split.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub pages: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long)]
    pub pages: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Error {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Contract(_) => 1,
            Error::Numeric(_) => 3,
            _ => 2,
        }
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// exit code. Diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let seed = match std::env::var(SEED_ENV) {
        Ok(v) => match v.trim().parse::<u64>() {
            Ok(s) => Some(s),
            Err(_) => {
                eprintln!("error: {SEED_ENV}=`{v}` is not an unsigned integer");
                return 1;
            }
        },
        Err(_) => None,
    };
    match dispatch(cli.command, seed) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command; `seed_override` replaces any `--seed`.
pub fn dispatch(command: Command, seed_override: Option<u64>) -> Result<()> {
    let pick = |s: u64| seed_override.unwrap_or(s);
    match command {
        Command::GenCorpus(a) => gen_corpus(a, seed_override),
        Command::Train(mut a) => {
            a.seed = pick(a.seed);
            train_cmd(a)
        }
        Command::Generate(mut a) => {
            a.seed = pick(a.seed);
            generate(a)
        }
        Command::Upsample(a) => upsample(a),
        Command::Stats(mut a) => {
            a.seed = pick(a.seed);
            stats(a)
        }
        Command::Evaluate(mut a) => {
            a.seed = pick(a.seed);
            evaluate(a)
        }
        Command::Render(a) => render(a),
        Command::Audit(a) => audit(a),
    }
}

/// A single page file or every `*.json` page in a directory.
pub fn load_pages(path: &Path) -> Result<Vec<PageTree>> {
    if path.is_dir() {
        read_pages(path)
    } else {
        Ok(vec![read_page(path)?])
    }
}

/// Pages paired with the stem of the file they came from, so that several
/// stylings of one page (`{id}.{j}.json`) keep distinct output names.
fn load_named_pages(path: &Path) -> Result<Vec<(String, PageTree)>> {
    let paths = if path.is_dir() {
        let mut paths: Vec<PathBuf> = fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        paths
    } else {
        vec![path.to_path_buf()]
    };
    paths
        .into_iter()
        .map(|p| {
            let page = read_page(&p)?;
            let stem = p.file_stem().map_or_else(|| page.id.clone(), |s| s.to_string_lossy().into_owned());
            Ok((stem, page))
        })
        .collect()
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, text)?;
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn gen_corpus(a: GenCorpusArgs, seed_override: Option<u64>) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => serde_json::from_str::<CorpusConfig>(&fs::read_to_string(p)?)?,
        None => CorpusConfig::default(),
    };
    cfg.n_pages = a.pages.unwrap_or(cfg.n_pages);
    cfg.grammar = a.grammar.unwrap_or(cfg.grammar);
    cfg.min_elements = a.min_elements.unwrap_or(cfg.min_elements);
    cfg.max_elements = a.max_elements.unwrap_or(cfg.max_elements);
    cfg.max_depth = a.max_depth.unwrap_or(cfg.max_depth);
    cfg.seed = seed_override.or(a.seed).unwrap_or(cfg.seed);
    let ratios: [f64; 3] = a
        .ratios
        .as_slice()
        .try_into()
        .map_err(|_| Error::Contract("--ratios needs three values".into()))?;
    let m = write_corpus(&a.out, &cfg, &ratios)?;
    eprintln!(
        "wrote {} pages to {} (train {}, val {}, test {})",
        cfg.n_pages,
        a.out.display(),
        m.counts["train"],
        m.counts["val"],
        m.counts["test"]
    );
    Ok(())
}

/// The `train/` split of a corpus directory, or the directory itself.
fn training_pages(corpus: &Path) -> Result<Vec<PageTree>> {
    let split = corpus.join("train");
    load_pages(if split.is_dir() { &split } else { corpus })
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let mut config = match a.preset {
        Preset::Default => ModelConfig::default(),
        Preset::Toy => ModelConfig::toy(),
    };
    config.d_model = a.d_model.unwrap_or(config.d_model);
    config.n_heads = a.n_heads.unwrap_or(config.n_heads);
    config.n_layers = a.n_layers.unwrap_or(config.n_layers);
    config.d_ffn = a.d_ffn.unwrap_or(config.d_ffn);
    config.kl_weight = a.kl_weight.unwrap_or(config.kl_weight);
    config.hier.no_mp = a.no_mp;
    config.hier.no_residual = a.no_residual;
    let pages = training_pages(&a.corpus)?;
    let mut bundle = ModelBundle::new(a.model, &config, a.seed)?;
    let cfg = TrainConfig {
        iters: a.iters,
        batch: a.batch,
        lr: a.lr,
        weight_decay: a.weight_decay,
        seed: a.seed,
    };
    let mut log = a.log.as_ref().map(fs::File::create).transpose()?;
    let every = (a.iters / 20).max(1);
    let mut log_err = None;
    train(bundle.model.trainable_mut(), &pages, &cfg, |s| {
        if let Some(f) = log.as_mut() {
            if let Err(e) = serde_json::to_string(s).map_err(Error::from).and_then(|line| {
                writeln!(f, "{line}")?;
                Ok(())
            }) {
                log_err.get_or_insert(e);
            }
        }
        if !a.quiet && ((s.step + 1) % every == 0 || s.step == 0) {
            eprintln!(
                "step {:>6}  loss {:.4}  recon {:.4}  kl {:.4}",
                s.step + 1,
                s.loss,
                s.recon,
                s.kl
            );
        }
    })?;
    if let Some(e) = log_err {
        return Err(e);
    }
    bundle.step = a.iters as u64;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    bundle.save(&a.out)?;
    Ok(())
}

fn load_upsampler(path: Option<&PathBuf>) -> Result<Option<Upsampler>> {
    path.map(|p| {
        let b = ModelBundle::load(p)?;
        b.model
            .upsampler()
            .cloned()
            .ok_or_else(|| Error::Checkpoint(format!("{} is a {} checkpoint, not an upsampler", p.display(), b.model.kind())))
    })
    .transpose()
}

/// File name of the `j`-th kept variation: `<id>.json` when only one is kept.
fn variation_file(id: &str, j: usize, kept: usize) -> String {
    if kept == 1 {
        format!("{id}.json")
    } else {
        format!("{id}.{j}.json")
    }
}

fn write_variations(
    colorizer: &dyn Colorizer,
    finisher: Finisher,
    pages: &[PageTree],
    strategy: Strategy,
    variations: usize,
    select: usize,
    seed: u64,
    out: &Path,
) -> Result<()> {
    fs::create_dir_all(out)?;
    for (i, page) in pages.iter().enumerate() {
        let seeds = variation_seeds(seed, i, variations);
        let styled = generate_variations(colorizer, finisher, page, strategy, variations, select, &seeds)?;
        for (j, p) in styled.iter().enumerate() {
            write_page(out.join(variation_file(&page.id, j, select)), p)?;
        }
    }
    Ok(())
}

fn generate(a: GenerateArgs) -> Result<()> {
    let bundle = ModelBundle::load(&a.ckpt)?;
    let colorizer = bundle
        .model
        .colorizer()
        .ok_or_else(|| Error::Contract("an upsampler checkpoint cannot colorize pages".into()))?;
    let upsampler = load_upsampler(a.upsampler.as_ref())?;
    let finisher = upsampler.as_ref().map_or(Finisher::BinCenters, Finisher::Upsampler);
    let strategy = match a.strategy {
        StrategyArg::Greedy => Strategy::Greedy,
        StrategyArg::TopP => Strategy::TopP(a.p),
        StrategyArg::Prior => Strategy::Prior,
    };
    let select = a.select.unwrap_or(a.variations);
    if a.variations == 0 || select == 0 || select > a.variations {
        return Err(Error::Contract(format!(
            "cannot select {select} of {} variations",
            a.variations
        )));
    }
    let pages = load_pages(&a.pages)?;
    write_variations(colorizer, finisher, &pages, strategy, a.variations, select, a.seed, &a.out)
}

fn upsample(a: UpsampleArgs) -> Result<()> {
    let upsampler = load_upsampler(Some(&a.ckpt))?.expect("path given");
    fs::create_dir_all(&a.out)?;
    for (stem, page) in load_named_pages(&a.pages)? {
        let q: Vec<_> = page.styles()?.iter().map(quantize_style).collect();
        let styled = page.with_styles(&upsampler.apply(&page, &q)?)?;
        write_page(a.out.join(format!("{stem}.json")), &styled)?;
    }
    Ok(())
}

fn stats(a: StatsArgs) -> Result<()> {
    if a.fit {
        let corpus = a.corpus.as_ref().expect("clap requires --corpus with --fit");
        let table = FrequencyTable::fit(&training_pages(corpus)?)?;
        if let Some(dir) = a.table.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        return table.save(&a.table);
    }
    let table = FrequencyTable::load(&a.table)?;
    let mode = if a.mode { StatsMode::Mode } else { StatsMode::Sampling };
    let strategy = match mode {
        StatsMode::Mode => Strategy::Greedy,
        StatsMode::Sampling => Strategy::TopP(1.0),
    };
    let upsampler = load_upsampler(a.upsampler.as_ref())?;
    let finisher = upsampler.as_ref().map_or(Finisher::BinCenters, Finisher::Upsampler);
    let pages = load_pages(a.pages.as_ref().expect("clap requires --pages"))?;
    let out = a.out.as_ref().expect("clap requires --out");
    write_variations(&table, finisher, &pages, strategy, 1, 1, a.seed, out)
}

const METRIC_GROUPS: [&str; 4] = ["accuracy", "macro_f", "fcd", "contrast"];

/// The requested metric groups, serialized in the order of the full report.
#[derive(Debug, Default, Serialize)]
pub struct PartialReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<ChannelScores>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub macro_f: Option<ChannelScores>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fcd: Option<FcdScores>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contrast: Option<ContrastSummary>,
}

pub fn metric_report(pred: &[PageTree], gt: &[PageTree], groups: &[String], seed: u64) -> Result<PartialReport> {
    let all = groups.iter().any(|g| g == "all");
    for g in groups {
        if g != "all" && !METRIC_GROUPS.contains(&g.as_str()) {
            return Err(Error::Contract(format!("unknown metric group `{g}`")));
        }
    }
    let wanted = |name: &str| all || groups.iter().any(|g| g == name);
    let slots = page_slots(pred, gt)?;
    Ok(PartialReport {
        accuracy: wanted("accuracy").then(|| accuracy(&slots)).transpose()?,
        macro_f: wanted("macro_f").then(|| macro_f(&slots)).transpose()?,
        fcd: wanted("fcd").then(|| fcd_scores(pred, gt, seed)).transpose()?,
        contrast: wanted("contrast").then(|| contrast_summary(pred)).transpose()?,
    })
}

/// Pairs every reference page with the prediction of the same id.
fn aligned(pred: Vec<PageTree>, gt: &[PageTree]) -> Result<Vec<PageTree>> {
    let mut by_id: std::collections::HashMap<String, PageTree> = pred.into_iter().map(|p| (p.id.clone(), p)).collect();
    gt.iter()
        .map(|g| {
            by_id
                .remove(&g.id)
                .ok_or_else(|| Error::Data(format!("no prediction for page `{}`", g.id)))
        })
        .collect()
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let gt = load_pages(&a.gt_dir)?;
    let pred = aligned(load_pages(&a.pred_dir)?, &gt)?;
    let report = metric_report(&pred, &gt, &a.metrics, a.seed)?;
    write_text(a.out.as_deref(), &to_canonical_json(&report)?)
}

fn render(a: RenderArgs) -> Result<()> {
    fs::create_dir_all(&a.out)?;
    for (stem, page) in load_named_pages(&a.pages)? {
        write_png(a.out.join(format!("{stem}.png")), &render_page(&page)?)?;
    }
    Ok(())
}

fn audit(a: AuditArgs) -> Result<()> {
    let report = aggregate_contrast(&load_pages(&a.pages)?)?;
    write_text(a.out.as_deref(), &to_canonical_json(&report)?)
}
