use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use deconf::attribution::{
    alignment_report, attribute_corpus, random_ranking_precision, render_html, summarize, to_jsonl, AlignmentReport,
    AttributionResult, Target,
};
use deconf::corpus::{ingest_corpus, split_corpus, synthesize_corpus, ArticleRegistry, SynthSpec};
use deconf::evalmetrics::{hard_macro_f1, paired_t_test, MetricsReport};
use deconf::exec::Exec;
use deconf::hashing::derive_seed;
use deconf::model::{encode_corpus, evaluate, predict, train, ModelBundle, ModelConfig, Variant};
use deconf::task::Task;
use deconf::treeminer::{export_review, import_review, mine_task, MineConfig, MiningRun};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::args::*;
use crate::config::{AlignConfig, AttributeConfig, ConfigFile, EvalConfig, IngestConfig, ReportConfig, SplitName};
use crate::error::{io_error, CliError, Result};
use crate::manifest::{OutDir, RunManifest, Stage};
use crate::store::{SplitIds, Store, ARTICLES_FILE, CORPUS_FILE, SPLITS_FILE};

fn jsonl(lines: Vec<String>) -> String {
    lines.into_iter().map(|l| l + "\n").collect()
}

fn exec(threads: usize) -> Exec {
    Exec::from_threads(threads)
}

// ---------------------------------------------------------------------------
// synth / ingest

pub fn synth(a: &SynthArgs) -> Result<()> {
    let cfg = ConfigFile::load(a.common.config.as_deref())?;
    let mut spec = cfg.section("synth", SynthSpec::default())?;
    spec.seed = a.common.seed.unwrap_or(spec.seed);
    let corpus = synthesize_corpus(&spec)?;
    let mut out = OutDir::create(&a.common.out, a.common.force)?;
    out.write(CORPUS_FILE, jsonl(corpus.to_jsonl_lines()))?;
    let mut m = RunManifest::new("synth").with_config(&spec);
    m.seed = Some(spec.seed);
    m.corpus_hash = Some(corpus.content_hash());
    info!("synthesized {} documents", corpus.len());
    out.finish(m)
}

pub fn ingest(a: &IngestArgs) -> Result<()> {
    let cfg = ConfigFile::load(a.common.config.as_deref())?;
    let settings = cfg.section("ingest", IngestConfig::default())?;
    let seed = a.common.seed.unwrap_or(0);
    let registry = match &settings.articles {
        Some(p) => ArticleRegistry::from_file(Path::new(p))?,
        None => ArticleRegistry::default(),
    };
    // A directory is taken to be the output of `synth`.
    let (file, upstream) = if a.corpus.is_dir() {
        let stage = Stage::open(&a.corpus, &["synth"])?;
        (stage.path(CORPUS_FILE)?, Some(stage))
    } else {
        (a.corpus.clone(), None)
    };
    let mut corpus = ingest_corpus(&file, &registry)?;
    if corpus.is_empty() {
        return Err(CliError::validation(format!("{}: corpus has no documents", file.display())));
    }
    if let Some(p) = &settings.rationales {
        let n = corpus.apply_rationale_overlay(Path::new(p))?;
        info!("applied {n} gold rationales from {p}");
    }
    let s = split_corpus(&corpus, settings.train_frac, settings.dev_frac, seed)?;
    let ids = |v: &[usize]| v.iter().map(|&i| corpus.docs[i].doc_id.clone()).collect();
    let splits = SplitIds { train: ids(&s.train), dev: ids(&s.dev), test: ids(&s.test) };

    let mut out = OutDir::create(&a.common.out, a.common.force)?;
    out.write(CORPUS_FILE, jsonl(corpus.to_jsonl_lines()))?;
    out.write(ARTICLES_FILE, registry.ids().join("\n") + "\n")?;
    out.write_json(SPLITS_FILE, &splits)?;
    let mut m = RunManifest::new("ingest").with_config(&settings);
    m.seed = Some(seed);
    m.corpus_hash = Some(corpus.content_hash());
    if let Some(stage) = &upstream {
        m.input("corpus", stage);
    }
    info!("ingested {} documents ({} / {} / {})", corpus.len(), s.train.len(), s.dev.len(), s.test.len());
    out.finish(m)
}

// ---------------------------------------------------------------------------
// mine / review-template

pub const RUNS_FILE: &str = "runs.json";

#[derive(Debug, Serialize, Deserialize)]
struct MineRecord {
    task: Task,
    #[serde(flatten)]
    settings: MineConfig,
}

pub fn mine(a: &MineArgs) -> Result<()> {
    let cfg = ConfigFile::load(a.common.config.as_deref())?;
    let settings = cfg.section("mine", MineConfig::default())?;
    let store = Store::open(&a.corpus)?;
    let train = store.split(SplitName::Train)?;
    let mut runs = Vec::new();
    for (view, result) in mine_task(&train, a.task, &settings, exec(a.parallel)) {
        match result {
            Ok(run) => runs.push(run),
            Err(e) => warn!("view {}: {e}", view.name(&train)),
        }
    }
    if runs.is_empty() {
        return Err(CliError::validation(format!("no view of task {} could be mined", a.task)));
    }

    let mut candidates = String::from("view\titeration\ttoken\tz\n");
    let mut iterations = String::from("view\titeration\taccuracy\tmacro_f1\tn_tokens\ttokens\n");
    for run in &runs {
        for (token, it) in run.extracted() {
            let z = run.z.get(token).copied().unwrap_or(f64::NAN);
            let _ = writeln!(candidates, "{}\t{it}\t{token}\t{z:.6}", run.view_name);
        }
        for it in &run.iterations {
            let _ = writeln!(
                iterations,
                "{}\t{}\t{:.6}\t{:.6}\t{}\t{}",
                run.view_name,
                it.index,
                it.accuracy,
                it.macro_f1,
                it.tokens.len(),
                it.tokens.join(",")
            );
        }
    }
    let mut out = OutDir::create(&a.common.out, a.common.force)?;
    out.write_json(RUNS_FILE, &runs)?;
    out.write("candidates.tsv", candidates)?;
    out.write("iterations.tsv", iterations)?;
    let mut m = RunManifest::new("mine").with_config(&MineRecord { task: a.task, settings });
    m.seed = a.common.seed;
    m.corpus_hash = Some(store.corpus_hash());
    m.input("corpus", &store.stage);
    out.finish(m)
}

pub fn review_template(a: &ReviewArgs) -> Result<()> {
    let _ = ConfigFile::load(a.common.config.as_deref())?;
    let stage = Stage::open(&a.input, &["mine"])?;
    let runs: Vec<MiningRun> = stage.read_json(RUNS_FILE)?;
    let mut out = OutDir::create(&a.common.out, a.common.force)?;
    let n = export_review(&runs, &out.path("review.tsv"))?;
    out.adopt("review.tsv")?;
    info!("{n} tokens to review");
    let mut m = RunManifest::new("review-template");
    m.seed = a.common.seed;
    m.corpus_hash = stage.manifest.corpus_hash.clone();
    m.input("mined", &stage);
    out.finish(m)
}

// ---------------------------------------------------------------------------
// train

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub task: Task,
    pub variant: Variant,
    pub best_lr: f64,
    pub best_epoch: usize,
    pub best_dev_f1: f64,
    pub lexicon: Vec<String>,
}

/// Flags win over the `[model]` table, which wins over the desk preset.
fn model_config(cfg: &ConfigFile, task: Option<Task>, variant: Option<Variant>, seed: Option<u64>) -> Result<ModelConfig> {
    let probe = cfg.section("model", ModelConfig::default())?;
    let task = task.unwrap_or(probe.task);
    let variant = variant.unwrap_or(probe.variant);
    let mut m = cfg.section("model", ModelConfig::desk(task, variant, probe.scale))?;
    m.task = task;
    m.variant = variant;
    m.seed = seed.unwrap_or(m.seed);
    m.validate()?;
    Ok(m)
}

pub fn train_cmd(a: &TrainArgs) -> Result<()> {
    let cfg = ConfigFile::load(a.common.config.as_deref())?;
    let mc = model_config(&cfg, a.task, a.variant, a.common.seed)?;
    let store = Store::open(&a.corpus)?;
    let lexicon = a.lexicon.as_deref().map(import_review).transpose()?;
    let tokens = lexicon.as_ref().map(|l| l.spurious_tokens());
    if let (Some(path), Some(t)) = (&a.lexicon, &tokens) {
        info!("{}: {} spurious tokens", path.display(), t.len());
    }
    let (tr, dev) = (store.split(SplitName::Train)?, store.split(SplitName::Dev)?);
    let model = train(&tr, &dev, &mc, tokens.clone(), None, exec(a.parallel))?;
    info!("best dev macro-F1 {:.4} at lr {} epoch {}", model.best_dev_f1, model.best_lr, model.best_epoch);

    let mut out = OutDir::create(&a.common.out, a.common.force)?;
    let dir = a.common.out.clone();
    model.bundle.save(&dir).map_err(|e| io_error(&dir, e))?;
    out.adopt("model.json")?;
    out.adopt("params.json")?;
    out.write("train_log.jsonl", model.log_jsonl())?;
    out.write_json(
        "summary.json",
        &TrainSummary {
            task: mc.task,
            variant: mc.variant,
            best_lr: model.best_lr,
            best_epoch: model.best_epoch,
            best_dev_f1: model.best_dev_f1,
            lexicon: tokens.unwrap_or_default(),
        },
    )?;
    let mut m = RunManifest::new("train").with_config(&mc);
    m.seed = Some(mc.seed);
    m.corpus_hash = Some(store.corpus_hash());
    m.lexicon_hash = lexicon.map(|l| l.content_hash());
    m.input("corpus", &store.stage);
    out.finish(m)
}

struct Model {
    stage: Stage,
    bundle: ModelBundle,
    summary: TrainSummary,
}

fn open_model(dir: &Path) -> Result<Model> {
    let stage = Stage::open(dir, &["train"])?;
    stage.path("params.json")?;
    let bundle = ModelBundle::load(&stage.dir)?;
    let summary: TrainSummary = stage.read_json("summary.json")?;
    Ok(Model { stage, bundle, summary })
}

fn check_same_corpus(stage: &Stage, store: &Store) -> Result<()> {
    if stage.manifest.corpus_hash.as_deref() != Some(store.corpus_hash().as_str()) {
        return Err(CliError::validation(format!(
            "{} was built from a different corpus than {}",
            stage.dir.display(),
            store.stage.dir.display()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// attribute / align

pub const ATTRIBUTIONS_FILE: &str = "attributions.jsonl";

/// Identity of an evaluated model, carried through downstream manifests.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RunIdentity {
    task: Task,
    variant: Variant,
    split: SplitName,
}

#[derive(Debug, Serialize, Deserialize)]
struct AttributeRecord {
    #[serde(flatten)]
    id: RunIdentity,
    #[serde(flatten)]
    settings: AttributeConfig,
}

pub fn attribute(a: &AttributeArgs) -> Result<()> {
    let cfg = ConfigFile::load(a.common.config.as_deref())?;
    let settings = cfg.section("attribute", AttributeConfig::default())?;
    let model = open_model(&a.input)?;
    let store = Store::open(&a.corpus)?;
    check_same_corpus(&model.stage, &store)?;
    let task = model.summary.task;
    let target = match (task, settings.output) {
        (Task::J, _) => Target::Output(0),
        (_, Some(k)) => Target::Output(k),
        (_, None) => Target::ArgMax,
    };
    let docs = store.split(settings.split)?;
    let results = attribute_corpus(&model.bundle, &docs, target, settings.ig_steps, exec(a.parallel))?;
    let header = format!("{} on task {task}, {:?} split, {} IG steps", model.summary.variant, settings.split, settings.ig_steps);

    let mut out = OutDir::create(&a.common.out, a.common.force)?;
    out.write(ATTRIBUTIONS_FILE, to_jsonl(&results))?;
    out.write("attributions.html", render_html(&results, &docs, &header))?;
    let id = RunIdentity { task, variant: model.summary.variant, split: settings.split };
    let mut m = RunManifest::new("attribute").with_config(&AttributeRecord { id, settings });
    m.seed = a.common.seed;
    m.corpus_hash = Some(store.corpus_hash());
    m.lexicon_hash = model.stage.manifest.lexicon_hash.clone();
    m.input("model", &model.stage);
    m.input("corpus", &store.stage);
    out.finish(m)
}

fn identity(stage: &Stage) -> Result<RunIdentity> {
    serde_json::from_value(stage.manifest.config.clone())
        .map_err(|e| CliError::validation(format!("{}: manifest lacks run identity: {e}", stage.dir.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomRow {
    /// Mean over documents of the Monte-Carlo precision@Oracle.
    pub mean: f64,
    /// Mean over documents of `G / N`.
    pub expected: f64,
    pub trials_per_doc: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentFile {
    pub task: Task,
    pub variant: Variant,
    pub split: SplitName,
    /// Riemann steps of the integrated-gradients run (all-zero embedding baseline).
    pub ig_steps: usize,
    pub report: AlignmentReport,
    pub random: RandomRow,
}

pub fn align(a: &AlignArgs) -> Result<()> {
    let cfg = ConfigFile::load(a.common.config.as_deref())?;
    let settings = cfg.section("align", AlignConfig::default())?;
    let seed = a.common.seed.unwrap_or(0);
    let stage = Stage::open(&a.input, &["attribute"])?;
    let id = identity(&stage)?;
    let ig_steps = stage.manifest.config.get("ig_steps").and_then(|v| v.as_u64()).ok_or_else(|| {
        CliError::validation(format!("{}: manifest does not record ig_steps", stage.dir.display()))
    })? as usize;
    let store = Store::open(&a.corpus)?;
    check_same_corpus(&stage, &store)?;
    let results: Vec<AttributionResult> = stage
        .read_string(ATTRIBUTIONS_FILE)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::validation(format!("{}/{ATTRIBUTIONS_FILE}: {e}", stage.dir.display())))?;
    let report = alignment_report(&results, &store.corpus)?;

    let ex = exec(a.parallel);
    let (mut means, mut expected) = (Vec::new(), Vec::new());
    for (i, row) in report.rows.iter().enumerate() {
        let n = store.corpus.find(&row.doc_id).map_or(0, |d| d.paragraphs.len());
        let r = random_ranking_precision(n, row.oracle, settings.random_trials, derive_seed(seed, &[i as u64]), ex)?;
        means.push(r.mean);
        expected.push(r.expected);
    }
    let random = RandomRow {
        mean: summarize(&means).0,
        expected: summarize(&expected).0,
        trials_per_doc: settings.random_trials,
    };
    info!("precision@Oracle {:.4} ± {:.4} over {} documents", report.mean_p_at_oracle, report.se, report.n);

    let mut out = OutDir::create(&a.common.out, a.common.force)?;
    out.write_json("alignment.json", &AlignmentFile { task: id.task, variant: id.variant, split: id.split, ig_steps, report, random })?;
    #[derive(Serialize)]
    struct AlignRecord {
        #[serde(flatten)]
        id: RunIdentity,
        #[serde(flatten)]
        settings: AlignConfig,
    }
    let mut m = RunManifest::new("align").with_config(&AlignRecord { id, settings });
    m.seed = Some(seed);
    m.corpus_hash = Some(store.corpus_hash());
    m.lexicon_hash = stage.manifest.lexicon_hash.clone();
    m.input("attributions", &stage);
    m.input("corpus", &store.stage);
    out.finish(m)
}

// ---------------------------------------------------------------------------
// eval

pub fn eval(a: &EvalArgs) -> Result<()> {
    let cfg = ConfigFile::load(a.common.config.as_deref())?;
    let settings = cfg.section("eval", EvalConfig::default())?;
    let model = open_model(&a.input)?;
    let store = Store::open(&a.corpus)?;
    check_same_corpus(&model.stage, &store)?;
    let docs = store.split(settings.split)?;
    let encoded = encode_corpus(&docs, &model.bundle.registries, &model.bundle.config);
    let f1 = evaluate(&model.bundle, &encoded)?;
    let task = model.summary.task;

    let names = store.corpus.registry.ids().to_vec();
    let hard = if matches!(task, Task::A | Task::AB) {
        let labeled: Vec<usize> = (0..encoded.len()).filter(|&i| encoded[i].target.is_some()).collect();
        let subset: Vec<_> = labeled.iter().map(|&i| encoded[i].clone()).collect();
        let pred = predict(&model.bundle, &subset)?;
        let gold: Vec<Vec<bool>> =
            labeled.iter().map(|&i| task.targets(&docs.docs[i]).expect("labeled")).collect();
        let alleged: Vec<Vec<bool>> =
            labeled.iter().map(|&i| (0..names.len()).map(|k| docs.docs[i].labels.alleged.contains(&k)).collect()).collect();
        Some(hard_macro_f1(&pred, &gold, &alleged, &names)?.hard_macro_f1)
    } else {
        None
    };
    let report = MetricsReport {
        task,
        variant: model.summary.variant.name().to_string(),
        macro_f1: f1.macro_f1,
        micro_f1: f1.micro_f1,
        hard_macro_f1: hard,
        per_article: f1.per_label.iter().map(|l| (l.label.clone(), l.f1)).collect(),
        alignment: None,
    };
    info!("macro-F1 {:.4}, micro-F1 {:.4}", report.macro_f1, report.micro_f1);

    let mut out = OutDir::create(&a.common.out, a.common.force)?;
    out.write_json("metrics.json", &report)?;
    let id = RunIdentity { task, variant: model.summary.variant, split: settings.split };
    let mut m = RunManifest::new("eval").with_config(&id);
    m.seed = a.common.seed;
    m.corpus_hash = Some(store.corpus_hash());
    m.lexicon_hash = model.stage.manifest.lexicon_hash.clone();
    m.input("model", &model.stage);
    m.input("corpus", &store.stage);
    out.finish(m)
}

// ---------------------------------------------------------------------------
// report

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub variant: Variant,
    pub macro_f1: Option<f64>,
    pub micro_f1: Option<f64>,
    pub hard_macro_f1: Option<f64>,
    pub mean_p_at_oracle: Option<f64>,
    pub se: Option<f64>,
    pub n: Option<usize>,
    /// Paired t-test against the reference variant over shared documents.
    pub p_vs_reference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task: Task,
    pub split: SplitName,
    pub reference: Variant,
    pub ig_steps: Option<usize>,
    pub random: Option<RandomRow>,
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool_version: String,
    pub tasks: Vec<TaskReport>,
}

#[derive(Default)]
struct Slot {
    metrics: Option<MetricsReport>,
    alignment: Option<AlignmentFile>,
}

pub fn report(a: &ReportArgs) -> Result<()> {
    let cfg = ConfigFile::load(a.common.config.as_deref())?;
    let settings = cfg.section("report", ReportConfig::default())?;
    let reference: Variant = settings.reference.parse().map_err(CliError::validation)?;

    let mut slots: BTreeMap<(Task, SplitName, Variant), Slot> = BTreeMap::new();
    let mut stages = Vec::new();
    for dir in &a.input {
        let stage = Stage::open(dir, &["eval", "align"])?;
        let id = identity(&stage)?;
        let slot = slots.entry((id.task, id.split, id.variant)).or_default();
        let dup = match stage.manifest.command.as_str() {
            "eval" => slot.metrics.replace(stage.read_json("metrics.json")?).is_some(),
            _ => slot.alignment.replace(stage.read_json("alignment.json")?).is_some(),
        };
        if dup {
            return Err(CliError::validation(format!(
                "{}: a second `{}` result for {} on task {}",
                dir.display(),
                stage.manifest.command,
                id.variant,
                id.task
            )));
        }
        stages.push(stage);
    }

    let groups: BTreeSet<(Task, SplitName)> = slots.keys().map(|&(t, s, _)| (t, s)).collect();
    let mut tasks = Vec::new();
    for (task, split) in groups {
        let ref_rows: Option<BTreeMap<&str, f64>> = slots.get(&(task, split, reference)).and_then(|s| {
            s.alignment.as_ref().map(|al| al.report.rows.iter().map(|r| (r.doc_id.as_str(), r.p_at_oracle)).collect())
        });
        let mut rows = Vec::new();
        let mut random = None;
        let mut ig_steps = None;
        for ((_, _, variant), slot) in slots.range((task, split, Variant::Baseline)..=(task, split, Variant::GradAll)) {
            let m = slot.metrics.as_ref();
            let al = slot.alignment.as_ref();
            if random.is_none() {
                random = al.map(|al| al.random.clone());
            }
            if let Some(al) = al {
                match ig_steps {
                    None => ig_steps = Some(al.ig_steps),
                    Some(m) if m != al.ig_steps => {
                        warn!("task {task}: alignment inputs mix {m} and {} IG steps", al.ig_steps)
                    }
                    _ => {}
                }
            }
            let p = match (al, &ref_rows) {
                (Some(al), Some(refs)) if *variant != reference => {
                    let (mut x, mut y) = (Vec::new(), Vec::new());
                    for r in &al.report.rows {
                        if let Some(&b) = refs.get(r.doc_id.as_str()) {
                            x.push(r.p_at_oracle);
                            y.push(b);
                        }
                    }
                    paired_t_test(&x, &y).ok().map(|t| t.p)
                }
                _ => None,
            };
            rows.push(ReportRow {
                variant: *variant,
                macro_f1: m.map(|m| m.macro_f1),
                micro_f1: m.map(|m| m.micro_f1),
                hard_macro_f1: m.and_then(|m| m.hard_macro_f1),
                mean_p_at_oracle: al.map(|al| al.report.mean_p_at_oracle),
                se: al.map(|al| al.report.se),
                n: al.map(|al| al.report.n),
                p_vs_reference: p,
            });
        }
        tasks.push(TaskReport { task, split, reference, ig_steps, random, rows });
    }
    if tasks.is_empty() {
        return Err(CliError::usage("report needs at least one --input directory"));
    }
    let report = Report { tool_version: crate::manifest::TOOL_VERSION.to_string(), tasks };

    let mut out = OutDir::create(&a.common.out, a.common.force)?;
    out.write_json("report.json", &report)?;
    out.write("report.md", render_markdown(&report))?;
    let mut m = RunManifest::new("report").with_config(&settings);
    m.seed = a.common.seed;
    let hashes: BTreeSet<_> = stages.iter().filter_map(|s| s.manifest.corpus_hash.clone()).collect();
    if hashes.len() > 1 {
        warn!("report inputs come from {} different corpora", hashes.len());
    }
    m.corpus_hash = hashes.into_iter().next();
    for (i, s) in stages.iter().enumerate() {
        m.input(&format!("{}{i}", s.manifest.command), s);
    }
    out.finish(m)
}

fn pct(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{:.2}", 100.0 * v))
}

pub fn render_markdown(r: &Report) -> String {
    let mut s = String::new();
    for t in &r.tasks {
        let _ = writeln!(s, "## Task {} ({:?} split)\n", t.task, t.split);
        let _ = writeln!(s, "### Alignment with gold rationales (precision@Oracle, %)\n");
        if let Some(m) = t.ig_steps {
            let _ = writeln!(s, "Integrated gradients: all-zero embedding baseline, {m} steps.\n");
        }
        let _ = writeln!(s, "| Variant | p@Oracle | SE | n | p vs {} |", t.reference);
        let _ = writeln!(s, "|---|---:|---:|---:|---:|");
        if let Some(rnd) = &t.random {
            let _ = writeln!(s, "| Random | {} | | | |", pct(Some(rnd.mean)));
        }
        for row in &t.rows {
            let p = row.p_vs_reference.map_or_else(String::new, |p| format!("{p:.4}"));
            let n = row.n.map_or_else(String::new, |n| n.to_string());
            let _ = writeln!(s, "| {} | {} | {} | {n} | {p} |", row.variant, pct(row.mean_p_at_oracle), pct(row.se));
        }
        let _ = writeln!(s, "\n### Prediction performance (%)\n");
        let _ = writeln!(s, "| Variant | macro-F1 | micro-F1 | hard-macro-F1 |");
        let _ = writeln!(s, "|---|---:|---:|---:|");
        for row in &t.rows {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} |",
                row.variant,
                pct(row.macro_f1),
                pct(row.micro_f1),
                pct(row.hard_macro_f1)
            );
        }
        s.push('\n');
    }
    s
}
