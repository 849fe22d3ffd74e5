use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encode::{encode_corpus, Batch, EncodedDoc, Registries};
use super::network::{HeadLosses, ModelBundle};
use super::{Head, Lambdas, ModelConfig, ModelError};
use crate::corpus::{Corpus, LengthBinning};
use crate::diffcore::{Adam, AdamConfig, Graph, ParamStore};
use crate::evalmetrics::{task_f1, F1Report};
use crate::exec::Exec;
use crate::hashing::derive_seed;

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub lr: f64,
    pub epoch: usize,
    /// Batch-averaged loss components.
    pub train_loss: HeadLosses,
    pub dev_f1: Option<f64>,
    pub lambdas: Lambdas,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub event: Option<String>,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub bundle: ModelBundle,
    pub best_lr: f64,
    pub best_epoch: usize,
    pub best_dev_f1: f64,
    pub log: Vec<LogRecord>,
}

impl TrainedModel {
    pub fn log_jsonl(&self) -> String {
        self.log.iter().map(|r| serde_json::to_string(r).expect("log record serializes") + "\n").collect()
    }
}

/// Main-task predictions (`logit > 0`).
pub fn predict(bundle: &ModelBundle, docs: &[EncodedDoc]) -> Result<Vec<Vec<bool>>, ModelError> {
    docs.iter().map(|d| Ok(bundle.forward(d)?.logits.data().iter().map(|&x| x > 0.0).collect())).collect()
}

/// Main-task F1 over the labeled documents of `docs`.
pub fn evaluate(bundle: &ModelBundle, docs: &[EncodedDoc]) -> Result<F1Report, ModelError> {
    let labeled: Vec<EncodedDoc> = docs.iter().filter(|d| d.target.is_some()).cloned().collect();
    if labeled.is_empty() {
        return Err(ModelError::EmptySplit("evaluation"));
    }
    let pred = predict(bundle, &labeled)?;
    let gold: Vec<Vec<bool>> =
        labeled.iter().map(|d| d.target.as_ref().expect("filtered").iter().map(|&y| y > 0.5).collect()).collect();
    let names = crate::corpus::ArticleRegistry::default().ids().to_vec();
    task_f1(&pred, &gold, bundle.task(), &names).map_err(|e| ModelError::Config(e.to_string()))
}

struct GridOutcome {
    best: Option<(ParamStore, usize, f64)>,
    log: Vec<LogRecord>,
}

fn mean_losses(acc: &[HeadLosses]) -> HeadLosses {
    let n = acc.len().max(1) as f64;
    let mut out = HeadLosses::default();
    let mut heads: BTreeMap<Head, f64> = BTreeMap::new();
    for l in acc {
        out.total += l.total / n;
        out.main += l.main / n;
        for (&h, &v) in &l.heads {
            *heads.entry(h).or_default() += v / n;
        }
    }
    out.heads = heads;
    out
}

fn run_grid_point(
    base: &ModelBundle,
    gi: usize,
    lr: f64,
    train: &[EncodedDoc],
    dev: &[EncodedDoc],
) -> Result<GridOutcome, ModelError> {
    let cfg = &base.config;
    let mut bundle = base.clone();
    let scale = bundle.store.ids().map(|id| if bundle.is_discriminator_param(id) { cfg.disc_lr_scale } else { 1.0 }).collect();
    let mut adam = Adam::new(&bundle.store, AdamConfig { lr, ..AdamConfig::default() }).with_lr_scale(scale);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[gi as u64, 0]));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::new();
    let mut best: Option<(ParamStore, usize, f64)> = None;
    let mut since_best = 0usize;
    let mut step = 0u64;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut losses = Vec::new();
        for chunk in order.chunks(cfg.batch_size) {
            step += 1;
            let batch = Batch::new(chunk.iter().map(|&i| &train[i]).collect());
            let mut g = Graph::training(derive_seed(cfg.seed, &[gi as u64, 1, step]));
            let p = bundle.bind(&mut g, true);
            let (total, main, heads) = bundle.forward_loss(&mut g, &p, &batch)?;
            let l = HeadLosses {
                total: g.value(total).item(),
                main: g.value(main).item(),
                heads: heads.iter().map(|(&h, &v)| (h, g.value(v).item())).collect(),
            };
            if !l.total.is_finite() {
                log::warn!("lr={lr}: non-finite loss at epoch {epoch}; abandoning grid point");
                log.push(LogRecord {
                    lr,
                    epoch,
                    train_loss: mean_losses(&losses),
                    dev_f1: None,
                    lambdas: cfg.lambdas,
                    event: Some(ModelError::Diverged { lr, epoch }.to_string()),
                });
                return Ok(GridOutcome { best, log });
            }
            g.backward(total)?;
            let grads = bundle.store.grads(&g, &p);
            drop(g);
            adam.step(&mut bundle.store, &grads)?;
            losses.push(l);
        }
        let dev_f1 = evaluate(&bundle, dev)?.macro_f1;
        log::info!("lr={lr} epoch {epoch}: loss={:.4} dev_f1={dev_f1:.4}", mean_losses(&losses).total);
        log.push(LogRecord {
            lr,
            epoch,
            train_loss: mean_losses(&losses),
            dev_f1: Some(dev_f1),
            lambdas: cfg.lambdas,
            event: None,
        });
        if best.as_ref().is_none_or(|(_, _, f)| dev_f1 > *f) {
            best = Some((bundle.store.clone(), epoch, dev_f1));
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best >= cfg.patience {
            break;
        }
    }
    Ok(GridOutcome { best, log })
}

/// Trains one model per learning rate in the grid with early stopping on
/// dev macro-F1, and returns the best checkpoint over the grid. Grid points
/// are independent and run through `exec`; the log is ordered by grid point.
pub fn train(
    train: &Corpus,
    dev: &Corpus,
    cfg: &ModelConfig,
    lexicon: Option<Vec<String>>,
    binning: Option<LengthBinning>,
    exec: Exec,
) -> Result<TrainedModel, ModelError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(ModelError::EmptySplit("train"));
    }
    if dev.is_empty() {
        return Err(ModelError::EmptySplit("dev"));
    }
    let reg = Registries::build(train, cfg, lexicon, binning)?;
    let train_docs = encode_corpus(train, &reg, cfg);
    let dev_docs = encode_corpus(dev, &reg, cfg);
    let base = ModelBundle::new(cfg.clone(), reg)?;

    let grid: Vec<(usize, f64)> = cfg.lr_grid.iter().copied().enumerate().collect();
    let outcomes = exec.map(&grid, |&(gi, lr)| run_grid_point(&base, gi, lr, &train_docs, &dev_docs));

    let mut log = Vec::new();
    let mut chosen: Option<(ParamStore, usize, f64, f64)> = None;
    for ((_, lr), outcome) in grid.iter().zip(outcomes) {
        let outcome = outcome?;
        log.extend(outcome.log);
        if let Some((store, epoch, f1)) = outcome.best {
            if chosen.as_ref().is_none_or(|c| f1 > c.2) {
                chosen = Some((store, epoch, f1, *lr));
            }
        }
    }
    let (store, best_epoch, best_dev_f1, best_lr) = chosen.ok_or(ModelError::AllDiverged)?;
    let mut bundle = base;
    bundle.store = store;
    Ok(TrainedModel { bundle, best_lr, best_epoch, best_dev_f1, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synthesize_corpus, SynthSpec};
    use crate::model::Variant;
    use crate::task::Task;

    fn small_cfg(variant: Variant) -> ModelConfig {
        let mut cfg = ModelConfig::desk(Task::J, variant, 32);
        cfg.packet_max_tokens = 16;
        cfg.max_epochs = 2;
        cfg.lr_grid = vec![1e-3];
        cfg
    }

    fn corpora() -> (Corpus, Corpus) {
        let c = synthesize_corpus(&SynthSpec { n_docs: 40, decoy_rate: 0.9, seed: 4, ..Default::default() }).unwrap();
        let idx: Vec<usize> = (0..c.len()).collect();
        (c.subset(&idx[..30]), c.subset(&idx[30..]))
    }

    #[test]
    fn zero_patience_runs_one_epoch_per_grid_point() {
        let (tr, dv) = corpora();
        let cfg = ModelConfig { patience: 0, max_epochs: 5, lr_grid: vec![1e-3, 3e-4], ..small_cfg(Variant::Baseline) };
        let m = train(&tr, &dv, &cfg, None, None, Exec::Sequential).unwrap();
        assert_eq!(m.log.len(), 2);
        assert!(m.log.iter().all(|r| r.epoch == 1));
    }

    #[test]
    fn identical_seeds_give_identical_logs() {
        let (tr, dv) = corpora();
        let cfg = small_cfg(Variant::GradCou);
        let a = train(&tr, &dv, &cfg, None, None, Exec::Sequential).unwrap();
        let b = train(&tr, &dv, &cfg, None, None, Exec::Parallel { threads: 0 }).unwrap();
        assert_eq!(a.log_jsonl(), b.log_jsonl());
    }

    #[test]
    fn best_checkpoint_has_best_dev_f1() {
        let (tr, dv) = corpora();
        let cfg = ModelConfig { max_epochs: 4, patience: 2, ..small_cfg(Variant::Baseline) };
        let m = train(&tr, &dv, &cfg, None, None, Exec::Sequential).unwrap();
        let best_logged = m.log.iter().filter_map(|r| r.dev_f1).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(m.best_dev_f1, best_logged);
        let dev_docs = encode_corpus(&dv, &m.bundle.registries, &m.bundle.config);
        assert_eq!(evaluate(&m.bundle, &dev_docs).unwrap().macro_f1, m.best_dev_f1);
    }

    #[test]
    fn vocab_variant_without_lexicon_is_rejected() {
        let (tr, dv) = corpora();
        let e = train(&tr, &dv, &small_cfg(Variant::GradAll), None, None, Exec::Sequential).unwrap_err();
        assert!(e.is_validation());
        assert!(e.to_string().contains("lexicon"), "{e}");
    }

    #[test]
    fn zero_lambdas_reproduce_para_rem() {
        let (tr, dv) = corpora();
        let lex = Some(vec!["represented".to_string()]);
        let para = train(&tr, &dv, &small_cfg(Variant::ParaRem), None, None, Exec::Sequential).unwrap();
        let cfg = ModelConfig { lambdas: Lambdas::all(0.0), ..small_cfg(Variant::GradAll) };
        let all = train(&tr, &dv, &cfg, lex, None, Exec::Sequential).unwrap();
        let dev_f1 = |m: &TrainedModel| m.log.iter().map(|r| (r.epoch, r.dev_f1, r.train_loss.main)).collect::<Vec<_>>();
        assert_eq!(dev_f1(&para), dev_f1(&all));
        for id in para.bundle.store.ids() {
            let name = para.bundle.store.name(id);
            let other = all.bundle.store.id(name).unwrap();
            assert_eq!(para.bundle.store.get(id), all.bundle.store.get(other), "{name}");
        }
    }
}
