use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encode::{Batch, EncodedDoc, Registries};
use super::{Head, ModelConfig, ModelError};
use crate::diffcore::{check_gradients, Axis, DiffError, GradCheckReport, Graph, ParamId, ParamStore, Tensor, Var};
use crate::task::Task;

#[derive(Debug, Clone, Copy)]
struct Gru {
    wx: ParamId,
    bx: ParamId,
    wh: ParamId,
    bh: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Mlp {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

#[derive(Debug, Clone)]
struct ParamIds {
    emb: ParamId,
    tok_w: ParamId,
    tok_b: ParamId,
    tok_ctx: ParamId,
    fwd: Gru,
    bwd: Gru,
    sent_w: ParamId,
    sent_b: ParamId,
    sent_ctx: ParamId,
    cls: Mlp,
    heads: BTreeMap<Head, Mlp>,
}

/// Feature extractor, classifier and discriminators with their label
/// registries.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub config: ModelConfig,
    pub registries: Registries,
    pub store: ParamStore,
    ids: ParamIds,
}

/// Per-document outputs of an evaluation-mode pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub doc_vector: Tensor,
    pub logits: Tensor,
}

/// Loss components of a batch, each averaged over documents.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HeadLosses {
    pub total: f64,
    pub main: f64,
    /// Unweighted discriminator losses.
    pub heads: BTreeMap<Head, f64>,
}

#[derive(Serialize, Deserialize)]
struct BundleFile {
    config: ModelConfig,
    registries: Registries,
}

pub(crate) fn mlp(
    store: &mut ParamStore,
    prefix: &str,
    dims: (usize, usize, usize),
    rng: &mut ChaCha8Rng,
) -> Result<Mlp, ModelError> {
    Ok(Mlp {
        w1: store.add_glorot(format!("{prefix}.w1"), dims.0, dims.1, rng)?,
        b1: store.add_zeros(format!("{prefix}.b1"), 1, dims.1)?,
        w2: store.add_glorot(format!("{prefix}.w2"), dims.1, dims.2, rng)?,
        b2: store.add_zeros(format!("{prefix}.b2"), 1, dims.2)?,
    })
}

fn gru(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Result<Gru, ModelError> {
    Ok(Gru {
        wx: store.add_glorot(format!("{prefix}.wx"), input, 3 * hidden, rng)?,
        bx: store.add_zeros(format!("{prefix}.bx"), 1, 3 * hidden)?,
        wh: store.add_glorot(format!("{prefix}.wh"), hidden, 3 * hidden, rng)?,
        bh: store.add_zeros(format!("{prefix}.bh"), 1, 3 * hidden)?,
    })
}

/// `tanh(x W1 + b1) W2 + b2`
pub(crate) fn apply_mlp(g: &mut Graph, p: &[Var], m: &Mlp, x: Var) -> Result<Var, ModelError> {
    let h = g.linear(x, p[m.w1.0], p[m.b1.0])?;
    let h = g.tanh(h);
    Ok(g.linear(h, p[m.w2.0], p[m.b2.0])?)
}

impl ModelBundle {
    /// Fresh parameters drawn from `config.seed`. Feature-extractor and
    /// classifier parameters are drawn first, so their initial values do not
    /// depend on which discriminators the variant adds.
    pub fn new(config: ModelConfig, registries: Registries) -> Result<Self, ModelError> {
        config.validate()?;
        for &h in config.variant.heads() {
            if registries.n_classes(h) == 0 {
                return Err(ModelError::MissingArtifact {
                    variant: config.variant,
                    artifact: match h {
                        Head::Country => "respondent-state labels",
                        Head::Length => "length bins",
                        Head::Vocab => "a spurious lexicon",
                    },
                });
            }
        }
        let c = &config;
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        let mut s = ParamStore::new();
        let emb = s.add_glorot("f.emb", registries.vocab.len(), c.embed_dim, &mut rng)?;
        let tok_w = s.add_glorot("f.tok.w", c.embed_dim, c.token_att_dim, &mut rng)?;
        let tok_b = s.add_zeros("f.tok.b", 1, c.token_att_dim)?;
        let tok_ctx = s.add_glorot("f.tok.ctx", c.token_att_dim, 1, &mut rng)?;
        let fwd = gru(&mut s, "f.gru.fwd", c.embed_dim, c.gru_hidden, &mut rng)?;
        let bwd = gru(&mut s, "f.gru.bwd", c.embed_dim, c.gru_hidden, &mut rng)?;
        let sent_w = s.add_glorot("f.sent.w", c.doc_dim(), c.sent_att_dim, &mut rng)?;
        let sent_b = s.add_zeros("f.sent.b", 1, c.sent_att_dim)?;
        let sent_ctx = s.add_glorot("f.sent.ctx", c.sent_att_dim, 1, &mut rng)?;
        let cls = mlp(&mut s, "c", (c.classifier_input_dim(), c.cls_hidden, c.task.n_outputs()), &mut rng)?;
        let mut heads = BTreeMap::new();
        for &h in c.variant.heads() {
            let dims = (c.doc_dim(), c.disc_hidden, registries.n_classes(h));
            heads.insert(h, mlp(&mut s, &format!("d.{}", h.name()), dims, &mut rng)?);
        }
        let ids = ParamIds { emb, tok_w, tok_b, tok_ctx, fwd, bwd, sent_w, sent_b, sent_ctx, cls, heads };
        Ok(ModelBundle { config, registries, store: s, ids })
    }

    pub fn task(&self) -> Task {
        self.config.task
    }

    /// Whether `id` belongs to one of the discriminator heads.
    pub fn is_discriminator_param(&self, id: ParamId) -> bool {
        self.ids.heads.values().any(|m| [m.w1, m.b1, m.w2, m.b2].contains(&id))
    }

    /// Binds the parameters into `g`; see [`ParamStore::bind`].
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        self.store.bind(g, trainable)
    }

    pub fn embedding_table(&self) -> &Tensor {
        self.store.get(self.ids.emb)
    }

    /// Looks up the embeddings of every packet.
    pub fn embed(&self, g: &mut Graph, p: &[Var], doc: &EncodedDoc) -> Result<Vec<Var>, ModelError> {
        let rate = self.config.dropout;
        doc.packets
            .iter()
            .map(|ids| {
                let e = g.embedding(p[self.ids.emb.0], ids)?;
                Ok(g.dropout(e, rate))
            })
            .collect()
    }

    fn run_gru(&self, g: &mut Graph, p: &[Var], cell: &Gru, xs: Var, reverse: bool) -> Result<Vec<Var>, ModelError> {
        let n = g.value(xs).rows();
        let proj = g.linear(xs, p[cell.wx.0], p[cell.bx.0])?;
        let mut h = g.constant(Tensor::zeros(1, self.config.gru_hidden));
        let mut out = vec![h; n];
        let order: Vec<usize> = if reverse { (0..n).rev().collect() } else { (0..n).collect() };
        for t in order {
            let x = g.slice_rows(proj, t, 1)?;
            h = g.gru_cell(x, h, p[cell.wh.0], p[cell.bh.0])?;
            out[t] = h;
        }
        Ok(out)
    }

    /// Document vector (`1 × 2H`) from per-packet embedding matrices. A
    /// document without packets maps to the zero vector.
    pub fn doc_vector_from_embeddings(&self, g: &mut Graph, p: &[Var], packets: &[Var]) -> Result<Var, ModelError> {
        if packets.is_empty() {
            return Ok(g.constant(Tensor::zeros(1, self.config.doc_dim())));
        }
        let ids = &self.ids;
        let mut pooled = Vec::with_capacity(packets.len());
        for &x in packets {
            let n = g.value(x).rows();
            let u = g.linear(x, p[ids.tok_w.0], p[ids.tok_b.0])?;
            let u = g.tanh(u);
            let scores = g.matmul(u, p[ids.tok_ctx.0])?;
            pooled.push(g.attention_pool(x, scores, &vec![true; n])?);
        }
        let seq = g.concat(&pooled, Axis::Rows)?;
        let fwd = self.run_gru(g, p, &ids.fwd, seq, false)?;
        let bwd = self.run_gru(g, p, &ids.bwd, seq, true)?;
        let rows = fwd
            .iter()
            .zip(&bwd)
            .map(|(&f, &b)| g.concat(&[f, b], Axis::Cols))
            .collect::<Result<Vec<_>, _>>()?;
        let ctx = g.concat(&rows, Axis::Rows)?;
        let u = g.linear(ctx, p[ids.sent_w.0], p[ids.sent_b.0])?;
        let u = g.tanh(u);
        let scores = g.matmul(u, p[ids.sent_ctx.0])?;
        Ok(g.attention_pool(ctx, scores, &vec![true; rows.len()])?)
    }

    pub fn doc_vector(&self, g: &mut Graph, p: &[Var], doc: &EncodedDoc) -> Result<Var, ModelError> {
        let packets = self.embed(g, p, doc)?;
        self.doc_vector_from_embeddings(g, p, &packets)
    }

    /// Main-task logits (`1 × n_outputs`).
    pub fn classify(&self, g: &mut Graph, p: &[Var], doc_vec: Var, alleged: &[f64]) -> Result<Var, ModelError> {
        let x = g.dropout(doc_vec, self.config.dropout);
        let x = if self.config.task == Task::AB {
            let a = g.constant(Tensor::row_vector(alleged.to_vec()));
            g.concat(&[x, a], Axis::Cols)?
        } else {
            x
        };
        apply_mlp(g, p, &self.ids.cls, x)
    }

    /// Discriminator logits; the input passes through a reversal node with
    /// the head's coefficient.
    pub fn discriminate(&self, g: &mut Graph, p: &[Var], doc_vec: Var, head: Head) -> Result<Var, ModelError> {
        let m = self.ids.heads.get(&head).ok_or_else(|| ModelError::Bundle(format!("no {} head", head.name())))?;
        let r = g.grl(doc_vec, self.config.lambdas.get(head));
        apply_mlp(g, p, m, r)
    }

    fn main_loss(&self, g: &mut Graph, logits: Var, doc: &EncodedDoc) -> Result<Var, ModelError> {
        let target = doc
            .target
            .as_ref()
            .ok_or_else(|| ModelError::MissingTarget { doc_id: doc.doc_id.clone(), what: "main-task" })?;
        Ok(g.bce_with_logits(logits, Tensor::row_vector(target.clone()))?)
    }

    fn head_loss(&self, g: &mut Graph, logits: Var, doc: &EncodedDoc, head: Head) -> Result<Var, ModelError> {
        let missing = |what| ModelError::MissingTarget { doc_id: doc.doc_id.clone(), what };
        Ok(match head {
            Head::Country => g.cross_entropy(logits, &[doc.state.ok_or_else(|| missing("state"))?])?,
            Head::Length => g.cross_entropy(logits, &[doc.length_bin.ok_or_else(|| missing("length-bin"))?])?,
            Head::Vocab => {
                g.bce_with_logits(logits, Tensor::row_vector(doc.vocab_hot.clone()))?
            }
        })
    }

    /// Joint objective of a batch: main loss plus `λ_k` times each active
    /// discriminator loss, each term averaged over documents (summed in
    /// `doc_id` order). Returns the total and the per-component nodes.
    pub fn forward_loss(
        &self,
        g: &mut Graph,
        p: &[Var],
        batch: &Batch<'_>,
    ) -> Result<(Var, Var, BTreeMap<Head, Var>), ModelError> {
        if batch.is_empty() {
            return Err(ModelError::EmptySplit("batch"));
        }
        let heads = self.config.variant.heads();
        let mut mains = Vec::with_capacity(batch.len());
        let mut per_head: BTreeMap<Head, Vec<Var>> = heads.iter().map(|&h| (h, Vec::new())).collect();
        for doc in &batch.docs {
            let v = self.doc_vector(g, p, doc)?;
            let logits = self.classify(g, p, v, &doc.alleged)?;
            mains.push(self.main_loss(g, logits, doc)?);
            for &h in heads {
                let logits = self.discriminate(g, p, v, h)?;
                let l = self.head_loss(g, logits, doc, h)?;
                per_head.get_mut(&h).expect("head registered").push(l);
            }
        }
        let scale = 1.0 / batch.len() as f64;
        let mean = |g: &mut Graph, xs: &[Var]| -> Result<Var, ModelError> {
            let mut acc = xs[0];
            for &x in &xs[1..] {
                acc = g.add(acc, x)?;
            }
            Ok(g.scale(acc, scale))
        };
        let main = mean(g, &mains)?;
        let mut total = main;
        let mut components = BTreeMap::new();
        for (h, xs) in per_head {
            let l = mean(g, &xs)?;
            let weighted = g.scale(l, self.config.lambdas.get(h));
            total = g.add(total, weighted)?;
            components.insert(h, l);
        }
        Ok((total, main, components))
    }

    /// Finite-difference check of the joint objective's gradient with
    /// respect to every parameter, on `batch` with dropout off.
    pub fn check_gradients(&self, batch: &Batch<'_>, h: f64) -> Result<GradCheckReport, ModelError> {
        let params: Vec<Tensor> = self.store.ids().map(|id| self.store.get(id).clone()).collect();
        let report = check_gradients(
            &params,
            |g, p| self.forward_loss(g, p, batch).map(|(total, _, _)| total).map_err(|e| match e {
                ModelError::Diff(d) => d,
                other => DiffError::Builder(other.to_string()),
            }),
            h,
        )?;
        Ok(report)
    }

    /// Loss components of a batch in evaluation mode.
    pub fn batch_losses(&self, batch: &Batch<'_>) -> Result<HeadLosses, ModelError> {
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        let (total, main, heads) = self.forward_loss(&mut g, &p, batch)?;
        Ok(HeadLosses {
            total: g.value(total).item(),
            main: g.value(main).item(),
            heads: heads.into_iter().map(|(h, v)| (h, g.value(v).item())).collect(),
        })
    }

    /// Evaluation-mode document vector and main logits.
    pub fn forward(&self, doc: &EncodedDoc) -> Result<Forward, ModelError> {
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        let v = self.doc_vector(&mut g, &p, doc)?;
        let logits = self.classify(&mut g, &p, v, &doc.alleged)?;
        Ok(Forward { doc_vector: g.value(v).clone(), logits: g.value(logits).clone() })
    }

    /// Writes `model.json` (config and registries) and `params.json`
    /// (checkpoint) into `dir`.
    pub fn save(&self, dir: &Path) -> std::io::Result<()> {
        let meta = BundleFile { config: self.config.clone(), registries: self.registries.clone() };
        fs::write(dir.join("model.json"), serde_json::to_string_pretty(&meta).expect("bundle serializes"))?;
        fs::write(dir.join("params.json"), self.store.to_checkpoint_json())
    }

    pub fn load(dir: &Path) -> Result<Self, ModelError> {
        let read = |name: &str| {
            fs::read_to_string(dir.join(name)).map_err(|e| ModelError::Bundle(format!("{}: {e}", dir.join(name).display())))
        };
        let meta: BundleFile =
            serde_json::from_str(&read("model.json")?).map_err(|e| ModelError::Bundle(format!("model.json: {e}")))?;
        let registries = Registries { vocab: meta.registries.vocab.reindexed(), ..meta.registries };
        let mut bundle = ModelBundle::new(meta.config, registries)?;
        bundle.store.load_checkpoint_json(&read("params.json")?)?;
        Ok(bundle)
    }
}
