//! Embedding lookup, GRU encoder, output masking and per-task heads, wired
//! together for TaskDrop and each baseline.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{encode_sequence, GruParams, GruVars, OutputMask};
use crate::error::{Error, Result};
use crate::masking::{dropout_mask, MaskRegistry, TaskId};
use crate::numerics::{Gradients, Tape, Tensor, Var};
use crate::rng::{self, Rng};
use crate::taskgen::EmbeddingTable;

/// Which continual-learning strategy a [`Model`] follows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ModelVariant {
    /// Per-task random unit mask with retention ratio `p`.
    TaskDrop { p: f64 },
    /// Shared encoder, no masking.
    NoMasking,
    /// Encoder trained on the first task only; later tasks train a head.
    ClassifyOnly,
    /// A fresh encoder for every task.
    IndividualNetworks,
    /// All tasks trained together.
    MultiTaskJoint,
    /// Fresh per-sample mask on every training pass, none at evaluation.
    StandardDropout { p: f64 },
}

impl ModelVariant {
    pub fn name(&self) -> &'static str {
        match self {
            ModelVariant::TaskDrop { .. } => "TaskDrop",
            ModelVariant::NoMasking => "NoMasking",
            ModelVariant::ClassifyOnly => "ClassifyOnly",
            ModelVariant::IndividualNetworks => "IndividualNetworks",
            ModelVariant::MultiTaskJoint => "MultiTaskJoint",
            ModelVariant::StandardDropout { .. } => "StandardDropout",
        }
    }

    pub fn p(&self) -> Option<f64> {
        match self {
            ModelVariant::TaskDrop { p } | ModelVariant::StandardDropout { p } => Some(*p),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(p) = self.p() {
            if !(0.0..=1.0).contains(&p) || p == 0.0 {
                return Err(Error::Config(format!(
                    "{} needs a retention ratio in (0, 1], got {p}",
                    self.name()
                )));
            }
        }
        Ok(())
    }

    /// Parses `NoMasking`, `TaskDrop:0.6`, `StandardDropout:0.8`, ...
    pub fn parse(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let p = || -> Result<f64> {
            arg.ok_or_else(|| Error::Config(format!("{name} needs a ratio, e.g. {name}:0.6")))?
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad ratio in {s:?}: {e}")))
        };
        let v = match name {
            "TaskDrop" => ModelVariant::TaskDrop { p: p()? },
            "StandardDropout" => ModelVariant::StandardDropout { p: p()? },
            "NoMasking" => ModelVariant::NoMasking,
            "ClassifyOnly" => ModelVariant::ClassifyOnly,
            "IndividualNetworks" => ModelVariant::IndividualNetworks,
            "MultiTaskJoint" => ModelVariant::MultiTaskJoint,
            other => return Err(Error::Config(format!("unknown variant {other:?}"))),
        };
        v.validate()?;
        Ok(v)
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.p() {
            Some(p) => write!(f, "{}(p={})", self.name(), p),
            None => f.write_str(self.name()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub hidden: usize,
    pub classes: usize,
    pub init_scale: f64,
    pub train_embeddings: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 64,
            classes: 2,
            init_scale: 0.08,
            train_embeddings: false,
        }
    }
}

/// Fully connected classifier for one task: `hidden × classes` plus bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum Encoders {
    Shared(GruParams),
    PerTask(BTreeMap<TaskId, GruParams>),
}

/// Identifies one trainable parameter group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParamGroup {
    Embedding,
    /// A private embedding copy (individual networks with trainable embeddings).
    TaskEmbedding(TaskId),
    SharedEncoder,
    TaskEncoder(TaskId),
    Head(TaskId),
}

/// Parameter groups updated while training one task.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSet(pub Vec<ParamGroup>);

impl ParamSet {
    pub fn contains(&self, g: ParamGroup) -> bool {
        self.0.contains(&g)
    }

    pub fn includes_encoder(&self) -> bool {
        self.0
            .iter()
            .any(|g| matches!(g, ParamGroup::SharedEncoder | ParamGroup::TaskEncoder(_)))
    }
}

/// Forward-pass mode. Training mode carries the generator for per-sample
/// dropout masks.
pub enum Mode<'a> {
    Train(&'a mut Rng),
    Eval,
}

/// Input to a forward pass.
#[derive(Clone, Copy)]
pub enum Input<'a> {
    Tokens(&'a [Vec<u32>]),
    /// `[batch × seq_len × dim]` embedded sequences.
    Embedded(&'a Tensor),
}

struct Registered {
    embedding: Option<(ParamGroup, Var)>,
    encoder: (ParamGroup, GruVars),
    head: (TaskId, Var, Var),
    final_output: Var,
    logits: Var,
}

/// A multi-head sequence classifier following one [`ModelVariant`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    variant: ModelVariant,
    config: ModelConfig,
    seed: u64,
    embedding: Tensor,
    #[serde(default)]
    task_embeddings: BTreeMap<TaskId, Tensor>,
    encoders: Encoders,
    heads: BTreeMap<TaskId, Head>,
    registry: MaskRegistry,
    trained: Vec<TaskId>,
}

impl Model {
    pub fn new(variant: ModelVariant, config: ModelConfig, table: &EmbeddingTable, seed: u64) -> Result<Self> {
        variant.validate()?;
        if config.hidden == 0 || config.classes < 2 {
            return Err(Error::Config("model needs hidden > 0 and at least 2 classes".into()));
        }
        let encoders = match variant {
            ModelVariant::IndividualNetworks => Encoders::PerTask(BTreeMap::new()),
            _ => {
                let mut r = rng::rng_for(seed, &[rng::TAG_ENCODER]);
                Encoders::Shared(GruParams::init(table.dim(), config.hidden, config.init_scale, &mut r))
            }
        };
        Ok(Model {
            variant,
            config,
            seed,
            embedding: table.tensor().clone(),
            task_embeddings: BTreeMap::new(),
            encoders,
            heads: BTreeMap::new(),
            registry: MaskRegistry::new(rng::derive_seed(seed, &[rng::TAG_MASKS])),
            trained: Vec::new(),
        })
    }

    pub fn variant(&self) -> ModelVariant {
        self.variant
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn registry(&self) -> &MaskRegistry {
        &self.registry
    }

    pub fn trained_tasks(&self) -> &[TaskId] {
        &self.trained
    }

    pub fn head(&self, task: TaskId) -> Option<&Head> {
        self.heads.get(&task)
    }

    pub fn heads(&self) -> &BTreeMap<TaskId, Head> {
        &self.heads
    }

    pub fn embedding(&self) -> &Tensor {
        &self.embedding
    }

    fn private_embeddings(&self) -> bool {
        self.config.train_embeddings && self.variant == ModelVariant::IndividualNetworks
    }

    /// The embedding table that `task` reads: a private copy for individual
    /// networks whose embeddings train, the shared table otherwise.
    pub fn embedding_for(&self, task: TaskId) -> &Tensor {
        self.task_embeddings.get(&task).unwrap_or(&self.embedding)
    }

    /// The encoder that serves `task`, if it exists yet.
    pub fn encoder(&self, task: TaskId) -> Option<&GruParams> {
        match &self.encoders {
            Encoders::Shared(p) => Some(p),
            Encoders::PerTask(m) => m.get(&task),
        }
    }

    fn encoder_mut(&mut self, group: ParamGroup) -> Option<&mut GruParams> {
        match (&mut self.encoders, group) {
            (Encoders::Shared(p), ParamGroup::SharedEncoder) => Some(p),
            (Encoders::PerTask(m), ParamGroup::TaskEncoder(t)) => m.get_mut(&t),
            _ => None,
        }
    }

    fn encoder_group(&self, task: TaskId) -> ParamGroup {
        match self.encoders {
            Encoders::Shared(_) => ParamGroup::SharedEncoder,
            Encoders::PerTask(_) => ParamGroup::TaskEncoder(task),
        }
    }

    /// Creates whatever `task` needs before its first step: the head, a
    /// private encoder for individual networks, and the TaskDrop mask.
    pub fn prepare_task(&mut self, task: TaskId) -> Result<()> {
        let (hidden, classes, scale) = (self.config.hidden, self.config.classes, self.config.init_scale);
        if !self.heads.contains_key(&task) {
            let mut r = rng::rng_for(self.seed, &[rng::TAG_HEAD, task as u64]);
            let head = Head {
                weight: Tensor::uniform(&[hidden, classes], scale, &mut r),
                bias: Tensor::zeros(&[classes]),
            };
            self.heads.insert(task, head);
        }
        let dim = self.embedding.shape()[1];
        if let Encoders::PerTask(m) = &mut self.encoders {
            m.entry(task).or_insert_with(|| {
                let mut r = rng::rng_for(self.seed, &[rng::TAG_ENCODER, task as u64]);
                GruParams::init(dim, hidden, scale, &mut r)
            });
        }
        if self.private_embeddings() && !self.task_embeddings.contains_key(&task) {
            self.task_embeddings.insert(task, self.embedding.clone());
        }
        if let ModelVariant::TaskDrop { p } = self.variant {
            if self.registry.get(task).is_none() {
                self.registry.generate(task, &[hidden], p)?;
            }
        }
        Ok(())
    }

    pub(crate) fn mark_trained(&mut self, task: TaskId) {
        if !self.trained.contains(&task) {
            self.trained.push(task);
        }
    }

    /// Parameter groups that training `task` may update.
    pub fn trainable_params(&self, task: TaskId) -> ParamSet {
        let mut groups = Vec::new();
        if self.private_embeddings() {
            groups.push(ParamGroup::TaskEmbedding(task));
        } else if self.config.train_embeddings {
            groups.push(ParamGroup::Embedding);
        }
        match self.variant {
            ModelVariant::ClassifyOnly => {
                let first = self.trained.first().is_none_or(|&f| f == task);
                if first {
                    groups.push(ParamGroup::SharedEncoder);
                } else {
                    groups.retain(|g| *g != ParamGroup::Embedding);
                }
                groups.push(ParamGroup::Head(task));
            }
            ModelVariant::IndividualNetworks => {
                groups.push(ParamGroup::TaskEncoder(task));
                groups.push(ParamGroup::Head(task));
            }
            ModelVariant::MultiTaskJoint => {
                groups.push(ParamGroup::SharedEncoder);
                let mut heads: Vec<TaskId> = self.heads.keys().copied().collect();
                if !heads.contains(&task) {
                    heads.push(task);
                    heads.sort_unstable();
                }
                groups.extend(heads.into_iter().map(ParamGroup::Head));
            }
            _ => {
                groups.push(ParamGroup::SharedEncoder);
                groups.push(ParamGroup::Head(task));
            }
        }
        ParamSet(groups)
    }

    fn timestep_inputs(&self, tape: &mut Tape, table: &Tensor, input: Input<'_>, emb_var: Option<Var>) -> Result<Vec<Var>> {
        let dim = table.shape()[1];
        match input {
            Input::Tokens(seqs) => {
                let Some(first) = seqs.first() else {
                    return Err(Error::Shape("empty batch".into()));
                };
                let n = first.len();
                if seqs.iter().any(|s| s.len() != n) {
                    return Err(Error::Shape("sequences in a batch differ in length".into()));
                }
                let vocab = table.shape()[0];
                if let Some(bad) = seqs.iter().flatten().find(|&&t| t as usize >= vocab) {
                    return Err(Error::Vocab(format!("token {bad} outside vocabulary of {vocab}")));
                }
                (0..n)
                    .map(|t| {
                        let ids: Vec<usize> = seqs.iter().map(|s| s[t] as usize).collect();
                        match emb_var {
                            Some(table) => tape.gather_rows(table, &ids),
                            None => {
                                let mut data = Vec::with_capacity(ids.len() * dim);
                                for &id in &ids {
                                    data.extend_from_slice(table.row(id));
                                }
                                Ok(tape.constant(Tensor::new(vec![ids.len(), dim], data)?))
                            }
                        }
                    })
                    .collect()
            }
            Input::Embedded(x) => {
                let s = x.shape();
                if s.len() != 3 || s[2] != dim || s[0] == 0 {
                    return Err(Error::Shape(format!(
                        "embedded batch must be [b × n × {dim}], got {s:?}"
                    )));
                }
                let (b, n) = (s[0], s[1]);
                (0..n)
                    .map(|t| {
                        let mut data = Vec::with_capacity(b * dim);
                        for i in 0..b {
                            let off = (i * n + t) * dim;
                            data.extend_from_slice(&x.data()[off..off + dim]);
                        }
                        Ok(tape.constant(Tensor::new(vec![b, dim], data)?))
                    })
                    .collect()
            }
        }
    }

    fn build(
        &self,
        tape: &mut Tape,
        task: TaskId,
        input: Input<'_>,
        mode: Mode<'_>,
        trainable: &ParamSet,
    ) -> Result<Registered> {
        let head = self
            .heads
            .get(&task)
            .ok_or_else(|| Error::Lookup(format!("no classifier head for task {task}")))?;
        let encoder = self
            .encoder(task)
            .ok_or_else(|| Error::Lookup(format!("no encoder for task {task}")))?;
        let task_mask = match self.variant {
            ModelVariant::TaskDrop { .. } => Some(self.registry.require(task)?.layer(0)),
            _ => None,
        };

        let table = self.embedding_for(task);
        let emb_group = if self.private_embeddings() {
            ParamGroup::TaskEmbedding(task)
        } else {
            ParamGroup::Embedding
        };
        let emb_var = match (trainable.contains(emb_group), input) {
            (true, Input::Tokens(_)) => Some((emb_group, tape.leaf(table.clone()))),
            _ => None,
        };
        let inputs = self.timestep_inputs(tape, table, input, emb_var.map(|(_, v)| v))?;
        let batch = tape.value(inputs[0]).shape()[0];

        let group = self.encoder_group(task);
        let enc_vars = encoder.register(tape, trainable.contains(group));

        let dropout;
        let mask = match (self.variant, mode) {
            (ModelVariant::TaskDrop { .. }, _) => OutputMask::Task(task_mask.expect("checked above")),
            (ModelVariant::StandardDropout { p }, Mode::Train(r)) => {
                dropout = dropout_mask(batch * self.config.hidden, p, r)?;
                OutputMask::PerSample {
                    mask: &dropout,
                    scale: 1.0 / p,
                }
            }
            _ => OutputMask::None,
        };
        let out = encode_sequence(tape, &enc_vars, &inputs, mask)?;
        let final_output = out.final_output();

        let head_trainable = trainable.contains(ParamGroup::Head(task));
        let (w, b) = if head_trainable {
            (tape.leaf(head.weight.clone()), tape.leaf(head.bias.clone()))
        } else {
            (tape.constant(head.weight.clone()), tape.constant(head.bias.clone()))
        };
        let z = tape.matmul(final_output, w)?;
        let logits = tape.add(z, b)?;
        Ok(Registered {
            embedding: emb_var,
            encoder: (group, enc_vars),
            head: (task, w, b),
            final_output,
            logits,
        })
    }

    /// Logits `[batch × classes]` from the head of `task`.
    pub fn forward(&self, task: TaskId, input: Input<'_>, mode: Mode<'_>) -> Result<Tensor> {
        let mut tape = Tape::new();
        let reg = self.build(&mut tape, task, input, mode, &ParamSet(Vec::new()))?;
        Ok(tape.value(reg.logits).clone())
    }

    /// Masked final-timestep encoder output `[batch × hidden]` in eval mode.
    pub fn representations(&self, task: TaskId, input: Input<'_>) -> Result<Tensor> {
        let mut tape = Tape::new();
        let reg = self.build(&mut tape, task, input, Mode::Eval, &ParamSet(Vec::new()))?;
        Ok(tape.value(reg.final_output).clone())
    }

    /// Predicted class per row.
    pub fn predict(&self, task: TaskId, input: Input<'_>) -> Result<Vec<usize>> {
        let logits = self.forward(task, input, Mode::Eval)?;
        Ok((0..logits.rows())
            .map(|r| {
                let row = logits.row(r);
                (0..row.len()).fold(0, |best, c| if row[c] > row[best] { c } else { best })
            })
            .collect())
    }

    /// Mean cross-entropy and its gradients for one batch.
    pub fn loss_and_gradients(
        &self,
        task: TaskId,
        input: Input<'_>,
        labels: &[usize],
        mode: Mode<'_>,
        trainable: &ParamSet,
    ) -> Result<(f64, Vec<(ParamGroup, usize, Tensor)>)> {
        let mut tape = Tape::new();
        let reg = self.build(&mut tape, task, input, mode, trainable)?;
        let loss = tape.cross_entropy_logits(reg.logits, labels)?;
        let grads = tape.backward(loss)?;
        Ok((tape.value(loss).data()[0], collect_grads(&reg, &grads, trainable)))
    }

    /// One SGD step on a batch; returns the batch loss before the update.
    pub fn sgd_step(
        &mut self,
        task: TaskId,
        input: Input<'_>,
        labels: &[usize],
        rate: f64,
        dropout_rng: &mut Rng,
        trainable: &ParamSet,
    ) -> Result<f64> {
        let (loss, grads) = self.loss_and_gradients(task, input, labels, Mode::Train(dropout_rng), trainable)?;
        for (group, block, g) in grads {
            self.param_mut(group, block)?.sgd_step(&g, rate)?;
        }
        Ok(loss)
    }

    /// Mutable access to one tensor of a parameter group. Encoder blocks are
    /// numbered as in [`crate::encoder::GRU_BLOCKS`]; heads use 0 = weight,
    /// 1 = bias.
    pub fn param_mut(&mut self, group: ParamGroup, block: usize) -> Result<&mut Tensor> {
        let missing = || Error::Lookup(format!("no parameter {group:?}/{block}"));
        match group {
            ParamGroup::Embedding => Ok(&mut self.embedding),
            ParamGroup::TaskEmbedding(t) => self.task_embeddings.get_mut(&t).ok_or_else(missing),
            ParamGroup::SharedEncoder | ParamGroup::TaskEncoder(_) => self
                .encoder_mut(group)
                .ok_or_else(missing)?
                .blocks_mut()
                .into_iter()
                .nth(block)
                .ok_or_else(missing),
            ParamGroup::Head(t) => {
                let h = self.heads.get_mut(&t).ok_or_else(missing)?;
                match block {
                    0 => Ok(&mut h.weight),
                    1 => Ok(&mut h.bias),
                    _ => Err(missing()),
                }
            }
        }
    }

    /// Every parameter value, flattened in a fixed order (for checksums).
    pub fn flat_params(&self, group: ParamGroup) -> Option<Vec<f64>> {
        match group {
            ParamGroup::Embedding => Some(self.embedding.data().to_vec()),
            ParamGroup::TaskEmbedding(t) => Some(self.task_embeddings.get(&t)?.data().to_vec()),
            ParamGroup::SharedEncoder | ParamGroup::TaskEncoder(_) => {
                let enc = match (&self.encoders, group) {
                    (Encoders::Shared(p), ParamGroup::SharedEncoder) => p,
                    (Encoders::PerTask(m), ParamGroup::TaskEncoder(t)) => m.get(&t)?,
                    _ => return None,
                };
                Some(enc.blocks().iter().flat_map(|t| t.data().to_vec()).collect())
            }
            ParamGroup::Head(t) => {
                let h = self.heads.get(&t)?;
                Some(h.weight.data().iter().chain(h.bias.data()).copied().collect())
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn collect_grads(reg: &Registered, grads: &Gradients, trainable: &ParamSet) -> Vec<(ParamGroup, usize, Tensor)> {
    let mut out = Vec::new();
    if let Some((group, e)) = reg.embedding {
        out.push((group, 0, grads.get(e)));
    }
    let (group, vars) = reg.encoder;
    if trainable.contains(group) {
        for (i, v) in vars.blocks().into_iter().enumerate() {
            out.push((group, i, grads.get(v)));
        }
    }
    let (task, w, b) = reg.head;
    if trainable.contains(ParamGroup::Head(task)) {
        out.push((ParamGroup::Head(task), 0, grads.get(w)));
        out.push((ParamGroup::Head(task), 1, grads.get(b)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_difference_check;
    use crate::taskgen::{generate_task_family, FamilySpec, Split};
    use rand::SeedableRng;

    fn family() -> crate::taskgen::TaskFamily {
        let spec = FamilySpec {
            tasks: 3,
            seq_len: 5,
            train_size: 40,
            test_size: 20,
            embed_dim: 6,
            polarity_strength: 1.0,
            ..FamilySpec::default()
        };
        generate_task_family(4, &spec).unwrap()
    }

    fn config() -> ModelConfig {
        ModelConfig {
            hidden: 8,
            ..ModelConfig::default()
        }
    }

    fn tokens(fam: &crate::taskgen::TaskFamily, task: TaskId) -> (Vec<Vec<u32>>, Vec<usize>) {
        let d = fam.dataset(task, Split::Train).unwrap();
        let ex = &d.examples[..8];
        (
            ex.iter().map(|e| e.tokens.clone()).collect(),
            ex.iter().map(|e| e.label as usize).collect(),
        )
    }

    #[test]
    fn variant_parse_and_display() {
        assert_eq!(ModelVariant::parse("TaskDrop:0.6").unwrap(), ModelVariant::TaskDrop { p: 0.6 });
        assert_eq!(ModelVariant::parse("NoMasking").unwrap(), ModelVariant::NoMasking);
        assert!(ModelVariant::parse("TaskDrop").is_err());
        assert!(ModelVariant::parse("TaskDrop:1.5").is_err());
        assert!(ModelVariant::parse("Bogus").is_err());
        assert_eq!(ModelVariant::TaskDrop { p: 0.6 }.to_string(), "TaskDrop(p=0.6)");
        let json = serde_json::to_string(&ModelVariant::StandardDropout { p: 0.4 }).unwrap();
        assert_eq!(json, r#"{"kind":"StandardDropout","p":0.4}"#);
    }

    #[test]
    fn taskdrop_full_retention_equals_no_masking() {
        let fam = family();
        let (x, _) = tokens(&fam, 0);
        let mut a = Model::new(ModelVariant::TaskDrop { p: 1.0 }, config(), &fam.table, 11).unwrap();
        let mut b = Model::new(ModelVariant::NoMasking, config(), &fam.table, 11).unwrap();
        a.prepare_task(0).unwrap();
        b.prepare_task(0).unwrap();
        let la = a.forward(0, Input::Tokens(&x), Mode::Eval).unwrap();
        let lb = b.forward(0, Input::Tokens(&x), Mode::Eval).unwrap();
        assert_eq!(la, lb);
    }

    #[test]
    fn taskdrop_eval_is_repeatable_dropout_train_is_not() {
        let fam = family();
        let (x, _) = tokens(&fam, 0);
        let mut m = Model::new(ModelVariant::TaskDrop { p: 0.5 }, config(), &fam.table, 2).unwrap();
        m.prepare_task(0).unwrap();
        assert_eq!(
            m.forward(0, Input::Tokens(&x), Mode::Eval).unwrap(),
            m.forward(0, Input::Tokens(&x), Mode::Eval).unwrap()
        );

        let mut d = Model::new(ModelVariant::StandardDropout { p: 0.5 }, config(), &fam.table, 2).unwrap();
        d.prepare_task(0).unwrap();
        let mut r = Rng::seed_from_u64(1);
        let a = d.forward(0, Input::Tokens(&x), Mode::Train(&mut r)).unwrap();
        let b = d.forward(0, Input::Tokens(&x), Mode::Train(&mut r)).unwrap();
        assert_ne!(a, b);
        assert_eq!(
            d.forward(0, Input::Tokens(&x), Mode::Eval).unwrap(),
            d.forward(0, Input::Tokens(&x), Mode::Eval).unwrap()
        );
    }

    #[test]
    fn embedded_and_token_inputs_agree() {
        let fam = family();
        let d = fam.dataset(1, Split::Test).unwrap();
        let batch = &crate::taskgen::embed(&d, &fam.table, 8).unwrap()[0];
        let toks: Vec<Vec<u32>> = d.examples[..8].iter().map(|e| e.tokens.clone()).collect();
        let mut m = Model::new(ModelVariant::NoMasking, config(), &fam.table, 3).unwrap();
        m.prepare_task(1).unwrap();
        assert_eq!(
            m.forward(1, Input::Embedded(&batch.x), Mode::Eval).unwrap(),
            m.forward(1, Input::Tokens(&toks), Mode::Eval).unwrap()
        );
    }

    #[test]
    fn lookup_errors() {
        let fam = family();
        let (x, _) = tokens(&fam, 0);
        let m = Model::new(ModelVariant::NoMasking, config(), &fam.table, 3).unwrap();
        assert!(matches!(
            m.forward(0, Input::Tokens(&x), Mode::Eval),
            Err(Error::Lookup(_))
        ));
        let mut t = Model::new(ModelVariant::TaskDrop { p: 0.5 }, config(), &fam.table, 3).unwrap();
        t.heads.insert(
            0,
            Head {
                weight: Tensor::zeros(&[8, 2]),
                bias: Tensor::zeros(&[2]),
            },
        );
        assert!(matches!(
            t.forward(0, Input::Tokens(&x), Mode::Eval),
            Err(Error::Registry(_))
        ));
    }

    #[test]
    fn trainable_sets_by_variant() {
        let fam = family();
        let mut c = Model::new(ModelVariant::ClassifyOnly, config(), &fam.table, 1).unwrap();
        assert!(c.trainable_params(0).includes_encoder());
        c.mark_trained(0);
        c.mark_trained(1);
        let set = c.trainable_params(2);
        assert!(!set.includes_encoder());
        assert_eq!(set.0, vec![ParamGroup::Head(2)]);

        let n = Model::new(ModelVariant::NoMasking, config(), &fam.table, 1).unwrap();
        assert!(n.trainable_params(5).contains(ParamGroup::SharedEncoder));

        let mut ind = Model::new(ModelVariant::IndividualNetworks, config(), &fam.table, 1).unwrap();
        ind.prepare_task(0).unwrap();
        ind.prepare_task(1).unwrap();
        assert!(ind.trainable_params(0).contains(ParamGroup::TaskEncoder(0)));
        assert!(!ind.trainable_params(1).contains(ParamGroup::TaskEncoder(0)));
        assert_ne!(ind.encoder(0), ind.encoder(1));
    }

    #[test]
    fn individual_networks_own_their_trainable_embeddings() {
        let fam = family();
        let cfg = ModelConfig {
            train_embeddings: true,
            ..config()
        };
        let mut m = Model::new(ModelVariant::IndividualNetworks, cfg, &fam.table, 2).unwrap();
        let train = crate::trainer::TrainConfig {
            epochs: 2,
            batch_size: 8,
            ..Default::default()
        };
        let (x, _) = tokens(&fam, 0);
        crate::trainer::train_task(&mut m, 0, &fam.dataset(0, Split::Train).unwrap(), &train).unwrap();
        assert_ne!(m.embedding_for(0), m.embedding());
        let before = (m.embedding_for(0).clone(), m.forward(0, Input::Tokens(&x), Mode::Eval).unwrap());
        crate::trainer::train_task(&mut m, 1, &fam.dataset(1, Split::Train).unwrap(), &train).unwrap();
        assert_eq!(m.embedding_for(0), &before.0);
        assert_eq!(m.forward(0, Input::Tokens(&x), Mode::Eval).unwrap(), before.1);
        assert_eq!(m.embedding(), fam.table.tensor());
        assert_eq!(m.trainable_params(1).0[0], ParamGroup::TaskEmbedding(1));
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let fam = family();
        let mut m = Model::new(ModelVariant::TaskDrop { p: 0.5 }, config(), &fam.table, 8).unwrap();
        m.prepare_task(0).unwrap();
        m.prepare_task(2).unwrap();
        let back = Model::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn model_loss_gradient_matches_finite_differences() {
        let fam = family();
        let (x, y) = tokens(&fam, 0);
        let mut cfg = config();
        cfg.init_scale = 0.5;
        let mut m = Model::new(ModelVariant::TaskDrop { p: 0.5 }, cfg, &fam.table, 5).unwrap();
        m.prepare_task(0).unwrap();
        let set = m.trainable_params(0);
        let groups: Vec<(ParamGroup, usize)> = m
            .loss_and_gradients(0, Input::Tokens(&x), &y, Mode::Eval, &set)
            .unwrap()
            .1
            .iter()
            .map(|(g, b, _)| (*g, *b))
            .collect();
        let flat = |m: &Model| -> Vec<f64> {
            let mut c = m.clone();
            groups.iter().flat_map(|&(g, b)| c.param_mut(g, b).unwrap().data().to_vec()).collect()
        };
        let set_flat = |m: &Model, v: &[f64]| -> Model {
            let mut c = m.clone();
            let mut off = 0;
            for &(g, b) in &groups {
                let t = c.param_mut(g, b).unwrap();
                let n = t.len();
                t.data_mut().copy_from_slice(&v[off..off + n]);
                off += n;
            }
            c
        };
        let err = finite_difference_check(
            |v| {
                let mm = set_flat(&m, v);
                let (l, g) = mm
                    .loss_and_gradients(0, Input::Tokens(&x), &y, Mode::Eval, &set)
                    .unwrap();
                (l, g.into_iter().flat_map(|(_, _, t)| t.into_data()).collect())
            },
            &flat(&m),
            1e-5,
        );
        assert!(err < 1e-4, "{err}");
    }
}
