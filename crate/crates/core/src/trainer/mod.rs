//! Sequential task training, evaluation over seen tasks, and the
//! continual-learning metrics.

mod metrics;
mod mta;

pub use metrics::{averaged_accuracy, forgetting_ratio, mean_std, AccuracyMatrix, MetricsReport, ScopeStats};
pub use mta::{mta_matrix, select_tasks_by_mta, MtaMatrix, Selection};

use std::sync::Mutex;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masking::TaskId;
use crate::model::{Input, Model, ModelConfig, ModelVariant};
use crate::rng;
use crate::taskgen::{Dataset, EmbeddingTable, FamilyData, Split, TaskFamily};

/// Mini-batch SGD settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub eval_batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            batch_size: 32,
            epochs: 10,
            eval_batch_size: 250,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.batch_size == 0 || self.eval_batch_size == 0 {
            return Err(Error::Config("batch sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Ordered tasks with their splits. Positions are 1-based.
#[derive(Debug)]
pub struct TaskStream {
    order: Vec<TaskId>,
    seed: u64,
    train: Vec<Dataset>,
    test: Vec<Dataset>,
    access_log: Mutex<Vec<usize>>,
}

impl TaskStream {
    /// Builds a stream over `order`, which must list distinct tasks of `family`.
    pub fn new(family: &TaskFamily, order: Vec<TaskId>, seed: u64) -> Result<Self> {
        Self::check_order(family.len(), &order)?;
        let split = |s| order.iter().map(|&t| family.dataset(t, s)).collect::<Result<Vec<_>>>();
        let (train, test) = (split(Split::Train)?, split(Split::Test)?);
        Ok(Self::assemble(order, seed, train, test))
    }

    /// Like [`TaskStream::new`] but reuses splits generated once per family.
    pub fn from_data(data: &FamilyData, order: Vec<TaskId>, seed: u64) -> Result<Self> {
        Self::check_order(data.len(), &order)?;
        let train = order.iter().map(|&t| data.train[t].clone()).collect();
        let test = order.iter().map(|&t| data.test[t].clone()).collect();
        Ok(Self::assemble(order, seed, train, test))
    }

    fn check_order(tasks: usize, order: &[TaskId]) -> Result<()> {
        if order.is_empty() {
            return Err(Error::Config("a task stream needs at least one task".into()));
        }
        let mut seen = vec![false; tasks];
        for &t in order {
            match seen.get_mut(t) {
                Some(s) if !*s => *s = true,
                Some(_) => return Err(Error::Config(format!("task {t} appears twice in the ordering"))),
                None => return Err(Error::Lookup(format!("family has no task {t}"))),
            }
        }
        Ok(())
    }

    fn assemble(order: Vec<TaskId>, seed: u64, train: Vec<Dataset>, test: Vec<Dataset>) -> Self {
        TaskStream {
            order,
            seed,
            train,
            test,
            access_log: Mutex::new(Vec::new()),
        }
    }

    /// A random permutation of `0..tasks`, the `index`-th for `seed`.
    pub fn random_ordering(tasks: usize, seed: u64, index: usize) -> Vec<TaskId> {
        let mut order: Vec<TaskId> = (0..tasks).collect();
        order.shuffle(&mut rng::rng_for(seed, &[rng::TAG_ORDERING, index as u64]));
        order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn order(&self) -> &[TaskId] {
        &self.order
    }

    fn check_position(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.order.len() {
            return Err(Error::Lookup(format!(
                "position {t} outside stream of {} tasks",
                self.order.len()
            )));
        }
        Ok(())
    }

    pub fn task_at(&self, t: usize) -> Result<TaskId> {
        self.check_position(t)?;
        Ok(self.order[t - 1])
    }

    /// Training split at position `t`. Every hand-out is logged.
    pub fn train_data(&self, t: usize) -> Result<&Dataset> {
        self.check_position(t)?;
        self.access_log.lock().expect("access log").push(t);
        Ok(&self.train[t - 1])
    }

    pub fn test_data(&self, t: usize) -> Result<&Dataset> {
        self.check_position(t)?;
        Ok(&self.test[t - 1])
    }

    /// Positions whose training data has been handed out, in order.
    pub fn train_accesses(&self) -> Vec<usize> {
        self.access_log.lock().expect("access log").clone()
    }
}

/// Per-epoch mean training loss for one task.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskTrainReport {
    pub task: TaskId,
    pub epoch_losses: Vec<f64>,
}

fn batches_of(data: &Dataset, order: &[usize], size: usize) -> Vec<(Vec<Vec<u32>>, Vec<usize>)> {
    order
        .chunks(size)
        .map(|idx| {
            (
                idx.iter().map(|&i| data.examples[i].tokens.clone()).collect(),
                idx.iter().map(|&i| data.examples[i].label as usize).collect(),
            )
        })
        .collect()
}

/// Trains `model` on one task, seeing only that task's training split.
///
/// Creates the task's head (and TaskDrop mask) first, then runs
/// `config.epochs` passes of shuffled mini-batch SGD over the parameter
/// groups the variant allows for this task.
pub fn train_task(model: &mut Model, task: TaskId, data: &Dataset, config: &TrainConfig) -> Result<TaskTrainReport> {
    config.validate()?;
    if model.trained_tasks().contains(&task) {
        return Err(Error::Sequencing(format!("task {task} was already trained")));
    }
    if data.is_empty() {
        return Err(Error::Data(format!("no training data for task {task}")));
    }
    model.prepare_task(task)?;
    let trainable = model.trainable_params(task);
    let mut shuffle = rng::rng_for(model.seed(), &[rng::TAG_SHUFFLE, task as u64]);
    let mut dropout = rng::rng_for(model.seed(), &[rng::TAG_DROPOUT, task as u64]);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        for (x, y) in batches_of(data, &order, config.batch_size) {
            let loss = model.sgd_step(task, Input::Tokens(&x), &y, config.learning_rate, &mut dropout, &trainable)?;
            total += loss * y.len() as f64;
        }
        epoch_losses.push(total / data.len() as f64);
    }
    model.mark_trained(task);
    Ok(TaskTrainReport { task, epoch_losses })
}

/// Trains all `tasks` together: every epoch visits every task's batches in
/// one shuffled interleaving.
pub fn train_joint(model: &mut Model, tasks: &[(TaskId, &Dataset)], config: &TrainConfig) -> Result<Vec<f64>> {
    config.validate()?;
    for &(task, _) in tasks {
        model.prepare_task(task)?;
    }
    let ids: Vec<u64> = tasks.iter().map(|(t, _)| *t as u64).collect();
    let mut shuffle = rng::rng_for(model.seed(), &[&[rng::TAG_SHUFFLE, u64::MAX][..], &ids].concat());
    let mut dropout = rng::rng_for(model.seed(), &[rng::TAG_DROPOUT, u64::MAX]);
    let total_examples: usize = tasks.iter().map(|(_, d)| d.len()).sum();
    let mut orders: Vec<Vec<usize>> = tasks.iter().map(|(_, d)| (0..d.len()).collect()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let mut schedule = Vec::new();
        for (k, ((_, data), order)) in tasks.iter().zip(orders.iter_mut()).enumerate() {
            order.shuffle(&mut shuffle);
            for b in batches_of(data, order, config.batch_size) {
                schedule.push((k, b));
            }
        }
        schedule.shuffle(&mut shuffle);
        let mut total = 0.0;
        for (k, (x, y)) in schedule {
            let task = tasks[k].0;
            let trainable = model.trainable_params(task);
            let loss = model.sgd_step(task, Input::Tokens(&x), &y, config.learning_rate, &mut dropout, &trainable)?;
            total += loss * y.len() as f64;
        }
        epoch_losses.push(total / total_examples.max(1) as f64);
    }
    for &(task, _) in tasks {
        model.mark_trained(task);
    }
    Ok(epoch_losses)
}

/// Test accuracy of `model` on `data` using the head (and mask) of `task`.
pub fn accuracy(model: &Model, task: TaskId, data: &Dataset, batch_size: usize) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Data(format!("no test data for task {task}")));
    }
    let mut correct = 0usize;
    for chunk in data.examples.chunks(batch_size.max(1)) {
        let x: Vec<Vec<u32>> = chunk.iter().map(|e| e.tokens.clone()).collect();
        let pred = model.predict(task, Input::Tokens(&x))?;
        correct += pred
            .iter()
            .zip(chunk)
            .filter(|(p, e)| **p == e.label as usize)
            .count();
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Accuracies `a[τ][t]` for every `τ ≤ t` after training the first `t` tasks.
pub fn evaluate_all(model: &Model, stream: &TaskStream, t: usize, batch_size: usize) -> Result<Vec<f64>> {
    if t == 0 || t > stream.len() {
        return Err(Error::Sequencing(format!("cannot evaluate after {t} of {} tasks", stream.len())));
    }
    let trained = model.trained_tasks();
    if trained.len() < t || trained[..t] != stream.order()[..t] {
        return Err(Error::Sequencing(format!(
            "model has trained {:?}, stream expects {:?} first",
            trained,
            &stream.order()[..t]
        )));
    }
    (1..=t)
        .map(|tau| accuracy(model, stream.task_at(tau)?, stream.test_data(tau)?, batch_size))
        .collect()
}

/// Everything needed to build models for one run.
#[derive(Clone, Debug)]
pub struct RunSetup<'a> {
    pub variant: ModelVariant,
    pub model: &'a ModelConfig,
    pub train: &'a TrainConfig,
    pub table: &'a EmbeddingTable,
    pub seed: u64,
}

/// Result of one full pass over a stream.
#[derive(Debug)]
pub struct RunOutcome {
    pub matrix: AccuracyMatrix,
    pub model: Model,
    pub reports: Vec<TaskTrainReport>,
}

/// Trains `setup.variant` over `stream` and fills its accuracy matrix.
///
/// Sequential variants fill every row. `MultiTaskJoint` trains a fresh model
/// jointly on the first `t` tasks for each `t` in `joint_rows` and fills only
/// those rows.
pub fn run_stream(setup: &RunSetup<'_>, stream: &TaskStream, joint_rows: &[usize]) -> Result<RunOutcome> {
    let tasks = stream.len();
    let mut matrix = AccuracyMatrix::new(tasks);
    let eval = setup.train.eval_batch_size;
    if setup.variant == ModelVariant::MultiTaskJoint {
        let mut rows: Vec<usize> = joint_rows.iter().copied().filter(|&t| t >= 1 && t <= tasks).collect();
        rows.sort_unstable();
        rows.dedup();
        if rows.is_empty() {
            rows.push(tasks);
        }
        let mut last = None;
        for t in rows {
            let mut model = Model::new(setup.variant, setup.model.clone(), setup.table, setup.seed)?;
            let data = (1..=t)
                .map(|tau| Ok((stream.task_at(tau)?, stream.train_data(tau)?)))
                .collect::<Result<Vec<_>>>()?;
            train_joint(&mut model, &data, setup.train)?;
            matrix.set_row(t, evaluate_all(&model, stream, t, eval)?)?;
            last = Some(model);
        }
        return Ok(RunOutcome {
            matrix,
            model: last.expect("at least one joint row"),
            reports: Vec::new(),
        });
    }

    let mut model = Model::new(setup.variant, setup.model.clone(), setup.table, setup.seed)?;
    let mut reports = Vec::with_capacity(tasks);
    for t in 1..=tasks {
        let task = stream.task_at(t)?;
        reports.push(train_task(&mut model, task, stream.train_data(t)?, setup.train)?);
        matrix.set_row(t, evaluate_all(&model, stream, t, eval)?)?;
    }
    Ok(RunOutcome {
        matrix,
        model,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ParamGroup;
    use crate::taskgen::{generate_task_family, FamilySpec, SignalSharing};

    fn family(tasks: usize) -> TaskFamily {
        let spec = FamilySpec {
            tasks,
            shared_signal: SignalSharing::Fixed(0.5),
            seq_len: 6,
            sentiment_tokens: 2,
            shared_vocab: 8,
            private_vocab: 8,
            neutral_vocab: 20,
            train_size: 120,
            test_size: 60,
            noise: 0.1,
            embed_dim: 8,
            polarity_strength: 1.0,
        };
        generate_task_family(13, &spec).unwrap()
    }

    fn configs() -> (ModelConfig, TrainConfig) {
        (
            ModelConfig {
                hidden: 8,
                ..ModelConfig::default()
            },
            TrainConfig {
                epochs: 3,
                batch_size: 16,
                learning_rate: 0.5,
                ..TrainConfig::default()
            },
        )
    }

    #[test]
    fn taskdrop_registers_one_mask_per_task() {
        let fam = family(3);
        let (mc, tc) = configs();
        let stream = TaskStream::new(&fam, vec![2, 0, 1], 0).unwrap();
        let mut m = Model::new(ModelVariant::TaskDrop { p: 0.5 }, mc, &fam.table, 1).unwrap();
        for t in 1..=3 {
            train_task(&mut m, stream.task_at(t).unwrap(), stream.train_data(t).unwrap(), &tc).unwrap();
            assert_eq!(m.registry().len(), t);
        }
    }

    #[test]
    fn retraining_is_a_sequencing_error() {
        let fam = family(2);
        let (mc, tc) = configs();
        let d = fam.dataset(0, Split::Train).unwrap();
        let mut m = Model::new(ModelVariant::NoMasking, mc, &fam.table, 1).unwrap();
        train_task(&mut m, 0, &d, &tc).unwrap();
        assert!(matches!(train_task(&mut m, 0, &d, &tc), Err(Error::Sequencing(_))));
    }

    #[test]
    fn evaluation_checks_stream_order() {
        let fam = family(3);
        let (mc, tc) = configs();
        let stream = TaskStream::new(&fam, vec![0, 1, 2], 0).unwrap();
        let mut m = Model::new(ModelVariant::NoMasking, mc, &fam.table, 1).unwrap();
        assert!(matches!(evaluate_all(&m, &stream, 1, 50), Err(Error::Sequencing(_))));
        train_task(&mut m, 1, &fam.dataset(1, Split::Train).unwrap(), &tc).unwrap();
        assert!(matches!(evaluate_all(&m, &stream, 1, 50), Err(Error::Sequencing(_))));
        let mut m2 = Model::new(ModelVariant::NoMasking, configs().0, &fam.table, 1).unwrap();
        train_task(&mut m2, 0, stream.train_data(1).unwrap(), &tc).unwrap();
        assert_eq!(evaluate_all(&m2, &stream, 1, 50).unwrap().len(), 1);
        assert!(matches!(evaluate_all(&m2, &stream, 2, 50), Err(Error::Sequencing(_))));
    }

    #[test]
    fn stream_rejects_bad_orderings() {
        let fam = family(3);
        assert!(TaskStream::new(&fam, vec![0, 0], 0).is_err());
        assert!(TaskStream::new(&fam, vec![0, 5], 0).is_err());
        assert!(TaskStream::new(&fam, vec![], 0).is_err());
        let o = TaskStream::random_ordering(6, 3, 1);
        let mut s = o.clone();
        s.sort_unstable();
        assert_eq!(s, (0..6).collect::<Vec<_>>());
        assert_eq!(o, TaskStream::random_ordering(6, 3, 1));
    }

    #[test]
    fn classify_only_freezes_encoder_after_first_task() {
        let fam = family(3);
        let (mc, tc) = configs();
        let mut m = Model::new(ModelVariant::ClassifyOnly, mc, &fam.table, 4).unwrap();
        train_task(&mut m, 0, &fam.dataset(0, Split::Train).unwrap(), &tc).unwrap();
        let after_first = m.flat_params(ParamGroup::SharedEncoder).unwrap();
        train_task(&mut m, 1, &fam.dataset(1, Split::Train).unwrap(), &tc).unwrap();
        train_task(&mut m, 2, &fam.dataset(2, Split::Train).unwrap(), &tc).unwrap();
        assert_eq!(m.flat_params(ParamGroup::SharedEncoder).unwrap(), after_first);
    }

    #[test]
    fn other_heads_are_untouched() {
        let fam = family(3);
        let (mc, tc) = configs();
        for variant in [ModelVariant::TaskDrop { p: 0.5 }, ModelVariant::NoMasking] {
            let mut m = Model::new(variant, mc.clone(), &fam.table, 4).unwrap();
            train_task(&mut m, 0, &fam.dataset(0, Split::Train).unwrap(), &tc).unwrap();
            let head0 = m.head(0).unwrap().clone();
            train_task(&mut m, 1, &fam.dataset(1, Split::Train).unwrap(), &tc).unwrap();
            assert_eq!(m.head(0).unwrap(), &head0);
        }
    }

    #[test]
    fn run_touches_training_data_in_order() {
        let fam = family(4);
        let (mc, tc) = configs();
        let stream = TaskStream::new(&fam, vec![3, 1, 0, 2], 0).unwrap();
        let setup = RunSetup {
            variant: ModelVariant::TaskDrop { p: 0.5 },
            model: &mc,
            train: &tc,
            table: &fam.table,
            seed: 2,
        };
        let out = run_stream(&setup, &stream, &[]).unwrap();
        assert_eq!(stream.train_accesses(), vec![1, 2, 3, 4]);
        assert!(out.matrix.is_complete());
        assert_eq!(out.model.trained_tasks(), stream.order());
    }

    #[test]
    fn joint_rows_only() {
        let fam = family(4);
        let (mc, tc) = configs();
        let stream = TaskStream::new(&fam, vec![0, 1, 2, 3], 0).unwrap();
        let setup = RunSetup {
            variant: ModelVariant::MultiTaskJoint,
            model: &mc,
            train: &tc,
            table: &fam.table,
            seed: 2,
        };
        let out = run_stream(&setup, &stream, &[2, 4]).unwrap();
        assert!(out.matrix.row(2).is_some());
        assert!(out.matrix.row(3).is_none());
        assert!(out.matrix.row(4).is_some());
        assert!(matches!(averaged_accuracy(&out.matrix, 3), Err(Error::Data(_))));
    }
}
