//! Experiment grids: reference comparison, retention sweep and the
//! TaskDrop-vs-dropout comparison, with JSONL run records and CSV summaries.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masking::TaskId;
use crate::model::{Input, Model, ModelConfig, ModelVariant};
use crate::taskgen::{generate_task_family, Dataset, FamilyData, FamilySpec, Preset, Split, TaskFamily};
use crate::trainer::{
    averaged_accuracy, forgetting_ratio, mean_std, run_stream, AccuracyMatrix, RunSetup, TaskStream, TrainConfig,
};

/// Accuracy of a random guess on a balanced binary test set.
pub const RANDOM_ACCURACY: f64 = 0.5;

/// Size knobs that may be changed on top of a preset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FamilyOverrides {
    pub train_size: Option<usize>,
    pub test_size: Option<usize>,
    pub seq_len: Option<usize>,
    pub embed_dim: Option<usize>,
    pub noise: Option<f64>,
    pub polarity_strength: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// One of `hi`, `mix`, `lo`. Ignored when `family` is given.
    pub preset: Option<String>,
    /// A fully custom family.
    pub family: Option<FamilySpec>,
    pub overrides: FamilyOverrides,
    pub family_seed: u64,
    /// Variant names such as `TaskDrop`, `TaskDrop:0.6` or `NoMasking`.
    pub variants: Vec<String>,
    /// Retention ratio for variants given without one.
    pub p: Option<f64>,
    pub p_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    pub orderings: usize,
    pub training: TrainConfig,
    pub model: ModelConfig,
    /// Save the final model of every run under `checkpoints/`.
    pub checkpoints: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            preset: Some("lo".into()),
            family: None,
            overrides: FamilyOverrides::default(),
            family_seed: 0,
            variants: vec!["TaskDrop".into(), "NoMasking".into()],
            p: None,
            p_grid: vec![0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
            seeds: vec![0],
            orderings: 10,
            training: TrainConfig::default(),
            model: ModelConfig::default(),
            checkpoints: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(format!("bad experiment config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn preset(&self) -> Result<Option<Preset>> {
        match (&self.family, &self.preset) {
            (Some(_), _) | (None, None) => Ok(None),
            (None, Some(name)) => Preset::parse(name).map(Some),
        }
    }

    /// Name written in the `dataset` column.
    pub fn dataset_name(&self) -> Result<String> {
        Ok(self.preset()?.map_or("custom", Preset::name).to_string())
    }

    pub fn family_spec(&self) -> Result<FamilySpec> {
        let mut spec = match (&self.family, self.preset()?) {
            (Some(f), _) => f.clone(),
            (None, Some(p)) => p.spec(),
            (None, None) => return Err(Error::Config("either a preset or a family spec is required".into())),
        };
        let o = &self.overrides;
        spec.train_size = o.train_size.unwrap_or(spec.train_size);
        spec.test_size = o.test_size.unwrap_or(spec.test_size);
        spec.seq_len = o.seq_len.unwrap_or(spec.seq_len);
        spec.embed_dim = o.embed_dim.unwrap_or(spec.embed_dim);
        spec.noise = o.noise.unwrap_or(spec.noise);
        spec.polarity_strength = o.polarity_strength.unwrap_or(spec.polarity_strength);
        Ok(spec)
    }

    /// Retention ratio for bare `TaskDrop` / `StandardDropout` entries.
    pub fn default_p(&self) -> Result<f64> {
        Ok(self.p.or(self.preset()?.map(Preset::default_p)).unwrap_or(0.5))
    }

    pub fn resolve_variants(&self) -> Result<Vec<ModelVariant>> {
        let p = self.default_p()?;
        let mut out: Vec<ModelVariant> = Vec::new();
        for name in &self.variants {
            let v = match name.as_str() {
                "TaskDrop" => ModelVariant::TaskDrop { p },
                "StandardDropout" => ModelVariant::StandardDropout { p },
                other => ModelVariant::parse(other).map_err(|e| Error::Config(e.to_string()))?,
            };
            v.validate().map_err(|e| Error::Config(e.to_string()))?;
            if out.contains(&v) {
                return Err(Error::Config(format!("variant {v} listed twice")));
            }
            out.push(v);
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        let spec = self.family_spec()?;
        if self.orderings == 0 {
            return Err(Error::Config("orderings must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if let Some(p) = self.p {
            check_p(p)?;
        }
        self.training.validate()?;
        if self.model.hidden == 0 {
            return Err(Error::Config("hidden width must be positive".into()));
        }
        if spec.tasks == 0 {
            return Err(Error::Config("a family needs at least one task".into()));
        }
        self.resolve_variants()?;
        Ok(())
    }
}

fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("retention ratio {p} must lie in (0, 1]")))
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config("the p grid is empty".into()));
    }
    grid.iter().try_for_each(|&p| check_p(p))
}

/// One sequential (or joint-reference) run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub ordering: usize,
    pub variant: String,
    pub p: Option<f64>,
    pub order: Vec<TaskId>,
    pub matrix: Vec<Option<Vec<f64>>>,
}

impl RunRecord {
    pub fn accuracy_matrix(&self) -> Result<AccuracyMatrix> {
        AccuracyMatrix::from_rows(self.matrix.clone())
    }

    fn key(&self) -> (String, Option<u64>, u64, usize) {
        (self.variant.clone(), self.p.map(f64::to_bits), self.seed, self.ordering)
    }
}

/// One line of a summary CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub variant: String,
    pub p: Option<f64>,
    /// `A` or `rho`.
    pub metric: String,
    /// `2` or `T`.
    pub t_scope: String,
    /// Percent.
    pub mean: f64,
    pub std: f64,
    pub n_orderings: usize,
}

pub const CSV_HEADER: &str = "dataset,variant,p,metric,t_scope,mean,std,n_orderings";

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let p = r.p.map(|p| format!("{p}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.2},{:.2},{}",
            r.dataset, r.variant, p, r.metric, r.t_scope, r.mean, r.std, r.n_orderings
        );
    }
    out
}

/// Which statistics a summary should contain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SummaryKind {
    /// `A` and `rho` at scopes 2 and T.
    Full,
    /// `A` at scope T only.
    FinalAccuracy,
}

/// Everything an experiment command produced.
#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub runs: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentOutput {
    /// Mean and std (percent) of `metric` at `t_scope` for `variant`.
    pub fn lookup(&self, variant: &ModelVariant, metric: &str, t_scope: &str) -> Option<(f64, f64)> {
        self.summary
            .iter()
            .find(|r| r.variant == variant.name() && r.p == variant.p() && r.metric == metric && r.t_scope == t_scope)
            .map(|r| (r.mean, r.std))
    }
}

fn scopes(tasks: usize) -> Vec<(usize, &'static str)> {
    if tasks >= 2 {
        vec![(2, "2"), (tasks, "T")]
    } else {
        vec![(tasks, "T")]
    }
}

/// Recomputes summary rows from run records. Runs of variants outside
/// `variants` (such as the joint reference) are only used for `rho`.
/// A `rho` row's `n_orderings` counts only the runs whose ratio was defined.
pub fn summarize(
    dataset: &str,
    variants: &[ModelVariant],
    runs: &[RunRecord],
    kind: SummaryKind,
) -> Result<Vec<SummaryRow>> {
    let joint_name = ModelVariant::MultiTaskJoint.name();
    let joint: BTreeMap<(u64, usize), AccuracyMatrix> = runs
        .iter()
        .filter(|r| r.variant == joint_name)
        .map(|r| Ok(((r.seed, r.ordering), r.accuracy_matrix()?)))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for v in variants {
        let mut mine: Vec<&RunRecord> = runs.iter().filter(|r| r.variant == v.name() && r.p == v.p()).collect();
        mine.sort_by_key(|r| (r.seed, r.ordering));
        if mine.is_empty() {
            return Err(Error::Data(format!("no runs recorded for {v}")));
        }
        let matrices = mine.iter().map(|r| r.accuracy_matrix()).collect::<Result<Vec<_>>>()?;
        let tasks = matrices[0].tasks();
        let wanted: Vec<(usize, &str)> = match kind {
            SummaryKind::Full => scopes(tasks),
            SummaryKind::FinalAccuracy => vec![(tasks, "T")],
        };
        let mut push = |metric: &str, label: &str, values: Vec<f64>| {
            let (mean, std) = mean_std(&values);
            rows.push(SummaryRow {
                dataset: dataset.to_string(),
                variant: v.name().to_string(),
                p: v.p(),
                metric: metric.to_string(),
                t_scope: label.to_string(),
                mean,
                std,
                n_orderings: values.len(),
            });
        };
        for &(t, label) in &wanted {
            let a = matrices
                .iter()
                .map(|m| averaged_accuracy(m, t).map(|a| 100.0 * a))
                .collect::<Result<Vec<_>>>()?;
            push("A", label, a);
        }
        if kind == SummaryKind::Full {
            for &(t, label) in &wanted {
                let random = vec![RANDOM_ACCURACY; t];
                let rho = mine
                    .iter()
                    .zip(&matrices)
                    .map(|(r, m)| {
                        let j = joint
                            .get(&(r.seed, r.ordering))
                            .ok_or_else(|| Error::Data(format!("no joint reference for seed {} ordering {}", r.seed, r.ordering)))?;
                        let jrow = j
                            .row(t)
                            .ok_or_else(|| Error::Data(format!("joint reference lacks row {t}")))?;
                        // An ordering whose joint reference never beat chance on some
                        // task has no defined ratio; it is left out of the aggregate.
                        match forgetting_ratio(m, t, &random, jrow) {
                            Err(Error::DegenerateDenominator(_)) => Ok(None),
                            other => other.map(Some),
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                push("rho", label, rho.into_iter().flatten().collect());
            }
        }
    }
    Ok(rows)
}

struct Job {
    variant: ModelVariant,
    seed: u64,
    ordering: usize,
}

struct Prepared {
    dataset: String,
    family: TaskFamily,
    data: FamilyData,
}

fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    config.validate()?;
    let family = generate_task_family(config.family_seed, &config.family_spec()?)?;
    let data = FamilyData::generate(&family)?;
    Ok(Prepared {
        dataset: config.dataset_name()?,
        family,
        data,
    })
}

fn execute(config: &ExperimentConfig, prep: &Prepared, variants: &[ModelVariant], out: Option<&Path>) -> Result<Vec<RunRecord>> {
    let tasks = prep.family.len();
    let joint_rows: Vec<usize> = scopes(tasks).into_iter().map(|(t, _)| t).collect();
    let mut jobs = Vec::new();
    for v in variants {
        for &seed in &config.seeds {
            for ordering in 0..config.orderings {
                jobs.push(Job {
                    variant: *v,
                    seed,
                    ordering,
                });
            }
        }
    }
    let ckpt_dir = match out {
        Some(dir) if config.checkpoints => {
            let d = dir.join("checkpoints");
            fs::create_dir_all(&d)?;
            Some(d)
        }
        _ => None,
    };
    let mut runs = jobs
        .par_iter()
        .map(|job| {
            let order = TaskStream::random_ordering(tasks, job.seed, job.ordering);
            let stream = TaskStream::from_data(&prep.data, order.clone(), job.seed)?;
            let setup = RunSetup {
                variant: job.variant,
                model: &config.model,
                train: &config.training,
                table: &prep.family.table,
                seed: job.seed,
            };
            let outcome = run_stream(&setup, &stream, &joint_rows)?;
            if let Some(dir) = &ckpt_dir {
                let name = format!("{}_s{}_o{}.json", file_stem(&job.variant), job.seed, job.ordering);
                outcome.model.save(&dir.join(name))?;
            }
            Ok(RunRecord {
                seed: job.seed,
                ordering: job.ordering,
                variant: job.variant.name().to_string(),
                p: job.variant.p(),
                order,
                matrix: outcome.matrix.rows().to_vec(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    runs.sort_by_key(RunRecord::key);
    Ok(runs)
}

fn file_stem(v: &ModelVariant) -> String {
    match v.p() {
        Some(p) => format!("{}_p{p}", v.name()),
        None => v.name().to_string(),
    }
}

pub fn write_runs(path: &Path, runs: &[RunRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for r in runs {
        writeln!(f, "{}", serde_json::to_string(r)?)?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_runs(path: &Path) -> Result<Vec<RunRecord>> {
    let f = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for line in f.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

fn write_outputs(config: &ExperimentConfig, out: &Path, stem: &str, output: &ExperimentOutput) -> Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join("config.json"), config.to_json()?)?;
    write_runs(&out.join("runs.jsonl"), &output.runs)?;
    fs::write(out.join(format!("{stem}.csv")), summary_csv(&output.summary))?;
    Ok(())
}

/// Every listed variant over all seeds and orderings, plus the joint
/// reference runs that `rho` needs. Writes `runs.jsonl`, `summary.csv` and
/// `config.json` when `out` is given.
pub fn run_experiment(config: &ExperimentConfig, out: Option<&Path>) -> Result<ExperimentOutput> {
    let prep = prepare(config)?;
    let variants = config.resolve_variants()?;
    let mut all = variants.clone();
    if !all.contains(&ModelVariant::MultiTaskJoint) {
        all.push(ModelVariant::MultiTaskJoint);
    }
    let runs = execute(config, &prep, &all, out)?;
    let summary = summarize(&prep.dataset, &variants, &runs, SummaryKind::Full)?;
    let output = ExperimentOutput { runs, summary };
    if let Some(dir) = out {
        write_outputs(config, dir, "summary", &output)?;
    }
    Ok(output)
}

/// `A^{≤T}` of TaskDrop at each retention ratio in `grid`.
pub fn sweep_retention(config: &ExperimentConfig, grid: &[f64], out: Option<&Path>) -> Result<ExperimentOutput> {
    check_grid(grid)?;
    let prep = prepare(config)?;
    let variants: Vec<ModelVariant> = grid.iter().map(|&p| ModelVariant::TaskDrop { p }).collect();
    let runs = execute(config, &prep, &variants, out)?;
    let summary = summarize(&prep.dataset, &variants, &runs, SummaryKind::FinalAccuracy)?;
    let output = ExperimentOutput { runs, summary };
    if let Some(dir) = out {
        write_outputs(config, dir, "sweep", &output)?;
    }
    Ok(output)
}

/// `A^{≤T}` of TaskDrop and StandardDropout side by side for each p.
pub fn compare_dropout(config: &ExperimentConfig, grid: &[f64], out: Option<&Path>) -> Result<ExperimentOutput> {
    check_grid(grid)?;
    let prep = prepare(config)?;
    let variants: Vec<ModelVariant> = grid
        .iter()
        .flat_map(|&p| [ModelVariant::TaskDrop { p }, ModelVariant::StandardDropout { p }])
        .collect();
    let runs = execute(config, &prep, &variants, out)?;
    let summary = summarize(&prep.dataset, &variants, &runs, SummaryKind::FinalAccuracy)?;
    let output = ExperimentOutput { runs, summary };
    if let Some(dir) = out {
        write_outputs(config, dir, "compare", &output)?;
    }
    Ok(output)
}

/// One exported representation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Representation {
    pub vector: Vec<f64>,
    pub label: u8,
}

/// Masked final encoder outputs of `model` for every example in `data`.
pub fn dump_representations(model: &Model, task: TaskId, data: &Dataset) -> Result<Vec<Representation>> {
    let mut out = Vec::with_capacity(data.len());
    for chunk in data.examples.chunks(256) {
        let x: Vec<Vec<u32>> = chunk.iter().map(|e| e.tokens.clone()).collect();
        let reps = model.representations(task, Input::Tokens(&x))?;
        for (i, e) in chunk.iter().enumerate() {
            out.push(Representation {
                vector: reps.row(i).to_vec(),
                label: e.label,
            });
        }
    }
    Ok(out)
}

pub fn write_representations(path: &Path, reps: &[Representation]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for r in reps {
        writeln!(f, "{}", serde_json::to_string(r)?)?;
    }
    f.flush()?;
    Ok(())
}

/// Writes every task's splits as JSONL, the embedding table and the
/// per-task generator specs.
pub fn generate_data(config: &ExperimentConfig, out: &Path) -> Result<TaskFamily> {
    config.validate()?;
    let family = generate_task_family(config.family_seed, &config.family_spec()?)?;
    fs::create_dir_all(out)?;
    for t in 0..family.len() {
        for (split, name) in [(Split::Train, "train"), (Split::Test, "test")] {
            family.dataset(t, split)?.write_jsonl(&out.join(format!("task{t}_{name}.jsonl")))?;
        }
    }
    fs::write(out.join("embeddings.json"), family.table.to_json()?)?;
    fs::write(out.join("tasks.json"), serde_json::to_string_pretty(&family.tasks)?)?;
    Ok(family)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskgen::SignalSharing;

    fn record(variant: ModelVariant, ordering: usize, rows: Vec<Option<Vec<f64>>>) -> RunRecord {
        RunRecord {
            seed: 0,
            ordering,
            variant: variant.name().to_string(),
            p: variant.p(),
            order: vec![0, 1],
            matrix: rows,
        }
    }

    #[test]
    fn degenerate_joint_reference_is_left_out_of_rho() {
        let seq = Some(vec![0.8, 0.7]);
        let runs = vec![
            record(ModelVariant::NoMasking, 0, vec![Some(vec![0.9]), seq.clone()]),
            record(ModelVariant::NoMasking, 1, vec![Some(vec![0.9]), seq]),
            record(ModelVariant::MultiTaskJoint, 0, vec![None, Some(vec![0.9, 0.9])]),
            record(ModelVariant::MultiTaskJoint, 1, vec![None, Some(vec![0.9, 0.5])]),
        ];
        let rows = summarize("x", &[ModelVariant::NoMasking], &runs, SummaryKind::Full).unwrap();
        let rho: Vec<_> = rows.iter().filter(|r| r.metric == "rho").collect();
        assert_eq!(rho.len(), 2);
        for r in rho {
            assert_eq!(r.n_orderings, 1);
            assert!((r.mean - -37.5).abs() < 1e-12, "{r:?}");
        }
        let a = rows.iter().find(|r| r.metric == "A").unwrap();
        assert_eq!(a.n_orderings, 2);
    }

    pub(crate) fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            preset: None,
            family: Some(FamilySpec {
                tasks: 3,
                shared_signal: SignalSharing::Fixed(0.5),
                seq_len: 5,
                sentiment_tokens: 2,
                shared_vocab: 8,
                private_vocab: 8,
                neutral_vocab: 20,
                train_size: 80,
                test_size: 40,
                noise: 0.0,
                embed_dim: 6,
                polarity_strength: 1.0,
            }),
            variants: vec!["TaskDrop:1".into(), "NoMasking".into(), "TaskDrop:0.5".into()],
            orderings: 2,
            seeds: vec![7],
            training: TrainConfig {
                epochs: 4,
                batch_size: 8,
                learning_rate: 0.5,
                ..TrainConfig::default()
            },
            model: ModelConfig {
                hidden: 6,
                ..ModelConfig::default()
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn p_one_matches_no_masking_rows() {
        let out = run_experiment(&tiny(), None).unwrap();
        for m in ["A", "rho"] {
            for s in ["2", "T"] {
                assert_eq!(
                    out.lookup(&ModelVariant::TaskDrop { p: 1.0 }, m, s),
                    out.lookup(&ModelVariant::NoMasking, m, s)
                );
            }
        }
        assert_eq!(out.summary.len(), 3 * 4);
    }

    #[test]
    fn reducer_matches_written_records() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny();
        let out = run_experiment(&cfg, Some(dir.path())).unwrap();
        let runs = read_runs(&dir.path().join("runs.jsonl")).unwrap();
        assert_eq!(runs, out.runs);
        let again = summarize("custom", &cfg.resolve_variants().unwrap(), &runs, SummaryKind::Full).unwrap();
        assert_eq!(
            summary_csv(&again),
            fs::read_to_string(dir.path().join("summary.csv")).unwrap()
        );
    }

    #[test]
    fn config_validation() {
        let mut c = tiny();
        c.orderings = 0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = tiny();
        c.variants = vec!["TaskDrop:1.5".into()];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = tiny();
        c.variants = vec!["Nope".into()];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        assert!(matches!(
            ExperimentConfig::from_json(r#"{"orderings": 2, "bogus": 1}"#),
            Err(Error::Config(_))
        ));
        let c = ExperimentConfig::from_json(r#"{"preset": "hi", "variants": ["TaskDrop"]}"#).unwrap();
        assert_eq!(c.resolve_variants().unwrap(), vec![ModelVariant::TaskDrop { p: 0.8 }]);
        assert!(matches!(check_grid(&[0.0]), Err(Error::Config(_))));
    }

    #[test]
    fn compare_has_two_rows_per_p() {
        let mut c = tiny();
        c.orderings = 1;
        let out = compare_dropout(&c, &[0.5, 1.0], None).unwrap();
        assert_eq!(out.summary.len(), 4);
        let td = out.lookup(&ModelVariant::TaskDrop { p: 1.0 }, "A", "T");
        assert_eq!(td, out.lookup(&ModelVariant::StandardDropout { p: 1.0 }, "A", "T"));
        let sweep = sweep_retention(&c, &[0.5], None).unwrap();
        assert_eq!(sweep.summary.len(), 1);
    }

    #[test]
    fn csv_format() {
        let rows = vec![SummaryRow {
            dataset: "lo".into(),
            variant: "TaskDrop".into(),
            p: Some(0.6),
            metric: "A".into(),
            t_scope: "T".into(),
            mean: 81.234,
            std: 1.0,
            n_orderings: 10,
        }];
        assert_eq!(summary_csv(&rows), format!("{CSV_HEADER}\nlo,TaskDrop,0.6,A,T,81.23,1.00,10\n"));
    }
}
