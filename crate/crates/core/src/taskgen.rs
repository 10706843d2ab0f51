//! Synthetic binary-sentiment task families with a cross-task similarity knob.
//!
//! Token ids are laid out as `[neutral | shared lexicon | private lexicon of
//! task 0 | private lexicon of task 1 | ...]`. Each lexicon's first half is
//! positive and second half negative. A sequence of label `y` places a few
//! sentiment tokens of polarity `y` (flipped with probability `noise`) among
//! neutral filler; each sentiment token comes from the shared lexicon with
//! probability `shared_signal` and from the task's private lexicon otherwise.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::ops::Range;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masking::TaskId;
use crate::numerics::Tensor;
use crate::rng;

/// How the shared-signal fraction is assigned across a family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalSharing {
    Fixed(f64),
    /// Drawn per task from `uniform(low, high)`.
    Uniform { low: f64, high: f64 },
    PerTask(Vec<f64>),
}

/// Template for a family of tasks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FamilySpec {
    pub tasks: usize,
    pub shared_signal: SignalSharing,
    pub shared_vocab: usize,
    pub private_vocab: usize,
    pub neutral_vocab: usize,
    pub seq_len: usize,
    /// Sentiment-bearing tokens per sequence.
    pub sentiment_tokens: usize,
    pub train_size: usize,
    pub test_size: usize,
    /// Probability that a sentiment token carries the opposite polarity.
    pub noise: f64,
    pub embed_dim: usize,
    /// Weight of a lexicon's polarity axis in its tokens' embeddings.
    pub polarity_strength: f64,
}

impl Default for FamilySpec {
    fn default() -> Self {
        FamilySpec {
            tasks: 6,
            shared_signal: SignalSharing::Fixed(0.5),
            shared_vocab: 40,
            private_vocab: 40,
            neutral_vocab: 200,
            seq_len: 20,
            sentiment_tokens: 4,
            train_size: 2000,
            test_size: 500,
            noise: 0.2,
            embed_dim: 32,
            polarity_strength: 1.0,
        }
    }
}

/// Named families mirroring high-, mixed- and low-similarity task sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Hi,
    Mix,
    Lo,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Hi => "hi",
            Preset::Mix => "mix",
            Preset::Lo => "lo",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "hi" => Ok(Preset::Hi),
            "mix" => Ok(Preset::Mix),
            "lo" => Ok(Preset::Lo),
            other => Err(Error::Config(format!("unknown preset {other:?}"))),
        }
    }

    pub fn spec(self) -> FamilySpec {
        let (tasks, shared_signal) = match self {
            Preset::Hi => (6, SignalSharing::Fixed(0.9)),
            Preset::Mix => (24, SignalSharing::Uniform { low: 0.2, high: 0.9 }),
            Preset::Lo => (6, SignalSharing::Fixed(0.2)),
        };
        FamilySpec {
            tasks,
            shared_signal,
            ..FamilySpec::default()
        }
    }

    /// Retention ratio used for this family in reference comparisons.
    pub fn default_p(self) -> f64 {
        match self {
            Preset::Hi => 0.8,
            Preset::Mix => 0.5,
            Preset::Lo => 0.6,
        }
    }
}

/// Concrete generator settings for one task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTaskSpec {
    pub task_id: TaskId,
    pub shared_signal: f64,
    pub shared_lexicon: Range<u32>,
    pub private_lexicon: Range<u32>,
    pub neutral: Range<u32>,
    pub seq_len: usize,
    pub sentiment_tokens: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub noise: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub tokens: Vec<u32>,
    pub label: u8,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub task_id: TaskId,
    pub split: Split,
    pub examples: Vec<Example>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn label_counts(&self) -> [usize; 2] {
        let ones = self.examples.iter().filter(|e| e.label == 1).count();
        [self.examples.len() - ones, ones]
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        for e in &self.examples {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_jsonl(path: &Path, task_id: TaskId, split: Split) -> Result<Self> {
        let reader = BufReader::new(std::fs::File::open(path)?);
        let mut examples = Vec::new();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e: Example = serde_json::from_str(&line)?;
            if e.label > 1 {
                return Err(Error::Data(format!("label {} is not 0 or 1", e.label)));
            }
            examples.push(e);
        }
        Ok(Dataset {
            task_id,
            split,
            examples,
        })
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Fixed unit-norm vector per token.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: Tensor,
}

impl EmbeddingTable {
    pub fn random<R: Rng + ?Sized>(vocab: usize, dim: usize, rng: &mut R) -> Self {
        let mut data = Vec::with_capacity(vocab * dim);
        for _ in 0..vocab {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            normalize(&mut v);
            data.extend(v);
        }
        EmbeddingTable {
            dim,
            vectors: Tensor::new(vec![vocab, dim], data).expect("table shape"),
        }
    }

    /// Table for a family's vocabulary layout: neutral tokens are random
    /// directions; each lexicon (shared, then one per task) owns a polarity
    /// axis, and its positive and negative halves lean towards `+axis` and
    /// `-axis` respectively. Axes are mutually orthogonal whenever there are
    /// at most `embed_dim` lexicons.
    pub fn for_family<R: Rng + ?Sized>(spec: &FamilySpec, rng: &mut R) -> Self {
        let dim = spec.embed_dim;
        let gauss = |rng: &mut R| -> Vec<f64> { (0..dim).map(|_| rng.sample(StandardNormal)).collect() };
        let lexicons = spec.tasks + 1;
        let mut axes: Vec<Vec<f64>> = Vec::with_capacity(lexicons);
        while axes.len() < lexicons {
            let mut v = gauss(rng);
            if axes.len() < dim {
                for a in &axes {
                    let dot: f64 = v.iter().zip(a).map(|(x, y)| x * y).sum();
                    v.iter_mut().zip(a).for_each(|(x, y)| *x -= dot * y);
                }
            }
            if normalize(&mut v) > 1e-6 {
                axes.push(v);
            }
        }
        let scale = 1.0 / (dim as f64).sqrt();
        let mut data = Vec::with_capacity(spec.vocab_size() * dim);
        let mut push = |rng: &mut R, axis: Option<(&[f64], f64)>| {
            let mut v: Vec<f64> = gauss(rng).into_iter().map(|x| x * scale).collect();
            if let Some((a, sign)) = axis {
                v.iter_mut().zip(a).for_each(|(x, y)| *x += sign * spec.polarity_strength * y);
            }
            if normalize(&mut v) == 0.0 {
                v[0] = 1.0;
            }
            data.extend(v);
        };
        for _ in 0..spec.neutral_vocab {
            push(rng, None);
        }
        let sizes = std::iter::once(spec.shared_vocab).chain(std::iter::repeat_n(spec.private_vocab, spec.tasks));
        for (axis, size) in axes.iter().zip(sizes) {
            for i in 0..size {
                let sign = if i < size / 2 { 1.0 } else { -1.0 };
                push(rng, Some((axis, sign)));
            }
        }
        EmbeddingTable {
            dim,
            vectors: Tensor::new(vec![spec.vocab_size(), dim], data).expect("table shape"),
        }
    }

    pub fn from_tensor(vectors: Tensor) -> Result<Self> {
        if vectors.shape().len() != 2 {
            return Err(Error::Shape("embedding table must be 2-D".into()));
        }
        Ok(EmbeddingTable {
            dim: vectors.shape()[1],
            vectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab(&self) -> usize {
        self.vectors.shape()[0]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.vectors
    }

    pub fn vector(&self, token: u32) -> Result<&[f64]> {
        if token as usize >= self.vocab() {
            return Err(Error::Vocab(format!(
                "token {token} outside vocabulary of {}",
                self.vocab()
            )));
        }
        Ok(self.vectors.row(token as usize))
    }

    pub fn to_json(&self) -> Result<String> {
        let map: BTreeMap<u32, &[f64]> = (0..self.vocab() as u32)
            .map(|t| (t, self.vectors.row(t as usize)))
            .collect();
        Ok(serde_json::to_string(&map)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let map: BTreeMap<u32, Vec<f64>> = serde_json::from_str(s)?;
        let dim = map.values().next().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(map.len() * dim);
        for (i, (token, v)) in map.iter().enumerate() {
            if *token as usize != i {
                return Err(Error::Vocab(format!("embedding table is missing token {i}")));
            }
            if v.len() != dim {
                return Err(Error::Shape(format!("token {token} has width {}", v.len())));
            }
            data.extend_from_slice(v);
        }
        Ok(EmbeddingTable {
            dim,
            vectors: Tensor::new(vec![map.len(), dim], data)?,
        })
    }
}

/// A generated family: per-task specs plus the shared embedding table.
#[derive(Clone, Debug)]
pub struct TaskFamily {
    pub seed: u64,
    pub spec: FamilySpec,
    pub tasks: Vec<SyntheticTaskSpec>,
    pub table: EmbeddingTable,
}

fn validate(spec: &FamilySpec) -> Result<Vec<f64>> {
    let bad = |m: String| Err(Error::Config(m));
    if spec.tasks == 0 {
        return bad("a family needs at least one task".into());
    }
    let sigmas = match &spec.shared_signal {
        SignalSharing::Fixed(s) => vec![*s; spec.tasks],
        SignalSharing::Uniform { low, high } => {
            if !(0.0 <= *low && low <= high && *high <= 1.0) {
                return bad(format!("shared-signal range [{low}, {high}] is invalid"));
            }
            Vec::new()
        }
        SignalSharing::PerTask(v) => {
            if v.len() != spec.tasks {
                return bad(format!("{} shared-signal values for {} tasks", v.len(), spec.tasks));
            }
            v.clone()
        }
    };
    if sigmas.iter().any(|s| !(0.0..=1.0).contains(s)) {
        return bad("shared-signal fraction outside [0, 1]".into());
    }
    let needs_shared = match &spec.shared_signal {
        SignalSharing::Uniform { high, .. } => *high > 0.0,
        _ => sigmas.iter().any(|&s| s > 0.0),
    };
    let needs_private = match &spec.shared_signal {
        SignalSharing::Uniform { low, .. } => *low < 1.0,
        _ => sigmas.iter().any(|&s| s < 1.0),
    };
    if needs_shared && (spec.shared_vocab < 2 || spec.shared_vocab % 2 != 0) {
        return bad("shared lexicon needs a positive even size".into());
    }
    if needs_private && (spec.private_vocab < 2 || spec.private_vocab % 2 != 0) {
        return bad("private lexicons need a positive even size".into());
    }
    if spec.seq_len == 0 || spec.sentiment_tokens == 0 || spec.sentiment_tokens > spec.seq_len {
        return bad("sentiment tokens must be in 1..=seq_len".into());
    }
    if spec.sentiment_tokens < spec.seq_len && spec.neutral_vocab == 0 {
        return bad("filler positions need a neutral vocabulary".into());
    }
    if !(0.0..0.5).contains(&spec.noise) {
        return bad(format!("noise {} outside [0, 0.5)", spec.noise));
    }
    if spec.train_size % 2 != 0 || spec.test_size % 2 != 0 {
        return bad("split sizes must be even for label balance".into());
    }
    if spec.embed_dim == 0 {
        return bad("embedding dimension must be positive".into());
    }
    if !(spec.polarity_strength >= 0.0 && spec.polarity_strength.is_finite()) {
        return bad(format!("polarity strength {} must be finite and non-negative", spec.polarity_strength));
    }
    let vocab = spec.neutral_vocab as u64
        + spec.shared_vocab as u64
        + spec.private_vocab as u64 * spec.tasks as u64;
    if vocab > u32::MAX as u64 {
        return bad("vocabulary does not fit 32-bit token ids".into());
    }
    Ok(sigmas)
}

impl FamilySpec {
    pub fn validate(&self) -> Result<()> {
        validate(self).map(|_| ())
    }

    pub fn vocab_size(&self) -> usize {
        self.neutral_vocab + self.shared_vocab + self.private_vocab * self.tasks
    }
}

/// Builds a deterministic family of `spec.tasks` tasks.
pub fn generate_task_family(family_seed: u64, spec: &FamilySpec) -> Result<TaskFamily> {
    let mut sigmas = validate(spec)?;
    if let SignalSharing::Uniform { low, high } = spec.shared_signal {
        let mut r = rng::rng_for(family_seed, &[rng::TAG_FAMILY]);
        sigmas = (0..spec.tasks)
            .map(|_| if high > low { r.random_range(low..high) } else { low })
            .collect();
    }
    let nv = spec.neutral_vocab as u32;
    let sv = spec.shared_vocab as u32;
    let pv = spec.private_vocab as u32;
    let tasks = sigmas
        .iter()
        .enumerate()
        .map(|(t, &sigma)| {
            let start = nv + sv + pv * t as u32;
            SyntheticTaskSpec {
                task_id: t,
                shared_signal: sigma,
                shared_lexicon: nv..nv + sv,
                private_lexicon: start..start + pv,
                neutral: 0..nv,
                seq_len: spec.seq_len,
                sentiment_tokens: spec.sentiment_tokens,
                train_size: spec.train_size,
                test_size: spec.test_size,
                noise: spec.noise,
            }
        })
        .collect();
    let mut er = rng::rng_for(family_seed, &[rng::TAG_EMBEDDING]);
    Ok(TaskFamily {
        seed: family_seed,
        spec: spec.clone(),
        tasks,
        table: EmbeddingTable::for_family(spec, &mut er),
    })
}

fn draw_polar<R: Rng + ?Sized>(lexicon: &Range<u32>, polarity: u8, rng: &mut R) -> u32 {
    let half = (lexicon.end - lexicon.start) / 2;
    let base = lexicon.start + if polarity == 1 { 0 } else { half };
    base + rng.random_range(0..half)
}

/// Samples a label-balanced dataset for one task.
pub fn generate_dataset(spec: &SyntheticTaskSpec, split: Split, size: usize, seed: u64) -> Result<Dataset> {
    if size % 2 != 0 {
        return Err(Error::Config(format!("dataset size {size} must be even")));
    }
    let mut r = rng::rng_for(seed, &[rng::TAG_DATA]);
    let mut examples = Vec::with_capacity(size);
    let mut positions: Vec<usize> = (0..spec.seq_len).collect();
    for i in 0..size {
        let label = u8::from(i >= size / 2);
        let mut tokens: Vec<u32> = (0..spec.seq_len)
            .map(|_| r.random_range(spec.neutral.clone()))
            .collect();
        positions.shuffle(&mut r);
        for &pos in &positions[..spec.sentiment_tokens] {
            let polarity = if r.random::<f64>() < spec.noise { 1 - label } else { label };
            let lexicon = if r.random::<f64>() < spec.shared_signal {
                &spec.shared_lexicon
            } else {
                &spec.private_lexicon
            };
            tokens[pos] = draw_polar(lexicon, polarity, &mut r);
        }
        examples.push(Example { tokens, label });
    }
    examples.shuffle(&mut r);
    Ok(Dataset {
        task_id: spec.task_id,
        split,
        examples,
    })
}

impl TaskFamily {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// The family's canonical split for `task`.
    pub fn dataset(&self, task: TaskId, split: Split) -> Result<Dataset> {
        let spec = self
            .tasks
            .get(task)
            .ok_or_else(|| Error::Lookup(format!("family has no task {task}")))?;
        let (size, tag) = match split {
            Split::Train => (spec.train_size, 0),
            Split::Test => (spec.test_size, 1),
        };
        generate_dataset(spec, split, size, rng::derive_seed(self.seed, &[task as u64, tag]))
    }
}

/// Every task's train and test split, indexed by task id.
#[derive(Clone, Debug)]
pub struct FamilyData {
    pub train: Vec<Dataset>,
    pub test: Vec<Dataset>,
}

impl FamilyData {
    pub fn generate(family: &TaskFamily) -> Result<Self> {
        let split = |s| (0..family.len()).map(|t| family.dataset(t, s)).collect::<Result<Vec<_>>>();
        Ok(FamilyData {
            train: split(Split::Train)?,
            test: split(Split::Test)?,
        })
    }

    pub fn len(&self) -> usize {
        self.train.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train.is_empty()
    }
}

/// A mini-batch of embedded sequences.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddedBatch {
    /// `[batch × seq_len × dim]`.
    pub x: Tensor,
    pub labels: Vec<usize>,
}

/// Embeds `dataset` in consecutive batches of at most `batch_size`.
pub fn embed(dataset: &Dataset, table: &EmbeddingTable, batch_size: usize) -> Result<Vec<EmbeddedBatch>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    dataset
        .examples
        .chunks(batch_size)
        .map(|chunk| {
            let n = chunk[0].tokens.len();
            let mut data = Vec::with_capacity(chunk.len() * n * table.dim());
            for e in chunk {
                if e.tokens.len() != n {
                    return Err(Error::Shape("sequences in a batch differ in length".into()));
                }
                for &t in &e.tokens {
                    data.extend_from_slice(table.vector(t)?);
                }
            }
            Ok(EmbeddedBatch {
                x: Tensor::new(vec![chunk.len(), n, table.dim()], data)?,
                labels: chunk.iter().map(|e| e.label as usize).collect(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn small() -> FamilySpec {
        FamilySpec {
            tasks: 4,
            train_size: 200,
            test_size: 100,
            seq_len: 8,
            ..FamilySpec::default()
        }
    }

    #[test]
    fn family_is_deterministic() {
        let a = generate_task_family(3, &small()).unwrap();
        let b = generate_task_family(3, &small()).unwrap();
        assert_eq!(a.tasks, b.tasks);
        assert_eq!(a.table, b.table);
        assert_eq!(a.dataset(2, Split::Train).unwrap(), b.dataset(2, Split::Train).unwrap());
    }

    #[test]
    fn private_lexicons_disjoint() {
        let fam = generate_task_family(1, &Preset::Mix.spec()).unwrap();
        for (i, a) in fam.tasks.iter().enumerate() {
            assert!(a.private_lexicon.end <= a.neutral.start || a.private_lexicon.start >= a.neutral.end);
            assert!(a.private_lexicon.start >= a.shared_lexicon.end);
            for b in &fam.tasks[i + 1..] {
                let sa: HashSet<u32> = a.private_lexicon.clone().collect();
                assert!(b.private_lexicon.clone().all(|t| !sa.contains(&t)));
            }
        }
        assert!(fam.tasks.iter().all(|t| (0.2..0.9).contains(&t.shared_signal)));
    }

    #[test]
    fn signal_extremes() {
        let mut spec = small();
        spec.shared_signal = SignalSharing::Fixed(1.0);
        let fam = generate_task_family(5, &spec).unwrap();
        let d = fam.dataset(0, Split::Train).unwrap();
        let t = &fam.tasks[0];
        for e in &d.examples {
            assert!(e.tokens.iter().all(|tok| !t.private_lexicon.contains(tok)));
            assert!(e.tokens.iter().any(|tok| t.shared_lexicon.contains(tok)));
        }
        spec.shared_signal = SignalSharing::Fixed(0.0);
        let fam = generate_task_family(5, &spec).unwrap();
        let d = fam.dataset(1, Split::Train).unwrap();
        for e in &d.examples {
            assert!(e.tokens.iter().all(|tok| !fam.tasks[1].shared_lexicon.contains(tok)));
        }
    }

    #[test]
    fn labels_balanced_and_splits_disjoint() {
        let fam = generate_task_family(9, &small()).unwrap();
        let train = fam.dataset(0, Split::Train).unwrap();
        let test = fam.dataset(0, Split::Test).unwrap();
        assert_eq!(train.label_counts(), [100, 100]);
        assert_eq!(test.label_counts(), [50, 50]);
        let seen: HashSet<&Vec<u32>> = train.examples.iter().map(|e| &e.tokens).collect();
        assert!(test.examples.iter().all(|e| !seen.contains(&e.tokens)));
    }

    #[test]
    fn config_errors() {
        let mut spec = small();
        spec.private_vocab = 3;
        assert!(matches!(generate_task_family(0, &spec), Err(Error::Config(_))));
        let mut spec = small();
        spec.sentiment_tokens = 9;
        assert!(generate_task_family(0, &spec).is_err());
        let mut spec = small();
        spec.shared_signal = SignalSharing::PerTask(vec![0.5; 3]);
        assert!(generate_task_family(0, &spec).is_err());
        let fam = generate_task_family(0, &small()).unwrap();
        assert!(generate_dataset(&fam.tasks[0], Split::Train, 7, 0).is_err());
    }

    #[test]
    fn embedding_properties() {
        let fam = generate_task_family(2, &small()).unwrap();
        for t in 0..fam.table.vocab() as u32 {
            let n: f64 = fam.table.vector(t).unwrap().iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
        let d = fam.dataset(1, Split::Test).unwrap();
        let a = embed(&d, &fam.table, 32).unwrap();
        let b = embed(&d, &fam.table, 32).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].x.shape(), &[32, 8, 32]);
        assert_eq!(a.last().unwrap().x.shape()[0], 100 % 32);
        assert!(matches!(
            fam.table.vector(fam.table.vocab() as u32),
            Err(Error::Vocab(_))
        ));
    }

    #[test]
    fn jsonl_and_table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let fam = generate_task_family(2, &small()).unwrap();
        let d = fam.dataset(3, Split::Train).unwrap();
        let path = dir.path().join("d.jsonl");
        d.write_jsonl(&path).unwrap();
        let first = std::fs::read_to_string(&path).unwrap();
        let line: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
        assert!(line["tokens"].is_array() && line["label"].is_u64());
        assert_eq!(Dataset::read_jsonl(&path, 3, Split::Train).unwrap(), d);
        let back = EmbeddingTable::from_json(&fam.table.to_json().unwrap()).unwrap();
        assert_eq!(back, fam.table);
    }
}
