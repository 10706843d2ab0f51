//! Per-task random unit masks, the per-sample dropout comparator, and
//! skip-task transfer analytics.
//!
//! A task draws one Bernoulli(p) mask per masked layer when it starts. The
//! mask is stored in a [`MaskRegistry`] and reused unchanged for every pass
//! over that task, at training and at evaluation time. Masks are byte
//! vectors of 0/1; they are turned into multiplications only when applied.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Tape, Var};
use crate::rng;

pub type TaskId = usize;

fn check_ratio(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("retention ratio {p} outside [0, 1]")));
    }
    Ok(())
}

fn bernoulli_bytes<R: Rng + ?Sized>(len: usize, p: f64, rng: &mut R) -> Vec<u8> {
    (0..len).map(|_| u8::from(rng.random::<f64>() < p)).collect()
}

/// Binary retention vectors for one task, one per masked layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskMask {
    pub task_id: TaskId,
    pub p: f64,
    pub layer_masks: Vec<Vec<u8>>,
}

impl TaskMask {
    pub fn layer(&self, l: usize) -> &[u8] {
        &self.layer_masks[l]
    }

    pub fn widths(&self) -> Vec<usize> {
        self.layer_masks.iter().map(Vec::len).collect()
    }

    /// Fraction of active units, per layer.
    pub fn retention(&self) -> Vec<f64> {
        self.layer_masks
            .iter()
            .map(|m| m.iter().map(|&b| f64::from(b)).sum::<f64>() / m.len().max(1) as f64)
            .collect()
    }
}

/// Draws a fresh task mask: every entry independently 1 with probability `p`.
pub fn generate_task_mask<R: Rng + ?Sized>(
    task_id: TaskId,
    layer_widths: &[usize],
    p: f64,
    rng: &mut R,
) -> Result<TaskMask> {
    check_ratio(p)?;
    Ok(TaskMask {
        task_id,
        p,
        layer_masks: layer_widths
            .iter()
            .map(|&w| bernoulli_bytes(w, p, rng))
            .collect(),
    })
}

/// Store of task masks, written once per task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskRegistry {
    seed: u64,
    masks: Vec<TaskMask>,
}

impl MaskRegistry {
    pub fn new(seed: u64) -> Self {
        MaskRegistry {
            seed,
            masks: Vec::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    /// Generates and registers the mask for `task_id`.
    ///
    /// The n-th generated mask draws from a stream derived from the registry
    /// seed and n, so a registry replays identically from its seed.
    pub fn generate(&mut self, task_id: TaskId, layer_widths: &[usize], p: f64) -> Result<&TaskMask> {
        if self.get(task_id).is_some() {
            return Err(Error::Registry(format!("task {task_id} already has a mask")));
        }
        let mut rng = rng::rng_for(self.seed, &[rng::TAG_MASKS, self.masks.len() as u64]);
        let mask = generate_task_mask(task_id, layer_widths, p, &mut rng)?;
        self.masks.push(mask);
        Ok(self.masks.last().expect("just pushed"))
    }

    /// Registers an externally built mask.
    pub fn insert(&mut self, mask: TaskMask) -> Result<()> {
        if self.get(mask.task_id).is_some() {
            return Err(Error::Registry(format!(
                "task {} already has a mask",
                mask.task_id
            )));
        }
        if mask.layer_masks.iter().flatten().any(|&b| b > 1) {
            return Err(Error::Domain("mask entries must be 0 or 1".into()));
        }
        check_ratio(mask.p)?;
        self.masks.push(mask);
        Ok(())
    }

    pub fn get(&self, task_id: TaskId) -> Option<&TaskMask> {
        self.masks.iter().find(|m| m.task_id == task_id)
    }

    pub fn require(&self, task_id: TaskId) -> Result<&TaskMask> {
        self.get(task_id)
            .ok_or_else(|| Error::Registry(format!("no mask registered for task {task_id}")))
    }

    /// Masks in registration order.
    pub fn masks(&self) -> &[TaskMask] {
        &self.masks
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let reg: MaskRegistry = serde_json::from_str(s)?;
        let mut check = MaskRegistry::new(reg.seed);
        for m in reg.masks {
            check.insert(m)?;
        }
        Ok(check)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Multiplies `y` (`[batch × n]` or `[n]`) by a task mask of length `n`.
pub fn apply_mask(tape: &mut Tape, y: Var, mask: &[u8]) -> Result<Var> {
    if mask.len() != tape.value(y).last_dim() {
        return Err(Error::Shape(format!(
            "mask length {} does not match output width {}",
            mask.len(),
            tape.value(y).last_dim()
        )));
    }
    tape.apply_mask(y, mask, 1.0)
}

/// A fresh, unregistered Bernoulli(p) mask of `len` entries.
pub fn dropout_mask<R: Rng + ?Sized>(len: usize, p: f64, rng: &mut R) -> Result<Vec<u8>> {
    check_ratio(p)?;
    Ok(bernoulli_bytes(len, p, rng))
}

/// Probability that a unit active for one task is next active exactly `s`
/// tasks later: `(1 − p)^(s−1) · p`.
pub fn skip_transfer_probability(p: f64, s: u32) -> Result<f64> {
    check_ratio(p)?;
    if s < 1 {
        return Err(Error::Domain("skip step s must be at least 1".into()));
    }
    Ok((1.0 - p).powi(s as i32 - 1) * p)
}

/// Skip-transfer events observed for one unit.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UnitTransfer {
    pub layer: usize,
    pub unit: usize,
    /// Tasks (excluding the last) at which the unit was active.
    pub activations: usize,
    /// Number of re-activations at each gap `s`.
    pub events: BTreeMap<u32, usize>,
}

impl UnitTransfer {
    /// Share of activations followed by a re-activation after exactly `s` tasks.
    pub fn frequency(&self, s: u32) -> f64 {
        if self.activations == 0 {
            return 0.0;
        }
        *self.events.get(&s).unwrap_or(&0) as f64 / self.activations as f64
    }
}

/// Empirical skip-task transfer statistics over a registry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferStats {
    pub tasks: usize,
    pub units: Vec<UnitTransfer>,
    /// Events with gap `s`, pooled over units.
    pub events: BTreeMap<u32, usize>,
    /// Activations at tasks `t` with `t + s` still inside the stream.
    pub opportunities: BTreeMap<u32, usize>,
}

impl TransferStats {
    /// Pooled frequency of gap `s`, counting only activations whose `s`-step
    /// successor lies inside the stream so the estimate is not censored.
    pub fn frequency(&self, s: u32) -> f64 {
        match self.opportunities.get(&s) {
            Some(&n) if n > 0 => *self.events.get(&s).unwrap_or(&0) as f64 / n as f64,
            _ => 0.0,
        }
    }

    pub fn total_events(&self) -> usize {
        self.events.values().sum()
    }
}

/// Records, for every unit and every task where it is active, the gap to the
/// unit's next activation.
pub fn empirical_skip_stats(registry: &MaskRegistry) -> Result<TransferStats> {
    let masks = registry.masks();
    let tasks = masks.len();
    if tasks < 2 {
        return Err(Error::InsufficientData(format!(
            "skip statistics need at least 2 tasks, got {tasks}"
        )));
    }
    let widths = masks[0].widths();
    if masks.iter().any(|m| m.widths() != widths) {
        return Err(Error::Shape("task masks have different layer widths".into()));
    }

    let mut units = Vec::new();
    let mut events = BTreeMap::new();
    let mut opportunities: BTreeMap<u32, usize> = BTreeMap::new();
    for (layer, &width) in widths.iter().enumerate() {
        for unit in 0..width {
            let active: Vec<bool> = masks.iter().map(|m| m.layer_masks[layer][unit] == 1).collect();
            let mut record = UnitTransfer {
                layer,
                unit,
                ..Default::default()
            };
            for t in 0..tasks - 1 {
                if !active[t] {
                    continue;
                }
                record.activations += 1;
                for s in 1..(tasks - t) as u32 {
                    *opportunities.entry(s).or_insert(0) += 1;
                }
                if let Some(offset) = active[t + 1..].iter().position(|&a| a) {
                    let s = offset as u32 + 1;
                    *record.events.entry(s).or_insert(0) += 1;
                    *events.entry(s).or_insert(0) += 1;
                }
            }
            units.push(record);
        }
    }
    Ok(TransferStats {
        tasks,
        units,
        events,
        opportunities,
    })
}

/// Fraction of units active in both masks, per layer.
pub fn mask_overlap(a: &TaskMask, b: &TaskMask) -> Result<Vec<f64>> {
    if a.widths() != b.widths() {
        return Err(Error::Shape(format!(
            "mask widths {:?} and {:?} differ",
            a.widths(),
            b.widths()
        )));
    }
    Ok(a.layer_masks
        .iter()
        .zip(&b.layer_masks)
        .map(|(x, y)| {
            let both = x.iter().zip(y).filter(|(&i, &j)| i == 1 && j == 1).count();
            both as f64 / x.len().max(1) as f64
        })
        .collect())
}
