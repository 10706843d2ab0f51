use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Test accuracy on task τ after training through task t, for τ ≤ t.
///
/// Both indices are 1-based stream positions. Row `t` holds `t` entries;
/// rows may be left empty when a run only evaluates some checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMatrix {
    rows: Vec<Option<Vec<f64>>>,
}

impl AccuracyMatrix {
    pub fn new(tasks: usize) -> Self {
        AccuracyMatrix {
            rows: vec![None; tasks],
        }
    }

    /// Builds a matrix from JSON-style rows (`None` for unevaluated rows).
    pub fn from_rows(rows: Vec<Option<Vec<f64>>>) -> Result<Self> {
        let mut m = AccuracyMatrix::new(rows.len());
        for (i, row) in rows.into_iter().enumerate() {
            if let Some(r) = row {
                m.set_row(i + 1, r)?;
            }
        }
        Ok(m)
    }

    pub fn tasks(&self) -> usize {
        self.rows.len()
    }

    pub fn set_row(&mut self, t: usize, row: Vec<f64>) -> Result<()> {
        if t == 0 || t > self.rows.len() {
            return Err(Error::Data(format!("row {t} outside matrix of {} tasks", self.rows.len())));
        }
        if row.len() != t {
            return Err(Error::Data(format!("row {t} needs {t} entries, got {}", row.len())));
        }
        if row.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::Data("accuracies must lie in [0, 1]".into()));
        }
        self.rows[t - 1] = Some(row);
        Ok(())
    }

    pub fn row(&self, t: usize) -> Option<&[f64]> {
        self.rows.get(t.checked_sub(1)?)?.as_deref()
    }

    pub fn get(&self, tau: usize, t: usize) -> Option<f64> {
        self.row(t)?.get(tau.checked_sub(1)?).copied()
    }

    pub fn is_complete(&self) -> bool {
        self.rows.iter().all(Option::is_some)
    }

    pub fn rows(&self) -> &[Option<Vec<f64>>] {
        &self.rows
    }
}

fn complete_row(matrix: &AccuracyMatrix, t: usize) -> Result<&[f64]> {
    matrix
        .row(t)
        .ok_or_else(|| Error::Data(format!("row {t} of the accuracy matrix is not filled")))
}

/// Mean accuracy over the first `t` tasks after training `t` tasks.
pub fn averaged_accuracy(matrix: &AccuracyMatrix, t: usize) -> Result<f64> {
    let row = complete_row(matrix, t)?;
    Ok(row.iter().sum::<f64>() / t as f64)
}

/// Forgetting ratio after `t` tasks, in percent.
///
/// Each task's accuracy is rescaled so that the random-guess accuracy
/// `random[τ]` maps to −100 and the joint-training accuracy `joint[τ]`
/// (measured after the same `t` tasks) maps to 0; the result is the mean
/// over `τ ≤ t`.
pub fn forgetting_ratio(matrix: &AccuracyMatrix, t: usize, random: &[f64], joint: &[f64]) -> Result<f64> {
    let row = complete_row(matrix, t)?;
    if random.len() < t || joint.len() < t {
        return Err(Error::Data(format!("reference accuracies cover fewer than {t} tasks")));
    }
    let mut total = 0.0;
    for tau in 0..t {
        let span = joint[tau] - random[tau];
        if span <= 0.0 {
            return Err(Error::DegenerateDenominator(format!(
                "task {}: joint accuracy {} does not exceed random {}",
                tau + 1,
                joint[tau],
                random[tau]
            )));
        }
        total += (row[tau] - random[tau]) / span - 1.0;
    }
    Ok(100.0 * total / t as f64)
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregate of one metric at one scope over several runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScopeStats {
    pub t: usize,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

/// `A^{≤t}` (fraction) and `ρ^{≤t}` (percent) aggregated over runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: Vec<ScopeStats>,
    pub forgetting: Vec<ScopeStats>,
}

impl MetricsReport {
    /// Aggregates runs at each scope in `scopes`. `joint[i]` is the joint
    /// reference matrix for `runs[i]`; forgetting is skipped without it.
    pub fn from_runs(
        runs: &[&AccuracyMatrix],
        joint: Option<&[&AccuracyMatrix]>,
        random: &[f64],
        scopes: &[usize],
    ) -> Result<Self> {
        let mut accuracy = Vec::new();
        let mut forgetting = Vec::new();
        for &t in scopes {
            let a: Vec<f64> = runs.iter().map(|m| averaged_accuracy(m, t)).collect::<Result<_>>()?;
            let (mean, std) = mean_std(&a);
            accuracy.push(ScopeStats {
                t,
                mean,
                std,
                runs: a.len(),
            });
            if let Some(joint) = joint {
                let r: Vec<f64> = runs
                    .iter()
                    .zip(joint)
                    .map(|(m, j)| forgetting_ratio(m, t, random, complete_row(j, t)?))
                    .collect::<Result<_>>()?;
                let (mean, std) = mean_std(&r);
                forgetting.push(ScopeStats {
                    t,
                    mean,
                    std,
                    runs: r.len(),
                });
            }
        }
        Ok(MetricsReport { accuracy, forgetting })
    }
}
