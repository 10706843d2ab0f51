use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{accuracy, train_task, TrainConfig};
use crate::error::{Error, Result};
use crate::masking::TaskId;
use crate::model::{Model, ModelConfig, ModelVariant};
use crate::taskgen::{Split, TaskFamily};

/// Symmetric pairwise mutual transfer accuracy; the diagonal holds each
/// single-task model's accuracy on its own task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MtaMatrix(pub Vec<Vec<f64>>);

impl MtaMatrix {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[i][j]
    }

    /// Sum of row `i` without the diagonal.
    pub fn off_diagonal_sum(&self, i: usize) -> f64 {
        self.0[i].iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| v).sum()
    }

    /// Mean over all off-diagonal entries.
    pub fn mean_off_diagonal(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return f64::NAN;
        }
        (0..n).map(|i| self.off_diagonal_sum(i)).sum::<f64>() / (n * (n - 1)) as f64
    }

    /// Symmetrizes a raw cross-accuracy table `cross[i][j]` (trained on
    /// `i`, tested on `j`).
    pub fn from_cross(cross: &[Vec<f64>]) -> Result<Self> {
        let n = cross.len();
        if cross.iter().any(|r| r.len() != n) {
            return Err(Error::Shape("cross-accuracy table must be square".into()));
        }
        Ok(MtaMatrix(
            (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| if i == j { cross[i][i] } else { 0.5 * (cross[i][j] + cross[j][i]) })
                        .collect()
                })
                .collect(),
        ))
    }
}

/// Trains one single-task model per task and scores every ordered pair.
pub fn mta_matrix(family: &TaskFamily, model: &ModelConfig, train: &TrainConfig, seed: u64) -> Result<MtaMatrix> {
    if family.len() < 2 {
        return Err(Error::Domain("mutual transfer needs at least two tasks".into()));
    }
    let tests = (0..family.len())
        .map(|t| family.dataset(t, Split::Test))
        .collect::<Result<Vec<_>>>()?;
    let cross = (0..family.len())
        .into_par_iter()
        .map(|i| {
            let mut m = Model::new(ModelVariant::NoMasking, model.clone(), &family.table, seed)?;
            train_task(&mut m, i, &family.dataset(i, Split::Train)?, train)?;
            tests
                .iter()
                .map(|d| accuracy(&m, i, d, train.eval_batch_size))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    MtaMatrix::from_cross(&cross)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    Highest,
    Lowest,
}

/// The `k` tasks with the largest or smallest off-diagonal MTA row sum,
/// ties going to the lower index. Returned in ascending task order.
pub fn select_tasks_by_mta(matrix: &MtaMatrix, k: usize, mode: Selection) -> Result<Vec<TaskId>> {
    let n = matrix.len();
    if k > n {
        return Err(Error::Domain(format!("cannot select {k} of {n} tasks")));
    }
    let sums: Vec<f64> = (0..n).map(|i| matrix.off_diagonal_sum(i)).collect();
    let mut ranked: Vec<TaskId> = (0..n).collect();
    ranked.sort_by(|&a, &b| {
        let ord = sums[a].total_cmp(&sums[b]);
        let ord = if mode == Selection::Highest { ord.reverse() } else { ord };
        ord.then(a.cmp(&b))
    });
    let mut picked = ranked[..k].to_vec();
    picked.sort_unstable();
    Ok(picked)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(n: usize, v: f64) -> Vec<Vec<f64>> {
        vec![vec![v; n]; n]
    }

    #[test]
    fn symmetric_by_construction() {
        let cross = vec![vec![0.9, 0.6, 0.7], vec![0.8, 0.95, 0.5], vec![0.55, 0.65, 0.9]];
        let m = MtaMatrix::from_cross(&cross).unwrap();
        for i in 0..3 {
            assert_eq!(m.get(i, i), cross[i][i]);
            for j in 0..3 {
                assert_eq!(m.get(i, j), m.get(j, i));
            }
        }
        assert_eq!(m.get(0, 1), 0.7);
    }

    #[test]
    fn select_all_is_identity() {
        let m = MtaMatrix(uniform(4, 0.7));
        assert_eq!(select_tasks_by_mta(&m, 4, Selection::Highest).unwrap(), vec![0, 1, 2, 3]);
        assert!(matches!(select_tasks_by_mta(&m, 5, Selection::Lowest), Err(Error::Domain(_))));
    }

    #[test]
    fn lowest_picks_the_outlier() {
        let mut rows = uniform(4, 0.8);
        for j in 0..4 {
            rows[2][j] = 0.5;
            rows[j][2] = 0.5;
        }
        let m = MtaMatrix(rows);
        assert_eq!(select_tasks_by_mta(&m, 1, Selection::Lowest).unwrap(), vec![2]);
        assert_eq!(select_tasks_by_mta(&m, 1, Selection::Highest).unwrap(), vec![0]);
    }
}
