use taskdrop::model::ModelConfig;
use taskdrop::taskgen::{
    generate_task_family, Dataset, EmbeddingTable, FamilySpec, SignalSharing, Split, TaskFamily,
};
use taskdrop::trainer::{mta_matrix, select_tasks_by_mta, Selection, TrainConfig};

fn spec(tasks: usize, sharing: SignalSharing) -> FamilySpec {
    FamilySpec {
        tasks,
        shared_signal: sharing,
        seq_len: 8,
        sentiment_tokens: 3,
        train_size: 300,
        test_size: 200,
        noise: 0.1,
        embed_dim: 16,
        ..FamilySpec::default()
    }
}

fn model() -> ModelConfig {
    ModelConfig {
        hidden: 16,
        init_scale: 0.3,
        ..ModelConfig::default()
    }
}

fn training() -> TrainConfig {
    TrainConfig {
        learning_rate: 0.3,
        epochs: 12,
        batch_size: 16,
        ..TrainConfig::default()
    }
}

fn bag(data: &Dataset, table: &EmbeddingTable) -> Vec<(Vec<f64>, f64)> {
    data.examples
        .iter()
        .map(|e| {
            let mut v = vec![0.0; table.dim()];
            for &t in &e.tokens {
                for (a, b) in v.iter_mut().zip(table.vector(t).unwrap()) {
                    *a += b;
                }
            }
            (v, f64::from(e.label))
        })
        .collect()
}

/// Logistic regression on summed embeddings, trained by full-batch gradient descent.
fn linear_bag_accuracy(fam: &TaskFamily, task: usize) -> f64 {
    let train = bag(&fam.dataset(task, Split::Train).unwrap(), &fam.table);
    let test = bag(&fam.dataset(task, Split::Test).unwrap(), &fam.table);
    let d = fam.table.dim();
    let (mut w, mut b) = (vec![0.0; d], 0.0);
    for _ in 0..500 {
        let (mut gw, mut gb) = (vec![0.0; d], 0.0);
        for (x, y) in &train {
            let z: f64 = x.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>() + b;
            let err = 1.0 / (1.0 + (-z).exp()) - y;
            gw.iter_mut().zip(x).for_each(|(g, xi)| *g += err * xi);
            gb += err;
        }
        let n = train.len() as f64;
        w.iter_mut().zip(&gw).for_each(|(wi, g)| *wi -= 0.5 * g / n);
        b -= 0.5 * gb / n;
    }
    let correct = test
        .iter()
        .filter(|(x, y)| {
            let z: f64 = x.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>() + b;
            (z > 0.0) == (*y == 1.0)
        })
        .count();
    correct as f64 / test.len() as f64
}

#[test]
fn noiseless_tasks_are_linearly_learnable() {
    let s = FamilySpec {
        noise: 0.0,
        tasks: 3,
        ..FamilySpec::default()
    };
    let fam = generate_task_family(21, &s).unwrap();
    for t in 0..3 {
        let acc = linear_bag_accuracy(&fam, t);
        assert!(acc >= 0.95, "task {t}: linear bag-of-embeddings accuracy {acc}");
    }
}

#[test]
fn duplicated_task_transfers_like_itself() {
    let mut fam = generate_task_family(3, &spec(2, SignalSharing::Fixed(0.5))).unwrap();
    let mut twin = fam.tasks[0].clone();
    twin.task_id = 1;
    fam.tasks[1] = twin;
    let m = mta_matrix(&fam, &model(), &training(), 0).unwrap();
    let self_acc = 0.5 * (m.get(0, 0) + m.get(1, 1));
    assert!(self_acc > 0.75, "tasks were not learned: {:?}", m.0);
    assert!((m.get(0, 1) - self_acc).abs() <= 0.05, "{:?}", m.0);
}

#[test]
fn disjoint_vocabularies_transfer_at_chance() {
    let s = FamilySpec {
        test_size: 1000,
        ..spec(2, SignalSharing::Fixed(0.0))
    };
    let fam = generate_task_family(4, &s).unwrap();
    let m = mta_matrix(&fam, &model(), &training(), 0).unwrap();
    assert!(m.get(0, 0) > 0.75 && m.get(1, 1) > 0.75, "{:?}", m.0);
    assert!((m.get(0, 1) - 0.5).abs() <= 0.05, "{:?}", m.0);
    assert_eq!(m.get(0, 1), m.get(1, 0));
}

fn mean_mta(sigma: f64, seed: u64) -> f64 {
    let fam = generate_task_family(seed, &spec(3, SignalSharing::Fixed(sigma))).unwrap();
    mta_matrix(&fam, &model(), &training(), seed).unwrap().mean_off_diagonal()
}

#[test]
fn similarity_knob_orders_mutual_transfer() {
    let seeds = 0..5u64;
    let avg = |sigma: f64| seeds.clone().map(|s| mean_mta(sigma, s)).sum::<f64>() / 5.0;
    let (lo, mid, hi) = (avg(0.1), avg(0.5), avg(0.9));
    assert!(lo <= mid && mid <= hi, "MTA not monotone: {lo} {mid} {hi}");
    assert!(hi - lo >= 0.1, "MTA gap too small: {lo} vs {hi}");
}

#[test]
fn highest_selection_recovers_the_similar_tier() {
    let sigmas: Vec<f64> = (0..12).map(|t| [0.1, 0.5, 0.95][t % 3]).collect();
    let fam = generate_task_family(8, &spec(12, SignalSharing::PerTask(sigmas.clone()))).unwrap();
    let m = mta_matrix(&fam, &model(), &training(), 1).unwrap();
    let picked = select_tasks_by_mta(&m, 4, Selection::Highest).unwrap();
    let tier: Vec<usize> = (0..12).filter(|t| sigmas[*t] == 0.95).collect();
    assert_eq!(picked, tier, "{:?}", m.0);
}
