use crate::data::Dataset;
use crate::error::{Error, Result};

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Training points sorted by distance to each query, ties by index.
pub struct Neighbours {
    order: Vec<Vec<usize>>,
}

impl Neighbours {
    /// Keeps the `k_max` nearest neighbours of every query. With `self_match`
    /// the queries are the training points and each skips its own entry.
    pub fn build(train: &[Vec<f64>], queries: &[Vec<f64>], k_max: usize, self_match: bool) -> Self {
        let order = queries
            .iter()
            .enumerate()
            .map(|(qi, q)| {
                let mut d: Vec<(f64, usize)> = train
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| !(self_match && i == qi))
                    .map(|(i, t)| (sq_dist(q, t), i))
                    .collect();
                d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                d.into_iter().take(k_max).map(|(_, i)| i).collect()
            })
            .collect();
        Self { order }
    }

    /// Majority vote of the first `k` neighbours; ties go to the lowest class.
    pub fn vote(&self, query: usize, k: usize, labels: &[usize]) -> usize {
        let mut counts: Vec<usize> = Vec::new();
        for &i in self.order[query].iter().take(k) {
            let c = labels[i];
            if counts.len() <= c {
                counts.resize(c + 1, 0);
            }
            counts[c] += 1;
        }
        let mut best = 0;
        for (c, &n) in counts.iter().enumerate() {
            if n > counts[best] {
                best = c;
            }
        }
        best
    }
}

pub fn knn_predict(train: &[Vec<f64>], labels: &[usize], query: &[f64], k: usize) -> usize {
    Neighbours::build(train, &[query.to_vec()], k, false).vote(0, k, labels)
}

/// Accuracy for every `k` in `ks`. Without test points the training set is
/// scored leave-one-out.
pub fn knn_accuracies(
    train: &[Vec<f64>],
    train_labels: &[usize],
    test: Option<(&[Vec<f64>], &[usize])>,
    ks: &[usize],
) -> Result<Vec<f64>> {
    if ks.contains(&0) {
        return Err(Error::Domain("K must be at least 1".into()));
    }
    if train.len() != train_labels.len() || train.is_empty() {
        return Err(Error::Dimension(format!(
            "{} points with {} labels",
            train.len(),
            train_labels.len()
        )));
    }
    let k_max = ks.iter().copied().max().unwrap_or(1);
    let (queries, truth, self_match) = match test {
        Some((p, l)) => {
            if p.len() != l.len() || p.is_empty() {
                return Err(Error::Dimension(format!(
                    "{} test points with {} labels",
                    p.len(),
                    l.len()
                )));
            }
            (p, l, false)
        }
        None => (train, train_labels, true),
    };
    let nb = Neighbours::build(train, queries, k_max, self_match);
    Ok(ks
        .iter()
        .map(|&k| {
            let hits = (0..queries.len())
                .filter(|&q| nb.vote(q, k, train_labels) == truth[q])
                .count();
            hits as f64 / queries.len() as f64
        })
        .collect())
}

pub fn knn_accuracy(
    train: &[Vec<f64>],
    train_labels: &[usize],
    test: Option<(&[Vec<f64>], &[usize])>,
    k: usize,
) -> Result<f64> {
    Ok(knn_accuracies(train, train_labels, test, &[k])?[0])
}

/// K-NN accuracy on encoder codes, for each `k` in `ks`.
pub fn knn_on_codes(
    encoder: impl Fn(&[f64]) -> Result<Vec<f64>>,
    train: &Dataset,
    test: Option<&Dataset>,
    ks: &[usize],
) -> Result<Vec<f64>> {
    let labels = train
        .labels()
        .ok_or_else(|| Error::Domain("training set has no labels".into()))?;
    let codes = train
        .points()
        .iter()
        .map(|x| encoder(x))
        .collect::<Result<Vec<_>>>()?;
    match test {
        Some(t) => {
            let tl = t
                .labels()
                .ok_or_else(|| Error::Domain("test set has no labels".into()))?;
            let tc = t
                .points()
                .iter()
                .map(|x| encoder(x))
                .collect::<Result<Vec<_>>>()?;
            knn_accuracies(&codes, labels, Some((&tc, tl)), ks)
        }
        None => knn_accuracies(&codes, labels, None, ks),
    }
}
