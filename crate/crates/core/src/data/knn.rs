//! Exhaustive k-nearest-neighbour baseline in scaled-RSSI space.

use crate::data::dataset::Dataset;
use crate::error::{Error, Result};
use crate::eval::Estimate;

/// Majority vote for building and floor (ties to the smallest id) and the
/// unweighted centroid of the neighbours' coordinates.
pub fn knn_oracle(train: &Dataset, query: &[f64], k: usize) -> Result<Estimate> {
    if k == 0 || k > train.len() {
        return Err(Error::Data(format!("k = {k} with {} training records", train.len())));
    }
    if query.len() != train.width {
        return Err(Error::Shape(format!(
            "query has {} features, training data {}",
            query.len(),
            train.width
        )));
    }
    let mut dist: Vec<(f64, usize)> = (0..train.len())
        .map(|i| {
            let d: f64 = train
                .feature_row(i)
                .iter()
                .zip(query)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (d, i)
        })
        .collect();
    dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let nn = &dist[..k];
    let vote = |labels: &[usize], classes: usize| {
        let mut counts = vec![0usize; classes];
        nn.iter().for_each(|&(_, i)| counts[labels[i]] += 1);
        // max_by_key returns the last maximum; scan manually for the first.
        let mut best = 0;
        for (c, &n) in counts.iter().enumerate() {
            if n > counts[best] {
                best = c;
            }
        }
        best
    };
    let mut coords = [0.0; 2];
    for &(_, i) in nn {
        coords[0] += train.coords[i][0];
        coords[1] += train.coords[i][1];
    }
    Ok(Estimate {
        building: vote(&train.buildings, train.site.buildings()),
        floor: vote(&train.floors, train.site.floors()),
        coords: coords.map(|c| c / k as f64),
    })
}

pub fn knn_predict(train: &Dataset, queries: &Dataset, k: usize) -> Result<Vec<Estimate>> {
    (0..queries.len())
        .map(|i| knn_oracle(train, queries.feature_row(i), k))
        .collect()
}
