use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

/// k-nearest-neighbour regression on standardized columns. Distance ties
/// are broken by training order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    k: usize,
    mean: Vec<f64>,
    scale: Vec<f64>,
    /// Standardized training rows, row-major.
    train: Vec<f64>,
    y: Vec<f64>,
}

impl KnnModel {
    pub(super) fn fit(x: ArrayView2<'_, f64>, y: &[f64], k: usize) -> Self {
        let (n, p) = x.dim();
        let mut mean = Vec::with_capacity(p);
        let mut scale = Vec::with_capacity(p);
        for col in x.columns() {
            let m = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
            mean.push(m);
            scale.push(if var > 1e-24 { var.sqrt() } else { 1.0 });
        }
        let mut train = Vec::with_capacity(n * p);
        for row in x.outer_iter() {
            for j in 0..p {
                train.push((row[j] - mean[j]) / scale[j]);
            }
        }
        KnnModel { k: k.min(n), mean, scale, train, y: y.to_vec() }
    }

    pub(super) fn predict_row(&self, row: ArrayView1<'_, f64>) -> f64 {
        let p = self.mean.len();
        let z: Vec<f64> = (0..p).map(|j| (row[j] - self.mean[j]) / self.scale[j]).collect();
        let mut d: Vec<(f64, usize)> = self
            .y
            .iter()
            .enumerate()
            .map(|(i, _)| {
                let t = &self.train[i * p..(i + 1) * p];
                (t.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i)
            })
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < d.len() {
            d.select_nth_unstable_by(self.k - 1, cmp);
            d.truncate(self.k);
        }
        d.iter().map(|&(_, i)| self.y[i]).sum::<f64>() / d.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn averages_nearest_neighbours() {
        let x = array![[0.0], [1.0], [2.0], [10.0]];
        let m = KnnModel::fit(x.view(), &[1.0, 2.0, 3.0, 100.0], 2);
        assert_eq!(m.predict_row(array![0.4].view()), 1.5);
        assert_eq!(m.predict_row(array![9.0].view()), (100.0 + 3.0) / 2.0);
    }

    #[test]
    fn k_larger_than_n_uses_all() {
        let x = array![[0.0], [1.0]];
        let m = KnnModel::fit(x.view(), &[1.0, 3.0], 10);
        assert_eq!(m.predict_row(array![5.0].view()), 2.0);
    }
}
