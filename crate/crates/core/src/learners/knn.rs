use serde::{Deserialize, Serialize};

use super::LearnError;
use crate::data::Matrix;
use crate::scalar::Scalar;

pub const DEFAULT_NEIGHBOURS: usize = 5;

/// Stored training set; prediction is a majority vote among the nearest rows
/// by Euclidean distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct KnnModel<T> {
    x: Matrix<T>,
    y: Vec<u8>,
    neighbours: usize,
}

fn combine<T: Scalar>(acc: &[T; 8], tail: T) -> T {
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Squared Euclidean distance, accumulated in eight lanes so it vectorizes.
///
/// With a `bound`, gives up and returns `None` as soon as the partial sum
/// reaches it. Lanes only grow, so a partial sum never exceeds the full one
/// and the early exit cannot change which rows are nearest.
fn sq_dist<T: Scalar>(a: &[T], b: &[T], bound: Option<T>) -> Option<T> {
    let mut acc = [T::zero(); 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        for l in 0..8 {
            let d = a[c * 8 + l] - b[c * 8 + l];
            acc[l] = acc[l] + d * d;
        }
        if let Some(bound) = bound {
            if c % 2 == 1 && combine(&acc, T::zero()) >= bound {
                return None;
            }
        }
    }
    let mut tail = T::zero();
    for i in chunks * 8..a.len() {
        let d = a[i] - b[i];
        tail = tail + d * d;
    }
    let d = combine(&acc, tail);
    match bound {
        Some(bound) if d >= bound => None,
        _ => Some(d),
    }
}

impl<T: Scalar> KnnModel<T> {
    pub fn fit(x: Matrix<T>, y: Vec<u8>, neighbours: usize) -> Result<Self, LearnError> {
        super::check_xy(&x, &y)?;
        if neighbours == 0 || neighbours > x.rows() {
            return Err(LearnError::InvalidConfig(format!(
                "neighbour count {neighbours} must be in 1..={}",
                x.rows()
            )));
        }
        Ok(Self { x, y, neighbours })
    }

    pub fn neighbours(&self) -> usize {
        self.neighbours
    }

    pub fn training_rows(&self) -> usize {
        self.x.rows()
    }

    /// Indices of the nearest training rows, nearest first; equal distances
    /// go to the lower index.
    pub fn nearest(&self, query: &[T]) -> Vec<usize> {
        let k = self.neighbours;
        let mut best: Vec<(T, usize)> = Vec::with_capacity(k + 1);
        for i in 0..self.x.rows() {
            let bound = (best.len() == k).then(|| best[k - 1].0);
            let Some(d) = sq_dist(self.x.row(i), query, bound) else { continue };
            // insert after every entry with distance <= d, which keeps lower indices first
            let pos = best.partition_point(|&(bd, _)| bd <= d);
            best.insert(pos, (d, i));
            best.truncate(k);
        }
        best.into_iter().map(|(_, i)| i).collect()
    }

    fn vote(&self, nearest: &[usize]) -> u8 {
        let ones = nearest.iter().filter(|&&i| self.y[i] == 1).count();
        let zeros = nearest.len() - ones;
        match ones.cmp(&zeros) {
            std::cmp::Ordering::Greater => 1,
            std::cmp::Ordering::Less => 0,
            std::cmp::Ordering::Equal => self.y[nearest[0]],
        }
    }

    pub fn predict(&self, queries: &Matrix<T>) -> Result<Vec<u8>, LearnError> {
        super::check_width(self.x.cols(), queries.cols())?;
        Ok((0..queries.rows()).map(|r| self.vote(&self.nearest(queries.row(r)))).collect())
    }
}
