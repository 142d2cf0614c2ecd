//! Two-sample discrepancy between point sets.

use crate::diff::Array;
use crate::error::{Error, Result};

fn mean_pairwise(x: &Array, y: &Array) -> f64 {
    let mut total = 0.0;
    for i in 0..x.rows() {
        let a = x.row(i);
        let mut row = 0.0;
        for j in 0..y.rows() {
            row += a
                .iter()
                .zip(y.row(j))
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
                .sqrt();
        }
        total += row;
    }
    total / (x.rows() * y.rows()) as f64
}

/// Energy distance `2 E|X - Y| - E|X - X'| - E|Y - Y'|` between the rows of
/// `x` and `y`, with all expectations taken as plain means over every pair
/// (diagonal included), so identical sets give exactly 0 and the value is
/// never negative.
pub fn energy_distance(x: &Array, y: &Array) -> Result<f64> {
    if x.rank() != 2 || y.rank() != 2 || x.cols() != y.cols() {
        return Err(Error::InvalidArgument(format!(
            "energy distance needs two N x D sets, got {:?} and {:?}",
            x.shape(),
            y.shape()
        )));
    }
    if x.rows() == 0 || y.rows() == 0 {
        return Err(Error::InvalidArgument(
            "energy distance of an empty set".into(),
        ));
    }
    let xy = mean_pairwise(x, y);
    let xx = mean_pairwise(x, x);
    let yy = mean_pairwise(y, y);
    Ok((2.0 * xy - xx - yy).max(0.0))
}
