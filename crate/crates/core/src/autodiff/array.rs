use std::fmt;

use rand::Rng;

/// Dense row-major f64 matrix. Vectors are 1×d rows, scalars are 1×1.
#[derive(Clone, PartialEq)]
pub struct Array {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Array {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Array { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Array { rows, cols, data: vec![value; rows * cols] }
    }

    /// Build from a flat row-major buffer. Panics if the length does not
    /// match `rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            rows * cols,
            data.len(),
            "array shape [{rows}, {cols}] does not match buffer length {}",
            data.len()
        );
        Array { rows, cols, data }
    }

    /// A 1×d row vector.
    pub fn row(data: Vec<f64>) -> Self {
        let cols = data.len();
        Array { rows: 1, cols, data }
    }

    /// A 1×1 scalar.
    pub fn scalar(value: f64) -> Self {
        Array { rows: 1, cols: 1, data: vec![value] }
    }

    /// Uniform sample in [lo, hi) per entry.
    pub fn random_uniform<R: Rng>(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect();
        Array { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// The single value of a 1×1 array.
    pub fn scalar_value(&self) -> f64 {
        assert_eq!(self.shape(), [1, 1], "scalar_value on shape {:?}", self.shape());
        self.data[0]
    }

    pub fn row_slice(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Array {
        Array {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Index of the maximum entry in each row; ties go to the lower column.
    pub fn row_argmax(&self) -> Vec<usize> {
        (0..self.rows)
            .map(|i| {
                let row = self.row_slice(i);
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    /// Largest absolute elementwise difference.
    pub fn max_abs_diff(&self, other: &Array) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl fmt::Debug for Array {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Array[{}x{}]", self.rows, self.cols)?;
        if self.data.len() <= 12 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_matches_buffer() {
        let a = Array::from_vec(2, 3, vec![1., 2., 3., 4., 5., 6.]);
        assert_eq!(a.shape(), [2, 3]);
        assert_eq!(a.len(), 6);
        assert_eq!(a.get(1, 2), 6.0);
    }

    #[test]
    #[should_panic(expected = "does not match buffer length")]
    fn mismatched_buffer_rejected() {
        let _ = Array::from_vec(2, 2, vec![1., 2., 3.]);
    }

    #[test]
    fn row_argmax_ties_to_lower_index() {
        let a = Array::from_vec(2, 3, vec![1., 3., 3., 0., 0., 0.]);
        assert_eq!(a.row_argmax(), vec![1, 0]);
    }
}
