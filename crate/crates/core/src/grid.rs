//! Sampled functions on the triangle `0 ≤ y ≤ x ≤ 1` and on `[0, 1]`.

use std::ops::{Index, IndexMut};

/// Values on the nodes `(x_i, y_j) = (i/n, j/n)`, `0 ≤ j ≤ i ≤ n`, stored row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleGrid {
    n: usize,
    data: Vec<f64>,
}

#[inline]
fn offset(i: usize) -> usize {
    i * (i + 1) / 2
}

impl TriangleGrid {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; offset(n + 1)],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let h = 1.0 / n as f64;
        let mut grid = Self::zeros(n);
        for i in 0..=n {
            for j in 0..=i {
                grid[(i, j)] = f(i as f64 * h, j as f64 * h);
            }
        }
        grid
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn step(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Row `i` holds the nodes `(x_i, y_0..=y_i)`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[offset(i)..offset(i + 1)]
    }

    /// Iterates `(i, j, value)` in storage order.
    pub fn nodes(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..=self.n).flat_map(move |i| (0..=i).map(move |j| (i, j, self[(i, j)])))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Values along the edge `x = 1`, indexed by `j`.
    pub fn last_row(&self) -> &[f64] {
        self.row(self.n)
    }

    /// Piecewise-linear interpolation at a point of the triangle.
    ///
    /// Square cells use bilinear weights; cells cut by the diagonal use the
    /// linear interpolant on their lower triangle.
    pub fn interpolate(&self, x: f64, y: f64) -> f64 {
        let n = self.n;
        let s = x.clamp(0.0, 1.0) * n as f64;
        let t = y.clamp(0.0, x.clamp(0.0, 1.0)) * n as f64;
        let i = (s.floor() as usize).min(n - 1);
        let j = (t.floor() as usize).min(i);
        let fx = s - i as f64;
        let fy = t - j as f64;
        if j < i {
            let v00 = self[(i, j)];
            let v10 = self[(i + 1, j)];
            let v01 = self[(i, j + 1)];
            let v11 = self[(i + 1, j + 1)];
            (1.0 - fx) * ((1.0 - fy) * v00 + fy * v01) + fx * ((1.0 - fy) * v10 + fy * v11)
        } else {
            // lower triangle (i,i), (i+1,i), (i+1,i+1); fy ≤ fx here
            let fy = fy.min(fx);
            let v00 = self[(i, i)];
            let v10 = self[(i + 1, i)];
            let v11 = self[(i + 1, i + 1)];
            v00 + fx * (v10 - v00) + fy * (v11 - v10)
        }
    }

    /// Resamples onto a triangle of resolution `m`.
    pub fn resample(&self, m: usize) -> Self {
        if m == self.n {
            return self.clone();
        }
        Self::from_fn(m, |x, y| self.interpolate(x, y))
    }
}

impl Index<(usize, usize)> for TriangleGrid {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(j <= i && i <= self.n);
        &self.data[offset(i) + j]
    }
}

impl IndexMut<(usize, usize)> for TriangleGrid {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(j <= i && i <= self.n);
        &mut self.data[offset(i) + j]
    }
}

/// Composite trapezoid rule for uniformly spaced samples.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        len => {
            let inner: f64 = values[1..len - 1].iter().sum();
            h * (inner + 0.5 * (values[0] + values[len - 1]))
        }
    }
}

/// Linear interpolation of samples on the uniform grid of `[0, 1]`.
pub fn interp_uniform(values: &[f64], x: f64) -> f64 {
    let n = values.len() - 1;
    let s = x.clamp(0.0, 1.0) * n as f64;
    let i = (s.floor() as usize).min(n - 1);
    let f = s - i as f64;
    (1.0 - f) * values[i] + f * values[i + 1]
}

/// Resamples uniform samples on `[0, 1]` onto `m + 1` points.
pub fn resample_uniform(values: &[f64], m: usize) -> Vec<f64> {
    if values.len() == m + 1 {
        return values.to_vec();
    }
    (0..=m)
        .map(|k| interp_uniform(values, k as f64 / m as f64))
        .collect()
}
