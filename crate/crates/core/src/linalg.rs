//! Small dense symmetric solves for the weighted normal equations.

/// Diagonal shift applied when the plain factorization breaks down.
pub const RIDGE: f64 = 1e-8;

/// Pivots below this fraction of the largest diagonal entry count as zero.
const PIVOT_RTOL: f64 = 1e-10;

/// How a symmetric system was solved.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveRoute {
    Cholesky,
    Ridge,
}

/// Square matrix stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        DenseMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    #[inline]
    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn max_abs_diag(&self) -> f64 {
        (0..self.n)
            .map(|i| self.get(i, i).abs())
            .fold(0.0, f64::max)
    }

    /// ‖A − Aᵀ‖ measured entrywise.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }
}

/// Lower-triangular Cholesky factor, or `None` when a pivot falls under
/// `threshold`.
fn cholesky(a: &DenseMatrix, shift: f64, threshold: f64) -> Option<Vec<f64>> {
    let n = a.n;
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a.get(j, j) + shift;
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if d.is_nan() || d <= threshold {
            return None;
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    Some(l)
}

fn substitute(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

/// Solves `A x = b` for symmetric `A`. Falls back to `A + RIDGE·I` when the
/// plain factorization fails; returns `None` if that fails too.
pub fn solve_symmetric(a: &DenseMatrix, b: &[f64]) -> Option<(Vec<f64>, SolveRoute)> {
    assert_eq!(a.n, b.len());
    let scale = a.max_abs_diag();
    if scale.is_nan() || scale <= 0.0 {
        return None;
    }
    let threshold = PIVOT_RTOL * scale;
    if let Some(l) = cholesky(a, 0.0, threshold) {
        return Some((substitute(&l, a.n, b), SolveRoute::Cholesky));
    }
    let l = cholesky(a, RIDGE, threshold)?;
    Some((substitute(&l, a.n, b), SolveRoute::Ridge))
}
