//! Dense helpers for the small matrices the sampler adapts (one row and
//! column per fixed coefficient).

/// Lower Cholesky factor of a row-major symmetric positive-definite matrix.
/// Returns `None` when a pivot is not positive.
pub fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// `out = L z` for a lower-triangular row-major `L`.
pub fn lower_mul(l: &[f64], z: &[f64], out: &mut [f64]) {
    let n = z.len();
    for i in 0..n {
        out[i] = (0..=i).map(|k| l[i * n + k] * z[k]).sum();
    }
}

/// Running mean and covariance (Welford) of vectors of fixed length.
#[derive(Clone, Debug)]
pub struct RunningCovariance {
    n: usize,
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl RunningCovariance {
    pub fn new(n: usize) -> Self {
        Self { n, count: 0, mean: vec![0.0; n], m2: vec![0.0; n * n] }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn reset(&mut self) {
        self.count = 0;
        self.mean.iter_mut().for_each(|v| *v = 0.0);
        self.m2.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let c = self.count as f64;
        let delta: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        for (m, d) in self.mean.iter_mut().zip(&delta) {
            *m += d / c;
        }
        for i in 0..self.n {
            let di = delta[i];
            for j in 0..self.n {
                self.m2[i * self.n + j] += di * (x[j] - self.mean[j]);
            }
        }
    }

    /// Sample covariance (denominator `count - 1`).
    pub fn covariance(&self) -> Option<Vec<f64>> {
        if self.count < 2 {
            return None;
        }
        let d = (self.count - 1) as f64;
        Some(self.m2.iter().map(|v| v / d).collect())
    }
}
