use nalgebra::{DMatrix, DVector};

/// Neumaier's compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = NeumaierSum::default();
        for v in iter {
            s.add(v);
        }
        s
    }
}

/// Mean, unbiased sample variance and standard error of the mean.
/// A single value has zero variance.
pub fn mean_stderr(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mean = values.iter().copied().collect::<NeumaierSum>().value() / n as f64;
    if n == 1 {
        return (mean, 0.0, 0.0);
    }
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).collect::<NeumaierSum>().value();
    let var = ss / (n - 1) as f64;
    (mean, var, (var / n as f64).sqrt())
}

/// Regression estimate of `E[y]` using controls `x` with known means `expected`:
/// `ȳ − β̂ᵀ(x̄ − E x)` with `β̂` fitted by least squares on the same samples.
///
/// Returns the estimate, its standard error and `β̂` (zero for controls without
/// spread, which are dropped). `None` when there are too few samples to fit.
pub fn control_variate_mean(y: &[f64], x: &[Vec<f64>], expected: &[f64]) -> Option<(f64, f64, Vec<f64>)> {
    let n = y.len();
    let d = expected.len();
    if x.len() != n || x.iter().any(|row| row.len() != d) {
        return None;
    }
    let (y_mean, _, _) = mean_stderr(y);
    let x_mean: Vec<f64> = (0..d)
        .map(|j| x.iter().map(|row| row[j]).collect::<NeumaierSum>().value() / n as f64)
        .collect();
    let active: Vec<usize> = (0..d)
        .filter(|&j| {
            let spread = x.iter().fold(0.0f64, |m, row| m.max((row[j] - x_mean[j]).abs()));
            spread > 1e-12 * x_mean[j].abs().max(1e-300)
        })
        .collect();
    let p = active.len();
    if n < p + 3 {
        return None;
    }
    let centered = DMatrix::from_fn(n, p, |i, a| x[i][active[a]] - x_mean[active[a]]);
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
    let gram = centered.tr_mul(&centered);
    let chol = gram.clone().cholesky()?;
    let beta = chol.solve(&centered.tr_mul(&yc));
    let shift = DVector::from_iterator(p, active.iter().map(|&j| x_mean[j] - expected[j]));
    let estimate = y_mean - beta.dot(&shift);
    let resid = &yc - &centered * &beta;
    let s2 = resid.norm_squared() / (n - p - 1) as f64;
    let lever = shift.dot(&chol.solve(&shift));
    let stderr = (s2 * (1.0 / n as f64 + lever)).sqrt();
    let mut coefficients = vec![0.0; d];
    for (a, &j) in active.iter().enumerate() {
        coefficients[j] = beta[a];
    }
    Some((estimate, stderr, coefficients))
}
