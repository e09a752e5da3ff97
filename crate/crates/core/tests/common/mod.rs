//! Reference computations that share no code with the library: adaptive Simpson
//! integration against the Gaussian density and plain bisection.
#![allow(dead_code)]

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const CUTOFF: f64 = 14.0;

fn simpson_rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, eps: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1)
}

/// `∫_a^b f` by adaptive Simpson with absolute tolerance `eps`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, eps: f64) -> f64 {
    let f = &f as &dyn Fn(f64) -> f64;
    // split first so that the recursion never starts from a coarse, lucky estimate
    let pieces = 56;
    let w = (b - a) / pieces as f64;
    (0..pieces)
        .map(|i| {
            let lo = a + w * i as f64;
            let hi = lo + w;
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
            simpson_rec(f, lo, hi, fa, fm, fb, whole, eps / pieces as f64, 40)
        })
        .sum()
}

/// `E g(z)` for `z ~ N(0,1)`.
pub fn gauss_expect(g: impl Fn(f64) -> f64) -> f64 {
    integrate(|z| g(z) * (-0.5 * z * z).exp() * INV_SQRT_2PI, -CUTOFF, CUTOFF, 1e-14)
}

fn log_2cosh(y: f64) -> f64 {
    let a = y.abs();
    a + (-2.0 * a).exp().ln_1p()
}

pub fn psi(x: f64) -> f64 {
    let s = x.sqrt();
    gauss_expect(|z| log_2cosh(z * s + x))
}

pub fn big_f(h: f64) -> f64 {
    let s = h.sqrt();
    gauss_expect(|z| (z * s + h).tanh())
}

/// Root of an increasing function on `[lo, hi]`.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    assert!(f(lo) <= 0.0 && f(hi) >= 0.0, "bisection bracket does not straddle the root");
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Direct transcription of the variational pressure with the oracle `ψ`.
pub fn p_var(alpha: &[f64], mu: &[f64], h: &[f64], x: &[f64]) -> f64 {
    let k = alpha.len();
    let mut total = 0.0;
    for r in 0..k {
        let mut field = h[r];
        if r > 0 {
            field += mu[r - 1] * alpha[r - 1] * x[r - 1];
        }
        if r + 1 < k {
            field += mu[r] * alpha[r + 1] * x[r + 1];
        }
        total += alpha[r] * psi(field);
    }
    for r in 0..k - 1 {
        let d = alpha[r] * mu[r] * alpha[r + 1];
        total += 0.5 * d * ((1.0 - x[r]) * (1.0 - x[r + 1]) - 2.0 * x[r] * x[r + 1]);
    }
    total
}

/// Deterministic pseudo-random numbers for choosing test inputs.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next_f64(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform point on the simplex with `k` vertices.
    pub fn simplex(&mut self, k: usize) -> Vec<f64> {
        let e: Vec<f64> = (0..k).map(|_| -(1.0 - self.next_f64()).ln()).collect();
        let s: f64 = e.iter().sum();
        let mut a: Vec<f64> = e.iter().map(|v| v / s).collect();
        let rest: f64 = a[..k - 1].iter().sum();
        a[k - 1] = 1.0 - rest;
        a
    }
}
