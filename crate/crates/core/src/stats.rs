//! Small statistical helpers: compensated sums and Kolmogorov–Smirnov tests.

/// Two-sided 95% normal quantile as used for reported confidence intervals.
pub const Z_95: f64 = 1.96;
/// Two-sided 99.5% normal quantile, `Φ⁻¹(0.9975)`.
pub const Z_995: f64 = 2.807_033_768_343_811;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Outcome of a Kolmogorov–Smirnov test at the 1% level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsOutcome {
    pub statistic: f64,
    /// Asymptotic 1% critical value for the sample size(s).
    pub critical_value: f64,
}

impl KsOutcome {
    pub fn passes(&self) -> bool {
        self.statistic < self.critical_value
    }
}

/// `c(α) = sqrt(−ln(α/2)/2)` for α = 0.01.
fn ks_coefficient_1pct() -> f64 {
    (-(0.005f64).ln() / 2.0).sqrt()
}

/// One-sample test of `samples` against a continuous `cdf`.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> KsOutcome {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let statistic = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    KsOutcome {
        statistic,
        critical_value: ks_coefficient_1pct() / n.sqrt(),
    }
}

/// Two-sample test. Ties (discrete data) are stepped over together, which
/// makes the asymptotic critical value conservative.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsOutcome {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut statistic: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        statistic = statistic.max((i as f64 / n - j as f64 / m).abs());
    }
    KsOutcome {
        statistic,
        critical_value: ks_coefficient_1pct() * ((n + m) / (n * m)).sqrt(),
    }
}

/// Mean and standard error of the mean.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mut s = KahanSum::new();
    xs.iter().for_each(|&x| s.add(x));
    let mean = s.value() / n;
    let mut ss = KahanSum::new();
    xs.iter().for_each(|&x| ss.add((x - mean) * (x - mean)));
    let var = ss.value() / (n - 1.0);
    (mean, (var / n).sqrt())
}
