//! Correlation, binning, and binned-moment statistics for ensemble
//! records.
//!
//! All sums use Neumaier-compensated accumulation so results are stable
//! against summation order at the 1e-12 level demanded by the record
//! determinism contract. Spread statistics are population quantities
//! (divide by `n`), matching the error model used for the binned means:
//! the standard error of a bin mean is `sigma / sqrt(n)` and the
//! standard error of `sigma` itself comes from the variance of the
//! variance via the delta method, `se_sigma = sqrt(var_var) / (2 sigma)`.

use crate::error::Error;
use crate::Result;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

fn compensated_total(values: impl Iterator<Item = f64>) -> f64 {
    let mut acc = CompensatedSum::default();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

fn check_finite(values: &[f64]) -> Result<()> {
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Config(format!("non-finite sample {v}")));
    }
    Ok(())
}

/// Pearson correlation coefficient of two equal-length series.
/// Two-pass, compensated; the result is clamped to `[-1, 1]` to absorb
/// last-bit rounding.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::TooFewSamples {
            min: 2,
            got: xs.len(),
        });
    }
    check_finite(xs)?;
    check_finite(ys)?;
    let n = xs.len() as f64;
    let mean_x = compensated_total(xs.iter().copied()) / n;
    let mean_y = compensated_total(ys.iter().copied()) / n;
    let mut sxy = CompensatedSum::default();
    let mut sxx = CompensatedSum::default();
    let mut syy = CompensatedSum::default();
    for (x, y) in xs.iter().zip(ys.iter()) {
        let dx = x - mean_x;
        let dy = y - mean_y;
        sxy.add(dx * dy);
        sxx.add(dx * dx);
        syy.add(dy * dy);
    }
    let sxx = sxx.value();
    let syy = syy.value();
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::ConstantSeries);
    }
    Ok((sxy.value() / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Kendall rank correlation (tau-b), the monotone-trend statistic used
/// for binned means. Quadratic in the input length; intended for bin
/// tables, not raw ensembles.
pub fn kendall_tau(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::TooFewSamples {
            min: 2,
            got: xs.len(),
        });
    }
    check_finite(xs)?;
    check_finite(ys)?;
    let n = xs.len();
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    let mut ties_x = 0i64;
    let mut ties_y = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = xs[j] - xs[i];
            let dy = ys[j] - ys[i];
            if dx == 0.0 && dy == 0.0 {
                ties_x += 1;
                ties_y += 1;
            } else if dx == 0.0 {
                ties_x += 1;
            } else if dy == 0.0 {
                ties_y += 1;
            } else if dx * dy > 0.0 {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    let denom = ((n0 - ties_x) as f64 * (n0 - ties_y) as f64).sqrt();
    if denom == 0.0 {
        return Err(Error::ConstantSeries);
    }
    Ok((concordant - discordant) as f64 / denom)
}

/// Half-open efficiency window with the indices of its members.
#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyBin {
    pub lo: f64,
    pub hi: f64,
    /// Indices into the input slice.
    pub members: Vec<usize>,
}

impl EfficiencyBin {
    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Tiles the observed efficiency range with fixed-width windows and
/// assigns every sample to one. A maximal trailing run of windows all
/// below `min_count` is merged into a single wider bin, mirroring the
/// practice of enlarging the sparsest highest-efficiency bin; interior
/// windows with no members are dropped.
pub fn bin_by_efficiency(
    values: &[f64],
    width: f64,
    min_count: usize,
) -> Result<Vec<EfficiencyBin>> {
    if values.is_empty() {
        return Err(Error::EmptyRecords);
    }
    if !(width > 0.0) {
        return Err(Error::NonPositive {
            name: "width",
            value: width,
        });
    }
    check_finite(values)?;
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n_bins = if hi > lo {
        ((hi - lo) / width).ceil().max(1.0) as usize
    } else {
        1
    };
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_bins];
    for (idx, v) in values.iter().enumerate() {
        let k = (((v - lo) / width).floor() as usize).min(n_bins - 1);
        members[k].push(idx);
    }

    let last_dense = members.iter().rposition(|m| m.len() >= min_count);
    let edge = |k: usize| lo + k as f64 * width;
    let mut bins = Vec::new();
    match last_dense {
        None => {
            // Nothing reaches the population floor: one bin with all.
            bins.push(EfficiencyBin {
                lo,
                hi: edge(n_bins),
                members: members.into_iter().flatten().collect(),
            });
        }
        Some(d) => {
            for (k, m) in members.iter().enumerate().take(d + 1) {
                if !m.is_empty() {
                    bins.push(EfficiencyBin {
                        lo: edge(k),
                        hi: edge(k + 1),
                        members: m.clone(),
                    });
                }
            }
            let trailing: Vec<usize> = members[d + 1..].iter().flatten().copied().collect();
            if !trailing.is_empty() {
                bins.push(EfficiencyBin {
                    lo: edge(d + 1),
                    hi: edge(n_bins),
                    members: trailing,
                });
            }
        }
    }
    Ok(bins)
}

/// Population moments of one bin with delta-method standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub sigma: f64,
    /// Fourth central moment.
    pub mu4: f64,
    /// Variance of the population-variance estimate,
    /// `(mu4 - sigma^4 (n-3)/(n-1)) / n`.
    pub var_of_var: f64,
    pub se_mean: f64,
    /// Standard error of sigma; undefined (None) when sigma is 0.
    pub se_sigma: Option<f64>,
}

/// Computes [`Moments`] for one sample set. Needs two samples or more;
/// a negative variance-of-variance beyond rounding aborts with
/// diagnostics since the estimator is non-negative by construction.
pub fn bin_stats(values: &[f64]) -> Result<Moments> {
    let n = values.len();
    if n < 2 {
        return Err(Error::TooFewSamples { min: 2, got: n });
    }
    check_finite(values)?;
    let nf = n as f64;
    let mean = compensated_total(values.iter().copied()) / nf;
    let mut m2 = CompensatedSum::default();
    let mut m4 = CompensatedSum::default();
    for v in values {
        let d = v - mean;
        let d2 = d * d;
        m2.add(d2);
        m4.add(d2 * d2);
    }
    let variance = m2.value() / nf;
    let mu4 = m4.value() / nf;
    let sigma = variance.sqrt();
    let mut var_of_var = (mu4 - variance * variance * (nf - 3.0) / (nf - 1.0)) / nf;
    if var_of_var < 0.0 {
        // The estimator is non-negative analytically; tolerate only
        // last-bit cancellation noise.
        if var_of_var > -1e-14 * mu4.max(f64::MIN_POSITIVE) {
            var_of_var = 0.0;
        } else {
            return Err(Error::MomentInconsistent { value: var_of_var });
        }
    }
    let se_sigma = if sigma > 0.0 {
        Some(var_of_var.sqrt() / (2.0 * sigma))
    } else {
        None
    };
    Ok(Moments {
        n,
        mean,
        sigma,
        mu4,
        var_of_var,
        se_mean: sigma / nf.sqrt(),
        se_sigma,
    })
}
