//! Two-sample Kolmogorov–Smirnov testing, projections of vector samples onto
//! dual directions, and binomial (Wilson) intervals.

use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;

pub const MIN_KS_SAMPLES: usize = 100;

/// Number of seeded random directions added to the coordinate axes.
pub const RANDOM_DIRECTIONS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoSampleReport {
    pub statistic: f64,
    pub critical_value: f64,
    pub alpha: f64,
    pub n1: usize,
    pub n2: usize,
    /// Direction used to reduce vector samples, if any.
    pub projection: Option<Vec<f64>>,
    pub pass: bool,
}

/// Asymptotic Kolmogorov constant `c(α) = sqrt(−ln(α/2) / 2)`.
pub fn ks_constant(alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt()
}

/// Sup distance between the empirical CDFs of `a` and `b`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Classical two-sample KS test at level `alpha`, critical value
/// `c(α)·sqrt((n1+n2)/(n1·n2))`.
pub fn ks_two_sample(a: &[f64], b: &[f64], alpha: f64) -> Result<TwoSampleReport> {
    let n = a.len().min(b.len());
    if n < MIN_KS_SAMPLES {
        return Err(Error::InsufficientData {
            needed: MIN_KS_SAMPLES,
            got: n,
        });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha must lie in (0, 1)"));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(invalid("samples contain NaN"));
    }
    let (n1, n2) = (a.len(), b.len());
    let statistic = ks_statistic(a, b);
    let critical_value = ks_constant(alpha) * ((n1 + n2) as f64 / (n1 as f64 * n2 as f64)).sqrt();
    Ok(TwoSampleReport {
        statistic,
        critical_value,
        alpha,
        n1,
        n2,
        projection: None,
        pass: statistic < critical_value,
    })
}

/// `⟨y, x_i⟩` for each sample.
pub fn project(samples: &[DVector<f64>], y: &[f64]) -> Result<Vec<f64>> {
    samples
        .iter()
        .map(|x| {
            if x.len() != y.len() {
                Err(invalid(format!(
                    "sample of dimension {} projected on {}-vector",
                    x.len(),
                    y.len()
                )))
            } else {
                Ok(x.iter().zip(y).map(|(a, b)| a * b).sum())
            }
        })
        .collect()
}

/// The `d` coordinate axes followed by [`RANDOM_DIRECTIONS`] seeded unit vectors.
pub fn projection_panel(dim: usize, stream: &RngStream) -> Vec<Vec<f64>> {
    let mut panel: Vec<Vec<f64>> = (0..dim)
        .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut rng = stream.rng();
    while panel.len() < dim + RANDOM_DIRECTIONS {
        let g: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-9 {
            panel.push(g.into_iter().map(|v| v / norm).collect());
        }
    }
    panel
}

/// KS tests on every direction of the projection panel, each at the
/// Bonferroni level `alpha / (d + 8)`.
pub fn ks_panel(
    a: &[DVector<f64>],
    b: &[DVector<f64>],
    alpha: f64,
    stream: &RngStream,
) -> Result<Vec<TwoSampleReport>> {
    let dim = a.first().map(|x| x.len()).ok_or(Error::InsufficientData {
        needed: MIN_KS_SAMPLES,
        got: 0,
    })?;
    let panel = projection_panel(dim, stream);
    let level = alpha / panel.len() as f64;
    panel
        .into_iter()
        .map(|y| {
            let mut r = ks_two_sample(&project(a, &y)?, &project(b, &y)?, level)?;
            r.projection = Some(y);
            Ok(r)
        })
        .collect()
}

/// Wilson score interval for `k` successes in `n` trials at normal quantile `z`,
/// as `(center, half_width)`.
pub fn wilson(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.5, 0.5);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    (center, half)
}
