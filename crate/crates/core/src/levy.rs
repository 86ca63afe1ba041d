//! Lévy models with finite jump activity: drift, Brownian covariance and a
//! compound-Poisson jump component. Provides the characteristic exponent,
//! exact path simulation, and an empirical characteristic-function estimator.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;

/// Radius cap for `log_pareto_radial` jumps; keeps sums of a few thousand
/// jumps finite in f64.
pub const LOG_PARETO_CAP: f64 = 1e300;

/// Distribution of a single jump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum JumpLaw {
    PointMass {
        a: Vec<f64>,
    },
    Gaussian {
        mean: Vec<f64>,
        cov: Vec<Vec<f64>>,
    },
    UniformBall {
        radius: f64,
    },
    /// Uniform direction, radius `scale * U^(-1/alpha)`.
    ParetoRadial {
        alpha: f64,
        scale: f64,
    },
    /// Uniform direction, radius `scale * exp(1/U - 1)`: `log` of the radius
    /// has no mean, so `E log(1 + |J|)` is infinite.
    LogParetoRadial {
        scale: f64,
    },
}

impl JumpLaw {
    pub fn name(&self) -> &'static str {
        match self {
            JumpLaw::PointMass { .. } => "point_mass",
            JumpLaw::Gaussian { .. } => "gaussian",
            JumpLaw::UniformBall { .. } => "uniform_ball",
            JumpLaw::ParetoRadial { .. } => "pareto_radial",
            JumpLaw::LogParetoRadial { .. } => "log_pareto_radial",
        }
    }

    pub fn has_analytic_cf(&self) -> bool {
        matches!(
            self,
            JumpLaw::PointMass { .. } | JumpLaw::Gaussian { .. } | JumpLaw::UniformBall { .. }
        )
    }

    pub fn has_finite_log_moment(&self) -> bool {
        !matches!(self, JumpLaw::LogParetoRadial { .. })
    }
}

/// Raw, unvalidated model description (the JSON config layout).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevyModelSpec {
    pub dim: usize,
    pub drift: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub jump_rate: f64,
    pub jump_law: JumpLaw,
}

/// Validated Lévy triplet `(b, Σ, λ·J)`; the law of `Y(1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LevyModelSpec", into = "LevyModelSpec")]
pub struct LevyModel {
    spec: LevyModelSpec,
    drift: DVector<f64>,
    covariance: DMatrix<f64>,
    cov_sqrt: Option<DMatrix<f64>>,
    jump_mean: DVector<f64>,
    jump_cov: DMatrix<f64>,
    jump_sqrt: Option<DMatrix<f64>>,
}

impl From<LevyModel> for LevyModelSpec {
    fn from(m: LevyModel) -> Self {
        m.spec
    }
}

impl TryFrom<LevyModelSpec> for LevyModel {
    type Error = Error;

    fn try_from(spec: LevyModelSpec) -> Result<Self> {
        LevyModel::new(spec)
    }
}

fn square_matrix(rows: &[Vec<f64>], d: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(invalid(format!("{what} must be {d}x{d}")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    if flat.iter().any(|x| !x.is_finite()) {
        return Err(invalid(format!("{what} has non-finite entries")));
    }
    Ok(DMatrix::from_row_slice(d, d, &flat))
}

/// Symmetric PSD square root; `None` for the zero matrix.
fn psd_sqrt(m: &DMatrix<f64>, what: &str) -> Result<Option<DMatrix<f64>>> {
    let scale = m.amax();
    if (m - m.transpose()).amax() > 1e-12 * (1.0 + scale) {
        return Err(invalid(format!("{what} is not symmetric")));
    }
    if scale == 0.0 {
        return Ok(None);
    }
    let eig = m.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l < -1e-12) {
        return Err(invalid(format!("{what} is not positive semidefinite")));
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    Ok(Some(v * DMatrix::from_diagonal(&roots) * v.transpose()))
}

fn vector(v: &[f64], d: usize, what: &str) -> Result<DVector<f64>> {
    if v.len() != d {
        return Err(invalid(format!(
            "{what} must have length {d}, got {}",
            v.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(invalid(format!("{what} has non-finite entries")));
    }
    Ok(DVector::from_column_slice(v))
}

impl LevyModel {
    pub fn new(spec: LevyModelSpec) -> Result<Self> {
        let d = spec.dim;
        if d == 0 {
            return Err(invalid("dimension must be positive"));
        }
        let drift = vector(&spec.drift, d, "drift")?;
        let covariance = square_matrix(&spec.covariance, d, "covariance")?;
        let cov_sqrt = psd_sqrt(&covariance, "covariance")?;
        if !(spec.jump_rate >= 0.0 && spec.jump_rate.is_finite()) {
            return Err(invalid("jump_rate must be a finite nonnegative number"));
        }
        let mut jump_mean = DVector::zeros(d);
        let mut jump_cov = DMatrix::zeros(d, d);
        let mut jump_sqrt = None;
        match &spec.jump_law {
            JumpLaw::PointMass { a } => jump_mean = vector(a, d, "point_mass.a")?,
            JumpLaw::Gaussian { mean, cov } => {
                jump_mean = vector(mean, d, "gaussian.mean")?;
                jump_cov = square_matrix(cov, d, "gaussian.cov")?;
                jump_sqrt = psd_sqrt(&jump_cov, "gaussian.cov")?;
            }
            JumpLaw::UniformBall { radius } => {
                if !(*radius > 0.0 && radius.is_finite()) {
                    return Err(invalid("uniform_ball.radius must be positive"));
                }
            }
            JumpLaw::ParetoRadial { alpha, scale } => {
                if !(*alpha > 0.0 && alpha.is_finite() && *scale > 0.0 && scale.is_finite()) {
                    return Err(invalid("pareto_radial needs positive alpha and scale"));
                }
            }
            JumpLaw::LogParetoRadial { scale } => {
                if !(*scale > 0.0 && scale.is_finite()) {
                    return Err(invalid("log_pareto_radial.scale must be positive"));
                }
            }
        }
        Ok(Self {
            spec,
            drift,
            covariance,
            cov_sqrt,
            jump_mean,
            jump_cov,
            jump_sqrt,
        })
    }

    /// Brownian motion with covariance `cov` and drift `drift`, no jumps.
    pub fn gaussian(drift: Vec<f64>, cov: Vec<Vec<f64>>) -> Result<Self> {
        let dim = drift.len();
        Self::new(LevyModelSpec {
            dim,
            drift,
            covariance: cov,
            jump_rate: 0.0,
            jump_law: JumpLaw::PointMass { a: vec![0.0; dim] },
        })
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn drift(&self) -> &DVector<f64> {
        &self.drift
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn jump_rate(&self) -> f64 {
        self.spec.jump_rate
    }

    pub fn jump_law(&self) -> &JumpLaw {
        &self.spec.jump_law
    }

    pub fn spec(&self) -> &LevyModelSpec {
        &self.spec
    }

    /// No drift, no diffusion, no jumps: `Y ≡ 0`.
    pub fn is_degenerate(&self) -> bool {
        self.drift.iter().all(|x| *x == 0.0)
            && self.cov_sqrt.is_none()
            && self.spec.jump_rate == 0.0
    }

    /// Draws one jump vector.
    pub fn sample_jump<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let d = self.dim();
        match &self.spec.jump_law {
            JumpLaw::PointMass { .. } => self.jump_mean.clone(),
            JumpLaw::Gaussian { .. } => {
                let mut j = self.jump_mean.clone();
                if let Some(l) = &self.jump_sqrt {
                    j += l * standard_normal(rng, d);
                }
                j
            }
            JumpLaw::UniformBall { radius } => {
                let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
                unit_direction(rng, d) * r
            }
            JumpLaw::ParetoRadial { alpha, scale } => {
                let u = 1.0 - rng.random::<f64>();
                unit_direction(rng, d) * (scale * u.powf(-1.0 / alpha))
            }
            JumpLaw::LogParetoRadial { scale } => {
                let u = 1.0 - rng.random::<f64>();
                let r = (scale * (1.0 / u - 1.0).exp()).min(LOG_PARETO_CAP);
                unit_direction(rng, d) * r
            }
        }
    }
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DVector<f64> {
    DVector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(rng)))
}

fn unit_direction<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DVector<f64> {
    if d == 1 {
        return DVector::from_element(1, if rng.random::<bool>() { 1.0 } else { -1.0 });
    }
    loop {
        let g = standard_normal(rng, d);
        let n = g.norm();
        if n > 1e-12 {
            return g / n;
        }
    }
}

/// Characteristic function of the uniform law on the unit ball of R^d at
/// radius `u = R|y|`, i.e. `0F1(; d/2 + 1; -u²/4)`.
pub fn uniform_ball_cf(d: usize, u: f64) -> f64 {
    let u = u.abs();
    let half = d as f64 / 2.0;
    if u <= 20.0 {
        // hypergeometric series; terms peak near k ≈ u/2
        let z = -u * u / 4.0;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 0..400 {
            let k = k as f64;
            term *= z / ((k + 1.0) * (k + half + 1.0));
            sum += term;
            if term.abs() < 1e-17 * sum.abs().max(1e-300) && k > u {
                break;
            }
        }
        return sum;
    }
    // E cos(u X₁), X₁ the first coordinate: density ∝ (1 - x²)^((d-1)/2)
    if d.is_multiple_of(2) {
        // x = cos θ makes the integrand sin^d θ cos(u cos θ), smooth and periodic
        let n = 64 + 2 * (u.ceil() as usize) + 2 * d;
        let (mut num, mut den) = (0.0, 0.0);
        for k in 1..n {
            let th = PI * k as f64 / n as f64;
            let w = th.sin().powi(d as i32);
            num += w * (u * th.cos()).cos();
            den += w;
        }
        num / den
    } else {
        // polynomial weight: composite Gauss-Legendre on [-1, 1]
        let k = (d - 1) / 2;
        let (nodes, weights) = gauss_legendre(16);
        let panels = 8 + (u.ceil() as usize);
        let h = 2.0 / panels as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for p in 0..panels {
            let mid = -1.0 + h * (p as f64 + 0.5);
            for (x, w) in nodes.iter().zip(&weights) {
                let xx = mid + 0.5 * h * x;
                let wt = w * (1.0 - xx * xx).powi(k as i32);
                num += wt * (u * xx).cos();
                den += wt;
            }
        }
        num / den
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// `ψ(y) = log E exp(i⟨y, Y(1)⟩) = i⟨b,y⟩ − ½⟨Σy,y⟩ + λ(φ_J(y) − 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CharExponent {
    model: LevyModel,
}

/// Builds the analytic exponent; fails for jump laws without a closed-form CF.
pub fn char_exponent(model: &LevyModel) -> Result<CharExponent> {
    if !model.jump_law().has_analytic_cf() {
        return Err(Error::UnsupportedAnalytic(
            model.jump_law().name().to_string(),
        ));
    }
    Ok(CharExponent {
        model: model.clone(),
    })
}

impl CharExponent {
    pub fn model(&self) -> &LevyModel {
        &self.model
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// Jump characteristic function `φ_J(y)`.
    pub fn jump_cf(&self, y: &[f64]) -> Complex64 {
        let m = &self.model;
        match m.jump_law() {
            JumpLaw::PointMass { .. } => Complex64::from_polar(1.0, dot(m.jump_mean.as_slice(), y)),
            JumpLaw::Gaussian { .. } => {
                let q = quad_form(&m.jump_cov, y);
                Complex64::from_polar((-0.5 * q).exp(), dot(m.jump_mean.as_slice(), y))
            }
            JumpLaw::UniformBall { radius } => {
                let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                Complex64::new(uniform_ball_cf(m.dim(), radius * norm), 0.0)
            }
            JumpLaw::ParetoRadial { .. } | JumpLaw::LogParetoRadial { .. } => {
                unreachable!("constructor rejects non-analytic jump laws")
            }
        }
    }

    pub fn eval(&self, y: &[f64]) -> Complex64 {
        let m = &self.model;
        let mut psi = Complex64::new(
            -0.5 * quad_form(&m.covariance, y),
            dot(m.drift.as_slice(), y),
        );
        if m.jump_rate() > 0.0 {
            psi += m.jump_rate() * (self.jump_cf(y) - 1.0);
        }
        psi
    }

    /// Upper bound for `|ψ(z)|` in terms of `|z|`, used for tail estimates.
    pub fn magnitude_bound(&self, z_norm: f64) -> f64 {
        let m = &self.model;
        let jump_first_moment = match m.jump_law() {
            JumpLaw::PointMass { .. } => m.jump_mean.norm(),
            JumpLaw::Gaussian { .. } => m.jump_mean.norm() + m.jump_cov.trace().max(0.0).sqrt(),
            JumpLaw::UniformBall { radius } => *radius,
            _ => f64::INFINITY,
        };
        let jumps = m.jump_rate() * (jump_first_moment * z_norm).min(2.0);
        m.drift.norm() * z_norm + 0.5 * m.covariance.norm() * z_norm * z_norm + jumps
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn quad_form(m: &DMatrix<f64>, y: &[f64]) -> f64 {
    let d = y.len();
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            s += y[i] * m[(i, j)] * y[j];
        }
    }
    s
}

/// Monte Carlo estimate of `E exp(i⟨y, X⟩)` and its CLT standard error
/// (the larger of the real and imaginary component errors).
pub fn empirical_cf(samples: &[DVector<f64>], y: &[f64]) -> Result<(Complex64, f64)> {
    const MIN_SAMPLES: usize = 100;
    if samples.len() < MIN_SAMPLES {
        return Err(Error::InsufficientData {
            needed: MIN_SAMPLES,
            got: samples.len(),
        });
    }
    if samples.iter().any(|s| s.len() != y.len()) {
        return Err(invalid("sample dimension does not match y"));
    }
    let n = samples.len() as f64;
    let (mut re, mut im, mut re2, mut im2) = (0.0, 0.0, 0.0, 0.0);
    for s in samples {
        let (sin, cos) = dot(s.as_slice(), y).sin_cos();
        re += cos;
        im += sin;
        re2 += cos * cos;
        im2 += sin * sin;
    }
    let (mre, mim) = (re / n, im / n);
    let var_re = (re2 / n - mre * mre).max(0.0) * n / (n - 1.0);
    let var_im = (im2 / n - mim * mim).max(0.0) * n / (n - 1.0);
    let se = (var_re.max(var_im) / n).sqrt();
    Ok((Complex64::new(mre, mim), se))
}

/// One cadlag path of `Y` on `[0, horizon]`, known exactly at the merged set
/// of grid and jump times.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyPath {
    dim: usize,
    horizon: f64,
    times: Vec<f64>,
    // row k holds Y(times[k])
    values: Vec<f64>,
    is_jump: Vec<bool>,
    jumps: Vec<(f64, DVector<f64>)>,
}

impl LevyPath {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Merged grid and jump times, starting at 0 and ending at the horizon.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn is_jump(&self, k: usize) -> bool {
        self.is_jump[k]
    }

    pub fn jumps(&self) -> &[(f64, DVector<f64>)] {
        &self.jumps
    }

    /// Index of the largest known time `<= t`.
    pub fn index_at(&self, t: f64) -> Option<usize> {
        if !(0.0..=self.horizon).contains(&t) {
            return None;
        }
        Some(self.times.partition_point(|&s| s <= t) - 1)
    }

    /// Right-continuous evaluation.
    pub fn value_at(&self, t: f64) -> Result<&[f64]> {
        self.index_at(t)
            .map(|k| self.value(k))
            .ok_or_else(|| invalid(format!("time {t} outside [0, {}]", self.horizon)))
    }

    /// CSV with header `time, y_1..y_d, is_jump`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["time".to_string()];
        header.extend((1..=self.dim).map(|i| format!("y_{i}")));
        header.push("is_jump".into());
        w.write_record(&header)?;
        for k in 0..self.times.len() {
            let mut row = vec![self.times[k].to_string()];
            row.extend(self.value(k).iter().map(|v| v.to_string()));
            row.push(u8::from(self.is_jump[k]).to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Exact simulation on a regular grid of width `grid_step` merged with the
/// jump times. Jump count is Poisson(λ·horizon) with uniform times; Gaussian
/// increments are drawn for every merged sub-interval, so the path is exact in
/// law at each stored time.
pub fn sample_path(
    model: &LevyModel,
    horizon: f64,
    grid_step: f64,
    stream: &RngStream,
) -> Result<LevyPath> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(invalid("horizon must be positive"));
    }
    if !(grid_step > 0.0 && grid_step.is_finite()) {
        return Err(invalid("grid_step must be positive"));
    }
    let d = model.dim();
    let mut rng = stream.rng();

    let mut jumps: Vec<(f64, DVector<f64>)> = Vec::new();
    let mean_jumps = model.jump_rate() * horizon;
    if mean_jumps > 0.0 {
        let count = Poisson::new(mean_jumps)
            .map_err(|e| invalid(format!("jump rate: {e}")))?
            .sample(&mut rng) as usize;
        let mut times: Vec<f64> = (0..count)
            .map(|_| horizon * (1.0 - rng.random::<f64>()))
            .collect();
        times.sort_by(f64::total_cmp);
        jumps = times
            .into_iter()
            .map(|t| (t, model.sample_jump(&mut rng)))
            .collect();
    }

    let steps = (horizon / grid_step - 1e-9).ceil().max(1.0) as usize;
    let mut times = Vec::with_capacity(steps + 1 + jumps.len());
    let mut is_jump = Vec::with_capacity(steps + 1 + jumps.len());
    times.push(0.0);
    is_jump.push(false);
    let mut next_jump = 0;
    for k in 1..=steps {
        let grid_t = if k == steps {
            horizon
        } else {
            k as f64 * grid_step
        };
        while next_jump < jumps.len() && jumps[next_jump].0 < grid_t {
            times.push(jumps[next_jump].0);
            is_jump.push(true);
            next_jump += 1;
        }
        if next_jump < jumps.len() && jumps[next_jump].0 == grid_t {
            next_jump += 1;
            times.push(grid_t);
            is_jump.push(true);
        } else {
            times.push(grid_t);
            is_jump.push(false);
        }
    }
    let mut values = vec![0.0; times.len() * d];
    let mut gauss = vec![0.0; d];
    let mut jump_sum = vec![0.0; d];
    let mut jump_iter = jumps.iter();
    for k in 1..times.len() {
        let dt = times[k] - times[k - 1];
        if let Some(l) = &model.cov_sqrt {
            let z = standard_normal(&mut rng, d);
            let inc = l * z * dt.sqrt();
            for i in 0..d {
                gauss[i] += inc[i];
            }
        }
        if is_jump[k] {
            let (_, j) = jump_iter.next().expect("jump flags match jump list");
            for i in 0..d {
                jump_sum[i] += j[i];
            }
        }
        let row = &mut values[k * d..(k + 1) * d];
        for i in 0..d {
            // drift term from the exact time, not accumulated
            row[i] = model.drift[i] * times[k] + gauss[i] + jump_sum[i];
        }
    }
    // duplicate jump times (probability zero) collapse onto one stored time
    dedup_times(&mut times, &mut values, &mut is_jump, d);

    Ok(LevyPath {
        dim: d,
        horizon,
        times,
        values,
        is_jump,
        jumps,
    })
}

fn dedup_times(times: &mut Vec<f64>, values: &mut Vec<f64>, is_jump: &mut Vec<bool>, d: usize) {
    if times.windows(2).all(|w| w[0] < w[1]) {
        return;
    }
    let mut keep_t = Vec::with_capacity(times.len());
    let mut keep_v = Vec::with_capacity(values.len());
    let mut keep_j = Vec::with_capacity(is_jump.len());
    for k in 0..times.len() {
        let row = &values[k * d..(k + 1) * d];
        if keep_t.last() == Some(&times[k]) {
            let n = keep_v.len();
            keep_v[n - d..].copy_from_slice(row);
            let m = keep_j.len();
            keep_j[m - 1] |= is_jump[k];
        } else {
            keep_t.push(times[k]);
            keep_v.extend_from_slice(row);
            keep_j.push(is_jump[k]);
        }
    }
    *times = keep_t;
    *values = keep_v;
    *is_jump = keep_j;
}
