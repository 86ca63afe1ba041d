//! Decomposability of the stationary law `μ` of a stable OU process.
//!
//! With `ℓ∞(y) = ∫_0^∞ ψ(T(r)ᵀy) dr` the exponent of `μ`, the identity
//! `μ = T_t μ ∗ ρ_t` reads `ℓ∞(y) = ℓ∞(T(t)ᵀy) + ℓ(t, y)`: every `T_t` lies in
//! the decomposability semigroup of `μ` with factor `ρ_t`. The factors compose
//! under `ν_A ◇ ν_B = ν_A ∗ Aν_B`.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::levy::LevyModel;
use crate::mc::{cached_group, sample_v, McPlan};
use crate::mehler::MehlerExponent;
use crate::rng::RngStream;
use crate::semigroup::OperatorGroup;
use crate::stats::wilson;

/// Truncation horizon in units of `1/|spectral abscissa|`.
pub const TAIL_HORIZON_FACTOR: f64 = 40.0;

/// Exponent `ℓ∞` of the stationary law, truncated at `tail_horizon`.
#[derive(Debug, Clone)]
pub struct StationaryExponent {
    me: MehlerExponent,
    tail_horizon: f64,
    // ∫_0^T∞ |T(u)| du and ∫_0^T∞ |T(u)|² du, |·| the Frobenius norm
    norm_integral: f64,
    norm_sq_integral: f64,
    // |T(T∞)|
    tail_norm: f64,
}

impl StationaryExponent {
    pub fn new(me: MehlerExponent) -> Result<Self> {
        let a = me.group().spectral_abscissa();
        if a >= 0.0 {
            return Err(Error::Unstable { abscissa: a });
        }
        let tail_horizon = TAIL_HORIZON_FACTOR / a.abs();
        let g = me.group();
        let steps = 400;
        let h = tail_horizon / steps as f64;
        let norms: Vec<f64> = (0..=steps).map(|k| g.exp(k as f64 * h).norm()).collect();
        // left sums over-estimate decaying norms; take the max of both endpoints
        let norm_integral = norms.windows(2).map(|w| h * w[0].max(w[1])).sum();
        let norm_sq_integral = norms.windows(2).map(|w| h * w[0].max(w[1]).powi(2)).sum();
        let tail_norm = norms[steps];
        Ok(Self {
            me,
            tail_horizon,
            norm_integral,
            norm_sq_integral,
            tail_norm,
        })
    }

    /// Refuses infinite log-moment jump laws before anything else.
    pub fn from_model(group: &OperatorGroup, model: &LevyModel) -> Result<Self> {
        if !model.jump_law().has_finite_log_moment() {
            return Err(Error::LogMomentInfinite(
                model.jump_law().name().to_string(),
            ));
        }
        Self::new(MehlerExponent::from_model(group, model)?)
    }

    pub fn mehler(&self) -> &MehlerExponent {
        &self.me
    }

    pub fn tail_horizon(&self) -> f64 {
        self.tail_horizon
    }

    /// `ℓ∞(y)`.
    pub fn eval(&self, y: &[f64]) -> Result<Complex64> {
        self.me.exponent(self.tail_horizon, y)
    }

    /// Estimate of `|∫_{T∞}^∞ ψ(T(r)ᵀy) dr|`.
    pub fn tail_bound(&self, y: &[f64]) -> f64 {
        let m = self.me.psi().model();
        let yn = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let c = self.tail_norm * yn;
        let jump_moment = match m.jump_law() {
            crate::levy::JumpLaw::PointMass { a } => a.iter().map(|v| v * v).sum::<f64>().sqrt(),
            crate::levy::JumpLaw::Gaussian { mean, cov } => {
                mean.iter().map(|v| v * v).sum::<f64>().sqrt()
                    + (0..cov.len())
                        .map(|i| cov[i][i])
                        .sum::<f64>()
                        .max(0.0)
                        .sqrt()
            }
            crate::levy::JumpLaw::UniformBall { radius } => *radius,
            _ => f64::INFINITY,
        };
        (m.drift().norm() + m.jump_rate() * jump_moment) * c * self.norm_integral
            + 0.5 * m.covariance().norm() * c * c * self.norm_sq_integral
    }

    /// `|ℓ∞(y) − ℓ∞(T(t)ᵀy) − ℓ(t, y)|`.
    pub fn decomposability_residual(&self, t: f64, y: &[f64]) -> Result<f64> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(invalid("time must be finite and nonnegative"));
        }
        let shifted = self
            .me
            .group()
            .adjoint_apply(t, &DVector::from_column_slice(y))?;
        let full = self.eval(y)?;
        let moved = self.eval(shifted.as_slice())?;
        let factor = self.me.exponent(t, y)?;
        Ok((full - moved - factor).norm())
    }

    /// Contract for [`Self::decomposability_residual`] at `(t, y)`.
    pub fn decomposability_tolerance(&self, t: f64, y: &[f64]) -> f64 {
        let shifted = self
            .me
            .group()
            .exp(t)
            .tr_mul(&DVector::from_column_slice(y));
        10.0 * self.me.quad_tol() + self.tail_bound(y) + self.tail_bound(shifted.as_slice())
    }

    /// `ν_{T_t} ◇ ν_{T_s}` against `ν_{T_{t+s}}` in Fourier form.
    pub fn diamond_residual(&self, t: f64, s: f64, y: &[f64]) -> Result<f64> {
        self.me.cocycle_residual(t, s, y)
    }

    /// Associativity of `◇` on `(t, s, u)`: the larger of the gap between the
    /// two bracketings and the gap to `ν_{T_{t+s+u}}`.
    pub fn diamond_associativity(&self, t: f64, s: f64, u: f64, y: &[f64]) -> Result<f64> {
        let (a, b, c) = (
            Factor::Elementary(t),
            Factor::Elementary(s),
            Factor::Elementary(u),
        );
        let left = a.clone().diamond(b.clone()).diamond(c.clone());
        let right = a.diamond(b.diamond(c));
        let lv = left.exponent(&self.me, y)?;
        let rv = right.exponent(&self.me, y)?;
        let direct = self.me.exponent(t + s + u, y)?;
        Ok((lv - rv).norm().max((lv - direct).norm()))
    }
}

/// An operator convolution factor `ν_{T_t}` or a ◇-product of factors.
#[derive(Debug, Clone, PartialEq)]
pub enum Factor {
    Elementary(f64),
    Product(Box<Factor>, Box<Factor>),
}

impl Factor {
    /// `self ◇ other = self ∗ T_{time(self)} other`.
    pub fn diamond(self, other: Factor) -> Factor {
        Factor::Product(Box::new(self), Box::new(other))
    }

    /// Time of the operator `A` this factor belongs to (`A = T_time`).
    pub fn time(&self) -> f64 {
        match self {
            Factor::Elementary(t) => *t,
            Factor::Product(a, b) => a.time() + b.time(),
        }
    }

    /// Log-Fourier transform: `(ν_A ◇ ν_B)^(y) = ν̂_A(y) · ν̂_B(A*y)`.
    pub fn exponent(&self, me: &MehlerExponent, y: &[f64]) -> Result<Complex64> {
        match self {
            Factor::Elementary(t) => me.exponent(*t, y),
            Factor::Product(a, b) => {
                let moved = me
                    .group()
                    .adjoint_apply(a.time(), &DVector::from_column_slice(y))?;
                Ok(a.exponent(me, y)? + b.exponent(me, moved.as_slice())?)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorConvergence {
    /// `(t, g(t))` with `g(t) = max_y |exp ℓ(t,y) − exp ℓ∞(y)|`.
    pub rows: Vec<(f64, f64)>,
}

impl FactorConvergence {
    pub fn is_nonincreasing(&self, slack: f64) -> bool {
        self.rows.windows(2).all(|w| w[1].1 <= w[0].1 + slack)
    }

    pub fn final_gap(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.1)
    }
}

/// Sup-norm gap between `ρ̂_t` and `μ̂` over `y_grid` at each time.
pub fn factor_convergence(
    se: &StationaryExponent,
    times: &[f64],
    y_grid: &[Vec<f64>],
) -> Result<FactorConvergence> {
    if times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("times must be increasing"));
    }
    let limits: Vec<Complex64> = y_grid
        .iter()
        .map(|y| se.eval(y).map(Complex64::exp))
        .collect::<Result<_>>()?;
    let rows = times
        .iter()
        .map(|&t| {
            let mut gap: f64 = 0.0;
            for (y, lim) in y_grid.iter().zip(&limits) {
                gap = gap.max((se.mehler().characteristic_function(t, y)? - lim).norm());
            }
            Ok((t, gap))
        })
        .collect::<Result<_>>()?;
    Ok(FactorConvergence { rows })
}

/// Row maximum of the triangular array `T_{jt/n} ρ_{t/n}`, `0 <= j < n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfinitesimalityProfile {
    pub n: usize,
    pub j_argmax: usize,
    pub tail_estimate: f64,
    /// 95% Wilson half-width.
    pub wilson_halfwidth: f64,
    pub exceedances: usize,
    pub n_samples: usize,
}

impl InfinitesimalityProfile {
    /// One-sigma Wilson half-width.
    pub fn std_error(&self) -> f64 {
        wilson(self.exceedances, self.n_samples, 1.0).1
    }
}

/// Estimates `max_j P(|T(jt/n) V(t/n)| >= ε)`. The same draws of `V(t/n)` are
/// reused for every `j`.
pub fn infinitesimality_profile(
    group: &OperatorGroup,
    model: &LevyModel,
    t: f64,
    n: usize,
    epsilon: f64,
    plan: &McPlan,
    stream: &RngStream,
) -> Result<InfinitesimalityProfile> {
    if n == 0 || !(epsilon > 0.0) || !(t > 0.0 && t.is_finite()) {
        return Err(invalid("need n >= 1, epsilon > 0 and t > 0"));
    }
    if plan.n_samples < crate::mehler::MIN_SAMPLES {
        return Err(Error::InsufficientData {
            needed: crate::mehler::MIN_SAMPLES,
            got: plan.n_samples,
        });
    }
    let dt = t / n as f64;
    let fine = McPlan {
        n_samples: plan.n_samples,
        grid_step: plan.grid_step.min(dt / 16.0),
    };
    let samples = sample_v(group, model, dt, &fine, stream)?;
    let g = cached_group(group, dt, t);
    let mut best = (0usize, 0usize);
    let d = group.dim();
    let mut op = vec![0.0; d * d];
    for j in 0..n {
        g.exp_into(j as f64 * dt, &mut op);
        let count = samples
            .iter()
            .filter(|v| {
                let norm2: f64 = (0..d)
                    .map(|i| {
                        let r: f64 = (0..d).map(|k| op[i * d + k] * v[k]).sum();
                        r * r
                    })
                    .sum();
                norm2.sqrt() >= epsilon
            })
            .count();
        if count > best.1 {
            best = (j, count);
        }
    }
    let (j_argmax, exceedances) = best;
    let tail_estimate = exceedances as f64 / samples.len() as f64;
    Ok(InfinitesimalityProfile {
        n,
        j_argmax,
        tail_estimate,
        wilson_halfwidth: wilson(exceedances, samples.len(), 1.959_963_984_540_054).1,
        exceedances,
        n_samples: samples.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::{JumpLaw, LevyModelSpec};

    fn gauss_se() -> StationaryExponent {
        let g = OperatorGroup::from_rows(&[vec![-1.0]]).unwrap();
        let m = LevyModel::gaussian(vec![0.0], vec![vec![1.0]]).unwrap();
        StationaryExponent::from_model(&g, &m).unwrap()
    }

    #[test]
    fn gaussian_stationary_exponent() {
        let se = gauss_se();
        assert_eq!(se.tail_horizon(), 40.0);
        for y in [0.5, 1.0, 2.0] {
            assert!((se.eval(&[y]).unwrap().re + y * y / 4.0).abs() < 1e-10);
            assert!(se.tail_bound(&[y]) < 1e-8);
        }
        assert_eq!(se.eval(&[0.0]).unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn decomposability_edges() {
        let se = gauss_se();
        assert_eq!(se.decomposability_residual(0.0, &[1.0]).unwrap(), 0.0);
        assert_eq!(se.decomposability_residual(1.0, &[0.0]).unwrap(), 0.0);
        let r = se.decomposability_residual(1.0, &[1.0]).unwrap();
        assert!(r < 1e-9, "{r}");
        // closed-form pieces cancel exactly
        let e2 = (-2f64).exp();
        assert!((-0.25 + e2 / 4.0 + (1.0 - e2) / 4.0).abs() < 1e-16);
    }

    #[test]
    fn diamond_identities() {
        let se = gauss_se();
        assert_eq!(se.diamond_residual(0.0, 0.0, &[1.0]).unwrap(), 0.0);
        assert_eq!(se.diamond_residual(1.0, 0.0, &[1.0]).unwrap(), 0.0);
        assert!(se.diamond_associativity(1.0, 0.5, 0.25, &[1.0]).unwrap() < 1e-9);
        assert_eq!(
            Factor::Elementary(0.0)
                .exponent(se.mehler(), &[2.0])
                .unwrap(),
            Complex64::new(0.0, 0.0)
        );
    }

    #[test]
    fn unstable_and_log_moment_rejections() {
        let flat = OperatorGroup::from_rows(&[vec![0.0]]).unwrap();
        let m = LevyModel::gaussian(vec![0.0], vec![vec![1.0]]).unwrap();
        assert!(matches!(
            StationaryExponent::from_model(&flat, &m),
            Err(Error::Unstable { .. })
        ));
        let g = OperatorGroup::from_rows(&[vec![-1.0]]).unwrap();
        let lp = LevyModel::new(LevyModelSpec {
            dim: 1,
            drift: vec![0.0],
            covariance: vec![vec![0.0]],
            jump_rate: 1.0,
            jump_law: JumpLaw::LogParetoRadial { scale: 1.0 },
        })
        .unwrap();
        let err = StationaryExponent::from_model(&g, &lp).unwrap_err();
        assert!(matches!(err, Error::LogMomentInfinite(_)));
        assert!(err.to_string().contains("experiment logmoment"));
    }

    #[test]
    fn convergence_table() {
        let se = gauss_se();
        let times: Vec<f64> = (0..=10).map(f64::from).collect();
        let ys = vec![vec![0.0], vec![0.5], vec![1.0], vec![2.0]];
        let fc = factor_convergence(&se, &times, &ys).unwrap();
        assert!(fc.is_nonincreasing(1e-9));
        assert!(fc.final_gap() < 1e-8);
        // baseline at t = 0 is max |1 − exp ℓ∞(y)|
        assert!((fc.rows[0].1 - (1.0 - (-1f64).exp())).abs() < 1e-9);
        let zero = factor_convergence(&se, &times, &[vec![0.0]]).unwrap();
        assert!(zero.rows.iter().all(|r| r.1 == 0.0));
    }

    #[test]
    fn degenerate_model_has_no_tail() {
        let g = OperatorGroup::from_rows(&[vec![-1.0]]).unwrap();
        let m = LevyModel::gaussian(vec![0.0], vec![vec![0.0]]).unwrap();
        for n in [1, 4, 16] {
            let p = infinitesimality_profile(
                &g,
                &m,
                1.0,
                n,
                0.5,
                &McPlan::new(200),
                &RngStream::new(1),
            )
            .unwrap();
            assert_eq!(p.tail_estimate, 0.0);
        }
    }
}
