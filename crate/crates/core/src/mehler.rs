//! Generalized Mehler semigroups built from an operator group and a Lévy
//! model: the exponent `ℓ(t, y) = ∫_0^t ψ(T(r)ᵀ y) dr` of the cocycle family
//! `ρ_t`, cocycle residuals, and Monte Carlo Mehler operators
//! `(𝒯_t f)(x) = E f(T(t)x + V(t))`.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::integral::ou_v_at;
use crate::levy::{char_exponent, sample_path, CharExponent, LevyModel};
use crate::mc::{cached_group, mean_and_se, McPlan};
use crate::par;
use crate::quadrature::{adaptive_simpson, DEFAULT_MAX_DEPTH};
use crate::rng::RngStream;
use crate::semigroup::OperatorGroup;

pub const DEFAULT_QUAD_TOL: f64 = 1e-10;

/// Minimum Monte Carlo sample count accepted by the Mehler operators.
pub const MIN_SAMPLES: usize = 100;

/// `ℓ(t, y) = log ρ̂_t(y)`.
#[derive(Debug, Clone)]
pub struct MehlerExponent {
    group: OperatorGroup,
    psi: CharExponent,
    quad_tol: f64,
}

impl MehlerExponent {
    pub fn new(group: OperatorGroup, psi: CharExponent) -> Result<Self> {
        Self::with_tolerance(group, psi, DEFAULT_QUAD_TOL)
    }

    pub fn with_tolerance(group: OperatorGroup, psi: CharExponent, quad_tol: f64) -> Result<Self> {
        if group.dim() != psi.dim() {
            return Err(invalid("group and model dimensions differ"));
        }
        if !(quad_tol > 0.0 && quad_tol.is_finite()) {
            return Err(invalid("quad_tol must be positive"));
        }
        Ok(Self {
            group,
            psi,
            quad_tol,
        })
    }

    /// Convenience constructor; fails with `UnsupportedAnalytic` for jump
    /// laws without a closed-form characteristic function.
    pub fn from_model(group: &OperatorGroup, model: &LevyModel) -> Result<Self> {
        Self::new(group.clone(), char_exponent(model)?)
    }

    pub fn group(&self) -> &OperatorGroup {
        &self.group
    }

    pub fn psi(&self) -> &CharExponent {
        &self.psi
    }

    pub fn quad_tol(&self) -> f64 {
        self.quad_tol
    }

    pub fn dim(&self) -> usize {
        self.group.dim()
    }

    /// `∫_a^b ψ(T(r)ᵀ y) dr`, adaptive Simpson to `quad_tol`.
    pub fn integrate_exponent(&self, a: f64, b: f64, y: &[f64]) -> Complex64 {
        let d = self.dim();
        let q = self.group.generator();
        let qnorm = q.iter().fold(0.0f64, |m, v| m.max(v.abs())) * d as f64;
        let panels = (((b - a) * (1.0 + qnorm)).ceil() as usize).clamp(1, 256);
        let yv = DVector::from_column_slice(y);
        let integrand = |r: f64| {
            let z = self.group.exp(r).tr_mul(&yv);
            self.psi.eval(z.as_slice())
        };
        adaptive_simpson(&integrand, a, b, self.quad_tol, panels, DEFAULT_MAX_DEPTH).value
    }

    /// `ℓ(t, y)`.
    pub fn exponent(&self, t: f64, y: &[f64]) -> Result<Complex64> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(invalid("time must be finite and nonnegative"));
        }
        if y.len() != self.dim() {
            return Err(invalid("dual vector has wrong dimension"));
        }
        if t == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        Ok(self.integrate_exponent(0.0, t, y))
    }

    /// `ρ̂_t(y) = exp ℓ(t, y)`.
    pub fn characteristic_function(&self, t: f64, y: &[f64]) -> Result<Complex64> {
        Ok(self.exponent(t, y)?.exp())
    }

    /// `|ℓ(t+s, y) − ℓ(t, y) − ℓ(s, T(t)ᵀ y)|`: the Fourier form of
    /// `ρ_{t+s} = ρ_t ∗ T_t ρ_s`.
    pub fn cocycle_residual(&self, t: f64, s: f64, y: &[f64]) -> Result<f64> {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(invalid("time must be finite and nonnegative"));
        }
        let whole = self.exponent(t + s, y)?;
        let first = self.exponent(t, y)?;
        let shifted = self
            .group
            .adjoint_apply(t, &DVector::from_column_slice(y))?;
        let second = self.exponent(s, shifted.as_slice())?;
        Ok((whole - first - second).norm())
    }

    /// Contract for [`Self::cocycle_residual`].
    pub fn cocycle_tolerance(&self) -> f64 {
        10.0 * self.quad_tol
    }
}

/// A bounded continuous function on R^d.
pub trait TestFunction: Sync {
    fn eval(&self, x: &[f64]) -> f64;

    /// `B` with `|f| <= B`.
    fn bound(&self) -> f64;
}

/// Test functions with known Mehler transforms (through `ℓ`) plus a bump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FleetFunction {
    /// `cos⟨y, x⟩`
    Cos {
        y: Vec<f64>,
    },
    /// `sin⟨y, x⟩`
    Sin {
        y: Vec<f64>,
    },
    /// `exp(1 − 1/(1 − |x − c|²/r²))` inside the ball, 0 outside.
    Bump {
        center: Vec<f64>,
        radius: f64,
    },
    Constant {
        value: f64,
    },
}

impl TestFunction for FleetFunction {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            FleetFunction::Cos { y } => crate::levy::dot(y, x).cos(),
            FleetFunction::Sin { y } => crate::levy::dot(y, x).sin(),
            FleetFunction::Bump { center, radius } => {
                let r2: f64 = center
                    .iter()
                    .zip(x)
                    .map(|(c, v)| (v - c) * (v - c))
                    .sum::<f64>()
                    / (radius * radius);
                if r2 < 1.0 {
                    (1.0 - 1.0 / (1.0 - r2)).exp()
                } else {
                    0.0
                }
            }
            FleetFunction::Constant { value } => *value,
        }
    }

    fn bound(&self) -> f64 {
        match self {
            FleetFunction::Constant { value } => value.abs(),
            _ => 1.0,
        }
    }
}

impl FleetFunction {
    /// `(𝒯_t f)(x)` in closed form through `ℓ`, where one exists.
    pub fn exact_mehler(&self, me: &MehlerExponent, t: f64, x: &[f64]) -> Result<Option<f64>> {
        let moved = me.group().apply(t, &DVector::from_column_slice(x))?;
        Ok(match self {
            FleetFunction::Cos { y } | FleetFunction::Sin { y } => {
                let cf = me.characteristic_function(t, y)?;
                let v = Complex64::from_polar(1.0, crate::levy::dot(y, moved.as_slice())) * cf;
                Some(if matches!(self, FleetFunction::Cos { .. }) {
                    v.re
                } else {
                    v.im
                })
            }
            FleetFunction::Constant { value } => Some(*value),
            FleetFunction::Bump { .. } => None,
        })
    }
}

/// A Monte Carlo estimate with its CLT standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

fn check_mc(group: &OperatorGroup, model: &LevyModel, x: &[f64], plan: &McPlan) -> Result<()> {
    if plan.n_samples < MIN_SAMPLES {
        return Err(Error::InsufficientData {
            needed: MIN_SAMPLES,
            got: plan.n_samples,
        });
    }
    if group.dim() != model.dim() || x.len() != group.dim() {
        return Err(invalid("dimension mismatch between group, model and point"));
    }
    Ok(())
}

fn one_draw(
    group: &OperatorGroup,
    model: &LevyModel,
    t: f64,
    moved: &[f64],
    f: &dyn TestFunction,
    plan: &McPlan,
    stream: &RngStream,
) -> Result<f64> {
    let path = sample_path(model, t, plan.grid_step, stream)?;
    let v = ou_v_at(group, &path, t)?;
    let point: Vec<f64> = moved.iter().zip(v.iter()).map(|(a, b)| a + b).collect();
    Ok(f.eval(&point))
}

/// `(𝒯_t f)(x) = E f(T(t)x + V(t))` by Monte Carlo over `plan.n_samples`
/// independent paths.
pub fn mehler_apply(
    group: &OperatorGroup,
    model: &LevyModel,
    t: f64,
    f: &dyn TestFunction,
    x: &[f64],
    plan: &McPlan,
    stream: &RngStream,
) -> Result<Estimate> {
    check_mc(group, model, x, plan)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(invalid("time must be finite and nonnegative"));
    }
    if t == 0.0 {
        return Ok(Estimate {
            value: f.eval(x),
            std_error: 0.0,
        });
    }
    let g = cached_group(group, plan.grid_step, t);
    let moved = g.apply(t, &DVector::from_column_slice(x))?;
    let values: Result<Vec<f64>> = par::map_indexed(plan.n_samples, |i| {
        one_draw(
            &g,
            model,
            t,
            moved.as_slice(),
            f,
            plan,
            &stream.index(i as u64),
        )
    })
    .into_iter()
    .collect();
    let (value, std_error) = mean_and_se(&values?);
    Ok(Estimate { value, std_error })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SemigroupCheck {
    /// `(𝒯_s(𝒯_t f))(x)` by nested Monte Carlo.
    pub nested: Estimate,
    /// `(𝒯_{t+s} f)(x)`.
    pub direct: Estimate,
    pub residual: f64,
    pub combined_se: f64,
}

impl SemigroupCheck {
    /// The residual lies within `k` combined standard errors.
    pub fn within(&self, k: f64) -> bool {
        self.residual <= k * self.combined_se
    }
}

/// Compares `𝒯_s ∘ 𝒯_t` with `𝒯_{t+s}` at `x`. The outer estimator uses
/// `outer.n_samples` draws of `V(s)`; each draw gets its own independent
/// inner estimate of `𝒯_t f` from `inner_samples` paths.
#[allow(clippy::too_many_arguments)]
pub fn semigroup_residual(
    group: &OperatorGroup,
    model: &LevyModel,
    t: f64,
    s: f64,
    f: &dyn TestFunction,
    x: &[f64],
    outer: &McPlan,
    inner_samples: usize,
    stream: &RngStream,
) -> Result<SemigroupCheck> {
    check_mc(group, model, x, outer)?;
    if inner_samples == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if !(t >= 0.0 && s >= 0.0 && (t + s).is_finite()) {
        return Err(invalid("times must be finite and nonnegative"));
    }
    let g = cached_group(group, outer.grid_step, t + s);
    let x_vec = DVector::from_column_slice(x);
    let outer_stream = stream.named("outer");
    let inner_stream = stream.named("inner");
    let moved_s = g.apply(s, &x_vec)?;

    let inner_means: Result<Vec<f64>> = par::map_indexed(outer.n_samples, |k| {
        let u: DVector<f64> = if s == 0.0 {
            moved_s.clone()
        } else {
            let p = sample_path(model, s, outer.grid_step, &outer_stream.index(k as u64))?;
            &moved_s + ou_v_at(&g, &p, s)?
        };
        if t == 0.0 {
            return Ok(f.eval(u.as_slice()));
        }
        let moved_t = g.apply(t, &u)?;
        let per_path = inner_stream.index(k as u64);
        let vals: Result<Vec<f64>> = (0..inner_samples)
            .map(|m| {
                one_draw(
                    &g,
                    model,
                    t,
                    moved_t.as_slice(),
                    f,
                    outer,
                    &per_path.index(m as u64),
                )
            })
            .collect();
        Ok(mean_and_se(&vals?).0)
    })
    .into_iter()
    .collect();
    let (nv, nse) = mean_and_se(&inner_means?);
    let nested = Estimate {
        value: nv,
        std_error: nse,
    };
    let direct = mehler_apply(&g, model, t + s, f, x, outer, &stream.named("direct"))?;
    Ok(SemigroupCheck {
        nested,
        direct,
        residual: (nested.value - direct.value).abs(),
        combined_se: (nested.std_error.powi(2) + direct.std_error.powi(2)).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::{JumpLaw, LevyModelSpec};

    fn ou_gauss() -> (OperatorGroup, LevyModel) {
        (
            OperatorGroup::from_rows(&[vec![-1.0]]).unwrap(),
            LevyModel::gaussian(vec![0.0], vec![vec![1.0]]).unwrap(),
        )
    }

    /// closed form for Q = −1, ψ(y) = −y²/2
    fn ou_gauss_exponent(t: f64, y: f64) -> f64 {
        -y * y * (1.0 - (-2.0 * t).exp()) / 4.0
    }

    #[test]
    fn gaussian_exponent_matches_closed_form() {
        let (g, m) = ou_gauss();
        let me = MehlerExponent::from_model(&g, &m).unwrap();
        assert_eq!(me.exponent(0.0, &[1.0]).unwrap(), Complex64::new(0.0, 0.0));
        let v = me.exponent(1.0, &[1.0]).unwrap();
        assert!((v.re - (-0.216_166_179_190_846_8)).abs() < 1e-10);
        assert!((v.re - ou_gauss_exponent(1.0, 1.0)).abs() < 1e-10);
        for (t, y) in [(0.3, 2.0), (4.0, -1.5), (10.0, 0.5)] {
            let v = me.exponent(t, &[y]).unwrap();
            assert!((v.re - ou_gauss_exponent(t, y)).abs() < 1e-10);
            assert!(v.im.abs() < 1e-15);
        }
    }

    #[test]
    fn zero_generator_gives_linear_exponent() {
        let g = OperatorGroup::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let m = LevyModel::new(LevyModelSpec {
            dim: 2,
            drift: vec![0.5, -1.0],
            covariance: vec![vec![1.0, 0.2], vec![0.2, 0.5]],
            jump_rate: 2.0,
            jump_law: JumpLaw::UniformBall { radius: 1.0 },
        })
        .unwrap();
        let me = MehlerExponent::from_model(&g, &m).unwrap();
        let y = [0.7, -1.3];
        let psi = me.psi().eval(&y);
        for t in [0.5, 2.0, 3.0] {
            assert!((me.exponent(t, &y).unwrap() - t * psi).norm() < 1e-10);
        }
    }

    #[test]
    fn cocycle_edges_and_gaussian_case() {
        let (g, m) = ou_gauss();
        let me = MehlerExponent::from_model(&g, &m).unwrap();
        assert_eq!(me.cocycle_residual(1.0, 0.0, &[1.0]).unwrap(), 0.0);
        assert_eq!(me.cocycle_residual(0.0, 1.0, &[1.0]).unwrap(), 0.0);
        assert!(me.cocycle_residual(1.0, 1.0, &[1.0]).unwrap() < 1e-9);
        let y = [1.0];
        // the closed form satisfies the identity exactly
        let lhs = ou_gauss_exponent(2.0, 1.0);
        let rhs = ou_gauss_exponent(1.0, 1.0) + ou_gauss_exponent(1.0, (-1f64).exp());
        assert!((lhs - rhs).abs() < 1e-15);
        assert!(me.exponent(-1.0, &y).is_err());
    }

    #[test]
    fn pareto_model_is_unsupported() {
        let g = OperatorGroup::from_rows(&[vec![-1.0]]).unwrap();
        let m = LevyModel::new(LevyModelSpec {
            dim: 1,
            drift: vec![0.0],
            covariance: vec![vec![0.0]],
            jump_rate: 1.0,
            jump_law: JumpLaw::ParetoRadial {
                alpha: 1.0,
                scale: 1.0,
            },
        })
        .unwrap();
        assert!(matches!(
            MehlerExponent::from_model(&g, &m),
            Err(Error::UnsupportedAnalytic(_))
        ));
    }

    #[test]
    fn mehler_apply_trivial_cases() {
        let (g, m) = ou_gauss();
        let plan = McPlan::new(200).with_grid_step(0.05);
        let cos = FleetFunction::Cos { y: vec![1.0] };
        let e = mehler_apply(&g, &m, 0.0, &cos, &[0.4], &plan, &RngStream::new(1)).unwrap();
        assert_eq!(
            e,
            Estimate {
                value: 0.4f64.cos(),
                std_error: 0.0
            }
        );
        let one = FleetFunction::Constant { value: 1.0 };
        let e = mehler_apply(&g, &m, 1.0, &one, &[0.4], &plan, &RngStream::new(1)).unwrap();
        assert_eq!(e.value, 1.0);
        let small = McPlan::new(10);
        assert!(matches!(
            mehler_apply(&g, &m, 1.0, &one, &[0.4], &small, &RngStream::new(1)),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn mehler_apply_cosine_oracle() {
        let (g, m) = ou_gauss();
        let plan = McPlan::new(100_000).with_grid_step(1.0 / 256.0);
        let cos = FleetFunction::Cos { y: vec![1.0] };
        let e = mehler_apply(&g, &m, 1.0, &cos, &[0.0], &plan, &RngStream::new(2024)).unwrap();
        let oracle = ou_gauss_exponent(1.0, 1.0).exp();
        assert!((oracle - 0.805_60).abs() < 1e-5);
        assert!(
            (e.value - oracle).abs() < 3.0 * e.std_error,
            "{} vs {oracle} (se {})",
            e.value,
            e.std_error
        );
        assert!(e.std_error <= 1.0 / (plan.n_samples as f64).sqrt());
    }

    #[test]
    fn semigroup_degenerate_model_is_exact() {
        let g = OperatorGroup::from_rows(&[vec![0.0]]).unwrap();
        let m = LevyModel::gaussian(vec![0.0], vec![vec![0.0]]).unwrap();
        let plan = McPlan::new(100).with_grid_step(0.25);
        for f in [
            FleetFunction::Cos { y: vec![2.0] },
            FleetFunction::Bump {
                center: vec![0.0],
                radius: 1.0,
            },
        ] {
            let r = semigroup_residual(&g, &m, 0.5, 0.5, &f, &[0.3], &plan, 5, &RngStream::new(3))
                .unwrap();
            assert_eq!(r.residual, 0.0);
        }
    }

    #[test]
    fn semigroup_composition_gaussian() {
        let (g, m) = ou_gauss();
        let plan = McPlan::new(10_000).with_grid_step(0.25);
        let cos = FleetFunction::Cos { y: vec![1.0] };
        let r = semigroup_residual(
            &g,
            &m,
            0.5,
            0.5,
            &cos,
            &[0.5],
            &plan,
            1000,
            &RngStream::new(9),
        )
        .unwrap();
        assert!(r.within(4.0), "{r:?}");
        // s = 0: the outer operator is the identity
        let r0 = semigroup_residual(
            &g,
            &m,
            0.5,
            0.0,
            &cos,
            &[0.5],
            &McPlan::new(2000).with_grid_step(0.25),
            200,
            &RngStream::new(10),
        )
        .unwrap();
        assert!(r0.within(4.0), "{r0:?}");
    }

    #[test]
    fn bump_is_bounded() {
        let b = FleetFunction::Bump {
            center: vec![0.0, 1.0],
            radius: 0.5,
        };
        assert!((b.eval(&[0.0, 1.0]) - 1.0).abs() < 1e-15);
        assert_eq!(b.eval(&[1.0, 1.0]), 0.0);
        assert!(b.eval(&[0.2, 1.1]) <= b.bound());
    }
}
