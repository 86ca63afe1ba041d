//! Batch Monte Carlo over independent Lévy paths. Path `i` of a batch always
//! draws from `stream.index(i)`, so results do not depend on scheduling.

use nalgebra::DVector;

use crate::error::{invalid, Result};
use crate::integral::{ou_v_at, ou_z, Partition};
use crate::levy::{sample_path, LevyModel, LevyPath};
use crate::par;
use crate::rng::RngStream;
use crate::semigroup::OperatorGroup;

/// Grid width used when a plan does not say otherwise.
pub const DEFAULT_GRID_STEP: f64 = 1.0 / 512.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McPlan {
    pub n_samples: usize,
    pub grid_step: f64,
}

impl McPlan {
    pub fn new(n_samples: usize) -> Self {
        Self {
            n_samples,
            grid_step: DEFAULT_GRID_STEP,
        }
    }

    pub fn with_grid_step(mut self, grid_step: f64) -> Self {
        self.grid_step = grid_step;
        self
    }
}

/// `group` with a `T(k·step)` table covering `[-span, span]` when that table
/// is of reasonable size; otherwise an uncached copy.
pub fn cached_group(group: &OperatorGroup, step: f64, span: f64) -> OperatorGroup {
    if span / step <= 65_536.0 {
        if let Ok(g) = group.with_grid_cache(step, span) {
            return g;
        }
    }
    group.clone()
}

fn check(group: &OperatorGroup, model: &LevyModel, t: f64, plan: &McPlan) -> Result<()> {
    if group.dim() != model.dim() {
        return Err(invalid("group and model dimensions differ"));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(invalid("time must be finite and nonnegative"));
    }
    if !(plan.grid_step > 0.0) {
        return Err(invalid("grid step must be positive"));
    }
    Ok(())
}

fn path(model: &LevyModel, t: f64, plan: &McPlan, stream: &RngStream) -> Result<LevyPath> {
    sample_path(model, t, plan.grid_step, stream)
}

/// `n_samples` draws of `V(t)`, one path each.
pub fn sample_v(
    group: &OperatorGroup,
    model: &LevyModel,
    t: f64,
    plan: &McPlan,
    stream: &RngStream,
) -> Result<Vec<DVector<f64>>> {
    check(group, model, t, plan)?;
    if t == 0.0 {
        return Ok(vec![DVector::zeros(group.dim()); plan.n_samples]);
    }
    let g = cached_group(group, plan.grid_step, t);
    par::map_indexed(plan.n_samples, |i| {
        ou_v_at(&g, &path(model, t, plan, &stream.index(i as u64))?, t)
    })
    .into_iter()
    .collect()
}

/// `n_samples` draws of `Z(t)`.
pub fn sample_z(
    group: &OperatorGroup,
    model: &LevyModel,
    t: f64,
    plan: &McPlan,
    stream: &RngStream,
) -> Result<Vec<DVector<f64>>> {
    Ok(sample_vz(group, model, t, plan, stream)?
        .into_iter()
        .map(|(_, z)| z)
        .collect())
}

/// `(V(t), Z(t))` computed on one shared path per draw.
pub fn sample_vz(
    group: &OperatorGroup,
    model: &LevyModel,
    t: f64,
    plan: &McPlan,
    stream: &RngStream,
) -> Result<Vec<(DVector<f64>, DVector<f64>)>> {
    check(group, model, t, plan)?;
    let d = group.dim();
    if t == 0.0 {
        return Ok(vec![(DVector::zeros(d), DVector::zeros(d)); plan.n_samples]);
    }
    let g = cached_group(group, plan.grid_step, t);
    par::map_indexed(plan.n_samples, |i| {
        let p = path(model, t, plan, &stream.index(i as u64))?;
        let part = Partition::from_path(&p, 0.0, t)?;
        Ok((
            crate::integral::ou_v(&g, &p, t, &part)?,
            ou_z(&g, &p, t, &part)?,
        ))
    })
    .into_iter()
    .collect()
}

/// Sample mean and CLT standard error. Constant inputs return their value
/// exactly with zero error.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let first = values[0];
    if values.iter().all(|v| *v == first) {
        return (first, 0.0);
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    if n == 1 {
        return (mean, f64::INFINITY);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0);
    (mean, (var / nf).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_se_constant_and_simple() {
        assert_eq!(mean_and_se(&[0.3; 1000]), (0.3, 0.0));
        let (m, se) = mean_and_se(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - 1.0).abs() < 1e-15);
    }

    #[test]
    fn samples_are_schedule_independent() {
        let g = OperatorGroup::from_rows(&[vec![-1.0]]).unwrap();
        let m = LevyModel::gaussian(vec![0.2], vec![vec![1.0]]).unwrap();
        let plan = McPlan::new(64).with_grid_step(1.0 / 64.0);
        let s = RngStream::new(4);
        let a = sample_v(&g, &m, 1.0, &plan, &s).unwrap();
        let b = par::single_threaded(|| sample_v(&g, &m, 1.0, &plan, &s).unwrap());
        assert_eq!(a, b);
    }
}
