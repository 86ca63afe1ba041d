//! Pathwise random integrals `∫_(a,b] g(s) dY(s)` for operator-valued `g` of
//! bounded variation, defined through integration by parts:
//!
//! `g(b)Y(b) − g(a)Y(a) − Σ_j (g(t_j) − g(t_{j−1})) Y(t_j)`.
//!
//! By Abel summation this equals the left sum `Σ_j g(t_{j−1})(Y(t_j) − Y(t_{j−1}))`,
//! which is the value returned; the literal form is evaluated alongside and the
//! two must agree.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::levy::LevyPath;
use crate::semigroup::{write_row_major, OperatorGroup};

/// Relative agreement demanded between the left-sum and literal forms.
pub const FORM_AGREEMENT: f64 = 1e-9;

/// Sorted points `a = t_0 < t_1 < … < t_n = b` of the interval `(a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    times: Vec<f64>,
}

impl Partition {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(invalid("partition needs at least two points"));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(invalid("partition times must be finite"));
        }
        if !times.windows(2).all(|w| w[0] < w[1]) {
            return Err(invalid("partition times must be strictly increasing"));
        }
        Ok(Self { times })
    }

    pub fn uniform(a: f64, b: f64, n: usize) -> Result<Self> {
        if n == 0 || !(a < b) {
            return Err(invalid("uniform partition needs a < b and n >= 1"));
        }
        let h = (b - a) / n as f64;
        let mut times: Vec<f64> = (0..n).map(|k| a + k as f64 * h).collect();
        times.push(b);
        Self::new(times)
    }

    /// `2^level` equal cells.
    pub fn dyadic(a: f64, b: f64, level: u32) -> Result<Self> {
        Self::uniform(a, b, 1usize << level)
    }

    /// Every stored time of `path` strictly inside `(a, b)`, plus both ends.
    /// Always contains the jump times in `(a, b]`.
    pub fn from_path(path: &LevyPath, a: f64, b: f64) -> Result<Self> {
        if !(0.0 <= a && a < b && b <= path.horizon()) {
            return Err(invalid(format!(
                "interval ({a}, {b}] not inside [0, {}]",
                path.horizon()
            )));
        }
        let mut times = vec![a];
        times.extend(path.times().iter().copied().filter(|&t| t > a && t < b));
        times.push(b);
        Self::new(times)
    }

    /// This partition with the jump times of `path` inside `(a, b]` added.
    pub fn merged_with_jumps(&self, path: &LevyPath) -> Self {
        let (a, b) = (self.start(), self.end());
        let mut times = self.times.clone();
        times.extend(
            path.jumps()
                .iter()
                .map(|(t, _)| *t)
                .filter(|&t| t > a && t <= b),
        );
        times.sort_by(f64::total_cmp);
        times.dedup();
        Self { times }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn mesh(&self) -> f64 {
        self.times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }
}

/// A continuous operator-valued function of locally bounded variation.
pub trait OperatorIntegrand {
    fn dim(&self) -> usize;

    /// Writes `g(t)` row-major into `out` (length `dim²`).
    fn eval_into(&self, t: f64, out: &mut [f64]);
}

/// Integrand backed by a closure returning a matrix.
pub struct FnIntegrand<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(f64) -> DMatrix<f64>> FnIntegrand<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(f64) -> DMatrix<f64>> OperatorIntegrand for FnIntegrand<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_into(&self, t: f64, out: &mut [f64]) {
        write_row_major(&(self.f)(t), out);
    }
}

/// The three integrands built from an operator group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GroupKernel {
    /// `s ↦ T(t − s)`
    Shifted(f64),
    /// `s ↦ T(s)`
    Forward,
    /// `s ↦ T(−s)`
    Backward,
}

pub struct GroupIntegrand<'a> {
    pub group: &'a OperatorGroup,
    pub kernel: GroupKernel,
}

impl OperatorIntegrand for GroupIntegrand<'_> {
    fn dim(&self) -> usize {
        self.group.dim()
    }

    fn eval_into(&self, s: f64, out: &mut [f64]) {
        let arg = match self.kernel {
            GroupKernel::Shifted(t) => t - s,
            GroupKernel::Forward => s,
            GroupKernel::Backward => -s,
        };
        self.group.exp_into(arg, out);
    }
}

/// Values of a process at the points of a partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dim: usize,
    times: Vec<f64>,
    values: Vec<f64>,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn last(&self) -> DVector<f64> {
        DVector::from_column_slice(self.value(self.len() - 1))
    }

    /// CSV with header `time, <prefix>_1..<prefix>_d`.
    pub fn write_csv<W: Write>(&self, out: W, prefix: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["time".to_string()];
        header.extend((1..=self.dim).map(|i| format!("{prefix}_{i}")));
        w.write_record(&header)?;
        for k in 0..self.len() {
            let mut row = vec![self.times[k].to_string()];
            row.extend(self.value(k).iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn mat_vec_acc(m: &[f64], x: &[f64], sign: f64, acc: &mut [f64]) {
    let d = x.len();
    for i in 0..d {
        let row = &m[i * d..(i + 1) * d];
        acc[i] += sign * row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// Evaluates both forms of the discrete integral over `times`, where `value(k)`
/// is the integrator at `times[k]`. When `running` is given, the left sum at
/// every point (0 at the start) is appended to it.
fn integrate<'v>(
    g: &dyn OperatorIntegrand,
    times: &[f64],
    value: impl Fn(usize) -> &'v [f64],
    mut running: Option<&mut Vec<f64>>,
) -> Result<DVector<f64>> {
    let d = g.dim();
    let mut g_prev = vec![0.0; d * d];
    let mut g_cur = vec![0.0; d * d];
    let mut g_first = vec![0.0; d * d];
    g.eval_into(times[0], &mut g_prev);
    g_first.copy_from_slice(&g_prev);

    let mut left = vec![0.0; d];
    // Σ_j (g_j − g_{j−1}) Y_j
    let mut stieltjes = vec![0.0; d];
    let mut g0_y0 = vec![0.0; d];
    mat_vec_acc(&g_first, value(0), 1.0, &mut g0_y0);
    let mut inc = vec![0.0; d];
    let mut diff = vec![0.0; d * d];
    let mut scale: f64 = 0.0;
    let mut worst: f64 = 0.0;

    if let Some(r) = running.as_deref_mut() {
        r.extend(std::iter::repeat_n(0.0, d));
    }
    for k in 1..times.len() {
        g.eval_into(times[k], &mut g_cur);
        let (y_prev, y_cur) = (value(k - 1), value(k));
        for i in 0..d {
            inc[i] = y_cur[i] - y_prev[i];
        }
        mat_vec_acc(&g_prev, &inc, 1.0, &mut left);
        for (dst, (c, p)) in diff.iter_mut().zip(g_cur.iter().zip(&g_prev)) {
            *dst = c - p;
        }
        mat_vec_acc(&diff, y_cur, 1.0, &mut stieltjes);

        // literal form at b = t_k
        let mut literal = vec![0.0; d];
        mat_vec_acc(&g_cur, y_cur, 1.0, &mut literal);
        let g_norm = g_cur.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let y_norm = y_cur.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        scale = scale.max(g_norm * y_norm);
        for i in 0..d {
            literal[i] -= g0_y0[i] + stieltjes[i];
            worst = worst.max((literal[i] - left[i]).abs());
        }
        if let Some(r) = running.as_deref_mut() {
            r.extend_from_slice(&left);
        }
        std::mem::swap(&mut g_prev, &mut g_cur);
    }
    let allowed = FORM_AGREEMENT * (1.0 + scale);
    if worst > allowed {
        return Err(Error::IntegralInconsistent {
            diff: worst,
            allowed,
        });
    }
    Ok(DVector::from_vec(left))
}

fn check_against_path(path: &LevyPath, partition: &Partition) -> Result<()> {
    let (a, b) = (partition.start(), partition.end());
    if a < 0.0 || b > path.horizon() {
        return Err(invalid(format!(
            "partition ({a}, {b}] outside path horizon [0, {}]",
            path.horizon()
        )));
    }
    for (t, _) in path.jumps() {
        if *t > a
            && *t <= b
            && partition
                .times()
                .binary_search_by(|s| s.total_cmp(t))
                .is_err()
        {
            return Err(invalid(format!(
                "partition misses jump time {t}; merge jumps first"
            )));
        }
    }
    Ok(())
}

/// Path values at the partition points, right-continuous, in one sweep.
fn path_indices(path: &LevyPath, partition: &Partition) -> Vec<usize> {
    let pt = path.times();
    let mut idx = 0;
    partition
        .times()
        .iter()
        .map(|&t| {
            while idx + 1 < pt.len() && pt[idx + 1] <= t {
                idx += 1;
            }
            idx
        })
        .collect()
}

/// `∫_(a,b] g(s) dY(s)` over `partition`, which must contain every jump time
/// of `path` in `(a, b]`.
pub fn random_integral(
    g: &dyn OperatorIntegrand,
    path: &LevyPath,
    partition: &Partition,
) -> Result<DVector<f64>> {
    if g.dim() != path.dim() {
        return Err(invalid("integrand and path dimensions differ"));
    }
    check_against_path(path, partition)?;
    let idx = path_indices(path, partition);
    integrate(g, partition.times(), |k| path.value(idx[k]), None)
}

fn check_group(group: &OperatorGroup, path: &LevyPath) -> Result<()> {
    if group.dim() != path.dim() {
        return Err(invalid("group and path dimensions differ"));
    }
    Ok(())
}

fn check_origin(partition: &Partition, t: f64) -> Result<()> {
    if partition.start() != 0.0 || partition.end() != t {
        return Err(invalid(format!("partition must cover (0, {t}]")));
    }
    Ok(())
}

/// `V(t) = ∫_(0,t] T(t − s) dY(s)`.
pub fn ou_v(
    group: &OperatorGroup,
    path: &LevyPath,
    t: f64,
    partition: &Partition,
) -> Result<DVector<f64>> {
    check_group(group, path)?;
    if t == 0.0 {
        return Ok(DVector::zeros(group.dim()));
    }
    check_origin(partition, t)?;
    random_integral(
        &GroupIntegrand {
            group,
            kernel: GroupKernel::Shifted(t),
        },
        path,
        partition,
    )
}

/// `V(t)` on the partition formed by the path's own grid and jump times.
pub fn ou_v_at(group: &OperatorGroup, path: &LevyPath, t: f64) -> Result<DVector<f64>> {
    if t == 0.0 {
        check_group(group, path)?;
        return Ok(DVector::zeros(group.dim()));
    }
    ou_v(group, path, t, &Partition::from_path(path, 0.0, t)?)
}

/// `Z(t) = ∫_(0,t] T(s) dY(s)`.
pub fn ou_z(
    group: &OperatorGroup,
    path: &LevyPath,
    t: f64,
    partition: &Partition,
) -> Result<DVector<f64>> {
    check_group(group, path)?;
    if t == 0.0 {
        return Ok(DVector::zeros(group.dim()));
    }
    check_origin(partition, t)?;
    random_integral(
        &GroupIntegrand {
            group,
            kernel: GroupKernel::Forward,
        },
        path,
        partition,
    )
}

/// `Z` at every point of `partition` (which must start at 0), in one pass.
pub fn ou_z_trajectory(
    group: &OperatorGroup,
    path: &LevyPath,
    partition: &Partition,
) -> Result<Trajectory> {
    check_group(group, path)?;
    if partition.start() != 0.0 {
        return Err(invalid("Z trajectories start at time 0"));
    }
    check_against_path(path, partition)?;
    let idx = path_indices(path, partition);
    let mut values = Vec::with_capacity(partition.len() * group.dim());
    let g = GroupIntegrand {
        group,
        kernel: GroupKernel::Forward,
    };
    integrate(
        &g,
        partition.times(),
        |k| path.value(idx[k]),
        Some(&mut values),
    )?;
    Ok(Trajectory {
        dim: group.dim(),
        times: partition.times().to_vec(),
        values,
    })
}

/// `Y` on `partition` recovered from a `Z` trajectory via `Y(t) = ∫_(0,t] T(−s) dZ(s)`.
pub fn reconstruct_y(
    group: &OperatorGroup,
    z: &Trajectory,
    partition: &Partition,
) -> Result<Trajectory> {
    if z.dim() != group.dim() {
        return Err(invalid("trajectory and group dimensions differ"));
    }
    if z.times() != partition.times() {
        return Err(invalid("trajectory was not produced on this partition"));
    }
    let mut values = Vec::with_capacity(z.values.len());
    let g = GroupIntegrand {
        group,
        kernel: GroupKernel::Backward,
    };
    integrate(&g, partition.times(), |k| z.value(k), Some(&mut values))?;
    Ok(Trajectory {
        dim: group.dim(),
        times: z.times.clone(),
        values,
    })
}

/// The path itself sampled on `partition`, for comparisons with [`reconstruct_y`].
pub fn path_on(path: &LevyPath, partition: &Partition) -> Result<Trajectory> {
    check_against_path(path, partition)?;
    let idx = path_indices(path, partition);
    let mut values = Vec::with_capacity(partition.len() * path.dim());
    for &i in &idx {
        values.extend_from_slice(path.value(i));
    }
    Ok(Trajectory {
        dim: path.dim(),
        times: partition.times().to_vec(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::{sample_path, JumpLaw, LevyModel, LevyModelSpec};
    use crate::rng::RngStream;

    fn drift_only(b: f64) -> LevyModel {
        LevyModel::gaussian(vec![b], vec![vec![0.0]]).unwrap()
    }

    fn cp_model(dim: usize) -> LevyModel {
        LevyModel::new(LevyModelSpec {
            dim,
            drift: vec![0.3; dim],
            covariance: (0..dim)
                .map(|i| (0..dim).map(|j| if i == j { 0.5 } else { 0.0 }).collect())
                .collect(),
            jump_rate: 4.0,
            jump_law: JumpLaw::Gaussian {
                mean: vec![1.0; dim],
                cov: (0..dim)
                    .map(|i| (0..dim).map(|j| if i == j { 0.2 } else { 0.0 }).collect())
                    .collect(),
            },
        })
        .unwrap()
    }

    #[test]
    fn identity_integrand_gives_increment() {
        let m = cp_model(2);
        let path = sample_path(&m, 2.0, 0.05, &RngStream::new(1)).unwrap();
        let part = Partition::from_path(&path, 0.5, 1.7).unwrap();
        let id = FnIntegrand::new(2, |_| DMatrix::identity(2, 2));
        let v = random_integral(&id, &path, &part).unwrap();
        let (ya, yb) = (path.value_at(0.5).unwrap(), path.value_at(1.7).unwrap());
        for i in 0..2 {
            assert!((v[i] - (yb[i] - ya[i])).abs() < 1e-12);
        }
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -0.5, 3.0]);
        let cc = c.clone();
        let w = random_integral(&FnIntegrand::new(2, move |_| cc.clone()), &path, &part).unwrap();
        let expect = &c * DVector::from_fn(2, |i, _| yb[i] - ya[i]);
        assert!((w - expect).amax() < 1e-12);
    }

    #[test]
    fn deterministic_riemann_integral_converges() {
        // ∫_0^1 e^{-s} d(s) = 1 - e^{-1}
        let path = sample_path(&drift_only(1.0), 1.0, 1.0 / 4096.0, &RngStream::new(0)).unwrap();
        let g = FnIntegrand::new(1, |s: f64| DMatrix::from_element(1, 1, (-s).exp()));
        let exact = 1.0 - (-1f64).exp();
        let mut prev_err = f64::INFINITY;
        for level in 4..=10 {
            let part = Partition::dyadic(0.0, 1.0, level).unwrap();
            let err = (random_integral(&g, &path, &part).unwrap()[0] - exact).abs();
            let n = (1u64 << level) as f64;
            assert!(err < 1.0 / n, "level {level}: {err}");
            assert!(err < prev_err);
            prev_err = err;
        }
    }

    #[test]
    fn missing_jump_or_out_of_range_partition_rejected() {
        let m = cp_model(1);
        let path = sample_path(&m, 1.0, 0.25, &RngStream::new(4)).unwrap();
        assert!(!path.jumps().is_empty());
        let id = FnIntegrand::new(1, |_| DMatrix::identity(1, 1));
        let coarse = Partition::uniform(0.0, 1.0, 4).unwrap();
        assert!(random_integral(&id, &path, &coarse).is_err());
        assert!(random_integral(&id, &path, &coarse.merged_with_jumps(&path)).is_ok());
        let beyond = Partition::uniform(0.0, 2.0, 4).unwrap();
        assert!(random_integral(&id, &path, &beyond).is_err());
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::new(vec![0.0]).is_err());
        assert!(Partition::new(vec![0.0, 0.0]).is_err());
        assert!(Partition::new(vec![0.0, 1.0, 0.5]).is_err());
        assert!(Partition::uniform(1.0, 1.0, 4).is_err());
        let p = Partition::dyadic(0.0, 1.0, 3).unwrap();
        assert_eq!(p.len(), 9);
        assert_eq!(p.mesh(), 0.125);
    }

    #[test]
    fn zero_path_and_zero_generator() {
        let zero = LevyModel::gaussian(vec![0.0], vec![vec![0.0]]).unwrap();
        let g = OperatorGroup::from_rows(&[vec![-1.0]]).unwrap();
        let p = sample_path(&zero, 1.0, 0.1, &RngStream::new(1)).unwrap();
        assert_eq!(ou_v_at(&g, &p, 1.0).unwrap()[0], 0.0);

        let flat = OperatorGroup::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let m = cp_model(2);
        let p = sample_path(&m, 1.0, 0.1, &RngStream::new(2)).unwrap();
        let part = Partition::from_path(&p, 0.0, 0.8).unwrap();
        let y = p.value_at(0.8).unwrap();
        let v = ou_v(&flat, &p, 0.8, &part).unwrap();
        let z = ou_z(&flat, &p, 0.8, &part).unwrap();
        for i in 0..2 {
            assert!((v[i] - y[i]).abs() < 1e-12 && (z[i] - y[i]).abs() < 1e-12);
        }
        assert_eq!(ou_z(&flat, &p, 0.0, &part).unwrap(), DVector::zeros(2));
    }

    #[test]
    fn round_trip_nilpotent_compound_poisson() {
        let g = OperatorGroup::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let m = cp_model(2);
        let path = sample_path(&m, 1.0, 1.0 / 256.0, &RngStream::new(77)).unwrap();
        let part = Partition::dyadic(0.0, 1.0, 8)
            .unwrap()
            .merged_with_jumps(&path);
        let z = ou_z_trajectory(&g, &path, &part).unwrap();
        let y_hat = reconstruct_y(&g, &z, &part).unwrap();
        let y = path_on(&path, &part).unwrap();
        for k in 0..part.len() {
            for i in 0..2 {
                assert!((y_hat.value(k)[i] - y.value(k)[i]).abs() < 1e-9);
            }
        }
        let other = Partition::dyadic(0.0, 1.0, 7)
            .unwrap()
            .merged_with_jumps(&path);
        assert!(reconstruct_y(&g, &z, &other).is_err());
    }

    #[test]
    fn trajectory_end_matches_single_evaluation() {
        let g = OperatorGroup::from_rows(&[vec![-0.5, 1.0], vec![-1.0, -0.5]]).unwrap();
        let m = cp_model(2);
        let path = sample_path(&m, 2.0, 0.01, &RngStream::new(3)).unwrap();
        let part = Partition::from_path(&path, 0.0, 2.0).unwrap();
        let traj = ou_z_trajectory(&g, &path, &part).unwrap();
        let z = ou_z(&g, &path, 2.0, &part).unwrap();
        assert!((traj.last() - z).amax() < 1e-12);
        let mut buf = Vec::new();
        traj.write_csv(&mut buf, "v").unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("time,v_1,v_2\n"));
    }
}
