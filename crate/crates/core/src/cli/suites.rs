use rand::Rng;

use crate::error::{Error, Result};
use crate::integral::{ou_z_trajectory, path_on, reconstruct_y, Partition, Trajectory};
use crate::levy::{char_exponent, empirical_cf, sample_path, LevyModel};
use crate::mc::{sample_v, sample_z, McPlan};
use crate::mehler::{semigroup_residual, MehlerExponent};
use crate::rng::RngStream;
use crate::semigroup::OperatorGroup;
use crate::stats::ks_panel;
use crate::urbanik::{
    factor_convergence, infinitesimality_profile, InfinitesimalityProfile, StationaryExponent,
};

use super::config::{RunConfig, SUITES};
use super::report::{fmt_all, indexed, num, CheckRecord, Provenance, Table, VerificationReport};

/// A finished suite: its report and the CSV tables that go with it.
#[derive(Debug, Clone)]
pub struct SuiteOutput {
    pub report: VerificationReport,
    pub tables: Vec<Table>,
}

impl SuiteOutput {
    /// Writes `<suite>_report.json` and every table into `dir`.
    pub fn write(&self, dir: &std::path::Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(
            dir.join(format!("{}_report.json", self.report.suite)),
            self.report.to_json()? + "\n",
        )?;
        for t in &self.tables {
            t.write(dir)?;
        }
        Ok(())
    }
}

struct Ctx<'a> {
    config: &'a RunConfig,
    group: OperatorGroup,
    model: &'a LevyModel,
    stream: RngStream,
    dim: usize,
}

impl Ctx<'_> {
    fn mehler(&self) -> Result<MehlerExponent> {
        MehlerExponent::with_tolerance(
            self.group.clone(),
            char_exponent(self.model)?,
            self.config.tolerances.quad_tol,
        )
    }
}

/// Runs one named suite. Deterministic given the config (seed included).
pub fn run_suite(config: &RunConfig, suite: &str) -> Result<SuiteOutput> {
    if !SUITES.contains(&suite) {
        return Err(Error::UnknownSuite(suite.to_string()));
    }
    config.validate()?;
    let ctx = Ctx {
        config,
        group: config.group()?,
        model: &config.model,
        stream: RngStream::new(config.seed).named(suite),
        dim: config.model.dim(),
    };
    let (records, tables) = match suite {
        "cocycle" => cocycle(&ctx)?,
        "semigroup" => semigroup(&ctx)?,
        "representation" => representation(&ctx)?,
        "roundtrip" => roundtrip(&ctx)?,
        "urbanik" => urbanik(&ctx)?,
        "marginals" => marginals(&ctx)?,
        _ => infinitesimal(&ctx)?,
    };
    let report = VerificationReport::new(suite, records, Provenance::for_config(config));
    Ok(SuiteOutput { report, tables })
}

type SuiteResult = Result<(Vec<CheckRecord>, Vec<Table>)>;

fn header(lead: &[&str], d: usize, tail: &[&str]) -> Vec<String> {
    lead.iter()
        .map(|s| s.to_string())
        .chain(indexed("y", d))
        .chain(tail.iter().map(|s| s.to_string()))
        .collect()
}

fn row(lead: &[f64], y: &[f64], residual: f64, tol: f64, pass: bool) -> Vec<String> {
    let mut r = fmt_all(lead);
    r.extend(fmt_all(y));
    r.extend([num(residual), num(tol), pass.to_string()]);
    r
}

fn cocycle(ctx: &Ctx) -> SuiteResult {
    let me = ctx.mehler()?;
    let tol = ctx.config.tolerances.cocycle;
    let mut table = Table::new(
        "cocycle",
        header(&["t", "s"], ctx.dim, &["residual", "tolerance", "pass"]),
    );
    let mut records = Vec::new();
    for &t in &ctx.config.grids.t {
        for &s in &ctx.config.grids.s {
            for y in ctx.config.y_grid() {
                let rec = CheckRecord::strict("cocycle", me.cocycle_residual(t, s, &y)?, tol)
                    .with("t", t)
                    .with("s", s)
                    .with("y", &y);
                table.push(row(&[t, s], &y, rec.residual, tol, rec.pass));
                records.push(rec);
            }
        }
    }
    Ok((records, vec![table]))
}

fn semigroup(ctx: &Ctx) -> SuiteResult {
    let c = ctx.config;
    let outer =
        McPlan::new(c.n_samples.semigroup_outer).with_grid_step(c.grids.semigroup_grid_step);
    let x = c.x();
    let k = c.tolerances.semigroup_sigmas;
    let mut table = Table::new(
        "semigroup",
        [
            "t",
            "s",
            "function",
            "nested",
            "direct",
            "residual",
            "tolerance",
            "pass",
        ]
        .map(String::from)
        .to_vec(),
    );
    let mut records = Vec::new();
    for (pi, &(t, s)) in c.grids.semigroup_pairs.iter().enumerate() {
        for (fi, f) in c.test_functions().iter().enumerate() {
            let stream = ctx.stream.index(pi as u64).index(fi as u64);
            let check = semigroup_residual(
                &ctx.group,
                ctx.model,
                t,
                s,
                f,
                &x,
                &outer,
                c.n_samples.semigroup_inner,
                &stream,
            )?;
            let tol = k * check.combined_se;
            let rec = CheckRecord::new("semigroup", check.residual, tol)
                .with("t", t)
                .with("s", s)
                .with("function", f)
                .with("x", &x)
                .with("nested", check.nested)
                .with("direct", check.direct);
            let name = serde_json::to_string(f)?;
            table.push(vec![
                num(t),
                num(s),
                name,
                num(check.nested.value),
                num(check.direct.value),
                num(check.residual),
                num(tol),
                rec.pass.to_string(),
            ]);
            records.push(rec);
        }
    }
    Ok((records, vec![table]))
}

fn representation(ctx: &Ctx) -> SuiteResult {
    let c = ctx.config;
    let me = ctx.mehler()?;
    let n = c.n_samples.representation;
    let plan = McPlan::new(n).with_grid_step(c.grids.grid_step);
    let tol = c.tolerances.cf_sigmas / (n as f64).sqrt();
    let mut table = Table::new(
        "representation",
        header(
            &["t"],
            ctx.dim,
            &[
                "empirical_re",
                "empirical_im",
                "exact_re",
                "exact_im",
                "residual",
                "tolerance",
                "pass",
            ],
        ),
    );
    let mut records = Vec::new();
    for (ti, &t) in c.grids.representation_times.iter().enumerate() {
        let samples = sample_v(
            &ctx.group,
            ctx.model,
            t,
            &plan,
            &ctx.stream.index(ti as u64),
        )?;
        for y in c.y_grid() {
            let (emp, _) = empirical_cf(&samples, &y)?;
            let exact = me.characteristic_function(t, &y)?;
            let residual = (emp.re - exact.re).abs().max((emp.im - exact.im).abs());
            let rec = CheckRecord::new("cf_consistency", residual, tol)
                .with("t", t)
                .with("y", &y)
                .with("n", n);
            let mut r = fmt_all(&[t]);
            r.extend(fmt_all(&y));
            r.extend(fmt_all(&[
                emp.re, emp.im, exact.re, exact.im, residual, tol,
            ]));
            r.push(rec.pass.to_string());
            table.push(r);
            records.push(rec);
        }
    }
    Ok((records, vec![table]))
}

fn roundtrip(ctx: &Ctx) -> SuiteResult {
    let c = ctx.config;
    let horizon = c.grids.roundtrip_horizon;
    let level = c.grids.roundtrip_level;
    let tol = c.tolerances.roundtrip;
    let step = horizon / 2f64.powi(level as i32);
    let mut table = Table::new(
        "roundtrip",
        ["path", "points", "max_error", "tolerance", "pass"]
            .map(String::from)
            .to_vec(),
    );
    let mut records = Vec::new();
    let mut first: Option<Trajectory> = None;
    for i in 0..c.n_samples.roundtrip_paths {
        let path = sample_path(ctx.model, horizon, step, &ctx.stream.index(i as u64))?;
        let partition = Partition::dyadic(0.0, horizon, level)?.merged_with_jumps(&path);
        let z = ou_z_trajectory(&ctx.group, &path, &partition)?;
        let rebuilt = reconstruct_y(&ctx.group, &z, &partition)?;
        let truth = path_on(&path, &partition)?;
        let mut err: f64 = 0.0;
        for k in 0..truth.len() {
            for (a, b) in rebuilt.value(k).iter().zip(truth.value(k)) {
                err = err.max((a - b).abs());
            }
        }
        let rec = CheckRecord::strict("roundtrip", err, tol)
            .with("path", i)
            .with("points", partition.len());
        table.push(vec![
            i.to_string(),
            partition.len().to_string(),
            num(err),
            num(tol),
            rec.pass.to_string(),
        ]);
        records.push(rec);
        first.get_or_insert(z);
    }
    let mut tables = vec![table];
    if let Some(z) = first {
        let mut buf = Vec::new();
        z.write_csv(&mut buf, "v")?;
        let mut reader = csv::Reader::from_reader(buf.as_slice());
        let mut traj = Table::new(
            "trajectory",
            reader.headers()?.iter().map(String::from).collect(),
        );
        for rec in reader.records() {
            traj.push(rec?.iter().map(String::from).collect());
        }
        tables.push(traj);
    }
    Ok((records, tables))
}

fn urbanik(ctx: &Ctx) -> SuiteResult {
    let c = ctx.config;
    if !ctx.model.jump_law().has_finite_log_moment() {
        return Err(Error::LogMomentInfinite(
            ctx.model.jump_law().name().to_string(),
        ));
    }
    let se = StationaryExponent::new(ctx.mehler()?)?;
    let ys = c.y_grid();
    let mut records = Vec::new();

    let tol = c.tolerances.decomposability;
    let mut decomp = Table::new(
        "decomposability",
        header(&["t"], ctx.dim, &["residual", "tol", "pass"]),
    );
    for &t in &c.grids.decomposability_times {
        for y in &ys {
            let rec =
                CheckRecord::strict("decomposability", se.decomposability_residual(t, y)?, tol)
                    .with("t", t)
                    .with("y", y);
            decomp.push(row(&[t], y, rec.residual, tol, rec.pass));
            records.push(rec);
        }
    }

    let tol = c.tolerances.diamond;
    let mut diamond = Table::new(
        "diamond",
        ["t", "s", "u", "residual", "tol", "pass"]
            .map(String::from)
            .to_vec(),
    );
    let mut rng = ctx.stream.named("diamond").rng();
    for _ in 0..c.grids.diamond_triples {
        let (t, s, u): (f64, f64, f64) = (
            rng.random_range(0.0..2.0),
            rng.random_range(0.0..2.0),
            rng.random_range(0.0..2.0),
        );
        let mut worst: f64 = 0.0;
        for y in &ys {
            worst = worst.max(se.diamond_associativity(t, s, u, y)?);
        }
        let rec = CheckRecord::strict("diamond_associativity", worst, tol)
            .with("t", t)
            .with("s", s)
            .with("u", u);
        diamond.push(vec![
            num(t),
            num(s),
            num(u),
            num(worst),
            num(tol),
            rec.pass.to_string(),
        ]);
        records.push(rec);
    }

    let times = if c.grids.convergence_times.is_empty() {
        let a = ctx.group.spectral_abscissa().abs();
        (0..=10).map(|k| k as f64 / a).collect()
    } else {
        c.grids.convergence_times.clone()
    };
    let conv = factor_convergence(&se, &times, &ys)?;
    let mut table = Table::new(
        "factor_convergence",
        ["t", "gap"].map(String::from).to_vec(),
    );
    for (t, g) in &conv.rows {
        table.push(vec![num(*t), num(*g)]);
    }
    let rise = conv
        .rows
        .windows(2)
        .map(|w| w[1].1 - w[0].1)
        .fold(0.0f64, f64::max);
    records.push(
        CheckRecord::new(
            "factor_convergence_monotone",
            rise,
            c.tolerances.convergence_slack,
        )
        .with("times", &times),
    );
    records.push(
        CheckRecord::strict(
            "factor_convergence_final",
            conv.final_gap(),
            c.tolerances.convergence_final,
        )
        .with("t", times.last().copied()),
    );
    Ok((records, vec![decomp, diamond, table]))
}

fn marginals(ctx: &Ctx) -> SuiteResult {
    let c = ctx.config;
    // without a Gaussian part the law has atoms, and KS then reacts to
    // O(grid step) shifts of those atoms between the two discretizations
    if ctx.model.covariance().iter().all(|v| *v == 0.0) {
        return Err(Error::InvalidInput(
            "the marginals suite needs a nonzero Gaussian covariance (laws with atoms are not KS-comparable)".into(),
        ));
    }
    let plan = McPlan::new(c.n_samples.marginals).with_grid_step(c.grids.grid_step);
    let z_times = c
        .grids
        .marginal_z_times
        .clone()
        .unwrap_or_else(|| c.grids.marginal_times.clone());
    if z_times.len() != c.grids.marginal_times.len() {
        return Err(Error::Config(
            "marginal_z_times must match marginal_times in length".into(),
        ));
    }
    let mut table = Table::new(
        "marginals",
        [
            "t_v",
            "t_z",
            "direction",
            "statistic",
            "critical_value",
            "pass",
        ]
        .map(String::from)
        .to_vec(),
    );
    let mut records = Vec::new();
    for (i, (&tv, &tz)) in c.grids.marginal_times.iter().zip(&z_times).enumerate() {
        let base = ctx.stream.index(i as u64);
        let v = sample_v(&ctx.group, ctx.model, tv, &plan, &base.named("v"))?;
        let z = sample_z(&ctx.group, ctx.model, tz, &plan, &base.named("z"))?;
        for r in ks_panel(&v, &z, c.tolerances.ks_alpha, &ctx.stream.named("panel"))? {
            let dir = r.projection.clone().unwrap_or_default();
            let rec = CheckRecord::strict("marginal_ks", r.statistic, r.critical_value)
                .with("t_v", tv)
                .with("t_z", tz)
                .with("direction", &dir)
                .with("alpha", r.alpha);
            let dir_text = dir.iter().map(|x| num(*x)).collect::<Vec<_>>().join(" ");
            table.push(vec![
                num(tv),
                num(tz),
                dir_text,
                num(r.statistic),
                num(r.critical_value),
                rec.pass.to_string(),
            ]);
            records.push(rec);
        }
    }
    Ok((records, vec![table]))
}

fn normal_tail(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(x / std::f64::consts::SQRT_2)
}

/// `max_j P(|T(j·dt) V(dt)| >= ε)` for a one-dimensional model without jumps.
pub fn gaussian_tail_oracle(
    group: &OperatorGroup,
    model: &LevyModel,
    t: f64,
    n: usize,
    epsilon: f64,
) -> Option<f64> {
    if model.dim() != 1 || model.jump_rate() > 0.0 {
        return None;
    }
    let q = group.generator()[(0, 0)];
    let dt = t / n as f64;
    // ∫_0^dt e^{qr} dr and ∫_0^dt e^{2qr} dr
    let int1 = if q == 0.0 { dt } else { (q * dt).exp_m1() / q };
    let int2 = if q == 0.0 {
        dt
    } else {
        (2.0 * q * dt).exp_m1() / (2.0 * q)
    };
    let mean = model.drift()[0] * int1;
    let sd = (model.covariance()[(0, 0)] * int2).sqrt();
    let tail = |c: f64| {
        let (m, s) = (c * mean, c.abs() * sd);
        if s == 0.0 {
            return if m.abs() >= epsilon { 1.0 } else { 0.0 };
        }
        normal_tail((epsilon - m) / s) + normal_tail((epsilon + m) / s)
    };
    Some(
        (0..n)
            .map(|j| tail((q * j as f64 * dt).exp()))
            .fold(0.0, f64::max),
    )
}

fn infinitesimal(ctx: &Ctx) -> SuiteResult {
    let c = ctx.config;
    let plan = McPlan::new(c.n_samples.infinitesimal).with_grid_step(c.grids.grid_step);
    let (t, eps) = (c.grids.infinitesimal_t, c.grids.epsilon);
    let profiles: Vec<InfinitesimalityProfile> = c
        .grids
        .infinitesimal_n
        .iter()
        .map(|&n| {
            infinitesimality_profile(
                &ctx.group,
                ctx.model,
                t,
                n,
                eps,
                &plan,
                &ctx.stream.index(n as u64),
            )
        })
        .collect::<Result<_>>()?;
    let mut table = Table::new(
        "infinitesimal",
        ["n", "j_argmax", "tail_estimate", "wilson_halfwidth"]
            .map(String::from)
            .to_vec(),
    );
    for p in &profiles {
        table.push(vec![
            p.n.to_string(),
            p.j_argmax.to_string(),
            num(p.tail_estimate),
            num(p.wilson_halfwidth),
        ]);
    }
    let mut records = Vec::new();
    let k = c.tolerances.monotone_halfwidths;
    for w in profiles.windows(2) {
        let rise = w[1].tail_estimate - w[0].tail_estimate;
        let tol = k * w[0].wilson_halfwidth.max(w[1].wilson_halfwidth);
        records.push(CheckRecord::new("tail_nonincreasing", rise, tol).with("n", [w[0].n, w[1].n]));
    }
    if let Some(last) = profiles.last() {
        if let Some(p) = gaussian_tail_oracle(&ctx.group, ctx.model, t, last.n, eps) {
            let se = (p * (1.0 - p) / last.n_samples as f64).sqrt();
            let residual = (last.tail_estimate - p).abs();
            records.push(
                CheckRecord::new(
                    "gaussian_tail_oracle",
                    residual,
                    c.tolerances.infinitesimal_sigmas * se,
                )
                .with("n", last.n)
                .with("oracle", p)
                .with("estimate", last.tail_estimate),
            );
        }
    }
    Ok((records, vec![table]))
}
