//! Exploratory study of the stationary integral `lim ∫_0^t T(s) dY(s)` for
//! jump laws with and without a finite log-moment. Results are observations,
//! never verification failures.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::levy::LevyModel;
use crate::mc::{sample_z, McPlan};
use crate::rng::RngStream;
use crate::stats::ks_panel;

use super::config::{ExperimentConfig, NamedModel, RunConfig};
use super::report::{num, Provenance, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Label {
    Convergent,
    Divergent,
    Inconclusive,
}

/// Comparison of `∫_0^t` against `∫_0^{2t}` at one horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonRow {
    pub t: f64,
    /// Largest KS statistic over the projection panel.
    pub ks_statistic: f64,
    /// Bonferroni-corrected critical value for that panel.
    pub critical_value: f64,
    pub ks_pass: bool,
    /// Empirical 0.99-quantile of `|Z(t)|`.
    pub q99_t: f64,
    pub q99_2t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelObservation {
    pub name: String,
    pub jump_law: String,
    pub finite_log_moment: bool,
    pub rows: Vec<HorizonRow>,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub exploratory: bool,
    pub note: String,
    pub n_samples: usize,
    pub models: Vec<ModelObservation>,
    pub provenance: Provenance,
}

impl ExperimentReport {
    pub fn table(&self) -> Table {
        let mut t = Table::new(
            "logmoment",
            [
                "model",
                "t",
                "ks_statistic",
                "critical_value",
                "ks_pass",
                "q99_t",
                "q99_2t",
                "label",
            ]
            .map(String::from)
            .to_vec(),
        );
        for m in &self.models {
            for r in &m.rows {
                t.push(vec![
                    m.name.clone(),
                    num(r.t),
                    num(r.ks_statistic),
                    num(r.critical_value),
                    r.ks_pass.to_string(),
                    num(r.q99_t),
                    num(r.q99_2t),
                    serde_json::to_value(m.label)
                        .map(|v| v.as_str().unwrap_or("").to_string())
                        .unwrap_or_default(),
                ]);
            }
        }
        t
    }

    pub fn write(&self, dir: &std::path::Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(
            dir.join("logmoment_report.json"),
            serde_json::to_string_pretty(self)? + "\n",
        )?;
        self.table().write(dir)
    }
}

fn quantile(mut v: Vec<f64>, p: f64) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = ((p * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[k - 1]
}

fn is_degenerate(samples: &[DVector<f64>]) -> bool {
    let first = &samples[0];
    let spread = samples
        .iter()
        .map(|s| (s - first).amax())
        .fold(0.0, f64::max);
    spread <= 1e-12 * (1.0 + first.amax())
}

/// Labels a model from its rows. Quantiles that keep growing by more than a
/// factor of 10 overall mean DIVERGENT; otherwise the last KS comparison decides.
pub fn label_rows(rows: &[HorizonRow]) -> Label {
    let q: Vec<f64> = rows
        .iter()
        .map(|r| r.q99_t)
        .chain(rows.last().map(|r| r.q99_2t))
        .collect();
    let growing = q.windows(2).all(|w| w[1] > w[0]);
    if q.len() >= 2 && growing && q[q.len() - 1] > 10.0 * q[0] {
        return Label::Divergent;
    }
    match rows.last() {
        Some(r) if r.ks_pass => Label::Convergent,
        _ => Label::Inconclusive,
    }
}

fn observe(
    group: &crate::semigroup::OperatorGroup,
    named: &NamedModel,
    exp: &ExperimentConfig,
    alpha: f64,
    stream: &RngStream,
) -> Result<ModelObservation> {
    let model: &LevyModel = &named.model;
    let plan = McPlan::new(exp.n_samples).with_grid_step(exp.grid_step);
    let stream = stream.named(&named.name);
    let mut rows = Vec::new();
    for (i, &t) in exp.horizons.iter().enumerate() {
        let short = sample_z(group, model, t, &plan, &stream.index(i as u64).named("t"))?;
        let long = sample_z(
            group,
            model,
            2.0 * t,
            &plan,
            &stream.index(i as u64).named("2t"),
        )?;
        let norms = |s: &[DVector<f64>]| s.iter().map(|v| v.norm()).collect::<Vec<_>>();
        let (q99_t, q99_2t) = (quantile(norms(&short), 0.99), quantile(norms(&long), 0.99));
        let (ks_statistic, critical_value, ks_pass) = if is_degenerate(&short)
            && is_degenerate(&long)
        {
            let gap = (&short[0] - &long[0]).amax();
            (
                gap,
                1e-9 * (1.0 + short[0].amax()),
                gap <= 1e-9 * (1.0 + short[0].amax()),
            )
        } else {
            let panel = ks_panel(&short, &long, alpha, &stream.named("panel"))?;
            let worst = panel
                .iter()
                .max_by(|a, b| {
                    (a.statistic / a.critical_value).total_cmp(&(b.statistic / b.critical_value))
                })
                .ok_or(Error::InsufficientData { needed: 1, got: 0 })?;
            (
                worst.statistic,
                worst.critical_value,
                panel.iter().all(|r| r.pass),
            )
        };
        rows.push(HorizonRow {
            t,
            ks_statistic,
            critical_value,
            ks_pass,
            q99_t,
            q99_2t,
        });
    }
    let label = label_rows(&rows);
    Ok(ModelObservation {
        name: named.name.clone(),
        jump_law: model.jump_law().name().to_string(),
        finite_log_moment: model.jump_law().has_finite_log_moment(),
        rows,
        label,
    })
}

/// Runs the log-moment experiment over every configured model.
pub fn run_logmoment_experiment(config: &RunConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let group = config.group()?;
    if !group.is_stable() {
        return Err(Error::Unstable {
            abscissa: group.spectral_abscissa(),
        });
    }
    let exp = config.experiment.clone().unwrap_or_default();
    if exp.horizons.is_empty() || exp.horizons.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(Error::Config("experiment horizons must be positive".into()));
    }
    let models = if exp.models.is_empty() {
        vec![NamedModel {
            name: "main".into(),
            model: config.model.clone(),
        }]
    } else {
        exp.models.clone()
    };
    let stream = RngStream::new(config.seed).named("logmoment");
    let observations = models
        .iter()
        .map(|m| observe(&group, m, &exp, config.tolerances.ks_alpha, &stream))
        .collect::<Result<_>>()?;
    Ok(ExperimentReport {
        experiment: "logmoment".into(),
        exploratory: true,
        note: "Exploratory: whether the stationary integral exists without a finite log-moment is an open \
               question for general groups. Labels are observations, not verdicts."
            .into(),
        n_samples: exp.n_samples,
        models: observations,
        provenance: Provenance::for_config(config),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: f64, pass: bool, q: f64, q2: f64) -> HorizonRow {
        HorizonRow {
            t,
            ks_statistic: 0.0,
            critical_value: 1.0,
            ks_pass: pass,
            q99_t: q,
            q99_2t: q2,
        }
    }

    #[test]
    fn labels() {
        let growing = [row(2.0, false, 1.0, 10.0), row(4.0, false, 10.0, 100.0)];
        assert_eq!(label_rows(&growing), Label::Divergent);
        let settled = [row(2.0, false, 1.0, 1.2), row(4.0, true, 1.2, 1.25)];
        assert_eq!(label_rows(&settled), Label::Convergent);
        let unclear = [row(2.0, false, 1.0, 1.2), row(4.0, false, 1.1, 1.0)];
        assert_eq!(label_rows(&unclear), Label::Inconclusive);
    }

    #[test]
    fn quantile_picks_order_statistic() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(quantile(v.clone(), 0.99), 99.0);
        assert_eq!(quantile(v, 1.0), 100.0);
    }
}
