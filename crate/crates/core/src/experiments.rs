//! Experiment configuration, parameter sweeps, baseline comparison and
//! report/CSV output.
//!
//! A configuration is a TOML document. Every table is optional; an empty
//! file describes the reference setup (1000 users, 10 unit-size files,
//! Zipf skew 1.5, five expected neighbors) with a skew sweep and a
//! mean-degree sweep. `configs/default.toml` spells out every key.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{mpc_strategy, ruc_strategy};
use crate::catalog::ContentCatalog;
use crate::dynamics::{self, EquilibriumResult, EvolutionConfig};
use crate::error::{invalid, Error, Result};
use crate::meanfield::{build_state, MeanFieldState, MobilityModel, PopulationProfile};
use crate::oracle::{self, Band, ComparisonRow, OracleSettings, TrialOutcome};
use crate::user_model::{LoadBreakdown, Strategy, UserParams, UserType};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CatalogConfig {
    pub file_count: usize,
    /// Size used for every file when `sizes` is absent.
    pub file_size: f64,
    /// Per-file sizes; overrides `file_count` and `file_size`.
    pub sizes: Option<Vec<f64>>,
    pub skew: f64,
    pub stationary_factor: f64,
    /// 1-based popularity ranks; identity when absent.
    pub rankings: Option<Vec<usize>>,
}

impl Default for CatalogConfig {
    fn default() -> Self {
        Self {
            file_count: 10,
            file_size: 1.0,
            sizes: None,
            skew: 1.5,
            stationary_factor: 0.0,
            rankings: None,
        }
    }
}

impl CatalogConfig {
    pub fn build(&self) -> Result<ContentCatalog> {
        let sizes = match &self.sizes {
            Some(s) => s.clone(),
            None => vec![self.file_size; self.file_count],
        };
        match &self.rankings {
            Some(r) => {
                ContentCatalog::with_rankings(sizes, self.skew, self.stationary_factor, r.clone())
            }
            None => ContentCatalog::new(sizes, self.skew, self.stationary_factor),
        }
    }
}

/// Exactly one of `encounter_probability` and `mean_neighbors` must be set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilityConfig {
    pub population: usize,
    pub encounter_probability: Option<f64>,
    pub mean_neighbors: Option<f64>,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        Self {
            population: 1000,
            encounter_probability: None,
            mean_neighbors: Some(5.0),
        }
    }
}

impl MobilityConfig {
    pub fn build(&self) -> Result<MobilityModel> {
        match (self.encounter_probability, self.mean_neighbors) {
            (Some(rho), None) => MobilityModel::new(self.population, rho),
            (None, Some(psi)) => MobilityModel::from_mean_neighbors(self.population, psi),
            _ => Err(invalid(
                "mobility needs exactly one of encounter_probability and mean_neighbors",
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParameter {
    /// Zipf skew.
    Beta,
    /// Pairwise encounter probability at fixed population.
    Rho,
    /// Expected neighbor count.
    Psi,
    /// Caching cost coefficient of every user type (sensitivity study).
    Alpha,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            Self::Beta => "beta",
            Self::Rho => "rho",
            Self::Psi => "psi",
            Self::Alpha => "alpha",
        }
    }
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl SweepSpec {
    pub fn default_beta() -> Self {
        Self {
            parameter: SweepParameter::Beta,
            start: 0.0,
            stop: 2.0,
            step: 0.1,
        }
    }

    pub fn default_psi() -> Self {
        Self {
            parameter: SweepParameter::Psi,
            start: 0.0,
            stop: 20.0,
            step: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(invalid(format!(
                "sweep step must be positive, got {}",
                self.step
            )));
        }
        if !(self.start.is_finite() && self.stop.is_finite() && self.stop >= self.start) {
            return Err(invalid(format!(
                "sweep range [{}, {}] is empty",
                self.start, self.stop
            )));
        }
        Ok(())
    }

    /// Grid points `start + i * step` up to `stop`, rounded to 12 decimals so
    /// that `0.1 * 3` prints as `0.3`.
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n)
            .map(|i| {
                let v = self.start + i as f64 * self.step;
                (v * 1e12).round() / 1e12
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub catalog: CatalogConfig,
    pub mobility: MobilityConfig,
    /// When empty, a single type with default parameters covers the whole
    /// population.
    pub user_types: Vec<UserType>,
    pub evolution: EvolutionConfig,
    pub sweeps: Vec<SweepSpec>,
    pub oracle: OracleSettings,
    pub band: Band,
    /// Damping values tried by the convergence study.
    pub gamma_scan: Vec<f64>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            catalog: CatalogConfig::default(),
            mobility: MobilityConfig::default(),
            user_types: Vec::new(),
            evolution: EvolutionConfig::default(),
            sweeps: vec![SweepSpec::default_beta(), SweepSpec::default_psi()],
            oracle: OracleSettings::default(),
            band: Band::default(),
            gamma_scan: vec![0.5, 0.8, 0.9, 0.98],
            output_dir: PathBuf::from("results"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::parse(text, Path::new("<inline>"))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::parse(&text, path)
    }

    fn parse(text: &str, path: &Path) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        config.validate().map_err(|e| Error::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let catalog = self.catalog.build()?;
        let mobility = self.mobility.build()?;
        self.evolution.validate()?;
        dynamics::validate_population(&self.population(), &catalog, &mobility)?;
        for sweep in &self.sweeps {
            sweep.validate()?;
            // Every grid point must yield a valid setup.
            for v in [sweep.start, *sweep.values().last().expect("nonempty grid")] {
                let point = self.at(sweep.parameter, v);
                point.catalog.build()?;
                point.mobility.build()?;
                for t in &point.population() {
                    t.params.validate()?;
                }
            }
        }
        if self.oracle.trials == 0 {
            return Err(invalid("oracle trials must be positive"));
        }
        if !(self.band.absolute_floor >= 0.0
            && self.band.sigmas >= 0.0
            && self.band.finite_size_coefficient >= 0.0)
        {
            return Err(invalid("band parameters must be nonnegative"));
        }
        if let Some(g) = self.gamma_scan.iter().find(|g| !(**g > 0.0 && **g < 1.0)) {
            return Err(invalid(format!(
                "gamma_scan entries must lie in (0, 1), got {g}"
            )));
        }
        Ok(())
    }

    /// User types, falling back to one default type for everyone.
    pub fn population(&self) -> Vec<UserType> {
        if self.user_types.is_empty() {
            vec![UserType {
                count: self.mobility.population,
                params: UserParams::default(),
            }]
        } else {
            self.user_types.clone()
        }
    }

    /// This configuration with one parameter replaced by a sweep value.
    pub fn at(&self, parameter: SweepParameter, value: f64) -> Self {
        let mut c = self.clone();
        match parameter {
            SweepParameter::Beta => c.catalog.skew = value,
            SweepParameter::Rho => {
                c.mobility.encounter_probability = Some(value);
                c.mobility.mean_neighbors = None;
            }
            SweepParameter::Psi => {
                c.mobility.mean_neighbors = Some(value);
                c.mobility.encounter_probability = None;
            }
            SweepParameter::Alpha => {
                c.user_types = c
                    .population()
                    .into_iter()
                    .map(|mut t| {
                        t.params.cache_cost_coefficient = value;
                        t
                    })
                    .collect();
            }
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    Equilibrium,
    Mpc,
    Ruc,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Self::Equilibrium => "equilibrium",
            Self::Mpc => "MPC",
            Self::Ruc => "RUC",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Population-average performance of one caching scheme at one setting.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    /// Sweep value; `None` for a single equilibrium run.
    pub value: Option<f64>,
    pub scheme: Scheme,
    /// Mean over users of local, D2D-in and cellular traffic costs.
    pub total_transmission_cost: f64,
    pub cellular_load: f64,
    pub eta: Vec<f64>,
    pub equilibrium_gap: f64,
    /// Best-response rounds; zero for the fixed baselines.
    pub iterations: usize,
    pub converged: bool,
}

/// Head-count weighted mean cost and cellular load of a profile.
fn population_metrics(
    population: &[UserType],
    profile: &PopulationProfile,
    catalog: &ContentCatalog,
    state: &MeanFieldState,
) -> (f64, f64) {
    let total = profile.population() as f64;
    let (mut cost, mut cellular) = (0.0, 0.0);
    for ((t, x), n) in population.iter().zip(profile.rows()).zip(profile.counts()) {
        let loads = LoadBreakdown::compute(x, catalog, state);
        let w = *n as f64 / total;
        cost += w * loads.transmission_cost(&t.params);
        cellular += w * loads.cellular;
    }
    (cost, cellular)
}

/// A solved configuration: the equilibrium and the three scheme rows.
#[derive(Debug, Clone)]
pub struct PointResult {
    pub equilibrium: EquilibriumResult,
    pub rows: Vec<MetricsRow>,
}

/// Solves one configuration and evaluates equilibrium, MPC and RUC. Each
/// baseline is scored against the mean field its own profile induces.
pub fn evaluate_point(config: &ExperimentConfig, value: Option<f64>) -> Result<PointResult> {
    let catalog = config.catalog.build()?;
    let mobility = config.mobility.build()?;
    let population = config.population();
    let result = dynamics::evolve(&population, &catalog, &mobility, &config.evolution)?;

    let mut rows = Vec::with_capacity(3);
    let (cost, cellular) =
        population_metrics(&population, &result.profile, &catalog, &result.mean_field);
    rows.push(MetricsRow {
        value,
        scheme: Scheme::Equilibrium,
        total_transmission_cost: cost,
        cellular_load: cellular,
        eta: result.mean_field.cache_fraction.clone(),
        equilibrium_gap: result.equilibrium_gap,
        iterations: result.iterations,
        converged: result.converged,
    });

    for (scheme, policy) in [
        (
            Scheme::Mpc,
            mpc_strategy as fn(&ContentCatalog, &UserParams) -> Strategy,
        ),
        (Scheme::Ruc, ruc_strategy),
    ] {
        let strategies = population
            .iter()
            .map(|t| policy(&catalog, &t.params))
            .collect();
        let profile =
            PopulationProfile::new(strategies, population.iter().map(|t| t.count).collect())?;
        let state = build_state(&profile, &mobility, &catalog)?;
        let (cost, cellular) = population_metrics(&population, &profile, &catalog, &state);
        rows.push(MetricsRow {
            value,
            scheme,
            total_transmission_cost: cost,
            cellular_load: cellular,
            eta: state.cache_fraction.clone(),
            equilibrium_gap: dynamics::equilibrium_gap(&profile, &catalog, &mobility, &population)?,
            iterations: 0,
            converged: true,
        });
    }
    Ok(PointResult {
        equilibrium: result,
        rows,
    })
}

/// Runs every grid point of `sweep` concurrently. Rows come back in grid
/// order, three per point. A point that does not converge is flagged, not
/// dropped.
pub fn run_sweep(config: &ExperimentConfig, sweep: &SweepSpec) -> Result<Vec<MetricsRow>> {
    sweep.validate()?;
    let points: Vec<Vec<MetricsRow>> = sweep
        .values()
        .into_par_iter()
        .map(|v| evaluate_point(&config.at(sweep.parameter, v), Some(v)).map(|p| p.rows))
        .collect::<Result<_>>()?;
    Ok(points.into_iter().flatten().collect())
}

fn fmt_value(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Columns: `value, scheme, total_transmission_cost, cellular_load,
/// eta_1..eta_F, equilibrium_gap, iterations, converged`.
pub fn write_metrics_csv<W: Write>(rows: &[MetricsRow], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let files = rows.first().map_or(0, |r| r.eta.len());
    let mut header: Vec<String> = [
        "value",
        "scheme",
        "total_transmission_cost",
        "cellular_load",
    ]
    .map(String::from)
    .to_vec();
    header.extend((1..=files).map(|f| format!("eta_{f}")));
    header.extend(["equilibrium_gap", "iterations", "converged"].map(String::from));
    writer.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            fmt_value(r.value),
            r.scheme.to_string(),
            r.total_transmission_cost.to_string(),
            r.cellular_load.to_string(),
        ];
        rec.extend(r.eta.iter().map(f64::to_string));
        rec.extend([
            r.equilibrium_gap.to_string(),
            r.iterations.to_string(),
            r.converged.to_string(),
        ]);
        writer.write_record(&rec)?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    TotalCost,
    CellularLoad,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Self::TotalCost => "total_transmission_cost",
            Self::CellularLoad => "cellular_load",
        }
    }

    fn of(self, row: &MetricsRow) -> f64 {
        match self {
            Self::TotalCost => row.total_transmission_cost,
            Self::CellularLoad => row.cellular_load,
        }
    }
}

/// Relative improvement of the equilibrium over a baseline; `None` when the
/// baseline metric is zero.
pub fn reduction(baseline: f64, equilibrium: f64) -> Option<f64> {
    (baseline != 0.0).then(|| (baseline - equilibrium) / baseline)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionEntry {
    pub value: Option<f64>,
    pub baseline: Scheme,
    pub metric: Metric,
    pub reduction: Option<f64>,
    pub converged: bool,
}

/// Sweep-wide extremes over converged, applicable points.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionExtremes {
    pub baseline: Scheme,
    pub metric: Metric,
    pub min: Option<(f64, Option<f64>)>,
    pub max: Option<(f64, Option<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionReport {
    pub entries: Vec<ReductionEntry>,
    pub extremes: Vec<ReductionExtremes>,
}

impl ReductionReport {
    pub fn max_reduction(&self, baseline: Scheme, metric: Metric) -> Option<f64> {
        self.extremes
            .iter()
            .find(|e| e.baseline == baseline && e.metric == metric)
            .and_then(|e| e.max.map(|(r, _)| r))
    }
}

fn group_by_value(rows: &[MetricsRow]) -> Result<Vec<[&MetricsRow; 3]>> {
    let mut groups = Vec::new();
    let mut i = 0;
    while i < rows.len() {
        let value = rows[i].value;
        let same: Vec<&MetricsRow> = rows[i..].iter().take_while(|r| r.value == value).collect();
        let find = |s| same.iter().copied().find(|r| r.scheme == s);
        match (
            find(Scheme::Equilibrium),
            find(Scheme::Mpc),
            find(Scheme::Ruc),
        ) {
            (Some(e), Some(m), Some(r)) => groups.push([e, m, r]),
            _ => {
                return Err(invalid(format!(
                    "sweep value {} lacks one of the three schemes",
                    fmt_value(value)
                )))
            }
        }
        i += same.len();
    }
    Ok(groups)
}

/// Per-point reductions of the equilibrium against each baseline.
pub fn reduction_report(rows: &[MetricsRow]) -> Result<ReductionReport> {
    let groups = group_by_value(rows)?;
    let mut entries = Vec::new();
    for [eq, mpc, ruc] in &groups {
        for base in [mpc, ruc] {
            for metric in [Metric::TotalCost, Metric::CellularLoad] {
                entries.push(ReductionEntry {
                    value: eq.value,
                    baseline: base.scheme,
                    metric,
                    reduction: reduction(metric.of(base), metric.of(eq)),
                    converged: eq.converged,
                });
            }
        }
    }
    let mut extremes = Vec::new();
    for baseline in [Scheme::Mpc, Scheme::Ruc] {
        for metric in [Metric::TotalCost, Metric::CellularLoad] {
            let mut min: Option<(f64, Option<f64>)> = None;
            let mut max: Option<(f64, Option<f64>)> = None;
            for e in entries
                .iter()
                .filter(|e| e.baseline == baseline && e.metric == metric && e.converged)
            {
                if let Some(r) = e.reduction {
                    if min.is_none_or(|(m, _)| r < m) {
                        min = Some((r, e.value));
                    }
                    if max.is_none_or(|(m, _)| r > m) {
                        max = Some((r, e.value));
                    }
                }
            }
            extremes.push(ReductionExtremes {
                baseline,
                metric,
                min,
                max,
            });
        }
    }
    Ok(ReductionReport { entries, extremes })
}

/// Columns: `value, baseline, metric, reduction, converged`; inapplicable
/// reductions are written as `NA`.
pub fn write_reduction_csv<W: Write>(report: &ReductionReport, out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["value", "baseline", "metric", "reduction", "converged"])?;
    for e in &report.entries {
        writer.write_record([
            fmt_value(e.value),
            e.baseline.to_string(),
            e.metric.name().to_string(),
            e.reduction
                .map_or_else(|| "NA".to_string(), |r| r.to_string()),
            e.converged.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// A converged point where the equilibrium loses to a baseline by more than
/// the tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct DominanceViolation {
    pub value: Option<f64>,
    pub baseline: Scheme,
    pub metric: Metric,
    /// `baseline - equilibrium`; negative here.
    pub margin: f64,
}

/// Checks total cost against both baselines and cellular load against RUC
/// at every converged point.
pub fn dominance_violations(
    rows: &[MetricsRow],
    tolerance: f64,
) -> Result<Vec<DominanceViolation>> {
    let mut out = Vec::new();
    for [eq, mpc, ruc] in group_by_value(rows)? {
        if !eq.converged {
            continue;
        }
        let checks = [
            (mpc, Metric::TotalCost),
            (ruc, Metric::TotalCost),
            (ruc, Metric::CellularLoad),
        ];
        for (base, metric) in checks {
            let margin = metric.of(base) - metric.of(eq);
            if margin < -tolerance {
                out.push(DominanceViolation {
                    value: eq.value,
                    baseline: base.scheme,
                    metric,
                    margin,
                });
            }
        }
    }
    Ok(out)
}

/// Closed-form and simulated population-mean traffic volumes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadComparison {
    pub name: &'static str,
    pub closed: f64,
    pub empirical: f64,
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub equilibrium: EquilibriumResult,
    pub outcome: TrialOutcome,
    pub rows: Vec<ComparisonRow>,
    pub loads: Vec<LoadComparison>,
}

impl ValidationReport {
    pub fn all_in_band(&self) -> bool {
        self.rows.iter().all(|r| r.p_in_band && r.n_in_band)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ComparisonRow> {
        self.rows.iter().filter(|r| !(r.p_in_band && r.n_in_band))
    }
}

/// Solves for the equilibrium and checks its mean-field quantities against
/// the Monte Carlo oracle.
pub fn validate_oracle(config: &ExperimentConfig) -> Result<ValidationReport> {
    let catalog = config.catalog.build()?;
    let mobility = config.mobility.build()?;
    let population = config.population();
    let equilibrium = dynamics::evolve(&population, &catalog, &mobility, &config.evolution)?;
    let outcome = oracle::simulate(&equilibrium.profile, &catalog, &mobility, &config.oracle)?;
    let rows = oracle::compare(&outcome, &equilibrium.mean_field, &mobility, &config.band);

    let total = equilibrium.profile.population() as f64;
    let mut closed = LoadBreakdown::default();
    for (x, n) in equilibrium
        .profile
        .rows()
        .iter()
        .zip(equilibrium.profile.counts())
    {
        let l = LoadBreakdown::compute(x, &catalog, &equilibrium.mean_field);
        let w = *n as f64 / total;
        closed.local += w * l.local;
        closed.d2d_in += w * l.d2d_in;
        closed.cellular += w * l.cellular;
        closed.d2d_out += w * l.d2d_out;
    }
    let e = outcome.empirical_loads;
    let loads = vec![
        LoadComparison {
            name: "local",
            closed: closed.local,
            empirical: e.local,
        },
        LoadComparison {
            name: "d2d_in",
            closed: closed.d2d_in,
            empirical: e.d2d_in,
        },
        LoadComparison {
            name: "cellular",
            closed: closed.cellular,
            empirical: e.cellular,
        },
        LoadComparison {
            name: "d2d_out",
            closed: closed.d2d_out,
            empirical: e.d2d_out,
        },
    ];
    Ok(ValidationReport {
        equilibrium,
        outcome,
        rows,
        loads,
    })
}

/// Columns: `load, closed, empirical, trials, seed`.
pub fn write_load_csv<W: Write>(report: &ValidationReport, out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["load", "closed", "empirical", "trials", "seed"])?;
    for l in &report.loads {
        writer.write_record([
            l.name.to_string(),
            l.closed.to_string(),
            l.empirical.to_string(),
            report.outcome.trial_count.to_string(),
            report.outcome.seed.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Columns: `type, count, x_1..x_F`.
pub fn write_profile_csv<W: Write>(profile: &PopulationProfile, out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let mut header = vec!["type".to_string(), "count".to_string()];
    header.extend((1..=profile.file_count()).map(|f| format!("x_{f}")));
    writer.write_record(&header)?;
    for (i, (x, n)) in profile.rows().iter().zip(profile.counts()).enumerate() {
        let mut rec = vec![(i + 1).to_string(), n.to_string()];
        rec.extend(x.as_slice().iter().map(f64::to_string));
        writer.write_record(&rec)?;
    }
    writer.flush()?;
    Ok(())
}

/// Columns: `damping, converged, iterations, final_step_norm, equilibrium_gap`.
pub fn write_gamma_scan_csv<W: Write>(entries: &[dynamics::GammaScanEntry], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record([
        "damping",
        "converged",
        "iterations",
        "final_step_norm",
        "equilibrium_gap",
    ])?;
    for e in entries {
        writer.write_record([
            e.damping.to_string(),
            e.converged.to_string(),
            e.iterations.to_string(),
            e.final_step_norm.to_string(),
            e.equilibrium_gap.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(value: f64, scheme: Scheme, cost: f64, cellular: f64) -> MetricsRow {
        MetricsRow {
            value: Some(value),
            scheme,
            total_transmission_cost: cost,
            cellular_load: cellular,
            eta: vec![0.5],
            equilibrium_gap: 0.0,
            iterations: 1,
            converged: true,
        }
    }

    #[test]
    fn reduction_arithmetic() {
        assert_eq!(reduction(10.0, 4.0), Some(0.6));
        assert_eq!(reduction(3.0, 3.0), Some(0.0));
        assert_eq!(reduction(0.0, 1.0), None);
    }

    #[test]
    fn sweep_grid() {
        let s = SweepSpec::default_beta();
        let v = s.values();
        assert_eq!(v.len(), 21);
        assert_eq!(v[3], 0.3);
        assert_eq!(v[20], 2.0);
        assert_eq!(SweepSpec::default_psi().values().len(), 21);
        let bad = SweepSpec { step: 0.0, ..s };
        assert!(bad.validate().is_err());
        let empty = SweepSpec {
            start: 1.0,
            stop: 0.0,
            ..s
        };
        assert!(empty.validate().is_err());
    }

    #[test]
    fn empty_config_is_the_default() {
        let c = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.population()[0].count, 1000);
    }

    #[test]
    fn config_rejections() {
        for text in [
            "unknown = 1",
            "[mobility]\nencounter_probability = 0.1\nmean_neighbors = 2.0",
            "[[sweeps]]\nparameter = \"beta\"\nstart = 0.0\nstop = 1.0\nstep = -1.0",
            "[[sweeps]]\nparameter = \"rho\"\nstart = 0.0\nstop = 2.0\nstep = 1.0",
            "[[user_types]]\ncount = 10",
            "[evolution]\ndamping = 1.5",
            "gamma_scan = [0.0]",
        ] {
            assert!(ExperimentConfig::from_toml_str(text).is_err(), "{text}");
        }
    }

    #[test]
    fn overrides_apply() {
        let c = ExperimentConfig::default();
        assert_eq!(c.at(SweepParameter::Beta, 0.7).catalog.skew, 0.7);
        let rho = c.at(SweepParameter::Rho, 0.01).mobility.build().unwrap();
        assert!((rho.mean_neighbors() - 10.0).abs() < 1e-12);
        let alpha = c.at(SweepParameter::Alpha, 2.0);
        assert_eq!(alpha.population()[0].params.cache_cost_coefficient, 2.0);
    }

    #[test]
    fn report_and_dominance() {
        let rows = vec![
            row(0.0, Scheme::Equilibrium, 4.0, 1.0),
            row(0.0, Scheme::Mpc, 10.0, 2.0),
            row(0.0, Scheme::Ruc, 8.0, 0.0),
            row(1.0, Scheme::Equilibrium, 5.0, 1.0),
            row(1.0, Scheme::Mpc, 5.0, 2.0),
            row(1.0, Scheme::Ruc, 4.0, 2.0),
        ];
        let report = reduction_report(&rows).unwrap();
        assert_eq!(report.entries.len(), 8);
        assert_eq!(
            report.max_reduction(Scheme::Mpc, Metric::TotalCost),
            Some(0.6)
        );
        assert_eq!(
            report.max_reduction(Scheme::Ruc, Metric::CellularLoad),
            Some(0.5)
        );
        let na = report
            .entries
            .iter()
            .find(|e| {
                e.value == Some(0.0)
                    && e.baseline == Scheme::Ruc
                    && e.metric == Metric::CellularLoad
            })
            .unwrap();
        assert_eq!(na.reduction, None);

        let v = dominance_violations(&rows, 1e-9).unwrap();
        assert_eq!(v.len(), 2);
        assert!(v.iter().all(|d| d.margin < 0.0));
        assert!(reduction_report(&rows[..2]).is_err());
    }
}
