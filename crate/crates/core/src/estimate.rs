//! Sample estimators of θ and ψ with influence-function standard errors.
//!
//! Every average goes through [`stable_sum`], which sorts before adding, so
//! estimates do not depend on record order or on the thread schedule.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nuisance::{fit_nuisances, nuisances_from_law, perturb, BumpSpec, NuisanceName, NuisanceSet, SmoothingConfig};
use crate::permlaw::{Dataset, PermutationLaw};
use crate::scalar::Scalar;
use crate::strata::dataset_supports;

/// Two-sided 95% normal quantile.
pub const Z_975: f64 = 1.959964;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Plugin,
    OnestepGeneral,
    OnestepBinary,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Plugin => "plugin",
            Method::OnestepGeneral => "onestep_general",
            Method::OnestepBinary => "onestep_binary",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimand {
    Theta,
    Psi,
}

/// How `ρ` enters the binary-outcome estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RhoMode {
    Known(f64),
    Estimate,
}

impl RhoMode {
    /// `known:<value>` or `estimate`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "estimate" {
            return Ok(RhoMode::Estimate);
        }
        let v = s
            .strip_prefix("known:")
            .and_then(|v| v.trim().parse::<f64>().ok())
            .ok_or_else(|| Error::InvalidArgument(format!("rho mode `{s}` is not `known:<value>` or `estimate`")))?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::RangeViolation(format!("rho = {v} must be positive and finite")));
        }
        Ok(RhoMode::Known(v))
    }
}

impl std::fmt::Display for RhoMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RhoMode::Known(v) => write!(f, "known:{v}"),
            RhoMode::Estimate => write!(f, "estimate"),
        }
    }
}

pub const CAVEAT_ESTIMATED_RHO: &str = "rho_estimated_se_ignores_rho_uncertainty";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub clip_events: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fold_seed: Option<u64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub fold_sizes: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub caveats: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimand: Estimand,
    pub method: Method,
    pub value: f64,
    /// Absent for the plug-in.
    pub standard_error: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub n: usize,
    pub diagnostics: Diagnostics,
    /// Centered estimated influence value of each record, in record order.
    #[serde(skip)]
    pub influence: Vec<f64>,
}

impl Estimate {
    fn with_influence(
        estimand: Estimand,
        method: Method,
        value: f64,
        influence: Vec<f64>,
        diagnostics: Diagnostics,
    ) -> Result<Self> {
        let n = influence.len();
        let se = sample_sd(&influence) / (n as f64).sqrt();
        if !(value.is_finite() && se.is_finite()) {
            return Err(Error::RangeViolation(format!("non-finite estimate {value} with se {se}")));
        }
        Ok(Estimate {
            estimand,
            method,
            value,
            standard_error: Some(se),
            ci_low: Some(value - Z_975 * se),
            ci_high: Some(value + Z_975 * se),
            n,
            diagnostics,
            influence,
        })
    }

    pub fn covers(&self, truth: f64) -> Option<bool> {
        Some(self.ci_low? <= truth && truth <= self.ci_high?)
    }
}

/// Order-independent sum: values are sorted before accumulation.
pub fn stable_sum(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

fn mean(values: &[f64]) -> f64 {
    stable_sum(values) / values.len() as f64
}

fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let sq: Vec<f64> = values.iter().map(|v| (v - m) * (v - m)).collect();
    (stable_sum(&sq) / (values.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy)]
struct Rec {
    r1: bool,
    r2: bool,
    y: Option<usize>,
    x: Option<usize>,
}

fn index_records(ns: &NuisanceSet<f64>, d: &Dataset) -> Result<Vec<Rec>> {
    d.records
        .iter()
        .map(|r| {
            Ok(Rec {
                r1: r.r1,
                r2: r.r2,
                y: r.y.as_deref().map(|l| ns.y_index(l)).transpose()?,
                x: r.x.as_deref().map(|l| ns.x_index(l)).transpose()?,
            })
        })
        .collect()
}

fn empty_01() -> Error {
    Error::EmptyStratum { nuisance: "theta".into(), cell: "R_1=0,R_2=1".into() }
}

fn empty_11() -> Error {
    Error::EmptyStratum { nuisance: "theta".into(), cell: "R_1=1,R_2=1".into() }
}

fn count(recs: &[Rec], r1: bool, r2: bool) -> usize {
    recs.iter().filter(|r| r.r1 == r1 && r.r2 == r2).count()
}

/// Mean of `β/α` over the `(0,1)` records; `nuis[i]` serves record `i`.
fn plugin_core(recs: &[Rec], nuis: &[&NuisanceSet<f64>]) -> Result<f64> {
    let vals: Vec<f64> = recs
        .iter()
        .zip(nuis)
        .filter(|(r, _)| !r.r1 && r.r2)
        .map(|(r, ns)| ns.ratio(r.x.expect("X observed when R_2=1")))
        .collect();
    if vals.is_empty() {
        return Err(empty_01());
    }
    Ok(mean(&vals))
}

fn onestep_general_core(recs: &[Rec], nuis: &[&NuisanceSet<f64>]) -> Result<(f64, Vec<f64>)> {
    let n = recs.len() as f64;
    let n01 = count(recs, false, true);
    if n01 == 0 {
        return Err(empty_01());
    }
    let pi01 = n01 as f64 / n;
    let theta_p = plugin_core(recs, nuis)?;
    let phi: Vec<f64> = recs
        .iter()
        .zip(nuis)
        .map(|(r, ns)| {
            let mut v = 0.0;
            if !r.r1 && r.r2 {
                v += ns.ratio(r.x.unwrap()) - theta_p;
            }
            if r.r1 {
                let y = r.y.unwrap();
                let zeta = ns.zeta[y];
                let r2 = if r.r2 { 1.0 } else { 0.0 };
                if r.r2 {
                    let x = r.x.unwrap();
                    let g = ns.gamma[x];
                    v += (1.0 / ns.alpha[x]) * (1.0 / zeta) * ((1.0 - g) / g) * (ns.y_values[y] - ns.ratio(x));
                }
                v -= (r2 / zeta - 1.0) * ns.delta[y];
            }
            v / pi01
        })
        .collect();
    if phi.iter().any(|v| !v.is_finite()) {
        return Err(Error::RangeViolation("influence value is not finite".into()));
    }
    let correction = mean(&phi);
    let centered = phi.iter().map(|v| v - correction).collect();
    Ok((theta_p + correction, centered))
}

fn rho_for(ns: &NuisanceSet<f64>, mode: RhoMode) -> Result<f64> {
    let b = ns.binary.as_ref().ok_or(Error::NotBinaryOutcome)?;
    Ok(match mode {
        RhoMode::Known(v) => v,
        RhoMode::Estimate => b.rho,
    })
}

fn binary_plugin_core(recs: &[Rec], nuis: &[&NuisanceSet<f64>], mode: RhoMode) -> Result<f64> {
    let mut vals = Vec::new();
    for (r, ns) in recs.iter().zip(nuis) {
        if !r.r1 && r.r2 {
            let rho = rho_for(ns, mode)?;
            let xi = ns.binary.as_ref().ok_or(Error::NotBinaryOutcome)?.xi[r.x.unwrap()];
            vals.push(xi / (rho + xi));
        }
    }
    if vals.is_empty() {
        return Err(empty_01());
    }
    Ok(mean(&vals))
}

/// Evaluates the binary-outcome one-step display; returns the value and the
/// centered influence values.
fn onestep_binary_core(recs: &[Rec], nuis: &[&NuisanceSet<f64>], mode: RhoMode) -> Result<(f64, Vec<f64>)> {
    let n = recs.len() as f64;
    let (n11, n01) = (count(recs, true, true), count(recs, false, true));
    if n01 == 0 {
        return Err(empty_01());
    }
    if n11 == 0 {
        return Err(empty_11());
    }
    let (p11, p01) = (n11 as f64 / n, n01 as f64 / n);
    let mut terms = Vec::with_capacity(recs.len());
    let mut strat01 = Vec::with_capacity(recs.len());
    for (r, ns) in recs.iter().zip(nuis) {
        let rho = rho_for(ns, mode)?;
        let b = ns.binary.as_ref().ok_or(Error::NotBinaryOutcome)?;
        let mut t = 0.0;
        let mut s = 0.0;
        if r.r1 && r.r2 {
            let x = r.x.unwrap();
            let xi = b.xi[x];
            let w = ((1.0 + xi) / (rho + xi)).powi(2);
            t += w * rho * ns.varpi[x] / p11 * (ns.y_values[r.y.unwrap()] - xi / (1.0 + xi));
        }
        if !r.r1 && r.r2 {
            let xi = b.xi[r.x.unwrap()];
            t += xi / (rho + xi) / p01;
            s = 1.0 / p01;
        }
        terms.push(t);
        strat01.push(s);
    }
    let theta = mean(&terms);
    let phi: Vec<f64> = terms.iter().zip(&strat01).map(|(t, s)| t - s * theta).collect();
    if phi.iter().any(|v| !v.is_finite()) {
        return Err(Error::RangeViolation("influence value is not finite".into()));
    }
    Ok((theta, phi))
}

fn diagnostics_for(ns: &NuisanceSet<f64>) -> Diagnostics {
    Diagnostics { clip_events: ns.clip_events, ..Default::default() }
}

fn rho_diagnostics(diag: &mut Diagnostics, rho: f64, mode: RhoMode) {
    diag.rho = Some(rho);
    if mode == RhoMode::Estimate {
        diag.caveats.push(CAVEAT_ESTIMATED_RHO.into());
    }
}

/// Mean of `β̂/α̂` over the `(0,1)` stratum; no standard error.
pub fn plugin_theta(ns: &NuisanceSet<f64>, d: &Dataset) -> Result<Estimate> {
    let recs = index_records(ns, d)?;
    let value = plugin_core(&recs, &vec![ns; recs.len()])?;
    Ok(Estimate {
        estimand: Estimand::Theta,
        method: Method::Plugin,
        value,
        standard_error: None,
        ci_low: None,
        ci_high: None,
        n: d.len(),
        diagnostics: diagnostics_for(ns),
        influence: Vec::new(),
    })
}

/// Mean of `ξ̂/(ρ+ξ̂)` over the `(0,1)` stratum; no standard error.
pub fn plugin_theta_binary(ns: &NuisanceSet<f64>, d: &Dataset, rho: RhoMode) -> Result<Estimate> {
    let recs = index_records(ns, d)?;
    let value = binary_plugin_core(&recs, &vec![ns; recs.len()], rho)?;
    let mut diagnostics = diagnostics_for(ns);
    rho_diagnostics(&mut diagnostics, rho_for(ns, rho)?, rho);
    Ok(Estimate {
        estimand: Estimand::Theta,
        method: Method::Plugin,
        value,
        standard_error: None,
        ci_low: None,
        ci_high: None,
        n: d.len(),
        diagnostics,
        influence: Vec::new(),
    })
}

/// Plug-in plus the sample mean of the general influence function.
pub fn onestep_theta(ns: &NuisanceSet<f64>, d: &Dataset) -> Result<Estimate> {
    let recs = index_records(ns, d)?;
    let (value, phi) = onestep_general_core(&recs, &vec![ns; recs.len()])?;
    Estimate::with_influence(Estimand::Theta, Method::OnestepGeneral, value, phi, diagnostics_for(ns))
}

/// Binary-outcome one-step estimator with `ρ` known or estimated by its plug-in.
pub fn onestep_theta_binary(ns: &NuisanceSet<f64>, d: &Dataset, rho: RhoMode) -> Result<Estimate> {
    let recs = index_records(ns, d)?;
    let (value, phi) = onestep_binary_core(&recs, &vec![ns; recs.len()], rho)?;
    let mut diagnostics = diagnostics_for(ns);
    rho_diagnostics(&mut diagnostics, rho_for(ns, rho)?, rho);
    Estimate::with_influence(Estimand::Theta, Method::OnestepBinary, value, phi, diagnostics)
}

/// `ψ̂ = P_n(R_1 Y) + P_n(R_1=0) θ̂`, influence values combined by the delta method.
/// `theta` may be omitted only when no record has `R_1 = 0`.
pub fn psi_estimate(d: &Dataset, theta: Option<&Estimate>) -> Result<Estimate> {
    let n = d.len();
    let mut r1y = Vec::with_capacity(n);
    let mut n1 = 0usize;
    for r in &d.records {
        match &r.y {
            Some(label) => {
                n1 += 1;
                let v = label.trim().parse::<f64>().map_err(|_| Error::NonNumericOutcome(label.clone()))?;
                r1y.push(v);
            }
            None => r1y.push(0.0),
        }
    }
    if n1 == 0 {
        return Err(Error::EmptyStratum { nuisance: "psi".into(), cell: "R_1=1".into() });
    }
    let m_r1y = mean(&r1y);
    if n1 == n {
        let influence = r1y.iter().map(|v| v - m_r1y).collect();
        let method = theta.map_or(Method::Plugin, |t| t.method);
        return Estimate::with_influence(Estimand::Psi, method, m_r1y, influence, Diagnostics::default());
    }
    let theta = theta.ok_or_else(|| Error::InvalidArgument("records with R_1 = 0 need a θ estimate".into()))?;
    if theta.influence.len() != n {
        return Err(Error::InvalidArgument(format!(
            "θ estimate carries {} influence values for {n} records",
            theta.influence.len()
        )));
    }
    let p0 = (n - n1) as f64 / n as f64;
    let value = m_r1y + p0 * theta.value;
    let influence = d
        .records
        .iter()
        .zip(&r1y)
        .zip(&theta.influence)
        .map(|((r, ry), phi)| {
            let miss = if r.r1 { 0.0 } else { 1.0 };
            (ry - m_r1y) + (miss - p0) * theta.value + p0 * phi
        })
        .collect();
    Estimate::with_influence(Estimand::Psi, theta.method, value, influence, theta.diagnostics.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaEstimator {
    General,
    Binary(RhoMode),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossfitConfig {
    pub folds: usize,
    pub seed: u64,
    pub smoothing: SmoothingConfig,
    pub estimator: ThetaEstimator,
}

/// Fold of each record: a seeded permutation of positions, taken mod `k`.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % k;
    }
    fold
}

/// Cross-fit one-step estimate: every record's nuisances come from the fit
/// on the other folds, and the one-step display is evaluated on the pooled
/// sample.
pub fn crossfit(d: &Dataset, cfg: &CrossfitConfig) -> Result<Estimate> {
    let n = d.len();
    let k = cfg.folds;
    if k < 2 || k > n {
        return Err(Error::FoldTooSmall(format!("{k} folds for {n} records")));
    }
    let fold = fold_assignment(n, k, cfg.seed);
    let (ys, xs) = dataset_supports(d);
    let sets: Vec<NuisanceSet<f64>> = (0..k)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..n).filter(|&i| fold[i] != f).collect();
            fit_nuisances(&d.subset(&train), &cfg.smoothing, Some((&ys, &xs)))
                .map_err(|e| Error::FoldTooSmall(format!("fold {f}: {e}")))
        })
        .collect::<Result<_>>()?;
    let recs = index_records(&sets[0], d)?;
    let nuis: Vec<&NuisanceSet<f64>> = fold.iter().map(|&f| &sets[f]).collect();
    let mut diagnostics = Diagnostics {
        clip_events: sets.iter().map(|s| s.clip_events).sum(),
        fold_seed: Some(cfg.seed),
        fold_sizes: (0..k).map(|f| fold.iter().filter(|&&g| g == f).count()).collect(),
        ..Default::default()
    };
    let (method, (value, phi)) = match cfg.estimator {
        ThetaEstimator::General => (Method::OnestepGeneral, onestep_general_core(&recs, &nuis)?),
        ThetaEstimator::Binary(mode) => {
            let rhos: Vec<f64> = sets.iter().map(|s| rho_for(s, mode)).collect::<Result<_>>()?;
            rho_diagnostics(&mut diagnostics, mean(&rhos), mode);
            (Method::OnestepBinary, onestep_binary_core(&recs, &nuis, mode)?)
        }
    };
    Estimate::with_influence(Estimand::Theta, method, value, phi, diagnostics)
}

/// SplitMix64 mix of `(base, index)`; per-replication seeds.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub reps: usize,
    pub n: usize,
    pub seed: u64,
    pub smoothing: SmoothingConfig,
    pub rho: RhoMode,
    /// Fitted nuisances are bumped by `scale · n^{-1/4}` along a direction
    /// drawn afresh for each replication.
    pub perturb_scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRow {
    pub kind: String,
    pub rep: usize,
    pub seed: u64,
    pub value: f64,
    pub se: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub covered: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub kind: String,
    pub reps: usize,
    pub truth: f64,
    pub mean: f64,
    pub bias: f64,
    pub sd: f64,
    pub coverage: Option<f64>,
    pub median_abs_bias: f64,
    /// Monte Carlo standard error of `mean`.
    pub mc_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub rows: Vec<McRow>,
    pub summaries: Vec<McSummary>,
}

impl McReport {
    pub fn summary(&self, kind: &str) -> Option<&McSummary> {
        self.summaries.iter().find(|s| s.kind == kind)
    }

    pub fn values(&self, kind: &str) -> Vec<f64> {
        self.rows.iter().filter(|r| r.kind == kind).map(|r| r.value).collect()
    }
}

pub const MC_PLUGIN: &str = "plugin";
pub const MC_ONESTEP: &str = "onestep_general";
pub const MC_PLUGIN_BINARY: &str = "plugin_binary";
pub const MC_ONESTEP_BINARY: &str = "onestep_binary";
pub const MC_PSI: &str = "psi";

/// Seeded replications from `law`; replication `r` samples with
/// `derive_seed(cfg.seed, r)`. Rows are ordered by replication.
pub fn run_mc(law: &PermutationLaw<f64>, cfg: &McConfig) -> Result<McReport> {
    if cfg.reps == 0 || cfg.n == 0 {
        return Err(Error::InvalidArgument("reps and n must be positive".into()));
    }
    // truths by exact enumeration, rounded once
    let exact_law = law.to_exact()?;
    let theta = exact_law.true_theta()?.to_f64_lossy();
    let psi = exact_law.true_psi()?.to_f64_lossy();
    let exact = nuisances_from_law(&law.observed_law())?;
    let binary = exact.binary.is_some();
    let targets: Vec<NuisanceName> = NuisanceName::ALL
        .into_iter()
        .filter(|t| binary || !matches!(t, NuisanceName::Mu | NuisanceName::Rho))
        .collect();
    let eps = cfg.perturb_scale.map(|scale| scale * (cfg.n as f64).powf(-0.25));
    let supports = (law.y_support().to_vec(), law.x_support().to_vec());
    let per_rep: Vec<Vec<McRow>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| -> Result<Vec<McRow>> {
            let seed = derive_seed(cfg.seed, rep as u64);
            let d = law.sample(cfg.n, seed)?;
            let mut ns = fit_nuisances(&d, &cfg.smoothing, Some((&supports.0, &supports.1)))?;
            if let Some(eps) = eps {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
                let spec = BumpSpec::random(&exact, &targets, &mut rng);
                ns = perturb(&ns, eps, &spec)?;
            }
            let row = |kind: &str, e: &Estimate, truth: f64| McRow {
                kind: kind.into(),
                rep,
                seed,
                value: e.value,
                se: e.standard_error,
                ci_low: e.ci_low,
                ci_high: e.ci_high,
                covered: e.covers(truth),
            };
            let plugin = plugin_theta(&ns, &d)?;
            let onestep = onestep_theta(&ns, &d)?;
            let mut rows = vec![row(MC_PLUGIN, &plugin, theta), row(MC_ONESTEP, &onestep, theta)];
            if binary {
                rows.push(row(MC_PLUGIN_BINARY, &plugin_theta_binary(&ns, &d, cfg.rho)?, theta));
                rows.push(row(MC_ONESTEP_BINARY, &onestep_theta_binary(&ns, &d, cfg.rho)?, theta));
            }
            rows.push(row(MC_PSI, &psi_estimate(&d, Some(&onestep))?, psi));
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<McRow> = per_rep.into_iter().flatten().collect();
    let mut kinds = vec![MC_PLUGIN, MC_ONESTEP];
    if binary {
        kinds.extend([MC_PLUGIN_BINARY, MC_ONESTEP_BINARY]);
    }
    kinds.push(MC_PSI);
    let summaries = kinds
        .into_iter()
        .map(|kind| {
            let truth = if kind == MC_PSI { psi } else { theta };
            let sel: Vec<&McRow> = rows.iter().filter(|r| r.kind == kind).collect();
            let values: Vec<f64> = sel.iter().map(|r| r.value).collect();
            let m = mean(&values);
            let sd = sample_sd(&values);
            let covered: Vec<bool> = sel.iter().filter_map(|r| r.covered).collect();
            let coverage =
                (!covered.is_empty()).then(|| covered.iter().filter(|&&c| c).count() as f64 / covered.len() as f64);
            let mut abs_bias: Vec<f64> = values.iter().map(|v| (v - truth).abs()).collect();
            abs_bias.sort_by(f64::total_cmp);
            McSummary {
                kind: kind.into(),
                reps: values.len(),
                truth,
                mean: m,
                bias: m - truth,
                sd,
                coverage,
                median_abs_bias: median_sorted(&abs_bias),
                mc_se: sd / (values.len() as f64).sqrt(),
            }
        })
        .collect();
    Ok(McReport { rows, summaries })
}

fn median_sorted(v: &[f64]) -> f64 {
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nuisance::nuisances_with_zeta;
    use crate::permlaw::{exact_frequency_dataset, ObservedRecord};
    use crate::scalar::{Rational, Scalar};

    fn w1_exact() -> (Dataset, NuisanceSet<f64>) {
        let law = PermutationLaw::<Rational>::reference();
        let d = exact_frequency_dataset(&law.observed_law(), 1000).unwrap();
        let ns = nuisances_from_law(&law.observed_law()).unwrap().to_f64();
        (d, ns)
    }

    #[test]
    fn exact_inputs_recover_reference_values() {
        let (d, ns) = w1_exact();
        assert!((plugin_theta(&ns, &d).unwrap().value - 0.44).abs() < 1e-12);
        let os = onestep_theta(&ns, &d).unwrap();
        assert!((os.value - 0.44).abs() < 1e-12);
        let ob = onestep_theta_binary(&ns, &d, RhoMode::Known(0.625)).unwrap();
        assert!((ob.value - 0.44).abs() < 1e-12);
        let ps = psi_estimate(&d, Some(&os)).unwrap();
        assert!((ps.value - 0.5).abs() < 1e-12);
        assert!(ps.ci_low.unwrap() <= ps.value && ps.value <= ps.ci_high.unwrap());
    }

    #[test]
    fn influence_mean_zero_on_exact_frequencies() {
        let (d, ns) = w1_exact();
        let recs = index_records(&ns, &d).unwrap();
        let nuis = vec![&ns; recs.len()];
        let theta_p = plugin_core(&recs, &nuis).unwrap();
        let (value, _) = onestep_general_core(&recs, &nuis).unwrap();
        assert!((value - theta_p).abs() < 1e-10);
        let (vb, phib) = onestep_binary_core(&recs, &nuis, RhoMode::Known(0.625)).unwrap();
        assert!(mean(&phib).abs() < 1e-10);
        assert!((vb - theta_p).abs() < 1e-10);
    }

    #[test]
    fn onestep_is_plugin_plus_correction() {
        let d = PermutationLaw::reference().sample(3000, 9).unwrap();
        let ns = fit_nuisances(&d, &SmoothingConfig::default(), None).unwrap();
        let recs = index_records(&ns, &d).unwrap();
        let nuis = vec![&ns; recs.len()];
        let plugin = plugin_theta(&ns, &d).unwrap().value;
        let os = onestep_theta(&ns, &d).unwrap();
        let (_, centered) = onestep_general_core(&recs, &nuis).unwrap();
        assert!(mean(&centered).abs() < 1e-12);
        // recompute the raw correction by hand from the centered values and plug-in
        let correction = os.value - plugin;
        let n01 = count(&recs, false, true) as f64;
        let pi01 = n01 / recs.len() as f64;
        let raw: Vec<f64> = recs
            .iter()
            .map(|r| {
                let mut v = 0.0;
                if !r.r1 && r.r2 {
                    v += ns.ratio(r.x.unwrap()) - plugin;
                }
                if r.r1 {
                    let y = r.y.unwrap();
                    if r.r2 {
                        let x = r.x.unwrap();
                        let g = ns.gamma[x];
                        v += (ns.y_values[y] - ns.ratio(x)) * (1.0 - g) / (g * ns.alpha[x] * ns.zeta[y]);
                    }
                    v -= ((if r.r2 { 1.0 } else { 0.0 }) / ns.zeta[y] - 1.0) * ns.delta[y];
                }
                v / pi01
            })
            .collect();
        assert!((mean(&raw) - correction).abs() < 1e-12);
        let sd = sample_sd(&centered);
        assert!((os.standard_error.unwrap() - sd / (recs.len() as f64).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn plugin_moves_first_order_in_zeta_and_onestep_second_order() {
        let law = PermutationLaw::<f64>::reference();
        let obs = law.observed_law();
        let d = exact_frequency_dataset(&PermutationLaw::<Rational>::reference().observed_law(), 1000).unwrap();
        let mut plugin_slopes = Vec::new();
        let mut onestep_gaps = Vec::new();
        for eps in [0.1, 0.05, 0.025, 0.0125] {
            let zeta: Vec<f64> = law.zeta().iter().zip([1.0, -1.0]).map(|(z, w)| z * (1.0 + eps * w)).collect();
            let ns = nuisances_with_zeta(&obs, &zeta).unwrap();
            let plugin = plugin_theta(&ns, &d).unwrap().value;
            let os = onestep_theta(&ns, &d).unwrap().value;
            let corr = os - plugin;
            // first-order: the correction cancels the plug-in drift
            assert!(((plugin - 0.44) + corr).abs() < 0.2 * (plugin - 0.44).abs());
            plugin_slopes.push((plugin - 0.44) / eps);
            onestep_gaps.push((os - 0.44).abs());
        }
        for w in plugin_slopes.windows(2) {
            assert!(w[0].abs() > 1e-3 && (w[1] / w[0] - 1.0).abs() < 0.2);
        }
        for w in onestep_gaps.windows(2) {
            assert!(w[1] / w[0] < 0.4);
        }
    }

    #[test]
    fn empty_01_stratum() {
        let d = Dataset::from_counts(&[
            (ObservedRecord::from_labels("1", "1", "1", "0").unwrap(), 5),
            (ObservedRecord::from_labels("1", "0", "0", "?").unwrap(), 5),
        ]);
        let ns = fit_nuisances(&d, &SmoothingConfig::default(), None).unwrap();
        assert_eq!(plugin_theta(&ns, &d).unwrap_err().code(), "EMPTY_STRATUM");
        assert_eq!(onestep_theta(&ns, &d).unwrap_err().code(), "EMPTY_STRATUM");
        // nothing missing in Y: ψ̂ is the complete-case mean
        let ps = psi_estimate(&d, None).unwrap();
        assert!((ps.value - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rho_one_with_constant_zeta_collapses() {
        let r = Rational::from_ratio;
        let law = PermutationLaw::new(
            vec!["0".into(), "1".into()],
            vec!["0".into(), "1".into(), "2".into()],
            vec![r(2, 5), r(3, 5)],
            vec![vec![r(1, 2), r(1, 4), r(1, 4)], vec![r(1, 5), r(1, 5), r(3, 5)]],
            vec![r(1, 2), r(1, 2), r(3, 4)],
            vec![r(2, 5), r(2, 5)],
            r(3, 10),
        )
        .unwrap();
        let obs = law.observed_law();
        let ns = nuisances_from_law(&obs).unwrap().to_f64();
        assert!((ns.binary.as_ref().unwrap().rho - 1.0).abs() < 1e-12);
        let d = exact_frequency_dataset(&obs, 2000).unwrap();
        let est = onestep_theta_binary(&ns, &d, RhoMode::Known(1.0)).unwrap();
        let mu = &ns.binary.as_ref().unwrap().mu;
        let recs = index_records(&ns, &d).unwrap();
        let mu01: Vec<f64> = recs.iter().filter(|r| !r.r1 && r.r2).map(|r| mu[r.x.unwrap()]).collect();
        assert!((est.value - mean(&mu01)).abs() < 1e-12);
        assert!((est.value - law.true_theta().unwrap().to_f64_lossy()).abs() < 1e-12);
    }

    #[test]
    fn estimated_rho_sets_caveat() {
        let d = PermutationLaw::reference().sample(2000, 4).unwrap();
        let ns = fit_nuisances(&d, &SmoothingConfig::default(), None).unwrap();
        let e = onestep_theta_binary(&ns, &d, RhoMode::Estimate).unwrap();
        assert_eq!(e.diagnostics.caveats, vec![CAVEAT_ESTIMATED_RHO.to_string()]);
        assert_eq!(e.diagnostics.rho, Some(ns.binary.as_ref().unwrap().rho));
        let k = onestep_theta_binary(&ns, &d, RhoMode::Known(0.625)).unwrap();
        assert!(k.diagnostics.caveats.is_empty());
    }

    #[test]
    fn record_order_invariance() {
        let d = PermutationLaw::reference().sample(1500, 21).unwrap();
        let mut rev = d.clone();
        rev.records.reverse();
        let cfg = SmoothingConfig::default();
        let (a, b) = (fit_nuisances(&d, &cfg, None).unwrap(), fit_nuisances(&rev, &cfg, None).unwrap());
        let ea = onestep_theta(&a, &d).unwrap();
        let eb = onestep_theta(&b, &rev).unwrap();
        assert_eq!(ea.value, eb.value);
        assert_eq!(ea.standard_error, eb.standard_error);
        let ba = onestep_theta_binary(&a, &d, RhoMode::Known(0.625)).unwrap();
        let bb = onestep_theta_binary(&b, &rev, RhoMode::Known(0.625)).unwrap();
        assert_eq!(ba.value, bb.value);
    }

    #[test]
    fn crossfit_behaviour() {
        let d = PermutationLaw::reference().sample(4000, 8).unwrap();
        let mk = |k| CrossfitConfig {
            folds: k,
            seed: 99,
            smoothing: SmoothingConfig::default(),
            estimator: ThetaEstimator::General,
        };
        let e2 = crossfit(&d, &mk(2)).unwrap();
        let e5 = crossfit(&d, &mk(5)).unwrap();
        for e in [&e2, &e5] {
            assert!((e.value - 0.44).abs() < 3.0 * e.standard_error.unwrap() * 2f64.sqrt());
        }
        assert_eq!(crossfit(&d, &mk(5)).unwrap(), e5);
        assert_eq!(e5.diagnostics.fold_sizes, vec![800; 5]);
        assert_eq!(crossfit(&d, &mk(1)).unwrap_err().code(), "FOLD_TOO_SMALL");

        let rec = |a, b, y, x| ObservedRecord::from_labels(a, b, y, x).unwrap();
        let tiny = Dataset::from_counts(&[
            (rec("1", "1", "0", "0"), 2),
            (rec("1", "1", "1", "1"), 2),
            (rec("1", "0", "1", "?"), 2),
            (rec("0", "1", "?", "0"), 2),
            (rec("0", "1", "?", "1"), 1),
            (rec("0", "0", "?", "?"), 1),
        ]);
        let loo = crossfit(&tiny, &mk(tiny.len())).unwrap();
        assert!(loo.value.is_finite() && loo.standard_error.unwrap().is_finite());
        assert_eq!(loo.diagnostics.fold_sizes, vec![1; 10]);
    }

    #[test]
    fn rho_mode_parsing() {
        assert_eq!(RhoMode::parse("known:0.625").unwrap(), RhoMode::Known(0.625));
        assert_eq!(RhoMode::parse("estimate").unwrap(), RhoMode::Estimate);
        assert_eq!(RhoMode::parse("known:-1").unwrap_err().code(), "RANGE_VIOLATION");
        assert_eq!(RhoMode::parse("guess").unwrap_err().code(), "INVALID_ARGUMENT");
    }

    #[test]
    fn derived_seeds_differ() {
        let s: std::collections::BTreeSet<u64> = (0..1000).map(|i| derive_seed(7, i)).collect();
        assert_eq!(s.len(), 1000);
    }
}
