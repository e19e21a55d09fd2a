use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use mnar_core::estimate::{
    crossfit, onestep_theta, onestep_theta_binary, plugin_theta, plugin_theta_binary, psi_estimate, run_mc,
    CrossfitConfig, Estimate, McConfig, McReport, RhoMode, ThetaEstimator,
};
use mnar_core::identify::{
    complete_case_mean, conditional_odds, density_ratio_form, psi_prop1, selection_odds_ratio, theta_prop1,
};
use mnar_core::mdag::{d_separation, missing_exposure_mdag, permutation_mdag, split, GraphView, MDag};
use mnar_core::nuisance::{fit_nuisances, nuisances_from_law, SmoothingConfig};
use mnar_core::permlaw::{sample_observed, Dataset};
use mnar_core::vonmises::{
    expansion_check, expansion_check_binary, influence_mean, influence_mean_binary, neighbor_pair,
    second_order_scan, second_order_scan_binary, ExpansionReport, DEFAULT_EPSILONS,
};
use mnar_core::{Error, ExactLaw, Law, Model, Result, Scalar};
use serde::{Deserialize, Serialize};

use crate::{Command, DsepArgs, EstimateArgs, IdentifyArgs, McArgs, Outcome, SimulateArgs, VerifyArgs};

/// Schema version of every JSON document the CLI writes.
pub const SPEC_VERSION: &str = "1";

pub fn run(cmd: &Command) -> Result<Outcome> {
    match cmd {
        Command::Simulate(a) => simulate(a),
        Command::Identify(a) => identify(a),
        Command::Estimate(a) => estimate(a),
        Command::Mc(a) => mc(a),
        Command::Verify(a) => verify(a),
        Command::Dsep(a) => dsep(a),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, content: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, content).map_err(|e| Error::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

enum LawInput {
    Model(Model),
    Observed(Law),
}

impl LawInput {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(LawInput::Model(Model::reference()));
        };
        let text = read(path)?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        if value.get("variables").is_some() {
            Ok(LawInput::Observed(Law::from_json(&text)?))
        } else {
            Ok(LawInput::Model(Model::from_json(&text)?))
        }
    }

    fn observed(&self) -> Law {
        match self {
            LawInput::Model(m) => m.observed_law(),
            LawInput::Observed(l) => l.clone(),
        }
    }

    /// Observed law read exactly; see [`Law::to_exact`].
    fn exact_observed(&self) -> Result<ExactLaw> {
        match self {
            LawInput::Model(m) => Ok(m.to_exact()?.observed_law()),
            LawInput::Observed(l) => l.to_exact(),
        }
    }

    fn model(self) -> Result<Model> {
        match self {
            LawInput::Model(m) => Ok(m),
            LawInput::Observed(_) => {
                Err(Error::InvalidArgument("a permutation-law JSON is required, not an observed law".into()))
            }
        }
    }
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
}

fn num(v: f64) -> String {
    v.to_string()
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn simulate(a: &SimulateArgs) -> Result<Outcome> {
    let d = match LawInput::load(a.config.as_deref())? {
        LawInput::Model(m) => m.sample(a.n, a.seed)?,
        LawInput::Observed(l) => sample_observed(&l, a.n, a.seed)?,
    };
    emit(a.out.as_deref(), &d.to_csv())?;
    Ok(Outcome::Ok)
}

/// Evaluated in exact arithmetic and rounded once on output.
fn identify(a: &IdentifyArgs) -> Result<Outcome> {
    let obs = LawInput::load(a.config.as_deref())?.exact_observed()?;
    let ns = nuisances_from_law(&obs)?;
    let mut w = csv_writer();
    w.write_record(["quantity", "x", "value"]).expect("in-memory write");
    let mut row = |q: &str, x: &str, v: mnar_core::Rational| {
        w.write_record([q, x, &num(v.to_f64_lossy())]).expect("in-memory write")
    };
    row("psi", "", psi_prop1(&obs)?);
    row("theta", "", theta_prop1(&obs)?);
    row("complete_case_mean", "", complete_case_mean(&obs)?);
    if ns.binary.is_some() {
        row("rho", "", selection_odds_ratio(&obs)?);
        for x in &ns.x_labels {
            let dr = density_ratio_form(&obs, x)?;
            row("xi", x, conditional_odds(&obs, x)?);
            row("lambda", x, dr.lambda);
            row("posterior", x, dr.posterior_probability);
        }
    }
    emit(a.out.as_deref(), &finish(w))?;
    Ok(Outcome::Ok)
}

/// Estimator settings, read from `--config` and overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    pub method: String,
    pub folds: usize,
    pub seed: u64,
    pub rho: String,
    pub pseudo_count: f64,
    pub clip_floor: f64,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        let s = SmoothingConfig::default();
        EstimateConfig {
            method: "onestep_general".into(),
            folds: 5,
            seed: 0,
            rho: "estimate".into(),
            pseudo_count: s.pseudo_count,
            clip_floor: s.clip_floor,
        }
    }
}

#[derive(Debug, Serialize)]
struct EstimateDocument<'a> {
    spec_version: &'static str,
    estimand: &'static str,
    value: f64,
    se: Option<f64>,
    ci: Option<[f64; 2]>,
    method: &'static str,
    n: usize,
    diagnostics: &'a mnar_core::estimate::Diagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    psi: Option<PsiSummary>,
    config: &'a EstimateConfig,
}

#[derive(Debug, Serialize)]
struct PsiSummary {
    value: f64,
    se: Option<f64>,
    ci: Option<[f64; 2]>,
}

fn ci(e: &Estimate) -> Option<[f64; 2]> {
    Some([e.ci_low?, e.ci_high?])
}

fn estimate(a: &EstimateArgs) -> Result<Outcome> {
    let mut cfg = match &a.config {
        Some(p) => serde_json::from_str(&read(p)?)?,
        None => EstimateConfig::default(),
    };
    if let Some(m) = &a.method {
        cfg.method = m.clone();
    }
    if let Some(k) = a.folds {
        cfg.folds = k;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(r) = &a.rho {
        cfg.rho = r.clone();
    }
    if let Some(c) = a.pseudo_count {
        cfg.pseudo_count = c;
    }
    if let Some(f) = a.clip_floor {
        cfg.clip_floor = f;
    }
    let rho = RhoMode::parse(&cfg.rho)?;
    let smoothing = SmoothingConfig { pseudo_count: cfg.pseudo_count, clip_floor: cfg.clip_floor };
    let d = Dataset::from_csv(&read(&a.data)?)?;
    if cfg.folds == 0 {
        return Err(Error::InvalidArgument("folds must be at least 1".into()));
    }

    let full_fit = || fit_nuisances(&d, &smoothing, None);
    let theta = match cfg.method.as_str() {
        "plugin" => plugin_theta(&full_fit()?, &d)?,
        "plugin_binary" => plugin_theta_binary(&full_fit()?, &d, rho)?,
        "onestep_general" | "onestep_binary" => {
            let estimator = if cfg.method == "onestep_general" {
                ThetaEstimator::General
            } else {
                ThetaEstimator::Binary(rho)
            };
            if cfg.folds == 1 {
                let ns = full_fit()?;
                match estimator {
                    ThetaEstimator::General => onestep_theta(&ns, &d)?,
                    ThetaEstimator::Binary(r) => onestep_theta_binary(&ns, &d, r)?,
                }
            } else {
                crossfit(&d, &CrossfitConfig { folds: cfg.folds, seed: cfg.seed, smoothing, estimator })?
            }
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "method `{other}` is not plugin, plugin_binary, onestep_general or onestep_binary"
            )))
        }
    };
    let psi = if theta.influence.is_empty() {
        None
    } else {
        let p = psi_estimate(&d, Some(&theta))?;
        Some(PsiSummary { value: p.value, se: p.standard_error, ci: ci(&p) })
    };
    let doc = EstimateDocument {
        spec_version: SPEC_VERSION,
        estimand: "theta",
        value: theta.value,
        se: theta.standard_error,
        ci: ci(&theta),
        method: theta.method.name(),
        n: theta.n,
        diagnostics: &theta.diagnostics,
        psi,
        config: &cfg,
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("estimate serializes");
    text.push('\n');
    emit(a.out.as_deref(), &text)?;
    Ok(Outcome::Ok)
}

fn mc_csv(report: &McReport, seed: u64) -> String {
    let mut w = csv_writer();
    w.write_record([
        "kind", "rep", "seed", "value", "se", "ci_low", "ci_high", "covered", "bias", "sd", "coverage",
        "median_abs_bias", "truth",
    ])
    .expect("in-memory write");
    for r in &report.rows {
        let covered = r.covered.map(|c| if c { "1" } else { "0" }).unwrap_or("");
        w.write_record([
            r.kind.as_str(),
            &r.rep.to_string(),
            &r.seed.to_string(),
            &num(r.value),
            &opt(r.se),
            &opt(r.ci_low),
            &opt(r.ci_high),
            covered,
            "",
            "",
            "",
            "",
            "",
        ])
        .expect("in-memory write");
    }
    for s in &report.summaries {
        w.write_record([
            s.kind.as_str(),
            "summary",
            &seed.to_string(),
            &num(s.mean),
            &num(s.mc_se),
            "",
            "",
            "",
            &num(s.bias),
            &num(s.sd),
            &opt(s.coverage),
            &num(s.median_abs_bias),
            &num(s.truth),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

fn mc(a: &McArgs) -> Result<Outcome> {
    let law = LawInput::load(a.config.as_deref())?.model()?;
    let cfg = McConfig {
        reps: a.reps,
        n: a.n,
        seed: a.seed,
        smoothing: SmoothingConfig { pseudo_count: a.pseudo_count, ..Default::default() },
        rho: RhoMode::parse(&a.rho)?,
        perturb_scale: a.perturb,
    };
    let report = run_mc(&law, &cfg)?;
    emit(a.out.as_deref(), &mc_csv(&report, a.seed))?;
    Ok(Outcome::Ok)
}

struct VerifyTable {
    w: csv::Writer<Vec<u8>>,
    failures: usize,
    checks: usize,
}

impl VerifyTable {
    fn new() -> Self {
        let mut w = csv_writer();
        w.write_record(["pair", "form", "quantity", "epsilon", "value"]).expect("in-memory write");
        VerifyTable { w, failures: 0, checks: 0 }
    }

    fn row(&mut self, pair: &str, form: &str, quantity: &str, eps: Option<f64>, v: Option<f64>) {
        self.w.write_record([pair, form, quantity, &opt(eps), &opt(v)]).expect("in-memory write");
    }

    fn gate(&mut self, pair: &str, form: &str, quantity: &str, v: f64, tol: f64) {
        self.checks += 1;
        let pass = v.abs() <= tol;
        if !pass {
            self.failures += 1;
        }
        self.row(pair, form, quantity, None, Some(v));
        self.row(pair, form, &format!("{quantity}_pass"), None, Some(if pass { 1.0 } else { 0.0 }));
    }

    fn report(&mut self, pair: &str, form: &str, r: &ExpansionReport<f64>, tol: f64) {
        self.row(pair, form, "theta_p", None, Some(r.theta_p));
        self.row(pair, form, "theta_pbar", None, Some(r.theta_pbar));
        self.row(pair, form, "if_integral", None, Some(r.if_integral));
        self.row(pair, form, "remainder_formula", None, r.remainder_formula);
        self.row(pair, form, "remainder_identity", None, Some(r.remainder_identity));
        for (name, v) in &r.pieces {
            self.row(pair, form, name, None, Some(*v));
        }
        if let Some(res) = r.identity_residual {
            self.gate(pair, form, "identity_residual", res, tol);
        }
    }

    fn scan(&mut self, pair: &str, form: &str, s: &mnar_core::vonmises::DecayReport) {
        for (i, &e) in s.epsilons.iter().enumerate() {
            self.row(pair, form, "scan_remainder", Some(e), Some(s.remainders[i]));
            self.row(pair, form, "scan_if_integral", Some(e), Some(s.if_integrals[i]));
            if i > 0 {
                self.row(pair, form, "decay_ratio", Some(e), s.decay_ratios[i - 1]);
                self.row(pair, form, "if_slope_ratio", Some(e), s.if_slope_ratios[i - 1]);
            }
        }
    }
}

fn verify_pair(t: &mut VerifyTable, pair: &str, p: &Law, pbar: &Law, rho: RhoMode, tol: f64) -> Result<()> {
    t.report(pair, "general", &expansion_check(p, pbar)?, tol);
    t.gate(pair, "general", "if_mean", influence_mean(p)?, tol);
    t.scan(pair, "general", &second_order_scan(p, pbar, &DEFAULT_EPSILONS)?);
    if nuisances_from_law(p)?.binary.is_some() {
        let rho = match rho {
            RhoMode::Known(v) => v,
            RhoMode::Estimate => selection_odds_ratio(p)?,
        };
        t.row(pair, "binary", "rho", None, Some(rho));
        t.report(pair, "binary", &expansion_check_binary(p, pbar, &rho)?, tol);
        t.gate(pair, "binary", "if_mean", influence_mean_binary(p, &rho)?, tol);
        t.scan(pair, "binary", &second_order_scan_binary(p, pbar, rho, &DEFAULT_EPSILONS)?);
    }
    Ok(())
}

fn verify(a: &VerifyArgs) -> Result<Outcome> {
    if a.tol.is_nan() || a.tol < 0.0 {
        return Err(Error::InvalidArgument(format!("tolerance {} must be >= 0", a.tol)));
    }
    let rho = RhoMode::parse(&a.rho)?;
    let mut t = VerifyTable::new();
    match (&a.config, &a.pbar, a.pairs) {
        (Some(p), Some(pbar), None) => {
            let p = LawInput::load(Some(p))?.observed();
            let pbar = LawInput::load(Some(pbar))?.observed();
            verify_pair(&mut t, "0", &p, &pbar, rho, a.tol)?;
        }
        (None, None, Some(k)) => {
            let base = Model::reference();
            for seed in a.seed..a.seed + k {
                let (p, pbar) = neighbor_pair(&base, seed)?;
                verify_pair(&mut t, &seed.to_string(), &p, &pbar, rho, a.tol)?;
            }
        }
        _ => return Err(Error::InvalidArgument("give either --config with --pbar, or --pairs".into())),
    }
    let (checks, failures) = (t.checks, t.failures);
    emit(a.out.as_deref(), &finish(t.w))?;
    eprintln!("verify: {checks} checks, {failures} above tolerance {}", a.tol);
    Ok(if failures == 0 { Outcome::Ok } else { Outcome::ToleranceFailure })
}

/// `A1 A2 ; B1 | Z1` into its three name lists.
fn parse_query(q: &str) -> Result<(Vec<&str>, Vec<&str>, Vec<&str>)> {
    let bad = || Error::InvalidArgument(format!("query `{q}` is not `A.. ; B.. | Z..`"));
    let (ab, z) = q.split_once('|').unwrap_or((q, ""));
    let (a, b) = ab.split_once(';').ok_or_else(bad)?;
    fn names(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }
    let (a, b, z) = (names(a), names(b), names(z));
    if a.is_empty() || b.is_empty() {
        return Err(bad());
    }
    Ok((a, b, z))
}

fn dsep(a: &DsepArgs) -> Result<Outcome> {
    let g = match (&a.config, a.builtin.as_deref()) {
        (Some(p), _) => MDag::parse(&read(p)?)?,
        (None, Some("missing-exposure")) => missing_exposure_mdag(),
        (None, Some("permutation")) => permutation_mdag(),
        (None, Some(other)) => {
            return Err(Error::InvalidArgument(format!("unknown builtin graph `{other}`")));
        }
        (None, None) => return Err(Error::InvalidArgument("give --config or --builtin".into())),
    };
    let mut interventions = BTreeMap::new();
    for s in &a.split {
        let (node, label) = s
            .split_once('=')
            .filter(|(n, l)| !n.trim().is_empty() && !l.trim().is_empty())
            .ok_or_else(|| Error::InvalidArgument(format!("split `{s}` is not NODE=LABEL")))?;
        interventions.insert(node.trim().to_string(), label.trim().to_string());
    }
    let swig;
    let view: &dyn GraphView = if interventions.is_empty() {
        &g
    } else {
        swig = split(&g, &interventions)?;
        &swig
    };
    let mut out = String::new();
    if a.show {
        out.push_str(&view.graph().to_spec_string());
    }
    for q in &a.query {
        let (qa, qb, qz) = parse_query(q)?;
        let v = d_separation(view, &qa, &qb, &qz)?;
        out.push_str(&format!(
            "query: {} ; {} | {}\nseparated: {}\ndeterministic-path-warning: {}\n",
            qa.join(" "),
            qb.join(" "),
            qz.join(" "),
            v.separated,
            v.deterministic_path_warning
        ));
    }
    emit(a.out.as_deref(), &out)?;
    Ok(Outcome::Ok)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn query_grammar() {
        let (a, b, z) = parse_query("A^(1) ; Y^{a^(1)} R^{a^(1)} | X").unwrap();
        assert_eq!(a, ["A^(1)"]);
        assert_eq!(b, ["Y^{a^(1)}", "R^{a^(1)}"]);
        assert_eq!(z, ["X"]);
        let (_, _, z) = parse_query("R_1 ; Y^(1)").unwrap();
        assert!(z.is_empty());
        assert!(parse_query("A | X").is_err());
        assert!(parse_query(" ; B").is_err());
    }

    #[test]
    fn estimate_config_rejects_unknown_fields() {
        assert!(serde_json::from_str::<EstimateConfig>(r#"{"folds": 3}"#).is_ok());
        assert!(serde_json::from_str::<EstimateConfig>(r#"{"fold": 3}"#).is_err());
    }
}
