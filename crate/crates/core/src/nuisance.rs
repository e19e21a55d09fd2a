//! Nuisance functions of the influence functions, as lookup tables over the
//! observed supports.
//!
//! Exact extraction from a law and smoothed fitting from data share one
//! builder that works on stratum masses; a dataset just supplies counts.

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::permlaw::Dataset;
use crate::scalar::{odds, ordered_sum, Scalar};
use crate::strata::ObservedStrata;
use crate::tabular::TabularLaw;

/// Binary-outcome pieces; present only when the outcome support is `{0, 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryNuisances<T> {
    /// Index of the label with value 1.
    pub one: usize,
    /// `μ(x) = P(Y=1 | X=x, R_1=R_2=1)`
    pub mu: Vec<T>,
    /// `ξ = μ / (1 − μ)`
    pub xi: Vec<T>,
    /// `ρ = odds(Y=1 | R_1=R_2=1) / odds(Y=1 | R_1=1)`
    pub rho: T,
}

/// Raw stratum counts behind a fitted set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrataCounts {
    pub n: u64,
    pub n11: Vec<Vec<u64>>,
    pub n10: Vec<u64>,
    pub n01: Vec<u64>,
    pub n00: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceSet<T> {
    pub y_labels: Vec<String>,
    pub x_labels: Vec<String>,
    pub y_values: Vec<T>,
    /// `ζ(y) = P(R_2=1 | R_1=1, Y=y)`
    pub zeta: Vec<T>,
    /// `α(x) = E(1/ζ(Y) | R_1=R_2=1, X=x)`
    pub alpha: Vec<T>,
    /// `β(x) = E(Y/ζ(Y) | R_1=R_2=1, X=x)`
    pub beta: Vec<T>,
    /// `γ(x) = P(R_1=1 | R_2=1, X=x)`
    pub gamma: Vec<T>,
    /// `δ(y) = E((1/α)((1−γ)/γ)(Y − β/α) | R_1=R_2=1, Y=y)`
    pub delta: Vec<T>,
    /// `ϖ(x) = dP(x | R_1=0, R_2=1) / dP(x | R_1=R_2=1)`
    pub varpi: Vec<T>,
    pub binary: Option<BinaryNuisances<T>>,
    /// `P(R_1=1, R_2=1)`
    pub pi11: T,
    /// `P(R_1=0, R_2=1)`
    pub pi01: T,
    /// `P(R_1=1)`
    pub p_r1: T,
    pub counts: Option<StrataCounts>,
    pub clip_events: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    /// Additive pseudo-count per cell.
    pub pseudo_count: f64,
    /// Probabilities are clipped to `[floor, 1 − floor]`.
    pub clip_floor: f64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig { pseudo_count: 0.5, clip_floor: 1e-6 }
    }
}

impl SmoothingConfig {
    pub fn unsmoothed() -> Self {
        SmoothingConfig { pseudo_count: 0.0, ..Self::default() }
    }
}

struct Clipper<T> {
    floor: Option<T>,
    events: usize,
}

impl<T: Scalar> Clipper<T> {
    fn both(&mut self, v: T) -> T {
        match &self.floor {
            Some(f) if v < *f => {
                self.events += 1;
                f.clone()
            }
            Some(f) if v > T::one() - f.clone() => {
                self.events += 1;
                T::one() - f.clone()
            }
            _ => v,
        }
    }

    fn lower(&mut self, v: T) -> T {
        match &self.floor {
            Some(f) if v < *f => {
                self.events += 1;
                f.clone()
            }
            _ => v,
        }
    }
}

fn ratio<T: Scalar>(num: T, den: T, nuisance: &str, cell: &str) -> Result<T> {
    if den <= T::zero() {
        return Err(Error::EmptyStratum { nuisance: nuisance.into(), cell: cell.into() });
    }
    Ok(num / den)
}

/// Index of the outcome label valued 1 when the support is exactly `{0, 1}`.
fn binary_one<T: Scalar>(values: &[T]) -> Option<usize> {
    if values.len() != 2 {
        return None;
    }
    let zero = values.iter().position(|v| *v == T::zero())?;
    let one = values.iter().position(|v| *v == T::one())?;
    (zero != one).then_some(one)
}

/// Builds every nuisance from stratum masses `s` (probabilities or counts)
/// with pseudo-count `c` added to each cell of each conditional table.
fn build<T: Scalar>(
    s: &ObservedStrata<T>,
    c: T,
    floor: Option<T>,
    zeta_override: Option<&[T]>,
) -> Result<NuisanceSet<T>> {
    let ny = s.ny();
    let nx = s.nx();
    let two = T::one() + T::one();
    let cy = c.clone() * T::from_usize_exact(ny);
    let cx = c.clone() * T::from_usize_exact(nx);
    let mut clip = Clipper { floor, events: 0 };

    let n11_y: Vec<T> = (0..ny).map(|y| s.p11_y(y)).collect();
    let n1_y: Vec<T> = (0..ny).map(|y| s.p1_y(y)).collect();
    let n11_x: Vec<T> = (0..nx).map(|x| s.p11_x(x)).collect();
    let n11 = s.mass11();
    let n01 = s.mass01();
    let n_r1 = s.mass_r1();
    let total = s.total();

    let mut zeta = Vec::with_capacity(ny);
    for y in 0..ny {
        let z = ratio(n11_y[y].clone() + c.clone(), n1_y[y].clone() + two.clone() * c.clone(), "zeta", &s.y_labels[y])?;
        zeta.push(clip.both(z));
    }
    if let Some(z) = zeta_override {
        if z.len() != ny || z.iter().any(|v| *v <= T::zero() || *v > T::one()) {
            return Err(Error::RangeViolation("ζ override must have one entry in (0, 1] per outcome label".into()));
        }
        zeta = z.to_vec();
    }

    // p(y | x, 1, 1), indexed [x][y]
    let mut cond = Vec::with_capacity(nx);
    for x in 0..nx {
        let den = n11_x[x].clone() + cy.clone();
        let row = (0..ny)
            .map(|y| ratio(s.p11[y][x].clone() + c.clone(), den.clone(), "alpha", &s.x_labels[x]))
            .collect::<Result<Vec<T>>>()?;
        cond.push(row);
    }
    let alpha: Vec<T> = cond
        .iter()
        .map(|row| ordered_sum(row.iter().zip(&zeta).map(|(p, z)| p.clone() / z.clone())))
        .collect();
    let beta: Vec<T> = cond
        .iter()
        .map(|row| {
            ordered_sum(
                row.iter().zip(&zeta).zip(&s.y_values).map(|((p, z), v)| p.clone() * v.clone() / z.clone()),
            )
        })
        .collect();

    let mut gamma = Vec::with_capacity(nx);
    for x in 0..nx {
        let g = ratio(
            n11_x[x].clone() + c.clone(),
            n11_x[x].clone() + s.p01[x].clone() + two.clone() * c.clone(),
            "gamma",
            &s.x_labels[x],
        )?;
        gamma.push(clip.both(g));
    }
    for (x, g) in gamma.iter().enumerate() {
        if *g <= T::zero() {
            return Err(Error::EmptyStratum { nuisance: "gamma".into(), cell: s.x_labels[x].clone() });
        }
    }

    let pseudo: Vec<Vec<T>> = (0..ny)
        .map(|y| {
            (0..nx)
                .map(|x| {
                    let ratio_x = beta[x].clone() / alpha[x].clone();
                    let g = gamma[x].clone();
                    (T::one() / alpha[x].clone()) * ((T::one() - g.clone()) / g) * (s.y_values[y].clone() - ratio_x)
                })
                .collect()
        })
        .collect();
    let mut delta = Vec::with_capacity(ny);
    for y in 0..ny {
        let den = n11_y[y].clone() + cx.clone();
        let mut terms = Vec::with_capacity(nx);
        for x in 0..nx {
            let w = ratio(s.p11[y][x].clone() + c.clone(), den.clone(), "delta", &s.y_labels[y])?;
            terms.push(w * pseudo[y][x].clone());
        }
        delta.push(ordered_sum(terms));
    }

    let mut varpi = Vec::with_capacity(nx);
    for x in 0..nx {
        let p01 = ratio(s.p01[x].clone() + c.clone(), n01.clone() + cx.clone(), "varpi", "R_1=0,R_2=1")?;
        let p11 = ratio(n11_x[x].clone() + c.clone(), n11.clone() + cx.clone(), "varpi", &s.x_labels[x])?;
        let p11 = clip.lower(p11);
        if p11 <= T::zero() {
            return Err(Error::EmptyStratum { nuisance: "varpi".into(), cell: s.x_labels[x].clone() });
        }
        varpi.push(p01 / p11);
    }

    let binary = match binary_one(&s.y_values) {
        None => None,
        Some(one) => {
            let mut mu = Vec::with_capacity(nx);
            let mut xi = Vec::with_capacity(nx);
            for (x, row) in cond.iter().enumerate() {
                let m = clip.both(row[one].clone());
                if m >= T::one() {
                    return Err(Error::DegenerateOdds(format!("P(Y=1 | X={}, R_1=R_2=1) = 1", s.x_labels[x])));
                }
                xi.push(odds(&m));
                mu.push(m);
            }
            let a = ratio(n11_y[one].clone() + c.clone(), n11.clone() + two.clone() * c.clone(), "rho", "R_1=R_2=1")?;
            let b = ratio(n1_y[one].clone() + c.clone(), n_r1.clone() + two.clone() * c.clone(), "rho", "R_1=1")?;
            let (a, b) = (clip.both(a), clip.both(b));
            for (p, what) in [(&a, "P(Y=1 | R_1=R_2=1)"), (&b, "P(Y=1 | R_1=1)")] {
                if *p <= T::zero() || *p >= T::one() {
                    return Err(Error::DegenerateOdds(format!("{what} = {:?}", p.to_f64_lossy())));
                }
            }
            Some(BinaryNuisances { one, mu, xi, rho: odds(&a) / odds(&b) })
        }
    };

    if total <= T::zero() {
        return Err(Error::EmptyStratum { nuisance: "strata".into(), cell: "all".into() });
    }
    Ok(NuisanceSet {
        y_labels: s.y_labels.clone(),
        x_labels: s.x_labels.clone(),
        y_values: s.y_values.clone(),
        zeta,
        alpha,
        beta,
        gamma,
        delta,
        varpi,
        binary,
        pi11: n11 / total.clone(),
        pi01: n01 / total.clone(),
        p_r1: n_r1 / total,
        counts: None,
        clip_events: clip.events,
    })
}

/// Exact nuisances of an observed law over `(R_1, R_2, Y, X)`.
pub fn nuisances_from_law<T: Scalar>(obs: &TabularLaw<T>) -> Result<NuisanceSet<T>> {
    nuisances_from_strata(&ObservedStrata::from_law(obs)?)
}

/// Exact nuisances of stratum probabilities.
pub fn nuisances_from_strata<T: Scalar>(s: &ObservedStrata<T>) -> Result<NuisanceSet<T>> {
    exact(s, None)
}

/// Exact nuisances of a law under a working selection model `ζ`: α, β and δ
/// are recomputed from the supplied `ζ`, everything else is left as is.
pub fn nuisances_with_zeta<T: Scalar>(obs: &TabularLaw<T>, zeta: &[T]) -> Result<NuisanceSet<T>> {
    exact(&ObservedStrata::from_law(obs)?, Some(zeta))
}

fn exact<T: Scalar>(s: &ObservedStrata<T>, zeta: Option<&[T]>) -> Result<NuisanceSet<T>> {
    build(s, T::zero(), None, zeta).map_err(|e| match e {
        Error::EmptyStratum { nuisance, cell } => {
            Error::PositivityViolation(format!("stratum behind `{nuisance}` at `{cell}` has zero mass"))
        }
        other => other,
    })
}

/// Smoothed frequency-table nuisances. `supports` fixes the label sets; by
/// default they are the labels seen in `d`.
pub fn fit_nuisances(
    d: &Dataset,
    config: &SmoothingConfig,
    supports: Option<(&[String], &[String])>,
) -> Result<NuisanceSet<f64>> {
    if d.is_empty() {
        return Err(Error::EmptyStratum { nuisance: "strata".into(), cell: "all".into() });
    }
    if !(config.pseudo_count >= 0.0 && config.pseudo_count.is_finite()) {
        return Err(Error::InvalidArgument(format!("pseudo-count {} must be finite and >= 0", config.pseudo_count)));
    }
    if !(0.0..0.5).contains(&config.clip_floor) {
        return Err(Error::InvalidArgument(format!("clip floor {} must lie in [0, 0.5)", config.clip_floor)));
    }
    let s = ObservedStrata::<f64>::from_dataset(d, supports)?;
    let floor = (config.clip_floor > 0.0).then_some(config.clip_floor);
    let mut ns = build(&s, config.pseudo_count, floor, None)?;
    let n = |v: &f64| *v as u64;
    ns.counts = Some(StrataCounts {
        n: d.len() as u64,
        n11: s.p11.iter().map(|row| row.iter().map(n).collect()).collect(),
        n10: s.p10.iter().map(n).collect(),
        n01: s.p01.iter().map(n).collect(),
        n00: n(&s.p00),
    });
    Ok(ns)
}

impl<T: Scalar> NuisanceSet<T> {
    pub fn ny(&self) -> usize {
        self.y_labels.len()
    }

    pub fn nx(&self) -> usize {
        self.x_labels.len()
    }

    pub fn y_index(&self, label: &str) -> Result<usize> {
        self.y_labels.iter().position(|l| l == label).ok_or_else(|| Error::UnknownLabel {
            variable: crate::permlaw::Y_OBS.into(),
            label: label.into(),
        })
    }

    pub fn x_index(&self, label: &str) -> Result<usize> {
        self.x_labels.iter().position(|l| l == label).ok_or_else(|| Error::UnknownLabel {
            variable: crate::permlaw::X_OBS.into(),
            label: label.into(),
        })
    }

    /// `β(x) / α(x)`
    pub fn ratio(&self, x: usize) -> T {
        self.beta[x].clone() / self.alpha[x].clone()
    }

    pub fn to_f64(&self) -> NuisanceSet<f64> {
        let v = |xs: &[T]| xs.iter().map(|t| t.to_f64_lossy()).collect::<Vec<f64>>();
        NuisanceSet {
            y_labels: self.y_labels.clone(),
            x_labels: self.x_labels.clone(),
            y_values: v(&self.y_values),
            zeta: v(&self.zeta),
            alpha: v(&self.alpha),
            beta: v(&self.beta),
            gamma: v(&self.gamma),
            delta: v(&self.delta),
            varpi: v(&self.varpi),
            binary: self.binary.as_ref().map(|b| BinaryNuisances {
                one: b.one,
                mu: v(&b.mu),
                xi: v(&b.xi),
                rho: b.rho.to_f64_lossy(),
            }),
            pi11: self.pi11.to_f64_lossy(),
            pi01: self.pi01.to_f64_lossy(),
            p_r1: self.p_r1.to_f64_lossy(),
            counts: self.counts.clone(),
            clip_events: self.clip_events,
        }
    }
}

fn keyed(labels: &[String], values: &[f64]) -> Value {
    let mut m = Map::new();
    for (l, v) in labels.iter().zip(values) {
        m.insert(l.clone(), json!(v));
    }
    Value::Object(m)
}

impl NuisanceSet<f64> {
    /// Audit document with every table keyed by label.
    pub fn to_json_value(&self) -> Value {
        let (ys, xs) = (&self.y_labels, &self.x_labels);
        let mut doc = json!({
            "zeta": keyed(ys, &self.zeta),
            "alpha": keyed(xs, &self.alpha),
            "beta": keyed(xs, &self.beta),
            "gamma": keyed(xs, &self.gamma),
            "delta": keyed(ys, &self.delta),
            "varpi": keyed(xs, &self.varpi),
            "masses": { "pi11": self.pi11, "pi01": self.pi01, "p_r1": self.p_r1 },
            "clip_events": self.clip_events,
        });
        if let Some(b) = &self.binary {
            doc["mu"] = keyed(xs, &b.mu);
            doc["xi"] = keyed(xs, &b.xi);
            doc["rho"] = json!(b.rho);
        }
        if let Some(c) = &self.counts {
            doc["counts"] = json!(c);
        }
        doc
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_json_value()).expect("nuisance document serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NuisanceName {
    Zeta,
    Alpha,
    Beta,
    Gamma,
    Delta,
    Mu,
    Varpi,
    Rho,
}

impl NuisanceName {
    pub const ALL: [NuisanceName; 8] = [
        NuisanceName::Zeta,
        NuisanceName::Alpha,
        NuisanceName::Beta,
        NuisanceName::Gamma,
        NuisanceName::Delta,
        NuisanceName::Mu,
        NuisanceName::Varpi,
        NuisanceName::Rho,
    ];

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "zeta" => NuisanceName::Zeta,
            "alpha" => NuisanceName::Alpha,
            "beta" => NuisanceName::Beta,
            "gamma" => NuisanceName::Gamma,
            "delta" => NuisanceName::Delta,
            "mu" => NuisanceName::Mu,
            "varpi" => NuisanceName::Varpi,
            "rho" => NuisanceName::Rho,
            other => return Err(Error::InvalidArgument(format!("unknown nuisance `{other}`"))),
        })
    }

    fn cardinality(self, ns: &NuisanceSet<f64>) -> usize {
        match self {
            NuisanceName::Zeta | NuisanceName::Delta => ns.ny(),
            NuisanceName::Rho => 1,
            _ => ns.nx(),
        }
    }
}

/// One direction per bumped nuisance, one weight per table cell.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BumpSpec {
    pub bumps: Vec<(NuisanceName, Vec<f64>)>,
}

impl BumpSpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, target: NuisanceName, direction: Vec<f64>) -> Self {
        self.bumps.push((target, direction));
        self
    }

    /// Directions drawn uniformly from `[-1, 1]` for each named target.
    pub fn random<R: Rng + ?Sized>(ns: &NuisanceSet<f64>, targets: &[NuisanceName], rng: &mut R) -> Self {
        let mut spec = BumpSpec::new();
        for &t in targets {
            let w = (0..t.cardinality(ns)).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            spec = spec.with(t, w);
        }
        spec
    }
}

fn logit_bump(p: f64, step: f64) -> f64 {
    if p >= 1.0 || step == 0.0 {
        return p;
    }
    let o = p / (1.0 - p) * step.exp();
    o / (1.0 + o)
}

/// Barred nuisances: logit-scale bumps for ζ, γ, μ; multiplicative
/// `exp(εw)` for α, β, ϖ, ρ; additive `εw` for δ. `ξ` follows `μ`.
pub fn perturb(ns: &NuisanceSet<f64>, eps: f64, spec: &BumpSpec) -> Result<NuisanceSet<f64>> {
    if !eps.is_finite() {
        return Err(Error::RangeViolation(format!("step {eps} is not finite")));
    }
    let mut out = ns.clone();
    for (target, w) in &spec.bumps {
        if w.len() != target.cardinality(ns) {
            return Err(Error::InvalidArgument(format!(
                "direction for {target:?} has {} entries, expected {}",
                w.len(),
                target.cardinality(ns)
            )));
        }
        let need_binary = || {
            out.binary.is_none().then(|| Error::InvalidArgument(format!("{target:?} needs a binary outcome")))
        };
        match target {
            NuisanceName::Zeta => out.zeta.iter_mut().zip(w).for_each(|(v, w)| *v = logit_bump(*v, eps * w)),
            NuisanceName::Gamma => out.gamma.iter_mut().zip(w).for_each(|(v, w)| *v = logit_bump(*v, eps * w)),
            NuisanceName::Alpha => out.alpha.iter_mut().zip(w).for_each(|(v, w)| *v *= (eps * w).exp()),
            NuisanceName::Beta => out.beta.iter_mut().zip(w).for_each(|(v, w)| *v *= (eps * w).exp()),
            NuisanceName::Varpi => out.varpi.iter_mut().zip(w).for_each(|(v, w)| *v *= (eps * w).exp()),
            NuisanceName::Delta => out.delta.iter_mut().zip(w).for_each(|(v, w)| *v += eps * w),
            NuisanceName::Mu => {
                if let Some(e) = need_binary() {
                    return Err(e);
                }
                let b = out.binary.as_mut().expect("checked");
                b.mu.iter_mut().zip(w).for_each(|(v, w)| *v = logit_bump(*v, eps * w));
                b.xi = b.mu.iter().map(|m| m / (1.0 - m)).collect();
            }
            NuisanceName::Rho => {
                if let Some(e) = need_binary() {
                    return Err(e);
                }
                out.binary.as_mut().expect("checked").rho *= (eps * w[0]).exp();
            }
        }
    }
    check_ranges(&out)?;
    Ok(out)
}

fn check_ranges(ns: &NuisanceSet<f64>) -> Result<()> {
    let bad = |name: &str, i: usize, v: f64| Err(Error::RangeViolation(format!("{name}[{i}] = {v}")));
    for (i, &v) in ns.zeta.iter().enumerate() {
        if !(v > 0.0 && v <= 1.0) {
            return bad("zeta", i, v);
        }
    }
    for (i, &v) in ns.gamma.iter().enumerate() {
        if !(v > 0.0 && v < 1.0) {
            return bad("gamma", i, v);
        }
    }
    for (i, &v) in ns.alpha.iter().enumerate() {
        if !(v > 0.0 && v.is_finite()) {
            return bad("alpha", i, v);
        }
    }
    for (i, &v) in ns.varpi.iter().enumerate() {
        if !(v >= 0.0 && v.is_finite()) {
            return bad("varpi", i, v);
        }
    }
    for (name, vs) in [("beta", &ns.beta), ("delta", &ns.delta)] {
        for (i, &v) in vs.iter().enumerate() {
            if !v.is_finite() {
                return bad(name, i, v);
            }
        }
    }
    if let Some(b) = &ns.binary {
        for (i, &v) in b.mu.iter().enumerate() {
            if !(v > 0.0 && v < 1.0) {
                return bad("mu", i, v);
            }
        }
        if !(b.rho > 0.0 && b.rho.is_finite()) {
            return bad("rho", 0, b.rho);
        }
    }
    Ok(())
}
