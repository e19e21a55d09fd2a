//! Exact checks of the first-order expansion
//! `θ(P̄) − θ(P) = ∫φ(·;P̄) d(P̄ − P) + R_θ(P̄; P)` by summation over
//! observed cells, for the general and the binary-outcome influence function.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::identify::{theta_binary_with_rho, theta_prop1};
use crate::nuisance::{nuisances_from_strata, NuisanceSet};
use crate::permlaw::PermutationLaw;
use crate::scalar::{ordered_sum, Rational, Scalar};
use crate::strata::{ObservedCell, ObservedStrata};
use crate::tabular::TabularLaw;

/// General influence function at one observed cell, built from `ns` and `θ`.
pub fn influence_general<T: Scalar>(ns: &NuisanceSet<T>, theta: &T, c: ObservedCell) -> T {
    let one = T::one();
    let mut v = T::zero();
    if !c.r1 && c.r2 {
        v = v + ns.ratio(c.x.expect("X seen when R_2=1")) - theta.clone();
    }
    if c.r1 {
        let y = c.y.expect("Y seen when R_1=1");
        let zeta = ns.zeta[y].clone();
        if c.r2 {
            let x = c.x.expect("X seen when R_2=1");
            let g = ns.gamma[x].clone();
            v = v + (one.clone() / ns.alpha[x].clone()) * (one.clone() / zeta.clone()) * ((one.clone() - g.clone()) / g)
                * (ns.y_values[y].clone() - ns.ratio(x));
        }
        let r2 = if c.r2 { one.clone() } else { T::zero() };
        v = v - (r2 / zeta - one) * ns.delta[y].clone();
    }
    v / ns.pi01.clone()
}

/// Binary-outcome influence function with `ρ` fixed, at one observed cell.
pub fn influence_binary<T: Scalar>(ns: &NuisanceSet<T>, theta: &T, rho: &T, c: ObservedCell) -> Result<T> {
    let b = ns.binary.as_ref().ok_or(Error::NotBinaryOutcome)?;
    let one = T::one();
    let mut v = T::zero();
    if c.r1 && c.r2 {
        let (x, y) = (c.x.expect("X seen"), c.y.expect("Y seen"));
        let xi = b.xi[x].clone();
        let w = (one.clone() + xi.clone()) / (rho.clone() + xi.clone());
        let mu = xi.clone() / (one.clone() + xi);
        v = v + rho.clone() * w.clone() * w * ns.varpi[x].clone() / ns.pi11.clone() * (ns.y_values[y].clone() - mu);
    }
    if !c.r1 && c.r2 {
        let xi = b.xi[c.x.expect("X seen")].clone();
        v = v + (xi.clone() / (rho.clone() + xi) - theta.clone()) / ns.pi01.clone();
    }
    Ok(v)
}

/// `Σ_o (P̄(o) − P(o)) f(o)` over the observed cells.
fn integrate_difference<T: Scalar>(
    p: &ObservedStrata<T>,
    pbar: &ObservedStrata<T>,
    mut f: impl FnMut(ObservedCell) -> Result<T>,
) -> Result<T> {
    let mut bar = Vec::new();
    pbar.for_each_cell(|c, m| bar.push((c, m.clone())));
    let mut terms = Vec::with_capacity(bar.len());
    let mut k = 0;
    let mut failure = None;
    p.for_each_cell(|c, m| {
        let (cb, mb) = &bar[k];
        k += 1;
        debug_assert_eq!(c, *cb);
        let d = mb.clone() - m.clone();
        if d != T::zero() {
            match f(c) {
                Ok(v) => terms.push(d * v),
                Err(e) => {
                    failure.get_or_insert(e);
                }
            }
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(ordered_sum(terms)),
    }
}

fn expectation<T: Scalar>(p: &ObservedStrata<T>, mut f: impl FnMut(ObservedCell) -> T) -> T {
    let mut terms = Vec::new();
    p.for_each_cell(|c, m| {
        if *m != T::zero() {
            terms.push(m.clone() * f(c));
        }
    });
    ordered_sum(terms)
}

/// Contributions to the explicit general remainder: `lead` is
/// `(1 − π01/π̄01)(θ̄ − θ)`, `t1`..`t4` are `E_P(t_k) / π̄01`.
#[derive(Debug, Clone, PartialEq)]
pub struct RemainderTerms<T> {
    pub lead: T,
    pub t1: T,
    pub t2: T,
    pub t3: T,
    pub t4: T,
}

impl<T: Scalar> RemainderTerms<T> {
    pub fn total(&self) -> T {
        ordered_sum([self.lead.clone(), self.t1.clone(), self.t2.clone(), self.t3.clone(), self.t4.clone()])
    }
}

/// Explicit remainder from unbarred nuisances `ns` (the law `p`) and barred
/// nuisances `bar`. Every term but `lead` is a product of two discrepancies.
pub fn remainder_terms<T: Scalar>(
    p: &ObservedStrata<T>,
    ns: &NuisanceSet<T>,
    theta: &T,
    bar: &NuisanceSet<T>,
    theta_bar: &T,
) -> RemainderTerms<T> {
    let one = T::one();
    let odds_ratio = |g: &T| (one.clone() - g.clone()) / g.clone();
    let lead = (one.clone() - ns.pi01.clone() / bar.pi01.clone()) * (theta_bar.clone() - theta.clone());
    let d_ratio = |x: usize| bar.ratio(x) - ns.ratio(x);
    let d_inv_zeta = |y: usize| one.clone() / bar.zeta[y].clone() - one.clone() / ns.zeta[y].clone();
    let t1 = expectation(p, |c| match (c.r2, c.x) {
        (true, Some(x)) => {
            let (g, gb) = (ns.gamma[x].clone(), bar.gamma[x].clone());
            let second = (one.clone() - g.clone())
                - (ns.alpha[x].clone() / bar.alpha[x].clone()) * (g / gb.clone()) * (one.clone() - gb);
            d_ratio(x) * second
        }
        _ => T::zero(),
    });
    let t2 = expectation(p, |c| match (c.r1 && c.r2, c.x, c.y) {
        (true, Some(x), Some(y)) => {
            T::zero() - (one.clone() / bar.alpha[x].clone()) * odds_ratio(&bar.gamma[x]) * d_ratio(x) * d_inv_zeta(y)
        }
        _ => T::zero(),
    });
    let t3 = expectation(p, |c| match (c.r1 && c.r2, c.y) {
        (true, Some(y)) => T::zero() - d_inv_zeta(y) * (bar.delta[y].clone() - ns.delta[y].clone()),
        _ => T::zero(),
    });
    let t4 = expectation(p, |c| match (c.r1 && c.r2, c.x, c.y) {
        (true, Some(x), Some(y)) => {
            let w_bar = (one.clone() / bar.alpha[x].clone()) * odds_ratio(&bar.gamma[x]);
            let w = (one.clone() / ns.alpha[x].clone()) * odds_ratio(&ns.gamma[x]);
            (ns.y_values[y].clone() - ns.ratio(x)) * d_inv_zeta(y) * (w_bar - w)
        }
        _ => T::zero(),
    });
    let scale = |v: T| v / bar.pi01.clone();
    RemainderTerms { lead, t1: scale(t1), t2: scale(t2), t3: scale(t3), t4: scale(t4) }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpansionReport<T> {
    pub theta_p: T,
    pub theta_pbar: T,
    /// `∫φ(·;P̄) d(P̄ − P)`
    pub if_integral: T,
    /// Explicit remainder display, where computable.
    pub remainder_formula: Option<T>,
    /// `θ(P̄) − θ(P) − if_integral`
    pub remainder_identity: T,
    /// `|remainder_formula − remainder_identity|`
    pub identity_residual: Option<T>,
    /// Named pieces of the remainder.
    pub pieces: Vec<(String, T)>,
}

impl<T: Scalar> ExpansionReport<T> {
    pub fn to_f64(&self) -> ExpansionReport<f64> {
        ExpansionReport {
            theta_p: self.theta_p.to_f64_lossy(),
            theta_pbar: self.theta_pbar.to_f64_lossy(),
            if_integral: self.if_integral.to_f64_lossy(),
            remainder_formula: self.remainder_formula.as_ref().map(T::to_f64_lossy),
            remainder_identity: self.remainder_identity.to_f64_lossy(),
            identity_residual: self.identity_residual.as_ref().map(T::to_f64_lossy),
            pieces: self.pieces.iter().map(|(k, v)| (k.clone(), v.to_f64_lossy())).collect(),
        }
    }

    pub fn piece(&self, name: &str) -> Option<&T> {
        self.pieces.iter().find(|(k, _)| k == name).map(|(_, v)| v)
    }
}

fn strata_pair<T: Scalar>(p: &TabularLaw<T>, pbar: &TabularLaw<T>) -> Result<(ObservedStrata<T>, ObservedStrata<T>)> {
    let sp = ObservedStrata::from_law(p)?;
    let sb = ObservedStrata::from_law(pbar)?;
    if !sp.same_supports(&sb) {
        return Err(Error::SupportMismatch);
    }
    Ok((sp, sb))
}

/// Expansion check with the general influence function and the explicit
/// four-term remainder.
pub fn expansion_check<T: Scalar>(p: &TabularLaw<T>, pbar: &TabularLaw<T>) -> Result<ExpansionReport<T>> {
    let (sp, sb) = strata_pair(p, pbar)?;
    let theta_p = theta_prop1(p)?;
    let theta_pbar = theta_prop1(pbar)?;
    let ns = nuisances_from_strata(&sp)?;
    let bar = nuisances_from_strata(&sb)?;
    let if_integral = integrate_difference(&sp, &sb, |c| Ok(influence_general(&bar, &theta_pbar, c)))?;
    let remainder_identity = theta_pbar.clone() - theta_p.clone() - if_integral.clone();
    let terms = remainder_terms(&sp, &ns, &theta_p, &bar, &theta_pbar);
    let formula = terms.total();
    Ok(ExpansionReport {
        identity_residual: Some((formula.clone() - remainder_identity.clone()).abs_val()),
        remainder_formula: Some(formula),
        pieces: vec![
            ("lead".into(), terms.lead),
            ("t1".into(), terms.t1),
            ("t2".into(), terms.t2),
            ("t3".into(), terms.t3),
            ("t4".into(), terms.t4),
        ],
        theta_p,
        theta_pbar,
        if_integral,
        remainder_identity,
    })
}

/// `∫φ(·;P) dP` for the general influence function.
pub fn influence_mean<T: Scalar>(p: &TabularLaw<T>) -> Result<T> {
    let s = ObservedStrata::from_law(p)?;
    let ns = nuisances_from_strata(&s)?;
    let theta = theta_prop1(p)?;
    Ok(expectation(&s, |c| influence_general(&ns, &theta, c)))
}

/// `∫φ(·;P) dP` for the binary-outcome influence function with `ρ` fixed.
pub fn influence_mean_binary<T: Scalar>(p: &TabularLaw<T>, rho: &T) -> Result<T> {
    let s = ObservedStrata::from_law(p)?;
    let ns = nuisances_from_strata(&s)?;
    let theta = theta_binary_with_rho(p, rho)?;
    let mut failure = None;
    let v = expectation(&s, |c| match influence_binary(&ns, &theta, rho, c) {
        Ok(v) => v,
        Err(e) => {
            failure.get_or_insert(e);
            T::zero()
        }
    });
    failure.map_or(Ok(v), Err)
}

/// Expansion check for the binary-outcome functional with `ρ` known.
///
/// Pieces: `varpi_difference` `a∫(g(ξ)−g(ξ̄))(ϖ̄−ϖ)dP₁₁`, `strata_ratio`
/// `(b−a)∫(g(ξ̄)−g(ξ))dP₀₁`, `theta_difference` `(1−b)(θ̄−θ)`, `s2` the rest
/// of `remainder_identity`, and `s2_direct`
/// `a∫[g'(ξ̄)(1+ξ̄)²(μ−μ̄) − (g(ξ)−g(ξ̄))]ϖ̄ dP₁₁`, where `g(ξ) = ξ/(ρ+ξ)`,
/// `a = π11/π̄11`, `b = π01/π̄01`. The formula is the sum with `s2_direct`.
pub fn expansion_check_binary<T: Scalar>(p: &TabularLaw<T>, pbar: &TabularLaw<T>, rho: &T) -> Result<ExpansionReport<T>> {
    if *rho <= T::zero() {
        return Err(Error::RangeViolation("rho must be positive".into()));
    }
    let (sp, sb) = strata_pair(p, pbar)?;
    let theta_p = theta_binary_with_rho(p, rho)?;
    let theta_pbar = theta_binary_with_rho(pbar, rho)?;
    let ns = nuisances_from_strata(&sp)?;
    let bar = nuisances_from_strata(&sb)?;
    let (b_p, b_bar) = match (&ns.binary, &bar.binary) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::NotBinaryOutcome),
    };
    let if_integral = integrate_difference(&sp, &sb, |c| influence_binary(&bar, &theta_pbar, rho, c))?;
    let remainder_identity = theta_pbar.clone() - theta_p.clone() - if_integral.clone();

    let one = T::one();
    let g = |xi: &T| xi.clone() / (rho.clone() + xi.clone());
    let g_prime = |xi: &T| rho.clone() / ((rho.clone() + xi.clone()) * (rho.clone() + xi.clone()));
    let a = ns.pi11.clone() / bar.pi11.clone();
    let b = ns.pi01.clone() / bar.pi01.clone();
    let nx = sp.nx();
    let p11_x: Vec<T> = (0..nx).map(|x| sp.p11_x(x) / ns.pi11.clone()).collect();
    let p01_x: Vec<T> = (0..nx).map(|x| sp.p01[x].clone() / ns.pi01.clone()).collect();

    let varpi_difference = a.clone()
        * ordered_sum((0..nx).map(|x| {
            p11_x[x].clone() * (g(&b_p.xi[x]) - g(&b_bar.xi[x])) * (bar.varpi[x].clone() - ns.varpi[x].clone())
        }));
    let strata_ratio =
        (b.clone() - a.clone()) * ordered_sum((0..nx).map(|x| p01_x[x].clone() * (g(&b_bar.xi[x]) - g(&b_p.xi[x]))));
    let theta_difference = (one.clone() - b) * (theta_pbar.clone() - theta_p.clone());
    let s2_direct = a
        * ordered_sum((0..nx).map(|x| {
            let xb = &b_bar.xi[x];
            let lin = g_prime(xb) * (one.clone() + xb.clone()) * (one.clone() + xb.clone())
                * (b_p.mu[x].clone() - b_bar.mu[x].clone());
            p11_x[x].clone() * (lin - (g(&b_p.xi[x]) - g(xb))) * bar.varpi[x].clone()
        }));
    let s2 = remainder_identity.clone() - varpi_difference.clone() - strata_ratio.clone() - theta_difference.clone();
    let formula = ordered_sum([
        varpi_difference.clone(),
        s2_direct.clone(),
        strata_ratio.clone(),
        theta_difference.clone(),
    ]);
    Ok(ExpansionReport {
        theta_p,
        theta_pbar,
        if_integral,
        identity_residual: Some((formula.clone() - remainder_identity.clone()).abs_val()),
        remainder_formula: Some(formula),
        remainder_identity,
        pieces: vec![
            ("varpi_difference".into(), varpi_difference),
            ("s2".into(), s2),
            ("s2_direct".into(), s2_direct),
            ("strata_ratio".into(), strata_ratio),
            ("theta_difference".into(), theta_difference),
        ],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    pub epsilons: Vec<f64>,
    pub remainders: Vec<f64>,
    pub if_integrals: Vec<f64>,
    /// `remainders[i+1] / remainders[i]`; absent when the denominator is zero.
    pub decay_ratios: Vec<Option<f64>>,
    /// `(if_integrals[i+1]/ε[i+1]) / (if_integrals[i]/ε[i])`
    pub if_slope_ratios: Vec<Option<f64>>,
}

fn ratio_or_none(num: f64, den: f64) -> Option<f64> {
    (den != 0.0 && num.is_finite() && den.is_finite()).then(|| num / den)
}

fn check_epsilons(epsilons: &[f64]) -> Result<()> {
    for &e in epsilons {
        if !(e > 0.0 && e <= 1.0) {
            return Err(Error::EpsilonOutOfRange(e));
        }
    }
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("epsilons must be strictly decreasing".into()));
    }
    Ok(())
}

fn scan(epsilons: &[f64], mut at: impl FnMut(f64) -> Result<(f64, f64)>) -> Result<DecayReport> {
    check_epsilons(epsilons)?;
    let mut remainders = Vec::new();
    let mut if_integrals = Vec::new();
    for &e in epsilons {
        let (r, i) = at(e)?;
        remainders.push(r);
        if_integrals.push(i);
    }
    let decay_ratios = remainders.windows(2).map(|w| ratio_or_none(w[1], w[0])).collect();
    let slopes: Vec<f64> = if_integrals.iter().zip(epsilons).map(|(i, e)| i / e).collect();
    let if_slope_ratios = slopes.windows(2).map(|w| ratio_or_none(w[1], w[0])).collect();
    Ok(DecayReport { epsilons: epsilons.to_vec(), remainders, if_integrals, decay_ratios, if_slope_ratios })
}

/// General remainder along `P_ε = (1 − ε)P + εP̄`.
pub fn second_order_scan(p: &TabularLaw<f64>, pbar: &TabularLaw<f64>, epsilons: &[f64]) -> Result<DecayReport> {
    scan(epsilons, |e| {
        let r = expansion_check(p, &p.mix(pbar, e)?)?;
        Ok((r.remainder_identity, r.if_integral))
    })
}

/// Binary-outcome `s2` piece along `P_ε = (1 − ε)P + εP̄`.
pub fn second_order_scan_binary(
    p: &TabularLaw<f64>,
    pbar: &TabularLaw<f64>,
    rho: f64,
    epsilons: &[f64],
) -> Result<DecayReport> {
    scan(epsilons, |e| {
        let r = expansion_check_binary(p, &p.mix(pbar, e)?, &rho)?;
        Ok((*r.piece("s2").expect("s2 piece"), r.if_integral))
    })
}

pub const DEFAULT_EPSILONS: [f64; 4] = [0.2, 0.1, 0.05, 0.025];

/// Logit-scale jitter used for pairs around a reference law.
pub const NEIGHBOR_SCALE: f64 = 0.5;

/// Two independent random permutation laws on the same supports.
pub fn random_pair<R: Rng + ?Sized>(rng: &mut R, x_card: usize, floor: f64) -> (PermutationLaw<f64>, PermutationLaw<f64>) {
    let p = PermutationLaw::random(rng, 2, x_card, floor);
    let pbar = PermutationLaw::random(rng, 2, x_card, floor);
    (p, pbar)
}

/// Law near `base`: each Bernoulli parameter moves by `scale · U(−1, 1)` on
/// the logit scale, each categorical row by the same on the log scale.
pub fn random_neighbor<R: Rng + ?Sized>(base: &PermutationLaw<f64>, rng: &mut R, scale: f64) -> Result<PermutationLaw<f64>> {
    let jitter = |rng: &mut R| scale * rng.gen_range(-1.0..=1.0);
    let bern = |p: f64, rng: &mut R| {
        let o = p / (1.0 - p) * jitter(rng).exp();
        if p >= 1.0 {
            1.0
        } else {
            o / (1.0 + o)
        }
    };
    let cat = |row: &[f64], rng: &mut R| -> Vec<f64> {
        let w: Vec<f64> = row.iter().map(|p| p * (scale * rng.gen_range(-1.0..=1.0)).exp()).collect();
        let total: f64 = w.iter().sum();
        let mut out: Vec<f64> = w.iter().map(|v| v / total).collect();
        let head: f64 = out[..out.len() - 1].iter().sum();
        *out.last_mut().expect("nonempty row") = 1.0 - head;
        out
    };
    let p_y1 = cat(base.p_y1(), rng);
    let p_x = base.p_x1_given_y1().iter().map(|r| cat(r, rng)).collect();
    let r1 = base.p_r1_given_x1().iter().map(|&p| bern(p, rng)).collect();
    let zeta = base.zeta().iter().map(|&p| bern(p, rng)).collect();
    let q0 = bern(*base.q0(), rng);
    PermutationLaw::new(base.y_support().to_vec(), base.x_support().to_vec(), p_y1, p_x, r1, zeta, q0)
}

/// `(base, neighbour)` observed laws for pair `seed`; the neighbour is
/// drawn by [`random_neighbor`] at [`NEIGHBOR_SCALE`] from a ChaCha8 stream
/// seeded with `seed`.
pub fn neighbor_pair(base: &PermutationLaw<f64>, seed: u64) -> Result<(TabularLaw<f64>, TabularLaw<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pbar = random_neighbor(base, &mut rng, NEIGHBOR_SCALE)?;
    Ok((base.observed_law(), pbar.observed_law()))
}

/// Random permutation law with rational parameters on a grid of `1/denom`,
/// every entry in `[1/denom, 1 − 1/denom]`.
pub fn random_rational_law<R: Rng + ?Sized>(rng: &mut R, x_card: usize, denom: i64) -> Result<PermutationLaw<Rational>> {
    let prob = |rng: &mut R| Rational::from_ratio(rng.gen_range(1..denom), denom);
    let dist = |rng: &mut R, k: usize| -> Vec<Rational> {
        let w: Vec<i64> = (0..k).map(|_| rng.gen_range(1..=denom)).collect();
        let total: i64 = w.iter().sum();
        w.iter().map(|&v| Rational::from_ratio(v, total)).collect()
    };
    let ys = vec!["0".to_string(), "1".to_string()];
    let xs: Vec<String> = (0..x_card).map(|i| i.to_string()).collect();
    let p_y1 = dist(rng, 2);
    let p_x = vec![dist(rng, x_card), dist(rng, x_card)];
    let r1 = (0..x_card).map(|_| prob(rng)).collect();
    let zeta = vec![prob(rng), prob(rng)];
    let q0 = prob(rng);
    PermutationLaw::new(ys, xs, p_y1, p_x, r1, zeta, q0)
}
