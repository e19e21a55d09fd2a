//! Identification functionals evaluated exactly on observed-data laws.
//!
//! Everything here is written against the conditioning API of
//! [`TabularLaw`] so it stays an independent route from the array-based
//! nuisance code in [`crate::nuisance`].

use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::permlaw::{MISSING, R1, R2, X_FULL, X_OBS, Y_FULL, Y_OBS};
use crate::scalar::{odds, ordered_sum, Scalar};
use crate::tabular::{Event, Factor, TabularLaw, Variable};

fn positivity(e: Error, what: &str) -> Error {
    match e {
        Error::ZeroProbabilityEvent(ev) => Error::PositivityViolation(format!("{what}: {ev} has zero mass")),
        other => other,
    }
}

fn observed_labels<T: Scalar>(obs: &TabularLaw<T>, var: &str) -> Result<Vec<String>> {
    Ok(obs.variable(var)?.support.iter().filter(|l| *l != MISSING).cloned().collect())
}

/// `ζ(y) = P(R_2=1 | R_1=1, Y=y)` for every outcome label with `P(R_1=1, Y=y) > 0`.
fn zeta_map<T: Scalar>(obs: &TabularLaw<T>) -> Result<HashMap<String, T>> {
    let mut out = HashMap::new();
    for y in observed_labels(obs, Y_OBS)? {
        let ev = Event::new().with(R1, "1").with(Y_OBS, &y);
        if obs.prob(&ev)? <= T::zero() {
            continue;
        }
        let z = obs.condition(&ev)?.prob(&Event::new().with(R2, "1"))?;
        if z <= T::zero() {
            return Err(Error::PositivityViolation(format!("P(R_2=1 | R_1=1, Y={y}) = 0")));
        }
        out.insert(y, z);
    }
    Ok(out)
}

fn label_value<T: Scalar>(label: &str) -> Result<T> {
    T::parse_label(label).ok_or_else(|| Error::NonNumericOutcome(label.to_string()))
}

/// `θ = E( E{Y/ζ(Y) | 1,1,X} / E{1/ζ(Y) | 1,1,X} | R_1=0, R_2=1 )`.
pub fn theta_prop1<T: Scalar>(obs: &TabularLaw<T>) -> Result<T> {
    let s01 = Event::new().with(R1, "0").with(R2, "1");
    let dist01 = obs.condition(&s01)?.marginal(&[X_OBS])?;
    let zeta = zeta_map(obs)?;
    let cond11 = obs
        .condition(&Event::new().with(R1, "1").with(R2, "1"))
        .map_err(|e| positivity(e, "P(R_1=1, R_2=1)"))?;
    let mut terms = Vec::new();
    for x in observed_labels(obs, X_OBS)? {
        let px = dist01.prob(&Event::new().with(X_OBS, &x))?;
        if px <= T::zero() {
            continue;
        }
        let slice = cond11
            .condition(&Event::new().with(X_OBS, &x))
            .map_err(|e| positivity(e, &format!("X={x} seen with R_1=0 but not with R_1=R_2=1")))?;
        let mut bad = None;
        let mut weight = |c: crate::tabular::Cell<'_, T>, numerator: bool| -> T {
            let y = c.label(Y_OBS);
            match (zeta.get(y), label_value::<T>(y)) {
                (Some(z), Ok(v)) => {
                    let w = T::one() / z.clone();
                    if numerator {
                        v * w
                    } else {
                        w
                    }
                }
                (_, Err(e)) => {
                    bad = Some(e);
                    T::zero()
                }
                (None, _) => {
                    bad = Some(Error::PositivityViolation(format!("ζ({y}) undefined")));
                    T::zero()
                }
            }
        };
        let num = slice.expectation(|c| weight(c, true));
        let den = slice.expectation(|c| weight(c, false));
        if let Some(e) = bad {
            return Err(e);
        }
        terms.push(px * (num / den));
    }
    Ok(ordered_sum(terms))
}

/// `E(Y | R_1 = 1)`.
pub fn complete_case_mean<T: Scalar>(obs: &TabularLaw<T>) -> Result<T> {
    obs.condition(&Event::new().with(R1, "1"))?.mean_of(Y_OBS)
}

/// `ψ = P(R_1=1) E(Y | R_1=1) + P(R_1=0) θ`; equals `E(Y | R_1=1)` when `P(R_1=0) = 0`.
pub fn psi_prop1<T: Scalar>(obs: &TabularLaw<T>) -> Result<T> {
    let p0 = obs.prob(&Event::new().with(R1, "0"))?;
    let cc = complete_case_mean(obs)?;
    if p0 <= T::zero() {
        return Ok(cc);
    }
    let theta = theta_prop1(obs)?;
    Ok((T::one() - p0.clone()) * cc + p0 * theta)
}

/// Identified `p(X^(1)=x, Y^(1)=y)`:
/// `p(R_1=1,y) p(x | R_1=1,Y=y,R_2=1) {1 + p(x | R_1=0,R_2=1) P(R_1=0) / Σ_y' p(x | R_1=1,Y=y',R_2=1) p(R_1=1,y')}`.
pub fn full_law_density<T: Scalar>(obs: &TabularLaw<T>, x: &str, y: &str) -> Result<T> {
    obs.variable(X_OBS)?.label_index(x)?;
    obs.variable(Y_OBS)?.label_index(y)?;
    let p_r1_y = |yl: &str| obs.prob(&Event::new().with(R1, "1").with(Y_OBS, yl));
    let p_x_given_1y1 = |yl: &str| -> Result<T> {
        let ev = Event::new().with(R1, "1").with(Y_OBS, yl).with(R2, "1");
        obs.condition(&ev)
            .map_err(|e| positivity(e, "P(R_1=1, Y=y, R_2=1)"))?
            .prob(&Event::new().with(X_OBS, x))
    };
    let lead = p_r1_y(y)?;
    if lead <= T::zero() {
        return Err(Error::PositivityViolation(format!("P(R_1=1, Y={y}) = 0")));
    }
    let head = lead * p_x_given_1y1(y)?;
    let p0 = obs.prob(&Event::new().with(R1, "0"))?;
    if p0 <= T::zero() {
        return Ok(head);
    }
    let p_x01 = obs
        .condition(&Event::new().with(R1, "0").with(R2, "1"))
        .map_err(|e| positivity(e, "P(R_1=0, R_2=1)"))?
        .prob(&Event::new().with(X_OBS, x))?;
    let mut denom_terms = Vec::new();
    for yl in observed_labels(obs, Y_OBS)? {
        let w = p_r1_y(&yl)?;
        if w > T::zero() {
            denom_terms.push(p_x_given_1y1(&yl)? * w);
        }
    }
    let denom = ordered_sum(denom_terms);
    if denom <= T::zero() {
        if p_x01 > T::zero() {
            return Err(Error::PositivityViolation(format!("X={x} never seen with R_1=R_2=1")));
        }
        return Ok(head);
    }
    Ok(head * (T::one() + p_x01 * p0 / denom))
}

/// Identified joint law of `(Y^(1), X^(1))`.
pub fn identified_full_law<T: Scalar>(obs: &TabularLaw<T>) -> Result<TabularLaw<T>> {
    let ys = observed_labels(obs, Y_OBS)?;
    let xs = observed_labels(obs, X_OBS)?;
    let mut probs = Vec::with_capacity(ys.len() * xs.len());
    for y in &ys {
        for x in &xs {
            probs.push(full_law_density(obs, x, y)?);
        }
    }
    TabularLaw::new(vec![Variable::new(Y_FULL, ys), Variable::new(X_FULL, xs)], probs)
}

fn binary_outcome<T: Scalar>(obs: &TabularLaw<T>) -> Result<(String, String)> {
    let labels = observed_labels(obs, Y_OBS)?;
    let mut zero = None;
    let mut one = None;
    for l in &labels {
        match T::parse_label(l) {
            Some(v) if v == T::zero() => zero = Some(l.clone()),
            Some(v) if v == T::one() => one = Some(l.clone()),
            _ => return Err(Error::NotBinaryOutcome),
        }
    }
    match (zero, one, labels.len()) {
        (Some(z), Some(o), 2) => Ok((z, o)),
        _ => Err(Error::NotBinaryOutcome),
    }
}

fn nondegenerate_odds<T: Scalar>(p: T, what: &str) -> Result<T> {
    if p <= T::zero() || p >= T::one() {
        return Err(Error::DegenerateOdds(format!("{what} = {:?}", p.to_f64_lossy())));
    }
    Ok(odds(&p))
}

/// `odds(Y=1 | R_1=1)`.
pub fn prior_odds<T: Scalar>(obs: &TabularLaw<T>) -> Result<T> {
    let (_, one) = binary_outcome(obs)?;
    let p = obs
        .condition(&Event::new().with(R1, "1"))
        .map_err(|e| positivity(e, "P(R_1=1)"))?
        .prob(&Event::new().with(Y_OBS, &one))?;
    nondegenerate_odds(p, "P(Y=1 | R_1=1)")
}

/// `odds(Y=1 | R_1=R_2=1)`.
pub fn complete_odds<T: Scalar>(obs: &TabularLaw<T>) -> Result<T> {
    let (_, one) = binary_outcome(obs)?;
    let p = obs
        .condition(&Event::new().with(R1, "1").with(R2, "1"))
        .map_err(|e| positivity(e, "P(R_1=1, R_2=1)"))?
        .prob(&Event::new().with(Y_OBS, &one))?;
    nondegenerate_odds(p, "P(Y=1 | R_1=R_2=1)")
}

/// Selection odds ratio `ρ = odds(Y=1 | R_1=R_2=1) / odds(Y=1 | R_1=1)`.
pub fn selection_odds_ratio<T: Scalar>(obs: &TabularLaw<T>) -> Result<T> {
    Ok(complete_odds(obs)? / prior_odds(obs)?)
}

/// `ξ(x) = odds(Y=1 | X=x, R_1=R_2=1)`.
pub fn conditional_odds<T: Scalar>(obs: &TabularLaw<T>, x: &str) -> Result<T> {
    let (_, one) = binary_outcome(obs)?;
    let mu = obs
        .condition(&Event::new().with(R1, "1").with(R2, "1").with(X_OBS, x))
        .map_err(|e| positivity(e, &format!("P(R_1=1, R_2=1, X={x})")))?
        .prob(&Event::new().with(Y_OBS, &one))?;
    if mu >= T::one() {
        return Err(Error::DegenerateOdds(format!("P(Y=1 | X={x}, R_1=R_2=1) = 1")));
    }
    Ok(odds(&mu))
}

/// `θ = E{ ξ(X) / (ρ + ξ(X)) | R_1=0, R_2=1 }` for binary outcomes.
pub fn theta_binary<T: Scalar>(obs: &TabularLaw<T>) -> Result<T> {
    let rho = selection_odds_ratio(obs)?;
    theta_binary_with_rho(obs, &rho)
}

/// The same functional with `ρ` supplied by the caller.
pub fn theta_binary_with_rho<T: Scalar>(obs: &TabularLaw<T>, rho: &T) -> Result<T> {
    binary_outcome(obs)?;
    let dist01 = obs
        .condition(&Event::new().with(R1, "0").with(R2, "1"))?
        .marginal(&[X_OBS])?;
    let mut terms = Vec::new();
    for x in observed_labels(obs, X_OBS)? {
        let px = dist01.prob(&Event::new().with(X_OBS, &x))?;
        if px <= T::zero() {
            continue;
        }
        let xi = conditional_odds(obs, &x)?;
        terms.push(px * xi.clone() / (rho.clone() + xi));
    }
    Ok(ordered_sum(terms))
}

/// Likelihood-ratio form at one covariate cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityRatio<T> {
    /// `λ(x) = dP(x | R_1=R_2=1, Y=1) / dP(x | R_1=R_2=1, Y=0)`
    pub lambda: T,
    /// `odds(Y=1 | R_1=1) λ(x) / (1 + odds(Y=1 | R_1=1) λ(x))`
    pub posterior_probability: T,
}

pub fn density_ratio_form<T: Scalar>(obs: &TabularLaw<T>, x: &str) -> Result<DensityRatio<T>> {
    let (zero, one) = binary_outcome(obs)?;
    let prior = prior_odds(obs)?;
    let density = |y: &str| -> Result<T> {
        obs.condition(&Event::new().with(R1, "1").with(R2, "1").with(Y_OBS, y))
            .map_err(|_| Error::DegenerateOdds(format!("P(R_1=R_2=1, Y={y}) = 0")))?
            .prob(&Event::new().with(X_OBS, x))
    };
    let num = density(&one)?;
    let den = density(&zero)?;
    if den <= T::zero() {
        return Err(Error::ZeroDensity(format!("dP(X={x} | R_1=R_2=1, Y=0) = 0")));
    }
    let lambda = num / den;
    let post_odds = prior * lambda.clone();
    let posterior_probability = post_odds.clone() / (T::one() + post_odds);
    Ok(DensityRatio { lambda, posterior_probability })
}

pub const EXPOSURE_X: &str = "X";
pub const EXPOSURE_A_FULL: &str = "A^(1)";
pub const EXPOSURE_Y: &str = "Y";
pub const EXPOSURE_R: &str = "R";
pub const EXPOSURE_A_OBS: &str = "A";

/// Structural parameters for the missing-exposure m-DAG: `X -> A^(1)`,
/// `(X, A^(1)) -> Y`, `(X, Y) -> R`, with `A` observed iff `R = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureModel<T> {
    pub x_support: Vec<String>,
    pub a_support: Vec<String>,
    pub y_support: Vec<String>,
    pub p_x: Vec<T>,
    /// `[x][a]`
    pub p_a_given_x: Vec<Vec<T>>,
    /// `[x][a][y]`
    pub p_y_given_xa: Vec<Vec<Vec<T>>>,
    /// `P(R = 1 | X = x, Y = y)`, `[x][y]`
    pub p_r_given_xy: Vec<Vec<T>>,
}

/// Full law over `(X, A^(1), Y, R)` together with its coarsening over `(X, R, A, Y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureLaw<T> {
    pub full: TabularLaw<T>,
    pub observed: TabularLaw<T>,
}

impl<T: Scalar> ExposureModel<T> {
    pub fn law(&self) -> Result<ExposureLaw<T>> {
        let bern = |p: &T| vec![T::one() - p.clone(), p.clone()];
        let y_rows: Vec<Vec<T>> = self.p_y_given_xa.iter().flatten().cloned().collect();
        let r_rows: Vec<Vec<T>> = self.p_r_given_xy.iter().flatten().map(bern).collect();
        let full = TabularLaw::from_factors(&[
            Factor::marginal(Variable::new(EXPOSURE_X, self.x_support.clone()), self.p_x.clone()),
            Factor::conditional(
                Variable::new(EXPOSURE_A_FULL, self.a_support.clone()),
                &[EXPOSURE_X],
                self.p_a_given_x.clone(),
            ),
            Factor::conditional(
                Variable::new(EXPOSURE_Y, self.y_support.clone()),
                &[EXPOSURE_X, EXPOSURE_A_FULL],
                y_rows,
            ),
            Factor::conditional(Variable::binary(EXPOSURE_R), &[EXPOSURE_X, EXPOSURE_Y], r_rows),
        ])?;
        let mut a_obs = self.a_support.clone();
        a_obs.push(MISSING.into());
        let na = self.a_support.len();
        let observed = full.pushforward(
            vec![
                Variable::new(EXPOSURE_X, self.x_support.clone()),
                Variable::binary(EXPOSURE_R),
                Variable::new(EXPOSURE_A_OBS, a_obs),
                Variable::new(EXPOSURE_Y, self.y_support.clone()),
            ],
            |c| {
                let d = c.digits();
                let a = if d[3] == 1 { d[1] } else { na };
                vec![d[0], d[3], a, d[2]]
            },
        )?;
        Ok(ExposureLaw { full, observed })
    }
}

impl ExposureModel<f64> {
    /// Random model with binary `A` and `Y` and `x_card` confounder cells;
    /// every probability is at least `floor`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, x_card: usize, floor: f64) -> Self {
        let prob = |rng: &mut R| floor + (1.0 - 2.0 * floor) * rng.gen::<f64>();
        let bern = |p: f64| vec![1.0 - p, p];
        let mut p_x: Vec<f64> = (0..x_card).map(|_| rng.gen::<f64>() + 1e-9).collect();
        let s: f64 = p_x.iter().sum();
        let spare = 1.0 - floor * x_card as f64;
        p_x.iter_mut().for_each(|v| *v = floor + spare * *v / s);
        let head: f64 = p_x[..x_card - 1].iter().sum();
        p_x[x_card - 1] = 1.0 - head;
        ExposureModel {
            x_support: (0..x_card).map(|i| i.to_string()).collect(),
            a_support: vec!["0".into(), "1".into()],
            y_support: vec!["0".into(), "1".into()],
            p_x,
            p_a_given_x: (0..x_card).map(|_| bern(prob(rng))).collect(),
            p_y_given_xa: (0..x_card).map(|_| (0..2).map(|_| bern(prob(rng))).collect()).collect(),
            p_r_given_xy: (0..x_card).map(|_| (0..2).map(|_| prob(rng)).collect()).collect(),
        }
    }
}

/// `E(Y^{a} | X=x) = E(Y λ_a(X,Y) | X=x) / E(λ_a(X,Y) | X=x)` with
/// `λ_a(x,y) = P(A=a | X=x, Y=y, R=1)`, from the observed law only.
pub fn exposure_mean<T: Scalar>(el: &ExposureLaw<T>, a: &str, x: &str) -> Result<T> {
    let obs = &el.observed;
    obs.variable(EXPOSURE_A_OBS)?.label_index(a)?;
    let at_x = obs
        .condition(&Event::new().with(EXPOSURE_X, x))
        .map_err(|e| positivity(e, &format!("P(X={x})")))?;
    let y_dist = at_x.marginal(&[EXPOSURE_Y])?;
    let mut num = Vec::new();
    let mut den = Vec::new();
    for y in &obs.variable(EXPOSURE_Y)?.support {
        let py = y_dist.prob(&Event::new().with(EXPOSURE_Y, y))?;
        if py <= T::zero() {
            continue;
        }
        let lambda = obs
            .condition(&Event::new().with(EXPOSURE_X, x).with(EXPOSURE_Y, y).with(EXPOSURE_R, "1"))
            .map_err(|e| positivity(e, &format!("P(R=1 | X={x}, Y={y})")))?
            .prob(&Event::new().with(EXPOSURE_A_OBS, a))?;
        let yv = label_value::<T>(y)?;
        num.push(py.clone() * yv * lambda.clone());
        den.push(py * lambda);
    }
    let den = ordered_sum(den);
    if den <= T::zero() {
        return Err(Error::PositivityViolation(format!("P(A={a} | X={x}, R=1) = 0")));
    }
    Ok(ordered_sum(num) / den)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::permlaw::PermutationLaw;
    use crate::scalar::Rational;

    #[test]
    fn reference_values_exact() {
        let obs = PermutationLaw::<Rational>::reference().observed_law();
        let r = Rational::from_ratio;
        assert_eq!(theta_prop1(&obs).unwrap(), r(11, 25));
        assert_eq!(psi_prop1(&obs).unwrap(), r(1, 2));
        assert_eq!(theta_binary(&obs).unwrap(), r(11, 25));
        // ρ = (0.28/0.352) / (0.56/0.44) = ζ(1)/ζ(0)
        assert_eq!(selection_odds_ratio(&obs).unwrap(), r(5, 8));
        let odds11 = r(28, 100) / r(352, 1000);
        let odds1 = r(56, 100) / r(44, 100);
        assert_eq!(odds11 / odds1, r(5, 8));
    }

    #[test]
    fn reference_values_f64() {
        let obs = PermutationLaw::<f64>::reference().observed_law();
        assert!((theta_prop1(&obs).unwrap() - 0.44).abs() < 1e-12);
        assert!((psi_prop1(&obs).unwrap() - 0.5).abs() < 1e-12);
        assert!((theta_binary(&obs).unwrap() - 0.44).abs() < 1e-12);
        assert!((selection_odds_ratio(&obs).unwrap() - 0.625).abs() < 1e-12);
    }

    #[test]
    fn full_law_is_identified() {
        let law = PermutationLaw::<Rational>::reference();
        let identified = identified_full_law(&law.observed_law()).unwrap();
        let truth = law.full_law().marginal(&[Y_FULL, X_FULL]).unwrap();
        assert_eq!(identified, truth);
    }

    fn mcar() -> PermutationLaw<Rational> {
        let r = Rational::from_ratio;
        // X^(1) independent of Y^(1); R_1 constant in x; ζ constant
        PermutationLaw::new(
            vec!["0".into(), "1".into()],
            vec!["a".into(), "b".into(), "c".into()],
            vec![r(3, 10), r(7, 10)],
            vec![vec![r(1, 5), r(3, 10), r(1, 2)], vec![r(1, 5), r(3, 10), r(1, 2)]],
            vec![r(2, 3), r(2, 3), r(2, 3)],
            vec![r(3, 4), r(3, 4)],
            r(1, 2),
        )
        .unwrap()
    }

    #[test]
    fn missing_completely_at_random_collapse() {
        let obs = mcar().observed_law();
        let cc = complete_case_mean(&obs).unwrap();
        assert_eq!(theta_prop1(&obs).unwrap(), cc);
        assert_eq!(psi_prop1(&obs).unwrap(), cc);
        assert_eq!(selection_odds_ratio(&obs).unwrap(), Rational::from_ratio(1, 1));
        for x in ["a", "b", "c"] {
            let dr = density_ratio_form(&obs, x).unwrap();
            assert_eq!(dr.lambda, Rational::from_ratio(1, 1));
            assert_eq!(dr.posterior_probability, Rational::from_ratio(7, 10));
        }
    }

    #[test]
    fn no_missingness_degenerates() {
        let r = Rational::from_ratio;
        let law = PermutationLaw::new(
            vec!["0".into(), "1".into()],
            vec!["0".into(), "1".into()],
            vec![r(2, 5), r(3, 5)],
            vec![vec![r(1, 2), r(1, 2)], vec![r(1, 4), r(3, 4)]],
            vec![r(1, 1), r(1, 1)],
            vec![r(1, 1), r(1, 1)],
            r(1, 2),
        )
        .unwrap();
        let obs = law.observed_law();
        assert!(matches!(theta_prop1(&obs), Err(Error::ZeroProbabilityEvent(_))));
        assert_eq!(psi_prop1(&obs).unwrap(), r(3, 5));
        let identified = identified_full_law(&obs).unwrap();
        assert_eq!(identified, law.full_law().marginal(&[Y_FULL, X_FULL]).unwrap());
    }

    #[test]
    fn xi_is_density_ratio_times_odds() {
        let obs = PermutationLaw::<Rational>::reference().observed_law();
        let odds11 = complete_odds(&obs).unwrap();
        let rho = selection_odds_ratio(&obs).unwrap();
        let theta = theta_binary(&obs).unwrap();
        let dist01 = obs.condition(&Event::new().with(R1, "0").with(R2, "1")).unwrap();
        let mut standardized = Rational::from_ratio(0, 1);
        for x in ["0", "1"] {
            let xi = conditional_odds(&obs, x).unwrap();
            let dr = density_ratio_form(&obs, x).unwrap();
            assert_eq!(xi.clone(), dr.lambda.clone() * odds11.clone());
            assert_eq!(dr.posterior_probability, xi.clone() / (rho.clone() + xi));
            standardized += dist01.prob(&Event::new().with(X_OBS, x)).unwrap() * dr.posterior_probability;
        }
        assert_eq!(standardized, theta);
    }

    #[test]
    fn non_binary_outcome_is_rejected() {
        let law = PermutationLaw::<f64>::new(
            vec!["0".into(), "1".into(), "2".into()],
            vec!["0".into()],
            vec![0.2, 0.3, 0.5],
            vec![vec![1.0], vec![1.0], vec![1.0]],
            vec![0.5],
            vec![0.5, 0.5, 0.5],
            0.5,
        )
        .unwrap();
        let obs = law.observed_law();
        assert_eq!(theta_binary(&obs), Err(Error::NotBinaryOutcome));
        assert!((theta_prop1(&obs).unwrap() - law.true_theta().unwrap()).abs() < 1e-12);
    }

    #[test]
    fn exposure_mean_matches_structural_regression() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = ExposureModel::random(&mut rng, 3, 0.05);
        let el = m.law().unwrap();
        for (xi, x) in m.x_support.iter().enumerate() {
            for (ai, a) in m.a_support.iter().enumerate() {
                let truth = m.p_y_given_xa[xi][ai][1];
                assert!((exposure_mean(&el, a, x).unwrap() - truth).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn exposure_constant_lambda_gives_regression() {
        // exposure independent of everything: λ constant in y
        let m = ExposureModel::<f64> {
            x_support: vec!["0".into()],
            a_support: vec!["0".into(), "1".into()],
            y_support: vec!["0".into(), "1".into()],
            p_x: vec![1.0],
            p_a_given_x: vec![vec![0.4, 0.6]],
            p_y_given_xa: vec![vec![vec![0.3, 0.7], vec![0.3, 0.7]]],
            p_r_given_xy: vec![vec![0.5, 0.9]],
        };
        let el = m.law().unwrap();
        assert!((exposure_mean(&el, "1", "0").unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn exposure_positivity() {
        let m = ExposureModel::<f64> {
            x_support: vec!["0".into()],
            a_support: vec!["0".into(), "1".into()],
            y_support: vec!["0".into(), "1".into()],
            p_x: vec![1.0],
            p_a_given_x: vec![vec![1.0, 0.0]],
            p_y_given_xa: vec![vec![vec![0.3, 0.7], vec![0.5, 0.5]]],
            p_r_given_xy: vec![vec![0.5, 0.9]],
        };
        let el = m.law().unwrap();
        assert!(matches!(exposure_mean(&el, "1", "0"), Err(Error::PositivityViolation(_))));
    }
}
