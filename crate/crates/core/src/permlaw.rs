//! The permutation missingness model: `Y^(1) -> X^(1) -> R_1 -> R_2 <- Y`,
//! with `Y` observed iff `R_1 = 1` and `X` observed iff `R_2 = 1`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use num_traits::One;

use crate::scalar::{decimal_rational, is_unit_interval, ordered_sum, Rational, Scalar};
use crate::tabular::{Event, Factor, TabularLaw, Variable};

/// Token for an unobserved value.
pub const MISSING: &str = "?";

pub const Y_FULL: &str = "Y^(1)";
pub const X_FULL: &str = "X^(1)";
pub const R1: &str = "R_1";
pub const R2: &str = "R_2";
pub const Y_OBS: &str = "Y";
pub const X_OBS: &str = "X";

/// Identifier of the record-level random number scheme. Bump when sampling changes.
pub const GENERATOR_ID: &str = "chacha8-stream-v1";

/// Structural parameters of the permutation model.
#[derive(Debug, Clone, PartialEq)]
pub struct PermutationLaw<T> {
    y_support: Vec<String>,
    x_support: Vec<String>,
    p_y1: Vec<T>,
    /// `[y][x]`
    p_x1_given_y1: Vec<Vec<T>>,
    /// `P(R_1 = 1 | X^(1) = x)`
    p_r1_given_x1: Vec<T>,
    /// `P(R_2 = 1 | R_1 = 1, Y = y)`
    zeta: Vec<T>,
    /// `P(R_2 = 1 | R_1 = 0)`
    q0: T,
}

/// JSON form of a [`PermutationLaw`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationLawDocument {
    pub y_support: Vec<String>,
    pub x_support: Vec<String>,
    pub p_y1: Vec<f64>,
    pub p_x1_given_y1: Vec<Vec<f64>>,
    pub p_r1_given_x1: Vec<f64>,
    pub zeta: Vec<f64>,
    pub q0: f64,
}

fn check_distribution<T: Scalar>(what: &str, row: &[T], len: usize) -> Result<()> {
    if row.len() != len {
        return Err(Error::InvalidLaw(format!("{what}: expected {len} entries, found {}", row.len())));
    }
    if !row.iter().all(is_unit_interval) {
        return Err(Error::InvalidLaw(format!("{what}: entry outside [0, 1]")));
    }
    let s = ordered_sum(row.iter().cloned());
    if (s - T::one()).abs_val() > T::normalization_tolerance() {
        return Err(Error::InvalidLaw(format!("{what}: does not sum to 1")));
    }
    Ok(())
}

impl<T: Scalar> PermutationLaw<T> {
    pub fn new(
        y_support: Vec<String>,
        x_support: Vec<String>,
        p_y1: Vec<T>,
        p_x1_given_y1: Vec<Vec<T>>,
        p_r1_given_x1: Vec<T>,
        zeta: Vec<T>,
        q0: T,
    ) -> Result<Self> {
        let (ny, nx) = (y_support.len(), x_support.len());
        if ny == 0 || nx == 0 {
            return Err(Error::InvalidLaw("supports must be nonempty".into()));
        }
        for l in y_support.iter().chain(&x_support) {
            if l == MISSING {
                return Err(Error::InvalidLaw(format!("label `{MISSING}` is reserved")));
            }
        }
        for l in &y_support {
            if T::parse_label(l).is_none() {
                return Err(Error::NonNumericOutcome(l.clone()));
            }
        }
        check_distribution("p_y1", &p_y1, ny)?;
        if p_x1_given_y1.len() != ny {
            return Err(Error::InvalidLaw(format!("p_x1_given_y1: expected {ny} rows")));
        }
        for (y, row) in p_x1_given_y1.iter().enumerate() {
            check_distribution(&format!("p_x1_given_y1 row {y}"), row, nx)?;
        }
        if p_r1_given_x1.len() != nx || !p_r1_given_x1.iter().all(is_unit_interval) {
            return Err(Error::InvalidLaw("p_r1_given_x1: expected one probability per x".into()));
        }
        if zeta.len() != ny || !zeta.iter().all(is_unit_interval) {
            return Err(Error::InvalidLaw("zeta: expected one probability per y".into()));
        }
        if zeta.iter().any(|z| *z <= T::zero()) {
            return Err(Error::PositivityViolation("zeta(y) must be positive".into()));
        }
        if !is_unit_interval(&q0) || q0 <= T::zero() {
            return Err(Error::PositivityViolation("q0 must lie in (0, 1]".into()));
        }
        Ok(PermutationLaw { y_support, x_support, p_y1, p_x1_given_y1, p_r1_given_x1, zeta, q0 })
    }

    /// Reference law: binary `Y^(1)` and `X^(1)`, `P(Y^(1)=1) = 0.5`,
    /// `P(X^(1)=1 | Y^(1)=y) = 0.2, 0.8`, `P(R_1=1 | X^(1)=x) = 0.4, 0.6`,
    /// `zeta = (0.8, 0.5)`, `q0 = 0.7`.
    pub fn reference() -> Self {
        let r = T::from_ratio;
        PermutationLaw::new(
            vec!["0".into(), "1".into()],
            vec!["0".into(), "1".into()],
            vec![r(1, 2), r(1, 2)],
            vec![vec![r(4, 5), r(1, 5)], vec![r(1, 5), r(4, 5)]],
            vec![r(2, 5), r(3, 5)],
            vec![r(4, 5), r(1, 2)],
            r(7, 10),
        )
        .expect("reference law is valid")
    }

    pub fn y_support(&self) -> &[String] {
        &self.y_support
    }

    pub fn x_support(&self) -> &[String] {
        &self.x_support
    }

    pub fn zeta(&self) -> &[T] {
        &self.zeta
    }

    pub fn q0(&self) -> &T {
        &self.q0
    }

    pub fn p_y1(&self) -> &[T] {
        &self.p_y1
    }

    pub fn p_x1_given_y1(&self) -> &[Vec<T>] {
        &self.p_x1_given_y1
    }

    pub fn p_r1_given_x1(&self) -> &[T] {
        &self.p_r1_given_x1
    }

    /// Numeric value of each outcome label.
    pub fn y_values(&self) -> Vec<T> {
        self.y_support.iter().map(|l| T::parse_label(l).expect("validated")).collect()
    }

    /// The five conditional tables in topological order.
    pub fn factors(&self) -> Vec<Factor<T>> {
        let bern = |p: &T| vec![T::one() - p.clone(), p.clone()];
        let mut r2_rows: Vec<Vec<T>> = self.y_support.iter().map(|_| bern(&self.q0)).collect();
        r2_rows.extend(self.zeta.iter().map(bern));
        vec![
            Factor::marginal(Variable::new(Y_FULL, self.y_support.clone()), self.p_y1.clone()),
            Factor::conditional(
                Variable::new(X_FULL, self.x_support.clone()),
                &[Y_FULL],
                self.p_x1_given_y1.clone(),
            ),
            Factor::conditional(Variable::binary(R1), &[X_FULL], self.p_r1_given_x1.iter().map(bern).collect()),
            Factor::conditional(Variable::binary(R2), &[R1, Y_FULL], r2_rows),
        ]
    }

    /// Joint law of `(Y^(1), X^(1), R_1, R_2)`.
    pub fn full_law(&self) -> TabularLaw<T> {
        TabularLaw::from_factors(&self.factors()).expect("factors validated at construction")
    }

    /// Law of the observed data `(R_1, R_2, Y, X)` with `?` on unobserved branches.
    pub fn observed_law(&self) -> TabularLaw<T> {
        coarsen(&self.full_law()).expect("full law has the permutation layout")
    }

    /// Joint law of all six nodes of the m-DAG, proxies included.
    pub fn full_law_with_proxies(&self) -> TabularLaw<T> {
        let full = self.full_law();
        let mut vars = full.variables().to_vec();
        let coarse = coarsen(&full).expect("full law has the permutation layout");
        vars.push(coarse.variable(Y_OBS).expect("present").clone());
        vars.push(coarse.variable(X_OBS).expect("present").clone());
        let (ny, nx) = (self.y_support.len(), self.x_support.len());
        full.pushforward(vars, |c| {
            let d = c.digits();
            let y = if d[2] == 1 { d[0] } else { ny };
            let x = if d[3] == 1 { d[1] } else { nx };
            vec![d[0], d[1], d[2], d[3], y, x]
        })
        .expect("proxies are functions of the full law")
    }

    /// `E(Y^(1))`.
    pub fn true_psi(&self) -> Result<T> {
        self.full_law().mean_of(Y_FULL)
    }

    /// `E(Y^(1) | R_1 = 0)`.
    pub fn true_theta(&self) -> Result<T> {
        self.full_law().condition(&Event::new().with(R1, "0"))?.mean_of(Y_FULL)
    }

    /// Converts the parameters to another scalar type. The last entry of each
    /// distribution is set to one minus the rest so rows stay normalized.
    pub fn cast<U: Scalar>(&self) -> Result<PermutationLaw<U>> {
        let conv = |v: &T| U::from_f64(v.to_f64_lossy()).ok_or_else(|| Error::InvalidLaw("non-finite".into()));
        let conv_dist = |row: &[T]| -> Result<Vec<U>> {
            let mut out: Vec<U> = row.iter().map(conv).collect::<Result<_>>()?;
            let head = ordered_sum(out[..out.len() - 1].iter().cloned());
            *out.last_mut().expect("nonempty") = U::one() - head;
            Ok(out)
        };
        PermutationLaw::new(
            self.y_support.clone(),
            self.x_support.clone(),
            conv_dist(&self.p_y1)?,
            self.p_x1_given_y1.iter().map(|r| conv_dist(r)).collect::<Result<_>>()?,
            self.p_r1_given_x1.iter().map(conv).collect::<Result<_>>()?,
            self.zeta.iter().map(conv).collect::<Result<_>>()?,
            conv(&self.q0)?,
        )
    }
}

/// Applies the observation rule to a full law over `(Y^(1), X^(1), R_1, R_2)`.
pub fn coarsen<T: Scalar>(full: &TabularLaw<T>) -> Result<TabularLaw<T>> {
    let y = full.variable(Y_FULL)?.clone();
    let x = full.variable(X_FULL)?.clone();
    let (iy, ix, ir1, ir2) = (full.var_index(Y_FULL)?, full.var_index(X_FULL)?, full.var_index(R1)?, full.var_index(R2)?);
    let r1_one = full.variable(R1)?.label_index("1")?;
    let r2_one = full.variable(R2)?.label_index("1")?;
    let (ny, nx) = (y.support.len(), x.support.len());
    let mut y_obs = y.support.clone();
    y_obs.push(MISSING.into());
    let mut x_obs = x.support.clone();
    x_obs.push(MISSING.into());
    let variables = vec![
        Variable::binary(R1),
        Variable::binary(R2),
        Variable::new(Y_OBS, y_obs),
        Variable::new(X_OBS, x_obs),
    ];
    full.pushforward(variables, |c| {
        let d = c.digits();
        let r1 = usize::from(d[ir1] == r1_one);
        let r2 = usize::from(d[ir2] == r2_one);
        let yv = if r1 == 1 { d[iy] } else { ny };
        let xv = if r2 == 1 { d[ix] } else { nx };
        vec![r1, r2, yv, xv]
    })
}

/// Dataset whose empirical law is exactly `observed`: `n · p` copies of each
/// cell, cells in table order. Every `n · p` must be an integer.
pub fn exact_frequency_dataset(observed: &TabularLaw<Rational>, n: u64) -> Result<Dataset> {
    let scale = Rational::from_integer(n.into());
    let mut counts = Vec::new();
    let mut failure = None;
    observed.for_each_cell(|c, p| {
        let k = p * &scale;
        if !k.is_integer() {
            failure.get_or_insert_with(|| Error::InvalidArgument(format!("{n} · p is not an integer at a cell")));
            return;
        }
        let k: usize = match k.to_integer().try_into() {
            Ok(k) => k,
            Err(_) => return,
        };
        if k == 0 {
            return;
        }
        match ObservedRecord::from_labels(c.label(R1), c.label(R2), c.label(Y_OBS), c.label(X_OBS)) {
            Ok(rec) => counts.push((rec, k)),
            Err(e) => {
                failure.get_or_insert(e);
            }
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(Dataset::from_counts(&counts)),
    }
}

impl PermutationLaw<f64> {
    pub fn from_document(doc: PermutationLawDocument) -> Result<Self> {
        PermutationLaw::new(
            doc.y_support,
            doc.x_support,
            doc.p_y1,
            doc.p_x1_given_y1,
            doc.p_r1_given_x1,
            doc.zeta,
            doc.q0,
        )
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_document(serde_json::from_str(text)?)
    }

    pub fn to_document(&self) -> PermutationLawDocument {
        PermutationLawDocument {
            y_support: self.y_support.clone(),
            x_support: self.x_support.clone(),
            p_y1: self.p_y1.clone(),
            p_x1_given_y1: self.p_x1_given_y1.clone(),
            p_r1_given_x1: self.p_r1_given_x1.clone(),
            zeta: self.zeta.clone(),
            q0: self.q0,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("law serializes")
    }

    /// Exact image with every parameter read as its shortest decimal; the
    /// last entry of each distribution is one minus the rest.
    pub fn to_exact(&self) -> Result<PermutationLaw<Rational>> {
        let conv = |v: &f64| decimal_rational(*v).ok_or_else(|| Error::InvalidLaw(format!("non-finite parameter {v}")));
        let conv_dist = |row: &[f64]| -> Result<Vec<Rational>> {
            let mut out: Vec<Rational> = row.iter().map(conv).collect::<Result<_>>()?;
            let head = ordered_sum(out[..out.len() - 1].iter().cloned());
            *out.last_mut().expect("nonempty") = Rational::one() - head;
            Ok(out)
        };
        PermutationLaw::new(
            self.y_support.clone(),
            self.x_support.clone(),
            conv_dist(&self.p_y1)?,
            self.p_x1_given_y1.iter().map(|r| conv_dist(r)).collect::<Result<_>>()?,
            self.p_r1_given_x1.iter().map(conv).collect::<Result<_>>()?,
            self.zeta.iter().map(conv).collect::<Result<_>>()?,
            conv(&self.q0)?,
        )
    }

    /// Random law with numeric outcome labels `0..y_card` and `x_card` covariate
    /// cells. Every probability is at least `floor`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, y_card: usize, x_card: usize, floor: f64) -> Self {
        let dist = |rng: &mut R, k: usize| -> Vec<f64> {
            let u: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() + 1e-9).collect();
            let s: f64 = u.iter().sum();
            let spare = 1.0 - floor * k as f64;
            let mut out: Vec<f64> = u.iter().map(|v| floor + spare * v / s).collect();
            let head: f64 = out[..k - 1].iter().sum();
            out[k - 1] = 1.0 - head;
            out
        };
        let prob = |rng: &mut R| floor + (1.0 - 2.0 * floor) * rng.gen::<f64>();
        let y_support: Vec<String> = (0..y_card).map(|i| i.to_string()).collect();
        let x_support: Vec<String> = (0..x_card).map(|i| i.to_string()).collect();
        let p_y1 = dist(rng, y_card);
        let p_x1_given_y1 = (0..y_card).map(|_| dist(rng, x_card)).collect();
        let p_r1_given_x1 = (0..x_card).map(|_| prob(rng)).collect();
        let zeta = (0..y_card).map(|_| prob(rng)).collect();
        let q0 = prob(rng);
        PermutationLaw::new(y_support, x_support, p_y1, p_x1_given_y1, p_r1_given_x1, zeta, q0)
            .expect("random law is valid")
    }

    /// `n` i.i.d. draws from the observed law. Record `i` uses ChaCha8 stream
    /// `i` under `seed`, so the output does not depend on the thread count.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        sample_observed(&self.observed_law(), n, seed)
    }
}

/// Draws records from an observed law over `(R_1, R_2, Y, X)`.
pub fn sample_observed(observed: &TabularLaw<f64>, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    let mut cells: Vec<(f64, ObservedRecord)> = Vec::new();
    let mut cum = 0.0;
    let mut err = None;
    observed.for_each_cell(|c, p| {
        if *p > 0.0 {
            cum += p;
            match ObservedRecord::from_labels(c.label(R1), c.label(R2), c.label(Y_OBS), c.label(X_OBS)) {
                Ok(rec) => cells.push((cum, rec)),
                Err(e) => err = Some(e),
            }
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    let records = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let u: f64 = rng.gen::<f64>() * cum;
            let k = cells.partition_point(|(c, _)| *c <= u).min(cells.len() - 1);
            cells[k].1.clone()
        })
        .collect();
    Ok(Dataset { records, provenance: Some(Provenance { seed, generator: GENERATOR_ID.into() }) })
}

/// One observed unit.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ObservedRecord {
    pub r1: bool,
    pub r2: bool,
    pub y: Option<String>,
    pub x: Option<String>,
}

impl ObservedRecord {
    pub fn new(r1: bool, r2: bool, y: Option<String>, x: Option<String>) -> Result<Self> {
        if r1 != y.is_some() {
            return Err(Error::InvalidArgument("Y must be observed exactly when R_1 = 1".into()));
        }
        if r2 != x.is_some() {
            return Err(Error::InvalidArgument("X must be observed exactly when R_2 = 1".into()));
        }
        if y.as_deref() == Some(MISSING) || x.as_deref() == Some(MISSING) {
            return Err(Error::InvalidArgument(format!("`{MISSING}` is not a value")));
        }
        Ok(ObservedRecord { r1, r2, y, x })
    }

    /// From CSV-style labels, `?` marking a missing value.
    pub fn from_labels(r1: &str, r2: &str, y: &str, x: &str) -> Result<Self> {
        let flag = |s: &str| match s {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(Error::InvalidArgument(format!("indicator must be 0 or 1, found `{other}`"))),
        };
        let value = |s: &str| (s != MISSING).then(|| s.to_string());
        ObservedRecord::new(flag(r1)?, flag(r2)?, value(y), value(x))
    }

    pub fn y_label(&self) -> &str {
        self.y.as_deref().unwrap_or(MISSING)
    }

    pub fn x_label(&self) -> &str {
        self.x.as_deref().unwrap_or(MISSING)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub generator: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub records: Vec<ObservedRecord>,
    pub provenance: Option<Provenance>,
}

impl Dataset {
    pub fn new(records: Vec<ObservedRecord>) -> Self {
        Dataset { records, provenance: None }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Dataset with `count` copies of each record, in the order given.
    pub fn from_counts(counts: &[(ObservedRecord, usize)]) -> Self {
        let records = counts
            .iter()
            .flat_map(|(rec, k)| std::iter::repeat_n(rec.clone(), *k))
            .collect();
        Dataset::new(records)
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset { records: idx.iter().map(|&i| self.records[i].clone()).collect(), provenance: None }
    }

    /// CSV with header `r1,r2,y,x`, `?` for missing values, LF line endings.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(["r1", "r2", "y", "x"]).expect("in-memory write");
        for r in &self.records {
            let r1 = if r.r1 { "1" } else { "0" };
            let r2 = if r.r2 { "1" } else { "0" };
            w.write_record([r1, r2, r.y_label(), r.x_label()]).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 labels")
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(csv_error)?.clone();
        let want = ["r1", "r2", "y", "x"];
        if headers.len() != 4 || headers.iter().zip(want).any(|(h, w)| h.trim() != w) {
            return Err(Error::Parse { line: 1, column: 1, message: "expected header `r1,r2,y,x`".into() });
        }
        let mut records = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row.map_err(csv_error)?;
            let line = i + 2;
            if row.len() != 4 {
                return Err(Error::Parse { line, column: 1, message: "expected 4 fields".into() });
            }
            let rec = ObservedRecord::from_labels(row[0].trim(), row[1].trim(), row[2].trim(), row[3].trim())
                .map_err(|e| Error::Parse { line, column: 1, message: e.to_string() })?;
            records.push(rec);
        }
        Ok(Dataset::new(records))
    }
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse { line, column: 1, message: e.to_string() }
}
