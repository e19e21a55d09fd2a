//! Exact finite-support probability tables.
//!
//! A [`TabularLaw`] is a dense joint table over named discrete variables.
//! Cells are stored in lexicographic order: the first variable varies
//! slowest, the last fastest, and each variable's labels are taken in
//! support order. All sums run in that order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use num_traits::Zero;

use crate::scalar::{decimal_rational, ordered_sum, Rational, Scalar};

/// Upper bound on the number of cells in one table.
pub const MAX_CELLS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub support: Vec<String>,
}

impl Variable {
    pub fn new<S: Into<String>>(name: &str, support: impl IntoIterator<Item = S>) -> Self {
        Variable { name: name.to_string(), support: support.into_iter().map(Into::into).collect() }
    }

    pub fn binary(name: &str) -> Self {
        Variable::new(name, ["0", "1"])
    }

    pub fn label_index(&self, label: &str) -> Result<usize> {
        self.support.iter().position(|l| l == label).ok_or_else(|| Error::UnknownLabel {
            variable: self.name.clone(),
            label: label.to_string(),
        })
    }
}

/// Assignment of labels to some variables.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Event(BTreeMap<String, String>);

impl Event {
    pub fn new() -> Self {
        Event::default()
    }

    pub fn with(mut self, variable: &str, label: &str) -> Self {
        self.0.insert(variable.to_string(), label.to_string());
        self
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::fmt::Display for Event {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(k, v)| format!("{k}={v}")).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// View of one joint cell.
#[derive(Debug, Clone, Copy)]
pub struct Cell<'a, T> {
    law: &'a TabularLaw<T>,
    digits: &'a [usize],
}

impl<'a, T> Cell<'a, T> {
    /// Label of `variable` in this cell. Panics on an unknown name.
    pub fn label(&self, variable: &str) -> &'a str {
        let v = self
            .law
            .variables
            .iter()
            .position(|v| v.name == variable)
            .unwrap_or_else(|| panic!("unknown variable `{variable}`"));
        &self.law.variables[v].support[self.digits[v]]
    }

    /// Support index of each variable, in variable order.
    pub fn digits(&self) -> &'a [usize] {
        self.digits
    }
}

/// Conditional probability table of one variable given earlier variables.
///
/// Rows enumerate parent configurations in lexicographic order; each row
/// lists the child's probabilities in support order.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor<T> {
    pub variable: Variable,
    pub parents: Vec<String>,
    pub table: Vec<T>,
}

impl<T: Scalar> Factor<T> {
    pub fn marginal(variable: Variable, probabilities: Vec<T>) -> Self {
        Factor { variable, parents: Vec::new(), table: probabilities }
    }

    pub fn conditional(variable: Variable, parents: &[&str], rows: Vec<Vec<T>>) -> Self {
        Factor {
            variable,
            parents: parents.iter().map(|p| p.to_string()).collect(),
            table: rows.into_iter().flatten().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularLaw<T> {
    variables: Vec<Variable>,
    probabilities: Vec<T>,
}

/// JSON form of a law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawDocument {
    pub variables: Vec<Variable>,
    pub probabilities: Vec<f64>,
}

fn cell_count(variables: &[Variable]) -> Result<usize> {
    let mut n: usize = 1;
    for v in variables {
        if v.support.is_empty() {
            return Err(Error::InvalidLaw(format!("variable `{}` has empty support", v.name)));
        }
        n = n
            .checked_mul(v.support.len())
            .filter(|&n| n <= MAX_CELLS)
            .ok_or(Error::TableTooLarge(n.saturating_mul(v.support.len())))?;
    }
    Ok(n)
}

fn check_names(variables: &[Variable]) -> Result<()> {
    for (i, v) in variables.iter().enumerate() {
        if variables[..i].iter().any(|w| w.name == v.name) {
            return Err(Error::InvalidLaw(format!("duplicate variable `{}`", v.name)));
        }
        for (j, l) in v.support.iter().enumerate() {
            if v.support[..j].contains(l) {
                return Err(Error::InvalidLaw(format!("duplicate label `{l}` in `{}`", v.name)));
            }
        }
    }
    Ok(())
}

/// Odometer over mixed-radix digits in lexicographic order.
fn advance(digits: &mut [usize], radices: &[usize]) {
    for k in (0..digits.len()).rev() {
        digits[k] += 1;
        if digits[k] < radices[k] {
            return;
        }
        digits[k] = 0;
    }
}

impl<T: Scalar> TabularLaw<T> {
    pub fn new(variables: Vec<Variable>, probabilities: Vec<T>) -> Result<Self> {
        check_names(&variables)?;
        let n = cell_count(&variables)?;
        if probabilities.len() != n {
            return Err(Error::InvalidLaw(format!(
                "expected {n} probabilities, found {}",
                probabilities.len()
            )));
        }
        if let Some(i) = probabilities.iter().position(|p| *p < T::zero()) {
            return Err(Error::InvalidLaw(format!("negative probability in cell {i}")));
        }
        let total = ordered_sum(probabilities.iter().cloned());
        if (total.clone() - T::one()).abs_val() > T::normalization_tolerance() {
            return Err(Error::InvalidLaw(format!("probabilities sum to {total:?}")));
        }
        Ok(TabularLaw { variables, probabilities })
    }

    /// Builds the joint law as the product of DAG-ordered conditional tables.
    pub fn from_factors(factors: &[Factor<T>]) -> Result<Self> {
        let mut variables: Vec<Variable> = Vec::with_capacity(factors.len());
        let mut parent_slots: Vec<Vec<usize>> = Vec::with_capacity(factors.len());
        for f in factors {
            let slots = f
                .parents
                .iter()
                .map(|p| {
                    variables
                        .iter()
                        .position(|v| &v.name == p)
                        .ok_or_else(|| Error::BadTopologicalOrder(f.variable.name.clone()))
                })
                .collect::<Result<Vec<_>>>()?;
            let rows: usize = slots.iter().map(|&s| variables[s].support.len()).product();
            let width = f.variable.support.len();
            if f.table.len() != rows * width {
                return Err(Error::InvalidLaw(format!(
                    "factor for `{}` has {} entries, expected {}",
                    f.variable.name,
                    f.table.len(),
                    rows * width
                )));
            }
            for (r, row) in f.table.chunks(width).enumerate() {
                let s = ordered_sum(row.iter().cloned());
                if row.iter().any(|p| *p < T::zero())
                    || (s - T::one()).abs_val() > T::normalization_tolerance()
                {
                    return Err(Error::UnnormalizedFactor { variable: f.variable.name.clone(), row: r });
                }
            }
            variables.push(f.variable.clone());
            parent_slots.push(slots);
        }
        check_names(&variables)?;
        let n = cell_count(&variables)?;
        let radices: Vec<usize> = variables.iter().map(|v| v.support.len()).collect();
        let mut digits = vec![0; variables.len()];
        let mut probabilities = Vec::with_capacity(n);
        for _ in 0..n {
            let mut p = T::one();
            for (k, f) in factors.iter().enumerate() {
                let mut row = 0;
                for &s in &parent_slots[k] {
                    row = row * radices[s] + digits[s];
                }
                p = p * f.table[row * radices[k] + digits[k]].clone();
            }
            probabilities.push(p);
            advance(&mut digits, &radices);
        }
        TabularLaw::new(variables, probabilities)
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn probabilities(&self) -> &[T] {
        &self.probabilities
    }

    pub fn variable(&self, name: &str) -> Result<&Variable> {
        self.variables
            .iter()
            .find(|v| v.name == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn var_index(&self, name: &str) -> Result<usize> {
        self.variables
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    fn radices(&self) -> Vec<usize> {
        self.variables.iter().map(|v| v.support.len()).collect()
    }

    /// Visits every cell in lexicographic order.
    pub fn for_each_cell(&self, mut f: impl FnMut(Cell<'_, T>, &T)) {
        let radices = self.radices();
        let mut digits = vec![0; self.variables.len()];
        for p in &self.probabilities {
            f(Cell { law: self, digits: &digits }, p);
            advance(&mut digits, &radices);
        }
    }

    /// Resolves an event to `(variable slot, label index)` pairs.
    fn resolve(&self, event: &Event) -> Result<Vec<(usize, usize)>> {
        event
            .iter()
            .map(|(name, label)| {
                let v = self.var_index(name)?;
                Ok((v, self.variables[v].label_index(label)?))
            })
            .collect()
    }

    pub fn prob(&self, event: &Event) -> Result<T> {
        let fixed = self.resolve(event)?;
        let mut total = T::zero();
        self.for_each_cell(|c, p| {
            if fixed.iter().all(|&(v, l)| c.digits[v] == l) {
                total = total.clone() + p.clone();
            }
        });
        Ok(total)
    }

    /// Law of the named variables, in the order given.
    pub fn marginal<S: AsRef<str>>(&self, names: &[S]) -> Result<Self> {
        let slots: Vec<usize> =
            names.iter().map(|n| self.var_index(n.as_ref())).collect::<Result<_>>()?;
        let variables: Vec<Variable> = slots.iter().map(|&s| self.variables[s].clone()).collect();
        check_names(&variables)?;
        let radices: Vec<usize> = variables.iter().map(|v| v.support.len()).collect();
        let mut out = vec![T::zero(); cell_count(&variables)?];
        self.for_each_cell(|c, p| {
            let mut idx = 0;
            for (k, &s) in slots.iter().enumerate() {
                idx = idx * radices[k] + c.digits[s];
            }
            out[idx] = out[idx].clone() + p.clone();
        });
        Ok(TabularLaw { variables, probabilities: out })
    }

    /// Conditional law of the variables not fixed by `event`.
    pub fn condition(&self, event: &Event) -> Result<Self> {
        let fixed = self.resolve(event)?;
        let mass = self.prob(event)?;
        if mass <= T::zero() {
            return Err(Error::ZeroProbabilityEvent(event.to_string()));
        }
        let keep: Vec<usize> =
            (0..self.variables.len()).filter(|v| !fixed.iter().any(|(f, _)| f == v)).collect();
        let variables: Vec<Variable> = keep.iter().map(|&s| self.variables[s].clone()).collect();
        let radices: Vec<usize> = variables.iter().map(|v| v.support.len()).collect();
        let mut out = vec![T::zero(); cell_count(&variables)?];
        self.for_each_cell(|c, p| {
            if fixed.iter().all(|&(v, l)| c.digits[v] == l) {
                let mut idx = 0;
                for (k, &s) in keep.iter().enumerate() {
                    idx = idx * radices[k] + c.digits[s];
                }
                out[idx] = out[idx].clone() + p.clone() / mass.clone();
            }
        });
        Ok(TabularLaw { variables, probabilities: out })
    }

    pub fn expectation(&self, mut f: impl FnMut(Cell<'_, T>) -> T) -> T {
        let mut total = T::zero();
        self.for_each_cell(|c, p| {
            if *p != T::zero() {
                total = total.clone() + p.clone() * f(c);
            }
        });
        total
    }

    /// Mean of a numeric variable; every label with positive mass must parse.
    pub fn mean_of(&self, variable: &str) -> Result<T> {
        let v = self.var_index(variable)?;
        let values: Vec<Option<T>> =
            self.variables[v].support.iter().map(|l| T::parse_label(l)).collect();
        let mut total = T::zero();
        let mut bad = None;
        self.for_each_cell(|c, p| {
            if *p == T::zero() {
                return;
            }
            match &values[c.digits[v]] {
                Some(y) => total = total.clone() + p.clone() * y.clone(),
                None => bad = Some(self.variables[v].support[c.digits[v]].clone()),
            }
        });
        match bad {
            Some(label) => Err(Error::NonNumericOutcome(label)),
            None => Ok(total),
        }
    }

    fn same_shape(&self, other: &Self) -> bool {
        self.variables == other.variables
    }

    /// Cellwise `p + eps (q - p)`; exact when `q = p`.
    pub fn mix(&self, other: &Self, eps: T) -> Result<Self> {
        if !self.same_shape(other) {
            return Err(Error::SupportMismatch);
        }
        if eps < T::zero() || eps > T::one() {
            return Err(Error::EpsilonOutOfRange(eps.to_f64_lossy()));
        }
        let probabilities = self
            .probabilities
            .iter()
            .zip(&other.probabilities)
            .map(|(p, q)| p.clone() + eps.clone() * (q.clone() - p.clone()))
            .collect();
        Ok(TabularLaw { variables: self.variables.clone(), probabilities })
    }

    /// Whether `A ⊥ B | Z` holds within `tol` (max-norm over positive-mass slices).
    pub fn check_independence<S: AsRef<str>>(&self, a: &[S], b: &[S], z: &[S], tol: T) -> Result<bool> {
        let names: Vec<&str> =
            a.iter().chain(b).chain(z).map(AsRef::as_ref).collect();
        for (i, n) in names.iter().enumerate() {
            self.var_index(n)?;
            if names[..i].contains(n) {
                return Err(Error::InvalidArgument(format!("variable `{n}` appears in two sets")));
            }
        }
        let joint = self.marginal(&names)?;
        let size = |set: &[S]| -> usize {
            set.iter().map(|n| self.variable(n.as_ref()).map_or(1, |v| v.support.len())).product()
        };
        let (na, nb, nz) = (size(a), size(b), size(z));
        let at = |ia: usize, ib: usize, iz: usize| joint.probabilities[(ia * nb + ib) * nz + iz].clone();
        for iz in 0..nz {
            let pz = ordered_sum((0..na).flat_map(|ia| (0..nb).map(move |ib| (ia, ib))).map(|(ia, ib)| at(ia, ib, iz)));
            if pz <= T::zero() {
                continue;
            }
            let pa: Vec<T> = (0..na).map(|ia| ordered_sum((0..nb).map(|ib| at(ia, ib, iz))) / pz.clone()).collect();
            let pb: Vec<T> = (0..nb).map(|ib| ordered_sum((0..na).map(|ia| at(ia, ib, iz))) / pz.clone()).collect();
            for ia in 0..na {
                for ib in 0..nb {
                    let gap = at(ia, ib, iz) / pz.clone() - pa[ia].clone() * pb[ib].clone();
                    if gap.abs_val() > tol {
                        return Ok(false);
                    }
                }
            }
        }
        Ok(true)
    }

    /// Image of the law under a cellwise map into a new variable set.
    /// `f` receives the source cell and returns support indices for `variables`.
    pub fn pushforward(
        &self,
        variables: Vec<Variable>,
        mut f: impl FnMut(Cell<'_, T>) -> Vec<usize>,
    ) -> Result<Self> {
        check_names(&variables)?;
        let radices: Vec<usize> = variables.iter().map(|v| v.support.len()).collect();
        let mut out = vec![T::zero(); cell_count(&variables)?];
        self.for_each_cell(|c, p| {
            let digits = f(c);
            let mut idx = 0;
            for (k, d) in digits.iter().enumerate() {
                idx = idx * radices[k] + d;
            }
            out[idx] = out[idx].clone() + p.clone();
        });
        TabularLaw::new(variables, out)
    }

    /// Converts every probability through `f64`.
    pub fn to_f64(&self) -> TabularLaw<f64> {
        TabularLaw {
            variables: self.variables.clone(),
            probabilities: self.probabilities.iter().map(Scalar::to_f64_lossy).collect(),
        }
    }

    pub fn to_document(&self) -> LawDocument {
        LawDocument {
            variables: self.variables.clone(),
            probabilities: self.probabilities.iter().map(Scalar::to_f64_lossy).collect(),
        }
    }

    /// Max-norm distance between two laws over the same cells.
    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        if !self.same_shape(other) {
            return Err(Error::SupportMismatch);
        }
        Ok(self
            .probabilities
            .iter()
            .zip(&other.probabilities)
            .map(|(p, q)| (p.clone() - q.clone()).abs_val())
            .fold(T::zero(), |m, d| if d > m { d } else { m }))
    }
}

impl TabularLaw<f64> {
    pub fn from_document(doc: LawDocument) -> Result<Self> {
        TabularLaw::new(doc.variables, doc.probabilities)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_document(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("law serializes")
    }

    /// Exact image under [`decimal_rational`], rescaled by its total so the
    /// table sums to exactly one.
    pub fn to_exact(&self) -> Result<TabularLaw<Rational>> {
        let probs: Vec<Rational> = self
            .probabilities
            .iter()
            .map(|&v| decimal_rational(v).ok_or_else(|| Error::InvalidLaw(format!("non-finite probability {v}"))))
            .collect::<Result<_>>()?;
        let total = ordered_sum(probs.iter().cloned());
        if total.is_zero() {
            return Err(Error::InvalidLaw("probabilities sum to zero".into()));
        }
        TabularLaw::new(self.variables.clone(), probs.into_iter().map(|p| p / total.clone()).collect())
    }
}
