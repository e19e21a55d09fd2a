//! Observed-data law of the permutation model split by missingness pattern.
//!
//! Under the observation rule the observed law is carried by four disjoint
//! strata: `(R_1,R_2) = (1,1)` with `(Y, X)` seen, `(1,0)` with only `Y`,
//! `(0,1)` with only `X`, and `(0,0)` with nothing. Every functional in the
//! crate reduces to sums over these arrays.

use crate::error::{Error, Result};
use crate::permlaw::{Dataset, MISSING, R1, R2, X_OBS, Y_OBS};
use crate::scalar::{ordered_sum, Scalar};
use crate::tabular::{TabularLaw, Variable};

#[derive(Debug, Clone, PartialEq)]
pub struct ObservedStrata<T> {
    pub y_labels: Vec<String>,
    pub x_labels: Vec<String>,
    /// Numeric value of each outcome label.
    pub y_values: Vec<T>,
    /// `p11[y][x] = P(R_1=1, R_2=1, Y=y, X=x)`
    pub p11: Vec<Vec<T>>,
    /// `p10[y] = P(R_1=1, R_2=0, Y=y)`
    pub p10: Vec<T>,
    /// `p01[x] = P(R_1=0, R_2=1, X=x)`
    pub p01: Vec<T>,
    pub p00: T,
}

fn observed_labels(v: &Variable) -> Vec<String> {
    v.support.iter().filter(|l| *l != MISSING).cloned().collect()
}

impl<T: Scalar> ObservedStrata<T> {
    /// Splits an observed law over `(R_1, R_2, Y, X)`. Mass on a cell whose
    /// missing token disagrees with its indicator is an error.
    pub fn from_law(law: &TabularLaw<T>) -> Result<Self> {
        let vy = law.variable(Y_OBS)?;
        let vx = law.variable(X_OBS)?;
        let y_labels = observed_labels(vy);
        let x_labels = observed_labels(vx);
        let y_values = y_labels
            .iter()
            .map(|l| T::parse_label(l).ok_or_else(|| Error::NonNumericOutcome(l.clone())))
            .collect::<Result<Vec<T>>>()?;
        let (ir1, ir2, iy, ix) =
            (law.var_index(R1)?, law.var_index(R2)?, law.var_index(Y_OBS)?, law.var_index(X_OBS)?);
        let r1_one = law.variable(R1)?.label_index("1")?;
        let r2_one = law.variable(R2)?.label_index("1")?;
        // support index -> position among observed labels
        let pos = |v: &Variable| -> Vec<Option<usize>> {
            let mut k = 0;
            v.support
                .iter()
                .map(|l| {
                    (l != MISSING).then(|| {
                        k += 1;
                        k - 1
                    })
                })
                .collect()
        };
        let (ypos, xpos) = (pos(vy), pos(vx));
        let (ny, nx) = (y_labels.len(), x_labels.len());
        let mut s = ObservedStrata {
            y_labels,
            x_labels,
            y_values,
            p11: vec![vec![T::zero(); nx]; ny],
            p10: vec![T::zero(); ny],
            p01: vec![T::zero(); nx],
            p00: T::zero(),
        };
        let mut bad = None;
        law.for_each_cell(|c, p| {
            if *p == T::zero() {
                return;
            }
            let d = c.digits();
            let r1 = d[ir1] == r1_one;
            let r2 = d[ir2] == r2_one;
            match (r1, r2, ypos[d[iy]], xpos[d[ix]]) {
                (true, true, Some(y), Some(x)) => s.p11[y][x] = s.p11[y][x].clone() + p.clone(),
                (true, false, Some(y), None) => s.p10[y] = s.p10[y].clone() + p.clone(),
                (false, true, None, Some(x)) => s.p01[x] = s.p01[x].clone() + p.clone(),
                (false, false, None, None) => s.p00 = s.p00.clone() + p.clone(),
                _ => bad = Some(format!("{:?}", d)),
            }
        });
        if let Some(cell) = bad {
            return Err(Error::InvalidLaw(format!(
                "positive mass on cell {cell} whose missing tokens disagree with R_1, R_2"
            )));
        }
        Ok(s)
    }

    /// Cell counts of a dataset, labels in sorted order (or the supports given).
    pub fn from_dataset(d: &Dataset, supports: Option<(&[String], &[String])>) -> Result<Self> {
        let (y_labels, x_labels) = match supports {
            Some((y, x)) => (y.to_vec(), x.to_vec()),
            None => dataset_supports(d),
        };
        let y_values = y_labels
            .iter()
            .map(|l| T::parse_label(l).ok_or_else(|| Error::NonNumericOutcome(l.clone())))
            .collect::<Result<Vec<T>>>()?;
        let find = |labels: &[String], l: &str, var: &str| {
            labels.iter().position(|m| m == l).ok_or_else(|| Error::UnknownLabel {
                variable: var.to_string(),
                label: l.to_string(),
            })
        };
        let (ny, nx) = (y_labels.len(), x_labels.len());
        let mut c11 = vec![vec![0usize; nx]; ny];
        let mut c10 = vec![0usize; ny];
        let mut c01 = vec![0usize; nx];
        let mut c00 = 0usize;
        for r in &d.records {
            match (&r.y, &r.x) {
                (Some(y), Some(x)) => c11[find(&y_labels, y, Y_OBS)?][find(&x_labels, x, X_OBS)?] += 1,
                (Some(y), None) => c10[find(&y_labels, y, Y_OBS)?] += 1,
                (None, Some(x)) => c01[find(&x_labels, x, X_OBS)?] += 1,
                (None, None) => c00 += 1,
            }
        }
        let t = T::from_usize_exact;
        Ok(ObservedStrata {
            y_labels,
            x_labels,
            y_values,
            p11: c11.iter().map(|row| row.iter().map(|&c| t(c)).collect()).collect(),
            p10: c10.iter().map(|&c| t(c)).collect(),
            p01: c01.iter().map(|&c| t(c)).collect(),
            p00: t(c00),
        })
    }

    pub fn ny(&self) -> usize {
        self.y_labels.len()
    }

    pub fn nx(&self) -> usize {
        self.x_labels.len()
    }

    /// `P(R_1=1, R_2=1, X=x)`
    pub fn p11_x(&self, x: usize) -> T {
        ordered_sum(self.p11.iter().map(|row| row[x].clone()))
    }

    /// `P(R_1=1, R_2=1, Y=y)`
    pub fn p11_y(&self, y: usize) -> T {
        ordered_sum(self.p11[y].iter().cloned())
    }

    /// `P(R_1=1, Y=y)`
    pub fn p1_y(&self, y: usize) -> T {
        self.p11_y(y) + self.p10[y].clone()
    }

    pub fn mass11(&self) -> T {
        ordered_sum((0..self.ny()).map(|y| self.p11_y(y)))
    }

    pub fn mass10(&self) -> T {
        ordered_sum(self.p10.iter().cloned())
    }

    pub fn mass01(&self) -> T {
        ordered_sum(self.p01.iter().cloned())
    }

    pub fn mass_r1(&self) -> T {
        self.mass11() + self.mass10()
    }

    pub fn total(&self) -> T {
        self.mass11() + self.mass10() + self.mass01() + self.p00.clone()
    }

    /// Rescales so the four strata sum to one.
    pub fn normalized(&self) -> Result<Self> {
        let n = self.total();
        if n <= T::zero() {
            return Err(Error::InvalidArgument("empty table".into()));
        }
        let scale = |v: &T| v.clone() / n.clone();
        Ok(ObservedStrata {
            y_labels: self.y_labels.clone(),
            x_labels: self.x_labels.clone(),
            y_values: self.y_values.clone(),
            p11: self.p11.iter().map(|r| r.iter().map(scale).collect()).collect(),
            p10: self.p10.iter().map(scale).collect(),
            p01: self.p01.iter().map(scale).collect(),
            p00: scale(&self.p00),
        })
    }

    /// Observed law over `(R_1, R_2, Y, X)` carrying these strata.
    pub fn to_law(&self) -> Result<TabularLaw<T>> {
        let (ny, nx) = (self.ny(), self.nx());
        let mut ys = self.y_labels.clone();
        ys.push(MISSING.into());
        let mut xs = self.x_labels.clone();
        xs.push(MISSING.into());
        let variables =
            vec![Variable::binary(R1), Variable::binary(R2), Variable::new(Y_OBS, ys), Variable::new(X_OBS, xs)];
        let mut probs = vec![T::zero(); 4 * (ny + 1) * (nx + 1)];
        let at = |r1: usize, r2: usize, y: usize, x: usize| ((r1 * 2 + r2) * (ny + 1) + y) * (nx + 1) + x;
        self.for_each_cell(|c, p| {
            let i = at(usize::from(c.r1), usize::from(c.r2), c.y.unwrap_or(ny), c.x.unwrap_or(nx));
            probs[i] = p.clone();
        });
        TabularLaw::new(variables, probs)
    }

    pub fn same_supports(&self, other: &Self) -> bool {
        self.y_labels == other.y_labels && self.x_labels == other.x_labels
    }

    /// Visits every observed cell with its probability, in a fixed order:
    /// the (1,1) stratum row by row, then (1,0), (0,1), (0,0).
    pub fn for_each_cell(&self, mut f: impl FnMut(ObservedCell, &T)) {
        for (y, row) in self.p11.iter().enumerate() {
            for (x, p) in row.iter().enumerate() {
                f(ObservedCell { r1: true, r2: true, y: Some(y), x: Some(x) }, p);
            }
        }
        for (y, p) in self.p10.iter().enumerate() {
            f(ObservedCell { r1: true, r2: false, y: Some(y), x: None }, p);
        }
        for (x, p) in self.p01.iter().enumerate() {
            f(ObservedCell { r1: false, r2: true, y: None, x: Some(x) }, p);
        }
        f(ObservedCell { r1: false, r2: false, y: None, x: None }, &self.p00);
    }
}

/// Sorted observed labels of `Y` and `X` in a dataset. Numeric labels sort by
/// value, the rest lexicographically.
pub fn dataset_supports(d: &Dataset) -> (Vec<String>, Vec<String>) {
    let mut ys: Vec<String> = d.records.iter().filter_map(|r| r.y.clone()).collect();
    let mut xs: Vec<String> = d.records.iter().filter_map(|r| r.x.clone()).collect();
    for v in [&mut ys, &mut xs] {
        v.sort_by(|a, b| match (a.parse::<f64>(), b.parse::<f64>()) {
            (Ok(p), Ok(q)) => p.partial_cmp(&q).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(b)),
            (Ok(_), Err(_)) => std::cmp::Ordering::Less,
            (Err(_), Ok(_)) => std::cmp::Ordering::Greater,
            _ => a.cmp(b),
        });
        v.dedup();
    }
    (ys, xs)
}

/// One observed cell, by index into the strata label lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObservedCell {
    pub r1: bool,
    pub r2: bool,
    pub y: Option<usize>,
    pub x: Option<usize>,
}
