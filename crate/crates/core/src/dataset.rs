//! Observations and covariates.

use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Responses `y` (length n) and optional covariates `x` (n rows).
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    x: Option<DMatrix<f64>>,
    covariate_names: Vec<String>,
}

impl Dataset {
    pub fn new(y: Vec<f64>, x: Option<DMatrix<f64>>) -> Result<Self> {
        let names = x
            .as_ref()
            .map(|m| (1..=m.ncols()).map(|j| format!("x{j}")).collect())
            .unwrap_or_default();
        Self::with_names(y, x, names)
    }

    pub fn with_names(y: Vec<f64>, x: Option<DMatrix<f64>>, covariate_names: Vec<String>) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::invalid("dataset must contain at least one observation"));
        }
        if let Some(v) = y.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite response {v}")));
        }
        if let Some(m) = &x {
            if m.nrows() != y.len() {
                return Err(Error::invalid(format!(
                    "covariate matrix has {} rows but there are {} responses",
                    m.nrows(),
                    y.len()
                )));
            }
            if m.ncols() != covariate_names.len() {
                return Err(Error::invalid("covariate names do not match column count"));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("non-finite covariate value"));
            }
        }
        Ok(Self { y, x, covariate_names })
    }

    /// A dataset whose responses are restricted to {0, 1}.
    pub fn binary(y: Vec<f64>, x: Option<DMatrix<f64>>) -> Result<Self> {
        let d = Self::new(y, x)?;
        d.require_binary()?;
        Ok(d)
    }

    pub fn require_binary(&self) -> Result<()> {
        match self.y.iter().find(|&&v| v != 0.0 && v != 1.0) {
            Some(v) => Err(Error::invalid(format!("binary response expected, found {v}"))),
            None => Ok(()),
        }
    }

    /// Reads a CSV with a header row. Column `y` holds responses; every other
    /// column is a covariate, kept in file order.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let y_col = headers
            .iter()
            .position(|h| h == "y")
            .ok_or_else(|| Error::invalid("CSV is missing the required `y` column"))?;
        let names: Vec<String> = headers
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != y_col)
            .map(|(_, h)| h.to_string())
            .collect();

        let mut y = Vec::new();
        let mut values = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            for (i, field) in record.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    Error::invalid(format!(
                        "row {}: column `{}` value `{field}` is not a number",
                        line + 1,
                        &headers[i]
                    ))
                })?;
                if i == y_col {
                    y.push(v);
                } else {
                    values.push(v);
                }
            }
        }
        let x = if names.is_empty() {
            None
        } else {
            Some(DMatrix::from_row_slice(y.len(), names.len(), &values))
        };
        Self::with_names(y, x, names)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> Option<&DMatrix<f64>> {
        self.x.as_ref()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    /// Covariate column by name.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.covariate_names.iter().position(|n| n == name)?;
        self.x.as_ref().map(|m| m.column(j).iter().copied().collect())
    }

    /// Keeps only the named covariates, in the order given.
    pub fn select(&self, names: &[&str]) -> Result<Dataset> {
        let mut cols = Vec::with_capacity(names.len());
        for name in names {
            cols.push(
                self.column(name)
                    .ok_or_else(|| Error::invalid(format!("dataset has no column `{name}`")))?,
            );
        }
        let x = if cols.is_empty() {
            None
        } else {
            Some(DMatrix::from_fn(self.len(), cols.len(), |i, j| cols[j][i]))
        };
        Dataset::with_names(self.y.clone(), x, names.iter().map(|s| s.to_string()).collect())
    }

    /// Single covariate as a slice-like vector (first column), if any.
    pub fn first_covariate(&self) -> Option<Vec<f64>> {
        self.x.as_ref().map(|m| m.column(0).iter().copied().collect())
    }

    /// Rows reordered by `order` (a permutation of `0..n`).
    pub fn permuted(&self, order: &[usize]) -> Result<Dataset> {
        if order.len() != self.len() {
            return Err(Error::invalid("permutation length does not match dataset"));
        }
        let y = order.iter().map(|&i| self.y[i]).collect();
        let x = self
            .x
            .as_ref()
            .map(|m| DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(order[i], j)]));
        Dataset::with_names(y, x, self.covariate_names.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_csv_with_covariates_in_file_order() {
        let csv = "glu,y,bp\n1.5,1,70\n2.5,0,80\n";
        let d = Dataset::from_csv_reader(csv.as_bytes()).unwrap();
        assert_eq!(d.y(), &[1.0, 0.0]);
        assert_eq!(d.covariate_names(), &["glu".to_string(), "bp".to_string()]);
        assert_eq!(d.x().unwrap()[(1, 1)], 80.0);
        assert_eq!(d.select(&["bp"]).unwrap().x().unwrap()[(0, 0)], 70.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(Dataset::new(vec![], None).is_err());
        assert!(Dataset::from_csv_reader("a,b\n1,2\n".as_bytes()).is_err());
        assert!(Dataset::from_csv_reader("y,a\n1,x\n".as_bytes()).is_err());
        assert!(Dataset::binary(vec![0.0, 2.0], None).is_err());
        assert!(Dataset::new(vec![1.0], Some(DMatrix::zeros(2, 1))).is_err());
    }

    #[test]
    fn response_only_csv() {
        let d = Dataset::from_csv_reader("y\n0.5\n-1\n".as_bytes()).unwrap();
        assert!(d.x().is_none());
        assert_eq!(d.len(), 2);
    }
}
