use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where a row came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowFlag {
    Clean,
    Outlier,
    Contaminated,
}

impl RowFlag {
    pub fn as_str(&self) -> &'static str {
        match self {
            RowFlag::Clean => "clean",
            RowFlag::Outlier => "outlier",
            RowFlag::Contaminated => "contaminated",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "clean" => Ok(RowFlag::Clean),
            "outlier" => Ok(RowFlag::Outlier),
            "contaminated" => Ok(RowFlag::Contaminated),
            other => Err(Error::InvalidConfig(format!("unknown row flag {other:?}"))),
        }
    }
}

/// `n` pairs `(wᵢ, yᵢ)` with `wᵢ ∈ ℝᵈ`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    dim: usize,
    w: Vec<f64>,
    y: Vec<f64>,
    flags: Vec<RowFlag>,
}

impl Dataset {
    pub fn new(dim: usize) -> Self {
        Dataset {
            dim,
            w: Vec::new(),
            y: Vec::new(),
            flags: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        Dataset {
            dim,
            w: Vec::with_capacity(n * dim),
            y: Vec::with_capacity(n),
            flags: Vec::with_capacity(n),
        }
    }

    pub fn from_rows(dim: usize, rows: &[(Vec<f64>, f64)]) -> Result<Self> {
        let mut ds = Self::with_capacity(dim, rows.len());
        for (w, y) in rows {
            ds.push(w, *y, RowFlag::Clean)?;
        }
        Ok(ds)
    }

    pub fn push(&mut self, w: &[f64], y: f64, flag: RowFlag) -> Result<()> {
        if w.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: w.len(),
                context: "dataset row",
            });
        }
        self.w.extend_from_slice(w);
        self.y.push(y);
        self.flags.push(flag);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn w(&self, i: usize) -> &[f64] {
        &self.w[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn y(&self, i: usize) -> f64 {
        self.y[i]
    }

    pub fn ys(&self) -> &[f64] {
        &self.y
    }

    pub fn flag(&self, i: usize) -> RowFlag {
        self.flags[i]
    }

    pub fn flags(&self) -> &[RowFlag] {
        &self.flags
    }

    pub(crate) fn set_row(&mut self, i: usize, y: f64, flag: RowFlag) {
        self.y[i] = y;
        self.flags[i] = flag;
    }

    pub fn count_flag(&self, flag: RowFlag) -> usize {
        self.flags.iter().filter(|f| **f == flag).count()
    }

    /// Drops every non-clean row.
    pub fn clean_rows(&self) -> Dataset {
        let mut out = Dataset::with_capacity(self.dim, self.len());
        for i in 0..self.len() {
            if self.flags[i] == RowFlag::Clean {
                out.w.extend_from_slice(self.w(i));
                out.y.push(self.y[i]);
                out.flags.push(RowFlag::Clean);
            }
        }
        out
    }

    /// Rows iterator `(w, y, flag)`.
    pub fn rows(&self) -> impl Iterator<Item = (&[f64], f64, RowFlag)> + '_ {
        (0..self.len()).map(move |i| (self.w(i), self.y[i], self.flags[i]))
    }
}
