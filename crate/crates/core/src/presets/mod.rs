//! Preset runs that regenerate the published result tables.
//!
//! Each preset returns a [`Report`]: a CSV-ready table holding the computed
//! values next to the published ones, plus a list of [`Check`]s that apply
//! the acceptance tolerances. Tables are deterministic for a given seed and
//! scale; wall-clock measurements only appear in the checks and notes.

mod tables;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Preset identifiers accepted by `reproduce`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TableId {
    #[serde(rename = "table1")]
    Table1,
    #[serde(rename = "table2")]
    Table2,
    #[serde(rename = "table3")]
    Table3,
    #[serde(rename = "table4")]
    Table4,
    #[serde(rename = "table5")]
    Table5,
    #[serde(rename = "appendixB")]
    AppendixB,
    #[serde(rename = "appendixF")]
    AppendixF,
}

impl TableId {
    pub const ALL: [TableId; 7] = [
        TableId::Table1,
        TableId::Table2,
        TableId::Table3,
        TableId::Table4,
        TableId::Table5,
        TableId::AppendixB,
        TableId::AppendixF,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TableId::Table1 => "table1",
            TableId::Table2 => "table2",
            TableId::Table3 => "table3",
            TableId::Table4 => "table4",
            TableId::Table5 => "table5",
            TableId::AppendixB => "appendixB",
            TableId::AppendixF => "appendixF",
        }
    }
}

impl fmt::Display for TableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TableId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TableId::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config("table", format!("unknown table id {s:?}")))
    }
}

/// Replication budget of a preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// Small budgets for smoke runs; tolerances are still reported.
    Quick,
    /// The budgets the acceptance tolerances assume.
    #[default]
    Full,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "quick" => Ok(Scale::Quick),
            "full" => Ok(Scale::Full),
            _ => Err(Error::config("scale", format!("unknown scale {s:?}"))),
        }
    }
}

/// One tolerance check against a reference value or bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    /// Acceptance criterion the check belongs to, such as `A1`.
    pub criterion: String,
    pub name: String,
    pub value: f64,
    pub reference: Option<f64>,
    pub lo: f64,
    pub hi: f64,
    pub pass: bool,
}

impl Check {
    /// `value ∈ [lo, hi]`. NaN never passes.
    pub fn range(
        criterion: &str,
        name: impl Into<String>,
        value: f64,
        lo: f64,
        hi: f64,
        reference: Option<f64>,
    ) -> Self {
        Check {
            criterion: criterion.into(),
            name: name.into(),
            value,
            reference,
            lo,
            hi,
            pass: value >= lo && value <= hi,
        }
    }

    /// `|value - reference| ≤ tol`, with a little slack for decimal rounding.
    pub fn near(
        criterion: &str,
        name: impl Into<String>,
        value: f64,
        reference: f64,
        tol: f64,
    ) -> Self {
        let slack = 1e-9;
        Self::range(
            criterion,
            name,
            value,
            reference - tol - slack,
            reference + tol + slack,
            Some(reference),
        )
    }

    pub fn at_least(criterion: &str, name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self::range(criterion, name, value, bound, f64::INFINITY, None)
    }

    pub fn at_most(criterion: &str, name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self::range(criterion, name, value, f64::NEG_INFINITY, bound, None)
    }

    fn bound_text(&self) -> String {
        match (self.lo.is_finite(), self.hi.is_finite()) {
            (true, true) => format!("[{:.4}, {:.4}]", self.lo, self.hi),
            (true, false) => format!(">= {:.4}", self.lo),
            (false, true) => format!("<= {:.4}", self.hi),
            (false, false) => "any".into(),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<4} {}: {:.4} (want {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.criterion,
            self.name,
            self.value,
            self.bound_text()
        )?;
        if let Some(r) = self.reference {
            write!(f, ", published {r}")?;
        }
        write!(f, ")")
    }
}

/// Rows of a result table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.header)?;
        for row in &self.rows {
            out.write_record(row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Output of one preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub table: TableId,
    pub scale: Scale,
    pub seed: u64,
    pub results: Table,
    pub checks: Vec<Check>,
    /// Free-form lines for the summary, including timings.
    pub notes: Vec<String>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// Human-readable summary: notes, then one line per check.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "{} ({:?} scale, seed {})\n",
            self.table, self.scale, self.seed
        );
        for n in &self.notes {
            s.push_str(&format!("  {n}\n"));
        }
        for c in &self.checks {
            s.push_str(&format!("  {c}\n"));
        }
        let failed = self.checks.iter().filter(|c| !c.pass).count();
        s.push_str(&format!(
            "  {} of {} checks passed\n",
            self.checks.len() - failed,
            self.checks.len()
        ));
        s
    }
}

/// Runs a preset. `progress` receives the completed fraction.
pub fn reproduce(
    table: TableId,
    scale: Scale,
    seed: u64,
    progress: &(dyn Fn(f64) + Sync),
) -> Result<Report> {
    let (results, checks, notes) = match table {
        TableId::Table1 => tables::table1(scale, seed, progress)?,
        TableId::Table2 => tables::table2(scale, seed, progress)?,
        TableId::Table3 => tables::table3(scale, seed, progress)?,
        TableId::Table4 => tables::table4(scale, seed, progress)?,
        TableId::Table5 => tables::table5(scale, seed, progress)?,
        TableId::AppendixB => tables::appendix_b(scale, seed, progress)?,
        TableId::AppendixF => tables::appendix_f(scale, seed, progress)?,
    };
    progress(1.0);
    Ok(Report {
        table,
        scale,
        seed,
        results,
        checks,
        notes,
    })
}

/// Settings of the six-arm Gaussian preset built from the educational
/// study's summary statistics.
pub fn empirical_problem(replications: usize) -> crate::objective::DesignProblem {
    tables::empirical_problem(replications)
}

/// Arm means realized in the educational study.
pub const EMPIRICAL_REALIZED_MEANS: [f64; 6] = [0.810, 0.806, 0.819, 0.778, 0.827, 0.813];
