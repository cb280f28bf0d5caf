//! Quarterly panel ingestion.
//!
//! Source tables are long-format: one row per (company, quarter) with raw metric
//! columns. Loading aligns every company on the global quarter span and writes
//! zero into every cell or field the source did not report. The `observed` mask
//! remembers which cells had at least one reported field.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::table::{Table, TableError, Value};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("source table has no data rows")]
    Empty,
    #[error("required column `{0}` is missing from the header")]
    MissingColumn(String),
    #[error("duplicate record for company `{company}` in {period}")]
    Duplicate { company: String, period: QuarterId },
    #[error("row {row}: cannot parse `{value}` in column `{column}` as a number")]
    InvalidNumber { row: usize, column: String, value: String },
    #[error("row {row}: invalid period (year `{year}`, quarter `{quarter}`)")]
    InvalidPeriod { row: usize, year: String, quarter: String },
    #[error("row {row}: negative value {value} in column `{column}`")]
    Negative { row: usize, column: String, value: f64 },
    #[error("row {row}: empty company identifier")]
    EmptyCompany { row: usize },
    #[error("invalid panel: {0}")]
    Invalid(String),
}

/// A calendar quarter. Ordered by `(year, quarter)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct QuarterId {
    pub year: i32,
    pub quarter: u8,
}

impl QuarterId {
    pub fn new(year: i32, quarter: u8) -> Option<Self> {
        (1..=4).contains(&quarter).then_some(Self { year, quarter })
    }

    fn ordinal(self) -> i64 {
        self.year as i64 * 4 + (self.quarter as i64 - 1)
    }

    fn from_ordinal(ord: i64) -> Self {
        Self { year: ord.div_euclid(4) as i32, quarter: (ord.rem_euclid(4) + 1) as u8 }
    }

    pub fn next(self) -> Self {
        self.offset(1)
    }

    pub fn offset(self, quarters: i64) -> Self {
        Self::from_ordinal(self.ordinal() + quarters)
    }

    /// Number of quarters from `self` to `other` (negative if `other` is earlier).
    pub fn quarters_until(self, other: QuarterId) -> i64 {
        other.ordinal() - self.ordinal()
    }

    /// Inclusive range of consecutive quarters.
    pub fn span(first: QuarterId, last: QuarterId) -> Vec<QuarterId> {
        (first.ordinal()..=last.ordinal()).map(Self::from_ordinal).collect()
    }
}

impl fmt::Display for QuarterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Q{}", self.year, self.quarter)
    }
}

impl FromStr for QuarterId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (y, q) = s
            .split_once(['Q', 'q'])
            .ok_or_else(|| format!("`{s}` is not of the form YYYYQn"))?;
        let year = y.trim_end_matches('-').parse().map_err(|_| format!("bad year in `{s}`"))?;
        let quarter = q.parse().map_err(|_| format!("bad quarter in `{s}`"))?;
        QuarterId::new(year, quarter).ok_or_else(|| format!("quarter out of range in `{s}`"))
    }
}

/// Raw metrics carried by a panel cell, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    GrossPremiumIncome,
    ClaimsPaid,
    ClaimsIncurred,
    UnderwritingProfit,
    NetEarnedPremium,
    NewPolicies,
    TotalPolicies,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::GrossPremiumIncome,
        Metric::ClaimsPaid,
        Metric::ClaimsIncurred,
        Metric::UnderwritingProfit,
        Metric::NetEarnedPremium,
        Metric::NewPolicies,
        Metric::TotalPolicies,
    ];
    pub const COUNT: usize = Self::ALL.len();

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::GrossPremiumIncome => "gross_premium_income",
            Metric::ClaimsPaid => "claims_paid",
            Metric::ClaimsIncurred => "claims_incurred",
            Metric::UnderwritingProfit => "underwriting_profit",
            Metric::NetEarnedPremium => "net_earned_premium",
            Metric::NewPolicies => "new_policies",
            Metric::TotalPolicies => "total_policies",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }

    /// The four metrics every source must provide a column for.
    pub fn is_required(self) -> bool {
        matches!(
            self,
            Metric::GrossPremiumIncome
                | Metric::ClaimsPaid
                | Metric::ClaimsIncurred
                | Metric::UnderwritingProfit
        )
    }

    fn must_be_nonnegative(self) -> bool {
        matches!(
            self,
            Metric::GrossPremiumIncome | Metric::ClaimsPaid | Metric::NewPolicies | Metric::TotalPolicies
        )
    }
}

/// Maps source column names onto panel fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schema {
    pub company: String,
    pub year: String,
    pub quarter: String,
    /// Source column per metric. Optional metrics whose column is absent load as zero.
    pub metrics: BTreeMap<Metric, String>,
    pub delimiter: char,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            company: "company".into(),
            year: "year".into(),
            quarter: "quarter".into(),
            metrics: Metric::ALL.into_iter().map(|m| (m, m.name().to_owned())).collect(),
            delimiter: ',',
        }
    }
}

/// One parsed source row. `None` marks a field the source left blank.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub company: String,
    pub period: QuarterId,
    pub values: [Option<f64>; Metric::COUNT],
}

/// Company × quarter × metric grid. Unobserved cells hold zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct CompanyPanel {
    companies: Vec<String>,
    periods: Vec<QuarterId>,
    values: Vec<f64>,
    observed: Vec<bool>,
}

fn is_missing_token(s: &str) -> bool {
    matches!(s.to_ascii_lowercase().as_str(), "" | "na" | "n/a" | "-" | "null" | "none")
}

fn parse_amount(raw: &str) -> Option<f64> {
    let cleaned: String = raw.chars().filter(|c| *c != ',' && *c != '_' && *c != ' ').collect();
    cleaned.parse::<f64>().ok().filter(|x| x.is_finite())
}

impl CompanyPanel {
    /// Builds the rectangular grid from parsed records.
    pub fn from_records(records: &[RawRecord]) -> Result<Self, IngestError> {
        if records.is_empty() {
            return Err(IngestError::Empty);
        }
        let mut companies: Vec<String> = Vec::new();
        let mut company_idx: HashMap<&str, usize> = HashMap::new();
        for r in records {
            if !company_idx.contains_key(r.company.as_str()) {
                company_idx.insert(&r.company, companies.len());
                companies.push(r.company.clone());
            }
        }
        let first = records.iter().map(|r| r.period).min().expect("nonempty");
        let last = records.iter().map(|r| r.period).max().expect("nonempty");
        let periods = QuarterId::span(first, last);
        let (n, j) = (companies.len(), periods.len());
        let mut values = vec![0.0; n * j * Metric::COUNT];
        let mut observed = vec![false; n * j];
        let mut seen = vec![false; n * j];
        for r in records {
            let c = company_idx[r.company.as_str()];
            let t = first.quarters_until(r.period) as usize;
            let cell = c * j + t;
            if seen[cell] {
                return Err(IngestError::Duplicate { company: r.company.clone(), period: r.period });
            }
            seen[cell] = true;
            for (k, v) in r.values.iter().enumerate() {
                if let Some(v) = v {
                    values[cell * Metric::COUNT + k] = *v;
                    observed[cell] = true;
                }
            }
        }
        Ok(Self { companies, periods, values, observed })
    }

    /// Assembles a panel from already-aligned parts, checking every invariant.
    pub fn from_parts(
        companies: Vec<String>,
        periods: Vec<QuarterId>,
        values: Vec<f64>,
        observed: Vec<bool>,
    ) -> Result<Self, IngestError> {
        let p = Self { companies, periods, values, observed };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let (n, j) = (self.n_companies(), self.n_periods());
        if n == 0 || j == 0 {
            return Err(IngestError::Empty);
        }
        if self.values.len() != n * j * Metric::COUNT || self.observed.len() != n * j {
            return Err(IngestError::Invalid("grid size does not match companies × periods".into()));
        }
        if self.periods.windows(2).any(|w| w[0].next() != w[1]) {
            return Err(IngestError::Invalid("periods are not consecutive quarters".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(IngestError::Invalid("non-finite value".into()));
        }
        for (cell, &obs) in self.observed.iter().enumerate() {
            if !obs && self.cell_by_index(cell).iter().any(|&v| v != 0.0) {
                return Err(IngestError::Invalid(format!(
                    "unobserved cell {}/{} holds nonzero values",
                    self.companies[cell / j],
                    self.periods[cell % j]
                )));
            }
        }
        Ok(())
    }

    pub fn companies(&self) -> &[String] {
        &self.companies
    }

    pub fn periods(&self) -> &[QuarterId] {
        &self.periods
    }

    pub fn n_companies(&self) -> usize {
        self.companies.len()
    }

    pub fn n_periods(&self) -> usize {
        self.periods.len()
    }

    pub fn observed_mask(&self) -> &[bool] {
        &self.observed
    }

    pub fn is_observed(&self, company: usize, period: usize) -> bool {
        self.observed[company * self.n_periods() + period]
    }

    fn cell_by_index(&self, cell: usize) -> &[f64] {
        &self.values[cell * Metric::COUNT..(cell + 1) * Metric::COUNT]
    }

    /// All metric values of one cell, in [`Metric::ALL`] order.
    pub fn cell(&self, company: usize, period: usize) -> &[f64] {
        self.cell_by_index(company * self.n_periods() + period)
    }

    pub fn value(&self, company: usize, period: usize, metric: Metric) -> f64 {
        self.cell(company, period)[metric.index()]
    }

    pub fn company_index(&self, name: &str) -> Option<usize> {
        self.companies.iter().position(|c| c == name)
    }

    /// Canonical one-row-per-cell table including the observed flag.
    pub fn to_table(&self) -> Table {
        let mut cols = vec!["company".to_owned(), "period".to_owned(), "observed".to_owned()];
        cols.extend(Metric::ALL.iter().map(|m| m.name().to_owned()));
        let mut t = Table::new(cols);
        for (c, name) in self.companies.iter().enumerate() {
            for (p, period) in self.periods.iter().enumerate() {
                let mut row: Vec<Value> = vec![
                    name.as_str().into(),
                    period.to_string().into(),
                    (self.is_observed(c, p) as usize).into(),
                ];
                row.extend(self.cell(c, p).iter().map(|&v| Value::Float(v)));
                t.push(row);
            }
        }
        t
    }

    /// Inverse of [`CompanyPanel::to_table`].
    pub fn from_table(t: &Table) -> Result<Self, IngestError> {
        let ci = t.column("company")?;
        let pi = t.column("period")?;
        let oi = t.column("observed")?;
        let mi: Vec<usize> = Metric::ALL.iter().map(|m| t.column(m.name())).collect::<Result<_, _>>()?;
        let mut companies: Vec<String> = Vec::new();
        let mut periods: Vec<QuarterId> = Vec::new();
        let mut values = Vec::with_capacity(t.len() * Metric::COUNT);
        let mut observed = Vec::with_capacity(t.len());
        for r in 0..t.len() {
            let company = t.text(r, ci);
            if companies.last() != Some(&company) {
                companies.push(company);
            }
            let period: QuarterId = t.text(r, pi).parse().map_err(|_| IngestError::InvalidPeriod {
                row: r + 1,
                year: t.text(r, pi),
                quarter: String::new(),
            })?;
            if companies.len() == 1 {
                periods.push(period);
            } else if periods.get(r % periods.len()) != Some(&period) {
                return Err(IngestError::Invalid(format!("row {}: period {period} out of grid order", r + 1)));
            }
            observed.push(t.int(r, oi)? != 0);
            for &m in &mi {
                values.push(t.float(r, m)?);
            }
        }
        Self::from_parts(companies, periods, values, observed)
    }
}

fn parse_records(t: &Table, schema: &Schema) -> Result<Vec<RawRecord>, IngestError> {
    let col = |name: &str| t.column(name).map_err(|_| IngestError::MissingColumn(name.to_owned()));
    let ci = col(&schema.company)?;
    let yi = col(&schema.year)?;
    let qi = col(&schema.quarter)?;
    let mut metric_cols: Vec<(Metric, usize)> = Vec::new();
    for m in Metric::ALL {
        match schema.metrics.get(&m).map(|name| (name, t.column(name))) {
            Some((_, Ok(idx))) => metric_cols.push((m, idx)),
            Some((name, Err(_))) if m.is_required() => return Err(IngestError::MissingColumn(name.clone())),
            None if m.is_required() => return Err(IngestError::MissingColumn(m.name().to_owned())),
            _ => {}
        }
    }
    let mut out = Vec::with_capacity(t.len());
    for r in 0..t.len() {
        let row = r + 1;
        let company = t.text(r, ci).trim().to_owned();
        if company.is_empty() {
            return Err(IngestError::EmptyCompany { row });
        }
        let (ys, qs) = (t.text(r, yi), t.text(r, qi));
        let quarter_num = qs.trim().trim_start_matches(['Q', 'q']).parse::<u8>().ok();
        let period = match (ys.trim().parse::<i32>().ok(), quarter_num) {
            (Some(y), Some(q)) => QuarterId::new(y, q),
            _ => None,
        }
        .ok_or(IngestError::InvalidPeriod { row, year: ys.clone(), quarter: qs.clone() })?;
        let mut values = [None; Metric::COUNT];
        for &(m, idx) in &metric_cols {
            let raw = t.text(r, idx);
            let raw = raw.trim();
            if is_missing_token(raw) {
                continue;
            }
            let v = parse_amount(raw).ok_or_else(|| IngestError::InvalidNumber {
                row,
                column: t.columns[idx].clone(),
                value: raw.to_owned(),
            })?;
            if v < 0.0 && m.must_be_nonnegative() {
                return Err(IngestError::Negative { row, column: t.columns[idx].clone(), value: v });
            }
            values[m.index()] = Some(v);
        }
        out.push(RawRecord { company, period, values });
    }
    Ok(out)
}

/// Parses delimited text into a panel.
pub fn parse_panel(text: &str, schema: &Schema) -> Result<CompanyPanel, IngestError> {
    let delimiter = u8::try_from(schema.delimiter)
        .map_err(|_| IngestError::Invalid(format!("delimiter `{}` is not a single byte", schema.delimiter)))?;
    let table = Table::from_csv_str(text, delimiter)?;
    if table.is_empty() {
        return Err(IngestError::Empty);
    }
    let records = parse_records(&table, schema)?;
    CompanyPanel::from_records(&records)
}

/// Loads a delimited source file into a panel.
pub fn load_panel(path: &Path, schema: &Schema) -> Result<CompanyPanel, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|e| TableError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    parse_panel(&text, schema)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PanelSummary {
    pub first: QuarterId,
    pub last: QuarterId,
    pub n_companies: usize,
    pub n_periods: usize,
    /// Observed quarter count per company, in panel order.
    pub observed_per_company: Vec<(String, usize)>,
    pub observed_cells: usize,
}

pub fn panel_summary(panel: &CompanyPanel) -> PanelSummary {
    let j = panel.n_periods();
    let observed_per_company: Vec<(String, usize)> = panel
        .companies()
        .iter()
        .enumerate()
        .map(|(c, name)| (name.clone(), panel.observed[c * j..(c + 1) * j].iter().filter(|&&o| o).count()))
        .collect();
    PanelSummary {
        first: panel.periods[0],
        last: *panel.periods.last().expect("nonempty panel"),
        n_companies: panel.n_companies(),
        n_periods: j,
        observed_cells: observed_per_company.iter().map(|(_, k)| k).sum(),
        observed_per_company,
    }
}
