//! Underwriting ratios and their standardization.
//!
//! Ratios are stored in percent. Any ratio whose denominator is zero is
//! defined as 0, so unobserved (all-zero) cells map to all-zero ratio rows.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{CompanyPanel, Metric, QuarterId};
use crate::table::{Table, TableError, Value};

#[derive(Debug, Error)]
pub enum RatioError {
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("scaling spec does not fit tensor: {0}")]
    ShapeMismatch(String),
    #[error("malformed ratio table: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    MarketShare,
    ClaimsPaidRatio,
    LossRatio,
    UnderwritingProfitRatio,
    ExpenseRatio,
    CombinedRatio,
    ClaimsPayoutRatio,
}

impl Feature {
    pub const ALL: [Feature; 7] = [
        Feature::MarketShare,
        Feature::ClaimsPaidRatio,
        Feature::LossRatio,
        Feature::UnderwritingProfitRatio,
        Feature::ExpenseRatio,
        Feature::CombinedRatio,
        Feature::ClaimsPayoutRatio,
    ];
    pub const COUNT: usize = Self::ALL.len();

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Feature::MarketShare => "market_share",
            Feature::ClaimsPaidRatio => "claims_paid_ratio",
            Feature::LossRatio => "loss_ratio",
            Feature::UnderwritingProfitRatio => "underwriting_profit_ratio",
            Feature::ExpenseRatio => "expense_ratio",
            Feature::CombinedRatio => "combined_ratio",
            Feature::ClaimsPayoutRatio => "claims_payout_ratio",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingMode {
    #[default]
    WithinCompany,
    Global,
}

impl ScalingMode {
    pub fn name(self) -> &'static str {
        match self {
            ScalingMode::WithinCompany => "within_company",
            ScalingMode::Global => "global",
        }
    }
}

/// Whether tensor values are raw percentages or standardized scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    Percent,
    Standardized(ScalingMode),
}

/// N × J × 7 ratio grid, features in [`Feature::ALL`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioTensor {
    pub companies: Vec<String>,
    pub periods: Vec<QuarterId>,
    pub values: Vec<f64>,
    /// Row-level observation mask carried over from the panel.
    pub observed: Vec<bool>,
    pub units: Units,
}

impl RatioTensor {
    pub fn n_companies(&self) -> usize {
        self.companies.len()
    }

    pub fn n_periods(&self) -> usize {
        self.periods.len()
    }

    pub fn get(&self, company: usize, period: usize, feature: Feature) -> f64 {
        self.values[(company * self.n_periods() + period) * Feature::COUNT + feature.index()]
    }

    /// The J × 7 block of one company, row-major by period.
    pub fn company_rows(&self, company: usize) -> &[f64] {
        let stride = self.n_periods() * Feature::COUNT;
        &self.values[company * stride..(company + 1) * stride]
    }

    /// Builds a tensor from per-company `J × F` blocks.
    pub fn from_series(companies: Vec<String>, periods: Vec<QuarterId>, blocks: &[Vec<f64>], units: Units) -> Self {
        let values: Vec<f64> = blocks.iter().flatten().copied().collect();
        let observed = vec![true; companies.len() * periods.len()];
        assert_eq!(values.len(), companies.len() * periods.len() * Feature::COUNT);
        Self { companies, periods, values, observed, units }
    }

    /// Long-format table: one row per (company, period, feature).
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["company", "period", "observed", "feature", "value"]);
        let units = match self.units {
            Units::Percent => "percent".to_owned(),
            Units::Standardized(m) => format!("standardized_{}", m.name()),
        };
        t = t.with_meta("units", units);
        let j = self.n_periods();
        for (c, name) in self.companies.iter().enumerate() {
            for (p, period) in self.periods.iter().enumerate() {
                for f in Feature::ALL {
                    t.push(vec![
                        name.as_str().into(),
                        period.to_string().into(),
                        (self.observed[c * j + p] as usize).into(),
                        f.name().into(),
                        Value::Float(self.get(c, p, f)),
                    ]);
                }
            }
        }
        t
    }

    pub fn from_table(t: &Table) -> Result<Self, RatioError> {
        let units = match t.meta.get("units").map(String::as_str) {
            Some("percent") | None => Units::Percent,
            Some("standardized_within_company") => Units::Standardized(ScalingMode::WithinCompany),
            Some("standardized_global") => Units::Standardized(ScalingMode::Global),
            Some(other) => return Err(RatioError::Malformed(format!("unknown units `{other}`"))),
        };
        let (ci, pi, oi, fi, vi) = (
            t.column("company")?,
            t.column("period")?,
            t.column("observed")?,
            t.column("feature")?,
            t.column("value")?,
        );
        if t.len() % Feature::COUNT != 0 {
            return Err(RatioError::Malformed("row count is not a multiple of 7".into()));
        }
        let mut companies: Vec<String> = Vec::new();
        let mut periods: Vec<QuarterId> = Vec::new();
        let mut values = Vec::with_capacity(t.len());
        let mut observed = Vec::with_capacity(t.len() / Feature::COUNT);
        for r in 0..t.len() {
            let f = Feature::from_name(&t.text(r, fi))
                .ok_or_else(|| RatioError::Malformed(format!("row {}: unknown feature", r + 1)))?;
            if f != Feature::ALL[r % Feature::COUNT] {
                return Err(RatioError::Malformed(format!("row {}: feature order", r + 1)));
            }
            if f.index() == 0 {
                let company = t.text(r, ci);
                if companies.last() != Some(&company) {
                    companies.push(company);
                }
                let period: QuarterId = t
                    .text(r, pi)
                    .parse()
                    .map_err(|e| RatioError::Malformed(format!("row {}: {e}", r + 1)))?;
                if companies.len() == 1 {
                    periods.push(period);
                }
                observed.push(t.int(r, oi)? != 0);
            }
            values.push(t.float(r, vi)?);
        }
        if values.len() != companies.len() * periods.len() * Feature::COUNT {
            return Err(RatioError::Malformed("table is not rectangular".into()));
        }
        Ok(Self { companies, periods, values, observed, units })
    }
}

/// Operating expenses implied by premium, claims incurred and underwriting profit.
pub fn compute_expenses(gross_premium: f64, claims_incurred: f64, underwriting_profit: f64) -> f64 {
    gross_premium - (claims_incurred + underwriting_profit)
}

fn percent(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den * 100.0
    }
}

/// Seven ratios of one cell, given the market-wide premium total for its period.
pub fn cell_ratios(cell: &[f64], market_premium: f64) -> [f64; Feature::COUNT] {
    let gpi = cell[Metric::GrossPremiumIncome.index()];
    let paid = cell[Metric::ClaimsPaid.index()];
    let incurred = cell[Metric::ClaimsIncurred.index()];
    let uw = cell[Metric::UnderwritingProfit.index()];
    let expense_ratio = percent(compute_expenses(gpi, incurred, uw), gpi);
    let loss_ratio = percent(incurred, gpi);
    [
        percent(gpi, market_premium),
        percent(paid, gpi),
        loss_ratio,
        percent(uw, gpi),
        expense_ratio,
        loss_ratio + expense_ratio,
        percent(paid, incurred),
    ]
}

pub fn compute_ratios(panel: &CompanyPanel) -> RatioTensor {
    let (n, j) = (panel.n_companies(), panel.n_periods());
    let market: Vec<f64> = (0..j)
        .map(|p| (0..n).map(|c| panel.value(c, p, Metric::GrossPremiumIncome)).sum())
        .collect();
    let mut values = Vec::with_capacity(n * j * Feature::COUNT);
    for c in 0..n {
        for (p, &total) in market.iter().enumerate() {
            values.extend(cell_ratios(panel.cell(c, p), total));
        }
    }
    RatioTensor {
        companies: panel.companies().to_vec(),
        periods: panel.periods().to_vec(),
        values,
        observed: panel.observed_mask().to_vec(),
        units: Units::Percent,
    }
}

/// Fitted standardization parameters.
///
/// `means` and `stds` hold one entry per feature in global mode and one per
/// (company, feature) in within-company mode, company-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingSpec {
    pub mode: ScalingMode,
    pub companies: Vec<String>,
    pub features: Vec<Feature>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl ScalingSpec {
    fn slot(&self, company: usize, feature: usize) -> usize {
        match self.mode {
            ScalingMode::WithinCompany => company * Feature::COUNT + feature,
            ScalingMode::Global => feature,
        }
    }

    fn check(&self, tensor: &RatioTensor) -> Result<(), RatioError> {
        if self.features != Feature::ALL {
            return Err(RatioError::ShapeMismatch("feature order differs".into()));
        }
        let expected = match self.mode {
            ScalingMode::WithinCompany => {
                if self.companies != tensor.companies {
                    return Err(RatioError::ShapeMismatch(format!(
                        "spec fitted on {} companies, tensor has {}",
                        self.companies.len(),
                        tensor.n_companies()
                    )));
                }
                tensor.n_companies() * Feature::COUNT
            }
            ScalingMode::Global => Feature::COUNT,
        };
        if self.means.len() != expected || self.stds.len() != expected {
            return Err(RatioError::ShapeMismatch("parameter count".into()));
        }
        Ok(())
    }
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (count, sum) = xs.clone().fold((0usize, 0.0), |(k, s), x| (k + 1, s + x));
    if count == 0 {
        return (0.0, 0.0);
    }
    let mean = sum / count as f64;
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / count as f64;
    (mean, var.sqrt())
}

/// Fits population mean / standard deviation per feature (and per company in
/// within-company mode).
pub fn fit_scaling(tensor: &RatioTensor, mode: ScalingMode) -> ScalingSpec {
    let (n, j) = (tensor.n_companies(), tensor.n_periods());
    let mut means = Vec::new();
    let mut stds = Vec::new();
    match mode {
        ScalingMode::WithinCompany => {
            for c in 0..n {
                let rows = tensor.company_rows(c);
                for f in 0..Feature::COUNT {
                    let (m, s) = mean_std((0..j).map(|p| rows[p * Feature::COUNT + f]));
                    means.push(m);
                    stds.push(s);
                }
            }
        }
        ScalingMode::Global => {
            for f in 0..Feature::COUNT {
                let (m, s) = mean_std(tensor.values.iter().skip(f).step_by(Feature::COUNT).copied());
                means.push(m);
                stds.push(s);
            }
        }
    }
    ScalingSpec { mode, companies: tensor.companies.clone(), features: Feature::ALL.to_vec(), means, stds }
}

/// Standardizes `tensor`; zero-variance features become 0.
pub fn apply_scaling(tensor: &RatioTensor, spec: &ScalingSpec) -> Result<RatioTensor, RatioError> {
    spec.check(tensor)?;
    let j = tensor.n_periods();
    let mut out = tensor.clone();
    for (idx, v) in out.values.iter_mut().enumerate() {
        let company = idx / (j * Feature::COUNT);
        let slot = spec.slot(company, idx % Feature::COUNT);
        let sd = spec.stds[slot];
        *v = if sd > 0.0 { (*v - spec.means[slot]) / sd } else { 0.0 };
    }
    out.units = Units::Standardized(spec.mode);
    Ok(out)
}

/// Maps standardized values back to percent units (`value * std + mean`).
pub fn invert_scaling(tensor: &RatioTensor, spec: &ScalingSpec) -> Result<RatioTensor, RatioError> {
    spec.check(tensor)?;
    let j = tensor.n_periods();
    let mut out = tensor.clone();
    for (idx, v) in out.values.iter_mut().enumerate() {
        let slot = spec.slot(idx / (j * Feature::COUNT), idx % Feature::COUNT);
        *v = *v * spec.stds[slot] + spec.means[slot];
    }
    out.units = Units::Percent;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{parse_panel, Schema};

    fn tensor_1d(values: &[f64]) -> RatioTensor {
        let j = values.len();
        let mut flat = Vec::new();
        for &v in values {
            flat.extend([v; Feature::COUNT]);
        }
        let start = QuarterId::new(2000, 1).unwrap();
        let periods = QuarterId::span(start, start.offset(j as i64 - 1));
        RatioTensor::from_series(vec!["A".into()], periods, &[flat], Units::Percent)
    }

    #[test]
    fn expenses() {
        assert_eq!(compute_expenses(100.0, 60.0, 10.0), 30.0);
        assert_eq!(compute_expenses(0.0, 0.0, 0.0), 0.0);
        assert_eq!(compute_expenses(100.0, 120.0, -30.0), 10.0);
    }

    #[test]
    fn hand_computed_ratios() {
        let mut cell = [0.0; Metric::COUNT];
        cell[Metric::GrossPremiumIncome.index()] = 100.0;
        cell[Metric::ClaimsPaid.index()] = 70.0;
        cell[Metric::ClaimsIncurred.index()] = 60.0;
        cell[Metric::UnderwritingProfit.index()] = 10.0;
        let r = cell_ratios(&cell, 400.0);
        let expected = [25.0, 70.0, 60.0, 10.0, 30.0, 90.0, 116.666_666_666_666_67];
        for (got, want) in r.iter().zip(expected) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn all_zero_cell_maps_to_zero() {
        assert_eq!(cell_ratios(&[0.0; Metric::COUNT], 0.0), [0.0; Feature::COUNT]);
        assert_eq!(cell_ratios(&[0.0; Metric::COUNT], 500.0), [0.0; Feature::COUNT]);
    }

    #[test]
    fn single_company_owns_the_market() {
        let text = "company,year,quarter,gross_premium_income,claims_paid,claims_incurred,underwriting_profit\n\
                    A,2013,1,10,1,1,1\nA,2013,2,0,0,0,0\nA,2013,3,7,1,0,1\n";
        let t = compute_ratios(&parse_panel(text, &Schema::default()).unwrap());
        assert_eq!(t.get(0, 0, Feature::MarketShare), 100.0);
        assert_eq!(t.get(0, 1, Feature::MarketShare), 0.0);
        assert_eq!(t.get(0, 2, Feature::MarketShare), 100.0);
        // claims incurred zero: payout ratio defined as zero
        assert_eq!(t.get(0, 2, Feature::ClaimsPayoutRatio), 0.0);
    }

    #[test]
    fn population_std() {
        let t = tensor_1d(&[0.0, 2.0]);
        let spec = fit_scaling(&t, ScalingMode::WithinCompany);
        assert_eq!(spec.means[0], 1.0);
        assert_eq!(spec.stds[0], 1.0);
        let s = apply_scaling(&t, &spec).unwrap();
        assert_eq!(s.get(0, 0, Feature::LossRatio), -1.0);
        assert_eq!(s.get(0, 1, Feature::LossRatio), 1.0);
    }

    #[test]
    fn constant_feature_scales_to_zero() {
        let t = tensor_1d(&[5.0, 5.0, 5.0]);
        let spec = fit_scaling(&t, ScalingMode::WithinCompany);
        assert_eq!(spec.means[3], 5.0);
        assert_eq!(spec.stds[3], 0.0);
        assert!(apply_scaling(&t, &spec).unwrap().values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn global_equals_within_for_identical_companies() {
        let a = tensor_1d(&[1.0, 4.0, 9.0]);
        let block = a.values.clone();
        let t = RatioTensor::from_series(
            vec!["A".into(), "B".into()],
            a.periods.clone(),
            &[block.clone(), block],
            Units::Percent,
        );
        let g = fit_scaling(&t, ScalingMode::Global);
        let w = fit_scaling(&t, ScalingMode::WithinCompany);
        for f in 0..Feature::COUNT {
            assert!((g.means[f] - w.means[f]).abs() < 1e-12);
            assert!((g.stds[f] - w.stds[Feature::COUNT + f]).abs() < 1e-12);
        }
    }

    #[test]
    fn mismatched_spec_rejected() {
        let t = tensor_1d(&[1.0, 2.0]);
        let mut spec = fit_scaling(&t, ScalingMode::WithinCompany);
        spec.companies.push("B".into());
        assert!(matches!(apply_scaling(&t, &spec), Err(RatioError::ShapeMismatch(_))));
        let mut spec = fit_scaling(&t, ScalingMode::Global);
        spec.features.swap(0, 1);
        assert!(apply_scaling(&t, &spec).is_err());
    }

    #[test]
    fn long_table_round_trip() {
        let t = tensor_1d(&[1.5, -2.25, 1e-7]);
        let back = RatioTensor::from_table(&t.to_table()).unwrap();
        assert_eq!(back, t);
    }
}
