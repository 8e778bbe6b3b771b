//! Regression metrics, order ablation and contribution analysis.

use crate::error::{MmffError, Result};
use crate::fusion::{fuse_values, OrderWeights};

pub const METRICS_HEADER: &str = "samples,ccc,rmse,mae,pearson";
pub const TRACE_HEADER: &str =
    "iter,g1,g2,g3,g1_t,g1_a,g1_v,g2_t,g2_a,g2_v,g3_t,g3_a,g3_v,gm_t,gm_a,gm_v";

/// Agreement between labels and predictions.
///
/// `ccc` is `None` when its denominator vanishes and `pearson` is `None` when
/// either series is constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub samples: usize,
    pub ccc: Option<f64>,
    pub rmse: f64,
    pub mae: f64,
    pub pearson: Option<f64>,
}

impl MetricsReport {
    /// One CSV row matching [`METRICS_HEADER`]; undefined values are `NA`.
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
        format!(
            "{},{},{},{},{}",
            self.samples,
            opt(self.ccc),
            self.rmse,
            self.mae,
            opt(self.pearson)
        )
    }

    pub fn to_csv(&self) -> String {
        format!("{METRICS_HEADER}\n{}\n", self.csv_row())
    }
}

/// Lin's concordance, RMSE, MAE and Pearson correlation with population
/// (divide by `n`) moments.
pub fn compute_metrics(y: &[f64], y_hat: &[f64]) -> Result<MetricsReport> {
    if y.is_empty() || y.len() != y_hat.len() {
        return Err(MmffError::dim(
            "compute_metrics",
            format!("{} labels vs {} predictions", y.len(), y_hat.len()),
        ));
    }
    if y.iter().chain(y_hat).any(|v| !v.is_finite()) {
        return Err(MmffError::Numeric("non-finite label or prediction".into()));
    }
    let n = y.len() as f64;
    let mu_y = y.iter().sum::<f64>() / n;
    let mu_p = y_hat.iter().sum::<f64>() / n;
    let (mut var_y, mut var_p, mut cov, mut sq, mut abs) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&a, &b) in y.iter().zip(y_hat) {
        var_y += (a - mu_y) * (a - mu_y);
        var_p += (b - mu_p) * (b - mu_p);
        cov += (a - mu_y) * (b - mu_p);
        sq += (b - a) * (b - a);
        abs += (b - a).abs();
    }
    var_y /= n;
    var_p /= n;
    cov /= n;
    let denom = var_p + var_y + (mu_p - mu_y) * (mu_p - mu_y);
    let ccc = (denom > 0.0).then(|| 2.0 * cov / denom);
    let pearson = (var_y > 0.0 && var_p > 0.0).then(|| (cov / (var_y.sqrt() * var_p.sqrt())).clamp(-1.0, 1.0));
    Ok(MetricsReport {
        samples: y.len(),
        ccc,
        rmse: (sq / n).sqrt(),
        mae: abs / n,
        pearson,
    })
}

/// Retained orders (1-based, ascending) with their renormalized weights.
/// `weights[k]` is zero for every dropped order.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationSpec {
    pub retained: Vec<usize>,
    pub weights: [f64; 3],
}

/// Parse an order subset such as `1,3`.
pub fn parse_orders(text: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in text.split(',') {
        let k: usize = part
            .trim()
            .parse()
            .map_err(|_| MmffError::Usage(format!("invalid order `{}` in `{text}`", part.trim())))?;
        if !(1..=3).contains(&k) {
            return Err(MmffError::Usage(format!("orders must be 1, 2 or 3, got {k}")));
        }
        if !out.contains(&k) {
            out.push(k);
        }
    }
    out.sort_unstable();
    Ok(out)
}

/// Every nonempty subset of `{1, 2, 3}`.
pub fn all_order_subsets() -> Vec<Vec<usize>> {
    (1u8..8)
        .map(|mask| (1..=3).filter(|k| mask & (1 << (k - 1)) != 0).collect())
        .collect()
}

pub fn subset_label(orders: &[usize]) -> String {
    orders.iter().map(usize::to_string).collect::<Vec<_>>().join("+")
}

/// Redistribute the order weights over the retained subset.
pub fn ablate_orders(gamma: &[f64; 3], retained: &[usize]) -> Result<AblationSpec> {
    if retained.is_empty() {
        return Err(MmffError::Usage("order subset must be nonempty".into()));
    }
    let mut keep = retained.to_vec();
    keep.sort_unstable();
    keep.dedup();
    if let Some(&k) = keep.iter().find(|&&k| !(1..=3).contains(&k)) {
        return Err(MmffError::Usage(format!("orders must be 1, 2 or 3, got {k}")));
    }
    let total: f64 = keep.iter().map(|&k| gamma[k - 1]).sum();
    if total <= 0.0 {
        return Err(MmffError::Numeric(format!(
            "degenerate weights: retained orders {} carry zero total weight",
            subset_label(&keep)
        )));
    }
    let mut weights = [0.0; 3];
    for &k in &keep {
        weights[k - 1] = gamma[k - 1] / total;
    }
    Ok(AblationSpec {
        retained: keep,
        weights,
    })
}

/// `sum over retained k of weights[k] * v_k`.
pub fn ablated_fuse(orders: &[Vec<f64>; 3], spec: &AblationSpec) -> Result<Vec<f64>> {
    fuse_values(orders, &spec.weights)
}

/// Per-order modality weights, order weights and their aggregate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContributionReport {
    pub per_order: [[f64; 3]; 3],
    pub order: [f64; 3],
    /// `gamma_mod = sum_k gamma_k gamma^k_mod`.
    pub aggregate: [f64; 3],
}

pub fn aggregate_contributions(weights: &OrderWeights) -> ContributionReport {
    let mut aggregate = [0.0; 3];
    for (gamma, row) in weights.order.iter().zip(&weights.per_order) {
        for (a, w) in aggregate.iter_mut().zip(row) {
            *a += gamma * w;
        }
    }
    ContributionReport {
        per_order: weights.per_order,
        order: weights.order,
        aggregate,
    }
}

impl ContributionReport {
    /// Trace-style CSV with one row labelled by `iter`.
    pub fn csv_row(&self, iter: usize) -> String {
        let mut fields = vec![iter.to_string()];
        fields.extend(self.order.iter().map(f64::to_string));
        for row in &self.per_order {
            fields.extend(row.iter().map(f64::to_string));
        }
        fields.extend(self.aggregate.iter().map(f64::to_string));
        fields.join(",")
    }
}

/// Rows of the weight trace: one per logging interval, labelled by epoch
/// number (1-based). The final epoch is always logged.
pub fn trace_contributions(epoch_weights: &[OrderWeights], interval: usize) -> Vec<(usize, ContributionReport)> {
    let interval = interval.max(1);
    let n = epoch_weights.len();
    epoch_weights
        .iter()
        .enumerate()
        .filter(|(e, _)| (e + 1) % interval == 0 || e + 1 == n)
        .map(|(e, w)| (e + 1, aggregate_contributions(w)))
        .collect()
}

pub fn trace_csv(rows: &[(usize, ContributionReport)]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for (iter, r) in rows {
        out.push_str(&r.csv_row(*iter));
        out.push('\n');
    }
    out
}
