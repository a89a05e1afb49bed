//! Plot-ready CSV tables.

use std::fmt::Write;

use pqcexpr_core::dataset::{CorrelationMatrix, KlHistogram, MinMaxScaling, COUNT_KINDS};
use pqcexpr_core::shap::{saturation_profile, QuartileMeans, ShapSummary};
use pqcexpr_core::GateKind;

use crate::model_file::FEATURE_NAMES;

/// Written for correlation entries that are undefined.
pub const NA: &str = "NA";

fn column(kind: GateKind) -> String {
    kind.name().to_ascii_lowercase()
}

/// 7×7 gate-count correlation table with a leading `gate` column.
pub fn correlation_csv(m: &CorrelationMatrix) -> String {
    let mut out = String::from("gate");
    for k in COUNT_KINDS {
        write!(out, ",{}", column(k)).unwrap();
    }
    out.push('\n');
    for (i, a) in COUNT_KINDS.into_iter().enumerate() {
        out.push_str(&column(a));
        for j in 0..COUNT_KINDS.len() {
            match m.entries[i][j] {
                Some(r) => write!(out, ",{r}").unwrap(),
                None => write!(out, ",{NA}").unwrap(),
            }
        }
        out.push('\n');
    }
    out
}

/// `bin_lo,bin_hi,<variant>...` with one count column per variant.
pub fn histogram_csv(histograms: &[KlHistogram], names: &[&str]) -> String {
    let mut out = String::from("bin_lo,bin_hi");
    for n in names {
        write!(out, ",{n}").unwrap();
    }
    out.push('\n');
    let n_bins = histograms.iter().map(|h| h.counts.len()).max().unwrap_or(0);
    let width = histograms.first().map_or(0.0, |h| h.bin_width);
    for b in 0..n_bins {
        write!(out, "{},{}", b as f64 * width, (b + 1) as f64 * width).unwrap();
        for h in histograms {
            write!(out, ",{}", h.counts.get(b).copied().unwrap_or(0)).unwrap();
        }
        out.push('\n');
    }
    out
}

/// `feature,mean_abs_phi,mean_phi`, most important feature first.
pub fn importance_csv(summary: &ShapSummary) -> String {
    let mut out = String::from("feature,mean_abs_phi,mean_phi\n");
    for j in summary.ranking() {
        let f = &summary.features[j];
        writeln!(out, "{},{},{}", FEATURE_NAMES[j], f.mean_abs_phi, f.mean_phi).unwrap();
    }
    out
}

/// `feature,normalized_value,phi`, one row per feature and instance.
pub fn beeswarm_csv(summary: &ShapSummary) -> String {
    let mut out = String::from("feature,normalized_value,phi\n");
    for (j, f) in summary.features.iter().enumerate() {
        for (v, p) in &f.pairs {
            writeln!(out, "{},{v},{p}", FEATURE_NAMES[j]).unwrap();
        }
    }
    out
}

/// `gate_count,phi` for feature `j`, counts recovered from the scaling.
pub fn dependence_csv(summary: &ShapSummary, scaling: &MinMaxScaling, j: usize) -> String {
    let mut out = String::from("gate_count,phi\n");
    for (v, p) in &summary.features[j].pairs {
        writeln!(out, "{},{p}", scaling.inverse(j, *v).round()).unwrap();
    }
    out
}

/// Quartile means of φ against raw gate counts for the rotation features.
pub fn saturation_report(summary: &ShapSummary) -> Vec<(&'static str, Option<QuartileMeans>)> {
    [GateKind::Rx, GateKind::Ry, GateKind::Rz]
        .into_iter()
        .map(|k| {
            let j = FEATURE_NAMES.iter().position(|n| *n == column(k)).expect("rotation feature");
            (FEATURE_NAMES[j], saturation_profile(&summary.features[j].pairs))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use pqcexpr_core::dataset::correlation_from_counts;
    use pqcexpr_core::shap::FeatureSummary;

    #[test]
    fn correlation_uses_sentinel() {
        let rows = [[1, 2, 0, 0, 1, 5, 0], [2, 4, 0, 0, 0, 3, 0], [3, 7, 0, 0, 1, 1, 0]];
        let text = correlation_csv(&correlation_from_counts(&rows).unwrap());
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "gate,rx,ry,rz,frz,h,cnot,cz");
        assert!(lines[1].starts_with("rx,1,"));
        assert_eq!(lines[3], "rz,NA,NA,NA,NA,NA,NA,NA");
        assert_eq!(lines.len(), 8);
    }

    #[test]
    fn histogram_layout() {
        let h = [KlHistogram { bin_width: 0.5, counts: vec![3, 1] }, KlHistogram { bin_width: 0.5, counts: vec![2, 0] }];
        assert_eq!(histogram_csv(&h, &["a", "b"]), "bin_lo,bin_hi,a,b\n0,0.5,3,2\n0.5,1,1,0\n");
    }

    #[test]
    fn shap_tables() {
        let feature = |m: f64| FeatureSummary { mean_abs_phi: m, mean_phi: -m, pairs: vec![(0.5, -m)] };
        let summary = ShapSummary { features: (0..6).map(|j| feature(j as f64)).collect() };
        let imp = importance_csv(&summary);
        assert_eq!(imp.lines().nth(1), Some("cz,5,-5"));
        assert_eq!(beeswarm_csv(&summary).lines().count(), 7);
        let scaling = MinMaxScaling::fit(&[[0.0; 6], [10.0; 6]]);
        assert_eq!(dependence_csv(&summary, &scaling, 4), "gate_count,phi\n5,-4\n");
        assert!(saturation_report(&summary).iter().all(|(_, q)| q.is_none()));
    }
}
