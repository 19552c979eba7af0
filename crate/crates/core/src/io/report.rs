use crate::recognition::CmcReport;
use crate::train::EpochRecord;

pub fn format_history(history: &[EpochRecord]) -> String {
    let mut out = format!("{}\n", EpochRecord::CSV_HEADER);
    for r in history {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// `probe_id,true_label` followed by the top five identities and their similarities.
pub fn format_probe_report(report: &CmcReport, probe_ids: &[String]) -> String {
    let mut out = String::from("probe_id,true_label,rank");
    for k in 1..=5 {
        out.push_str(&format!(",pred_{k},sim_{k}"));
    }
    out.push('\n');
    for p in &report.probes {
        let id = probe_ids.get(p.probe).cloned().unwrap_or_else(|| p.probe.to_string());
        out.push_str(&format!("{id},{},{}", p.true_label, p.rank));
        for k in 0..5 {
            match p.ranking.get(k) {
                Some((label, sim)) => out.push_str(&format!(",{label},{sim}")),
                None => out.push_str(",,"),
            }
        }
        out.push('\n');
    }
    out
}

pub fn format_cmc_curve(report: &CmcReport) -> String {
    let mut out = String::from("rank,accuracy\n");
    for (k, v) in report.curve.iter().enumerate() {
        out.push_str(&format!("{},{v}\n", k + 1));
    }
    out
}

/// One evaluation setting: probe truncation (`None` for full length) and extension.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub truncate: Option<usize>,
    pub extend: usize,
    pub probes: usize,
    pub rank1: f64,
    pub rank5: f64,
}

pub fn format_summary(rows: &[SummaryRow]) -> String {
    let mut out = String::from("truncate,extend,probes,rank_1,rank_5\n");
    for r in rows {
        let t = r.truncate.map(|v| v.to_string()).unwrap_or_else(|| "full".into());
        out.push_str(&format!("{t},{},{},{},{}\n", r.extend, r.probes, r.rank1, r.rank5));
    }
    out
}

/// Smooth-L1 error of each forecast frame against ground truth.
pub fn format_forecast_errors(start_frame: usize, errors: &[f64]) -> String {
    let mut out = String::from("frame,smooth_l1\n");
    for (i, e) in errors.iter().enumerate() {
        out.push_str(&format!("{},{e}\n", start_frame + i));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn history_has_specified_columns() {
        let text = format_history(&[EpochRecord::default(), EpochRecord { epoch: 1, total: 0.5, ..Default::default() }]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "epoch,l_recons,l_linearity,l_recons_rec,l_triplet_shape,l_triplet_motion,l_triplet_gait,l_id,l_soft,total");
        assert_eq!(lines.len(), 3);
        assert!(lines[2].starts_with("1,") && lines[2].ends_with(",0.5"));
    }

    #[test]
    fn summary_rows() {
        let text = format_summary(&[SummaryRow { truncate: Some(20), extend: 40, probes: 40, rank1: 0.9, rank5: 1.0 }]);
        assert_eq!(text.lines().nth(1), Some("20,40,40,0.9,1"));
    }
}
