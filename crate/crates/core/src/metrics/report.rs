//! Metric report bundling and serialization.

use super::MetricError;

/// One evaluated condition: a row of the quality tables.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// The condition this row describes (clean/noisy/adversarial/enhanced...).
    pub condition: String,
    pub pesq: f64,
    pub sti: f64,
    pub stoi: f64,
    /// `f64::INFINITY` flags a zero-power perturbation.
    pub snr_db: f64,
    pub wer_pct: Option<f64>,
    pub rosa_pct: Option<f64>,
}

impl EvalReport {
    pub fn new(
        condition: impl Into<String>,
        pesq: f64,
        sti: f64,
        stoi: f64,
        snr_db: f64,
        wer_pct: Option<f64>,
        rosa_pct: Option<f64>,
    ) -> Result<Self, MetricError> {
        if !(0.0..=1.0).contains(&sti) {
            return Err(MetricError::Parameter(format!("sti {sti} outside [0,1]")));
        }
        if pesq > 4.5 {
            return Err(MetricError::Parameter(format!("pesq {pesq} above 4.5")));
        }
        Ok(EvalReport {
            condition: condition.into(),
            pesq,
            sti,
            stoi,
            snr_db,
            wer_pct,
            rosa_pct,
        })
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

fn fmt_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.4}")
    }
}

pub const REPORT_CSV_HEADER: &str = "condition,pesq,sti,stoi,snr_db,wer_pct,rosa_pct";

pub fn reports_to_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from(REPORT_CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&format!(
            "{},{:.4},{:.4},{:.4},{},{},{}\n",
            r.condition,
            r.pesq,
            r.sti,
            r.stoi,
            fmt_db(r.snr_db),
            fmt_opt(r.wer_pct),
            fmt_opt(r.rosa_pct),
        ));
    }
    out
}

pub fn reports_to_markdown(reports: &[EvalReport]) -> String {
    let header = [
        "condition", "pesq", "sti", "stoi", "snr_db", "wer_pct", "rosa_pct",
    ];
    let mut rows: Vec<[String; 7]> = vec![header.map(String::from)];
    for r in reports {
        rows.push([
            r.condition.clone(),
            format!("{:.4}", r.pesq),
            format!("{:.4}", r.sti),
            format!("{:.4}", r.stoi),
            fmt_db(r.snr_db),
            fmt_opt(r.wer_pct),
            fmt_opt(r.rosa_pct),
        ]);
    }
    let widths: Vec<usize> = (0..7)
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        out.push('|');
        for (c, cell) in row.iter().enumerate() {
            out.push_str(&format!(" {cell:<w$} |", w = widths[c]));
        }
        out.push('\n');
        if i == 0 {
            out.push('|');
            for w in &widths {
                out.push_str(&format!("{}|", "-".repeat(w + 2)));
            }
            out.push('\n');
        }
    }
    out
}
