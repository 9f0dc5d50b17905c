use serde::{Deserialize, Serialize};

use super::Metrics;
use crate::dataset::Regime;
use crate::nn::{ArchFamily, Hyperparams};

/// One trained detector as it appears in the report tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub family: ArchFamily,
    pub regime: Regime,
    pub hyper: Hyperparams,
    pub metrics: Metrics,
}

impl ResultRow {
    pub fn label(&self) -> String {
        let r = match self.regime {
            Regime::Attack5 => "5-Attack",
            Regime::Attack10 => "10-Attack",
        };
        let f = match self.family {
            ArchFamily::Lstm => "LSTM",
            ArchFamily::ConvLstm => "ConvLSTM",
        };
        format!("{f} {r}")
    }
}

fn render(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (i, c) in r.iter().enumerate() {
            w[i] = w[i].max(c.len());
        }
    }
    let line = |cells: &[String]| {
        let s: Vec<String> = cells.iter().enumerate().map(|(i, c)| format!("{:<w$}", c, w = w[i])).collect();
        format!("| {} |\n", s.join(" | "))
    };
    let mut out = line(&header.iter().map(|h| h.to_string()).collect::<Vec<_>>());
    out.push_str(&format!("|{}|\n", w.iter().map(|n| "-".repeat(n + 2)).collect::<Vec<_>>().join("|")));
    for r in rows {
        out.push_str(&line(r));
    }
    out
}

fn dash_if_zero(v: usize) -> String {
    if v == 0 {
        "-".into()
    } else {
        v.to_string()
    }
}

/// Selected hyperparameters per detector.
pub fn hyperparameter_table(rows: &[ResultRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let h = &r.hyper;
            vec![
                r.label(),
                format!("{:.4}", h.learning_rate),
                format!("{:.2}", h.dropout),
                h.batch_size.to_string(),
                h.epochs.to_string(),
                dash_if_zero(h.units1),
                dash_if_zero(h.units2),
                dash_if_zero(h.units3),
                dash_if_zero(h.filters1),
                dash_if_zero(h.kernel1),
                dash_if_zero(h.filters2),
                dash_if_zero(h.kernel2),
            ]
        })
        .collect();
    render(
        &["Model", "LR", "Dropout", "Batch", "Epochs", "Units1", "Units2", "Units3", "Filters1", "Kernel1", "Filters2", "Kernel2"],
        &body,
    )
}

/// Accuracy, precision, recall and F-measure in percent.
pub fn score_table(rows: &[ResultRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let m = &r.metrics;
            vec![
                r.label(),
                format!("{:.2}", m.accuracy),
                format!("{:.2}", m.precision),
                format!("{:.2}", m.recall),
                format!("{:.2}", m.f_measure),
            ]
        })
        .collect();
    render(&["Model", "Accuracy %", "Precision %", "Recall %", "F-measure %"], &body)
}

pub fn confusion_table(rows: &[ResultRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let c = &r.metrics.confusion;
            vec![r.label(), c.tp.to_string(), c.fp.to_string(), c.tn.to_string(), c.fn_.to_string()]
        })
        .collect();
    render(&["Model", "TP", "FP", "TN", "FN"], &body)
}

/// Wall-clock numbers; these vary between machines and runs.
pub fn timing_table(rows: &[ResultRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.label(),
                format!("{:.2}", r.metrics.training_time_s),
                format!("{:.3}", r.metrics.mean_prediction_time_s * 1000.0),
            ]
        })
        .collect();
    render(&["Model", "Training time (s)", "Prediction time (ms/sample)"], &body)
}

pub fn all_tables(rows: &[ResultRow]) -> String {
    format!(
        "Selected hyperparameters\n{}\nDetection scores\n{}\nConfusion matrices\n{}\nTiming\n{}",
        hyperparameter_table(rows),
        score_table(rows),
        confusion_table(rows),
        timing_table(rows)
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tuner::Confusion;

    #[test]
    fn renders_all_rows() {
        let rows = vec![
            ResultRow {
                family: ArchFamily::Lstm,
                regime: Regime::Attack5,
                hyper: Hyperparams::table_lstm_attack5(),
                metrics: Metrics::from_confusion(Confusion { tp: 199, fp: 0, tn: 200, fn_: 1 }),
            },
            ResultRow {
                family: ArchFamily::ConvLstm,
                regime: Regime::Attack10,
                hyper: Hyperparams::table_conv_attack10(),
                metrics: Metrics::from_confusion(Confusion { tp: 200, fp: 0, tn: 200, fn_: 0 }),
            },
        ];
        let t = all_tables(&rows);
        assert!(t.contains("LSTM 5-Attack"));
        assert!(t.contains("ConvLSTM 10-Attack"));
        assert!(t.contains("| 199 "));
        assert!(score_table(&rows).contains("100.00"));
        assert_eq!(confusion_table(&rows).lines().count(), 4);
    }
}
