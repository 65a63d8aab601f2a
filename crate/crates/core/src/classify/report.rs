use std::fmt::Write as _;

use super::{ClassifierKind, EvalReport};

#[derive(Clone, Debug, PartialEq)]
pub struct ReportCell {
    pub kind: ClassifierKind,
    pub alpha: usize,
    pub report: EvalReport,
}

/// Classifier-by-kernel-size accuracy table.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReportGrid {
    pub title: String,
    /// `split70` or `cv5`-style evaluation tag.
    pub mode: String,
    pub cells: Vec<ReportCell>,
}

impl ReportGrid {
    pub fn new(title: impl Into<String>, mode: impl Into<String>) -> Self {
        ReportGrid {
            title: title.into(),
            mode: mode.into(),
            cells: Vec::new(),
        }
    }

    pub fn push(&mut self, kind: ClassifierKind, alpha: usize, report: EvalReport) {
        self.cells.push(ReportCell {
            kind,
            alpha,
            report,
        });
    }

    fn kinds(&self) -> Vec<ClassifierKind> {
        let mut out: Vec<ClassifierKind> = Vec::new();
        for c in &self.cells {
            if !out.contains(&c.kind) {
                out.push(c.kind);
            }
        }
        out
    }

    fn alphas(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.cells.iter().map(|c| c.alpha).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn get(&self, kind: ClassifierKind, alpha: usize) -> Option<&EvalReport> {
        self.cells
            .iter()
            .find(|c| c.kind == kind && c.alpha == alpha)
            .map(|c| &c.report)
    }

    /// One row per (classifier, kernel size).
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "comparison,mode,classifier,alpha,kernel,accuracy,mean_accuracy,n_test,fold_accuracies\n",
        );
        for c in &self.cells {
            let side = 2 * c.alpha + 1;
            let folds: Vec<String> = c
                .report
                .fold_accuracies
                .iter()
                .map(|a| format!("{a:.6}"))
                .collect();
            let _ = writeln!(
                out,
                "{},{},{},{},{side}x{side},{:.6},{:.6},{},{}",
                self.title,
                self.mode,
                c.kind,
                c.alpha,
                c.report.accuracy,
                c.report.mean_accuracy,
                c.report.total(),
                folds.join(";")
            );
        }
        out
    }

    /// Mean accuracies in percent, classifiers down, kernel sizes across.
    pub fn to_text(&self) -> String {
        let alphas = self.alphas();
        let mut out = format!("{} ({})\n", self.title, self.mode);
        let _ = write!(out, "{:<18}", "Classifier");
        for a in &alphas {
            let side = 2 * a + 1;
            let _ = write!(out, "{:>10}", format!("{side}x{side}"));
        }
        out.push('\n');
        out.push_str(&"-".repeat(18 + 10 * alphas.len()));
        out.push('\n');
        for kind in self.kinds() {
            let _ = write!(out, "{:<18}", kind.display_name());
            for &a in &alphas {
                let cell = self.get(kind, a).map_or("-".to_string(), |r| {
                    format!("{:.2}", 100.0 * r.mean_accuracy)
                });
                let _ = write!(out, "{cell:>10}");
            }
            out.push('\n');
        }
        out
    }
}
