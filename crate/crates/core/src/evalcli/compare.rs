use std::fmt::Write as _;

use super::report::ReportSummary;
use crate::{Error, Result};

pub const COMPARE_HEADER: &str = "report,dataset,labelmap3,n,acc7,acc3,nme";

/// Two reports on the same data, side by side, with `a - b` deltas.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub a: ReportSummary,
    pub b: ReportSummary,
}

/// Pairs two reports. They must describe the same dataset under the same 3-class
/// convention.
pub fn compare(a: ReportSummary, b: ReportSummary) -> Result<Comparison> {
    if a.dataset != b.dataset || a.n != b.n {
        return Err(Error::invalid(format!(
            "reports cover different datasets ({} with {} samples vs {} with {})",
            a.dataset, a.n, b.dataset, b.n
        )));
    }
    if a.label_map != b.label_map {
        return Err(Error::invalid(format!(
            "reports use different label maps ({} vs {})",
            a.label_map, b.label_map
        )));
    }
    Ok(Comparison { a, b })
}

impl Comparison {
    /// `(acc7, acc3, nme)` differences, `a - b`.
    pub fn deltas(&self) -> [f64; 3] {
        [
            self.a.acc7 - self.b.acc7,
            self.a.acc3 - self.b.acc3,
            self.a.nme - self.b.nme,
        ]
    }

    pub fn text(&self) -> String {
        let width = self.a.name.len().max(self.b.name.len()).max("delta".len());
        let mut s = format!(
            "dataset {} ({} samples, {})\n",
            self.a.dataset, self.a.n, self.a.label_map
        );
        let _ = writeln!(
            s,
            "{:<width$}  {:>10}  {:>10}  {:>10}",
            "report", "acc7", "acc3", "nme"
        );
        for r in [&self.a, &self.b] {
            let _ = writeln!(
                s,
                "{:<width$}  {:>10.6}  {:>10.6}  {:>10.6}",
                r.name, r.acc7, r.acc3, r.nme
            );
        }
        let [d7, d3, dn] = self.deltas();
        let _ = writeln!(
            s,
            "{:<width$}  {:>+10.6}  {:>+10.6}  {:>+10.6}",
            "delta", d7, d3, dn
        );
        s
    }

    pub fn csv(&self) -> String {
        let mut s = format!("{COMPARE_HEADER}\n");
        for r in [&self.a, &self.b] {
            let _ = writeln!(
                s,
                "{},{},{},{},{:.6},{:.6},{:.6}",
                r.name, r.dataset, r.label_map, r.n, r.acc7, r.acc3, r.nme
            );
        }
        let [d7, d3, dn] = self.deltas();
        let _ = writeln!(
            s,
            "delta,{},{},{},{d7:+.6},{d3:+.6},{dn:+.6}",
            self.a.dataset, self.a.label_map, self.a.n
        );
        s
    }
}
