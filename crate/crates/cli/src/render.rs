//! P@1 tables over many evaluation reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use anyhow::Result;
use clsd_core::evaluator::{EvalMode, EvalReport};
use clsd_core::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub mode: EvalMode,
    pub model_id: String,
    pub dataset_id: String,
    pub p_at_1: f64,
}

/// P@1 per (mode, model, dataset), in mode-model-dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    rows: Vec<Row>,
}

fn mode_rank(mode: EvalMode) -> u8 {
    match mode {
        EvalMode::Direct => 0,
        EvalMode::Pivot => 1,
    }
}

fn pct(p: f64) -> String {
    format!("{:.2}", 100.0 * p)
}

impl ReportTable {
    /// Identical duplicates collapse into one row; duplicates that disagree
    /// on P@1 are an error.
    pub fn build(reports: &[EvalReport]) -> Result<Self> {
        if reports.is_empty() {
            return Err(Error::InvalidInput("no reports given".into()).into());
        }
        let mut cells: BTreeMap<(u8, String, String), (EvalMode, f64)> = BTreeMap::new();
        for r in reports {
            let key = (mode_rank(r.mode), r.model_id.clone(), r.dataset_id.clone());
            if let Some((_, prev)) = cells.get(&key) {
                if (prev - r.p_at_1).abs() > 1e-9 {
                    return Err(Error::InvalidInput(format!(
                        "conflicting reports for model {} on {} ({}): {} vs {}",
                        r.model_id, r.dataset_id, r.mode, prev, r.p_at_1
                    ))
                    .into());
                }
                continue;
            }
            cells.insert(key, (r.mode, r.p_at_1));
        }
        let rows = cells
            .into_iter()
            .map(|((_, model_id, dataset_id), (mode, p_at_1))| Row {
                mode,
                model_id,
                dataset_id,
                p_at_1,
            })
            .collect();
        Ok(ReportTable { rows })
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    fn modes(&self) -> Vec<EvalMode> {
        let mut modes: Vec<EvalMode> = Vec::new();
        for r in &self.rows {
            if !modes.contains(&r.mode) {
                modes.push(r.mode);
            }
        }
        modes
    }

    fn block(&self, mode: EvalMode) -> impl Iterator<Item = &Row> {
        self.rows.iter().filter(move |r| r.mode == mode)
    }

    /// Mean P@1 of one model over the datasets it was scored on in `mode`.
    pub fn average(&self, mode: EvalMode, model_id: &str) -> Option<f64> {
        let ps: Vec<f64> = self
            .block(mode)
            .filter(|r| r.model_id == model_id)
            .map(|r| r.p_at_1)
            .collect();
        (!ps.is_empty()).then(|| ps.iter().sum::<f64>() / ps.len() as f64)
    }

    /// One table per mode: models as rows, datasets as columns, then Average.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        for (i, mode) in self.modes().into_iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            let datasets: BTreeSet<&str> =
                self.block(mode).map(|r| r.dataset_id.as_str()).collect();
            let models: BTreeSet<&str> = self.block(mode).map(|r| r.model_id.as_str()).collect();
            let _ = writeln!(out, "### {mode}\n");
            out.push_str("| Model |");
            for d in &datasets {
                let _ = write!(out, " {d} |");
            }
            out.push_str(" Average |\n|---|");
            out.push_str(&"---:|".repeat(datasets.len() + 1));
            out.push('\n');
            for m in &models {
                let _ = write!(out, "| {m} |");
                for d in &datasets {
                    let cell = self
                        .block(mode)
                        .find(|r| r.model_id == *m && r.dataset_id == *d)
                        .map_or_else(|| "-".to_string(), |r| pct(r.p_at_1));
                    let _ = write!(out, " {cell} |");
                }
                let avg = self.average(mode, m).expect("model has rows");
                let _ = writeln!(out, " {} |", pct(avg));
            }
        }
        out
    }

    /// Long format, one line per cell, with the model's average repeated.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "mode",
            "model_id",
            "dataset_id",
            "p_at_1_pct",
            "average_pct",
        ])?;
        for r in &self.rows {
            let avg = self.average(r.mode, &r.model_id).expect("row exists");
            w.write_record([
                r.mode.to_string(),
                r.model_id.clone(),
                r.dataset_id.clone(),
                pct(r.p_at_1),
                pct(avg),
            ])?;
        }
        Ok(w.into_inner().map_err(|e| e.into_error())?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(model: &str, dataset: &str, mode: EvalMode, p: f64) -> EvalReport {
        EvalReport {
            dataset_id: dataset.into(),
            backend_id: "b".into(),
            model_id: model.into(),
            mode,
            n: 1,
            p_at_1: p,
            results: Vec::new(),
        }
    }

    #[test]
    fn four_dataset_average() {
        let reports: Vec<EvalReport> = [
            ("wmt19-de", 0.9518),
            ("wmt19-fr", 0.9430),
            ("wmt21-de", 0.9406),
            ("wmt21-fr", 0.9418),
        ]
        .iter()
        .map(|(d, p)| report("labse", d, EvalMode::Direct, *p))
        .collect();
        let table = ReportTable::build(&reports).unwrap();
        assert_eq!(
            pct(table.average(EvalMode::Direct, "labse").unwrap()),
            "94.43"
        );
        let md = table.to_markdown();
        assert!(
            md.contains("| labse | 95.18 | 94.30 | 94.06 | 94.18 | 94.43 |"),
            "{md}"
        );
    }

    #[test]
    fn single_report_average_is_itself() {
        let table = ReportTable::build(&[report("m", "d", EvalMode::Pivot, 0.5)]).unwrap();
        let csv = String::from_utf8(table.to_csv().unwrap()).unwrap();
        assert_eq!(
            csv,
            "mode,model_id,dataset_id,p_at_1_pct,average_pct\npivot,m,d,50.00,50.00\n"
        );
    }

    #[test]
    fn conflicting_duplicates_fail() {
        let a = report("m", "d", EvalMode::Direct, 0.5);
        let b = report("m", "d", EvalMode::Direct, 0.6);
        assert!(ReportTable::build(&[a.clone(), a.clone()]).is_ok());
        assert!(ReportTable::build(&[a, b]).is_err());
    }

    #[test]
    fn direct_block_comes_first() {
        let table = ReportTable::build(&[
            report("m", "d", EvalMode::Pivot, 0.5),
            report("m", "d", EvalMode::Direct, 0.7),
        ])
        .unwrap();
        let md = table.to_markdown();
        assert!(md.find("### direct").unwrap() < md.find("### pivot").unwrap());
        assert!(md.contains("|---|---:|---:|"));
    }
}
