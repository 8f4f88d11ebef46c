//! Learning-curve aggregation across repetitions.

use std::io::Write;

use mural_core::optimize::ObjectiveValue;

pub const HEADER: &str = "query,mean_f1,std_f1,mean_prec,std_prec,mean_rec,std_rec";

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub query: usize,
    pub mean_f1: f64,
    pub std_f1: f64,
    pub mean_prec: f64,
    pub std_prec: f64,
    pub mean_rec: f64,
    pub std_rec: f64,
}

/// Population mean and standard deviation.
fn mean_std(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    let mean = v.clone().sum::<f64>() / n;
    let var = v.map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-query mean and std over repetitions. All curves must share a length.
pub fn aggregate(curves: &[Vec<ObjectiveValue>]) -> Vec<CurveRow> {
    let len = curves.iter().map(Vec::len).min().unwrap_or(0);
    (0..len)
        .map(|q| {
            let (mean_f1, std_f1) = mean_std(curves.iter().map(|c| c[q].f1));
            let (mean_prec, std_prec) = mean_std(curves.iter().map(|c| c[q].precision));
            let (mean_rec, std_rec) = mean_std(curves.iter().map(|c| c[q].recall));
            CurveRow {
                query: q,
                mean_f1,
                std_f1,
                mean_prec,
                std_prec,
                mean_rec,
                std_rec,
            }
        })
        .collect()
}

pub fn write_csv<W: Write>(rows: &[CurveRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.query, r.mean_f1, r.std_f1, r.mean_prec, r.std_prec, r.mean_rec, r.std_rec
        )?;
    }
    Ok(())
}
