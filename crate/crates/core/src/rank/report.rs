use std::fs;
use std::path::{Path, PathBuf};

use super::{AgreementMatrix, CorrelationKind, Ranking};
use crate::error::{Error, Result};

/// Files written by [`write_report`], relative to the report directory.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReportFiles {
    pub files: Vec<PathBuf>,
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes rankings, top-3 tables, slope-chart data and heatmaps for one
/// (dataset, architecture) cell. `matrices` pairs a reading label with its
/// agreement matrix.
pub fn write_report(dir: &Path, prefix: &str, rankings: &[Ranking], matrices: &[(&str, &AgreementMatrix)]) -> Result<ReportFiles> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    let mut emit = |name: String, header: &[&str], rows: Vec<Vec<String>>| -> Result<()> {
        write_csv(&dir.join(&name), header, &rows)?;
        files.push(PathBuf::from(name));
        Ok(())
    };

    let mut rank_rows = Vec::new();
    let mut top_rows = Vec::new();
    for r in rankings {
        for (i, (c, s)) in r.candidates.iter().zip(&r.scores).enumerate() {
            let row = vec![r.metric.to_string(), i.to_string(), c.clone(), s.to_string()];
            if i < 3 {
                top_rows.push(row.clone());
            }
            rank_rows.push(row);
        }
    }
    emit(format!("{prefix}_rankings.csv"), &["metric", "ranking", "candidate", "score"], rank_rows)?;
    emit(format!("{prefix}_top3.csv"), &["metric", "ranking", "candidate", "score"], top_rows)?;

    for i in 0..rankings.len() {
        for j in i + 1..rankings.len() {
            let (a, b) = (&rankings[i], &rankings[j]);
            let mut names = a.candidates.clone();
            names.sort();
            let rows = names
                .iter()
                .map(|n| {
                    let ra = a.position(n).ok_or_else(|| Error::Precondition(format!("{n} missing under {}", a.metric)))?;
                    let rb = b.position(n).ok_or_else(|| Error::Precondition(format!("{n} missing under {}", b.metric)))?;
                    Ok(vec![n.clone(), ra.to_string(), rb.to_string(), (rb as i64 - ra as i64).to_string()])
                })
                .collect::<Result<Vec<_>>>()?;
            let ha = format!("rank_{}", a.metric);
            let hb = format!("rank_{}", b.metric);
            emit(
                format!("{prefix}_slope_{}_{}.csv", a.metric, b.metric),
                &["candidate", &ha, &hb, "delta"],
                rows,
            )?;
        }
    }

    for (label, m) in matrices {
        for kind in CorrelationKind::ALL {
            let mat = m.get(kind);
            let mut header = vec!["metric".to_string()];
            header.extend(m.metrics.iter().map(|x| x.to_string()));
            let rows = m
                .metrics
                .iter()
                .enumerate()
                .map(|(i, x)| {
                    let mut row = vec![x.to_string()];
                    row.extend((0..m.metrics.len()).map(|j| mat[[i, j]].to_string()));
                    row
                })
                .collect();
            let hdr: Vec<&str> = header.iter().map(String::as_str).collect();
            emit(format!("{prefix}_heatmap_{kind}_{label}.csv"), &hdr, rows)?;
        }
    }
    Ok(ReportFiles { files })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::Metric;
    use crate::rank::agreement;

    #[test]
    fn bundle_contents() {
        let names: Vec<String> = (0..13).map(|i| format!("c{i:02}")).collect();
        let mk = |metric, f: &dyn Fn(usize) -> f64| Ranking {
            metric,
            candidates: names.clone(),
            scores: (0..13).map(f).collect(),
        };
        let rs = vec![
            mk(Metric::Pgi, &|i| 13.0 - i as f64),
            mk(Metric::Abc, &|i| i as f64),
            mk(Metric::Bnd, &|i| i as f64),
        ];
        let a = agreement(&rs).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = write_report(dir.path(), "synthetic_dense3", &rs, &[("mean_rank", &a)]).unwrap();
        assert_eq!(out.files.len(), 2 + 3 + 3);
        let slope = fs::read_to_string(dir.path().join("synthetic_dense3_slope_pgi_abc.csv")).unwrap();
        let lines: Vec<&str> = slope.lines().collect();
        assert_eq!(lines.len(), 14);
        assert!(lines[1..].iter().all(|l| l.ends_with(",0")));
        let top = fs::read_to_string(dir.path().join("synthetic_dense3_top3.csv")).unwrap();
        let ranks: Vec<&str> = top.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
        assert_eq!(ranks, vec!["0", "1", "2", "0", "1", "2", "0", "1", "2"]);
    }
}
