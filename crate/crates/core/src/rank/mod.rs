//! Rankings of candidate explanations and agreement between metrics.

mod correlation;
mod report;

use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{Direction, Metric, MetricScore};

pub use correlation::{average_ranks, kendall, spearman, weighted_kendall, CorrelationKind};
pub use report::{write_report, ReportFiles};

/// Candidates ordered from most to least faithful under one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub metric: Metric,
    pub candidates: Vec<String>,
    /// Repeat-averaged raw score, aligned with `candidates`.
    pub scores: Vec<f64>,
}

impl Ranking {
    pub fn direction(&self) -> Direction {
        self.metric.direction()
    }

    pub fn position(&self, candidate: &str) -> Option<usize> {
        self.candidates.iter().position(|c| c == candidate)
    }

    /// Direction-adjusted scores (larger = better) in the order of `names`.
    pub fn adjusted(&self, names: &[String]) -> Result<Vec<f64>> {
        names
            .iter()
            .map(|n| {
                self.position(n)
                    .map(|p| self.direction().adjust(self.scores[p]))
                    .ok_or_else(|| Error::Precondition(format!("candidate {n} missing from the {} ranking", self.metric)))
            })
            .collect()
    }

    fn from_means(metric: Metric, means: BTreeMap<String, f64>) -> Self {
        let dir = metric.direction();
        let mut items: Vec<(String, f64)> = means.into_iter().collect();
        items.sort_by(|a, b| {
            dir.adjust(b.1)
                .partial_cmp(&dir.adjust(a.1))
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.0.cmp(&b.0))
        });
        Ranking {
            metric,
            candidates: items.iter().map(|i| i.0.clone()).collect(),
            scores: items.iter().map(|i| i.1).collect(),
        }
    }
}

/// Checks the scores cover one metric and a full candidate × repeat grid.
fn grid_of(scores: &[MetricScore]) -> Result<(Metric, BTreeMap<String, BTreeMap<usize, f64>>)> {
    let first = scores.first().ok_or_else(|| Error::IncompleteGrid("no scores".into()))?;
    let metric = first.metric;
    let mut grid: BTreeMap<String, BTreeMap<usize, f64>> = BTreeMap::new();
    for s in scores {
        if s.metric != metric {
            return Err(Error::Precondition(format!("mixed metrics {} and {}", metric, s.metric)));
        }
        if !s.value.is_finite() {
            return Err(Error::Numerical(format!("non-finite {} score for {}", s.metric, s.candidate())));
        }
        if grid.entry(s.candidate()).or_default().insert(s.repeat, s.value).is_some() {
            return Err(Error::Precondition(format!("duplicate score for {} repeat {}", s.candidate(), s.repeat)));
        }
    }
    let repeats: BTreeSet<usize> = grid.values().flat_map(|m| m.keys().copied()).collect();
    for (c, m) in &grid {
        if m.len() != repeats.len() {
            return Err(Error::IncompleteGrid(format!("{c} is missing repeats for {metric}")));
        }
    }
    Ok((metric, grid))
}

/// Averages each candidate over repeats, then sorts by direction with
/// candidate-name tie breaks.
pub fn rank_candidates(scores: &[MetricScore]) -> Result<Ranking> {
    let (metric, grid) = grid_of(scores)?;
    let means = grid
        .into_iter()
        .map(|(c, m)| {
            let mean = m.values().sum::<f64>() / m.len() as f64;
            (c, mean)
        })
        .collect();
    Ok(Ranking::from_means(metric, means))
}

/// One ranking per repeat index, ascending.
pub fn rank_per_repeat(scores: &[MetricScore]) -> Result<Vec<(usize, Ranking)>> {
    let (metric, grid) = grid_of(scores)?;
    let repeats: BTreeSet<usize> = grid.values().flat_map(|m| m.keys().copied()).collect();
    Ok(repeats
        .into_iter()
        .map(|r| {
            let means = grid.iter().map(|(c, m)| (c.clone(), m[&r])).collect();
            (r, Ranking::from_means(metric, means))
        })
        .collect())
}

/// Metric × metric correlation matrices, one per correlation kind.
#[derive(Debug, Clone, PartialEq)]
pub struct AgreementMatrix {
    pub metrics: Vec<Metric>,
    pub matrices: BTreeMap<CorrelationKind, Array2<f64>>,
}

impl AgreementMatrix {
    pub fn get(&self, kind: CorrelationKind) -> &Array2<f64> {
        &self.matrices[&kind]
    }

    /// Smallest off-diagonal entry for a kind.
    pub fn min_off_diagonal(&self, kind: CorrelationKind) -> Option<f64> {
        let m = self.get(kind);
        let n = m.nrows();
        (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[[i, j]])
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))))
    }
}

fn candidate_names(rankings: &[Ranking]) -> Result<Vec<String>> {
    let first = rankings.first().ok_or_else(|| Error::Precondition("no rankings".into()))?;
    let mut names = first.candidates.clone();
    names.sort();
    for r in &rankings[1..] {
        let mut other = r.candidates.clone();
        other.sort();
        if other != names {
            return Err(Error::Precondition(format!(
                "{} and {} rank different candidate sets",
                first.metric, r.metric
            )));
        }
    }
    Ok(names)
}

/// Correlations between every pair of rankings, on direction-adjusted
/// repeat-averaged scores.
pub fn agreement(rankings: &[Ranking]) -> Result<AgreementMatrix> {
    if rankings.len() < 2 {
        return Err(Error::Precondition("agreement needs at least two metrics".into()));
    }
    let names = candidate_names(rankings)?;
    let vectors: Vec<Vec<f64>> = rankings.iter().map(|r| r.adjusted(&names)).collect::<Result<_>>()?;
    let k = rankings.len();
    let mut matrices = BTreeMap::new();
    for kind in CorrelationKind::ALL {
        let mut m = Array2::<f64>::eye(k);
        for i in 0..k {
            for j in i + 1..k {
                let v = kind.compute(&vectors[i], &vectors[j])?;
                m[[i, j]] = v;
                m[[j, i]] = v;
            }
        }
        matrices.insert(kind, m);
    }
    Ok(AgreementMatrix {
        metrics: rankings.iter().map(|r| r.metric).collect(),
        matrices,
    })
}

/// Element-wise mean of per-repeat agreement matrices.
pub fn mean_agreement(per_repeat: &[AgreementMatrix]) -> Result<AgreementMatrix> {
    let first = per_repeat.first().ok_or_else(|| Error::Precondition("no agreement matrices".into()))?;
    let mut matrices = BTreeMap::new();
    for kind in CorrelationKind::ALL {
        let mut sum = Array2::<f64>::zeros(first.get(kind).dim());
        for a in per_repeat {
            if a.metrics != first.metrics {
                return Err(Error::Precondition("per-repeat matrices cover different metrics".into()));
            }
            sum += a.get(kind);
        }
        matrices.insert(kind, sum / per_repeat.len() as f64);
    }
    Ok(AgreementMatrix {
        metrics: first.metrics.clone(),
        matrices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::Method;

    fn score(metric: Metric, name: &str, repeat: usize, value: f64) -> MetricScore {
        MetricScore {
            metric,
            value,
            direction: metric.direction(),
            method: Method::Imported(name.into()),
            baseline_kind: None,
            repeat,
            fingerprint: String::new(),
        }
    }

    #[test]
    fn ranking_examples() {
        let r = rank_candidates(&[score(Metric::Pgi, "a", 0, 0.3), score(Metric::Pgi, "b", 0, 0.1)]).unwrap();
        assert_eq!(r.candidates, vec!["imported:a", "imported:b"]);
        let r = rank_candidates(&[score(Metric::Abc, "a", 0, 0.3), score(Metric::Abc, "b", 0, 0.1)]).unwrap();
        assert_eq!(r.candidates, vec!["imported:b", "imported:a"]);
        let r = rank_candidates(&[score(Metric::Abc, "b", 0, 0.2), score(Metric::Abc, "a", 0, 0.2)]).unwrap();
        assert_eq!(r.candidates, vec!["imported:a", "imported:b"]);
    }

    #[test]
    fn averaging_and_missing_repeats() {
        let s = vec![
            score(Metric::Pgi, "a", 0, 0.1),
            score(Metric::Pgi, "a", 1, 0.5),
            score(Metric::Pgi, "b", 0, 0.2),
            score(Metric::Pgi, "b", 1, 0.2),
        ];
        let r = rank_candidates(&s).unwrap();
        assert_eq!(r.candidates[0], "imported:a");
        assert!((r.scores[0] - 0.3).abs() < 1e-15);
        let per = rank_per_repeat(&s).unwrap();
        assert_eq!(per[0].1.candidates[0], "imported:b");
        assert!(matches!(rank_candidates(&s[..3]), Err(Error::IncompleteGrid(_))));
    }

    #[test]
    fn agreement_shape() {
        let names = ["a", "b", "c", "d"];
        let pgi: Vec<MetricScore> = names.iter().enumerate().map(|(i, n)| score(Metric::Pgi, n, 0, i as f64)).collect();
        // lower-better with reversed values: same order
        let abc: Vec<MetricScore> = names.iter().enumerate().map(|(i, n)| score(Metric::Abc, n, 0, -(i as f64))).collect();
        let bnd: Vec<MetricScore> = names.iter().enumerate().map(|(i, n)| score(Metric::Bnd, n, 0, ((i * 3) % 4) as f64)).collect();
        let rs: Vec<Ranking> = [pgi, abc, bnd].iter().map(|s| rank_candidates(s).unwrap()).collect();
        let a = agreement(&rs).unwrap();
        for kind in CorrelationKind::ALL {
            let m = a.get(kind);
            assert_eq!(m.dim(), (3, 3));
            assert!((m[[0, 1]] - 1.0).abs() < 1e-15);
            assert_eq!(m[[1, 0]], m[[0, 1]]);
            assert!((0..3).all(|i| m[[i, i]] == 1.0));
        }
        assert!(a.min_off_diagonal(CorrelationKind::Kendall).unwrap() < 1.0);
        let mut short = rs.clone();
        short[2].candidates.pop();
        short[2].scores.pop();
        assert!(agreement(&short).is_err());
    }

    fn distinct_values() -> impl proptest::strategy::Strategy<Value = Vec<f64>> {
        use proptest::prelude::*;
        proptest::sample::subsequence((0..400).collect::<Vec<i32>>(), 2..14)
            .prop_shuffle()
            .prop_map(|v| v.into_iter().map(|i| f64::from(i) / 40.0).collect())
    }

    proptest::proptest! {
        #[test]
        fn prop_correlation_identities(x in distinct_values(), y in distinct_values()) {
            let rev: Vec<f64> = x.iter().map(|v| -v).collect();
            for kind in CorrelationKind::ALL {
                proptest::prop_assert!((kind.compute(&x, &x).unwrap() - 1.0).abs() < 1e-12);
                proptest::prop_assert!((kind.compute(&x, &rev).unwrap() + 1.0).abs() < 1e-12);
            }
            let n = x.len().min(y.len());
            let (x, y) = (&x[..n], &y[..n]);
            proptest::prop_assert_eq!(spearman(x, y).unwrap(), spearman(y, x).unwrap());
            proptest::prop_assert_eq!(kendall(x, y).unwrap(), kendall(y, x).unwrap());
        }

        #[test]
        fn prop_ranking_survives_monotone_transforms(v in distinct_values(), metric_ix in 0usize..3) {
            let metric = Metric::ALL[metric_ix];
            let names: Vec<String> = (0..v.len()).map(|i| format!("c{i}")).collect();
            let ranked = |f: &dyn Fn(f64) -> f64| {
                let s: Vec<MetricScore> = names.iter().zip(&v).map(|(n, &x)| score(metric, n, 0, f(x))).collect();
                rank_candidates(&s).unwrap().candidates
            };
            let base = ranked(&|x| x);
            proptest::prop_assert_eq!(&base, &ranked(&|x| 3.0 * x + 7.0));
            proptest::prop_assert_eq!(&base, &ranked(&|x| x.powi(3)));
            proptest::prop_assert_eq!(&base, &ranked(&|x| (x / 4.0).exp()));
        }
    }
}
