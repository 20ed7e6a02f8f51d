use serde::{Deserialize, Serialize};

use super::anticipation::AnticipationResult;
use crate::data::{Manoeuvre, NUM_CLASSES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: Manoeuvre,
    pub support: usize,
    pub predicted: usize,
    pub true_positives: usize,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub samples: usize,
    /// The four manoeuvre classes; straight is never scored.
    pub per_class: Vec<ClassMetrics>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Mean time-to-prediction over correctly predicted manoeuvres (s).
    pub mean_ttp: f64,
    pub ttp_count: usize,
    /// Rows: true class; columns: predicted class.
    pub confusion: [[usize; NUM_CLASSES]; NUM_CLASSES],
    pub lane_change: GroupMetrics,
    pub turn: GroupMetrics,
    /// Manoeuvre classes left out of the macro averages for lack of support.
    pub excluded: Vec<Manoeuvre>,
}

pub fn f1_score(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

fn group(per_class: &[ClassMetrics], members: &[Manoeuvre]) -> GroupMetrics {
    let scored: Vec<&ClassMetrics> =
        per_class.iter().filter(|c| members.contains(&c.class) && c.support > 0).collect();
    if scored.is_empty() {
        return GroupMetrics { precision: 0.0, recall: 0.0, f1: 0.0 };
    }
    let n = scored.len() as f64;
    let precision = scored.iter().map(|c| c.precision).sum::<f64>() / n;
    let recall = scored.iter().map(|c| c.recall).sum::<f64>() / n;
    GroupMetrics { precision, recall, f1: f1_score(precision, recall) }
}

/// Per-class precision and recall for the four manoeuvres, their macro
/// averages over classes with support, and F1 from the macro values.
/// A class that is never predicted has precision 0.
pub fn compute_metrics(results: &[AnticipationResult], labels: &[Manoeuvre]) -> Result<MetricsReport> {
    if results.len() != labels.len() {
        return Err(Error::Shape(format!("{} results for {} labels", results.len(), labels.len())));
    }
    let mut confusion = [[0usize; NUM_CLASSES]; NUM_CLASSES];
    let mut ttp_sum = 0.0;
    let mut ttp_count = 0;
    for (r, &y) in results.iter().zip(labels) {
        confusion[y.index()][r.predicted.index()] += 1;
        if r.predicted == y && y != Manoeuvre::Straight {
            ttp_sum += r.ttp;
            ttp_count += 1;
        }
    }
    let per_class: Vec<ClassMetrics> = Manoeuvre::ALL[1..]
        .iter()
        .map(|&class| {
            let c = class.index();
            let support: usize = confusion[c].iter().sum();
            let predicted: usize = (0..NUM_CLASSES).map(|t| confusion[t][c]).sum();
            let tp = confusion[c][c];
            ClassMetrics {
                class,
                support,
                predicted,
                true_positives: tp,
                precision: if predicted > 0 { tp as f64 / predicted as f64 } else { 0.0 },
                recall: if support > 0 { tp as f64 / support as f64 } else { 0.0 },
            }
        })
        .collect();
    let excluded: Vec<Manoeuvre> = per_class.iter().filter(|c| c.support == 0).map(|c| c.class).collect();
    for c in &excluded {
        log::info!("metrics: class {c} has no support, excluded from macro averages");
    }
    let all = group(&per_class, &Manoeuvre::ALL[1..]);
    Ok(MetricsReport {
        samples: labels.len(),
        precision: all.precision,
        recall: all.recall,
        f1: all.f1,
        mean_ttp: if ttp_count > 0 { ttp_sum / ttp_count as f64 } else { 0.0 },
        ttp_count,
        confusion,
        lane_change: group(&per_class, &[Manoeuvre::LaneLeft, Manoeuvre::LaneRight]),
        turn: group(&per_class, &[Manoeuvre::TurnLeft, Manoeuvre::TurnRight]),
        per_class,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn res(predicted: Manoeuvre, ttp: f64) -> AnticipationResult {
        AnticipationResult { predicted, t_star: None, ttp, len: 150, trajectory: Vec::new() }
    }

    #[test]
    fn all_correct_is_perfect() {
        let labels = Manoeuvre::ALL.to_vec();
        let results: Vec<_> = labels.iter().map(|&m| res(m, 2.0)).collect();
        let m = compute_metrics(&results, &labels).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        assert_eq!(m.mean_ttp, 2.0);
    }

    #[test]
    fn all_straight_scores_zero() {
        let labels = Manoeuvre::ALL.to_vec();
        let results: Vec<_> = labels.iter().map(|_| res(Manoeuvre::Straight, 0.0)).collect();
        let m = compute_metrics(&results, &labels).unwrap();
        assert!(m.per_class.iter().all(|c| c.recall == 0.0));
        assert_eq!(m.f1, 0.0);
    }

    #[test]
    fn confusion_rows_sum_to_support() {
        let labels = vec![Manoeuvre::LaneLeft, Manoeuvre::LaneLeft, Manoeuvre::TurnRight];
        let results = vec![res(Manoeuvre::LaneLeft, 1.0), res(Manoeuvre::TurnLeft, 1.0), res(Manoeuvre::Straight, 0.0)];
        let m = compute_metrics(&results, &labels).unwrap();
        assert_eq!(m.confusion[1].iter().sum::<usize>(), 2);
        assert_eq!(m.excluded, vec![Manoeuvre::LaneRight, Manoeuvre::TurnLeft]);
    }
}
