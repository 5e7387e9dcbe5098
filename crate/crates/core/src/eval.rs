//! Segmentation metrics: classification error under the best injective
//! cluster matching, the prevalent-group baseline and collection summaries.

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use serde::Serialize;
use thiserror::Error;

use crate::spectral::Assignment;
use crate::stats::median;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction has {0} points but ground truth has {1}")]
    SizeMismatch(usize, usize),
    #[error("ground truth is empty")]
    Empty,
}

/// Contingency counts: `table[p][t]` points with predicted cluster `p` and
/// truth label index `t` (truth labels densified in ascending order).
fn contingency(pred: &Assignment, truth: &[u32]) -> Vec<Vec<i64>> {
    let mut ids: Vec<u32> = truth.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let mut table = vec![vec![0i64; ids.len()]; pred.num_clusters()];
    for (p, t) in pred.labels().iter().zip(truth) {
        let ti = ids.binary_search(t).expect("label present");
        table[p - 1][ti] += 1;
    }
    table
}

/// Fraction of points misclassified under the injective matching of predicted
/// clusters to truth groups that maximizes agreement. Unmatched clusters count
/// entirely as errors.
pub fn classification_error(pred: &Assignment, truth: &[u32]) -> Result<f64, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::SizeMismatch(pred.len(), truth.len()));
    }
    if truth.is_empty() {
        return Err(EvalError::Empty);
    }
    let table = contingency(pred, truth);
    let (rows, cols) = (table.len(), table[0].len());
    // kuhn_munkres needs rows <= columns.
    let weights = if rows <= cols {
        Matrix::from_rows(table).expect("rectangular")
    } else {
        Matrix::from_fn(cols, rows, |(t, p)| table[p][t])
    };
    let (agree, _) = kuhn_munkres(&weights);
    Ok(1.0 - agree as f64 / truth.len() as f64)
}

/// Error of labelling every point with the largest truth group.
pub fn prevalence_baseline(truth: &[u32]) -> Result<f64, EvalError> {
    if truth.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut counts = std::collections::BTreeMap::new();
    for t in truth {
        *counts.entry(t).or_insert(0usize) += 1;
    }
    let largest = counts.values().copied().max().unwrap_or(0);
    Ok(1.0 - largest as f64 / truth.len() as f64)
}

/// One sequence of a collection.
#[derive(Debug, Clone, Serialize)]
pub struct SequenceResult {
    pub name: String,
    pub error: f64,
    pub true_m: usize,
    pub estimated_m: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub sequences: Vec<SequenceResult>,
    pub mean_error: f64,
    pub median_error: f64,
    /// Fraction of sequences whose estimated M equals the truth, over the
    /// sequences that carry an estimate.
    pub correct_rate: Option<f64>,
}

impl EvalReport {
    pub fn from_sequences(sequences: Vec<SequenceResult>) -> Self {
        let errors: Vec<f64> = sequences.iter().map(|s| s.error).collect();
        let (mean_error, median_error) = if errors.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            (errors.iter().sum::<f64>() / errors.len() as f64, median(&errors))
        };
        let estimated: Vec<&SequenceResult> = sequences.iter().filter(|s| s.estimated_m.is_some()).collect();
        let correct_rate = (!estimated.is_empty()).then(|| {
            estimated.iter().filter(|s| s.estimated_m == Some(s.true_m)).count() as f64 / estimated.len() as f64
        });
        EvalReport {
            sequences,
            mean_error,
            median_error,
            correct_rate,
        }
    }

    /// Aligned-columns text table with a summary footer.
    pub fn to_table(&self) -> String {
        let width = self.sequences.iter().map(|s| s.name.len()).max().unwrap_or(8).max(8);
        let mut out = format!("{:<width$}  {:>8}  {:>6}  {:>5}\n", "sequence", "error%", "true_M", "est_M");
        for s in &self.sequences {
            let est = s.estimated_m.map_or("-".to_string(), |m| m.to_string());
            out.push_str(&format!(
                "{:<width$}  {:>8.3}  {:>6}  {:>5}\n",
                s.name,
                100.0 * s.error,
                s.true_m,
                est
            ));
        }
        out.push_str(&format!("mean error   {:.3}%\n", 100.0 * self.mean_error));
        out.push_str(&format!("median error {:.3}%\n", 100.0 * self.median_error));
        if let Some(r) = self.correct_rate {
            out.push_str(&format!("correct rate {:.2}%\n", 100.0 * r));
        }
        out
    }

    /// `name,error,true_m,estimated_m` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,error,true_m,estimated_m\n");
        for s in &self.sequences {
            let est = s.estimated_m.map_or(String::new(), |m| m.to_string());
            out.push_str(&format!("{},{},{},{}\n", s.name, s.error, s.true_m, est));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relabeling_is_free() {
        let truth = [1, 1, 2, 2, 3];
        let pred = Assignment::new(vec![3, 3, 1, 1, 2], 3).unwrap();
        assert_eq!(classification_error(&pred, &truth).unwrap(), 0.0);
    }

    #[test]
    fn one_of_six_wrong() {
        let truth = [1, 1, 1, 2, 2, 2];
        let pred = Assignment::new(vec![1, 1, 2, 2, 2, 2], 2).unwrap();
        assert!((classification_error(&pred, &truth).unwrap() - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn surplus_clusters_count_as_errors() {
        let truth = [1, 1, 1, 1];
        let pred = Assignment::new(vec![1, 1, 2, 3], 3).unwrap();
        assert_eq!(classification_error(&pred, &truth).unwrap(), 0.5);
    }

    #[test]
    fn prevalence() {
        assert_eq!(prevalence_baseline(&[4, 4, 4]).unwrap(), 0.0);
        assert_eq!(prevalence_baseline(&[1, 1, 1, 2]).unwrap(), 0.25);
        assert!(prevalence_baseline(&[]).is_err());
    }

    #[test]
    fn report_summary() {
        let r = EvalReport::from_sequences(vec![
            SequenceResult { name: "a".into(), error: 0.0, true_m: 2, estimated_m: Some(2) },
            SequenceResult { name: "b".into(), error: 0.2, true_m: 3, estimated_m: Some(2) },
        ]);
        assert!((r.mean_error - 0.1).abs() < 1e-15);
        assert_eq!(r.correct_rate, Some(0.5));
        assert!(r.to_table().contains("correct rate 50.00%"));
    }
}
