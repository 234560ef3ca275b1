use crate::error::{Error, Result};

/// Per-class recognition precision and their mean (AP), in percent.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// `confusion[truth][predicted]`
    pub confusion: Vec<Vec<usize>>,
    /// Correct fraction of each class's test samples, percent; `NaN` for
    /// classes without test samples.
    pub precisions: Vec<f64>,
    /// Mean of the defined per-class precisions, percent.
    pub ap: f64,
    pub meta: Vec<(String, String)>,
}

impl EvalReport {
    pub fn class_count(&self) -> usize {
        self.confusion.len()
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    /// `key,value` lines: `ap`, then `precision_<c>` and `confusion_<t>_<p>`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("key,value\n");
        s.push_str(&format!("ap,{}\n", self.ap));
        for (c, p) in self.precisions.iter().enumerate() {
            s.push_str(&format!("precision_{c},{p}\n"));
        }
        for (t, row) in self.confusion.iter().enumerate() {
            for (p, n) in row.iter().enumerate() {
                s.push_str(&format!("confusion_{t}_{p},{n}\n"));
            }
        }
        for (k, v) in &self.meta {
            s.push_str(&format!("{k},{v}\n"));
        }
        s
    }
}

pub fn evaluate(predictions: &[usize], truth: &[usize], class_count: usize) -> Result<EvalReport> {
    if predictions.len() != truth.len() {
        return Err(Error::LengthMismatch(predictions.len(), truth.len()));
    }
    let c = class_count
        .max(predictions.iter().chain(truth).max().map_or(0, |m| m + 1));
    let mut confusion = vec![vec![0usize; c]; c];
    for (&p, &t) in predictions.iter().zip(truth) {
        confusion[t][p] += 1;
    }
    let precisions: Vec<f64> = confusion
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let total: usize = row.iter().sum();
            if total == 0 {
                f64::NAN
            } else {
                100.0 * row[k] as f64 / total as f64
            }
        })
        .collect();
    let defined: Vec<f64> = precisions.iter().copied().filter(|p| !p.is_nan()).collect();
    let ap = if defined.is_empty() {
        f64::NAN
    } else {
        defined.iter().sum::<f64>() / defined.len() as f64
    };
    Ok(EvalReport {
        confusion,
        precisions,
        ap,
        meta: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_constant_predictions() {
        let r = evaluate(&[0, 1, 2, 1], &[0, 1, 2, 1], 3).unwrap();
        assert_eq!(r.ap, 100.0);
        assert_eq!(r.confusion, vec![vec![1, 0, 0], vec![0, 2, 0], vec![0, 0, 1]]);

        let r = evaluate(&[0, 0, 0, 0], &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(r.ap, 50.0);
        assert!(evaluate(&[0], &[0, 1], 2).is_err());
    }

    #[test]
    fn confusion_rows_sum_to_class_counts() {
        let truth = [0, 0, 1, 2, 2, 2];
        let pred = [0, 2, 1, 2, 0, 2];
        let r = evaluate(&pred, &truth, 3).unwrap();
        assert_eq!(r.confusion.iter().map(|row| row.iter().sum::<usize>()).collect::<Vec<_>>(), vec![2, 1, 3]);
        assert!(r.to_csv().starts_with("key,value\nap,"));
    }
}
