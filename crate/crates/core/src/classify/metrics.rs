//! Confusion matrices and accuracy statistics. Rows are predictions, columns observations.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    /// `counts[predicted][observed]`.
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<String>) -> Self {
        let n = classes.len();
        Self {
            classes,
            counts: vec![vec![0; n]; n],
        }
    }

    pub fn from_counts(classes: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = classes.len();
        if counts.len() != n || counts.iter().any(|r| r.len() != n) {
            return Err(Error::Parameter(format!("confusion counts must be {n} x {n}")));
        }
        Ok(Self { classes, counts })
    }

    fn index(&self, label: &str) -> Result<usize> {
        self.classes
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn add(&mut self, predicted: &str, observed: &str) -> Result<()> {
        let (p, o) = (self.index(predicted)?, self.index(observed)?);
        self.counts[p][o] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

/// Tallies predictions against truth over a fixed class list.
pub fn confusion_with_classes<P: AsRef<str>, O: AsRef<str>>(
    classes: Vec<String>,
    predicted: &[P],
    observed: &[O],
) -> Result<ConfusionMatrix> {
    if predicted.len() != observed.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: observed.len(),
        });
    }
    let mut cm = ConfusionMatrix::new(classes);
    for (p, o) in predicted.iter().zip(observed) {
        cm.add(p.as_ref(), o.as_ref())?;
    }
    Ok(cm)
}

/// Tallies predictions against truth; the classes are the sorted union of both lists.
pub fn confusion<P: AsRef<str>, O: AsRef<str>>(predicted: &[P], observed: &[O]) -> Result<ConfusionMatrix> {
    let classes: BTreeSet<String> = predicted
        .iter()
        .map(|p| p.as_ref().to_string())
        .chain(observed.iter().map(|o| o.as_ref().to_string()))
        .collect();
    confusion_with_classes(classes.into_iter().collect(), predicted, observed)
}

/// Accuracy statistics of one confusion matrix. Per-class values are `None` when the
/// class has no predictions (user's) or no observations (producer's).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub overall_accuracy: f64,
    pub kappa: f64,
    pub users_accuracy: BTreeMap<String, Option<f64>>,
    pub producers_accuracy: BTreeMap<String, Option<f64>>,
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Empty("confusion matrix has no samples".into()));
    }
    let n = cm.classes.len();
    let t = total as f64;
    let row: Vec<u64> = cm.counts.iter().map(|r| r.iter().sum()).collect();
    let col: Vec<u64> = (0..n).map(|j| cm.counts.iter().map(|r| r[j]).sum()).collect();
    let trace: u64 = (0..n).map(|i| cm.counts[i][i]).sum();
    let oa = trace as f64 / t;
    // (OA - p_e) / (1 - p_e) scaled by total^2 so that only the final division rounds.
    let chance: i128 = (0..n).map(|c| row[c] as i128 * col[c] as i128).sum();
    let total_sq = total as i128 * total as i128;
    let agree = total as i128 * trace as i128;
    // Chance agreement of 1 means a single class on both axes, which is perfect agreement.
    let kappa = if chance == total_sq {
        1.0
    } else {
        (agree - chance) as f64 / (total_sq - chance) as f64
    };
    let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
    let users_accuracy = (0..n)
        .map(|c| (cm.classes[c].clone(), ratio(cm.counts[c][c], row[c])))
        .collect();
    let producers_accuracy = (0..n)
        .map(|c| (cm.classes[c].clone(), ratio(cm.counts[c][c], col[c])))
        .collect();
    Ok(Metrics {
        overall_accuracy: oa,
        kappa,
        users_accuracy,
        producers_accuracy,
    })
}

/// Means over replications; per-class means skip replications where the class is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub overall_accuracy: f64,
    pub kappa: f64,
    pub users_accuracy: BTreeMap<String, Option<f64>>,
    pub producers_accuracy: BTreeMap<String, Option<f64>>,
    pub per_replication: Vec<Metrics>,
}

fn mean_per_class(reps: &[Metrics], pick: impl Fn(&Metrics) -> &BTreeMap<String, Option<f64>>) -> BTreeMap<String, Option<f64>> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for m in reps {
        for (class, v) in pick(m) {
            let e = acc.entry(class.clone()).or_default();
            if let Some(v) = v {
                e.0 += v;
                e.1 += 1;
            }
        }
    }
    acc.into_iter()
        .map(|(c, (sum, n))| (c, (n > 0).then(|| sum / n as f64)))
        .collect()
}

impl MetricsReport {
    pub fn from_replications(per_replication: Vec<Metrics>) -> Result<Self> {
        if per_replication.is_empty() {
            return Err(Error::Empty("no replications".into()));
        }
        let r = per_replication.len() as f64;
        Ok(Self {
            overall_accuracy: per_replication.iter().map(|m| m.overall_accuracy).sum::<f64>() / r,
            kappa: per_replication.iter().map(|m| m.kappa).sum::<f64>() / r,
            users_accuracy: mean_per_class(&per_replication, |m| &m.users_accuracy),
            producers_accuracy: mean_per_class(&per_replication, |m| &m.producers_accuracy),
            per_replication,
        })
    }
}

/// Element-wise mean of equally shaped confusion matrices.
pub fn mean_confusion(matrices: &[ConfusionMatrix]) -> Result<Vec<Vec<f64>>> {
    let first = matrices.first().ok_or_else(|| Error::Empty("no confusion matrices".into()))?;
    let n = first.classes.len();
    let mut out = vec![vec![0.0; n]; n];
    for cm in matrices {
        if cm.classes != first.classes {
            return Err(Error::Parameter("confusion matrices have different classes".into()));
        }
        for (o, r) in out.iter_mut().zip(&cm.counts) {
            for (a, &c) in o.iter_mut().zip(r) {
                *a += c as f64;
            }
        }
    }
    let r = matrices.len() as f64;
    out.iter_mut().flatten().for_each(|v| *v /= r);
    Ok(out)
}

/// Writes a `pred\obs` table, rounding each cell to the nearest integer.
pub fn write_confusion_csv<W: Write>(writer: W, classes: &[String], counts: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["pred\\obs".to_string()];
    header.extend(classes.iter().cloned());
    w.write_record(&header)?;
    for (class, row) in classes.iter().zip(counts) {
        let mut rec = vec![class.clone()];
        rec.extend(row.iter().map(|v| format!("{}", v.round() as i64)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two(counts: [[u64; 2]; 2]) -> ConfusionMatrix {
        ConfusionMatrix::from_counts(vec!["a".into(), "b".into()], counts.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn confusion_examples() {
        let perfect = confusion(&["a", "b", "b"], &["a", "b", "b"]).unwrap();
        assert_eq!(perfect.counts, vec![vec![1, 0], vec![0, 2]]);
        let one_row = confusion(&["a", "a", "a"], &["a", "b", "b"]).unwrap();
        assert_eq!(one_row.counts, vec![vec![1, 2], vec![0, 0]]);
        // (pred, obs): (a,a) (a,b) (b,b) (b,a)
        let mixed = confusion(&["a", "a", "b", "b"], &["a", "b", "b", "a"]).unwrap();
        assert_eq!(mixed.counts, vec![vec![1, 1], vec![1, 1]]);
        assert_eq!(mixed.total(), 4);
        let classes = vec!["a".to_string()];
        assert!(matches!(
            confusion_with_classes(classes, &["a"], &["z"]),
            Err(Error::UnknownLabel(_))
        ));
        assert!(confusion(&["a"], &["a", "b"]).is_err());
    }

    #[test]
    fn metric_examples() {
        let m = metrics(&two([[50, 0], [0, 50]])).unwrap();
        assert_eq!((m.overall_accuracy, m.kappa), (1.0, 1.0));
        let m = metrics(&two([[40, 10], [10, 40]])).unwrap();
        assert_eq!(m.overall_accuracy, 0.8);
        assert_eq!(m.kappa, 0.6);
        let m = metrics(&two([[25, 25], [25, 25]])).unwrap();
        assert_eq!(m.kappa, 0.0);
        assert!(metrics(&two([[0, 0], [0, 0]])).is_err());
    }

    #[test]
    fn per_class_accuracies() {
        // Rows predicted, columns observed.
        let m = metrics(&two([[30, 10], [0, 20]])).unwrap();
        assert_eq!(m.users_accuracy["a"], Some(0.75));
        assert_eq!(m.producers_accuracy["a"], Some(1.0));
        assert_eq!(m.users_accuracy["b"], Some(1.0));
        assert_eq!(m.producers_accuracy["b"], Some(20.0 / 30.0));
        let m = metrics(&two([[5, 5], [0, 0]])).unwrap();
        assert_eq!(m.users_accuracy["b"], None);
        assert_eq!(m.producers_accuracy["b"], Some(0.0));
    }

    #[test]
    fn report_means_skip_undefined() {
        let a = metrics(&two([[5, 5], [0, 0]])).unwrap();
        let b = metrics(&two([[5, 0], [0, 5]])).unwrap();
        let r = MetricsReport::from_replications(vec![a, b]).unwrap();
        assert_eq!(r.users_accuracy["b"], Some(1.0));
        assert_eq!(r.overall_accuracy, 0.75);
    }

    #[test]
    fn mean_confusion_oa_matches_mean_oa() {
        let ms = [two([[8, 2], [1, 9]]), two([[10, 0], [3, 7]])];
        let mean = mean_confusion(&ms).unwrap();
        let oa_of_mean = (mean[0][0] + mean[1][1]) / 20.0;
        let mean_oa = ms.iter().map(|m| metrics(m).unwrap().overall_accuracy).sum::<f64>() / 2.0;
        assert!((oa_of_mean - mean_oa).abs() < 1e-15);
    }

    #[test]
    fn confusion_csv_layout() {
        let mut buf = Vec::new();
        write_confusion_csv(&mut buf, &["a".into(), "b".into()], &[vec![9.6, 0.4], vec![0.5, 10.0]]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "pred\\obs,a,b\na,10,0\nb,1,10\n");
    }
}
