//! Per-label decision thresholds chosen on the validation split.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use indexmap::IndexMap;
use ndarray::{Array2, ArrayView1, ArrayView2, Zip};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::Confusion;

/// Number of grid intervals between 0 and 1.
pub const GRID_STEPS: u8 = 100;

#[derive(Debug, Error)]
pub enum CalibrateError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("validation set is empty")]
    EmptyValidation,
    #[error("malformed threshold file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Where a set of thresholds came from.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub split_id: String,
    pub model_id: String,
}

/// One threshold per label, each an exact point `k / 100` of the grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ThresholdVector {
    labels: Vec<String>,
    steps: Vec<u8>,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct ThresholdFile {
    provenance: Provenance,
    thresholds: IndexMap<String, f64>,
}

pub fn grid_value(step: u8) -> f64 {
    f64::from(step) / f64::from(GRID_STEPS)
}

impl ThresholdVector {
    pub fn from_steps(labels: Vec<String>, steps: Vec<u8>) -> Result<Self, CalibrateError> {
        if labels.len() != steps.len() {
            return Err(CalibrateError::ShapeMismatch(format!(
                "{} labels, {} thresholds",
                labels.len(),
                steps.len()
            )));
        }
        if let Some(s) = steps.iter().find(|s| **s > GRID_STEPS) {
            return Err(CalibrateError::Malformed(format!(
                "grid step {s} out of range"
            )));
        }
        Ok(ThresholdVector {
            labels,
            steps,
            provenance: Provenance::default(),
        })
    }

    /// Same threshold for every label.
    pub fn uniform(labels: Vec<String>, step: u8) -> Result<Self, CalibrateError> {
        let steps = vec![step; labels.len()];
        Self::from_steps(labels, steps)
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn steps(&self) -> &[u8] {
        &self.steps
    }

    pub fn value(&self, label: usize) -> f64 {
        grid_value(self.steps[label])
    }

    pub fn values(&self) -> Vec<f64> {
        self.steps.iter().map(|s| grid_value(*s)).collect()
    }

    pub fn write<W: Write>(&self, writer: W) -> Result<(), CalibrateError> {
        let file = ThresholdFile {
            provenance: self.provenance.clone(),
            thresholds: self.labels.iter().cloned().zip(self.values()).collect(),
        };
        serde_json::to_writer_pretty(writer, &file)
            .map_err(|e| CalibrateError::Malformed(e.to_string()))
    }

    pub fn read<R: Read>(reader: R) -> Result<Self, CalibrateError> {
        let file: ThresholdFile = serde_json::from_reader(reader)
            .map_err(|e| CalibrateError::Malformed(e.to_string()))?;
        let mut labels = Vec::with_capacity(file.thresholds.len());
        let mut steps = Vec::with_capacity(file.thresholds.len());
        for (label, value) in file.thresholds {
            let scaled = value * f64::from(GRID_STEPS);
            let step = scaled.round();
            if !(0.0..=f64::from(GRID_STEPS)).contains(&step) || grid_value(step as u8) != value {
                return Err(CalibrateError::Malformed(format!(
                    "threshold {value} for `{label}` is not a grid point"
                )));
            }
            labels.push(label);
            steps.push(step as u8);
        }
        Ok(ThresholdVector::from_steps(labels, steps)?.with_provenance(file.provenance))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CalibrateError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CalibrateError> {
        Self::read(BufReader::new(File::open(path)?))
    }
}

fn confusion_at(
    probs: ArrayView1<'_, f64>,
    truths: ArrayView1<'_, bool>,
    threshold: f64,
) -> Confusion {
    let mut c = Confusion::default();
    for (&p, &t) in probs.iter().zip(truths) {
        c.add(p > threshold, t);
    }
    c
}

/// Grid step maximizing one label's F1; the smallest wins ties, no positives gives 1.00.
pub fn best_step(probs: ArrayView1<'_, f64>, truths: ArrayView1<'_, bool>) -> u8 {
    if !truths.iter().any(|t| *t) {
        return GRID_STEPS;
    }
    let mut best = (0u8, f64::NEG_INFINITY);
    for step in 0..=GRID_STEPS {
        let f1 = confusion_at(probs, truths, grid_value(step)).f1();
        if f1 > best.1 {
            best = (step, f1);
        }
    }
    best.0
}

fn check_shapes(a: (usize, usize), b: (usize, usize), what: &str) -> Result<(), CalibrateError> {
    if a != b {
        return Err(CalibrateError::ShapeMismatch(format!(
            "{what}: {a:?} vs {b:?}"
        )));
    }
    Ok(())
}

/// Independently picks each label's F1-maximizing grid threshold on validation data.
pub fn calibrate_thresholds(
    probabilities: ArrayView2<'_, f64>,
    truths: ArrayView2<'_, bool>,
    labels: &[String],
) -> Result<ThresholdVector, CalibrateError> {
    check_shapes(
        probabilities.dim(),
        truths.dim(),
        "probabilities and truths",
    )?;
    if probabilities.ncols() != labels.len() {
        return Err(CalibrateError::ShapeMismatch(format!(
            "{} columns for {} labels",
            probabilities.ncols(),
            labels.len()
        )));
    }
    if probabilities.nrows() == 0 {
        return Err(CalibrateError::EmptyValidation);
    }
    let steps = probabilities
        .columns()
        .into_iter()
        .zip(truths.columns())
        .map(|(p, t)| best_step(p, t))
        .collect();
    ThresholdVector::from_steps(labels.to_vec(), steps)
}

/// Predicts a label iff its probability is strictly above the label's threshold.
pub fn apply_thresholds(
    probabilities: ArrayView2<'_, f64>,
    thresholds: &ThresholdVector,
) -> Result<Array2<bool>, CalibrateError> {
    if probabilities.ncols() != thresholds.len() {
        return Err(CalibrateError::ShapeMismatch(format!(
            "{} columns for {} thresholds",
            probabilities.ncols(),
            thresholds.len()
        )));
    }
    let values = ndarray::Array1::from(thresholds.values());
    let mut out = Array2::from_elem(probabilities.dim(), false);
    for (mut row, probs) in out.rows_mut().into_iter().zip(probabilities.rows()) {
        Zip::from(&mut row)
            .and(&probs)
            .and(&values)
            .for_each(|o, &p, &t| *o = p > t);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("l{i}")).collect()
    }

    #[test]
    fn smallest_perfect_threshold() {
        let probs = array![[0.2], [0.6], [0.9]];
        let truths = array![[false], [true], [true]];
        let t = calibrate_thresholds(probs.view(), truths.view(), &names(1)).unwrap();
        assert_eq!(t.steps(), &[20]);
        assert_eq!(t.value(0), 0.2);
    }

    #[test]
    fn no_positives_means_predict_nothing() {
        let probs = array![[0.2], [0.99]];
        let truths = array![[false], [false]];
        let t = calibrate_thresholds(probs.view(), truths.view(), &names(1)).unwrap();
        assert_eq!(t.value(0), 1.0);
    }

    #[test]
    fn all_positive_prefers_zero() {
        let probs = array![[0.0], [0.5]];
        let truths = array![[true], [true]];
        // p = 0.0 is never strictly above a grid point, so recall tops out at 1/2.
        let t = calibrate_thresholds(probs.view(), truths.view(), &names(1)).unwrap();
        assert_eq!(t.steps(), &[0]);
    }

    #[test]
    fn strict_inequality_when_applying() {
        let t = ThresholdVector::from_steps(names(3), vec![50, 100, 0]).unwrap();
        let probs = array![[0.5, 1.0, 0.01], [0.51, 0.999, 0.0]];
        let pred = apply_thresholds(probs.view(), &t).unwrap();
        assert_eq!(pred, array![[false, false, true], [true, false, false]]);
    }

    #[test]
    fn shape_errors() {
        let probs = array![[0.5, 0.5]];
        assert!(matches!(
            calibrate_thresholds(probs.view(), array![[true]].view(), &names(2)),
            Err(CalibrateError::ShapeMismatch(_))
        ));
        assert!(matches!(
            calibrate_thresholds(probs.view(), array![[true, false]].view(), &names(3)),
            Err(CalibrateError::ShapeMismatch(_))
        ));
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(matches!(
            calibrate_thresholds(
                empty.view(),
                Array2::from_elem((0, 2), false).view(),
                &names(2)
            ),
            Err(CalibrateError::EmptyValidation)
        ));
        let t = ThresholdVector::uniform(names(1), 50).unwrap();
        assert!(apply_thresholds(probs.view(), &t).is_err());
        assert!(ThresholdVector::from_steps(names(1), vec![101]).is_err());
    }

    #[test]
    fn best_step_handles_single_example() {
        let p = Array1::from(vec![0.7]);
        let t = Array1::from(vec![true]);
        assert_eq!(best_step(p.view(), t.view()), 0);
    }

    #[test]
    fn file_round_trip() {
        let t = ThresholdVector::from_steps(vec!["b".into(), "a".into()], vec![7, 100])
            .unwrap()
            .with_provenance(Provenance {
                split_id: "s".into(),
                model_id: "m".into(),
            });
        let mut buf = Vec::new();
        t.write(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.find("\"b\"").unwrap() < text.find("\"a\"").unwrap());
        assert_eq!(ThresholdVector::read(&buf[..]).unwrap(), t);

        let off_grid = text.replace("0.07", "0.075");
        assert!(matches!(
            ThresholdVector::read(off_grid.as_bytes()),
            Err(CalibrateError::Malformed(_))
        ));
        let too_big = text.replace("1.0", "1.5");
        assert!(ThresholdVector::read(too_big.as_bytes()).is_err());
    }
}
