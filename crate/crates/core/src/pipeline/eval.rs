use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use super::dataset::Dataset;
use super::infer::predict;
use crate::error::{Error, Result};
use crate::nn::{Network, Scalar, Tensor};
use crate::raster::{Class, LabelMap, Raster};

const K: usize = Class::COUNT;

/// Pixel tallies indexed `[predicted][ground truth]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionCounts(pub [[u64; K]; K]);

impl ConfusionCounts {
    pub fn add(&mut self, predicted: &LabelMap, truth: &LabelMap) -> Result<()> {
        if !predicted.same_shape(truth) {
            return Err(Error::Shape(format!(
                "prediction is {}x{}, ground truth {}x{}",
                predicted.height, predicted.width, truth.height, truth.width
            )));
        }
        for (&p, &t) in predicted.data.iter().zip(&truth.data) {
            if p as usize >= K || t as usize >= K {
                return Err(Error::Data(format!("class id out of range ({p}, {t})")));
            }
            self.0[p as usize][t as usize] += 1;
        }
        Ok(())
    }

    pub fn merge(mut self, other: ConfusionCounts) -> ConfusionCounts {
        for p in 0..K {
            for t in 0..K {
                self.0[p][t] += other.0[p][t];
            }
        }
        self
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    pub fn report(&self) -> EvalReport {
        let total = self.total();
        let scale = if total == 0 {
            0.0
        } else {
            100.0 / total as f64
        };
        let mut confusion = [[0.0; K]; K];
        for p in 0..K {
            for t in 0..K {
                confusion[p][t] = self.0[p][t] as f64 * scale;
            }
        }
        let predicted_totals = confusion.map(|row| row.iter().sum());
        let truth_totals = std::array::from_fn(|t| (0..K).map(|p| confusion[p][t]).sum());
        EvalReport {
            confusion,
            predicted_totals,
            truth_totals,
            accuracy: (0..K).map(|i| confusion[i][i]).sum(),
            pixels: total,
        }
    }
}

/// Confusion matrix in percent of all pixels, rows = prediction,
/// columns = ground truth.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub confusion: [[f64; K]; K],
    /// Row sums.
    pub predicted_totals: [f64; K],
    /// Column sums.
    pub truth_totals: [f64; K],
    /// Diagonal sum, in percent.
    pub accuracy: f64,
    pub pixels: u64,
}

impl EvalReport {
    pub fn total(&self) -> f64 {
        self.predicted_totals.iter().sum()
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>22}", "Ground truth")?;
        write!(f, "{:<12}", "Prediction")?;
        for c in Class::ALL {
            write!(f, "{:>10}", c.name())?;
        }
        writeln!(f, "{:>10}", "Sum")?;
        for p in Class::ALL {
            write!(f, "{:<12}", p.name())?;
            for t in 0..K {
                write!(f, "{:>10.2}", self.confusion[p as usize][t])?;
            }
            writeln!(f, "{:>10.2}", self.predicted_totals[p as usize])?;
        }
        write!(f, "{:<12}", "Sum")?;
        for t in 0..K {
            write!(f, "{:>10.2}", self.truth_totals[t])?;
        }
        writeln!(f, "{:>10.2}", self.total())?;
        write!(
            f,
            "Accuracy: {:.2}% over {} pixels",
            self.accuracy, self.pixels
        )
    }
}

/// Confusion matrix of `net` over every pixel of every sample.
pub fn evaluate<T: Scalar>(net: &Network<T>, dataset: &Dataset) -> Result<EvalReport> {
    let counts = dataset
        .samples
        .par_iter()
        .map(|ex| {
            let mut c = ConfusionCounts::default();
            c.add(&predict(net, &ex.x)?, &ex.y)?;
            Ok::<_, Error>(c)
        })
        .try_reduce(ConfusionCounts::default, |a, b| Ok(a.merge(b)))?;
    Ok(counts.report())
}

/// Arg-max class per pixel of `[1, h, w, classes]` probabilities; ties go to
/// the lowest class id.
pub fn argmax_labels<T: Scalar>(probs: &Tensor<T>) -> Result<LabelMap> {
    let [n, h, w, c] = probs.dims4()?;
    if n != 1 {
        return Err(Error::Shape(format!(
            "expected a single map, got batch of {n}"
        )));
    }
    let data = probs
        .data()
        .chunks_exact(c)
        .map(|px| {
            let mut best = 0;
            for (i, &v) in px.iter().enumerate() {
                if v > px[best] {
                    best = i;
                }
            }
            best as u8
        })
        .collect();
    Raster::from_vec(h, w, data)
}
