use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Labeled 2-D points.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub inputs: Vec<[f64; 2]>,
    pub labels: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    x1: f64,
    x2: f64,
    label: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for (x, &label) in self.inputs.iter().zip(&self.labels) {
            w.serialize(Row {
                x1: x[0],
                x2: x[1],
                label,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut out = Dataset::default();
        for row in r.deserialize() {
            let row: Row = row?;
            if !(row.x1.is_finite() && row.x2.is_finite()) {
                return Err(Error::invalid("dataset", "non-finite coordinate"));
            }
            out.inputs.push([row.x1, row.x2]);
            out.labels.push(row.label);
        }
        if out.is_empty() {
            return Err(Error::invalid("dataset", "no rows"));
        }
        Ok(out)
    }
}

/// Two interleaved noisy half-circles, labels alternating 0/1.
pub fn two_moons<R: Rng + ?Sized>(n: usize, noise: f64, rng: &mut R) -> Dataset {
    let mut out = Dataset::default();
    for i in 0..n {
        let t = PI * rng.random::<f64>();
        let label = i % 2;
        let (x, y) = if label == 0 {
            (t.cos(), t.sin())
        } else {
            (1.0 - t.cos(), 0.5 - t.sin())
        };
        let ex: f64 = rng.sample(StandardNormal);
        let ey: f64 = rng.sample(StandardNormal);
        out.inputs.push([x + noise * ex, y + noise * ey]);
        out.labels.push(label);
    }
    out
}

/// Points on an annulus around the moons' centre, well outside their support.
pub fn ood_ring<R: Rng + ?Sized>(n: usize, inner: f64, outer: f64, rng: &mut R) -> Vec<[f64; 2]> {
    (0..n)
        .map(|_| {
            let angle = 2.0 * PI * rng.random::<f64>();
            let radius = inner + (outer - inner) * rng.random::<f64>();
            [0.5 + radius * angle.cos(), 0.25 + radius * angle.sin()]
        })
        .collect()
}
