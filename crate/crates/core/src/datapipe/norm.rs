use super::window::Window;
use crate::{Error, Result};

/// Per-channel z-score parameters fitted on training windows.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizationStats {
    pub channels: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormalizationStats {
    /// Population mean and standard deviation over every row of every window.
    pub fn fit(windows: &[Window], channels: &[String]) -> Result<Self> {
        if windows.len() < 2 {
            return Err(Error::contract("normalization needs at least two windows"));
        }
        let c = channels.len();
        let mut sum = vec![0.0f64; c];
        let mut n = 0usize;
        for w in windows {
            if w.values.len() % c != 0 {
                return Err(Error::dim("normalization", &[w.values.len()], &[c]));
            }
            for row in w.values.chunks_exact(c) {
                sum.iter_mut().zip(row).for_each(|(s, &v)| *s += v as f64);
                n += 1;
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let mut sq = vec![0.0f64; c];
        for w in windows {
            for row in w.values.chunks_exact(c) {
                for j in 0..c {
                    let d = row[j] as f64 - mean[j];
                    sq[j] += d * d;
                }
            }
        }
        let std: Vec<f64> = sq.iter().map(|s| (s / n as f64).sqrt()).collect();
        for j in 0..c {
            if !(std[j] > 1e-9 * (1.0 + mean[j].abs())) {
                return Err(Error::DegenerateChannel(channels[j].clone()));
            }
        }
        Ok(NormalizationStats {
            channels: channels.to_vec(),
            mean,
            std,
        })
    }

    pub fn apply(&self, windows: &mut [Window]) -> Result<()> {
        for w in windows {
            if w.normalized {
                return Err(Error::contract("window is already normalized"));
            }
            self.apply_values(&mut w.values)?;
            w.normalized = true;
        }
        Ok(())
    }

    /// Normalizes a raw row-major block with the fitted channel layout.
    pub fn apply_values(&self, values: &mut [f32]) -> Result<()> {
        let c = self.channels.len();
        if !values.len().is_multiple_of(c) {
            return Err(Error::dim("normalization", &[values.len()], &[c]));
        }
        for row in values.chunks_exact_mut(c) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = ((*v as f64 - m) / s) as f32;
            }
        }
        Ok(())
    }
}
