use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_GRID_POINTS: usize = 256;
pub const MIN_BANDWIDTH: f64 = 1e-6;

/// Gaussian KDE of absolute errors sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kde {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

/// Silverman's rule `1.06 σ̂ n^(-1/5)` with σ̂ the sample standard deviation,
/// floored at [`MIN_BANDWIDTH`].
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 2 {
        return MIN_BANDWIDTH;
    }
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    (1.06 * sd * n.powf(-0.2)).max(MIN_BANDWIDTH)
}

fn gaussian(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Density of non-negative errors on `grid_points` evenly spaced points over
/// `[0, 1.1 · max]` (or `[0, 1]` when every error is zero). When the sample
/// has no spread the bandwidth is widened to one grid step so the single
/// mode stays visible on the grid.
pub fn abs_error_kde(errors: &[f64], grid_points: usize) -> Result<Kde> {
    if errors.is_empty() {
        return Err(Error::invalid("KDE of an empty sample"));
    }
    if grid_points < 2 {
        return Err(Error::invalid("KDE grid needs at least 2 points"));
    }
    if errors.iter().any(|e| !e.is_finite() || *e < 0.0) {
        return Err(Error::invalid("KDE inputs must be finite and non-negative"));
    }
    let max = errors.iter().copied().fold(0.0, f64::max);
    let upper = if max > 0.0 { 1.1 * max } else { 1.0 };
    let step = upper / (grid_points - 1) as f64;
    let spread = errors.iter().any(|&e| e != errors[0]);
    let mut bandwidth = silverman_bandwidth(errors);
    if !spread {
        bandwidth = bandwidth.max(step);
    }
    let grid: Vec<f64> = (0..grid_points).map(|i| i as f64 * step).collect();
    let scale = 1.0 / (errors.len() as f64 * bandwidth);
    let density = grid
        .iter()
        .map(|&x| scale * errors.iter().map(|&e| gaussian((x - e) / bandwidth)).sum::<f64>())
        .collect();
    Ok(Kde { grid, density, bandwidth })
}

impl Kde {
    pub fn trapezoid_mass(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, d)| 0.5 * (x[1] - x[0]) * (d[0] + d[1]))
            .sum()
    }

    /// CSV `x,density`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x", "density"])?;
        for (x, d) in self.grid.iter().zip(&self.density) {
            w.write_record([x.to_string(), d.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}
