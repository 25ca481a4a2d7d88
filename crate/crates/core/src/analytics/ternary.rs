use serde::Serialize;

use crate::data::{Label, Task};
use crate::error::{Error, Result};

const NORMALIZATION_TOLERANCE: f64 = 1e-6;
const SQRT3_2: f64 = 0.866_025_403_784_438_6;

/// Lattice points `(i, j, k)` with `i + j + k = resolution`, ordered by `i`
/// then `j`. Coordinate `c` counts toward the label with canonical index `c`.
pub fn lattice_points(resolution: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::with_capacity((resolution + 1) * (resolution + 2) / 2);
    for i in 0..=resolution {
        for j in 0..=resolution - i {
            out.push([i, j, resolution - i - j]);
        }
    }
    out
}

fn lattice_index(resolution: usize, i: usize, j: usize) -> usize {
    // Rows before `i` hold (R+1) + R + ... + (R+2-i) points.
    i * (resolution + 1) - i * (i.saturating_sub(1)) / 2 + j
}

/// Equilateral embedding: label 0 at (0, 0), label 1 at (1, 0), label 2 at
/// (1/2, sqrt(3)/2).
pub fn simplex_position(p: [f64; 3]) -> (f64, f64) {
    (p[1] + 0.5 * p[2], SQRT3_2 * p[2])
}

/// Nearest lattice point to a probability triple: scale by the resolution,
/// floor, then hand the missing units to the largest remainders (lowest
/// index first on ties).
pub fn barycentric_bin(p: [f64; 3], resolution: usize) -> [usize; 3] {
    let scaled = p.map(|v| v.clamp(0.0, 1.0) * resolution as f64);
    let mut bin = scaled.map(|v| v.floor() as usize);
    let assigned: usize = bin.iter().sum();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = scaled[a] - scaled[a].floor();
        let rb = scaled[b] - scaled[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    if assigned < resolution {
        for &c in order.iter().take(resolution - assigned) {
            bin[c] += 1;
        }
    } else {
        // Clamping can overshoot; take units back from the smallest remainders.
        let mut excess = assigned - resolution;
        for &c in order.iter().rev() {
            while excess > 0 && bin[c] > 0 {
                bin[c] -= 1;
                excess -= 1;
            }
        }
    }
    bin
}

/// Binned and smoothed mass over the 2-simplex.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TernaryGrid {
    pub resolution: usize,
    pub sigma: f64,
    /// Corner labels in canonical order.
    pub labels: Vec<Label>,
    pub points: Vec<[usize; 3]>,
    /// Point counts per lattice cell before smoothing.
    pub raw: Vec<f64>,
    /// Mass per lattice cell after smoothing.
    pub mass: Vec<f64>,
}

impl TernaryGrid {
    pub fn total_raw(&self) -> f64 {
        self.raw.iter().sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn mass_at(&self, bin: [usize; 3]) -> f64 {
        self.mass[lattice_index(self.resolution, bin[0], bin[1])]
    }

    pub fn raw_at(&self, bin: [usize; 3]) -> f64 {
        self.raw[lattice_index(self.resolution, bin[0], bin[1])]
    }

    /// Smoothed mass scaled to sum to one (all zeros for an empty grid).
    pub fn density(&self) -> Vec<f64> {
        let total = self.total_mass();
        if total == 0.0 {
            return vec![0.0; self.mass.len()];
        }
        self.mass.iter().map(|m| m / total).collect()
    }
}

/// Bins 3-class probability triples on the simplex lattice and applies an
/// isotropic Gaussian of width `sigma` (in lattice spacings) in the embedded
/// plane. Each cell's kernel is renormalized over the cells inside the
/// triangle, so smoothing conserves mass. `sigma = 0` is plain binning.
pub fn ternary_heatmap(points: &[[f64; 3]], resolution: usize, sigma: f64) -> Result<TernaryGrid> {
    if resolution < 2 {
        return Err(Error::InvalidParameter(format!("resolution {resolution} < 2")));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!("sigma {sigma} must be >= 0")));
    }
    let lattice = lattice_points(resolution);
    let mut raw = vec![0.0; lattice.len()];
    for (index, p) in points.iter().enumerate() {
        let sum: f64 = p.iter().sum();
        if !sum.is_finite() || (sum - 1.0).abs() > NORMALIZATION_TOLERANCE || p.iter().any(|v| *v < -NORMALIZATION_TOLERANCE) {
            return Err(Error::NotNormalized { index, sum });
        }
        let b = barycentric_bin(*p, resolution);
        raw[lattice_index(resolution, b[0], b[1])] += 1.0;
    }

    let mass = if sigma == 0.0 {
        raw.clone()
    } else {
        smooth(&lattice, &raw, resolution, sigma)
    };
    Ok(TernaryGrid {
        resolution,
        sigma,
        labels: Task::Nli.labels().to_vec(),
        points: lattice,
        raw,
        mass,
    })
}

fn smooth(lattice: &[[usize; 3]], raw: &[f64], resolution: usize, sigma: f64) -> Vec<f64> {
    let r = resolution as f64;
    let pos: Vec<(f64, f64)> = lattice
        .iter()
        .map(|b| {
            let (x, y) = simplex_position(b.map(|v| v as f64 / r));
            (x * r, y * r)
        })
        .collect();
    let denom = 2.0 * sigma * sigma;
    let mut out = vec![0.0; raw.len()];
    let mut weights = vec![0.0; raw.len()];
    for (src, &m) in raw.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        let (sx, sy) = pos[src];
        let mut total = 0.0;
        for (w, &(x, y)) in weights.iter_mut().zip(&pos) {
            let d2 = (x - sx).powi(2) + (y - sy).powi(2);
            *w = (-d2 / denom).exp();
            total += *w;
        }
        let scale = m / total;
        for (o, w) in out.iter_mut().zip(&weights) {
            *o += w * scale;
        }
    }
    out
}
