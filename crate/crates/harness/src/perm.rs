//! Permeability fields: a seeded, spatially correlated log-normal generator
//! and a plain-text loader.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{HarnessError, Result};

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let w: Vec<f64> = (-radius..=radius).map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable blur with clamped borders.
fn blur(field: &[f64], nx: usize, ny: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; field.len()];
    for j in 0..ny {
        for i in 0..nx {
            tmp[j * nx + i] =
                k.iter().enumerate().map(|(t, w)| w * field[j * nx + clamp(i as isize + t as isize - r, nx)]).sum();
        }
    }
    let mut out = vec![0.0; field.len()];
    for j in 0..ny {
        for i in 0..nx {
            out[j * nx + i] =
                k.iter().enumerate().map(|(t, w)| w * tmp[clamp(j as isize + t as isize - r, ny) * nx + i]).sum();
        }
    }
    out
}

/// `k = exp(mu + sigma_ln z)` with `z` smoothed white noise rescaled to zero
/// mean and unit variance, and `mu` chosen so the expected value is `mean_md`.
pub fn lognormal_field(nx: usize, ny: usize, mean_md: f64, sigma_ln: f64, correlation_cells: f64, seed: u64) -> Vec<f64> {
    let n = nx * ny;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut z = if correlation_cells > 0.0 { blur(&noise, nx, ny, correlation_cells) } else { noise };
    let m = z.iter().sum::<f64>() / n as f64;
    let var = z.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
    let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
    for v in &mut z {
        *v = (*v - m) / sd;
    }
    let mu = mean_md.ln() - 0.5 * sigma_ln * sigma_ln;
    z.into_iter().map(|v| (mu + sigma_ln * v).exp()).collect()
}

/// Reads `n` positive values in mD separated by whitespace or commas; `#`
/// starts a comment.
pub fn load_perm_file(path: &Path, n: usize) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_perm(&text, n).map_err(|reason| HarnessError::format(path, reason))
}

fn parse_perm(text: &str, n: usize) -> std::result::Result<Vec<f64>, String> {
    let mut values = Vec::with_capacity(n);
    for (ln, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        for tok in line.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
            let v: f64 = tok.parse().map_err(|_| format!("line {}: `{tok}` is not a number", ln + 1))?;
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("line {}: permeability must be positive, got {v}", ln + 1));
            }
            values.push(v);
        }
    }
    if values.len() != n {
        return Err(format!("expected {n} values, found {}", values.len()));
    }
    Ok(values)
}
