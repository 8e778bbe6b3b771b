use crate::error::{MmffError, Result};
use crate::tensor::RngStream;

pub const PCA_MAX_ITERATIONS: usize = 1000;
/// Convergence threshold on the L2 change of the direction between iterations.
pub const PCA_TOLERANCE: f64 = 1e-9;

const START_SEED: u64 = 0x0005_eed0_f9ca;

/// Dominant eigenpair of the sample covariance of a set of frames.
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalAxis {
    pub mean: Vec<f64>,
    /// Unit vector; its first nonzero component is positive.
    pub direction: Vec<f64>,
    pub eigenvalue: f64,
}

impl PrincipalAxis {
    pub fn new(mean: Vec<f64>, direction: Vec<f64>, eigenvalue: f64) -> Self {
        PrincipalAxis {
            mean,
            direction,
            eigenvalue,
        }
    }

    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    /// Coordinate of a frame along the axis, after centering.
    pub fn project(&self, frame: &[f64]) -> f64 {
        frame
            .iter()
            .zip(&self.mean)
            .zip(&self.direction)
            .map(|((x, m), w)| (x - m) * w)
            .sum()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn mat_vec(c: &[f64], v: &[f64]) -> Vec<f64> {
    let k = v.len();
    c.chunks_exact(k)
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

fn fix_sign(w: &mut [f64]) {
    if let Some(first) = w.iter().copied().find(|x| x.abs() > 1e-12) {
        if first < 0.0 {
            w.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Sample covariance (`n - 1` normalization) of row-major `data` with `dims` columns.
pub(crate) fn covariance(data: &[f64], dims: usize) -> (Vec<f64>, Vec<f64>) {
    let n = data.len() / dims;
    let mut mean = vec![0.0; dims];
    for row in data.chunks_exact(dims) {
        mean.iter_mut().zip(row).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![0.0; dims * dims];
    let mut centered = vec![0.0; dims];
    for row in data.chunks_exact(dims) {
        for k in 0..dims {
            centered[k] = row[k] - mean[k];
        }
        for a in 0..dims {
            let ca = centered[a];
            if ca == 0.0 {
                continue;
            }
            for b in a..dims {
                cov[a * dims + b] += ca * centered[b];
            }
        }
    }
    let denom = (n - 1) as f64;
    for a in 0..dims {
        for b in a..dims {
            let v = cov[a * dims + b] / denom;
            cov[a * dims + b] = v;
            cov[b * dims + a] = v;
        }
    }
    (mean, cov)
}

/// Dominant eigenpair of a symmetric positive semi-definite matrix by power iteration.
///
/// Returns `(direction, eigenvalue, residual)`.
pub fn power_iteration(cov: &[f64], dims: usize) -> Result<(Vec<f64>, f64, f64)> {
    let mut rng = RngStream::new(START_SEED);
    let mut w: Vec<f64> = (0..dims).map(|_| rng.normal()).collect();
    let n0 = norm(&w);
    w.iter_mut().for_each(|x| *x /= n0);

    let mut converged = false;
    for _ in 0..PCA_MAX_ITERATIONS {
        let y = mat_vec(cov, &w);
        let ny = norm(&y);
        if ny == 0.0 {
            fix_sign(&mut w);
            return Ok((w, 0.0, 0.0));
        }
        let next: Vec<f64> = y.iter().map(|x| x / ny).collect();
        let change = norm(&next.iter().zip(&w).map(|(a, b)| a - b).collect::<Vec<_>>());
        w = next;
        if change < PCA_TOLERANCE {
            converged = true;
            break;
        }
    }
    fix_sign(&mut w);
    let cw = mat_vec(cov, &w);
    let lambda = cw.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>().max(0.0);
    let residual = norm(&cw.iter().zip(&w).map(|(a, b)| a - lambda * b).collect::<Vec<_>>());
    let bound = if lambda > 0.0 { 1e-6 * lambda } else { 1e-12 };
    // With a repeated top eigenvalue the direction can keep drifting inside the
    // eigenspace while the eigen-equation already holds.
    if !converged && residual >= bound {
        return Err(MmffError::Numeric(format!(
            "power iteration did not converge in {PCA_MAX_ITERATIONS} iterations \
             (residual {residual:.3e}, eigenvalue {lambda:.3e})"
        )));
    }
    Ok((w, lambda, residual))
}

/// First principal component of row-major `data` (`dims` columns, at least two rows).
pub fn first_principal_component(data: &[f64], dims: usize) -> Result<PrincipalAxis> {
    if dims == 0 || !data.len().is_multiple_of(dims) {
        return Err(MmffError::dim(
            "first_principal_component",
            format!("{} values do not form rows of {dims}", data.len()),
        ));
    }
    let n = data.len() / dims;
    if n < 2 {
        return Err(MmffError::Data(format!(
            "principal component needs at least 2 frames, got {n}"
        )));
    }
    let (mean, cov) = covariance(data, dims);
    let (direction, eigenvalue, _) = power_iteration(&cov, dims)?;
    Ok(PrincipalAxis {
        mean,
        direction,
        eigenvalue,
    })
}
