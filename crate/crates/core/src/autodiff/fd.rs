use super::tensor::Tensor;
use crate::error::Result;

/// Central-difference gradient of a scalar function at `x`.
pub fn finite_difference_grad<F>(mut f: F, x: &Tensor, eps: f64) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    let indices: Vec<usize> = (0..x.numel()).collect();
    let partials = finite_difference_at(&mut f, x, eps, &indices)?;
    Tensor::new(x.shape().to_vec(), partials)
}

/// Central-difference partial derivatives at selected flat indices of `x`.
pub fn finite_difference_at<F>(mut f: F, x: &Tensor, eps: f64, indices: &[usize]) -> Result<Vec<f64>>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    assert!(eps > 0.0, "finite difference step must be positive");
    let mut probe = x.clone();
    let mut out = Vec::with_capacity(indices.len());
    for &i in indices {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let plus = f(&probe)?;
        probe.data_mut()[i] = orig - eps;
        let minus = f(&probe)?;
        probe.data_mut()[i] = orig;
        out.push((plus - minus) / (2.0 * eps));
    }
    Ok(out)
}

/// Relative error used by gradient checks: `|a - b| / max(|a|, |b|)`,
/// falling back to the absolute error when both are below `floor`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < floor {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}
