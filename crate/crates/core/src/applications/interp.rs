use crate::error::{DsdError, Result};
use crate::numeric::Tensor;

fn check_gamma(gamma: f64) -> Result<()> {
    if (0.0..=1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(DsdError::Invalid(format!("gamma {gamma} outside [0, 1]")))
    }
}

fn lerp(a: &[f64], b: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(DsdError::Shape(format!("lengths {} and {}", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).map(|(x, y)| gamma * x + (1.0 - gamma) * y).collect())
}

/// `γ a + (1 − γ) b`.
pub fn interpolate_writer(a: &[f64], b: &[f64], gamma: f64) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    lerp(a, b, gamma)
}

/// Elementwise [`interpolate_writer`] over two conditioning sequences.
pub fn interpolate_wcts(a: &[Vec<f64>], b: &[Vec<f64>], gamma: f64) -> Result<Vec<Vec<f64>>> {
    check_gamma(gamma)?;
    if a.len() != b.len() {
        return Err(DsdError::Shape(format!("{} and {} vectors", a.len(), b.len())));
    }
    a.iter().zip(b).map(|(x, y)| lerp(x, y, gamma)).collect()
}

/// `Σ r_i C_i`; weights must be nonnegative and sum to one.
pub fn interpolate_char_bilinear(corners: [&Tensor; 4], r: [f64; 4]) -> Result<Tensor> {
    if r.iter().any(|&v| v < 0.0 || !v.is_finite()) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(DsdError::Invalid(format!("weights {r:?} must be nonnegative and sum to 1")));
    }
    let dims = corners[0].dims();
    if corners.iter().any(|c| c.dims() != dims) {
        return Err(DsdError::Shape("corner matrices differ in shape".into()));
    }
    let mut out = Tensor::zeros(dims.0, dims.1);
    for (c, w) in corners.iter().zip(r) {
        out.add_assign(&c.scale(w));
    }
    Ok(out)
}

/// Bilinear weights of the point `(u, v)` in the unit square, ordered
/// `(0,0), (1,0), (0,1), (1,1)`.
pub fn bilinear_weights(u: f64, v: f64) -> Result<[f64; 4]> {
    check_gamma(u)?;
    check_gamma(v)?;
    Ok([(1.0 - u) * (1.0 - v), u * (1.0 - v), (1.0 - u) * v, u * v])
}
