use super::NumericsError;

/// Central-difference gradient of `objective` at `x`.
pub fn finite_diff_grad<F>(mut objective: F, x: &[f64], h: f64) -> Result<Vec<f64>, NumericsError>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(NumericsError::InvalidStep(h));
    }
    let mut point = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        point[i] = x[i] + h;
        let up = objective(&point);
        point[i] = x[i] - h;
        let down = objective(&point);
        point[i] = x[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(NumericsError::NonFiniteAt(i));
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// Central-difference Jacobian of a vector function, one column per
/// coordinate; coordinate `i` uses step `step(i, x_i)`. Returned row-major
/// as `jac[output][coordinate]`.
pub fn finite_diff_jacobian<F, S>(
    mut function: F,
    x: &[f64],
    step: S,
) -> Result<Vec<Vec<f64>>, NumericsError>
where
    F: FnMut(&[f64]) -> Option<Vec<f64>>,
    S: Fn(usize, f64) -> f64,
{
    let n = x.len();
    let mut point = x.to_vec();
    let mut columns = Vec::with_capacity(n);
    for i in 0..n {
        let h = step(i, x[i]);
        if !(h > 0.0 && h.is_finite()) {
            return Err(NumericsError::InvalidStep(h));
        }
        point[i] = x[i] + h;
        let up = function(&point).ok_or(NumericsError::NonFiniteAt(i))?;
        point[i] = x[i] - h;
        let down = function(&point).ok_or(NumericsError::NonFiniteAt(i))?;
        point[i] = x[i];
        let col: Vec<f64> = up.iter().zip(&down).map(|(u, d)| (u - d) / (2.0 * h)).collect();
        if col.iter().any(|v| !v.is_finite()) {
            return Err(NumericsError::NonFiniteAt(i));
        }
        columns.push(col);
    }
    let m = columns.first().map_or(0, Vec::len);
    Ok((0..m).map(|r| columns.iter().map(|c| c[r]).collect()).collect())
}
