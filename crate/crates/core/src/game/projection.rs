use nalgebra::DVector;

/// Elementwise `max(0, v_k)`.
pub fn project_nonneg(v: &DVector<f64>) -> DVector<f64> {
    v.map(|x| x.max(0.0))
}

/// Elementwise `min(0, v_k)`.
pub fn project_nonpos(v: &DVector<f64>) -> DVector<f64> {
    v.map(|x| x.min(0.0))
}
