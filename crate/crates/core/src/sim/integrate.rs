use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Euler,
    #[default]
    Rk4,
}

/// One explicit step of `y' = f(t, y)`. Also returns `f(t, y)`, which the
/// caller uses for convergence detection.
pub fn integrate_step<F>(mut f: F, t: f64, y: &DVector<f64>, h: f64, method: Integrator) -> Result<(DVector<f64>, DVector<f64>)>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    let k1 = f(t, y)?;
    let next = match method {
        Integrator::Euler => y + &k1 * h,
        Integrator::Rk4 => {
            let k2 = f(t + 0.5 * h, &(y + &k1 * (0.5 * h)))?;
            let k3 = f(t + 0.5 * h, &(y + &k2 * (0.5 * h)))?;
            let k4 = f(t + h, &(y + &k3 * h))?;
            y + (&k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
        }
    };
    Ok((next, k1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(_: f64, y: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(-y)
    }

    #[test]
    fn rk4_on_linear_decay() {
        let y0 = DVector::from_element(1, 1.0);
        let (y, k1) = integrate_step(decay, 0.0, &y0, 0.1, Integrator::Rk4).unwrap();
        assert!((y[0] - 0.9048375).abs() < 1e-7);
        assert!((y[0] - (-0.1f64).exp()).abs() < 1e-6);
        assert_eq!(k1[0], -1.0);
    }

    #[test]
    fn euler_on_linear_decay() {
        let y0 = DVector::from_element(1, 1.0);
        let (y, _) = integrate_step(decay, 0.0, &y0, 0.1, Integrator::Euler).unwrap();
        assert!((y[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn time_argument_reaches_stages() {
        let mut seen = Vec::new();
        let f = |t: f64, _: &DVector<f64>| {
            seen.push(t);
            Ok(DVector::from_element(1, t))
        };
        let (y, _) = integrate_step(f, 1.0, &DVector::zeros(1), 0.5, Integrator::Rk4).unwrap();
        assert_eq!(seen, vec![1.0, 1.25, 1.25, 1.5]);
        // Exact for y' = t.
        assert!((y[0] - (1.5f64.powi(2) - 1.0) / 2.0).abs() < 1e-15);
    }
}
