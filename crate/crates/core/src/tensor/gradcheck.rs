//! Central finite-difference verification of analytic gradients.

use crate::error::{Error, Result};

use super::{DenseArray, Scalar};

/// Smallest magnitude used as the denominator of the relative error, so that
/// coordinates whose true gradient is (near) zero are compared absolutely.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Coordinate where the maximum was attained.
    pub worst_index: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

/// Compares the analytic gradient returned by `f` against central differences
/// `(f(x + h e_i) - f(x - h e_i)) / 2h` over every coordinate of `point`.
///
/// `f` returns the function value together with its analytic gradient.
pub fn grad_check<T, F>(mut f: F, point: &DenseArray<T>, step: f64) -> Result<GradCheckReport>
where
    T: Scalar,
    F: FnMut(&DenseArray<T>) -> Result<(T, DenseArray<T>)>,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let (value, grad) = f(point)?;
    if !value.is_finite() {
        return Err(Error::Divergence {
            what: "function value at the base point".into(),
            step: 0,
        });
    }
    if grad.shape() != point.shape() {
        return Err(Error::InvalidArgument(format!(
            "gradient shape {:?} differs from point shape {:?}",
            grad.shape(),
            point.shape()
        )));
    }

    let h = T::lit(step);
    let mut probe = point.clone();
    let mut numeric = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        let x = point.data()[i];
        probe.data_mut()[i] = x + h;
        let plus = f(&probe)?.0;
        probe.data_mut()[i] = x - h;
        let minus = f(&probe)?.0;
        probe.data_mut()[i] = x;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Divergence {
                what: "function value while probing".into(),
                step: i,
            });
        }
        numeric.push((plus.as_f64() - minus.as_f64()) / (2.0 * step));
    }

    let analytic: Vec<f64> = grad.data().iter().map(|v| v.as_f64()).collect();
    let (worst_index, max_relative_error) = analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .enumerate()
        .fold(
            (0, 0.0),
            |best, (i, e)| if e > best.1 { (i, e) } else { best },
        );

    Ok(GradCheckReport {
        max_relative_error,
        worst_index,
        analytic,
        numeric,
    })
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_ERROR_FLOOR)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Axis, Graph};

    fn via_graph(
        build: impl Fn(&mut Graph<f64>) -> crate::tensor::NodeId,
    ) -> impl FnMut(&DenseArray<f64>) -> Result<(f64, DenseArray<f64>)> {
        move |x| {
            let mut g = Graph::new();
            let root = build(&mut g);
            let v = g.forward(&[("x", x.clone())], root)?;
            let mut grads = g.backward(root, &["x"])?;
            Ok((v.item(), grads.remove("x").unwrap()))
        }
    }

    #[test]
    fn square_at_three() {
        let f = via_graph(|g| {
            let x = g.leaf("x");
            let s = g.square(x);
            g.sum(s, Axis::All)
        });
        let report = grad_check(f, &DenseArray::scalar(3.0), 1e-5).unwrap();
        assert!(report.max_relative_error <= 1e-8, "{report:?}");
    }

    #[test]
    fn linear_function_is_exact() {
        let f = via_graph(|g| {
            let x = g.leaf("x");
            g.sum(x, Axis::All)
        });
        let point = DenseArray::vector(vec![0.37, -1.2, 5.5, 2.0e3, -7.125]).unwrap();
        let report = grad_check(f, &point, 0.25).unwrap();
        assert!(report.max_relative_error <= 1e-12, "{report:?}");
    }

    #[test]
    fn rejects_nonpositive_step() {
        let f = |x: &DenseArray<f64>| Ok((x.item(), DenseArray::scalar(1.0)));
        assert!(grad_check(f, &DenseArray::scalar(1.0), 0.0).is_err());
    }

    #[test]
    fn non_finite_probe_fails() {
        // log(x) at x = 1e-6 probed with h = 1e-5 crosses zero.
        let f = |x: &DenseArray<f64>| {
            let v = x.item().ln();
            Ok((v, DenseArray::scalar(1.0 / x.item())))
        };
        assert!(grad_check(f, &DenseArray::scalar(1e-6), 1e-5).is_err());
    }
}
