//! Central finite-difference verification of analytic gradients.

/// Outcome of [`grad_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Components whose analytic and numeric magnitudes both fall below this
/// are compared on an absolute scale instead of a relative one.
pub const DEFAULT_FLOOR: f64 = 1e-8;

/// Compares `analytic` against `(f(x + h e_i) - f(x - h e_i)) / 2h` for
/// every coordinate. The relative error of a component is
/// `|a - n| / max(|a|, |n|, floor)`.
pub fn grad_check(
    mut f: impl FnMut(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
    h: f64,
    floor: f64,
) -> GradCheckReport {
    assert_eq!(x.len(), analytic.len(), "one analytic component per input");
    let mut point = x.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    for i in 0..x.len() {
        point[i] = x[i] + h;
        let plus = f(&point);
        point[i] = x[i] - h;
        let minus = f(&point);
        point[i] = x[i];
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        if err > report.max_rel_error || i == 0 {
            report = GradCheckReport {
                max_rel_error: err,
                worst_index: i,
                analytic: a,
                numeric,
            };
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_exact() {
        let w = [0.3, -1.2, 2.5];
        let f = |x: &[f64]| x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        let r = grad_check(f, &[1.0, 2.0, -0.5], &w, 1e-3, DEFAULT_FLOOR);
        assert!(r.max_rel_error < 1e-10, "{r:?}");
    }

    #[test]
    fn detects_wrong_gradient() {
        let f = |x: &[f64]| x[0] * x[0];
        let r = grad_check(f, &[3.0], &[5.0], 1e-3, DEFAULT_FLOOR);
        assert!(r.max_rel_error > 0.1);
    }
}
