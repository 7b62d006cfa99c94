//! Ordinary least squares on log-log data.

/// Result of fitting `ln y = intercept + slope·ln x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in natural-log units.
    pub residual: f64,
}

/// Caller guarantees at least two points, all strictly positive, with
/// distinct abscissae.
pub(crate) fn log_log_fit(x: &[f64], y: &[f64]) -> LogLogFit {
    debug_assert_eq!(x.len(), y.len());
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(a, b)| {
            let r = b - (intercept + slope * a);
            r * r
        })
        .sum();
    LogLogFit {
        slope,
        intercept,
        residual: (ss / n).sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let x = [1.0, 2.0, 5.0, 10.0, 30.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-1.5)).collect();
        let fit = log_log_fit(&x, &y);
        assert!((fit.slope + 1.5).abs() < 1e-12);
        assert!((fit.intercept.exp() - 3.0).abs() < 1e-12);
        assert!(fit.residual < 1e-12);
    }
}
