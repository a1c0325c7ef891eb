//! Least-squares slope of a log-log curve.

use serde::Serialize;

use neural_eot::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of `log₂ err` on `log₂ n`.
///
/// `r_squared` is 1 when the residuals vanish, including the flat case.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<LogLogFit, Error> {
    if points.len() < 2 {
        return Err(Error::Domain(format!(
            "a slope needs at least 2 points, got {}",
            points.len()
        )));
    }
    for &(n, e) in points {
        if !(n > 0.0 && e > 0.0) || !n.is_finite() || !e.is_finite() {
            return Err(Error::Domain(format!(
                "log-log fit needs positive finite values, got ({n}, {e})"
            )));
        }
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.log2()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.log2()).collect();
    let len = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / len;
    let my = ys.iter().sum::<f64>() / len;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("log-log fit needs at least two distinct n".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r_squared = if ss_res == 0.0 || ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(LogLogFit {
        slope,
        intercept,
        r_squared,
    })
}
