//! The handful of summary statistics the experiments report. Nothing here
//! is fancy — medians and small least-squares fits — but they decide
//! pass/fail verdicts, so they get exact unit tests.

use crate::error::LabError;
use crate::Result;

/// Median with the even-count average convention. Input order is irrelevant.
pub fn median(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(LabError::config("median of an empty sample"));
    }
    if xs.iter().any(|v| !v.is_finite()) {
        return Err(LabError::config("median of a non-finite sample"));
    }
    let mut s = xs.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("finite values compare"));
    let n = s.len();
    Ok(if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    })
}

/// Least-squares line y ≈ intercept + slope·x.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(LabError::config(format!(
            "linear fit needs two matched samples, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
    }
    if sxx == 0.0 {
        return Err(LabError::config("linear fit with constant abscissae"));
    }
    let slope = sxy / sxx;
    Ok((my - slope * mx, slope))
}

/// Least-squares parabola y ≈ a0 + a1·x + a2·x², by solving the 3×3 normal
/// equations with partial pivoting. Needs at least three distinct x.
pub fn quadratic_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(LabError::config(format!(
            "quadratic fit needs three matched samples, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    // moments up to x^4
    let mut s = [0.0f64; 5];
    let mut t = [0.0f64; 3];
    for (&xi, &yi) in x.iter().zip(y) {
        let mut p = 1.0;
        for sk in s.iter_mut() {
            *sk += p;
            p *= xi;
        }
        t[0] += yi;
        t[1] += yi * xi;
        t[2] += yi * xi * xi;
    }
    let mut a = [
        [s[0], s[1], s[2], t[0]],
        [s[1], s[2], s[3], t[1]],
        [s[2], s[3], s[4], t[2]],
    ];
    for col in 0..3 {
        let piv = (col..3)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, piv);
        if a[col][col].abs() < 1e-300 {
            return Err(LabError::config("quadratic fit is singular (repeated x?)"));
        }
        for row in 0..3 {
            if row == col {
                continue;
            }
            let f = a[row][col] / a[col][col];
            for k in col..4 {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    Ok((a[0][3] / a[0][0], a[1][3] / a[1][1], a[2][3] / a[2][2]))
}

/// True when the sequence strictly decreases.
pub fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}
