//! Observed-information standard errors from a finite-difference Hessian.

/// Step for coordinate `x`.
pub fn fd_step(x: f64) -> f64 {
    (1e-4 * x.abs()).max(1e-5)
}

/// Central-difference Hessian of `f` at `x`.
pub fn hessian<F: Fn(&[f64]) -> f64>(f: F, x: &[f64]) -> Vec<Vec<f64>> {
    let n = x.len();
    let h: Vec<f64> = x.iter().map(|&v| fd_step(v)).collect();
    let f0 = f(x);
    let at = |moves: &[(usize, f64)]| {
        let mut p = x.to_vec();
        for &(i, d) in moves {
            p[i] += d;
        }
        f(&p)
    };
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        let plus = at(&[(i, h[i])]);
        let minus = at(&[(i, -h[i])]);
        out[i][i] = (plus - 2.0 * f0 + minus) / (h[i] * h[i]);
        for j in 0..i {
            let pp = at(&[(i, h[i]), (j, h[j])]);
            let pm = at(&[(i, h[i]), (j, -h[j])]);
            let mp = at(&[(i, -h[i]), (j, h[j])]);
            let mm = at(&[(i, -h[i]), (j, -h[j])]);
            let v = (pp - pm - mp + mm) / (4.0 * h[i] * h[j]);
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    out
}

/// Inverse of a symmetric positive-definite matrix through its Cholesky
/// factor. `None` when a pivot is not positive (relative to the diagonal
/// scale) or any entry is not finite.
pub fn invert_spd(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = m.len();
    if m.iter().flatten().any(|v| !v.is_finite()) {
        return None;
    }
    let scale = (0..n).map(|i| m[i][i].abs()).fold(0.0, f64::max);
    let tiny = scale * 1e-13;
    let mut l = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut d = m[j][j];
        for k in 0..j {
            d -= l[j][k] * l[j][k];
        }
        if !(d > tiny) {
            return None;
        }
        let d = d.sqrt();
        l[j][j] = d;
        for i in j + 1..n {
            let mut s = m[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = s / d;
        }
    }
    // invert L (lower triangular), then form L^-T L^-1
    let mut li = vec![vec![0.0; n]; n];
    for i in 0..n {
        li[i][i] = 1.0 / l[i][i];
        for j in 0..i {
            let mut s = 0.0;
            for k in j..i {
                s -= l[i][k] * li[k][j];
            }
            li[i][j] = s / l[i][i];
        }
    }
    let mut inv = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (i..n).map(|k| li[k][i] * li[k][j]).sum();
            inv[i][j] = s;
            inv[j][i] = s;
        }
    }
    Some(inv)
}

/// Square roots of the diagonal of the inverse Hessian of the negative
/// log-likelihood `f` at `x`.
pub fn standard_errors<F: Fn(&[f64]) -> f64>(f: F, x: &[f64]) -> Result<Vec<f64>, String> {
    let h = hessian(f, x);
    let inv = invert_spd(&h).ok_or_else(|| "Hessian is not positive definite".to_string())?;
    let se: Vec<f64> = (0..x.len()).map(|i| inv[i][i].sqrt()).collect();
    if se.iter().any(|v| !v.is_finite()) {
        return Err("standard errors are not finite".into());
    }
    Ok(se)
}
