//! Small dense symmetric solves for the linear learners.

/// Cholesky factorization of a row-major `p x p` SPD matrix. Returns the
/// lower factor, or `None` when a pivot is not safely positive.
pub(crate) fn cholesky(a: &[f64], p: usize) -> Option<Vec<f64>> {
    let scale = (0..p).map(|i| a[i * p + i].abs()).fold(0.0_f64, f64::max).max(1e-300);
    let mut l = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            if i == j {
                if s <= 1e-12 * scale {
                    return None;
                }
                l[i * p + i] = s.sqrt();
            } else {
                l[i * p + j] = s / l[j * p + j];
            }
        }
    }
    Some(l)
}

pub(crate) fn cholesky_solve(l: &[f64], p: usize, b: &[f64]) -> Vec<f64> {
    let mut y = b.to_vec();
    for i in 0..p {
        for k in 0..i {
            y[i] -= l[i * p + k] * y[k];
        }
        y[i] /= l[i * p + i];
    }
    for i in (0..p).rev() {
        for k in i + 1..p {
            y[i] -= l[k * p + i] * y[k];
        }
        y[i] /= l[i * p + i];
    }
    y
}

/// Solve `a x = b`; if `a` is numerically singular, add a growing ridge to
/// the diagonal until it factors. The flag reports whether a ridge was used.
pub(crate) fn solve_spd(a: &[f64], p: usize, b: &[f64]) -> (Vec<f64>, bool) {
    if p == 0 {
        return (Vec::new(), false);
    }
    if let Some(l) = cholesky(a, p) {
        return (cholesky_solve(&l, p, b), false);
    }
    let trace: f64 = (0..p).map(|i| a[i * p + i]).sum::<f64>().max(1e-12);
    let mut ridge = 1e-8 * trace / p as f64;
    loop {
        let mut reg = a.to_vec();
        for i in 0..p {
            reg[i * p + i] += ridge;
        }
        if let Some(l) = cholesky(&reg, p) {
            return (cholesky_solve(&l, p, b), true);
        }
        ridge *= 10.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_spd_system() {
        let a = [4.0, 2.0, 2.0, 3.0];
        let (x, reg) = solve_spd(&a, 2, &[2.0, 1.0]);
        assert!(!reg);
        assert!((4.0 * x[0] + 2.0 * x[1] - 2.0).abs() < 1e-12);
        assert!((2.0 * x[0] + 3.0 * x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singular_system_falls_back_to_ridge() {
        let a = [1.0, 1.0, 1.0, 1.0];
        let (x, reg) = solve_spd(&a, 2, &[2.0, 2.0]);
        assert!(reg);
        assert!((x[0] + x[1] - 2.0).abs() < 1e-6);
    }
}
