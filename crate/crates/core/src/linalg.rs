//! Small dense solves used by the affine estimators.

/// Solves `a · x = b` for a 3×3 system by Gaussian elimination with partial
/// pivoting. Returns `None` when a pivot vanishes.
pub fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap_or(col);
        if a[pivot][col].abs() < 1e-300 || !a[pivot][col].is_finite() {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut s = b[row];
        for k in row + 1..3 {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_permuted_system() {
        let a = [[0.0, 2.0, 1.0], [1.0, 0.0, 0.0], [3.0, 1.0, 5.0]];
        let x = solve3(a, [5.0, 1.0, 20.0]).unwrap();
        for (r, rhs) in a.iter().zip([5.0, 1.0, 20.0]) {
            let lhs: f64 = r.iter().zip(&x).map(|(a, x)| a * x).sum();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_is_none() {
        assert!(solve3([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 0.0, 1.0]], [1.0, 2.0, 3.0]).is_none());
    }
}
