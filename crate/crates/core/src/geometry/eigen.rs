use std::f64::consts::PI;

/// Eigenvalues of a symmetric 3×3 matrix in ascending order.
///
/// Closed-form trigonometric solution of the characteristic cubic. Tiny
/// negative results from rounding are clamped to zero, so the input is
/// assumed positive semi-definite (a covariance).
///
/// The trigonometric form is only `sqrt(eps)` accurate next to a repeated
/// root, so the smallest eigenvalue is recomputed as `det / (λ1 λ2)`; the
/// product of the two larger roots stays accurate even when they coincide.
pub fn symmetric_eigenvalues(m: [[f64; 3]; 3]) -> [f64; 3] {
    let off = m[0][1] * m[0][1] + m[0][2] * m[0][2] + m[1][2] * m[1][2];
    let mut eig = if off == 0.0 {
        [m[0][0], m[1][1], m[2][2]]
    } else {
        let q = (m[0][0] + m[1][1] + m[2][2]) / 3.0;
        let d0 = m[0][0] - q;
        let d1 = m[1][1] - q;
        let d2 = m[2][2] - q;
        let p = ((d0 * d0 + d1 * d1 + d2 * d2 + 2.0 * off) / 6.0).sqrt();
        let b = [
            [d0 / p, m[0][1] / p, m[0][2] / p],
            [m[1][0] / p, d1 / p, m[1][2] / p],
            [m[2][0] / p, m[2][1] / p, d2 / p],
        ];
        let r = (det3(&b) / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let largest = q + 2.0 * p * phi.cos();
        let smallest = q + 2.0 * p * (phi + 2.0 * PI / 3.0).cos();
        let mut e = [smallest, 3.0 * q - largest - smallest, largest];
        e.sort_by(f64::total_cmp);
        let upper = e[1] * e[2];
        if upper > 0.0 {
            e[0] = (det3(&m) / upper).clamp(0.0, e[1].max(0.0));
        }
        e
    };
    eig.sort_by(f64::total_cmp);
    eig.map(|v| v.max(0.0))
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rotate(d: [f64; 3], angle: f64) -> [[f64; 3]; 3] {
        // R diag(d) R^T with R a rotation about (1,1,1)/sqrt(3)
        let (s, c) = angle.sin_cos();
        let u = [1.0 / 3f64.sqrt(); 3];
        let mut r = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let cross = match (i, j) {
                    (0, 1) => -u[2],
                    (0, 2) => u[1],
                    (1, 0) => u[2],
                    (1, 2) => -u[0],
                    (2, 0) => -u[1],
                    (2, 1) => u[0],
                    _ => 0.0,
                };
                r[i][j] = if i == j { c } else { 0.0 } + (1.0 - c) * u[i] * u[j] + s * cross;
            }
        }
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = (0..3).map(|k| r[i][k] * d[k] * r[j][k]).sum();
            }
        }
        m
    }

    #[test]
    fn diagonal_matrix() {
        assert_eq!(
            symmetric_eigenvalues([[3.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 2.0]]),
            [1.0, 2.0, 3.0]
        );
    }

    #[test]
    fn rotated_spectrum_is_recovered() {
        for &d in &[
            [0.5, 2.0, 7.0],
            [0.0, 1.0, 1.0],
            [1.0, 1.0, 1.0],
            [0.0, 0.0, 4.0],
        ] {
            let got = symmetric_eigenvalues(rotate(d, 0.7));
            let mut want = d;
            want.sort_by(f64::total_cmp);
            // the smallest root is polished; the others carry sqrt(eps) error at repeated roots
            assert!((got[0] - want[0]).abs() < 1e-12, "{got:?} vs {want:?}");
            for k in 1..3 {
                assert!((got[k] - want[k]).abs() < 1e-7, "{got:?} vs {want:?}");
            }
        }
    }

    #[test]
    fn trace_and_determinant_identities() {
        let m = [[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 1.0]];
        let e = symmetric_eigenvalues(m);
        let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        assert!((e.iter().sum::<f64>() - 8.0).abs() < 1e-12);
        assert!((e.iter().product::<f64>() - det).abs() < 1e-10);
    }
}
