//! Slow, independent reference computations used to check the library.

/// Column means by explicit summation.
pub fn mean(rows: &[Vec<f64>]) -> Vec<f64> {
    let d = rows.len() as f64;
    let n = rows[0].len();
    (0..n).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / d).collect()
}

/// `(1/D) sum_i (x_i - mu)(x_i - mu)^T` entry by entry.
pub fn covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mu = mean(rows);
    let n = mu.len();
    let d = rows.len() as f64;
    let mut c = vec![vec![0.0; n]; n];
    for r in rows {
        for a in 0..n {
            for b in 0..n {
                c[a][b] += (r[a] - mu[a]) * (r[b] - mu[b]);
            }
        }
    }
    for row in &mut c {
        for v in row.iter_mut() {
            *v /= d;
        }
    }
    c
}

/// Roots of `l^2 - tr l + det`, descending.
pub fn eigenvalues_2x2(m: &[Vec<f64>]) -> [f64; 2] {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    [tr / 2.0 + disc, tr / 2.0 - disc]
}

/// Roots of the characteristic cubic of a symmetric 3x3 matrix by the
/// trigonometric method, descending.
pub fn eigenvalues_3x3(m: &[Vec<f64>]) -> [f64; 3] {
    let p1 = m[0][1].powi(2) + m[0][2].powi(2) + m[1][2].powi(2);
    let q = (m[0][0] + m[1][1] + m[2][2]) / 3.0;
    if p1 == 0.0 {
        let mut d = [m[0][0], m[1][1], m[2][2]];
        d.sort_by(|a, b| b.total_cmp(a));
        return d;
    }
    let p2 = (m[0][0] - q).powi(2) + (m[1][1] - q).powi(2) + (m[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let b: Vec<Vec<f64>> = (0..3)
        .map(|i| (0..3).map(|j| (m[i][j] - if i == j { q } else { 0.0 }) / p).collect())
        .collect();
    let det_b = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1]) - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
        + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    let r = (det_b / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let l1 = q + 2.0 * p * phi.cos();
    let l3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    let l2 = 3.0 * q - l1 - l3;
    let mut out = [l1, l2, l3];
    out.sort_by(|a, b| b.total_cmp(a));
    out
}

/// Classical Jacobi: always rotate away the largest off-diagonal entry.
/// Returns descending eigenvalues and matching eigenvectors (as rows).
pub fn classical_jacobi(m: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for _ in 0..10_000 {
        let (mut p, mut q, mut big) = (0, 1, 0.0);
        for i in 0..n {
            for j in i + 1..n {
                if a[i][j].abs() > big {
                    big = a[i][j].abs();
                    p = i;
                    q = j;
                }
            }
        }
        if big < 1e-15 {
            break;
        }
        let theta = 0.5 * (2.0 * a[p][q]).atan2(a[q][q] - a[p][p]);
        let (s, c) = theta.sin_cos();
        for k in 0..n {
            let (akp, akq) = (a[k][p], a[k][q]);
            a[k][p] = c * akp - s * akq;
            a[k][q] = s * akp + c * akq;
        }
        for k in 0..n {
            let (apk, aqk) = (a[p][k], a[q][k]);
            a[p][k] = c * apk - s * aqk;
            a[q][k] = s * apk + c * aqk;
        }
        for row in v.iter_mut() {
            let (vp, vq) = (row[p], row[q]);
            row[p] = c * vp - s * vq;
            row[q] = s * vp + c * vq;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order.iter().map(|&i| (0..n).map(|k| v[k][i]).collect()).collect();
    (values, vectors)
}
