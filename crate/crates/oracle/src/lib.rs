//! Reference computations for the test suites.
//!
//! Everything here works on plain arrays and deliberately shares no code
//! with `classtrack-core`; each routine takes a different numerical route
//! from the implementation it is used to check.

#![allow(clippy::needless_range_loop)]

pub type Mat = Vec<Vec<f64>>;

pub fn zeros(n: usize) -> Mat {
    vec![vec![0.0; n]; n]
}

pub fn identity(n: usize) -> Mat {
    let mut m = zeros(n);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

pub fn transpose(a: &Mat) -> Mat {
    let n = a.len();
    let m = a[0].len();
    (0..m).map(|j| (0..n).map(|i| a[i][j]).collect()).collect()
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    let k = b.len();
    let m = b[0].len();
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            out[i][j] = (0..k).map(|p| a[i][p] * b[p][j]).sum();
        }
    }
    out
}

pub fn matvec(a: &Mat, x: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|row| row.iter().zip(x).map(|(r, v)| r * v).sum())
        .collect()
}

pub fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x + y).collect())
        .collect()
}

/// Gauss-Jordan inverse with partial pivoting. `None` when singular.
pub fn invert(a: &Mat) -> Option<Mat> {
    let n = a.len();
    let mut aug: Mat = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| {
            aug[x][col]
                .abs()
                .partial_cmp(&aug[y][col].abs())
                .unwrap()
        })?;
        if aug[pivot][col].abs() < 1e-300 {
            return None;
        }
        aug.swap(col, pivot);
        let p = aug[col][col];
        for v in aug[col].iter_mut() {
            *v /= p;
        }
        for row in 0..n {
            if row != col {
                let f = aug[row][col];
                if f != 0.0 {
                    for j in 0..2 * n {
                        aug[row][j] -= f * aug[col][j];
                    }
                }
            }
        }
    }
    Some(aug.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn jacobi_eigenvalues(a: &Mat) -> Vec<f64> {
    let n = a.len();
    let mut m = a.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        let scale: f64 = (0..n).map(|i| m[i][i] * m[i][i]).sum::<f64>() + off;
        if off <= 1e-30 * scale.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// IoU of two center-format boxes `[px, py, l, h]` estimated by counting
/// cell centers of a `cells x cells` raster over the union's bounding rectangle.
pub fn raster_iou(a: [f64; 4], b: [f64; 4], cells: usize) -> f64 {
    let span = |bx: [f64; 4]| {
        (
            bx[0] - bx[2] / 2.0,
            bx[0] + bx[2] / 2.0,
            bx[1] - bx[3] / 2.0,
            bx[1] + bx[3] / 2.0,
        )
    };
    let (ax0, ax1, ay0, ay1) = span(a);
    let (bx0, bx1, by0, by1) = span(b);
    let (x0, x1) = (ax0.min(bx0), ax1.max(bx1));
    let (y0, y1) = (ay0.min(by0), ay1.max(by1));
    let dx = (x1 - x0) / cells as f64;
    let dy = (y1 - y0) / cells as f64;
    let (mut inter, mut union) = (0usize, 0usize);
    for i in 0..cells {
        let x = x0 + (i as f64 + 0.5) * dx;
        for j in 0..cells {
            let y = y0 + (j as f64 + 0.5) * dy;
            let in_a = x >= ax0 && x <= ax1 && y >= ay0 && y <= ay1;
            let in_b = x >= bx0 && x <= bx1 && y >= by0 && y <= by1;
            inter += (in_a && in_b) as usize;
            union += (in_a || in_b) as usize;
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Weighted first and second central moments of a proposal group.
pub struct Moments {
    pub weights: Vec<f64>,
    pub mean_box: [f64; 4],
    pub mean_conf: Vec<f64>,
    pub scatter: Mat,
}

/// Brute-force moments: normalizes `raw_weights`, then accumulates the mean
/// and the second moment about the origin, subtracting the outer product of
/// the mean at the end (E[xx^T] - mu mu^T) rather than summing centered terms.
pub fn weighted_moments(boxes: &[[f64; 4]], confs: &[Vec<f64>], raw_weights: &[f64]) -> Moments {
    let total: f64 = raw_weights.iter().sum();
    let weights: Vec<f64> = raw_weights.iter().map(|w| w / total).collect();
    let mut mean_box = [0.0; 4];
    let mut second = zeros(4);
    for (w, bx) in weights.iter().zip(boxes) {
        for i in 0..4 {
            mean_box[i] += w * bx[i];
            for j in 0..4 {
                second[i][j] += w * bx[i] * bx[j];
            }
        }
    }
    let mut scatter = zeros(4);
    for i in 0..4 {
        for j in 0..4 {
            scatter[i][j] = second[i][j] - mean_box[i] * mean_box[j];
        }
    }
    let mut mean_conf = vec![0.0; confs[0].len()];
    for (w, c) in weights.iter().zip(confs) {
        for (acc, v) in mean_conf.iter_mut().zip(c) {
            *acc += w * v;
        }
    }
    Moments {
        weights,
        mean_box,
        mean_conf,
        scatter,
    }
}

/// Weighted scatter summed directly over centered deviations.
pub fn centered_scatter(boxes: &[[f64; 4]], weights: &[f64], mean: [f64; 4]) -> Mat {
    let mut s = zeros(4);
    for (w, bx) in weights.iter().zip(boxes) {
        for i in 0..4 {
            for j in 0..4 {
                s[i][j] += w * (bx[i] - mean[i]) * (bx[j] - mean[j]);
            }
        }
    }
    s
}

/// Static-state batch estimate in information form: sums inverse
/// covariances from a prior and every measurement, then solves once.
pub fn information_batch(
    prior_mean: &[f64],
    prior_cov: &Mat,
    measurements: &[(Vec<f64>, Mat)],
) -> Option<(Vec<f64>, Mat)> {
    let mut info = invert(prior_cov)?;
    let mut eta = matvec(&info, prior_mean);
    for (z, r) in measurements {
        let r_inv = invert(r)?;
        info = add(&info, &r_inv);
        let contrib = matvec(&r_inv, z);
        for (e, c) in eta.iter_mut().zip(contrib) {
            *e += c;
        }
    }
    let cov = invert(&info)?;
    let mean = matvec(&cov, &eta);
    Some((mean, cov))
}

/// `(prior + sum z_i) / (t + 1)` by direct summation.
pub fn running_average(prior: &[f64], measurements: &[Vec<f64>]) -> Vec<f64> {
    let mut acc = prior.to_vec();
    for z in measurements {
        for (a, v) in acc.iter_mut().zip(z) {
            *a += v;
        }
    }
    let n = (measurements.len() + 1) as f64;
    acc.iter().map(|a| a / n).collect()
}

/// Scalar measurement fusion by adding precisions.
pub fn scalar_information_update(prior_mean: f64, prior_var: f64, z: f64, r: f64) -> (f64, f64) {
    let info = 1.0 / prior_var + 1.0 / r;
    let var = 1.0 / info;
    (var * (prior_mean / prior_var + z / r), var)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_recovers_diagonal() {
        let mut m = zeros(4);
        for (i, v) in [4.0, -1.0, 2.0, 3.0].iter().enumerate() {
            m[i][i] = *v;
        }
        assert_eq!(jacobi_eigenvalues(&m), vec![-1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn jacobi_on_rotated_matrix() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3
        let ev = jacobi_eigenvalues(&vec![vec![2.0, 1.0], vec![1.0, 2.0]]);
        assert!((ev[0] - 1.0).abs() < 1e-12 && (ev[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn invert_roundtrip() {
        let a = vec![
            vec![4.0, 1.0, 0.0],
            vec![1.0, 3.0, 0.5],
            vec![0.0, 0.5, 2.0],
        ];
        let p = matmul(&a, &invert(&a).unwrap());
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((p[i][j] - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn raster_matches_third() {
        let v = raster_iou([0.0, 0.0, 2.0, 2.0], [1.0, 0.0, 2.0, 2.0], 600);
        assert!((v - 1.0 / 3.0).abs() < 5e-3);
    }
}
