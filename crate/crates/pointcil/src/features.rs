//! Hand-crafted per-point features: PCA normals, height above the scene
//! floor, k-neighbor ball density, the geometric/semantic feature matrices
//! consumed by prototype learning, and per-edge feature differences.

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::knn::KnnIndex;
use crate::linalg::{sym3_smallest_eigenvector, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Geometric,
    Semantic,
    Embedding,
}

/// N x D feature matrix with named columns.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    pub values: Matrix,
    pub kind: FeatureKind,
    pub column_names: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(values: Matrix, kind: FeatureKind, column_names: Vec<String>) -> Result<Self> {
        if values.cols() == 0 || column_names.len() != values.cols() {
            return Err(Error::ShapeMismatch(format!(
                "{} column names for {} columns",
                column_names.len(),
                values.cols()
            )));
        }
        if !values.is_finite() {
            return Err(Error::ShapeMismatch("non-finite feature value".into()));
        }
        Ok(FeatureMatrix {
            values,
            kind,
            column_names,
        })
    }

    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn cols(&self) -> usize {
        self.values.cols()
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = sub(a, b);
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Canonical sign: the largest-magnitude component is made positive;
/// magnitude ties prefer +z, then +y, then +x.
fn canonicalize_sign(v: [f64; 3]) -> [f64; 3] {
    let mut best = 2usize;
    for cand in [1usize, 0usize] {
        if v[cand].abs() > v[best].abs() {
            best = cand;
        }
    }
    if v[best] < 0.0 {
        return [-v[0], -v[1], -v[2]];
    }
    v
}

/// Per-point unit normals from the smallest principal direction of the
/// k-neighborhood covariance (the neighborhood includes the point itself).
/// Degenerate neighborhoods yield (0, 0, 1).
pub fn estimate_normals(
    cloud: &PointCloud,
    index: &KnnIndex,
    k: usize,
) -> Result<Vec<[f64; 3]>> {
    if k < 3 {
        return Err(Error::InvalidK(format!("normal estimation needs k >= 3, got {k}")));
    }
    let n = cloud.len();
    let mut normals = Vec::with_capacity(n);
    for i in 0..n {
        let nbrs = index.query(i, k);
        let m = nbrs.len() as f64;
        let mut mean = [0.0f64; 3];
        for &q in &nbrs {
            let p = cloud.positions[q];
            for d in 0..3 {
                mean[d] += p[d];
            }
        }
        for d in 0..3 {
            mean[d] /= m;
        }
        let mut cov = [[0.0f64; 3]; 3];
        for &q in &nbrs {
            let d = sub(cloud.positions[q], mean);
            for r in 0..3 {
                for c in 0..3 {
                    cov[r][c] += d[r] * d[c];
                }
            }
        }
        for r in 0..3 {
            for c in 0..3 {
                cov[r][c] /= m;
            }
        }
        let trace = cov[0][0] + cov[1][1] + cov[2][2];
        if trace < 1e-24 {
            normals.push([0.0, 0.0, 1.0]);
            continue;
        }
        normals.push(canonicalize_sign(sym3_smallest_eigenvector(cov)));
    }
    Ok(normals)
}

/// Height above the scene floor: h_i = z_i - min_j z_j. Non-negative.
pub fn compute_height(cloud: &PointCloud) -> Vec<f64> {
    let min_z = cloud
        .positions
        .iter()
        .map(|p| p[2])
        .fold(f64::INFINITY, f64::min);
    cloud.positions.iter().map(|p| p[2] - min_z).collect()
}

/// k-th-neighbor ball density: rho_i = k / ((4/3) pi r_k^3) with r_k the
/// distance to the k-th nearest neighbor, the point itself excluded.
/// Coincident points (r_k = 0) are clamped to the largest finite density in
/// the cloud; k is clamped to N-1 on small clouds, and a single-point cloud
/// gets density 1.
pub fn estimate_density(cloud: &PointCloud, index: &KnnIndex, k: usize) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(Error::InvalidK(format!("density estimation needs k >= 2, got {k}")));
    }
    let n = cloud.len();
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let k_eff = k.min(n - 1);
    let mut rho = Vec::with_capacity(n);
    let mut max_finite = f64::NEG_INFINITY;
    for i in 0..n {
        let nbrs = index.query(i, k_eff + 1);
        let last = *nbrs.last().unwrap();
        let r = dist(cloud.positions[i], cloud.positions[last]);
        let v = if r > 0.0 {
            let d = k_eff as f64 / (4.0 / 3.0 * std::f64::consts::PI * r * r * r);
            max_finite = max_finite.max(d);
            d
        } else {
            f64::INFINITY
        };
        rho.push(v);
    }
    let clamp_to = if max_finite.is_finite() { max_finite } else { 1.0 };
    for v in rho.iter_mut() {
        if !v.is_finite() {
            *v = clamp_to;
        }
    }
    Ok(rho)
}

/// Zero-mean unit-variance standardization (population variance); a
/// zero-variance column standardizes to all zeros.
fn standardize(xs: &[f64]) -> Vec<f64> {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    if var < 1e-24 {
        return vec![0.0; xs.len()];
    }
    let sd = var.sqrt();
    xs.iter().map(|x| (x - mean) / sd).collect()
}

/// Columns [n_x, n_y, n_z, standardized height].
pub fn geometric_feature(cloud: &PointCloud, index: &KnnIndex, k: usize) -> Result<FeatureMatrix> {
    let normals = estimate_normals(cloud, index, k)?;
    let height = standardize(&compute_height(cloud));
    let mut m = Matrix::zeros(cloud.len(), 4);
    for i in 0..cloud.len() {
        let row = m.row_mut(i);
        row[0] = normals[i][0];
        row[1] = normals[i][1];
        row[2] = normals[i][2];
        row[3] = height[i];
    }
    FeatureMatrix::new(
        m,
        FeatureKind::Geometric,
        vec!["n_x".into(), "n_y".into(), "n_z".into(), "height".into()],
    )
}

/// Columns [standardized log density, r, g, b]; color columns are zeros when
/// the cloud carries no colors.
pub fn semantic_feature(cloud: &PointCloud, index: &KnnIndex, k: usize) -> Result<FeatureMatrix> {
    let rho = estimate_density(cloud, index, k)?;
    let log_rho = standardize(&rho.iter().map(|v| v.ln()).collect::<Vec<_>>());
    let mut m = Matrix::zeros(cloud.len(), 4);
    for i in 0..cloud.len() {
        let row = m.row_mut(i);
        row[0] = log_rho[i];
        if let Some(colors) = &cloud.colors {
            row[1] = colors[i][0];
            row[2] = colors[i][1];
            row[3] = colors[i][2];
        }
    }
    FeatureMatrix::new(
        m,
        FeatureKind::Semantic,
        vec!["log_density".into(), "r".into(), "g".into(), "b".into()],
    )
}

/// N x k x 2D edge tensor: entry (i, j) = concat(f_i, f_q - f_i) for the
/// j-th neighbor q of point i.
#[derive(Debug, Clone)]
pub struct EdgeTensor {
    pub n: usize,
    pub k: usize,
    /// width of one edge vector (2D)
    pub width: usize,
    data: Vec<f64>,
    /// neighbor index per (i, j)
    pub neighbors: Vec<usize>,
}

impl EdgeTensor {
    pub fn edge(&self, i: usize, j: usize) -> &[f64] {
        let w = self.width;
        let off = (i * self.k + j) * w;
        &self.data[off..off + w]
    }

    pub fn neighbor(&self, i: usize, j: usize) -> usize {
        self.neighbors[i * self.k + j]
    }

    pub fn from_parts(n: usize, k: usize, width: usize, data: Vec<f64>, neighbors: Vec<usize>) -> Result<Self> {
        if data.len() != n * k * width || neighbors.len() != n * k {
            return Err(Error::ShapeMismatch("edge tensor size".into()));
        }
        Ok(EdgeTensor {
            n,
            k,
            width,
            data,
            neighbors,
        })
    }
}

/// Edge differences against the k nearest neighbors of each point, the point
/// itself excluded from its own neighbor list. Clouds with fewer than k other
/// points repeat the last available neighbor to keep the tensor rectangular
/// (harmless under downstream max pooling); a single-point cloud pairs the
/// point with itself, giving a zero difference half.
pub fn edge_differences(feats: &FeatureMatrix, index: &KnnIndex, k: usize) -> Result<EdgeTensor> {
    if k < 1 {
        return Err(Error::InvalidK("edge differences need k >= 1".into()));
    }
    let n = feats.rows();
    let d = feats.cols();
    if n != index.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} feature rows but {} indexed points",
            n,
            index.len()
        )));
    }
    let width = 2 * d;
    let mut data = vec![0.0f64; n * k * width];
    let mut neighbors = vec![0usize; n * k];
    for i in 0..n {
        let mut others: Vec<usize> = index
            .query(i, k + 1)
            .into_iter()
            .filter(|&q| q != i)
            .take(k)
            .collect();
        if others.is_empty() {
            others.push(i);
        }
        while others.len() < k {
            others.push(*others.last().unwrap());
        }
        let fi = feats.values.row(i);
        for (j, &q) in others.iter().enumerate() {
            neighbors[i * k + j] = q;
            let fq = feats.values.row(q);
            let off = (i * k + j) * width;
            for c in 0..d {
                data[off + c] = fi[c];
                data[off + d + c] = fq[c] - fi[c];
            }
        }
    }
    EdgeTensor::from_parts(n, k, width, data, neighbors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{generate_scene, SceneSpec};
    use crate::rng::Rng;

    fn cloud_from(positions: Vec<[f64; 3]>) -> PointCloud {
        let n = positions.len();
        PointCloud::new(positions, None, vec![0; n], vec!["c".into()]).unwrap()
    }

    fn grid_xy(nx: usize, ny: usize, z: f64) -> Vec<[f64; 3]> {
        let mut v = Vec::new();
        for i in 0..nx {
            for j in 0..ny {
                v.push([i as f64 * 0.1, j as f64 * 0.1, z]);
            }
        }
        v
    }

    #[test]
    fn normals_on_z_plane() {
        let c = cloud_from(grid_xy(6, 6, 0.0));
        let idx = KnnIndex::build(&c);
        for n in estimate_normals(&c, &idx, 8).unwrap() {
            assert!((n[0].abs() < 1e-9) && (n[1].abs() < 1e-9), "{n:?}");
            assert!((n[2] - 1.0).abs() < 1e-9, "{n:?}");
        }
    }

    #[test]
    fn normals_on_x_plane_sign_canonicalized() {
        let mut pts = Vec::new();
        for i in 0..6 {
            for j in 0..6 {
                pts.push([0.0, i as f64 * 0.1, j as f64 * 0.1]);
            }
        }
        let c = cloud_from(pts);
        let idx = KnnIndex::build(&c);
        for n in estimate_normals(&c, &idx, 8).unwrap() {
            assert!((n[0] - 1.0).abs() < 1e-9, "{n:?}");
        }
    }

    #[test]
    fn normals_rejects_small_k() {
        let c = cloud_from(grid_xy(3, 3, 0.0));
        let idx = KnnIndex::build(&c);
        assert!(matches!(
            estimate_normals(&c, &idx, 2),
            Err(Error::InvalidK(_))
        ));
    }

    /// Independent oracle: least-squares plane z = ax + by + c fit to the
    /// whole cloud via 3x3 normal equations, normal = (-a, -b, 1)/norm.
    fn lsq_plane_normal(positions: &[[f64; 3]]) -> [f64; 3] {
        let mut ata = [[0.0f64; 3]; 3];
        let mut atz = [0.0f64; 3];
        for p in positions {
            let row = [p[0], p[1], 1.0];
            for r in 0..3 {
                for c in 0..3 {
                    ata[r][c] += row[r] * row[c];
                }
                atz[r] += row[r] * p[2];
            }
        }
        // Gaussian elimination on the 3x3 system
        let mut m = [
            [ata[0][0], ata[0][1], ata[0][2], atz[0]],
            [ata[1][0], ata[1][1], ata[1][2], atz[1]],
            [ata[2][0], ata[2][1], ata[2][2], atz[2]],
        ];
        for col in 0..3 {
            let piv = (col..3).max_by(|&a, &b| m[a][col].abs().partial_cmp(&m[b][col].abs()).unwrap()).unwrap();
            m.swap(col, piv);
            for r in 0..3 {
                if r != col {
                    let f = m[r][col] / m[col][col];
                    for c in col..4 {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
        let a = m[0][3] / m[0][0];
        let b = m[1][3] / m[1][1];
        let v = [-a, -b, 1.0];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        [v[0] / n, v[1] / n, v[2] / n]
    }

    #[test]
    fn noisy_plane_normals_close_to_plane_fit() {
        let mut rng = Rng::new(42);
        let mut pts = Vec::new();
        for _ in 0..500 {
            pts.push([
                rng.range_f64(0.0, 1.0),
                rng.range_f64(0.0, 1.0),
                0.01 * rng.next_gaussian(),
            ]);
        }
        let oracle = lsq_plane_normal(&pts);
        let c = cloud_from(pts);
        let idx = KnnIndex::build(&c);
        // neighborhoods wide enough that vertical noise cannot tilt the
        // smallest principal direction past the tolerance, even at borders
        let cos_5deg = (5.0f64.to_radians()).cos();
        for n in estimate_normals(&c, &idx, 100).unwrap() {
            let cos = n[0] * oracle[0] + n[1] * oracle[1] + n[2] * oracle[2];
            assert!(cos.abs() > cos_5deg, "normal {n:?} vs fit {oracle:?}");
        }
    }

    #[test]
    fn height_examples() {
        let c = cloud_from(vec![[0.0, 0.0, 5.0], [1.0, 0.0, 5.0], [2.0, 0.0, 5.0]]);
        assert_eq!(compute_height(&c), vec![0.0, 0.0, 0.0]);
        let c = cloud_from(vec![[0.0, 0.0, 1.0], [0.0, 0.0, 2.0], [0.0, 0.0, 4.0]]);
        assert_eq!(compute_height(&c), vec![0.0, 1.0, 3.0]);
    }

    #[test]
    fn height_min_is_exactly_zero() {
        let spec = SceneSpec {
            n_classes: 1,
            points_per_class: vec![100],
            cluster_centers: vec![[0.0, 0.0, 3.0]],
            cluster_stddev: vec![1.0],
            overlap_shift: vec![],
            color_means: vec![[0.5; 3]],
            seed: 3,
        };
        let c = generate_scene(&spec).unwrap();
        let h = compute_height(&c);
        assert_eq!(h.iter().cloned().fold(f64::INFINITY, f64::min), 0.0);
        assert!(h.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn density_equal_on_interior_grid_points() {
        let c = cloud_from(grid_xy(7, 7, 0.0));
        let idx = KnnIndex::build(&c);
        let rho = estimate_density(&c, &idx, 4).unwrap();
        // two interior points see identical neighbor geometry
        let a = rho[3 * 7 + 3];
        let b = rho[2 * 7 + 3];
        assert!(((a - b) / a).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn density_orders_tight_vs_loose_cluster() {
        let spec = SceneSpec {
            n_classes: 2,
            points_per_class: vec![150, 150],
            cluster_centers: vec![[0.0, 0.0, 0.0], [20.0, 0.0, 0.0]],
            cluster_stddev: vec![0.1, 1.0],
            overlap_shift: vec![],
            color_means: vec![[0.5; 3]; 2],
            seed: 9,
        };
        let c = generate_scene(&spec).unwrap();
        let idx = KnnIndex::build(&c);
        let rho = estimate_density(&c, &idx, 6).unwrap();
        let mean = |class: i32| {
            let xs: Vec<f64> = (0..c.len())
                .filter(|&i| c.labels[i] == class)
                .map(|i| rho[i])
                .collect();
            xs.iter().sum::<f64>() / xs.len() as f64
        };
        assert!(mean(0) > mean(1), "tight {} loose {}", mean(0), mean(1));
    }

    #[test]
    fn density_duplicate_point_clamped_finite() {
        let c = cloud_from(vec![
            [0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [2.0, 0.0, 0.0],
        ]);
        let idx = KnnIndex::build(&c);
        let rho = estimate_density(&c, &idx, 2).unwrap();
        assert!(rho.iter().all(|v| v.is_finite() && *v > 0.0), "{rho:?}");
        // the duplicated points hit r_k = 0 and take the max finite density
        let max = rho.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(rho[0], max);
    }

    #[test]
    fn geometric_feature_plane_at_constant_height() {
        let c = cloud_from(grid_xy(5, 5, 2.0));
        let idx = KnnIndex::build(&c);
        let g = geometric_feature(&c, &idx, 8).unwrap();
        for i in 0..c.len() {
            let r = g.values.row(i);
            assert!(r[0].abs() < 1e-9 && r[1].abs() < 1e-9);
            assert!((r[2] - 1.0).abs() < 1e-9);
            assert_eq!(r[3], 0.0);
        }
    }

    #[test]
    fn geometric_feature_single_point_degenerate() {
        let c = cloud_from(vec![[3.0, 4.0, 5.0]]);
        let idx = KnnIndex::build(&c);
        let g = geometric_feature(&c, &idx, 8).unwrap();
        assert_eq!(g.values.row(0), &[0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn geometric_feature_height_standardized() {
        let spec = SceneSpec {
            n_classes: 1,
            points_per_class: vec![300],
            cluster_centers: vec![[0.0, 0.0, 0.0]],
            cluster_stddev: vec![2.0],
            overlap_shift: vec![],
            color_means: vec![[0.5; 3]],
            seed: 21,
        };
        let c = generate_scene(&spec).unwrap();
        let idx = KnnIndex::build(&c);
        let g = geometric_feature(&c, &idx, 8).unwrap();
        let n = c.len() as f64;
        let mean: f64 = (0..c.len()).map(|i| g.values.get(i, 3)).sum::<f64>() / n;
        let var: f64 = (0..c.len())
            .map(|i| (g.values.get(i, 3) - mean).powi(2))
            .sum::<f64>()
            / n;
        assert!(mean.abs() < 1e-6, "mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 1e-6, "sd {}", var.sqrt());
    }

    #[test]
    fn semantic_feature_without_colors_has_zero_color_columns() {
        let c = cloud_from(grid_xy(5, 5, 0.0));
        let idx = KnnIndex::build(&c);
        let s = semantic_feature(&c, &idx, 4).unwrap();
        for i in 0..c.len() {
            let r = s.values.row(i);
            assert_eq!(&r[1..], &[0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn semantic_feature_uniform_density_standardizes_to_zero() {
        let mut c = cloud_from(grid_xy(6, 6, 0.0));
        c.colors = Some(vec![[0.2, 0.4, 0.6]; c.len()]);
        let idx = KnnIndex::build(&c);
        let s = semantic_feature(&c, &idx, 4).unwrap();
        // interior points share identical density; column is near zero there
        let col: Vec<f64> = (0..c.len()).map(|i| s.values.get(i, 0)).collect();
        let interior = 2 * 6 + 2;
        assert!(col[interior].abs() < 1.5, "{}", col[interior]);
        assert_eq!(s.values.row(interior)[1..].to_vec(), vec![0.2, 0.4, 0.6]);
    }

    #[test]
    fn semantic_feature_density_sign_separates_clusters() {
        let spec = SceneSpec {
            n_classes: 2,
            points_per_class: vec![120, 120],
            cluster_centers: vec![[0.0, 0.0, 0.0], [30.0, 0.0, 0.0]],
            cluster_stddev: vec![0.1, 1.5],
            overlap_shift: vec![],
            color_means: vec![[0.5; 3]; 2],
            seed: 4,
        };
        let c = generate_scene(&spec).unwrap();
        let idx = KnnIndex::build(&c);
        let s = semantic_feature(&c, &idx, 6).unwrap();
        let mean = |class: i32| {
            let xs: Vec<f64> = (0..c.len())
                .filter(|&i| c.labels[i] == class)
                .map(|i| s.values.get(i, 0))
                .collect();
            xs.iter().sum::<f64>() / xs.len() as f64
        };
        assert!(mean(0) > 0.0 && mean(1) < 0.0, "{} / {}", mean(0), mean(1));
    }

    #[test]
    fn edge_differences_constant_features_zero_difference_half() {
        let c = cloud_from(grid_xy(4, 4, 0.0));
        let idx = KnnIndex::build(&c);
        let m = Matrix::from_rows(&vec![vec![1.0, 2.0]; c.len()]).unwrap();
        let f = FeatureMatrix::new(m, FeatureKind::Embedding, vec!["a".into(), "b".into()]).unwrap();
        let e = edge_differences(&f, &idx, 3).unwrap();
        for i in 0..e.n {
            for j in 0..e.k {
                assert_eq!(e.edge(i, j), &[1.0, 2.0, 0.0, 0.0]);
            }
        }
    }

    #[test]
    fn edge_differences_two_point_example() {
        let c = cloud_from(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        let idx = KnnIndex::build(&c);
        let m = Matrix::from_rows(&[vec![0.0], vec![3.0]]).unwrap();
        let f = FeatureMatrix::new(m, FeatureKind::Embedding, vec!["v".into()]).unwrap();
        let e = edge_differences(&f, &idx, 1).unwrap();
        assert_eq!(e.edge(0, 0), &[0.0, 3.0]);
        assert_eq!(e.edge(1, 0), &[3.0, -3.0]);
    }

    #[test]
    fn edge_differences_matches_naive_loop() {
        let mut rng = Rng::new(77);
        let n = 60;
        let positions: Vec<[f64; 3]> = (0..n)
            .map(|_| {
                [
                    rng.range_f64(0.0, 2.0),
                    rng.range_f64(0.0, 2.0),
                    rng.range_f64(0.0, 2.0),
                ]
            })
            .collect();
        let c = cloud_from(positions);
        let idx = KnnIndex::build(&c);
        let d = 3;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.next_gaussian()).collect())
            .collect();
        let f = FeatureMatrix::new(
            Matrix::from_rows(&rows).unwrap(),
            FeatureKind::Embedding,
            vec!["a".into(), "b".into(), "c".into()],
        )
        .unwrap();
        let k = 5;
        let e = edge_differences(&f, &idx, k).unwrap();
        // independent reference loop over the same neighbor lists
        for i in 0..n {
            let others: Vec<usize> = idx.query(i, k + 1).into_iter().filter(|&q| q != i).collect();
            for (j, &q) in others.iter().enumerate() {
                let mut want = rows[i].clone();
                for t in 0..d {
                    want.push(rows[q][t] - rows[i][t]);
                }
                assert_eq!(e.edge(i, j), want.as_slice(), "i={i} j={j}");
            }
        }
    }

    #[test]
    fn normals_translation_invariant() {
        let mut rng = Rng::new(15);
        let pts: Vec<[f64; 3]> = (0..100)
            .map(|_| {
                [
                    rng.range_f64(0.0, 1.0),
                    rng.range_f64(0.0, 1.0),
                    rng.range_f64(0.0, 0.2),
                ]
            })
            .collect();
        let shifted: Vec<[f64; 3]> = pts.iter().map(|p| [p[0] + 5.0, p[1] - 3.0, p[2] + 9.0]).collect();
        let c1 = cloud_from(pts);
        let c2 = cloud_from(shifted);
        let n1 = estimate_normals(&c1, &KnnIndex::build(&c1), 8).unwrap();
        let n2 = estimate_normals(&c2, &KnnIndex::build(&c2), 8).unwrap();
        for (a, b) in n1.iter().zip(&n2) {
            let norm = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
            assert!((norm - 1.0).abs() < 1e-9, "normal not unit: {norm}");
            for d in 0..3 {
                assert!((a[d] - b[d]).abs() < 1e-9);
            }
        }
    }
}
