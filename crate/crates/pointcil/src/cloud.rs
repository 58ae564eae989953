//! Point-cloud data model, text I/O and the synthetic scene generator.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Label value marking points excluded from losses and metrics.
pub const IGNORE_LABEL: i32 = -1;

/// A labeled point cloud. Positions are meters; colors, when present, are
/// RGB in [0, 1]; labels are class indices in 0..C or [`IGNORE_LABEL`].
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub positions: Vec<[f64; 3]>,
    pub colors: Option<Vec<[f64; 3]>>,
    pub labels: Vec<i32>,
    pub class_names: Vec<String>,
}

impl PointCloud {
    pub fn new(
        positions: Vec<[f64; 3]>,
        colors: Option<Vec<[f64; 3]>>,
        labels: Vec<i32>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidCloud("cloud must contain at least one point".into()));
        }
        if labels.len() != positions.len() {
            return Err(Error::InvalidCloud(format!(
                "{} positions but {} labels",
                positions.len(),
                labels.len()
            )));
        }
        if let Some(c) = &colors {
            if c.len() != positions.len() {
                return Err(Error::InvalidCloud(format!(
                    "{} positions but {} colors",
                    positions.len(),
                    c.len()
                )));
            }
        }
        if positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCloud("non-finite position".into()));
        }
        let c = class_names.len() as i32;
        for &l in &labels {
            if l != IGNORE_LABEL && (l < 0 || l >= c) {
                return Err(Error::InvalidCloud(format!(
                    "label {l} outside 0..{c} and not IGNORE"
                )));
            }
        }
        Ok(PointCloud {
            positions,
            colors,
            labels,
            class_names,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Count of points per class (IGNORE excluded).
    pub fn label_histogram(&self) -> Vec<usize> {
        let mut h = vec![0usize; self.n_classes()];
        for &l in &self.labels {
            if l != IGNORE_LABEL {
                h[l as usize] += 1;
            }
        }
        h
    }

    /// Same geometry with replacement labels.
    pub fn with_labels(&self, labels: Vec<i32>, class_names: Vec<String>) -> Result<Self> {
        PointCloud::new(self.positions.clone(), self.colors.clone(), labels, class_names)
    }

    fn default_class_names(labels: &[i32]) -> Vec<String> {
        let c = labels.iter().copied().max().unwrap_or(-1).max(-1) + 1;
        (0..c.max(1)).map(|i| format!("class_{i}")).collect()
    }
}

/// On-disk layout of one point per line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    /// `x y z r g b label`; r,g,b integers in 0..=255.
    XyzRgbL,
    /// `x y z label`.
    XyzL,
}

/// Parse a whitespace-separated point-per-line file.
/// Empty lines are skipped; colors are present iff the format carries RGB.
pub fn load_cloud(path: impl AsRef<Path>, format: CloudFormat) -> Result<PointCloud> {
    let file = std::fs::File::open(path)?;
    let mut positions = Vec::new();
    let mut colors = Vec::new();
    let mut labels = Vec::new();
    for (line_no, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno1 = line_no + 1;
        let toks: Vec<&str> = line.split_whitespace().collect();
        let expected = match format {
            CloudFormat::XyzRgbL => 7,
            CloudFormat::XyzL => 4,
        };
        if toks.len() != expected {
            return Err(Error::MalformedLine(lineno1));
        }
        let f = |t: &str| -> Result<f64> {
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or(Error::MalformedLine(lineno1))
        };
        let x = f(toks[0])?;
        let y = f(toks[1])?;
        let z = f(toks[2])?;
        positions.push([x, y, z]);
        let label_tok = match format {
            CloudFormat::XyzRgbL => {
                let byte = |t: &str| -> Result<f64> {
                    t.parse::<i64>()
                        .ok()
                        .filter(|v| (0..=255).contains(v))
                        .map(|v| v as f64 / 255.0)
                        .ok_or(Error::MalformedLine(lineno1))
                };
                colors.push([byte(toks[3])?, byte(toks[4])?, byte(toks[5])?]);
                toks[6]
            }
            CloudFormat::XyzL => toks[3],
        };
        let label = label_tok
            .parse::<i32>()
            .ok()
            .filter(|&v| v >= IGNORE_LABEL)
            .ok_or(Error::MalformedLine(lineno1))?;
        labels.push(label);
    }
    if positions.is_empty() {
        return Err(Error::EmptyFile);
    }
    let names = PointCloud::default_class_names(&labels);
    PointCloud::new(
        positions,
        match format {
            CloudFormat::XyzRgbL => Some(colors),
            CloudFormat::XyzL => None,
        },
        labels,
        names,
    )
}

/// Write the text format back out. Positions use Rust's shortest
/// round-trippable float formatting, so load(save(c)) reproduces them
/// exactly; colors are quantized to the format's 0..=255 integers.
pub fn save_cloud(cloud: &PointCloud, path: impl AsRef<Path>, format: CloudFormat) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for i in 0..cloud.len() {
        let p = cloud.positions[i];
        match format {
            CloudFormat::XyzRgbL => {
                let c = cloud
                    .colors
                    .as_ref()
                    .map(|cs| cs[i])
                    .unwrap_or([0.0, 0.0, 0.0]);
                let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
                writeln!(
                    out,
                    "{} {} {} {} {} {} {}",
                    p[0],
                    p[1],
                    p[2],
                    q(c[0]),
                    q(c[1]),
                    q(c[2]),
                    cloud.labels[i]
                )?;
            }
            CloudFormat::XyzL => {
                writeln!(out, "{} {} {} {}", p[0], p[1], p[2], cloud.labels[i])?;
            }
        }
    }
    Ok(())
}

/// Recipe for a synthetic scene: one isotropic Gaussian cluster per class
/// with controllable long-tail counts and induced inter-class overlap.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub n_classes: usize,
    pub points_per_class: Vec<usize>,
    pub cluster_centers: Vec<[f64; 3]>,
    pub cluster_stddev: Vec<f64>,
    /// (a, b, distance): move class b's center along the line toward class
    /// a's center so the two clusters end up `distance` meters apart.
    pub overlap_shift: Vec<(usize, usize, f64)>,
    pub color_means: Vec<[f64; 3]>,
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let c = self.n_classes;
        if c == 0 {
            return Err(Error::InvalidScene("n_classes must be >= 1".into()));
        }
        if self.points_per_class.len() != c
            || self.cluster_centers.len() != c
            || self.cluster_stddev.len() != c
            || self.color_means.len() != c
        {
            return Err(Error::InvalidScene(format!(
                "per-class lists must all have length {c}"
            )));
        }
        if self.points_per_class.contains(&0) {
            return Err(Error::InvalidScene("points_per_class entries must be >= 1".into()));
        }
        if self.cluster_stddev.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidScene("cluster_stddev entries must be > 0".into()));
        }
        for &(a, b, d) in &self.overlap_shift {
            if a >= c || b >= c || a == b {
                return Err(Error::InvalidScene(format!("bad overlap pair ({a}, {b})")));
            }
            if !(d >= 0.0) {
                return Err(Error::InvalidScene("overlap distance must be >= 0".into()));
            }
        }
        Ok(())
    }

    /// Class centers after applying the overlap shifts.
    pub fn effective_centers(&self) -> Vec<[f64; 3]> {
        let mut centers = self.cluster_centers.clone();
        for &(a, b, target_dist) in &self.overlap_shift {
            let ca = centers[a];
            let cb = centers[b];
            let d = [cb[0] - ca[0], cb[1] - ca[1], cb[2] - ca[2]];
            let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            if len < 1e-12 {
                continue;
            }
            let s = target_dist / len;
            centers[b] = [ca[0] + d[0] * s, ca[1] + d[1] * s, ca[2] + d[2] * s];
        }
        centers
    }
}

/// Deterministic scene synthesis: class c draws `points_per_class[c]` points
/// from an isotropic Gaussian at its (possibly overlap-shifted) center.
/// A pure function of its [`SceneSpec`].
pub fn generate_scene(spec: &SceneSpec) -> Result<PointCloud> {
    spec.validate()?;
    let centers = spec.effective_centers();
    let mut positions = Vec::new();
    let mut colors = Vec::new();
    let mut labels = Vec::new();
    for c in 0..spec.n_classes {
        // one derived stream per class: counts of one class never perturb another
        let mut rng = Rng::from_tags(spec.seed, &[0x5CE4E, c as u64]);
        let center = centers[c];
        let sd = spec.cluster_stddev[c];
        let cm = spec.color_means[c];
        for _ in 0..spec.points_per_class[c] {
            positions.push([
                center[0] + sd * rng.next_gaussian(),
                center[1] + sd * rng.next_gaussian(),
                center[2] + sd * rng.next_gaussian(),
            ]);
            colors.push([
                (cm[0] + 0.03 * rng.next_gaussian()).clamp(0.0, 1.0),
                (cm[1] + 0.03 * rng.next_gaussian()).clamp(0.0, 1.0),
                (cm[2] + 0.03 * rng.next_gaussian()).clamp(0.0, 1.0),
            ]);
            labels.push(c as i32);
        }
    }
    let names = (0..spec.n_classes).map(|i| format!("class_{i}")).collect();
    PointCloud::new(positions, Some(colors), labels, names)
}
