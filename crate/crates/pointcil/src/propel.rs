//! Novel-phase pseudo-label refinement: BALD uncertainty over stochastic
//! neighborhood configurations, density-aware adaptive thresholds, the
//! four-scenario hierarchical pseudo-label decision, and the novel-phase
//! training loop driven by a frozen base model.

use std::io::Write;

use crate::cloud::{PointCloud, IGNORE_LABEL};
use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureMatrix};
use crate::knn::KnnIndex;
use crate::linalg::{argmax, entropy, Matrix};
use crate::model::{inverse_frequency_weights, plain_train_epochs_weighted, PreparedCloud, SegModel};
use crate::network::TrainConfig;
use crate::protoguard::{pg_train_epochs_weighted, PgTrainOptions, ProtoGuard};
use crate::rng::Rng;

/// Kernel width for the spatial proximity weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaMode {
    Fixed(f64),
    /// Median distance from a point to its non-self neighbors, computed once
    /// per cloud. Scale-free default.
    MedianNeighbor,
}

/// Configuration of the BALD estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct BaldConfig {
    /// number of stochastic passes T
    pub passes: usize,
    /// neighborhood size (the point itself counts as its first neighbor)
    pub k: usize,
    /// subset size m per pass, the point itself always included; 0 picks
    /// max(k/2, 1)
    pub subsample: usize,
    pub sigma: SigmaMode,
    pub seed: u64,
}

impl Default for BaldConfig {
    fn default() -> Self {
        BaldConfig {
            passes: 8,
            k: 8,
            subsample: 0,
            sigma: SigmaMode::MedianNeighbor,
            seed: 42,
        }
    }
}

impl BaldConfig {
    pub fn effective_subsample(&self) -> usize {
        if self.subsample == 0 {
            (self.k / 2).max(1)
        } else {
            self.subsample
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.passes < 2 {
            return Err(Error::InvalidConfig("bald passes must be >= 2".into()));
        }
        if self.k < 1 {
            return Err(Error::InvalidConfig("bald k must be >= 1".into()));
        }
        let m = self.effective_subsample();
        if m < 1 || m > self.k {
            return Err(Error::InvalidConfig(format!(
                "bald subsample must lie in 1..={}, got {m}",
                self.k
            )));
        }
        if let SigmaMode::Fixed(s) = self.sigma {
            if !(s > 0.0) {
                return Err(Error::InvalidConfig("bald sigma must be > 0".into()));
            }
        }
        Ok(())
    }
}

/// Per-point BALD uncertainty in nats.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyMap {
    pub u: Vec<f64>,
    pub passes: usize,
    pub k_neighbors: usize,
    pub seed: u64,
}

/// Median distance from each point to its non-self neighbors among the k
/// nearest; lower-middle element of the sorted list. Never returns zero.
pub fn median_neighbor_distance(cloud: &PointCloud, index: &KnnIndex, k: usize) -> f64 {
    let mut dists = Vec::new();
    for i in 0..cloud.len() {
        for q in index.query(i, k) {
            if q == i {
                continue;
            }
            let a = cloud.positions[i];
            let b = cloud.positions[q];
            let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
            dists.push(d);
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(|x, y| x.partial_cmp(y).unwrap());
    dists[dists.len() / 2].max(1e-9)
}

/// Deterministic neighborhood configurations: per point and pass, a uniform
/// random m-subset of its k nearest neighbors that always includes the point
/// itself. The per-(point, pass) RNG stream makes the result independent of
/// evaluation order.
pub fn sample_configs(index: &KnnIndex, cfg: &BaldConfig) -> Result<Vec<Vec<Vec<usize>>>> {
    cfg.validate()?;
    let n = index.len();
    let m = cfg.effective_subsample();
    let mut configs = Vec::with_capacity(n);
    for i in 0..n {
        let nbrs = index.query(i, cfg.k);
        debug_assert_eq!(nbrs[0], i);
        let others = &nbrs[1..];
        let take = (m - 1).min(others.len());
        let mut passes = Vec::with_capacity(cfg.passes);
        for t in 0..cfg.passes {
            let mut rng = Rng::from_tags(cfg.seed, &[0xBA1D, i as u64, t as u64]);
            let mut members = vec![i];
            if take > 0 {
                for j in rng.sample_indices(others.len(), take) {
                    members.push(others[j]);
                }
            }
            passes.push(members);
        }
        configs.push(passes);
    }
    Ok(configs)
}

/// The BALD formula over explicit neighborhood configurations: each pass
/// mixes the member predictions with Gaussian spatial weights centred on the
/// point, and u = H(mean of passes) - mean(H of passes), clamped at zero.
pub fn bald_from_configs(
    probs: &Matrix,
    positions: &[[f64; 3]],
    configs: &[Vec<Vec<usize>>],
    sigma: f64,
) -> Vec<f64> {
    let c = probs.cols();
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut u = Vec::with_capacity(configs.len());
    let mut p_t = vec![0.0; c];
    let mut p_mean = vec![0.0; c];
    for (i, passes) in configs.iter().enumerate() {
        let pi = positions[i];
        p_mean.iter_mut().for_each(|v| *v = 0.0);
        let mut h_mean = 0.0;
        for members in passes {
            p_t.iter_mut().for_each(|v| *v = 0.0);
            // shift by the smallest distance so the nearest member's weight
            // is exactly 1; normalization cancels the shift and tiny sigmas
            // cannot underflow the whole pass to zero
            let d2s: Vec<f64> = members
                .iter()
                .map(|&q| {
                    let pq = positions[q];
                    (pq[0] - pi[0]).powi(2) + (pq[1] - pi[1]).powi(2) + (pq[2] - pi[2]).powi(2)
                })
                .collect();
            let d2_min = d2s.iter().cloned().fold(f64::INFINITY, f64::min);
            let mut wsum = 0.0;
            for (&q, &d2) in members.iter().zip(&d2s) {
                let w = (-(d2 - d2_min) * inv).exp();
                wsum += w;
                let row = probs.row(q);
                for (acc, &v) in p_t.iter_mut().zip(row) {
                    *acc += w * v;
                }
            }
            if wsum > 0.0 {
                for v in p_t.iter_mut() {
                    *v /= wsum;
                }
            }
            h_mean += entropy(&p_t);
            for (m, &v) in p_mean.iter_mut().zip(&p_t) {
                *m += v;
            }
        }
        let t = passes.len() as f64;
        for v in p_mean.iter_mut() {
            *v /= t;
        }
        h_mean /= t;
        u.push((entropy(&p_mean) - h_mean).max(0.0));
    }
    u
}

/// BALD uncertainty of a frozen model's per-point probabilities.
pub fn bald_uncertainty(
    probs: &Matrix,
    cloud: &PointCloud,
    index: &KnnIndex,
    cfg: &BaldConfig,
) -> Result<UncertaintyMap> {
    cfg.validate()?;
    if probs.rows() != cloud.len() || index.len() != cloud.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} probability rows for {} points",
            probs.rows(),
            cloud.len()
        )));
    }
    let sigma = match cfg.sigma {
        SigmaMode::Fixed(s) => s,
        SigmaMode::MedianNeighbor => median_neighbor_distance(cloud, index, cfg.k),
    };
    let configs = sample_configs(index, cfg)?;
    let u = bald_from_configs(probs, &cloud.positions, &configs, sigma);
    Ok(UncertaintyMap {
        u,
        passes: cfg.passes,
        k_neighbors: cfg.k,
        seed: cfg.seed,
    })
}

/// Density-scaled uncertainty gate.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdConfig {
    pub tau0: f64,
    pub gamma: f64,
    pub tau_min: f64,
    pub tau_max: f64,
}

impl ThresholdConfig {
    /// Entropy-scaled defaults for a model over `c_base` classes.
    pub fn entropy_scaled(c_base: usize) -> Result<Self> {
        if c_base < 2 {
            return Err(Error::InvalidConfig(
                "entropy-scaled thresholds need at least 2 classes".into(),
            ));
        }
        let ln_c = (c_base as f64).ln();
        Ok(ThresholdConfig {
            tau0: 0.3 * ln_c,
            gamma: 0.5,
            tau_min: 0.05 * ln_c,
            tau_max: 0.9 * ln_c,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau0 > 0.0) {
            return Err(Error::InvalidConfig("tau0 must be > 0".into()));
        }
        if self.gamma < 0.0 {
            return Err(Error::InvalidConfig("gamma must be >= 0".into()));
        }
        if !(self.tau_min > 0.0 && self.tau_min <= self.tau_max) {
            return Err(Error::InvalidConfig(
                "thresholds need 0 < tau_min <= tau_max".into(),
            ));
        }
        Ok(())
    }
}

/// Per-point thresholds with their provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdMap {
    pub tau: Vec<f64>,
    pub tau0: f64,
    pub gamma: f64,
    pub tau_min: f64,
    pub tau_max: f64,
}

/// tau_i = clamp(tau0 * (rho_i / rho_mean)^(-gamma), tau_min, tau_max):
/// sparse regions get looser gates, dense regions stricter ones.
pub fn adaptive_threshold(density: &[f64], cfg: &ThresholdConfig) -> Result<ThresholdMap> {
    cfg.validate()?;
    if density.is_empty() {
        return Err(Error::InvalidConfig("empty density vector".into()));
    }
    if density.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::InvalidConfig("densities must be > 0".into()));
    }
    let mean = density.iter().sum::<f64>() / density.len() as f64;
    let tau = density
        .iter()
        .map(|&rho| (cfg.tau0 * (rho / mean).powf(-cfg.gamma)).clamp(cfg.tau_min, cfg.tau_max))
        .collect();
    Ok(ThresholdMap {
        tau,
        tau0: cfg.tau0,
        gamma: cfg.gamma,
        tau_min: cfg.tau_min,
        tau_max: cfg.tau_max,
    })
}

/// Where each pseudo-label came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSource {
    KeptNovel,
    BaseConfident,
    NeighborVote,
    Ignored,
}

impl LabelSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            LabelSource::KeptNovel => "kept_novel",
            LabelSource::BaseConfident => "base_confident",
            LabelSource::NeighborVote => "neighbor_vote",
            LabelSource::Ignored => "ignored",
        }
    }
}

/// Pseudo-label assignment per point; IGNORE labels carry source
/// [`LabelSource::Ignored`] and the background class is never emitted.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelSet {
    pub labels: Vec<i32>,
    pub source: Vec<LabelSource>,
    pub y_bg: i32,
}

impl PseudoLabelSet {
    /// Per-point debug CSV: `point_id,u,tau,source,label`.
    pub fn write_debug_csv(
        &self,
        path: impl AsRef<std::path::Path>,
        u: &UncertaintyMap,
        tau: &ThresholdMap,
    ) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "point_id,u,tau,source,label")?;
        for i in 0..self.labels.len() {
            writeln!(
                out,
                "{},{},{},{},{}",
                i,
                u.u[i],
                tau.tau[i],
                self.source[i].as_str(),
                self.labels[i]
            )?;
        }
        Ok(())
    }
}

/// Hierarchical pseudo-label decision. Per point, the first matching rule
/// wins:
///
/// 1. a non-background novel annotation is kept verbatim;
/// 2. a low-uncertainty, non-background base prediction is trusted;
/// 3. otherwise qualifying neighbors (non-background base prediction, low
///    uncertainty, self excluded) vote with inverse-distance weights, ties
///    to the lower class index;
/// 4. otherwise the point is excluded from training.
pub fn propagate_pseudo_labels(
    base_probs: &Matrix,
    novel_annotations: &[i32],
    u: &UncertaintyMap,
    tau: &ThresholdMap,
    index: &KnnIndex,
    k: usize,
    y_bg: i32,
) -> Result<PseudoLabelSet> {
    let n = base_probs.rows();
    if novel_annotations.len() != n || u.u.len() != n || tau.tau.len() != n || index.len() != n {
        return Err(Error::ShapeMismatch("pseudo-label input lengths".into()));
    }
    if y_bg < 0 {
        return Err(Error::InvalidConfig("y_bg must be a valid class index".into()));
    }
    let mut labels = vec![IGNORE_LABEL; n];
    let mut source = vec![LabelSource::Ignored; n];
    let base_argmax: Vec<i32> = (0..n).map(|i| argmax(base_probs.row(i)) as i32).collect();
    for i in 0..n {
        let ann = novel_annotations[i];
        if ann != y_bg && ann != IGNORE_LABEL {
            labels[i] = ann;
            source[i] = LabelSource::KeptNovel;
            continue;
        }
        if u.u[i] <= tau.tau[i] && base_argmax[i] != y_bg {
            labels[i] = base_argmax[i];
            source[i] = LabelSource::BaseConfident;
            continue;
        }
        // neighbor vote over qualifying neighbors
        let mut votes: std::collections::BTreeMap<i32, f64> = std::collections::BTreeMap::new();
        let pi = index.position(i);
        for q in index.query(i, k) {
            if q == i || base_argmax[q] == y_bg || u.u[q] > tau.tau[q] {
                continue;
            }
            let pq = index.position(q);
            let d = ((pq[0] - pi[0]).powi(2) + (pq[1] - pi[1]).powi(2) + (pq[2] - pi[2]).powi(2))
                .sqrt();
            let w = 1.0 / d.max(1e-12);
            *votes.entry(base_argmax[q]).or_insert(0.0) += w;
        }
        if !votes.is_empty() {
            // BTreeMap iterates labels in ascending order: strict > keeps
            // the lowest class index on weight ties
            let mut best_label = IGNORE_LABEL;
            let mut best_w = f64::NEG_INFINITY;
            for (&label, &w) in &votes {
                if w > best_w {
                    best_w = w;
                    best_label = label;
                }
            }
            labels[i] = best_label;
            source[i] = LabelSource::NeighborVote;
        }
    }
    Ok(PseudoLabelSet {
        labels,
        source,
        y_bg,
    })
}

/// Hyperparameters of the novel training phase.
#[derive(Debug, Clone, PartialEq)]
pub struct NovelConfig {
    pub train: TrainConfig,
    pub bald: BaldConfig,
    pub threshold: ThresholdConfig,
    /// neighborhood size for the pseudo-label neighbor vote
    pub propagate_k: usize,
}

/// The per-cloud pseudo-label products the novel phase trains on.
pub struct CloudPseudoLabels {
    pub uncertainty: UncertaintyMap,
    pub thresholds: ThresholdMap,
    pub labels: PseudoLabelSet,
}

/// Run the frozen base model over one cloud and derive its pseudo-labels.
pub fn pseudo_labels_for_cloud(
    base: &SegModel,
    prep: &PreparedCloud,
    annotations: &[i32],
    y_bg: i32,
    cfg: &NovelConfig,
    cloud_tag: u64,
) -> Result<CloudPseudoLabels> {
    let base_probs = base.predict_probs(prep)?;
    let mut bald_cfg = cfg.bald.clone();
    bald_cfg.seed = Rng::from_tags(cfg.bald.seed, &[0x5EED, cloud_tag]).next_u64();
    let uncertainty = bald_uncertainty(&base_probs, &prep.cloud, &prep.index, &bald_cfg)?;
    let thresholds = adaptive_threshold(&prep.density, &cfg.threshold)?;
    let labels = propagate_pseudo_labels(
        &base_probs,
        annotations,
        &uncertainty,
        &thresholds,
        &prep.index,
        cfg.propagate_k,
        y_bg,
    )?;
    Ok(CloudPseudoLabels {
        uncertainty,
        thresholds,
        labels,
    })
}

/// Widen prototype state for a novel step: base-class rows copied and later
/// kept frozen, novel-class rows initialized from the annotated novel
/// points, momentum learning disabled.
pub fn widen_for_novel(
    pg: &ProtoGuard,
    preps: &[PreparedCloud],
    annotations: &[Vec<i32>],
    n_new: usize,
    y_bg: i32,
) -> Result<ProtoGuard> {
    let mut bank = pg.bank.widen(n_new);
    let mut geo_rows = Vec::new();
    let mut sem_rows = Vec::new();
    let mut labels = Vec::new();
    for (prep, anns) in preps.iter().zip(annotations) {
        for i in 0..prep.len() {
            if anns[i] != y_bg && anns[i] != IGNORE_LABEL {
                geo_rows.push(prep.geo.values.row(i).to_vec());
                sem_rows.push(prep.sem.values.row(i).to_vec());
                labels.push(anns[i]);
            }
        }
    }
    if !labels.is_empty() {
        bank.init_prototypes(
            &FeatureMatrix::new(
                Matrix::from_rows(&geo_rows)?,
                FeatureKind::Geometric,
                preps[0].geo.column_names.clone(),
            )?,
            &labels,
        )?;
        bank.init_prototypes(
            &FeatureMatrix::new(
                Matrix::from_rows(&sem_rows)?,
                FeatureKind::Semantic,
                preps[0].sem.column_names.clone(),
            )?,
            &labels,
        )?;
    }
    Ok(ProtoGuard {
        bank,
        fusion: pg.fusion.clone(),
        learnable_momentum: false,
    })
}

/// Novel-phase training: clone the frozen base, widen it by `n_new` classes,
/// generate pseudo-labels once per cloud (the frozen base makes them
/// identical across epochs), then fine-tune the clone on pseudo-labels plus
/// kept annotations. Base parameters are never touched; prototype state, when
/// present, keeps base-class rows frozen and updates only novel-class rows.
pub fn train_novel(
    base: &SegModel,
    preps: &[PreparedCloud],
    annotations: &[Vec<i32>],
    n_new: usize,
    y_bg: i32,
    cfg: &NovelConfig,
) -> Result<SegModel> {
    if !(base.net.frozen_extractor && base.net.frozen_classifier) {
        return Err(Error::InvalidConfig(
            "novel training requires the base model to be frozen".into(),
        ));
    }
    if preps.len() != annotations.len() {
        return Err(Error::ShapeMismatch("clouds vs annotation lists".into()));
    }
    let c_base = base.n_classes();
    for anns in annotations {
        for &a in anns.iter() {
            let valid = a == y_bg
                || a == IGNORE_LABEL
                || (a >= c_base as i32 && (a as usize) < c_base + n_new);
            if !valid {
                return Err(Error::InvalidConfig(format!(
                    "novel annotation {a} outside background and {}..{}",
                    c_base,
                    c_base + n_new
                )));
            }
        }
    }

    let mut novel_net = base.net.clone_for_novel(n_new);
    let mut novel_pg = match &base.pg {
        None => None,
        Some(pg) => Some(widen_for_novel(pg, preps, annotations, n_new, y_bg)?),
    };

    // the base is frozen, so pseudo-labels are computed once per cloud
    let mut pseudo_targets: Vec<Vec<i32>> = Vec::with_capacity(preps.len());
    for (ci, (prep, anns)) in preps.iter().zip(annotations).enumerate() {
        let products = pseudo_labels_for_cloud(base, prep, anns, y_bg, cfg, ci as u64)?;
        pseudo_targets.push(products.labels.labels);
    }

    // pseudo-labels are dominated by base classes; inverse-frequency weights
    // keep the scarcer annotated novel points from being swamped
    let weights = inverse_frequency_weights(&pseudo_targets, c_base + n_new);
    match &mut novel_pg {
        Some(pg) => {
            pg_train_epochs_weighted(
                &mut novel_net,
                pg,
                preps,
                &pseudo_targets,
                Some(&weights),
                &PgTrainOptions::novel(c_base),
                &cfg.train,
            )?;
        }
        None => {
            plain_train_epochs_weighted(
                &mut novel_net,
                preps,
                &pseudo_targets,
                Some(&weights),
                &cfg.train,
            )?;
        }
    }
    Ok(SegModel {
        net: novel_net,
        pg: novel_pg,
    })
}
