//! Prepared per-cloud tensors and the segmentation model that ties the
//! network together with optional prototype enhancement.

use crate::cloud::{PointCloud, IGNORE_LABEL};
use crate::error::{Error, Result};
use crate::features::{
    edge_differences, estimate_density, geometric_feature, semantic_feature, EdgeTensor,
    FeatureMatrix,
};
use crate::knn::KnnIndex;
use crate::linalg::{argmax, Matrix};
use crate::network::{Network, TrainConfig};
use crate::protoguard::{fuse_with_edges, prototype_feature_lenient, ProtoGuard};
use crate::rng::Rng;
use crate::sertext::Reader;

/// A cloud with everything the pipelines need precomputed: kNN index,
/// geometric/semantic features, their concatenation, edge differences and
/// densities. Features are label-free, so one preparation serves every
/// phase and arm.
#[derive(Debug, Clone)]
pub struct PreparedCloud {
    pub cloud: PointCloud,
    pub index: KnnIndex,
    pub geo: FeatureMatrix,
    pub sem: FeatureMatrix,
    /// [geo | sem], the raw network input
    pub raw: Matrix,
    pub edges: EdgeTensor,
    pub density: Vec<f64>,
    pub k: usize,
}

impl PreparedCloud {
    pub fn build(cloud: PointCloud, k: usize) -> Result<Self> {
        let index = KnnIndex::build(&cloud);
        let geo = geometric_feature(&cloud, &index, k)?;
        let sem = semantic_feature(&cloud, &index, k)?;
        let raw = geo.values.hcat(&sem.values)?;
        let raw_fm = FeatureMatrix::new(
            raw.clone(),
            crate::features::FeatureKind::Embedding,
            geo.column_names
                .iter()
                .chain(sem.column_names.iter())
                .cloned()
                .collect(),
        )?;
        let edges = edge_differences(&raw_fm, &index, k)?;
        let density = estimate_density(&cloud, &index, k)?;
        Ok(PreparedCloud {
            cloud,
            index,
            geo,
            sem,
            raw,
            edges,
            density,
            k,
        })
    }

    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }
}

/// Segmentation model: a plain network over raw features, or the enhanced
/// pipeline when prototype state is attached.
#[derive(Debug, Clone, PartialEq)]
pub struct SegModel {
    pub net: Network,
    pub pg: Option<ProtoGuard>,
}

impl SegModel {
    pub fn n_classes(&self) -> usize {
        self.net.n_classes()
    }

    /// Class probabilities per point. Enhanced models run two passes: the
    /// first with zeroed prototype features yields argmax class assignments,
    /// the second refines them with real prototype features.
    pub fn predict_probs(&self, prep: &PreparedCloud) -> Result<Matrix> {
        match &self.pg {
            None => Ok(self.net.forward(&prep.raw)?.1),
            Some(pg) => {
                let n = prep.len();
                let pf0 = Matrix::zeros(n, pg.fusion.d_proto());
                let enh0 = fuse_with_edges(&pf0, &prep.edges, &pg.fusion)?;
                let (_, p0) = self.net.forward(&enh0)?;
                let assign: Vec<i32> = (0..n).map(|i| argmax(p0.row(i)) as i32).collect();
                let pf = prototype_feature_lenient(&pg.bank, &prep.geo, &prep.sem, &pg.fusion, &assign)?;
                let enh = fuse_with_edges(&pf, &prep.edges, &pg.fusion)?;
                Ok(self.net.forward(&enh)?.1)
            }
        }
    }

    pub fn predict_labels(&self, prep: &PreparedCloud) -> Result<Vec<i32>> {
        let p = self.predict_probs(prep)?;
        Ok((0..p.rows()).map(|i| argmax(p.row(i)) as i32).collect())
    }

    /// Freeze every component (used before a model serves as the next
    /// phase's reference).
    pub fn freeze(&mut self) {
        self.net.frozen_extractor = true;
        self.net.frozen_classifier = true;
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("segmodel v1\n");
        s.push_str(&format!("pg {}\n", self.pg.is_some() as u8));
        s.push_str(&self.net.to_text());
        if let Some(pg) = &self.pg {
            s.push_str(&pg.to_text());
        }
        s.push_str("end segmodel\n");
        s
    }

    pub fn from_text(text: &str) -> Result<SegModel> {
        let mut r = Reader::new(text);
        if r.next_line()? != "segmodel v1" {
            return Err(Error::Parse("bad segmodel header".into()));
        }
        let pg_toks = r.expect("pg")?;
        let has_pg = pg_toks.first() == Some(&"1");
        let net = Network::from_reader(&mut r)?;
        let pg = if has_pg {
            Some(ProtoGuard::from_reader(&mut r)?)
        } else {
            None
        };
        if r.next_line()? != "end segmodel" {
            return Err(Error::Parse("missing `end segmodel`".into()));
        }
        Ok(SegModel { net, pg })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<SegModel> {
        SegModel::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Deterministic mini-batches: indices of points whose target is not IGNORE,
/// shuffled and chunked. `batch_points == 0` yields one full batch.
pub(crate) fn make_batches(
    targets: &[i32],
    batch_points: usize,
    rng: &mut Rng,
) -> Vec<Vec<usize>> {
    let mut idxs: Vec<usize> = (0..targets.len())
        .filter(|&i| targets[i] != IGNORE_LABEL)
        .collect();
    if idxs.is_empty() {
        return Vec::new();
    }
    if batch_points == 0 || batch_points >= idxs.len() {
        return vec![idxs];
    }
    rng.shuffle(&mut idxs);
    idxs.chunks(batch_points).map(|c| c.to_vec()).collect()
}

/// Plain training loop: per epoch, per cloud, per batch, one cross-entropy
/// gradient step on the raw features. Zero epochs is a no-op. Returns the
/// mean per-epoch loss trace.
pub fn plain_train_epochs(
    net: &mut Network,
    preps: &[PreparedCloud],
    targets: &[Vec<i32>],
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    plain_train_epochs_weighted(net, preps, targets, None, cfg)
}

/// [`plain_train_epochs`] with optional per-point loss weights per cloud.
pub fn plain_train_epochs_weighted(
    net: &mut Network,
    preps: &[PreparedCloud],
    targets: &[Vec<i32>],
    weights: Option<&[Vec<f64>]>,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    if preps.len() != targets.len() {
        return Err(Error::ShapeMismatch("clouds vs target lists".into()));
    }
    if !(cfg.learning_rate > 0.0) || cfg.l2 < 0.0 {
        return Err(Error::InvalidConfig("bad learning rate or l2".into()));
    }
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut total = 0.0;
        let mut count = 0usize;
        for (ci, prep) in preps.iter().enumerate() {
            let mut rng = Rng::from_tags(cfg.seed, &[0xBA7C, epoch as u64, ci as u64]);
            for batch in make_batches(&targets[ci], cfg.batch_points, &mut rng) {
                let rows: Vec<Vec<f64>> = batch.iter().map(|&i| prep.raw.row(i).to_vec()).collect();
                let feats = Matrix::from_rows(&rows)?;
                let labels: Vec<i32> = batch.iter().map(|&i| targets[ci][i]).collect();
                let w: Option<Vec<f64>> =
                    weights.map(|ws| batch.iter().map(|&i| ws[ci][i]).collect());
                let loss = net.train_step(&feats, &labels, w.as_deref(), cfg)?;
                total += loss * batch.len() as f64;
                count += batch.len();
            }
        }
        losses.push(if count > 0 { total / count as f64 } else { 0.0 });
    }
    Ok(losses)
}

/// Inverse-class-frequency weights over a target set, normalized so labeled
/// points average weight 1. IGNORE points get weight 0.
pub fn inverse_frequency_weights(targets: &[Vec<i32>], n_classes: usize) -> Vec<Vec<f64>> {
    let mut counts = vec![0usize; n_classes];
    let mut labeled = 0usize;
    for list in targets {
        for &t in list {
            if t != IGNORE_LABEL {
                counts[t as usize] += 1;
                labeled += 1;
            }
        }
    }
    let present = counts.iter().filter(|&&c| c > 0).count().max(1);
    let mean_count = labeled as f64 / present as f64;
    targets
        .iter()
        .map(|list| {
            list.iter()
                .map(|&t| {
                    if t == IGNORE_LABEL {
                        0.0
                    } else {
                        mean_count / counts[t as usize] as f64
                    }
                })
                .collect()
        })
        .collect()
}
