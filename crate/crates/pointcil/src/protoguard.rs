//! Base-phase prototype enhancement: per-class geometric and semantic
//! prototypes with similarity-driven adaptive-momentum updates, attention
//! fusion into per-point prototype features, edge-feature fusion through an
//! MLP with max pooling, and the base training loop built on top.

use crate::cloud::IGNORE_LABEL;
use crate::error::{Error, Result};
use crate::features::{EdgeTensor, FeatureKind, FeatureMatrix};
use crate::linalg::{cosine, sigmoid, Matrix};
use crate::network::{Dense, NetGrads, Network, TrainConfig};
use crate::rng::Rng;
use crate::sertext::{dump_tensor, Reader};

/// Parameters of the similarity -> momentum map
/// `m = m_min + (m_max - m_min) * sigmoid(a * s + b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentumParams {
    pub a: f64,
    pub b: f64,
    pub m_min: f64,
    pub m_max: f64,
}

impl Default for MomentumParams {
    fn default() -> Self {
        // positive `a`: prototypes near confusable classes adapt faster
        MomentumParams {
            a: 4.0,
            b: 0.0,
            m_min: 0.01,
            m_max: 0.5,
        }
    }
}

impl MomentumParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.m_min > 0.0 && self.m_max < 1.0 && self.m_min < self.m_max) {
            return Err(Error::InvalidConfig(format!(
                "momentum bounds need 0 < m_min < m_max < 1, got ({}, {})",
                self.m_min, self.m_max
            )));
        }
        if !(self.a.is_finite() && self.b.is_finite()) {
            return Err(Error::InvalidConfig("momentum (a, b) must be finite".into()));
        }
        Ok(())
    }
}

/// Momentum for one prototype update, always inside (m_min, m_max).
pub fn adaptive_momentum(similarity: f64, p: &MomentumParams) -> f64 {
    p.m_min + (p.m_max - p.m_min) * sigmoid(p.a * similarity + p.b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Geo,
    Sem,
}

/// Per-class geometric and semantic prototypes with their update state.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeBank {
    pub geo: Matrix,
    pub sem: Matrix,
    pub initialized: Vec<bool>,
    pub update_count: Vec<u64>,
    pub momentum: MomentumParams,
}

/// Per-class batch means: (means, counts); rows of absent classes are zero.
pub(crate) fn class_means(values: &Matrix, labels: &[i32], n_classes: usize) -> (Matrix, Vec<usize>) {
    let mut means = Matrix::zeros(n_classes, values.cols());
    let mut counts = vec![0usize; n_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l == IGNORE_LABEL || l < 0 || l as usize >= n_classes {
            continue;
        }
        let c = l as usize;
        counts[c] += 1;
        let row = values.row(i);
        let m = means.row_mut(c);
        for (mv, &v) in m.iter_mut().zip(row) {
            *mv += v;
        }
    }
    for c in 0..n_classes {
        if counts[c] > 0 {
            // plain division keeps the mean bit-identical to a naive oracle
            let n = counts[c] as f64;
            for v in means.row_mut(c) {
                *v /= n;
            }
        }
    }
    (means, counts)
}

impl PrototypeBank {
    pub fn new(n_classes: usize, d_geo: usize, d_sem: usize, momentum: MomentumParams) -> Result<Self> {
        momentum.validate()?;
        Ok(PrototypeBank {
            geo: Matrix::zeros(n_classes, d_geo),
            sem: Matrix::zeros(n_classes, d_sem),
            initialized: vec![false; n_classes],
            update_count: vec![0; n_classes],
            momentum,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.initialized.len()
    }

    pub fn stream(&self, s: Stream) -> &Matrix {
        match s {
            Stream::Geo => &self.geo,
            Stream::Sem => &self.sem,
        }
    }

    fn stream_mut(&mut self, s: Stream) -> &mut Matrix {
        match s {
            Stream::Geo => &mut self.geo,
            Stream::Sem => &mut self.sem,
        }
    }

    /// Initialize prototypes of every class present in `labels` to the mean
    /// of its feature rows; the feature kind selects the stream. Classes
    /// absent from the batch stay uninitialized.
    pub fn init_prototypes(&mut self, feats: &FeatureMatrix, labels: &[i32]) -> Result<()> {
        let stream = match feats.kind {
            FeatureKind::Geometric => Stream::Geo,
            FeatureKind::Semantic => Stream::Sem,
            FeatureKind::Embedding => {
                return Err(Error::InvalidConfig(
                    "prototypes are maintained for geometric or semantic features".into(),
                ))
            }
        };
        if feats.rows() != labels.len() {
            return Err(Error::ShapeMismatch("features/labels length".into()));
        }
        let n_classes = self.n_classes();
        let (means, counts) = class_means(&feats.values, labels, n_classes);
        for c in 0..n_classes {
            if counts[c] > 0 {
                self.stream_mut(stream).row_mut(c).copy_from_slice(means.row(c));
                self.initialized[c] = true;
            }
        }
        Ok(())
    }

    /// Max cosine similarity between class `c`'s prototype and the mean
    /// feature of every other class present in the batch; -1 when the batch
    /// holds no other class.
    pub fn stream_similarity(
        &self,
        stream: Stream,
        c: usize,
        batch: &Matrix,
        labels: &[i32],
    ) -> Result<f64> {
        if c >= self.n_classes() || !self.initialized[c] {
            return Err(Error::Uninitialized(c));
        }
        let (means, counts) = class_means(batch, labels, self.n_classes());
        let proto = self.stream(stream).row(c);
        let mut best = -1.0f64;
        for other in 0..self.n_classes() {
            if other == c || counts[other] == 0 {
                continue;
            }
            best = best.max(cosine(proto, means.row(other)));
        }
        Ok(best)
    }

    /// Committed adaptive-momentum update of both streams from one batch.
    /// Classes absent from the batch are untouched; classes seen for the
    /// first time are initialized directly to their batch mean.
    pub fn update_prototypes(
        &mut self,
        geo: &FeatureMatrix,
        sem: &FeatureMatrix,
        labels: &[i32],
    ) -> Result<()> {
        let plan = self.plan_update(&geo.values, &sem.values, labels, 0)?;
        self.commit_update(&plan);
        Ok(())
    }

    /// Compute the blended prototypes one batch implies without mutating the
    /// bank. `min_updatable_class` freezes every class below it (novel-phase
    /// banks keep base-class prototypes fixed).
    pub(crate) fn plan_update(
        &self,
        geo: &Matrix,
        sem: &Matrix,
        labels: &[i32],
        min_updatable_class: usize,
    ) -> Result<UpdatePlan> {
        let n_classes = self.n_classes();
        let (geo_means, counts) = class_means(geo, labels, n_classes);
        let (sem_means, _) = class_means(sem, labels, n_classes);
        let mut entries = Vec::new();
        for c in (min_updatable_class..n_classes).filter(|&c| counts[c] > 0) {
            if !self.initialized[c] {
                entries.push(ClassUpdate {
                    class: c,
                    fresh: true,
                    geo_mean: geo_means.row(c).to_vec(),
                    sem_mean: sem_means.row(c).to_vec(),
                    sim: [0.0; 2],
                    m: [1.0; 2],
                });
                continue;
            }
            let s_geo = self.stream_similarity(Stream::Geo, c, geo, labels)?;
            let s_sem = self.stream_similarity(Stream::Sem, c, sem, labels)?;
            entries.push(ClassUpdate {
                class: c,
                fresh: false,
                geo_mean: geo_means.row(c).to_vec(),
                sem_mean: sem_means.row(c).to_vec(),
                sim: [s_geo, s_sem],
                m: [
                    adaptive_momentum(s_geo, &self.momentum),
                    adaptive_momentum(s_sem, &self.momentum),
                ],
            });
        }
        Ok(UpdatePlan { entries })
    }

    /// Prototype rows after applying a plan, without committing it.
    pub(crate) fn effective_rows(&self, plan: &UpdatePlan) -> (Matrix, Matrix) {
        let mut geo = self.geo.clone();
        let mut sem = self.sem.clone();
        for e in &plan.entries {
            if e.fresh {
                geo.row_mut(e.class).copy_from_slice(&e.geo_mean);
                sem.row_mut(e.class).copy_from_slice(&e.sem_mean);
            } else {
                blend_row(geo.row_mut(e.class), &e.geo_mean, e.m[0]);
                blend_row(sem.row_mut(e.class), &e.sem_mean, e.m[1]);
            }
        }
        (geo, sem)
    }

    pub(crate) fn commit_update(&mut self, plan: &UpdatePlan) {
        let (geo, sem) = self.effective_rows(plan);
        self.geo = geo;
        self.sem = sem;
        for e in &plan.entries {
            self.initialized[e.class] = true;
            self.update_count[e.class] += 1;
        }
    }

    /// Extend the bank with `n_new` uninitialized classes.
    pub fn widen(&self, n_new: usize) -> PrototypeBank {
        let old = self.n_classes();
        let mut geo = Matrix::zeros(old + n_new, self.geo.cols());
        let mut sem = Matrix::zeros(old + n_new, self.sem.cols());
        for c in 0..old {
            geo.row_mut(c).copy_from_slice(self.geo.row(c));
            sem.row_mut(c).copy_from_slice(self.sem.row(c));
        }
        let mut initialized = self.initialized.clone();
        initialized.extend(std::iter::repeat_n(false, n_new));
        let mut update_count = self.update_count.clone();
        update_count.extend(std::iter::repeat_n(0, n_new));
        PrototypeBank {
            geo,
            sem,
            initialized,
            update_count,
            momentum: self.momentum,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("bank v1\n");
        s.push_str(&format!(
            "shape {} {} {}\n",
            self.n_classes(),
            self.geo.cols(),
            self.sem.cols()
        ));
        s.push_str(&format!(
            "momentum {:016x} {:016x} {:016x} {:016x}\n",
            self.momentum.a.to_bits(),
            self.momentum.b.to_bits(),
            self.momentum.m_min.to_bits(),
            self.momentum.m_max.to_bits()
        ));
        s.push_str("initialized");
        for &b in &self.initialized {
            s.push_str(if b { " 1" } else { " 0" });
        }
        s.push('\n');
        s.push_str("update_count");
        for &u in &self.update_count {
            s.push_str(&format!(" {u}"));
        }
        s.push('\n');
        dump_tensor(&mut s, "geo", self.geo.rows(), self.geo.cols(), self.geo.data());
        dump_tensor(&mut s, "sem", self.sem.rows(), self.sem.cols(), self.sem.data());
        s.push_str("end bank\n");
        s
    }

    pub fn from_reader(r: &mut Reader<'_>) -> Result<Self> {
        if r.next_line()? != "bank v1" {
            return Err(Error::Parse("bad bank header".into()));
        }
        let shape = r.expect("shape")?;
        if shape.len() != 3 {
            return Err(Error::Parse("bank shape needs 3 fields".into()));
        }
        let parse = |t: &str| -> Result<usize> {
            t.parse().map_err(|_| Error::Parse(format!("bad bank dim `{t}`")))
        };
        let (c, dg, ds) = (parse(shape[0])?, parse(shape[1])?, parse(shape[2])?);
        let mom = r.expect("momentum")?;
        if mom.len() != 4 {
            return Err(Error::Parse("momentum needs 4 fields".into()));
        }
        let bits = |t: &str| -> Result<f64> {
            u64::from_str_radix(t, 16)
                .map(f64::from_bits)
                .map_err(|_| Error::Parse("bad momentum value".into()))
        };
        let momentum = MomentumParams {
            a: bits(mom[0])?,
            b: bits(mom[1])?,
            m_min: bits(mom[2])?,
            m_max: bits(mom[3])?,
        };
        let init_toks = r.expect("initialized")?;
        let initialized: Vec<bool> = init_toks.iter().map(|&t| t == "1").collect();
        let count_toks = r.expect("update_count")?;
        let update_count: Vec<u64> = count_toks
            .iter()
            .map(|t| t.parse().map_err(|_| Error::Parse("bad update count".into())))
            .collect::<Result<_>>()?;
        if initialized.len() != c || update_count.len() != c {
            return Err(Error::Parse("bank state length mismatch".into()));
        }
        let (gr, gc, gdata) = r.read_tensor("geo")?;
        let (sr, sc, sdata) = r.read_tensor("sem")?;
        if gr != c || gc != dg || sr != c || sc != ds {
            return Err(Error::Parse("bank tensor shape mismatch".into()));
        }
        if r.next_line()? != "end bank" {
            return Err(Error::Parse("missing `end bank`".into()));
        }
        Ok(PrototypeBank {
            geo: Matrix::from_vec(gr, gc, gdata)?,
            sem: Matrix::from_vec(sr, sc, sdata)?,
            initialized,
            update_count,
            momentum,
        })
    }
}

fn blend_row(row: &mut [f64], mean: &[f64], m: f64) {
    for (p, &mu) in row.iter_mut().zip(mean) {
        *p = (1.0 - m) * *p + m * mu;
    }
}

/// One batch's pending prototype updates.
#[derive(Debug, Clone)]
pub(crate) struct UpdatePlan {
    pub entries: Vec<ClassUpdate>,
}

#[derive(Debug, Clone)]
pub(crate) struct ClassUpdate {
    pub class: usize,
    /// first sighting: prototype jumps straight to the batch mean
    pub fresh: bool,
    pub geo_mean: Vec<f64>,
    pub sem_mean: Vec<f64>,
    pub sim: [f64; 2],
    pub m: [f64; 2],
}

/// Attention scoring, per-stream projections and the fusion MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams {
    pub attn_geo: Dense,
    pub attn_sem: Dense,
    pub proj_geo: Dense,
    pub proj_sem: Dense,
    pub mlp1: Dense,
    pub mlp2: Dense,
}

impl FusionParams {
    pub fn init(
        d_geo: usize,
        d_sem: usize,
        d_proto: usize,
        edge_width: usize,
        hidden: usize,
        d_out: usize,
        seed: u64,
    ) -> FusionParams {
        let mut rng = Rng::from_tags(seed, &[0xF051]);
        FusionParams {
            attn_geo: Dense::init(2 * d_geo, 1, &mut rng),
            attn_sem: Dense::init(2 * d_sem, 1, &mut rng),
            proj_geo: Dense::init(2 * d_geo, d_proto, &mut rng),
            proj_sem: Dense::init(2 * d_sem, d_proto, &mut rng),
            mlp1: Dense::init(d_proto + edge_width, hidden, &mut rng),
            mlp2: Dense::init(hidden, d_out, &mut rng),
        }
    }

    pub fn d_proto(&self) -> usize {
        self.proj_geo.d_out()
    }

    pub fn edge_width(&self) -> usize {
        self.mlp1.d_in() - self.d_proto()
    }

    pub fn d_out(&self) -> usize {
        self.mlp2.d_out()
    }

    fn dense_list(&self) -> [&Dense; 6] {
        [
            &self.attn_geo,
            &self.attn_sem,
            &self.proj_geo,
            &self.proj_sem,
            &self.mlp1,
            &self.mlp2,
        ]
    }

    fn dense_list_mut(&mut self) -> [&mut Dense; 6] {
        [
            &mut self.attn_geo,
            &mut self.attn_sem,
            &mut self.proj_geo,
            &mut self.proj_sem,
            &mut self.mlp1,
            &mut self.mlp2,
        ]
    }

    pub fn params(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for d in self.dense_list() {
            v.extend_from_slice(d.w.data());
            v.extend_from_slice(&d.b);
        }
        v
    }

    pub fn set_params(&mut self, params: &[f64]) {
        let mut off = 0;
        for d in self.dense_list_mut() {
            let nw = d.w.data().len();
            d.w.data_mut().copy_from_slice(&params[off..off + nw]);
            off += nw;
            let nb = d.b.len();
            d.b.copy_from_slice(&params[off..off + nb]);
            off += nb;
        }
        assert_eq!(off, params.len());
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("fusion v1\n");
        let names = ["attn_geo", "attn_sem", "proj_geo", "proj_sem", "mlp1", "mlp2"];
        for (name, d) in names.iter().zip(self.dense_list()) {
            dump_tensor(&mut s, &format!("{name}.w"), d.w.rows(), d.w.cols(), d.w.data());
            dump_tensor(&mut s, &format!("{name}.b"), 1, d.b.len(), &d.b);
        }
        s.push_str("end fusion\n");
        s
    }

    pub fn from_reader(r: &mut Reader<'_>) -> Result<Self> {
        if r.next_line()? != "fusion v1" {
            return Err(Error::Parse("bad fusion header".into()));
        }
        let mut read_dense = |name: &str| -> Result<Dense> {
            let (rw, cw, wdata) = r.read_tensor(&format!("{name}.w"))?;
            let (_rb, cb, bdata) = r.read_tensor(&format!("{name}.b"))?;
            if cb != cw {
                return Err(Error::Parse(format!("fusion `{name}` bias width")));
            }
            Ok(Dense {
                w: Matrix::from_vec(rw, cw, wdata)?,
                b: bdata,
            })
        };
        let attn_geo = read_dense("attn_geo")?;
        let attn_sem = read_dense("attn_sem")?;
        let proj_geo = read_dense("proj_geo")?;
        let proj_sem = read_dense("proj_sem")?;
        let mlp1 = read_dense("mlp1")?;
        let mlp2 = read_dense("mlp2")?;
        if r.next_line()? != "end fusion" {
            return Err(Error::Parse("missing `end fusion`".into()));
        }
        Ok(FusionParams {
            attn_geo,
            attn_sem,
            proj_geo,
            proj_sem,
            mlp1,
            mlp2,
        })
    }
}

/// Gradients mirroring [`FusionParams`], plus the momentum map's (a, b).
#[derive(Debug, Clone)]
pub struct FusionGrads {
    pub dense: Vec<(Matrix, Vec<f64>)>,
    pub da: f64,
    pub db: f64,
}

impl FusionGrads {
    fn zeros_like(f: &FusionParams) -> Self {
        FusionGrads {
            dense: f.dense_list().iter().map(|d| d.zero_grad_like()).collect(),
            da: 0.0,
            db: 0.0,
        }
    }
}

/// Forward caches for the prototype-feature stage of one batch.
struct ProtoCache {
    ug: Matrix,
    us: Matrix,
    alpha_g: Vec<f64>,
    vg: Matrix,
    vs: Matrix,
    classes: Vec<usize>,
}

#[allow(clippy::too_many_arguments)]
fn proto_forward(
    geo_rows: &Matrix,
    sem_rows: &Matrix,
    geo: &Matrix,
    sem: &Matrix,
    idxs: &[usize],
    assignments: &[i32],
    fusion: &FusionParams,
    initialized: Option<&[bool]>,
) -> Result<(Matrix, ProtoCache)> {
    let n = idxs.len();
    let d_geo = geo.cols();
    let d_sem = sem.cols();
    let dp = fusion.d_proto();
    let mut pf = Matrix::zeros(n, dp);
    let mut cache = ProtoCache {
        ug: Matrix::zeros(n, 2 * d_geo),
        us: Matrix::zeros(n, 2 * d_sem),
        alpha_g: vec![0.0; n],
        vg: Matrix::zeros(n, dp),
        vs: Matrix::zeros(n, dp),
        classes: vec![0; n],
    };
    for (bi, &i) in idxs.iter().enumerate() {
        let a = assignments[bi];
        if a < 0 || a as usize >= geo_rows.rows() {
            return Err(Error::InvalidConfig(format!(
                "prototype assignment {a} out of range for point {i}"
            )));
        }
        let c = a as usize;
        if let Some(init) = initialized {
            if !init[c] {
                return Err(Error::Uninitialized(c));
            }
        }
        cache.classes[bi] = c;
        {
            let ug = cache.ug.row_mut(bi);
            ug[..d_geo].copy_from_slice(geo.row(i));
            ug[d_geo..].copy_from_slice(geo_rows.row(c));
        }
        {
            let us = cache.us.row_mut(bi);
            us[..d_sem].copy_from_slice(sem.row(i));
            us[d_sem..].copy_from_slice(sem_rows.row(c));
        }
        let mut score_g = [0.0];
        let mut score_s = [0.0];
        fusion.attn_geo.forward_into(cache.ug.row(bi), &mut score_g);
        fusion.attn_sem.forward_into(cache.us.row(bi), &mut score_s);
        let alpha_g = sigmoid(score_g[0] - score_s[0]);
        cache.alpha_g[bi] = alpha_g;
        fusion.proj_geo.forward_into(cache.ug.row(bi), cache.vg.row_mut(bi));
        fusion.proj_sem.forward_into(cache.us.row(bi), cache.vs.row_mut(bi));
        let out = pf.row_mut(bi);
        for d in 0..dp {
            out[d] = alpha_g * cache.vg.get(bi, d) + (1.0 - alpha_g) * cache.vs.get(bi, d);
        }
    }
    Ok((pf, cache))
}

#[allow(clippy::too_many_arguments)]
fn proto_backward(
    d_pf: &Matrix,
    cache: &ProtoCache,
    fusion: &FusionParams,
    grads: &mut FusionGrads,
    d_geo_rows: &mut Matrix,
    d_sem_rows: &mut Matrix,
    d_geo: usize,
    d_sem: usize,
) {
    let dp = fusion.d_proto();
    let mut dvg = vec![0.0; dp];
    let mut dvs = vec![0.0; dp];
    let mut dug = vec![0.0; 2 * d_geo];
    let mut dus = vec![0.0; 2 * d_sem];
    for bi in 0..d_pf.rows() {
        let dout = d_pf.row(bi);
        if dout.iter().all(|&v| v == 0.0) {
            continue;
        }
        let alpha_g = cache.alpha_g[bi];
        let alpha_s = 1.0 - alpha_g;
        let vg = cache.vg.row(bi);
        let vs = cache.vs.row(bi);
        // d alpha_g through out = alpha_g vg + (1-alpha_g) vs
        let mut dalpha = 0.0;
        for d in 0..dp {
            dalpha += dout[d] * (vg[d] - vs[d]);
            dvg[d] = alpha_g * dout[d];
            dvs[d] = alpha_s * dout[d];
        }
        // alpha_g = sigmoid(score_g - score_s): two-way softmax
        let dscore = dalpha * alpha_g * alpha_s;
        let ug = cache.ug.row(bi);
        let us = cache.us.row(bi);
        {
            let (gw, gb) = &mut grads.dense[0];
            fusion.attn_geo.accumulate_grads(ug, &[dscore], gw, gb);
        }
        {
            let (gw, gb) = &mut grads.dense[1];
            fusion.attn_sem.accumulate_grads(us, &[-dscore], gw, gb);
        }
        {
            let (gw, gb) = &mut grads.dense[2];
            fusion.proj_geo.accumulate_grads(ug, &dvg, gw, gb);
        }
        {
            let (gw, gb) = &mut grads.dense[3];
            fusion.proj_sem.accumulate_grads(us, &dvs, gw, gb);
        }
        dug.iter_mut().for_each(|v| *v = 0.0);
        dus.iter_mut().for_each(|v| *v = 0.0);
        fusion.attn_geo.backprop_input(&[dscore], &mut dug);
        fusion.attn_sem.backprop_input(&[-dscore], &mut dus);
        fusion.proj_geo.backprop_input(&dvg, &mut dug);
        fusion.proj_sem.backprop_input(&dvs, &mut dus);
        // the second half of each concat is the prototype row
        let c = cache.classes[bi];
        for (g, &v) in d_geo_rows.row_mut(c).iter_mut().zip(&dug[d_geo..]) {
            *g += v;
        }
        for (g, &v) in d_sem_rows.row_mut(c).iter_mut().zip(&dus[d_sem..]) {
            *g += v;
        }
    }
}

/// Forward caches for the fusion MLP + max pooling stage.
struct FuseCache {
    hidden: Matrix,
    z: Matrix,
    winner: Vec<u32>,
    k: usize,
}

fn fuse_forward(
    pf: &Matrix,
    edges: &EdgeTensor,
    idxs: &[usize],
    fusion: &FusionParams,
) -> Result<(Matrix, FuseCache)> {
    let n = idxs.len();
    let dp = fusion.d_proto();
    let dw = fusion.edge_width();
    if pf.cols() != dp {
        return Err(Error::ShapeMismatch(format!(
            "prototype features have width {}, fusion expects {dp}",
            pf.cols()
        )));
    }
    if edges.width != dw {
        return Err(Error::ShapeMismatch(format!(
            "edge width {} does not match fusion input {dw}",
            edges.width
        )));
    }
    let k = edges.k;
    let hf = fusion.mlp1.d_out();
    let df = fusion.d_out();
    let mut enhanced = Matrix::zeros(n, df);
    let mut cache = FuseCache {
        hidden: Matrix::zeros(n * k, hf),
        z: Matrix::zeros(n * k, df),
        winner: vec![0; n * df],
        k,
    };
    let mut x = vec![0.0; dp + dw];
    for (bi, &i) in idxs.iter().enumerate() {
        x[..dp].copy_from_slice(pf.row(bi));
        for j in 0..k {
            x[dp..].copy_from_slice(edges.edge(i, j));
            let slot = bi * k + j;
            let h = cache.hidden.row_mut(slot);
            fusion.mlp1.forward_into(&x, h);
            for v in h.iter_mut() {
                *v = v.tanh();
            }
            let z = cache.z.row_mut(slot);
            fusion.mlp2.forward_into(cache.hidden.row(slot), z);
            for v in z.iter_mut() {
                *v = v.tanh();
            }
        }
        let out = enhanced.row_mut(bi);
        for d in 0..df {
            let mut best = 0usize;
            let mut best_v = cache.z.get(bi * k, d);
            for j in 1..k {
                let v = cache.z.get(bi * k + j, d);
                if v > best_v {
                    best_v = v;
                    best = j;
                }
            }
            out[d] = best_v;
            cache.winner[bi * df + d] = best as u32;
        }
    }
    Ok((enhanced, cache))
}

#[allow(clippy::too_many_arguments)]
fn fuse_backward(
    d_enhanced: &Matrix,
    pf: &Matrix,
    edges: &EdgeTensor,
    idxs: &[usize],
    fusion: &FusionParams,
    cache: &FuseCache,
    grads: &mut FusionGrads,
    d_pf: &mut Matrix,
) {
    let dp = fusion.d_proto();
    let dw = fusion.edge_width();
    let df = fusion.d_out();
    let hf = fusion.mlp1.d_out();
    let k = cache.k;
    let mut dz = vec![0.0; df];
    let mut dh = vec![0.0; hf];
    let mut dx = vec![0.0; dp + dw];
    let mut x = vec![0.0; dp + dw];
    for (bi, &i) in idxs.iter().enumerate() {
        let dout = d_enhanced.row(bi);
        if dout.iter().all(|&v| v == 0.0) {
            continue;
        }
        x[..dp].copy_from_slice(pf.row(bi));
        for j in 0..k {
            // gradient flows only through winning neighbors per component
            let mut any = false;
            for (d, dzv) in dz.iter_mut().enumerate() {
                if cache.winner[bi * df + d] as usize == j && dout[d] != 0.0 {
                    *dzv = dout[d];
                    any = true;
                } else {
                    *dzv = 0.0;
                }
            }
            if !any {
                continue;
            }
            let slot = bi * k + j;
            let z = cache.z.row(slot);
            for (d, zv) in z.iter().enumerate() {
                dz[d] *= 1.0 - zv * zv;
            }
            let h = cache.hidden.row(slot);
            {
                let (gw, gb) = &mut grads.dense[5];
                fusion.mlp2.accumulate_grads(h, &dz, gw, gb);
            }
            dh.iter_mut().for_each(|v| *v = 0.0);
            fusion.mlp2.backprop_input(&dz, &mut dh);
            for (d, hv) in h.iter().enumerate() {
                dh[d] *= 1.0 - hv * hv;
            }
            x[dp..].copy_from_slice(edges.edge(i, j));
            {
                let (gw, gb) = &mut grads.dense[4];
                fusion.mlp1.accumulate_grads(&x, &dh, gw, gb);
            }
            dx.iter_mut().for_each(|v| *v = 0.0);
            fusion.mlp1.backprop_input(&dh, &mut dx);
            for (g, &v) in d_pf.row_mut(bi).iter_mut().zip(&dx[..dp]) {
                *g += v;
            }
        }
    }
}

/// Per-point prototype features: attention-weighted blend of the projected
/// geometric and semantic streams for each point's assigned class. Errors
/// with [`Error::Uninitialized`] when an assignment references a class whose
/// prototype was never initialized.
pub fn prototype_feature(
    bank: &PrototypeBank,
    geo: &FeatureMatrix,
    sem: &FeatureMatrix,
    fusion: &FusionParams,
    assignments: &[i32],
) -> Result<Matrix> {
    let idxs: Vec<usize> = (0..geo.rows()).collect();
    if assignments.len() != idxs.len() || sem.rows() != idxs.len() {
        return Err(Error::ShapeMismatch("assignments/features length".into()));
    }
    let (pf, _) = proto_forward(
        &bank.geo,
        &bank.sem,
        &geo.values,
        &sem.values,
        &idxs,
        assignments,
        fusion,
        Some(&bank.initialized),
    )?;
    Ok(pf)
}

/// Attention weights (alpha_geo, alpha_sem) per point; they always sum to 1.
pub fn prototype_attention(
    bank: &PrototypeBank,
    geo: &FeatureMatrix,
    sem: &FeatureMatrix,
    fusion: &FusionParams,
    assignments: &[i32],
) -> Result<Vec<[f64; 2]>> {
    let idxs: Vec<usize> = (0..geo.rows()).collect();
    let (_, cache) = proto_forward(
        &bank.geo,
        &bank.sem,
        &geo.values,
        &sem.values,
        &idxs,
        assignments,
        fusion,
        Some(&bank.initialized),
    )?;
    Ok(cache.alpha_g.iter().map(|&a| [a, 1.0 - a]).collect())
}

/// Lenient variant for inference: assignments referencing uninitialized
/// classes fall back to an all-zero prototype row instead of erroring.
pub fn prototype_feature_lenient(
    bank: &PrototypeBank,
    geo: &FeatureMatrix,
    sem: &FeatureMatrix,
    fusion: &FusionParams,
    assignments: &[i32],
) -> Result<Matrix> {
    let idxs: Vec<usize> = (0..geo.rows()).collect();
    let (pf, _) = proto_forward(
        &bank.geo,
        &bank.sem,
        &geo.values,
        &sem.values,
        &idxs,
        assignments,
        fusion,
        None,
    )?;
    Ok(pf)
}

/// Fusion MLP over concat(prototype feature, edge vector) per neighbor,
/// max-pooled componentwise across neighbors.
pub fn fuse_with_edges(pf: &Matrix, edges: &EdgeTensor, fusion: &FusionParams) -> Result<Matrix> {
    if pf.rows() != edges.n {
        return Err(Error::ShapeMismatch(format!(
            "{} prototype-feature rows vs {} edge rows",
            pf.rows(),
            edges.n
        )));
    }
    let idxs: Vec<usize> = (0..pf.rows()).collect();
    let (enhanced, _) = fuse_forward(pf, edges, &idxs, fusion)?;
    Ok(enhanced)
}

/// ProtoGuard state carried by an enhanced model.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtoGuard {
    pub bank: PrototypeBank,
    pub fusion: FusionParams,
    pub learnable_momentum: bool,
}

impl ProtoGuard {
    pub fn to_text(&self) -> String {
        let mut s = String::from("protoguard v1\n");
        s.push_str(&format!("learnable_momentum {}\n", self.learnable_momentum as u8));
        s.push_str(&self.bank.to_text());
        s.push_str(&self.fusion.to_text());
        s.push_str("end protoguard\n");
        s
    }

    pub fn from_reader(r: &mut Reader<'_>) -> Result<Self> {
        if r.next_line()? != "protoguard v1" {
            return Err(Error::Parse("bad protoguard header".into()));
        }
        let toks = r.expect("learnable_momentum")?;
        let learnable = toks.first() == Some(&"1");
        let bank = PrototypeBank::from_reader(r)?;
        let fusion = FusionParams::from_reader(r)?;
        if r.next_line()? != "end protoguard" {
            return Err(Error::Parse("missing `end protoguard`".into()));
        }
        Ok(ProtoGuard {
            bank,
            fusion,
            learnable_momentum: learnable,
        })
    }
}

/// One batch of the enhanced pipeline.
pub struct PgBatch<'a> {
    pub geo: &'a Matrix,
    pub sem: &'a Matrix,
    pub edges: &'a EdgeTensor,
    /// cloud indices of the batch points
    pub idxs: &'a [usize],
    /// training target per batch point (IGNORE allowed)
    pub targets: &'a [i32],
    /// prototype lookup class per batch point
    pub assignments: &'a [i32],
    pub weights: Option<&'a [f64]>,
}

pub(crate) struct PgStepOptions {
    /// run the adaptive-momentum prototype blend inside the step
    pub update_prototypes: bool,
    /// classes below this index never blend (novel phase freezes base rows)
    pub min_updatable_class: usize,
    /// force the prototype features to zero (the assignment-free view used
    /// by the first inference pass)
    pub zero_prototypes: bool,
    pub l2: f64,
}

/// Loss, all gradients, and the pending prototype update for one batch of
/// the full enhanced pipeline (prototype blend -> attention fusion -> edge
/// fusion -> network).
pub(crate) fn pg_forward_backward(
    net: &Network,
    fusion: &FusionParams,
    bank: &PrototypeBank,
    batch: &PgBatch<'_>,
    opts: &PgStepOptions,
) -> Result<(f64, NetGrads, FusionGrads, UpdatePlan)> {
    if opts.zero_prototypes {
        // assignment-free view: prototype features identically zero, so only
        // the fusion MLP and the network receive gradient
        let pf = Matrix::zeros(batch.idxs.len(), fusion.d_proto());
        let (enhanced, fuse_cache) = fuse_forward(&pf, batch.edges, batch.idxs, fusion)?;
        let (loss, net_grads, d_enhanced) =
            net.loss_grads_dx(&enhanced, batch.targets, batch.weights, opts.l2, true)?;
        let mut fusion_grads = FusionGrads::zeros_like(fusion);
        let mut d_pf = Matrix::zeros(pf.rows(), pf.cols());
        fuse_backward(
            &d_enhanced,
            &pf,
            batch.edges,
            batch.idxs,
            fusion,
            &fuse_cache,
            &mut fusion_grads,
            &mut d_pf,
        );
        return Ok((loss, net_grads, fusion_grads, UpdatePlan { entries: vec![] }));
    }

    let plan = if opts.update_prototypes {
        let full_labels = scatter_labels(batch, bank.n_classes());
        bank.plan_update(batch.geo, batch.sem, &full_labels, opts.min_updatable_class)?
    } else {
        UpdatePlan { entries: vec![] }
    };
    let (geo_rows, sem_rows) = bank.effective_rows(&plan);

    let (pf, proto_cache) = proto_forward(
        &geo_rows,
        &sem_rows,
        batch.geo,
        batch.sem,
        batch.idxs,
        batch.assignments,
        fusion,
        None,
    )?;
    let (enhanced, fuse_cache) = fuse_forward(&pf, batch.edges, batch.idxs, fusion)?;
    let (loss, net_grads, d_enhanced) =
        net.loss_grads_dx(&enhanced, batch.targets, batch.weights, opts.l2, true)?;

    let mut fusion_grads = FusionGrads::zeros_like(fusion);
    let mut d_pf = Matrix::zeros(pf.rows(), pf.cols());
    fuse_backward(
        &d_enhanced,
        &pf,
        batch.edges,
        batch.idxs,
        fusion,
        &fuse_cache,
        &mut fusion_grads,
        &mut d_pf,
    );
    let mut d_geo_rows = Matrix::zeros(geo_rows.rows(), geo_rows.cols());
    let mut d_sem_rows = Matrix::zeros(sem_rows.rows(), sem_rows.cols());
    proto_backward(
        &d_pf,
        &proto_cache,
        fusion,
        &mut fusion_grads,
        &mut d_geo_rows,
        &mut d_sem_rows,
        batch.geo.cols(),
        batch.sem.cols(),
    );

    // momentum (a, b) gradients through p' = (1 - m) p + m mu
    for e in &plan.entries {
        if e.fresh {
            continue;
        }
        for (stream_i, (d_rows, old_rows, mean)) in [
            (&d_geo_rows, &bank.geo, &e.geo_mean),
            (&d_sem_rows, &bank.sem, &e.sem_mean),
        ]
        .into_iter()
        .enumerate()
        {
            let mut dm = 0.0;
            let drow = d_rows.row(e.class);
            let prow = old_rows.row(e.class);
            for d in 0..drow.len() {
                dm += drow[d] * (mean[d] - prow[d]);
            }
            let s = e.sim[stream_i];
            let sig = sigmoid(bank.momentum.a * s + bank.momentum.b);
            let dpre = dm * (bank.momentum.m_max - bank.momentum.m_min) * sig * (1.0 - sig);
            fusion_grads.da += dpre * s;
            fusion_grads.db += dpre;
        }
    }

    Ok((loss, net_grads, fusion_grads, plan))
}

/// Expand batch targets back onto full-cloud indexing for prototype stats.
fn scatter_labels(batch: &PgBatch<'_>, _n_classes: usize) -> Vec<i32> {
    let n = batch.geo.rows();
    let mut labels = vec![IGNORE_LABEL; n];
    for (bi, &i) in batch.idxs.iter().enumerate() {
        labels[i] = batch.targets[bi];
    }
    labels
}

pub(crate) fn apply_fusion_grads(fusion: &mut FusionParams, grads: &FusionGrads, lr: f64) {
    for (d, g) in fusion.dense_list_mut().into_iter().zip(&grads.dense) {
        for (w, &gv) in d.w.data_mut().iter_mut().zip(g.0.data()) {
            *w -= lr * gv;
        }
        for (b, &gv) in d.b.iter_mut().zip(&g.1) {
            *b -= lr * gv;
        }
    }
}

/// Architecture of the enhanced pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineShape {
    pub d_proto: usize,
    pub fusion_hidden: usize,
    /// width of the enhanced features = network input width
    pub d_enhanced: usize,
    pub hidden: usize,
    pub d_embed: usize,
}

impl Default for PipelineShape {
    fn default() -> Self {
        PipelineShape {
            d_proto: 8,
            fusion_hidden: 16,
            d_enhanced: 8,
            hidden: 16,
            d_embed: 16,
        }
    }
}

/// Enhanced training loop: per epoch, per cloud, per batch the prototypes
/// blend toward the batch means, prototype features fuse with edge features,
/// and one cross-entropy gradient step updates the network, the fusion
/// parameters and (when enabled) the momentum map. Zero epochs is a no-op.
/// Returns the mean per-epoch loss trace.
pub fn pg_train_epochs(
    net: &mut Network,
    pg: &mut ProtoGuard,
    preps: &[crate::model::PreparedCloud],
    targets: &[Vec<i32>],
    min_updatable_class: usize,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    let opts = if min_updatable_class == 0 {
        PgTrainOptions::base()
    } else {
        PgTrainOptions::novel(min_updatable_class)
    };
    pg_train_epochs_weighted(net, pg, preps, targets, None, &opts, cfg)
}

/// How one enhanced training run treats the prototype machinery.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PgTrainOptions {
    /// classes below this index never blend (novel phase freezes base rows)
    pub min_updatable_class: usize,
    /// whether attention/projection/fusion-MLP parameters receive updates;
    /// the novel phase keeps them frozen as part of the base's feature
    /// construction
    pub train_fusion: bool,
    /// additionally train each batch through the zero-prototype view so the
    /// assignment-free first inference pass is in distribution
    pub zero_proto_view: bool,
}

impl PgTrainOptions {
    pub fn base() -> Self {
        PgTrainOptions {
            min_updatable_class: 0,
            train_fusion: true,
            zero_proto_view: true,
        }
    }

    pub fn novel(c_base: usize) -> Self {
        PgTrainOptions {
            min_updatable_class: c_base,
            train_fusion: false,
            zero_proto_view: false,
        }
    }
}

/// [`pg_train_epochs`] with optional per-point loss weights per cloud and
/// explicit prototype-machinery options.
pub fn pg_train_epochs_weighted(
    net: &mut Network,
    pg: &mut ProtoGuard,
    preps: &[crate::model::PreparedCloud],
    targets: &[Vec<i32>],
    weights: Option<&[Vec<f64>]>,
    opts: &PgTrainOptions,
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
            let mut rng = Rng::from_tags(cfg.seed, &[0xB457, epoch as u64, ci as u64]);
            for batch_idxs in crate::model::make_batches(&targets[ci], cfg.batch_points, &mut rng) {
                let batch_targets: Vec<i32> = batch_idxs.iter().map(|&i| targets[ci][i]).collect();
                let batch_weights: Option<Vec<f64>> =
                    weights.map(|ws| batch_idxs.iter().map(|&i| ws[ci][i]).collect());
                let batch = PgBatch {
                    geo: &prep.geo.values,
                    sem: &prep.sem.values,
                    edges: &prep.edges,
                    idxs: &batch_idxs,
                    targets: &batch_targets,
                    assignments: &batch_targets,
                    weights: batch_weights.as_deref(),
                };
                let step_opts = PgStepOptions {
                    update_prototypes: true,
                    min_updatable_class: opts.min_updatable_class,
                    zero_prototypes: false,
                    l2: cfg.l2,
                };
                let (loss, net_grads, fusion_grads, plan) =
                    pg_forward_backward(net, &pg.fusion, &pg.bank, &batch, &step_opts)?;
                net.apply_grads(&net_grads, cfg.learning_rate);
                if opts.train_fusion {
                    apply_fusion_grads(&mut pg.fusion, &fusion_grads, cfg.learning_rate);
                }
                if pg.learnable_momentum {
                    pg.bank.momentum.a -= cfg.learning_rate * fusion_grads.da;
                    pg.bank.momentum.b -= cfg.learning_rate * fusion_grads.db;
                }
                pg.bank.commit_update(&plan);
                if opts.zero_proto_view {
                    let zero_opts = PgStepOptions {
                        update_prototypes: false,
                        min_updatable_class: opts.min_updatable_class,
                        zero_prototypes: true,
                        l2: cfg.l2,
                    };
                    let (_, z_net, z_fusion, _) =
                        pg_forward_backward(net, &pg.fusion, &pg.bank, &batch, &zero_opts)?;
                    net.apply_grads(&z_net, cfg.learning_rate);
                    if opts.train_fusion {
                        apply_fusion_grads(&mut pg.fusion, &z_fusion, cfg.learning_rate);
                    }
                }
                total += loss * batch_idxs.len() as f64;
                count += batch_idxs.len();
            }
        }
        losses.push(if count > 0 { total / count as f64 } else { 0.0 });
    }
    Ok(losses)
}

/// Base-phase training: prototypes are initialized from dataset-wide class
/// means, then the enhanced pipeline trains with ground-truth class
/// assignments. Returns the trained model and per-epoch losses.
pub fn train_base(
    preps: &[crate::model::PreparedCloud],
    targets: &[Vec<i32>],
    n_classes: usize,
    shape: &PipelineShape,
    momentum: MomentumParams,
    learnable_momentum: bool,
    cfg: &TrainConfig,
) -> Result<(crate::model::SegModel, Vec<f64>)> {
    if preps.is_empty() {
        return Err(Error::InvalidConfig("base training needs at least one cloud".into()));
    }
    let d_geo = preps[0].geo.cols();
    let d_sem = preps[0].sem.cols();
    let mut bank = PrototypeBank::new(n_classes, d_geo, d_sem, momentum)?;
    // dataset-wide initialization: mean over every cloud's class members
    let mut all_geo: Vec<Vec<f64>> = Vec::new();
    let mut all_sem: Vec<Vec<f64>> = Vec::new();
    let mut all_labels: Vec<i32> = Vec::new();
    for (prep, t) in preps.iter().zip(targets) {
        for i in 0..prep.len() {
            if t[i] != IGNORE_LABEL {
                all_geo.push(prep.geo.values.row(i).to_vec());
                all_sem.push(prep.sem.values.row(i).to_vec());
                all_labels.push(t[i]);
            }
        }
    }
    if !all_labels.is_empty() {
        bank.init_prototypes(
            &FeatureMatrix::new(
                Matrix::from_rows(&all_geo)?,
                FeatureKind::Geometric,
                preps[0].geo.column_names.clone(),
            )?,
            &all_labels,
        )?;
        bank.init_prototypes(
            &FeatureMatrix::new(
                Matrix::from_rows(&all_sem)?,
                FeatureKind::Semantic,
                preps[0].sem.column_names.clone(),
            )?,
            &all_labels,
        )?;
    }
    let fusion = FusionParams::init(
        d_geo,
        d_sem,
        shape.d_proto,
        preps[0].edges.width,
        shape.fusion_hidden,
        shape.d_enhanced,
        Rng::from_tags(cfg.seed, &[0xF1]).next_u64(),
    );
    let net = Network::init(
        shape.d_enhanced,
        shape.hidden,
        shape.d_embed,
        n_classes,
        Rng::from_tags(cfg.seed, &[0xA2]).next_u64(),
    );
    let mut pg = ProtoGuard {
        bank,
        fusion,
        learnable_momentum,
    };
    let mut net = net;
    let losses = pg_train_epochs(&mut net, &mut pg, preps, targets, 0, cfg)?;
    Ok((crate::model::SegModel { net, pg: Some(pg) }, losses))
}

/// Full-pipeline loss as a pure function of (network, fusion, momentum)
/// parameters with the bank state and batch fixed.
pub(crate) fn pg_loss(
    net: &Network,
    fusion: &FusionParams,
    bank: &PrototypeBank,
    batch: &PgBatch<'_>,
    opts: &PgStepOptions,
) -> Result<f64> {
    let plan = if opts.update_prototypes {
        let full_labels = scatter_labels(batch, bank.n_classes());
        bank.plan_update(batch.geo, batch.sem, &full_labels, opts.min_updatable_class)?
    } else {
        UpdatePlan { entries: vec![] }
    };
    let (geo_rows, sem_rows) = bank.effective_rows(&plan);
    let (pf, _) = proto_forward(
        &geo_rows,
        &sem_rows,
        batch.geo,
        batch.sem,
        batch.idxs,
        batch.assignments,
        fusion,
        None,
    )?;
    let (enhanced, _) = fuse_forward(&pf, batch.edges, batch.idxs, fusion)?;
    net.loss_only(&enhanced, batch.targets, batch.weights, opts.l2)
}

/// Central finite-difference check of the full enhanced pipeline's analytic
/// gradients over every network, fusion and momentum parameter. Returns the
/// max relative error.
pub fn pg_gradient_check(
    net: &Network,
    pg: &ProtoGuard,
    batch: &PgBatch<'_>,
    update_prototypes: bool,
    eps: f64,
) -> Result<f64> {
    let opts = PgStepOptions {
        update_prototypes,
        min_updatable_class: 0,
        zero_prototypes: false,
        l2: 0.0,
    };
    let (_, net_grads, fusion_grads, _) = pg_forward_backward(net, &pg.fusion, &pg.bank, batch, &opts)?;
    let mut analytic = net.flatten_grads(&net_grads);
    // fusion grads flatten in the same order as FusionParams::params
    for g in &fusion_grads.dense {
        analytic.extend_from_slice(g.0.data());
        analytic.extend_from_slice(&g.1);
    }
    analytic.push(fusion_grads.da);
    analytic.push(fusion_grads.db);

    let net_params = net.params();
    let fusion_params = pg.fusion.params();
    let n_net = net_params.len();
    let n_fusion = fusion_params.len();
    let mask = net.trainable_mask();

    let mut probe_net = net.clone();
    let mut probe_fusion = pg.fusion.clone();
    let mut probe_bank = pg.bank.clone();
    let mut max_rel: f64 = 0.0;
    let total = n_net + n_fusion + 2;
    for j in 0..total {
        if j < n_net && !mask[j] {
            continue;
        }
        let mut eval = |delta: f64| -> Result<f64> {
            if j < n_net {
                let mut p = net_params.clone();
                p[j] += delta;
                probe_net.set_params(&p);
                let l = pg_loss(&probe_net, &pg.fusion, &pg.bank, batch, &opts);
                probe_net.set_params(&net_params);
                l
            } else if j < n_net + n_fusion {
                let mut p = fusion_params.clone();
                p[j - n_net] += delta;
                probe_fusion.set_params(&p);
                let l = pg_loss(net, &probe_fusion, &pg.bank, batch, &opts);
                probe_fusion.set_params(&fusion_params);
                l
            } else {
                if j == n_net + n_fusion {
                    probe_bank.momentum.a = pg.bank.momentum.a + delta;
                } else {
                    probe_bank.momentum.b = pg.bank.momentum.b + delta;
                }
                let l = pg_loss(net, &pg.fusion, &probe_bank, batch, &opts);
                probe_bank.momentum = pg.bank.momentum;
                l
            }
        };
        let lp = eval(eps)?;
        let lm = eval(-eps)?;
        let fd = (lp - lm) / (2.0 * eps);
        max_rel = max_rel.max(crate::network::rel_error(analytic[j], fd));
    }
    Ok(max_rel)
}
