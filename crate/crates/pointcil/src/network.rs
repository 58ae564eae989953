//! Point-wise feature extractor and classifier with hand-written forward and
//! backward passes, plain gradient descent, component freezing, and widening
//! of the classifier for incrementally added classes.

use crate::cloud::IGNORE_LABEL;
use crate::error::{Error, Result};
use crate::linalg::{softmax_into, Matrix};
use crate::rng::Rng;
use crate::sertext::{dump_tensor, Reader};

/// One dense layer; weights are d_in x d_out, so `out = x W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl Dense {
    /// Scaled uniform init: |w| <= 1/sqrt(d_in), biases zero.
    pub fn init(d_in: usize, d_out: usize, rng: &mut Rng) -> Dense {
        let bound = 1.0 / (d_in as f64).sqrt();
        let mut w = Matrix::zeros(d_in, d_out);
        for v in w.data_mut() {
            *v = rng.range_f64(-bound, bound);
        }
        Dense {
            w,
            b: vec![0.0; d_out],
        }
    }

    pub fn d_in(&self) -> usize {
        self.w.rows()
    }

    pub fn d_out(&self) -> usize {
        self.w.cols()
    }

    pub fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.b);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let wrow = self.w.row(i);
            for (o, &wij) in out.iter_mut().zip(wrow) {
                *o += xi * wij;
            }
        }
    }

    /// Accumulate dW += x^T dz, db += dz and return nothing; input gradient
    /// is handled by [`Dense::backprop_input`].
    pub fn accumulate_grads(&self, x: &[f64], dz: &[f64], gw: &mut Matrix, gb: &mut [f64]) {
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                let grow = gw.row_mut(i);
                for (g, &d) in grow.iter_mut().zip(dz) {
                    *g += xi * d;
                }
            }
        }
        for (g, &d) in gb.iter_mut().zip(dz) {
            *g += d;
        }
    }

    /// dx += dz W^T
    pub fn backprop_input(&self, dz: &[f64], dx: &mut [f64]) {
        for (i, dxi) in dx.iter_mut().enumerate() {
            let wrow = self.w.row(i);
            let mut acc = 0.0;
            for (&wij, &d) in wrow.iter().zip(dz) {
                acc += wij * d;
            }
            *dxi += acc;
        }
    }

    pub fn zero_grad_like(&self) -> (Matrix, Vec<f64>) {
        (Matrix::zeros(self.w.rows(), self.w.cols()), vec![0.0; self.b.len()])
    }
}

/// Gradients mirroring [`Network`] parameters.
#[derive(Debug, Clone)]
pub struct NetGrads {
    pub extractor: Vec<(Matrix, Vec<f64>)>,
    pub classifier: (Matrix, Vec<f64>),
}

/// Two tanh layers (d_in -> hidden -> d_embed) plus a linear classifier
/// (d_embed -> c_out) with softmax output.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub extractor: Vec<Dense>,
    pub classifier: Dense,
    pub frozen_extractor: bool,
    pub frozen_classifier: bool,
    /// The first `frozen_classifier_units` output units never receive
    /// updates (used by the freeze-and-add baseline).
    pub frozen_classifier_units: usize,
    pub rng_seed: u64,
}

/// Hyperparameters for one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Points per gradient step; 0 means one full-batch step per cloud.
    pub batch_points: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.3,
            epochs: 40,
            batch_points: 0,
            l2: 0.0,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be > 0".into()));
        }
        if self.epochs < 1 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.l2 < 0.0 {
            return Err(Error::InvalidConfig("l2 must be >= 0".into()));
        }
        Ok(())
    }
}

impl Network {
    pub fn init(d_in: usize, hidden: usize, d_embed: usize, n_classes: usize, seed: u64) -> Network {
        assert!(d_in >= 1 && hidden >= 1 && d_embed >= 1 && n_classes >= 1);
        let mut rng = Rng::from_tags(seed, &[0x4E57]);
        let extractor = vec![
            Dense::init(d_in, hidden, &mut rng),
            Dense::init(hidden, d_embed, &mut rng),
        ];
        let classifier = Dense::init(d_embed, n_classes, &mut rng);
        Network {
            extractor,
            classifier,
            frozen_extractor: false,
            frozen_classifier: false,
            frozen_classifier_units: 0,
            rng_seed: seed,
        }
    }

    pub fn d_in(&self) -> usize {
        self.extractor[0].d_in()
    }

    pub fn d_embed(&self) -> usize {
        self.extractor.last().unwrap().d_out()
    }

    pub fn n_classes(&self) -> usize {
        self.classifier.d_out()
    }

    /// Forward pass. Returns (embeddings, probabilities); empty inputs give
    /// empty outputs.
    pub fn forward(&self, features: &Matrix) -> Result<(Matrix, Matrix)> {
        if features.rows() > 0 && features.cols() != self.d_in() {
            return Err(Error::ShapeMismatch(format!(
                "network expects {} input columns, got {}",
                self.d_in(),
                features.cols()
            )));
        }
        let n = features.rows();
        let c = self.n_classes();
        let mut emb = Matrix::zeros(n, self.d_embed());
        let mut probs = Matrix::zeros(n, c);
        let mut h = vec![0.0; self.extractor[0].d_out()];
        let mut logits = vec![0.0; c];
        for i in 0..n {
            self.extractor[0].forward_into(features.row(i), &mut h);
            for v in h.iter_mut() {
                *v = v.tanh();
            }
            let erow = emb.row_mut(i);
            self.extractor[1].forward_into(&h, erow);
            for v in erow.iter_mut() {
                *v = v.tanh();
            }
            self.classifier.forward_into(emb.row(i), &mut logits);
            softmax_into(&logits, probs.row_mut(i));
        }
        Ok((emb, probs))
    }

    /// Logits before softmax (used to check classifier widening).
    pub fn forward_logits(&self, features: &Matrix) -> Result<Matrix> {
        let (emb, _) = self.forward(features)?;
        let mut logits = Matrix::zeros(features.rows(), self.n_classes());
        for i in 0..features.rows() {
            self.classifier.forward_into(emb.row(i), logits.row_mut(i));
        }
        Ok(logits)
    }

    /// Weighted cross-entropy loss and parameter gradients over non-IGNORE
    /// points. Frozen components report exactly zero gradient and are
    /// excluded from the L2 term.
    pub fn loss_and_grads(
        &self,
        features: &Matrix,
        labels: &[i32],
        weights: Option<&[f64]>,
        l2: f64,
    ) -> Result<(f64, NetGrads)> {
        let (loss, grads, _) = self.loss_grads_dx(features, labels, weights, l2, false)?;
        Ok((loss, grads))
    }

    /// Like [`Network::loss_and_grads`] but optionally also returns the loss
    /// gradient with respect to the input features (rows of skipped points
    /// stay zero). Used by the fused feature pipeline.
    pub fn loss_grads_dx(
        &self,
        features: &Matrix,
        labels: &[i32],
        weights: Option<&[f64]>,
        l2: f64,
        want_dx: bool,
    ) -> Result<(f64, NetGrads, Matrix)> {
        if labels.len() != features.rows() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {} feature rows",
                labels.len(),
                features.rows()
            )));
        }
        if let Some(w) = weights {
            if w.len() != labels.len() {
                return Err(Error::ShapeMismatch("weights length".into()));
            }
            if w.iter().any(|&v| v < 0.0) {
                return Err(Error::InvalidConfig("negative per-point weight".into()));
            }
        }
        let c = self.n_classes();
        let wsum: f64 = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l != IGNORE_LABEL)
            .map(|(i, _)| weights.map_or(1.0, |w| w[i]))
            .sum();
        if wsum <= 0.0 {
            return Err(Error::AllIgnored);
        }

        let mut grads = NetGrads {
            extractor: self.extractor.iter().map(|l| l.zero_grad_like()).collect(),
            classifier: self.classifier.zero_grad_like(),
        };
        let mut dx = Matrix::zeros(if want_dx { features.rows() } else { 0 }, self.d_in());
        let mut loss = 0.0;

        let mut h = vec![0.0; self.extractor[0].d_out()];
        let mut emb = vec![0.0; self.d_embed()];
        let mut logits = vec![0.0; c];
        let mut p = vec![0.0; c];
        let mut dlogits = vec![0.0; c];
        let mut demb = vec![0.0; self.d_embed()];
        let mut dh = vec![0.0; self.extractor[0].d_out()];

        for i in 0..features.rows() {
            let y = labels[i];
            if y == IGNORE_LABEL {
                continue;
            }
            let y = y as usize;
            if y >= c {
                return Err(Error::ShapeMismatch(format!(
                    "label {y} exceeds classifier width {c}"
                )));
            }
            let wi = weights.map_or(1.0, |w| w[i]);
            if wi == 0.0 {
                continue;
            }
            let x = features.row(i);
            self.extractor[0].forward_into(x, &mut h);
            for v in h.iter_mut() {
                *v = v.tanh();
            }
            self.extractor[1].forward_into(&h, &mut emb);
            for v in emb.iter_mut() {
                *v = v.tanh();
            }
            self.classifier.forward_into(&emb, &mut logits);
            softmax_into(&logits, &mut p);
            loss += -(p[y].max(1e-300)).ln() * wi / wsum;

            // softmax + CE
            let scale = wi / wsum;
            for j in 0..c {
                dlogits[j] = (p[j] - if j == y { 1.0 } else { 0.0 }) * scale;
            }
            {
                let (gw, gb) = &mut grads.classifier;
                self.classifier.accumulate_grads(&emb, &dlogits, gw, gb);
            }
            demb.iter_mut().for_each(|v| *v = 0.0);
            self.classifier.backprop_input(&dlogits, &mut demb);
            for (d, &e) in demb.iter_mut().zip(&emb) {
                *d *= 1.0 - e * e;
            }
            {
                let (gw, gb) = &mut grads.extractor[1];
                self.extractor[1].accumulate_grads(&h, &demb, gw, gb);
            }
            dh.iter_mut().for_each(|v| *v = 0.0);
            self.extractor[1].backprop_input(&demb, &mut dh);
            for (d, &hv) in dh.iter_mut().zip(&h) {
                *d *= 1.0 - hv * hv;
            }
            {
                let (gw, gb) = &mut grads.extractor[0];
                self.extractor[0].accumulate_grads(x, &dh, gw, gb);
            }
            if want_dx {
                self.extractor[0].backprop_input(&dh, dx.row_mut(i));
            }
        }

        // L2 over trainable parameters only
        if l2 > 0.0 {
            if !self.frozen_extractor {
                for (layer, g) in self.extractor.iter().zip(grads.extractor.iter_mut()) {
                    for (gv, &wv) in g.0.data_mut().iter_mut().zip(layer.w.data()) {
                        *gv += l2 * wv;
                        loss += 0.5 * l2 * wv * wv;
                    }
                }
            }
            if !self.frozen_classifier {
                let from = self.frozen_classifier_units;
                for r in 0..self.classifier.w.rows() {
                    for cidx in from..self.classifier.w.cols() {
                        let wv = self.classifier.w.get(r, cidx);
                        grads.classifier.0.set(r, cidx, grads.classifier.0.get(r, cidx) + l2 * wv);
                        loss += 0.5 * l2 * wv * wv;
                    }
                }
            }
        }

        self.mask_frozen(&mut grads);
        Ok((loss, grads, dx))
    }

    fn mask_frozen(&self, grads: &mut NetGrads) {
        if self.frozen_extractor {
            for g in grads.extractor.iter_mut() {
                g.0.data_mut().iter_mut().for_each(|v| *v = 0.0);
                g.1.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        if self.frozen_classifier {
            grads.classifier.0.data_mut().iter_mut().for_each(|v| *v = 0.0);
            grads.classifier.1.iter_mut().for_each(|v| *v = 0.0);
        } else if self.frozen_classifier_units > 0 {
            let units = self.frozen_classifier_units;
            for r in 0..grads.classifier.0.rows() {
                for c in 0..units.min(grads.classifier.0.cols()) {
                    grads.classifier.0.set(r, c, 0.0);
                }
            }
            for c in 0..units.min(grads.classifier.1.len()) {
                grads.classifier.1[c] = 0.0;
            }
        }
    }

    pub fn apply_grads(&mut self, grads: &NetGrads, lr: f64) {
        if !self.frozen_extractor {
            for (layer, g) in self.extractor.iter_mut().zip(&grads.extractor) {
                for (w, &gv) in layer.w.data_mut().iter_mut().zip(g.0.data()) {
                    *w -= lr * gv;
                }
                for (b, &gv) in layer.b.iter_mut().zip(&g.1) {
                    *b -= lr * gv;
                }
            }
        }
        if !self.frozen_classifier {
            for (w, &gv) in self.classifier.w.data_mut().iter_mut().zip(grads.classifier.0.data()) {
                *w -= lr * gv;
            }
            for (b, &gv) in self.classifier.b.iter_mut().zip(&grads.classifier.1) {
                *b -= lr * gv;
            }
        }
    }

    /// One gradient-descent step; returns the pre-update loss.
    pub fn train_step(
        &mut self,
        features: &Matrix,
        labels: &[i32],
        weights: Option<&[f64]>,
        cfg: &TrainConfig,
    ) -> Result<f64> {
        cfg.validate()?;
        let (loss, grads) = self.loss_and_grads(features, labels, weights, cfg.l2)?;
        self.apply_grads(&grads, cfg.learning_rate);
        Ok(loss)
    }

    /// Loss without gradients, with the same semantics as
    /// [`Network::loss_and_grads`].
    pub fn loss_only(
        &self,
        features: &Matrix,
        labels: &[i32],
        weights: Option<&[f64]>,
        l2: f64,
    ) -> Result<f64> {
        let (_, probs) = self.forward(features)?;
        let c = self.n_classes();
        let mut wsum = 0.0;
        let mut loss = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            if y == IGNORE_LABEL {
                continue;
            }
            if y < 0 || y as usize >= c {
                return Err(Error::ShapeMismatch(format!(
                    "label {y} exceeds classifier width {c}"
                )));
            }
            let wi = weights.map_or(1.0, |w| w[i]);
            wsum += wi;
            loss += -(probs.get(i, y as usize).max(1e-300)).ln() * wi;
        }
        if wsum <= 0.0 {
            return Err(Error::AllIgnored);
        }
        loss /= wsum;
        if l2 > 0.0 {
            if !self.frozen_extractor {
                for layer in &self.extractor {
                    loss += 0.5 * l2 * layer.w.data().iter().map(|v| v * v).sum::<f64>();
                }
            }
            if !self.frozen_classifier {
                let from = self.frozen_classifier_units;
                for r in 0..self.classifier.w.rows() {
                    for cidx in from..self.classifier.w.cols() {
                        let wv = self.classifier.w.get(r, cidx);
                        loss += 0.5 * l2 * wv * wv;
                    }
                }
            }
        }
        Ok(loss)
    }

    /// All parameters flattened in a fixed order.
    pub fn params(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for l in &self.extractor {
            v.extend_from_slice(l.w.data());
            v.extend_from_slice(&l.b);
        }
        v.extend_from_slice(self.classifier.w.data());
        v.extend_from_slice(&self.classifier.b);
        v
    }

    pub fn set_params(&mut self, params: &[f64]) {
        let mut off = 0;
        for l in self.extractor.iter_mut() {
            let nw = l.w.data().len();
            l.w.data_mut().copy_from_slice(&params[off..off + nw]);
            off += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&params[off..off + nb]);
            off += nb;
        }
        let nw = self.classifier.w.data().len();
        self.classifier.w.data_mut().copy_from_slice(&params[off..off + nw]);
        off += nw;
        let nb = self.classifier.b.len();
        self.classifier.b.copy_from_slice(&params[off..off + nb]);
        off += nb;
        assert_eq!(off, params.len());
    }

    /// True where the flattened parameter is trainable under current flags.
    pub fn trainable_mask(&self) -> Vec<bool> {
        let mut m = Vec::new();
        for l in &self.extractor {
            m.extend(std::iter::repeat_n(!self.frozen_extractor, l.w.data().len() + l.b.len()));
        }
        let units = self.frozen_classifier_units;
        for _r in 0..self.classifier.w.rows() {
            for c in 0..self.classifier.w.cols() {
                m.push(!self.frozen_classifier && c >= units);
            }
        }
        for c in 0..self.classifier.b.len() {
            m.push(!self.frozen_classifier && c >= units);
        }
        m
    }

    /// Gradients flattened in the same order as [`Network::params`].
    pub fn flatten_grads(&self, g: &NetGrads) -> Vec<f64> {
        let mut v = Vec::new();
        for l in &g.extractor {
            v.extend_from_slice(l.0.data());
            v.extend_from_slice(&l.1);
        }
        v.extend_from_slice(g.classifier.0.data());
        v.extend_from_slice(&g.classifier.1);
        v
    }

    /// Max relative error between analytic and central finite-difference
    /// gradients over all trainable parameters.
    pub fn gradient_check(&self, features: &Matrix, labels: &[i32], eps: f64) -> Result<f64> {
        if !(eps > 0.0 && eps <= 1e-2) {
            return Err(Error::InvalidConfig("eps must lie in (0, 1e-2]".into()));
        }
        let (_, grads) = self.loss_and_grads(features, labels, None, 0.0)?;
        let analytic = self.flatten_grads(&grads);
        let mask = self.trainable_mask();
        let base = self.params();
        let mut probe = self.clone();
        let mut max_rel: f64 = 0.0;
        for j in 0..base.len() {
            if !mask[j] {
                debug_assert_eq!(analytic[j], 0.0);
                continue;
            }
            let mut p = base.clone();
            p[j] = base[j] + eps;
            probe.set_params(&p);
            let (lp, _) = probe.loss_and_grads(features, labels, None, 0.0)?;
            p[j] = base[j] - eps;
            probe.set_params(&p);
            let (lm, _) = probe.loss_and_grads(features, labels, None, 0.0)?;
            let fd = (lp - lm) / (2.0 * eps);
            max_rel = max_rel.max(rel_error(analytic[j], fd));
        }
        Ok(max_rel)
    }

    /// Copy for the next incremental phase: extractor reused, classifier
    /// widened by `n_new_classes` output units (old units copied exactly,
    /// new ones freshly initialized), freeze flags cleared.
    pub fn clone_for_novel(&self, n_new_classes: usize) -> Network {
        assert!(n_new_classes >= 1);
        let old_c = self.n_classes();
        let new_c = old_c + n_new_classes;
        let d_emb = self.d_embed();
        let mut rng = Rng::from_tags(self.rng_seed, &[0xC107E, old_c as u64, n_new_classes as u64]);
        let bound = 1.0 / (d_emb as f64).sqrt();
        let mut w = Matrix::zeros(d_emb, new_c);
        for r in 0..d_emb {
            for c in 0..old_c {
                w.set(r, c, self.classifier.w.get(r, c));
            }
            for c in old_c..new_c {
                w.set(r, c, rng.range_f64(-bound, bound));
            }
        }
        let mut b = vec![0.0; new_c];
        b[..old_c].copy_from_slice(&self.classifier.b);
        Network {
            extractor: self.extractor.clone(),
            classifier: Dense { w, b },
            frozen_extractor: false,
            frozen_classifier: false,
            frozen_classifier_units: 0,
            rng_seed: Rng::from_tags(self.rng_seed, &[0xC107E + 1]).next_u64(),
        }
    }

    /// Serialized view of what freeze-and-add keeps fixed: the extractor and
    /// the first `units` classifier output columns.
    pub fn frozen_snapshot(&self, units: usize) -> String {
        let mut s = String::new();
        for (i, l) in self.extractor.iter().enumerate() {
            dump_tensor(&mut s, &format!("ext{i}.w"), l.w.rows(), l.w.cols(), l.w.data());
            dump_tensor(&mut s, &format!("ext{i}.b"), 1, l.b.len(), &l.b);
        }
        let units = units.min(self.classifier.w.cols());
        let mut old_cols = Vec::new();
        for r in 0..self.classifier.w.rows() {
            for c in 0..units {
                old_cols.push(self.classifier.w.get(r, c));
            }
        }
        old_cols.extend_from_slice(&self.classifier.b[..units]);
        dump_tensor(&mut s, "cls.frozen", 1, old_cols.len(), &old_cols);
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("network v1\n");
        s.push_str(&format!(
            "dims {} {} {} {}\n",
            self.d_in(),
            self.extractor[0].d_out(),
            self.d_embed(),
            self.n_classes()
        ));
        s.push_str(&format!(
            "frozen {} {} {}\n",
            self.frozen_extractor as u8, self.frozen_classifier as u8, self.frozen_classifier_units
        ));
        s.push_str(&format!("seed {}\n", self.rng_seed));
        for (i, l) in self.extractor.iter().enumerate() {
            dump_tensor(&mut s, &format!("ext{i}.w"), l.w.rows(), l.w.cols(), l.w.data());
            dump_tensor(&mut s, &format!("ext{i}.b"), 1, l.b.len(), &l.b);
        }
        dump_tensor(
            &mut s,
            "cls.w",
            self.classifier.w.rows(),
            self.classifier.w.cols(),
            self.classifier.w.data(),
        );
        dump_tensor(&mut s, "cls.b", 1, self.classifier.b.len(), &self.classifier.b);
        s.push_str("end network\n");
        s
    }

    pub fn from_reader(r: &mut Reader<'_>) -> Result<Network> {
        let header = r.next_line()?;
        if header != "network v1" {
            return Err(Error::Parse(format!("bad network header `{header}`")));
        }
        let dims = r.expect("dims")?;
        if dims.len() != 4 {
            return Err(Error::Parse("dims needs 4 fields".into()));
        }
        let parse = |t: &str| -> Result<usize> {
            t.parse().map_err(|_| Error::Parse(format!("bad dim `{t}`")))
        };
        let (d_in, hidden, d_embed, c_out) =
            (parse(dims[0])?, parse(dims[1])?, parse(dims[2])?, parse(dims[3])?);
        let frozen = r.expect("frozen")?;
        if frozen.len() != 3 {
            return Err(Error::Parse("frozen needs 3 fields".into()));
        }
        let seed_toks = r.expect("seed")?;
        let seed: u64 = seed_toks
            .first()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Parse("bad seed".into()))?;
        let mut read_dense = |name: &str, din: usize, dout: usize| -> Result<Dense> {
            let (rw, cw, wdata) = r.read_tensor(&format!("{name}.w"))?;
            let (rb, cb, bdata) = r.read_tensor(&format!("{name}.b"))?;
            if rw != din || cw != dout || rb != 1 || cb != dout {
                return Err(Error::Parse(format!("tensor `{name}` shape mismatch")));
            }
            Ok(Dense {
                w: Matrix::from_vec(rw, cw, wdata)?,
                b: bdata,
            })
        };
        let ext0 = read_dense("ext0", d_in, hidden)?;
        let ext1 = read_dense("ext1", hidden, d_embed)?;
        let cls = read_dense("cls", d_embed, c_out)?;
        let tail = r.next_line()?;
        if tail != "end network" {
            return Err(Error::Parse("missing `end network`".into()));
        }
        Ok(Network {
            extractor: vec![ext0, ext1],
            classifier: cls,
            frozen_extractor: frozen[0] == "1",
            frozen_classifier: frozen[1] == "1",
            frozen_classifier_units: frozen[2]
                .parse()
                .map_err(|_| Error::Parse("bad frozen units".into()))?,
            rng_seed: seed,
        })
    }

    pub fn from_text(text: &str) -> Result<Network> {
        Network::from_reader(&mut Reader::new(text))
    }
}

pub(crate) fn rel_error(a: f64, b: f64) -> f64 {
    if a.abs() < 1e-10 && b.abs() < 1e-10 {
        return 0.0;
    }
    (a - b).abs() / a.abs().max(b.abs())
}
