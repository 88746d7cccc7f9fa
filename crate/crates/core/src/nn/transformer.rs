use std::ops::Range;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis, NdFloat};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::sememe::FusionPlan;

const LN_EPS: f64 = 1e-6;
const INIT_STD: f64 = 0.02;

#[inline]
fn cast<F: NdFloat>(x: f64) -> F {
    F::from(x).unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub vocab_size: usize,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn: usize,
    pub max_positions: usize,
    /// Rows of the sememe embedding table; zero disables fusion.
    pub num_sememes: usize,
    pub sememe_weight: f64,
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.heads == 0 || self.hidden % self.heads != 0 {
            return Err(Error::Config(format!(
                "hidden width {} must be a positive multiple of the head count {}",
                self.hidden, self.heads
            )));
        }
        if self.vocab_size == 0 || self.ffn == 0 || self.max_positions == 0 {
            return Err(Error::Config("vocabulary, feed-forward width and positions must be positive".into()));
        }
        if !(self.sememe_weight >= 0.0 && self.sememe_weight.is_finite()) {
            return Err(Error::Config(format!("invalid sememe weight {}", self.sememe_weight)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    offset: usize,
    rows: usize,
    cols: usize,
}

impl Slot {
    fn range(self) -> Range<usize> {
        self.offset..self.offset + self.rows * self.cols
    }
}

#[derive(Debug, Clone)]
struct LayerSlots {
    ln1_g: Slot,
    ln1_b: Slot,
    qkv_w: Slot,
    qkv_b: Slot,
    o_w: Slot,
    o_b: Slot,
    ln2_g: Slot,
    ln2_b: Slot,
    ff1_w: Slot,
    ff1_b: Slot,
    ff2_w: Slot,
    ff2_b: Slot,
}

#[derive(Debug, Clone)]
struct Layout {
    tok: Slot,
    pos: Slot,
    sememe: Option<Slot>,
    layers: Vec<LayerSlots>,
    lnf_g: Slot,
    lnf_b: Slot,
    total: usize,
    /// Matrices that take weight decay (biases and norms do not).
    decayed: Vec<Slot>,
    unit: Vec<Slot>,
}

impl Layout {
    fn new(c: &BackboneConfig) -> Layout {
        let mut next = 0;
        let mut decayed = Vec::new();
        let mut unit = Vec::new();
        let mut slot = |rows: usize, cols: usize, decay: bool, ones: bool| {
            let s = Slot { offset: next, rows, cols };
            next += rows * cols;
            if decay {
                decayed.push(s);
            }
            if ones {
                unit.push(s);
            }
            s
        };
        let d = c.hidden;
        let tok = slot(c.vocab_size, d, true, false);
        let pos = slot(c.max_positions, d, true, false);
        let sememe = (c.num_sememes > 0).then(|| slot(c.num_sememes, d, true, false));
        let layers = (0..c.layers)
            .map(|_| LayerSlots {
                ln1_g: slot(1, d, false, true),
                ln1_b: slot(1, d, false, false),
                qkv_w: slot(d, 3 * d, true, false),
                qkv_b: slot(1, 3 * d, false, false),
                o_w: slot(d, d, true, false),
                o_b: slot(1, d, false, false),
                ln2_g: slot(1, d, false, true),
                ln2_b: slot(1, d, false, false),
                ff1_w: slot(d, c.ffn, true, false),
                ff1_b: slot(1, c.ffn, false, false),
                ff2_w: slot(c.ffn, d, true, false),
                ff2_b: slot(1, d, false, false),
            })
            .collect();
        let lnf_g = slot(1, d, false, true);
        let lnf_b = slot(1, d, false, false);
        Layout {
            tok,
            pos,
            sememe,
            layers,
            lnf_g,
            lnf_b,
            total: next,
            decayed,
            unit,
        }
    }
}

fn mat<F>(buf: &[F], s: Slot) -> ArrayView2<'_, F> {
    ArrayView2::from_shape((s.rows, s.cols), &buf[s.range()]).expect("slot shape")
}

fn mat_mut<F>(buf: &mut [F], s: Slot) -> ArrayViewMut2<'_, F> {
    ArrayViewMut2::from_shape((s.rows, s.cols), &mut buf[s.range()]).expect("slot shape")
}

fn vec1<F>(buf: &[F], s: Slot) -> ArrayView1<'_, F> {
    ArrayView1::from(&buf[s.range()])
}

fn vec1_mut<F>(buf: &mut [F], s: Slot) -> ArrayViewMut1<'_, F> {
    ArrayViewMut1::from(&mut buf[s.range()])
}

/// Variable-length sequences packed row-wise. Attention never crosses a
/// sequence boundary, and each sequence contributes one output row.
#[derive(Debug, Clone, Default)]
pub struct SeqBatch {
    tokens: Vec<u32>,
    positions: Vec<usize>,
    segments: Vec<Range<usize>>,
    outputs: Vec<usize>,
    fusion: Vec<FusionPlan>,
}

impl SeqBatch {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a sequence whose representation is read at token `output`.
    /// `fusion` positions are relative to the sequence.
    pub fn push(&mut self, ids: &[u32], output: usize, fusion: Option<&FusionPlan>) -> Result<()> {
        if output >= ids.len() {
            return Err(Error::OutOfRange(format!(
                "output position {output} in a sequence of {} tokens",
                ids.len()
            )));
        }
        let start = self.tokens.len();
        self.tokens.extend_from_slice(ids);
        self.positions.extend(0..ids.len());
        self.segments.push(start..self.tokens.len());
        self.outputs.push(start + output);
        if let Some(plan) = fusion {
            if !plan.is_empty() {
                self.fusion.push(plan.shifted(start));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn num_tokens(&self) -> usize {
        self.tokens.len()
    }
}

struct LnCache<F> {
    xhat: Array2<F>,
    rstd: Array1<F>,
}

fn layer_norm<F: NdFloat>(x: ArrayView2<'_, F>, g: ArrayView1<'_, F>, b: ArrayView1<'_, F>) -> (Array2<F>, LnCache<F>) {
    let n = cast::<F>(x.ncols() as f64);
    let eps = cast::<F>(LN_EPS);
    let mut xhat = Array2::zeros(x.raw_dim());
    let mut rstd = Array1::zeros(x.nrows());
    for (i, row) in x.outer_iter().enumerate() {
        let mean = row.sum() / n;
        let var = row.fold(F::zero(), |acc, &v| acc + (v - mean) * (v - mean)) / n;
        let r = F::one() / (var + eps).sqrt();
        rstd[i] = r;
        xhat.row_mut(i).zip_mut_with(&row, |h, &v| *h = (v - mean) * r);
    }
    let y = &xhat * &g + b;
    (y, LnCache { xhat, rstd })
}

fn layer_norm_backward<F: NdFloat>(
    dy: ArrayView2<'_, F>,
    cache: &LnCache<F>,
    g: ArrayView1<'_, F>,
    mut dg: ArrayViewMut1<'_, F>,
    mut db: ArrayViewMut1<'_, F>,
) -> Array2<F> {
    dg += &(&dy * &cache.xhat).sum_axis(Axis(0));
    db += &dy.sum_axis(Axis(0));
    let n = cast::<F>(dy.ncols() as f64);
    let dxhat = &dy * &g;
    let mut dx = Array2::zeros(dy.raw_dim());
    for i in 0..dy.nrows() {
        let dh = dxhat.row(i);
        let xh = cache.xhat.row(i);
        let mean_dh = dh.sum() / n;
        let mean_dhx = dh.dot(&xh) / n;
        let r = cache.rstd[i];
        dx.row_mut(i)
            .indexed_iter_mut()
            .for_each(|(j, v)| *v = r * (dh[j] - mean_dh - xh[j] * mean_dhx));
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

fn gelu<F: NdFloat>(u: F) -> F {
    let c = cast::<F>(GELU_C);
    let k = cast::<F>(0.044715);
    let half = cast::<F>(0.5);
    half * u * (F::one() + (c * (u + k * u * u * u)).tanh())
}

fn gelu_grad<F: NdFloat>(u: F) -> F {
    let c = cast::<F>(GELU_C);
    let k = cast::<F>(0.044715);
    let half = cast::<F>(0.5);
    let t = (c * (u + k * u * u * u)).tanh();
    half * (F::one() + t) + half * u * (F::one() - t * t) * c * (F::one() + cast::<F>(3.0) * k * u * u)
}

fn softmax_rows<F: NdFloat>(m: &mut Array2<F>) {
    for mut row in m.outer_iter_mut() {
        let max = row.fold(F::neg_infinity(), |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

struct LayerTape<F> {
    ln1: LnCache<F>,
    a: Array2<F>,
    qkv: Array2<F>,
    /// Per segment, per head attention probabilities.
    probs: Vec<Vec<Array2<F>>>,
    o: Array2<F>,
    ln2: LnCache<F>,
    b: Array2<F>,
    u: Array2<F>,
    g: Array2<F>,
}

/// Activations kept by a training forward pass for the backward pass.
pub struct Tape<F> {
    layers: Vec<LayerTape<F>>,
    final_ln: LnCache<F>,
}

/// Pre-norm transformer encoder with a flat parameter vector. Generic over the
/// float type so gradients can be checked in `f64` against the same code that
/// trains in `f32`.
#[derive(Debug, Clone)]
pub struct Transformer<F> {
    config: BackboneConfig,
    layout: Layout,
    params: Vec<F>,
}

impl<F: NdFloat> Transformer<F> {
    pub fn new<R: Rng>(config: BackboneConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let normal = Normal::new(0.0, INIT_STD).expect("positive std");
        let mut params = vec![F::zero(); layout.total];
        for s in &layout.decayed {
            for p in &mut params[s.range()] {
                *p = cast(normal.sample(rng));
            }
        }
        for s in &layout.unit {
            params[s.range()].fill(F::one());
        }
        Ok(Transformer { config, layout, params })
    }

    pub fn from_params(config: BackboneConfig, params: Vec<F>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                layout.total,
                params.len()
            )));
        }
        Ok(Transformer { config, layout, params })
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.config
    }

    pub fn params(&self) -> &[F] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [F] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Parameter ranges that take weight decay.
    pub fn decayed_ranges(&self) -> Vec<Range<usize>> {
        self.layout.decayed.iter().map(|s| s.range()).collect()
    }

    pub fn sememe_range(&self) -> Option<Range<usize>> {
        self.layout.sememe.map(Slot::range)
    }

    pub fn sememe_table(&self) -> Option<ArrayView2<'_, F>> {
        self.layout.sememe.map(|s| mat(&self.params, s))
    }

    pub fn sememe_table_mut(&mut self) -> Option<ArrayViewMut2<'_, F>> {
        self.layout.sememe.map(|s| mat_mut(&mut self.params, s))
    }

    pub fn set_sememe_weight(&mut self, weight: f64) {
        self.config.sememe_weight = weight;
    }

    /// Same weights in another float type.
    pub fn convert<G: NdFloat>(&self) -> Transformer<G> {
        Transformer {
            config: self.config,
            layout: self.layout.clone(),
            params: self.params.iter().map(|&p| G::from(p).unwrap()).collect(),
        }
    }

    fn check(&self, batch: &SeqBatch) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::Empty("sequence batch"));
        }
        if let Some(seg) = batch.segments.iter().find(|s| s.len() > self.config.max_positions) {
            return Err(Error::OutOfRange(format!(
                "sequence of {} tokens exceeds {} positions",
                seg.len(),
                self.config.max_positions
            )));
        }
        if let Some(&t) = batch.tokens.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(Error::OutOfRange(format!("token id {t} outside vocabulary of {}", self.config.vocab_size)));
        }
        Ok(())
    }

    fn embed(&self, batch: &SeqBatch) -> Result<Array2<F>> {
        let tok = mat(&self.params, self.layout.tok);
        let pos = mat(&self.params, self.layout.pos);
        let mut x = Array2::zeros((batch.num_tokens(), self.config.hidden));
        for (t, mut row) in x.outer_iter_mut().enumerate() {
            row.assign(&tok.row(batch.tokens[t] as usize));
            row += &pos.row(batch.positions[t]);
        }
        if let Some(slot) = self.layout.sememe {
            let table = mat(&self.params, slot);
            let alpha = cast::<F>(self.config.sememe_weight);
            for plan in &batch.fusion {
                plan.apply(&mut x.view_mut(), table, alpha)?;
            }
        }
        Ok(x)
    }

    fn attend(&self, qkv: &Array2<F>, segments: &[Range<usize>], exec: Exec) -> (Array2<F>, Vec<Vec<Array2<F>>>) {
        let d = self.config.hidden;
        let heads = self.config.heads;
        let dh = d / heads;
        let scale = cast::<F>(1.0 / (dh as f64).sqrt());
        let per_segment = exec.map(segments, |seg| {
            let mut o = Array2::zeros((seg.len(), d));
            let mut probs = Vec::with_capacity(heads);
            for h in 0..heads {
                let q = qkv.slice(s![seg.clone(), h * dh..(h + 1) * dh]);
                let k = qkv.slice(s![seg.clone(), d + h * dh..d + (h + 1) * dh]);
                let v = qkv.slice(s![seg.clone(), 2 * d + h * dh..2 * d + (h + 1) * dh]);
                let mut p = q.dot(&k.t());
                p *= scale;
                softmax_rows(&mut p);
                o.slice_mut(s![.., h * dh..(h + 1) * dh]).assign(&p.dot(&v));
                probs.push(p);
            }
            (o, probs)
        });
        let mut out = Array2::zeros((qkv.nrows(), d));
        let mut all_probs = Vec::with_capacity(segments.len());
        for (seg, (o, probs)) in segments.iter().zip(per_segment) {
            out.slice_mut(s![seg.clone(), ..]).assign(&o);
            all_probs.push(probs);
        }
        (out, all_probs)
    }

    fn attend_backward(
        &self,
        qkv: &Array2<F>,
        probs: &[Vec<Array2<F>>],
        d_o: &Array2<F>,
        segments: &[Range<usize>],
        exec: Exec,
    ) -> Array2<F> {
        let d = self.config.hidden;
        let heads = self.config.heads;
        let dh = d / heads;
        let scale = cast::<F>(1.0 / (dh as f64).sqrt());
        let idx: Vec<usize> = (0..segments.len()).collect();
        let per_segment = exec.map(&idx, |&si| {
            let seg = segments[si].clone();
            let mut dqkv = Array2::zeros((seg.len(), 3 * d));
            for h in 0..heads {
                let p = &probs[si][h];
                let q = qkv.slice(s![seg.clone(), h * dh..(h + 1) * dh]);
                let k = qkv.slice(s![seg.clone(), d + h * dh..d + (h + 1) * dh]);
                let v = qkv.slice(s![seg.clone(), 2 * d + h * dh..2 * d + (h + 1) * dh]);
                let doh = d_o.slice(s![seg.clone(), h * dh..(h + 1) * dh]);
                let dp = doh.dot(&v.t());
                let dv = p.t().dot(&doh);
                let mut ds = &dp * p;
                let row_sums = ds.sum_axis(Axis(1));
                for (i, mut row) in ds.outer_iter_mut().enumerate() {
                    let rs = row_sums[i];
                    row.zip_mut_with(&p.row(i), |x, &pp| *x = (*x - pp * rs) * scale);
                }
                let dq = ds.dot(&k);
                let dk = ds.t().dot(&q);
                dqkv.slice_mut(s![.., h * dh..(h + 1) * dh]).assign(&dq);
                dqkv.slice_mut(s![.., d + h * dh..d + (h + 1) * dh]).assign(&dk);
                dqkv.slice_mut(s![.., 2 * d + h * dh..2 * d + (h + 1) * dh]).assign(&dv);
            }
            dqkv
        });
        let mut out = Array2::zeros((qkv.nrows(), 3 * d));
        for (seg, block) in segments.iter().zip(per_segment) {
            out.slice_mut(s![seg.clone(), ..]).assign(&block);
        }
        out
    }

    fn run(&self, batch: &SeqBatch, exec: Exec, keep: bool) -> Result<(Array2<F>, Option<Tape<F>>)> {
        self.check(batch)?;
        let p = &self.params;
        let mut x = self.embed(batch)?;
        let mut tapes = Vec::new();
        for ls in &self.layout.layers {
            let (a, ln1) = layer_norm(x.view(), vec1(p, ls.ln1_g), vec1(p, ls.ln1_b));
            let mut qkv = a.dot(&mat(p, ls.qkv_w));
            qkv += &vec1(p, ls.qkv_b);
            let (o, probs) = self.attend(&qkv, &batch.segments, exec);
            let mut h = o.dot(&mat(p, ls.o_w));
            h += &vec1(p, ls.o_b);
            h += &x;
            let (b, ln2) = layer_norm(h.view(), vec1(p, ls.ln2_g), vec1(p, ls.ln2_b));
            let mut u = b.dot(&mat(p, ls.ff1_w));
            u += &vec1(p, ls.ff1_b);
            let g = u.mapv(gelu);
            let mut z = g.dot(&mat(p, ls.ff2_w));
            z += &vec1(p, ls.ff2_b);
            z += &h;
            x = z;
            if keep {
                tapes.push(LayerTape {
                    ln1,
                    a,
                    qkv,
                    probs,
                    o,
                    ln2,
                    b,
                    u,
                    g,
                });
            }
        }
        let picked = x.select(Axis(0), &batch.outputs);
        let (out, final_ln) = layer_norm(picked.view(), vec1(p, self.layout.lnf_g), vec1(p, self.layout.lnf_b));
        let tape = keep.then_some(Tape { layers: tapes, final_ln });
        Ok((out, tape))
    }

    /// One output row per sequence.
    pub fn forward(&self, batch: &SeqBatch, exec: Exec) -> Result<Array2<F>> {
        Ok(self.run(batch, exec, false)?.0)
    }

    pub fn forward_train(&self, batch: &SeqBatch, exec: Exec) -> Result<(Array2<F>, Tape<F>)> {
        let (out, tape) = self.run(batch, exec, true)?;
        Ok((out, tape.expect("tape kept")))
    }

    /// Accumulates into `grads` the gradient of a loss whose gradient with
    /// respect to the outputs of `forward_train` is `d_out`.
    pub fn backward(&self, batch: &SeqBatch, tape: Tape<F>, d_out: ArrayView2<'_, F>, grads: &mut [F], exec: Exec) -> Result<()> {
        if grads.len() != self.params.len() || d_out.dim() != (batch.len(), self.config.hidden) {
            return Err(Error::Shape("gradient buffer or output gradient has the wrong shape".into()));
        }
        let p = &self.params;
        let l = &self.layout;
        let d_sel = {
            let (dg, db) = split_two(grads, l.lnf_g, l.lnf_b);
            layer_norm_backward(d_out, &tape.final_ln, vec1(p, l.lnf_g), dg, db)
        };
        let mut dx = Array2::<F>::zeros((batch.num_tokens(), self.config.hidden));
        for (k, &r) in batch.outputs.iter().enumerate() {
            let mut row = dx.row_mut(r);
            row += &d_sel.row(k);
        }
        for (ls, t) in l.layers.iter().zip(tape.layers).rev() {
            // z = h + ff2(gelu(ff1(ln2(h))))
            let dz = &dx;
            general_mat_mul(F::one(), &t.g.t(), dz, F::one(), &mut mat_mut(grads, ls.ff2_w));
            vec1_mut(grads, ls.ff2_b).scaled_add(F::one(), &dz.sum_axis(Axis(0)));
            let mut du = dz.dot(&mat(p, ls.ff2_w).t());
            du.zip_mut_with(&t.u, |d, &u| *d *= gelu_grad(u));
            general_mat_mul(F::one(), &t.b.t(), &du, F::one(), &mut mat_mut(grads, ls.ff1_w));
            vec1_mut(grads, ls.ff1_b).scaled_add(F::one(), &du.sum_axis(Axis(0)));
            let db = du.dot(&mat(p, ls.ff1_w).t());
            let dh_ln = {
                let (gg, gb) = split_two(grads, ls.ln2_g, ls.ln2_b);
                layer_norm_backward(db.view(), &t.ln2, vec1(p, ls.ln2_g), gg, gb)
            };
            let mut dh = dx;
            dh += &dh_ln;
            // h = x + o_proj(attn(qkv(ln1(x))))
            general_mat_mul(F::one(), &t.o.t(), &dh, F::one(), &mut mat_mut(grads, ls.o_w));
            vec1_mut(grads, ls.o_b).scaled_add(F::one(), &dh.sum_axis(Axis(0)));
            let d_o = dh.dot(&mat(p, ls.o_w).t());
            let dqkv = self.attend_backward(&t.qkv, &t.probs, &d_o, &batch.segments, exec);
            general_mat_mul(F::one(), &t.a.t(), &dqkv, F::one(), &mut mat_mut(grads, ls.qkv_w));
            vec1_mut(grads, ls.qkv_b).scaled_add(F::one(), &dqkv.sum_axis(Axis(0)));
            let da = dqkv.dot(&mat(p, ls.qkv_w).t());
            let dx_ln = {
                let (gg, gb) = split_two(grads, ls.ln1_g, ls.ln1_b);
                layer_norm_backward(da.view(), &t.ln1, vec1(p, ls.ln1_g), gg, gb)
            };
            dh += &dx_ln;
            dx = dh;
        }
        {
            let mut dtok = mat_mut(grads, l.tok);
            for (t, row) in dx.outer_iter().enumerate() {
                let mut r = dtok.row_mut(batch.tokens[t] as usize);
                r += &row;
            }
        }
        {
            let mut dpos = mat_mut(grads, l.pos);
            for (t, row) in dx.outer_iter().enumerate() {
                let mut r = dpos.row_mut(batch.positions[t]);
                r += &row;
            }
        }
        if let Some(slot) = l.sememe {
            let alpha = cast::<F>(self.config.sememe_weight);
            let mut dtable = mat_mut(grads, slot);
            for plan in &batch.fusion {
                plan.backward(dx.view(), alpha, &mut dtable);
            }
        }
        Ok(())
    }
}

/// Two disjoint vector slots of the same buffer, `a` placed before `b`.
fn split_two<F>(buf: &mut [F], a: Slot, b: Slot) -> (ArrayViewMut1<'_, F>, ArrayViewMut1<'_, F>) {
    debug_assert!(a.range().end <= b.offset);
    let (lo, hi) = buf.split_at_mut(b.offset);
    (
        ArrayViewMut1::from(&mut lo[a.range()]),
        ArrayViewMut1::from(&mut hi[..b.rows * b.cols]),
    )
}
