use std::ops::Range;

use ndarray::NdFloat;

/// Adam with decoupled weight decay over a flat parameter vector. Moments are
/// kept in `f64` whatever the parameter type.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    decay: Vec<bool>,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamW {
    /// `decayed` lists the parameter ranges that take weight decay.
    pub fn new(num_params: usize, decayed: &[Range<usize>], weight_decay: f64) -> Self {
        let mut decay = vec![false; num_params];
        for r in decayed {
            decay[r.clone()].fill(true);
        }
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            decay,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update. Entries where `frozen` is true are left untouched, moments
    /// included.
    pub fn step<F: NdFloat>(&mut self, params: &mut [F], grads: &[F], lr: f64, frozen: Option<&[Range<usize>]>) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let is_frozen = |i: usize| frozen.is_some_and(|f| f.iter().any(|r| r.contains(&i)));
        for i in 0..params.len() {
            if is_frozen(i) {
                continue;
            }
            let g = grads[i].to_f64().unwrap();
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            let mut p = params[i].to_f64().unwrap();
            if self.decay[i] {
                p -= lr * self.weight_decay * p;
            }
            p -= lr * mhat / (vhat.sqrt() + self.eps);
            params[i] = F::from(p).unwrap();
        }
    }
}

/// Scales `grads` down so their global L2 norm is at most `max_norm`. Returns
/// the norm before clipping.
pub fn clip_grad_norm<F: NdFloat>(grads: &mut [F], max_norm: f64) -> f64 {
    clip_grad_norms(&mut [grads], max_norm)
}

/// [`clip_grad_norm`] with one norm taken jointly over several buffers.
pub fn clip_grad_norms<F: NdFloat>(bufs: &mut [&mut [F]], max_norm: f64) -> f64 {
    let norm = bufs
        .iter()
        .flat_map(|b| b.iter())
        .map(|g| {
            let g = g.to_f64().unwrap();
            g * g
        })
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm.is_finite() {
        let s = F::from(max_norm / norm).unwrap();
        for b in bufs.iter_mut() {
            b.iter_mut().for_each(|g| *g *= s);
        }
    }
    norm
}

/// Linear warm-up then linear decay to zero.
#[derive(Debug, Clone, Copy)]
pub struct LinearSchedule {
    pub peak: f64,
    pub warmup: usize,
    pub total: usize,
}

impl LinearSchedule {
    pub fn lr(&self, step: usize) -> f64 {
        if self.total == 0 {
            return self.peak;
        }
        if step < self.warmup {
            return self.peak * (step + 1) as f64 / self.warmup as f64;
        }
        let left = self.total.saturating_sub(step) as f64;
        let span = (self.total - self.warmup.min(self.total)).max(1) as f64;
        self.peak * (left / span).clamp(0.0, 1.0)
    }
}
