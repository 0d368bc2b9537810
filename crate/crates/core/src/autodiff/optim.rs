use rand::Rng;

use super::{AutodiffError, Gradients, ParamStore, Tensor};

/// Adam with bias correction. Parameters created as embeddings are updated
/// lazily: only rows that received gradient in a step move.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(lr: f64) -> Adam {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, i: usize) -> Option<&Tensor> {
        self.m.get(i)
    }

    /// Applies one update. Parameters without a gradient are left alone.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients) -> Result<(), AutodiffError> {
        if self.m.len() < params.len() {
            for id in params.ids().skip(self.m.len()) {
                self.m.push(Tensor::zeros(params.get(id).shape()));
                self.v.push(Tensor::zeros(params.get(id).shape()));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (id, g) in grads.iter() {
            if g.shape() != params.get(id).shape() {
                return Err(AutodiffError::Shape {
                    op: "adam",
                    detail: format!("`{}` is {:?}, gradient {:?}", params.name(id), params.get(id).shape(), g.shape()),
                });
            }
            let cols = g.cols();
            let all: Vec<usize>;
            let rows: &[usize] = match grads.touched_rows(id) {
                Some(r) if params.is_sparse(id) => r,
                _ => {
                    all = (0..g.rows()).collect();
                    &all
                }
            };
            let m = self.m[id.0].data_mut();
            let v = self.v[id.0].data_mut();
            let p = params.get_mut(id).data_mut();
            let gd = g.data();
            for &r in rows {
                for j in r * cols..(r + 1) * cols {
                    m[j] = b1 * m[j] + (1.0 - b1) * gd[j];
                    v[j] = b2 * v[j] + (1.0 - b2) * gd[j] * gd[j];
                    let mh = m[j] / c1;
                    let vh = v[j] / c2;
                    p[j] -= lr * mh / (vh.sqrt() + eps);
                }
            }
        }
        Ok(())
    }
}

/// Inverted-dropout mask: entries are 0 with probability `rate`, otherwise
/// `1/(1−rate)`. Outside training the mask is all ones.
pub fn dropout_mask<R: Rng + ?Sized>(
    shape: &[usize],
    rate: f64,
    rng: &mut R,
    training: bool,
) -> Result<Tensor, AutodiffError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(AutodiffError::Contract(format!("dropout rate {rate} outside [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok(Tensor::filled(shape, 1.0));
    }
    let keep = 1.0 / (1.0 - rate);
    let n = shape.iter().product();
    let data = (0..n).map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep }).collect();
    Tensor::new(shape.to_vec(), data)
}
