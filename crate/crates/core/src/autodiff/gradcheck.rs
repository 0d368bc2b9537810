use super::{AutodiffError, ParamStore, Tape, Tensor, Var};

fn check_eps(eps: f64) -> Result<(), AutodiffError> {
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(AutodiffError::Contract(format!("eps {eps} outside [1e-7, 1e-3]")));
    }
    Ok(())
}

fn rel_err(ad: f64, fd: f64) -> f64 {
    (ad - fd).abs() / 1f64.max(ad.abs()).max(fd.abs())
}

fn scalar_of(tape: &Tape, v: Var) -> Result<f64, AutodiffError> {
    let t = tape.value(v);
    if t.len() != 1 {
        return Err(AutodiffError::Contract(format!("function must be scalar, got {:?}", t.shape())));
    }
    Ok(t.item())
}

/// Compares the tape gradient of `f` at `x` with central differences.
/// Returns the largest `|g_ad − g_fd| / max(1, |g_ad|, |g_fd|)`.
pub fn check_gradient<F>(x: &Tensor, eps: f64, f: F) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, AutodiffError>,
{
    check_gradient_with(&ParamStore::new(), x, eps, f)
}

/// [`check_gradient`] with parameters available to `f` (held fixed).
pub fn check_gradient_with<F>(store: &ParamStore, x: &Tensor, eps: f64, f: F) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, AutodiffError>,
{
    check_eps(eps)?;
    let eval = |x: Tensor| -> Result<f64, AutodiffError> {
        let mut tape = Tape::new(store);
        let xv = tape.input(x);
        let out = f(&mut tape, xv)?;
        scalar_of(&tape, out)
    };
    let mut tape = Tape::new(store);
    let xv = tape.input(x.clone());
    let out = f(&mut tape, xv)?;
    scalar_of(&tape, out)?;
    let grads = tape.backward(out)?;
    let ad = grads.input(xv).cloned().unwrap_or_else(|| Tensor::zeros(x.shape()));
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += eps;
        let mut minus = x.clone();
        minus.data_mut()[i] -= eps;
        let fd = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        worst = worst.max(rel_err(ad.data()[i], fd));
    }
    Ok(worst)
}

/// Gradient check over every coordinate of every parameter in `store`.
pub fn check_param_gradients<F>(store: &mut ParamStore, eps: f64, f: F) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Tape) -> Result<Var, AutodiffError>,
{
    check_eps(eps)?;
    let grads = {
        let mut tape = Tape::new(store);
        let out = f(&mut tape)?;
        scalar_of(&tape, out)?;
        tape.backward(out)?
    };
    let eval = |store: &ParamStore| -> Result<f64, AutodiffError> {
        let mut tape = Tape::new(store);
        let out = f(&mut tape)?;
        scalar_of(&tape, out)
    };
    let mut worst: f64 = 0.0;
    for id in store.ids().collect::<Vec<_>>() {
        let ad = grads.get_or_zeros(id, store);
        for i in 0..ad.len() {
            let orig = store.get(id).data()[i];
            store.get_mut(id).data_mut()[i] = orig + eps;
            let fp = eval(store)?;
            store.get_mut(id).data_mut()[i] = orig - eps;
            let fm = eval(store)?;
            store.get_mut(id).data_mut()[i] = orig;
            worst = worst.max(rel_err(ad.data()[i], (fp - fm) / (2.0 * eps)));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::params::uniform;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_t(r: usize, c: usize, seed: u64) -> Tensor {
        uniform(&[r, c], 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn sigmoid_sum() {
        let e = check_gradient(&rand_t(3, 4, 1), 1e-5, |t, x| {
            let s = t.sigmoid(x);
            Ok(t.sum(s))
        })
        .unwrap();
        assert!(e < 1e-6, "{e}");
    }

    #[test]
    fn linear_is_exact() {
        let w = rand_t(4, 2, 2);
        let e = check_gradient(&rand_t(1, 4, 3), 1e-5, |t, x| {
            let wv = t.constant(w.clone());
            let y = t.matmul(x, wv)?;
            Ok(t.sum(y))
        })
        .unwrap();
        assert!(e < 1e-9, "{e}");
    }

    #[test]
    fn rejects_bad_eps_and_non_scalar() {
        let x = rand_t(2, 2, 0);
        assert!(check_gradient(&x, 1e-2, |t, x| Ok(t.sum(x))).is_err());
        assert!(check_gradient(&x, 1e-5, |t, x| Ok(t.tanh(x))).is_err());
    }

    /// Every primitive, each behind a random projection so all output
    /// coordinates matter.
    #[test]
    fn every_primitive() {
        type Build = fn(&mut Tape, Var) -> Result<Var, AutodiffError>;
        let cases: Vec<(&str, Build)> = vec![
            ("matmul", |t, x| {
                let w = t.constant(rand_t(4, 3, 10));
                t.matmul(x, w)
            }),
            ("matmul-right", |t, x| {
                let a = t.constant(rand_t(2, 3, 11));
                let xt = t.slice_cols(x, 0..4)?;
                let xs = t.gather(&[xt], vec![Some((0, 0)), Some((0, 1)), Some((0, 2))])?;
                t.matmul(a, xs)
            }),
            ("add", |t, x| {
                let s = t.sigmoid(x);
                t.add(x, s)
            }),
            ("sub", |t, x| {
                let s = t.tanh(x);
                t.sub(s, x)
            }),
            ("add_row", |t, x| {
                let b = t.slice_cols(x, 0..4)?;
                let b = t.rows(b, &[1])?;
                t.add_row(x, b)
            }),
            ("mul", |t, x| {
                let s = t.sigmoid(x);
                t.mul(x, s)
            }),
            ("mul_const", |t, x| t.mul_const(x, rand_t(3, 4, 12))),
            ("scale", |t, x| Ok(t.scale(x, -1.7))),
            ("sigmoid", |t, x| Ok(t.sigmoid(x))),
            ("tanh", |t, x| Ok(t.tanh(x))),
            ("softmax", |t, x| Ok(t.softmax(x))),
            ("log_softmax", |t, x| Ok(t.log_softmax(x))),
            ("concat", |t, x| {
                let s = t.tanh(x);
                let a = t.slice_cols(x, 1..3)?;
                t.concat_cols(&[s, a, x])
            }),
            ("gather", |t, x| {
                let s = t.sigmoid(x);
                t.gather(&[x, s], vec![Some((1, 2)), None, Some((0, 0)), Some((0, 0)), Some((1, 1))])
            }),
            ("segment_max", |t, x| t.segment_max(x, &[2, 1])),
            ("nll", |t, x| {
                let l = t.log_softmax(x);
                t.nll(l, &[3, 0, 2], 0.5)
            }),
        ];
        for (name, build) in cases {
            let e = check_gradient(&rand_t(3, 4, 99), 1e-5, |t, x| {
                let y = build(t, x)?;
                let (r, c) = (t.value(y).rows(), t.value(y).cols());
                let p = t.constant(rand_t(r, c, 7));
                let z = t.mul(y, p)?;
                Ok(t.sum(z))
            })
            .unwrap();
            assert!(e < 1e-7, "{name}: {e}");
        }
    }

    #[test]
    fn param_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut s = ParamStore::new();
        let w = s.add_weight("w", 3, 2, &mut rng);
        let b = s.add("b", uniform(&[1, 2], 0.5, &mut rng));
        let x = rand_t(4, 3, 5);
        let e = check_param_gradients(&mut s, 1e-5, |t| {
            let xv = t.constant(x.clone());
            let wv = t.param(w);
            let bv = t.param(b);
            let y = t.matmul(xv, wv)?;
            let y = t.add_row(y, bv)?;
            let y = t.log_softmax(y);
            t.nll(y, &[0, 1, 1, 0], 0.25)
        })
        .unwrap();
        assert!(e < 1e-8, "{e}");
    }
}
