//! Differentiable-function substrate: flat parameter storage, a batched
//! reverse-mode tape, dense networks, an adaptive-moment optimizer and
//! distribution utilities.

pub mod adam;
pub mod checkpoint;
pub mod dist;
pub mod mlp;
pub mod params;
pub mod tape;
pub mod tensor;

pub use adam::{adam_step, Adam, AdamConfig, AdamReport, AdamState};
pub use dist::{kl_gaussian, straight_through_sample, CategoricalLogits, DiagonalGaussian, StSample};
pub use mlp::{mlp_forward, Activation, Mlp};
pub use params::{ParamId, ParamShape, ParamVector};
pub use tape::{Gradients, SetId, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize, what: &'static str },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint manifest: {0}")]
    Manifest(String),
}

/// Loss value and gradient of a scalar function of `params` built on a tape.
pub fn grad<F>(params: &ParamVector, loss_fn: F) -> Result<(f64, Vec<f64>), NumericsError>
where
    F: FnOnce(&mut Tape<'_>, SetId) -> Var,
{
    let mut tape = Tape::new();
    let set = tape.bind(params);
    let loss = loss_fn(&mut tape, set);
    let value = tape.scalar(loss);
    if !value.is_finite() {
        return Err(NumericsError::NonFinite("loss"));
    }
    let grads = tape.backward(loss);
    Ok((value, grads.into_params(set)))
}

/// Cosine similarity; zero if either vector has zero norm.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn grad_of_sum_is_ones_and_of_half_square_is_identity() {
        let mut p = ParamVector::new();
        let id = p.add_constant("x", &[4], 0.0);
        p.slice_mut(id).copy_from_slice(&[1.0, -2.0, 0.5, 3.0]);
        let (_, g) = grad(&p, |t, s| {
            let x = t.param(s, id);
            t.sum(x)
        })
        .unwrap();
        assert_eq!(g, vec![1.0; 4]);
        let (v, g) = grad(&p, |t, s| {
            let x = t.param(s, id);
            let sq = t.square(x);
            let sum = t.sum(sq);
            t.scale(sum, 0.5)
        })
        .unwrap();
        assert_eq!(g, p.values());
        assert!((v - 0.5 * (1.0 + 4.0 + 0.25 + 9.0)).abs() < 1e-12);
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let mut p = ParamVector::new();
        let id = p.add_constant("x", &[1], -1.0);
        let r = grad(&p, |t, s| {
            let x = t.param(s, id);
            let l = t.ln(x);
            t.sum(l)
        });
        assert!(matches!(r, Err(NumericsError::NonFinite(_))));
    }

    #[test]
    fn two_layer_mse_gradient_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let mut p = ParamVector::new();
        let net = Mlp::new(&mut p, "n", &[4, 8, 3], Activation::Elu, Activation::Identity, 1.0, &mut rng);
        let x = Tensor::from_vec(5, 4, (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let y = Tensor::from_vec(5, 3, (0..15).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let loss = |params: &ParamVector| {
            grad(params, |t, s| {
                let xi = t.constant(x.clone());
                let yi = t.constant(y.clone());
                let out = net.forward_tape(t, s, xi);
                let d = t.sub(out, yi);
                let sq = t.square(d);
                t.mean(sq)
            })
            .unwrap()
        };
        let (_, analytic) = loss(&p);
        let mut ok = 0;
        let h = 1e-4;
        for (i, &a) in analytic.iter().enumerate() {
            let orig = p.values()[i];
            p.values_mut()[i] = orig + h;
            let up = loss(&p).0;
            p.values_mut()[i] = orig - h;
            let down = loss(&p).0;
            p.values_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            if rel < 1e-3 || (a - numeric).abs() < 1e-9 {
                ok += 1;
            }
        }
        assert!(ok as f64 >= 0.95 * p.len() as f64, "{ok}/{}", p.len());
    }

    #[test]
    fn cosine_cases() {
        assert!((cosine_similarity(&[1.0, 2.0], &[1.0, 2.0]) - 1.0).abs() < 1e-12);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 3.0]), 0.0);
        assert!((cosine_similarity(&[1.0, -2.0], &[-1.0, 2.0]) + 1.0).abs() < 1e-12);
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[1.0, 1.0]), 0.0);
    }
}
