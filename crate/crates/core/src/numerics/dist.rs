//! Diagonal Gaussians and categorical distributions, with tape helpers for
//! reparameterised and straight-through sampling.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use super::NumericsError;

/// Added to the softplus output so the standard deviation never collapses.
pub const MIN_STDDEV: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalGaussian {
    mean: Vec<f64>,
    stddev: Vec<f64>,
}

impl DiagonalGaussian {
    pub fn new(mean: Vec<f64>, stddev: Vec<f64>) -> Result<Self, NumericsError> {
        if mean.len() != stddev.len() {
            return Err(NumericsError::Shape { expected: mean.len(), got: stddev.len(), what: "stddev length" });
        }
        if let Some(s) = stddev.iter().find(|s| !(**s > 0.0)) {
            return Err(NumericsError::Contract(format!("stddev must be strictly positive, got {s}")));
        }
        if mean.iter().chain(&stddev).any(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite("gaussian parameters"));
        }
        Ok(Self { mean, stddev })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn stddev(&self) -> &[f64] {
        &self.stddev
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.stddev)
            .map(|(m, s)| {
                let e: f64 = StandardNormal.sample(rng);
                m + s * e
            })
            .collect()
    }
}

/// `KL[posterior || prior]` summed over dimensions.
pub fn kl_gaussian(posterior: &DiagonalGaussian, prior: &DiagonalGaussian) -> Result<f64, NumericsError> {
    if posterior.dim() != prior.dim() {
        return Err(NumericsError::Shape { expected: posterior.dim(), got: prior.dim(), what: "gaussian dimension" });
    }
    let kl = (0..posterior.dim())
        .map(|i| {
            let (mq, sq) = (posterior.mean[i], posterior.stddev[i]);
            let (mp, sp) = (prior.mean[i], prior.stddev[i]);
            (sp / sq).ln() + (sq * sq + (mq - mp).powi(2)) / (2.0 * sp * sp) - 0.5
        })
        .sum::<f64>();
    Ok(kl.max(0.0))
}

/// Splits a `rows x 2d` head output into mean and floored stddev.
pub fn gaussian_head(tape: &mut Tape<'_>, raw: Var, dim: usize) -> (Var, Var) {
    let mean = tape.slice(raw, 0, dim);
    let pre = tape.slice(raw, dim, dim);
    let sp = tape.softplus(pre);
    let std = tape.offset(sp, MIN_STDDEV);
    (mean, std)
}

/// Per-row KL between diagonal Gaussians given as tape nodes; `rows x 1`.
pub fn kl_tape(tape: &mut Tape<'_>, mean_q: Var, std_q: Var, mean_p: Var, std_p: Var) -> Var {
    let ratio = tape.div(std_p, std_q);
    let log_ratio = tape.ln(ratio);
    let vq = tape.square(std_q);
    let dm = tape.sub(mean_q, mean_p);
    let dm2 = tape.square(dm);
    let num = tape.add(vq, dm2);
    let vp = tape.square(std_p);
    let den = tape.scale(vp, 2.0);
    let frac = tape.div(num, den);
    let terms = tape.add(log_ratio, frac);
    let terms = tape.offset(terms, -0.5);
    tape.row_sum(terms)
}

/// Reparameterised sample `mean + std * eps` with fresh standard-normal noise.
pub fn reparam_sample(tape: &mut Tape<'_>, mean: Var, std: Var, rng: &mut impl Rng) -> Var {
    let (r, c) = tape.shape(mean);
    let eps = Tensor::from_vec(r, c, (0..r * c).map(|_| StandardNormal.sample(rng)).collect());
    let eps = tape.constant(eps);
    let noise = tape.mul(std, eps);
    tape.add(mean, noise)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalLogits {
    logits: Vec<f64>,
}

impl CategoricalLogits {
    pub fn new(logits: Vec<f64>) -> Result<Self, NumericsError> {
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite("logits"));
        }
        if logits.is_empty() {
            return Err(NumericsError::Contract("categorical needs at least one class".into()));
        }
        Ok(Self { logits })
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn probs(&self) -> Vec<f64> {
        softmax(&self.logits)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        sample_index(&self.probs(), rng)
    }

    pub fn mode(&self) -> usize {
        argmax(&self.logits)
    }

    pub fn entropy(&self) -> f64 {
        entropy(&self.probs())
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// First index of the maximum; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Inverse-CDF draw from normalised probabilities.
pub fn sample_index(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u past the final partial sum; fall back to the last
    // class with nonzero mass
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

pub fn one_hot(index: usize, classes: usize) -> Vec<f64> {
    let mut v = vec![0.0; classes];
    v[index] = 1.0;
    v
}

/// A categorical draw whose forward value is one-hot and whose gradient
/// follows the softmax probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct StSample {
    pub index: usize,
    pub one_hot: Vec<f64>,
    pub probs: Vec<f64>,
}

pub fn straight_through_sample(logits: &CategoricalLogits, temperature: f64, rng: &mut impl Rng) -> Result<StSample, NumericsError> {
    if logits.logits.len() < 2 {
        return Err(NumericsError::Contract("straight-through sampling needs at least two classes".into()));
    }
    if !(temperature > 0.0) {
        return Err(NumericsError::Contract(format!("temperature must be positive, got {temperature}")));
    }
    let scaled: Vec<f64> = logits.logits.iter().map(|l| l / temperature).collect();
    let probs = softmax(&scaled);
    let index = sample_index(&probs, rng);
    Ok(StSample { index, one_hot: one_hot(index, probs.len()), probs })
}

/// Straight-through sampling of `rows x (groups * classes)` logits on a tape.
/// Returns the one-hot node (gradient flows through the probabilities) and
/// the sampled class per row and group.
pub fn straight_through_tape(tape: &mut Tape<'_>, logits: Var, classes: usize, temperature: f64, rng: &mut impl Rng) -> (Var, Vec<Vec<usize>>) {
    let scaled = tape.scale(logits, 1.0 / temperature);
    let logp = tape.log_softmax(scaled, classes);
    let probs = tape.exp(logp);
    let pv = tape.to_tensor(probs);
    let (rows, cols) = pv.shape();
    let mut hot = Tensor::zeros(rows, cols);
    let mut picks = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = pv.row(r);
        let mut groups = Vec::with_capacity(cols / classes);
        for (g, chunk) in row.chunks(classes).enumerate() {
            let i = sample_index(chunk, rng);
            hot.set(r, g * classes + i, 1.0);
            groups.push(i);
        }
        picks.push(groups);
    }
    (tape.straight_through(probs, hot), picks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn g(m: &[f64], s: &[f64]) -> DiagonalGaussian {
        DiagonalGaussian::new(m.to_vec(), s.to_vec()).unwrap()
    }

    #[test]
    fn kl_closed_form_cases() {
        assert_eq!(kl_gaussian(&g(&[0.3, -1.0], &[0.5, 2.0]), &g(&[0.3, -1.0], &[0.5, 2.0])).unwrap(), 0.0);
        assert!((kl_gaussian(&g(&[1.0], &[1.0]), &g(&[0.0], &[1.0])).unwrap() - 0.5).abs() < 1e-12);
        let expected = 0.5 * (4.0 - 1.0 - 4f64.ln());
        assert!((kl_gaussian(&g(&[0.0], &[2.0]), &g(&[0.0], &[1.0])).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.8069).abs() < 1e-4);
    }

    #[test]
    fn kl_rejects_bad_inputs() {
        assert!(DiagonalGaussian::new(vec![0.0], vec![0.0]).is_err());
        assert!(DiagonalGaussian::new(vec![0.0], vec![-1.0]).is_err());
        assert!(kl_gaussian(&g(&[0.0], &[1.0]), &g(&[0.0, 0.0], &[1.0, 1.0])).is_err());
    }

    #[test]
    fn kl_tape_matches_closed_form() {
        let mut tape = Tape::new();
        let mq = tape.constant(Tensor::from_vec(1, 2, vec![1.0, 0.0]));
        let sq = tape.constant(Tensor::from_vec(1, 2, vec![1.0, 2.0]));
        let mp = tape.constant(Tensor::from_vec(1, 2, vec![0.0, 0.0]));
        let sp = tape.constant(Tensor::from_vec(1, 2, vec![1.0, 1.0]));
        let kl = kl_tape(&mut tape, mq, sq, mp, sp);
        let expected = 0.5 + 0.5 * (4.0 - 1.0 - 4f64.ln());
        assert!((tape.scalar(kl) - expected).abs() < 1e-12);
    }

    #[test]
    fn saturated_logits_pick_dominant_class() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let l = CategoricalLogits::new(vec![20.0, -20.0]).unwrap();
        for _ in 0..1000 {
            let s = straight_through_sample(&l, 1.0, &mut rng).unwrap();
            assert_eq!(s.one_hot, vec![1.0, 0.0]);
        }
        assert!(l.probs()[0] >= 1.0 - 1e-8);
    }

    #[test]
    fn uniform_logits_sample_uniformly() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let l = CategoricalLogits::new(vec![0.0; 4]).unwrap();
        let mut counts = [0usize; 4];
        let n = 100_000;
        for _ in 0..n {
            counts[straight_through_sample(&l, 1.0, &mut rng).unwrap().index] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 0.01);
        }
    }

    #[test]
    fn straight_through_gradient_is_nonzero() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let mut tape = Tape::new();
            let logits = tape.variable(Tensor::from_vec(1, 3, vec![0.2, -0.4, 1.0]));
            let (hot, picks) = straight_through_tape(&mut tape, logits, 3, 1.0, &mut rng);
            let hv = tape.to_tensor(hot);
            assert_eq!(hv.sum(), 1.0);
            assert_eq!(hv.get(0, picks[0][0]), 1.0);
            let w = tape.constant(Tensor::from_vec(1, 3, vec![1.0, 2.0, 3.0]));
            let dot = tape.mul(hot, w);
            let loss = tape.sum(dot);
            let grads = tape.backward(loss);
            let gl = grads.wrt(logits).unwrap();
            assert!(gl.data().iter().any(|v| v.abs() > 1e-6));
        }
    }

    #[test]
    fn sample_index_never_returns_zero_mass_class() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            assert_eq!(sample_index(&[0.0, 1.0, 0.0], &mut rng), 1);
        }
    }
}
