//! Small numeric helpers shared by the samplers.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

pub use statrs::function::gamma::ln_gamma;

/// `ln(exp(a) + exp(b))` without overflow; `-inf` is the additive identity.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    if a > b {
        a + (b - a).exp().ln_1p()
    } else {
        b + (a - b).exp().ln_1p()
    }
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Draws an index with probability proportional to `exp(log_weights[i])`.
///
/// Returns `None` when every weight is zero.
pub fn sample_log_weights<R: Rng + ?Sized>(rng: &mut R, log_weights: &[f64]) -> Option<usize> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return None;
    }
    let total: f64 = log_weights.iter().map(|w| (w - max).exp()).sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = None;
    for (i, w) in log_weights.iter().enumerate() {
        let p = (w - max).exp();
        if p > 0.0 {
            last = Some(i);
            if u < p {
                return Some(i);
            }
            u -= p;
        }
    }
    last
}

/// Log of the multivariate Beta function `prod Γ(a_i) / Γ(sum a_i)`.
pub fn ln_multi_beta(args: &[f64]) -> f64 {
    let sum: f64 = args.iter().sum();
    args.iter().map(|&a| ln_gamma(a)).sum::<f64>() - ln_gamma(sum)
}

/// Log density of a Dirichlet distribution with parameter `alpha` at `x`.
pub fn ln_dirichlet_pdf(x: &[f64], alpha: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), alpha.len());
    let mut out = -ln_multi_beta(alpha);
    for (&xi, &ai) in x.iter().zip(alpha) {
        out += (ai - 1.0) * xi.ln();
    }
    out
}

/// Dirichlet draw built from independent unit-scale Gamma variates.
///
/// Components that underflow are floored at the smallest positive normal
/// value so the result stays inside the open simplex.
pub fn sample_dirichlet<R: Rng + ?Sized>(rng: &mut R, alpha: &[f64]) -> Vec<f64> {
    let mut draws: Vec<f64> = alpha
        .iter()
        .map(|&a| {
            let g = Gamma::new(a, 1.0).expect("dirichlet parameter must be positive");
            g.sample(rng).max(f64::MIN_POSITIVE)
        })
        .collect();
    let total: f64 = draws.iter().sum();
    for d in &mut draws {
        *d = (*d / total).max(f64::MIN_POSITIVE);
    }
    draws
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(sigmoid(x))` evaluated stably for large `|x|`.
pub fn ln_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn log_sum_exp_handles_empty_mass() {
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
        let v = log_sum_exp(&[0.5f64.ln(), 0.25f64.ln()]);
        assert!((v - 0.75f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn sampling_skips_zero_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let i = sample_log_weights(&mut rng, &[f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY]);
            assert_eq!(i, Some(1));
        }
        assert_eq!(sample_log_weights(&mut rng, &[f64::NEG_INFINITY]), None);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.2, 0.7, 0.1]), Some(1));
        assert_eq!(argmax(&[0.25; 4]), Some(0));
    }

    #[test]
    fn log_sigmoid_is_stable() {
        assert!((ln_sigmoid(0.0) - 0.5f64.ln()).abs() < 1e-15);
        assert!(ln_sigmoid(800.0).abs() < 1e-300);
        assert!((ln_sigmoid(-800.0) + 800.0).abs() < 1e-9);
    }
}
