use rand::Rng;
use rand_distr::{Bernoulli, Beta, Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::node::PypNode;
use crate::error::{domain, Result};

/// Gamma prior on a concentration parameter, parameterised by shape and rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperPrior {
    pub shape: f64,
    pub rate: f64,
}

impl HyperPrior {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite()) || !(rate > 0.0 && rate.is_finite()) {
            return domain(format!("hyperprior shape {shape} and rate {rate} must be positive"));
        }
        Ok(HyperPrior { shape, rate })
    }
}

impl Default for HyperPrior {
    fn default() -> Self {
        HyperPrior { shape: 0.1, rate: 0.1 }
    }
}

/// One auxiliary-variable update of a concentration given `customers` and
/// `tables` totals. With no customers this is a draw from the prior.
pub fn sample_concentration_from_counts<R: Rng + ?Sized>(
    concentration: f64,
    discount: f64,
    customers: u64,
    tables: u64,
    prior: &HyperPrior,
    rng: &mut R,
) -> f64 {
    let mut shape = prior.shape;
    let mut rate = prior.rate;
    if customers > 0 && concentration > 0.0 {
        rate -= ln_beta_sample(concentration, customers as f64, rng);
        if discount == 0.0 {
            shape += tables as f64;
        } else {
            for i in 0..tables {
                let p = concentration / (concentration + i as f64 * discount);
                if Bernoulli::new(p).expect("probability in [0, 1]").sample(rng) {
                    shape += 1.0;
                }
            }
        }
    }
    let draw = Gamma::new(shape, 1.0 / rate)
        .expect("gamma parameters are positive")
        .sample(rng);
    draw.max(f64::MIN_POSITIVE)
}

/// Log of a `Beta(a, b)` draw, computed from two gamma draws so that tiny
/// `a` does not underflow to zero.
fn ln_beta_sample<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let ln_x = ln_gamma_sample(a, rng);
    let ln_y = ln_gamma_sample(b, rng);
    ln_x - crate::math::log_add_exp(ln_x, ln_y)
}

/// Log of a unit-rate gamma draw; shapes below one use the boost
/// `G(a) = G(a + 1) U^(1/a)`.
fn ln_gamma_sample<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape >= 1.0 {
        return Gamma::new(shape, 1.0).expect("gamma shape is positive").sample(rng).ln();
    }
    let g: f64 = Gamma::new(shape + 1.0, 1.0).expect("gamma shape is positive").sample(rng);
    let u: f64 = rng.random::<f64>();
    g.ln() + (1.0 - u).ln() / shape
}

/// Replaces the node's concentration with one posterior draw and returns it.
pub fn sample_concentration<R: Rng + ?Sized>(
    node: &mut PypNode,
    prior: &HyperPrior,
    rng: &mut R,
) -> f64 {
    let beta = sample_concentration_from_counts(
        node.concentration,
        node.discount,
        node.total_customers(),
        node.total_tables(),
        prior,
        rng,
    );
    node.concentration = beta;
    beta
}

/// Truncated stick-breaking weights `p_k = V_k Π_{i<k} (1 - V_i)` with
/// `V_k ~ Beta(1 - α, β + kα)`.
pub fn sample_stick_breaking<R: Rng + ?Sized>(
    discount: f64,
    concentration: f64,
    truncation: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&discount) {
        return domain(format!("discount {discount} outside [0, 1)"));
    }
    if !(concentration > -discount) {
        return domain(format!("concentration {concentration} must exceed -discount"));
    }
    if truncation == 0 {
        return domain("truncation must be at least 1");
    }
    let mut remaining = 1.0;
    let mut weights = Vec::with_capacity(truncation);
    for k in 1..=truncation {
        let v = Beta::new(1.0 - discount, concentration + k as f64 * discount)
            .expect("stick parameters are positive")
            .sample(rng);
        weights.push(remaining * v);
        remaining *= 1.0 - v;
    }
    Ok(weights)
}
