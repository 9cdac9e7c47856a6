use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::math::{ln_gamma, ln_multi_beta};
use crate::stirling::StirlingCache;

pub type NodeId = usize;

/// Terminal base distribution of a root restaurant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Base {
    /// Stick-breaking prior over an unbounded dish space. Every dish is a
    /// fresh atom, so a root can hold at most one table per dish.
    Gem,
    /// Discrete uniform over `size` dishes.
    Uniform { size: usize },
}

/// One restaurant: per-dish customer counts and per-parent table counts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PypNode {
    pub name: String,
    pub class: String,
    pub discount: f64,
    pub concentration: f64,
    pub parents: Vec<NodeId>,
    /// Dirichlet prior on the mixing weights; one entry per parent.
    pub lambda: Vec<f64>,
    pub base: Option<Base>,
    /// Fixed probability vector. Children treat it as a known base and the
    /// node's own counts are left untouched.
    pub explicit: Option<Vec<f64>>,
    pub(crate) customers: Vec<u32>,
    /// Tables per dish, all parents combined.
    pub(crate) tables: Vec<u32>,
    /// Tables per (dish, parent slot), dish-major.
    pub(crate) slot_tables: Vec<u32>,
    /// Customers that come straight from observed tokens.
    pub(crate) direct: Vec<u32>,
    #[serde(skip)]
    pub(crate) total_customers: u64,
    #[serde(skip)]
    pub(crate) total_tables: u64,
    #[serde(skip)]
    pub(crate) slot_totals: Vec<u64>,
    #[serde(skip)]
    pub(crate) cache: usize,
}

impl PypNode {
    pub fn new(
        name: impl Into<String>,
        class: impl Into<String>,
        discount: f64,
        concentration: f64,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&discount) {
            return domain(format!("discount {discount} outside [0, 1)"));
        }
        if !(concentration > -discount) || !concentration.is_finite() {
            return domain(format!(
                "concentration {concentration} must exceed -discount ({})",
                -discount
            ));
        }
        Ok(PypNode {
            name: name.into(),
            class: class.into(),
            discount,
            concentration,
            parents: Vec::new(),
            lambda: Vec::new(),
            base: None,
            explicit: None,
            customers: Vec::new(),
            tables: Vec::new(),
            slot_tables: Vec::new(),
            direct: Vec::new(),
            total_customers: 0,
            total_tables: 0,
            slot_totals: vec![0],
            cache: 0,
        })
    }

    /// Number of table slots: one per parent, or one for the base.
    #[inline]
    pub fn slots(&self) -> usize {
        self.parents.len().max(1)
    }

    pub fn dims(&self) -> usize {
        self.customers.len()
    }

    pub fn is_root(&self) -> bool {
        self.parents.is_empty()
    }

    pub(crate) fn ensure_dims(&mut self, n: usize) {
        if n > self.customers.len() {
            self.customers.resize(n, 0);
            self.tables.resize(n, 0);
            self.direct.resize(n, 0);
            self.slot_tables.resize(n * self.slots(), 0);
        }
    }

    #[inline]
    pub fn customers(&self, k: usize) -> u32 {
        self.customers.get(k).copied().unwrap_or(0)
    }

    #[inline]
    pub fn tables(&self, k: usize) -> u32 {
        self.tables.get(k).copied().unwrap_or(0)
    }

    #[inline]
    pub fn slot_tables(&self, k: usize, slot: usize) -> u32 {
        self.slot_tables
            .get(k * self.slots() + slot)
            .copied()
            .unwrap_or(0)
    }

    pub fn direct(&self, k: usize) -> u32 {
        self.direct.get(k).copied().unwrap_or(0)
    }

    pub fn total_customers(&self) -> u64 {
        self.total_customers
    }

    pub fn total_tables(&self) -> u64 {
        self.total_tables
    }

    pub fn slot_total(&self, slot: usize) -> u64 {
        self.slot_totals[slot]
    }

    /// Recomputes the cached totals from the per-dish arrays.
    pub(crate) fn rebuild_totals(&mut self) {
        let slots = self.slots();
        self.total_customers = self.customers.iter().map(|&c| c as u64).sum();
        self.total_tables = self.tables.iter().map(|&t| t as u64).sum();
        self.slot_totals = vec![0; slots];
        for (i, &t) in self.slot_tables.iter().enumerate() {
            self.slot_totals[i % slots] += t as u64;
        }
    }

    /// Sets the counts of one dish directly. Used by initialisation and
    /// tests; totals are kept in step.
    pub fn set_counts(&mut self, k: usize, customers: u32, slot_tables: &[u32]) {
        let slots = self.slots();
        assert_eq!(slot_tables.len(), slots, "one table count per slot");
        self.ensure_dims(k + 1);
        self.total_customers = self.total_customers - self.customers[k] as u64 + customers as u64;
        self.customers[k] = customers;
        let mut sum = 0;
        for (i, &t) in slot_tables.iter().enumerate() {
            let cell = &mut self.slot_tables[k * slots + i];
            self.slot_totals[i] = self.slot_totals[i] - *cell as u64 + t as u64;
            *cell = t;
            sum += t;
        }
        self.total_tables = self.total_tables - self.tables[k] as u64 + sum as u64;
        self.tables[k] = sum;
    }

    #[inline]
    pub(crate) fn bump_customer(&mut self, k: usize) {
        self.customers[k] += 1;
        self.total_customers += 1;
    }

    #[inline]
    pub(crate) fn bump_table(&mut self, k: usize, slot: usize) {
        let slots = self.slots();
        self.slot_tables[k * slots + slot] += 1;
        self.tables[k] += 1;
        self.slot_totals[slot] += 1;
        self.total_tables += 1;
    }

    #[inline]
    pub(crate) fn drop_customer(&mut self, k: usize) {
        self.customers[k] -= 1;
        self.total_customers -= 1;
    }

    #[inline]
    pub(crate) fn drop_table(&mut self, k: usize, slot: usize) {
        let slots = self.slots();
        self.slot_tables[k * slots + slot] -= 1;
        self.tables[k] -= 1;
        self.slot_totals[slot] -= 1;
        self.total_tables -= 1;
    }

    /// `ln (β|α)_T`, the generalised rising factorial over all tables.
    pub fn ln_table_pochhammer(&self) -> f64 {
        ln_pochhammer(self.concentration, self.discount, self.total_tables)
    }

    /// Log of the node's modular likelihood term.
    pub fn log_f(&self, cache: &mut StirlingCache) -> Result<f64> {
        let mut out = self.ln_table_pochhammer()
            - ln_rising(self.concentration, self.total_customers);
        for k in 0..self.dims() {
            let c = self.customers[k] as usize;
            let t = self.tables[k] as usize;
            if c == 0 && t == 0 {
                continue;
            }
            if t > c || t == 0 {
                return Err(Error::InvalidState(format!(
                    "{}: dish {k} has {c} customers and {t} tables",
                    self.name
                )));
            }
            out += cache.log_stirling(c, t)? - ln_binomial(c, t);
        }
        Ok(out)
    }

    /// `log f(after) - log f(before)` for one extra customer (`dc`) and
    /// optionally one extra table (`dt`) on dish `k`.
    pub fn log_f_ratio(
        &self,
        cache: &mut StirlingCache,
        k: usize,
        dc: u32,
        dt: u32,
    ) -> Result<f64> {
        if dc > 1 || dt > 1 {
            return domain("increments must be 0 or 1");
        }
        let c = self.customers(k);
        let t = self.tables(k);
        let valid = |c: u32, t: u32| t <= c && ((t == 0) == (c == 0));
        if !valid(c, t) || !valid(c + dc, t + dt) {
            return domain(format!(
                "{}: increment ({dc}, {dt}) from ({c}, {t}) on dish {k} is not a valid state",
                self.name
            ));
        }
        if dc == 0 && dt == 0 {
            return Ok(0.0);
        }
        let mut out = 0.0;
        if dt == 1 {
            out += (self.concentration + self.discount * self.total_tables as f64).ln();
            out += cache.log_ratio(c as usize, t as usize, dc as usize, 1)?;
        } else {
            out += cache.log_ratio(c as usize, t as usize, dc as usize, 0)?;
        }
        if dc == 1 {
            out -= (self.concentration + self.total_customers as f64).ln();
        }
        out += ln_inverse_binomial_ratio(c, t, dc, dt);
        Ok(out)
    }

    /// Fast ratio for one extra customer, with or without a new table.
    ///
    /// The state before the increment may be the transient `(c >= 1, t = 0)`
    /// left behind by a removal; its Stirling term is then taken as 1, which
    /// is a constant shared by every proposal that repairs it.
    #[inline]
    pub(crate) fn add_ratio(
        &self,
        cache: &mut StirlingCache,
        k: usize,
        open: bool,
        ln_c_term: f64,
        ln_t_term: f64,
    ) -> Result<f64> {
        let c = self.customers(k) as usize;
        let t = self.tables(k) as usize;
        let before = if c == 0 || t == 0 {
            0.0
        } else {
            stirling_at(cache, c, t)?
        };
        if open {
            let after = stirling_at(cache, c + 1, t + 1)?;
            Ok(ln_t_term - ln_c_term + after - before - ((c + 1) as f64 / (t + 1) as f64).ln())
        } else {
            let after = stirling_at(cache, c + 1, t)?;
            Ok(-ln_c_term + after - before - ((c + 1) as f64 / (c + 1 - t) as f64).ln())
        }
    }

    /// `ln(β + C)`; the per-node constant in [`Self::add_ratio`].
    #[inline]
    pub(crate) fn ln_customer_term(&self) -> f64 {
        (self.concentration + self.total_customers as f64).ln()
    }

    /// `ln(β + αT)`; the per-node constant in [`Self::add_ratio`].
    #[inline]
    pub(crate) fn ln_table_term(&self) -> f64 {
        (self.concentration + self.discount * self.total_tables as f64).ln()
    }

    /// Log normaliser of the mixing-weight posterior, `ln B(λ + T^{→P})`.
    pub fn log_g(&self) -> Result<f64> {
        if self.parents.len() < 2 {
            return domain(format!("{} has fewer than two parents", self.name));
        }
        let args: Vec<f64> = self
            .lambda
            .iter()
            .zip(&self.slot_totals)
            .map(|(&l, &t)| l + t as f64)
            .collect();
        Ok(ln_multi_beta(&args))
    }

    /// Change in `log g` when one table is opened towards `slot`.
    #[inline]
    pub(crate) fn log_g_ratio(&self, slot: usize) -> f64 {
        if self.parents.len() < 2 {
            return 0.0;
        }
        let lambda_sum: f64 = self.lambda.iter().sum();
        (self.lambda[slot] + self.slot_totals[slot] as f64).ln()
            - (lambda_sum + self.total_tables as f64).ln()
    }

    /// Posterior mean of the mixing weights over parents.
    pub fn mixing_mean(&self) -> Vec<f64> {
        if self.parents.len() < 2 {
            return vec![1.0; self.parents.len()];
        }
        let lambda_sum: f64 = self.lambda.iter().sum();
        let denom = self.total_tables as f64 + lambda_sum;
        self.lambda
            .iter()
            .zip(&self.slot_totals)
            .map(|(&l, &t)| (t as f64 + l) / denom)
            .collect()
    }

    /// Posterior mean given the expected base vector `base_mean`.
    pub fn mean_given_base(&self, base_mean: &[f64]) -> Vec<f64> {
        let a = self.discount;
        let b = self.concentration;
        let new_mass = a * self.total_tables as f64 + b;
        let denom = b + self.total_customers as f64;
        base_mean
            .iter()
            .enumerate()
            .map(|(k, &h)| {
                let c = self.customers(k) as f64;
                let t = self.tables(k) as f64;
                (new_mass * h + c - a * t) / denom
            })
            .collect()
    }

    /// Fraction of predictive mass that is drawn from the base.
    pub fn base_fraction(&self) -> f64 {
        (self.discount * self.total_tables as f64 + self.concentration)
            / (self.concentration + self.total_customers as f64)
    }
}

/// `ln (x|y)_n = Σ_{i<n} ln(x + i y)`.
pub fn ln_pochhammer(x: f64, y: f64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    if x <= 0.0 || n < 8 {
        return (0..n).map(|i| (x + i as f64 * y).ln()).sum();
    }
    if y == 0.0 {
        n as f64 * x.ln()
    } else {
        // (x|y)_n = y^n Γ(x/y + n) / Γ(x/y)
        let r = x / y;
        n as f64 * y.ln() + ln_gamma(r + n as f64) - ln_gamma(r)
    }
}

/// `ln (x)_n` with unit increment.
pub fn ln_rising(x: f64, n: u64) -> f64 {
    ln_pochhammer(x, 1.0, n)
}

pub fn ln_binomial(n: usize, k: usize) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

fn ln_inverse_binomial_ratio(c: u32, t: u32, dc: u32, dt: u32) -> f64 {
    let (c, t) = (c as f64, t as f64);
    match (dc, dt) {
        (1, 0) => -((c + 1.0) / (c + 1.0 - t)).ln(),
        (1, 1) => -((c + 1.0) / (t + 1.0)).ln(),
        (0, 1) => -((c - t) / (t + 1.0)).ln(),
        _ => 0.0,
    }
}

#[inline]
fn stirling_at(cache: &mut StirlingCache, n: usize, m: usize) -> Result<f64> {
    match cache.get(n, m) {
        Some(v) => Ok(v),
        None => cache.log_stirling(n, m),
    }
}
