//! Generalised Stirling numbers `S^n_{m,a}` in log space.
//!
//! The table is filled by the triangular recurrence
//! `S^{n+1}_m = S^n_{m-1} + (n - m a) S^n_m` with `S^0_0 = 1`, so every
//! entry depends only on the two entries above it. Growing the table in
//! either direction therefore reproduces earlier values bit for bit.

use std::collections::HashMap;
use std::io::{Read, Write};

use crate::error::{domain, Error, Result};
use crate::math::log_add_exp;

const MAGIC: &[u8; 8] = b"HPYPSTIR";
const FORMAT_VERSION: u32 = 1;

/// Default hard limit on stored entries (about 512 MiB of `f64`).
pub const DEFAULT_ENTRY_LIMIT: usize = 1 << 26;

#[derive(Debug, Clone)]
pub struct StirlingCache {
    discount: f64,
    /// Highest table index `m` stored in any row.
    max_m: usize,
    /// `rows[n][m]` for `m <= min(n, max_m)`; `-inf` encodes zero.
    rows: Vec<Vec<f64>>,
    entry_limit: usize,
}

impl StirlingCache {
    pub fn new(discount: f64) -> Result<Self> {
        Self::with_limit(discount, DEFAULT_ENTRY_LIMIT)
    }

    pub fn with_limit(discount: f64, entry_limit: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&discount) {
            return domain(format!("discount {discount} outside [0, 1)"));
        }
        let mut cache = StirlingCache {
            discount,
            max_m: 0,
            rows: vec![vec![0.0]],
            entry_limit,
        };
        cache.ensure(16, 16)?;
        Ok(cache)
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// Largest `n` currently tabulated.
    pub fn max_n(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn max_m(&self) -> usize {
        self.max_m
    }

    fn entries_for(rows: usize, max_m: usize) -> usize {
        (0..rows).map(|n| n.min(max_m) + 1).sum()
    }

    /// Grows the table so that `(n, m)` is covered.
    pub fn ensure(&mut self, n: usize, m: usize) -> Result<()> {
        let m = m.min(n);
        if n <= self.max_n() && m <= self.max_m {
            return Ok(());
        }
        let mut new_rows = self.rows.len();
        while new_rows <= n {
            new_rows *= 2;
        }
        let mut new_max_m = self.max_m.max(1);
        while new_max_m < m {
            new_max_m *= 2;
        }
        if Self::entries_for(new_rows, new_max_m) > self.entry_limit {
            // retry with the exact size before giving up
            new_rows = (n + 1).max(self.rows.len());
            new_max_m = m.max(self.max_m);
            if Self::entries_for(new_rows, new_max_m) > self.entry_limit {
                return Err(Error::Capacity(format!(
                    "stirling table for n={n}, m={m} exceeds {} entries",
                    self.entry_limit
                )));
            }
        }

        let a = self.discount;
        // widen the rows we already have
        if new_max_m > self.max_m {
            for n in 1..self.rows.len() {
                let width = n.min(new_max_m) + 1;
                let start = self.rows[n].len();
                for m in start..width {
                    let value = self.step(n - 1, m, a);
                    self.rows[n].push(value);
                }
            }
            self.max_m = new_max_m;
        }
        // then append rows
        while self.rows.len() < new_rows {
            let n = self.rows.len();
            let width = n.min(self.max_m) + 1;
            let mut row = Vec::with_capacity(width);
            for m in 0..width {
                row.push(self.step(n - 1, m, a));
            }
            self.rows.push(row);
        }
        Ok(())
    }

    /// `log S^{prev+1}_m` from row `prev`.
    fn step(&self, prev: usize, m: usize, a: f64) -> f64 {
        let row = &self.rows[prev];
        let left = if m == 0 {
            f64::NEG_INFINITY
        } else {
            row.get(m - 1).copied().unwrap_or(f64::NEG_INFINITY)
        };
        let stay = match row.get(m) {
            Some(&s) if s > f64::NEG_INFINITY => {
                let factor = prev as f64 - m as f64 * a;
                if factor > 0.0 {
                    s + factor.ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            _ => f64::NEG_INFINITY,
        };
        log_add_exp(left, stay)
    }

    /// `log S^n_{m}` for this cache's discount, growing the table on demand.
    pub fn log_stirling(&mut self, n: usize, m: usize) -> Result<f64> {
        if m > n {
            return Ok(f64::NEG_INFINITY);
        }
        self.ensure(n, m)?;
        Ok(self.rows[n][m])
    }

    /// Read-only lookup; `None` if `(n, m)` is not tabulated yet.
    pub fn get(&self, n: usize, m: usize) -> Option<f64> {
        if m > n {
            return Some(f64::NEG_INFINITY);
        }
        self.rows.get(n).and_then(|row| row.get(m)).copied()
    }

    /// `log [S^{c+dc}_{t+dt} / S^c_t]` for a valid pair of count states.
    pub fn log_ratio(&mut self, c: usize, t: usize, dc: usize, dt: usize) -> Result<f64> {
        check_pair(c, t)?;
        check_pair(c + dc, t + dt)?;
        Ok(self.log_stirling(c + dc, t + dt)? - self.log_stirling(c, t)?)
    }

    /// Writes the table with a versioned header (discount, max_n, max_m).
    pub fn dump<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&FORMAT_VERSION.to_le_bytes())?;
        out.write_all(&self.discount.to_le_bytes())?;
        out.write_all(&(self.max_n() as u64).to_le_bytes())?;
        out.write_all(&(self.max_m as u64).to_le_bytes())?;
        for row in &self.rows {
            for v in row {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Snapshot("not a stirling table dump".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        input.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != FORMAT_VERSION {
            return Err(Error::Snapshot(format!("unsupported stirling dump version {version}")));
        }
        input.read_exact(&mut b8)?;
        let discount = f64::from_le_bytes(b8);
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::Snapshot(format!("bad discount {discount} in dump")));
        }
        input.read_exact(&mut b8)?;
        let max_n = u64::from_le_bytes(b8) as usize;
        input.read_exact(&mut b8)?;
        let max_m = u64::from_le_bytes(b8) as usize;
        let entries = Self::entries_for(max_n + 1, max_m);
        if entries > DEFAULT_ENTRY_LIMIT {
            return Err(Error::Capacity(format!("dump holds {entries} entries")));
        }
        let mut rows = Vec::with_capacity(max_n + 1);
        for n in 0..=max_n {
            let width = n.min(max_m) + 1;
            let mut row = Vec::with_capacity(width);
            for _ in 0..width {
                input.read_exact(&mut b8)?;
                row.push(f64::from_le_bytes(b8));
            }
            rows.push(row);
        }
        Ok(StirlingCache {
            discount,
            max_m,
            rows,
            entry_limit: DEFAULT_ENTRY_LIMIT,
        })
    }
}

fn check_pair(c: usize, t: usize) -> Result<()> {
    if t > c || ((t == 0) != (c == 0)) {
        return domain(format!("invalid customer/table pair ({c}, {t})"));
    }
    Ok(())
}

/// One cache per distinct discount, keyed by the discount's bit pattern.
#[derive(Debug, Clone, Default)]
pub struct StirlingTables {
    caches: HashMap<u64, StirlingCache>,
}

impl StirlingTables {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn for_discount(&mut self, discount: f64) -> Result<&mut StirlingCache> {
        let key = discount.to_bits();
        if !self.caches.contains_key(&key) {
            self.caches.insert(key, StirlingCache::new(discount)?);
        }
        Ok(self.caches.get_mut(&key).expect("inserted above"))
    }

    pub fn insert(&mut self, cache: StirlingCache) {
        self.caches.insert(cache.discount.to_bits(), cache);
    }
}

/// Free-function form of [`StirlingCache::log_stirling`] that checks the
/// cache discount.
pub fn log_stirling(cache: &mut StirlingCache, n: usize, m: usize, discount: f64) -> Result<f64> {
    if cache.discount.to_bits() != discount.to_bits() {
        return domain(format!(
            "cache built for discount {} queried with {discount}",
            cache.discount
        ));
    }
    cache.log_stirling(n, m)
}

/// Free-function form of [`StirlingCache::log_ratio`] that checks the cache
/// discount.
pub fn log_stirling_ratio(
    cache: &mut StirlingCache,
    c: usize,
    t: usize,
    dc: usize,
    dt: usize,
    discount: f64,
) -> Result<f64> {
    if cache.discount.to_bits() != discount.to_bits() {
        return domain(format!(
            "cache built for discount {} queried with {discount}",
            cache.discount
        ));
    }
    cache.log_ratio(c, t, dc, dt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn boundary_values() {
        let mut s = StirlingCache::new(0.3).unwrap();
        assert_eq!(s.log_stirling(0, 0).unwrap(), 0.0);
        assert_eq!(s.log_stirling(1, 1).unwrap(), 0.0);
        assert_eq!(s.log_stirling(5, 0).unwrap(), f64::NEG_INFINITY);
        assert_eq!(s.log_stirling(3, 4).unwrap(), f64::NEG_INFINITY);
        for n in 0..40 {
            assert_eq!(s.log_stirling(n, n).unwrap(), 0.0);
        }
    }

    #[test]
    fn small_values() {
        let mut s = StirlingCache::new(0.5).unwrap();
        assert!(close(s.log_stirling(2, 1).unwrap(), 0.5f64.ln()));
        let mut s0 = StirlingCache::new(0.0).unwrap();
        // unsigned Stirling numbers of the first kind: S^3_1 = 2!
        assert!(close(s0.log_stirling(3, 1).unwrap(), 2f64.ln()));
        assert!(close(s0.log_stirling(4, 2).unwrap(), 11f64.ln()));
    }

    #[test]
    fn ratio_examples() {
        let mut s = StirlingCache::new(0.5).unwrap();
        assert!(close(s.log_ratio(1, 1, 1, 0).unwrap(), 0.5f64.ln()));
        assert_eq!(s.log_ratio(1, 1, 1, 1).unwrap(), 0.0);
        let mut s3 = StirlingCache::new(0.3).unwrap();
        assert_eq!(s3.log_ratio(0, 0, 1, 1).unwrap(), 0.0);
    }

    #[test]
    fn ratio_rejects_invalid_pairs() {
        let mut s = StirlingCache::new(0.5).unwrap();
        assert!(matches!(s.log_ratio(2, 3, 0, 0), Err(Error::Domain(_))));
        assert!(matches!(s.log_ratio(2, 0, 1, 0), Err(Error::Domain(_))));
        assert!(matches!(s.log_ratio(0, 0, 1, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn discount_mismatch_is_rejected() {
        let mut s = StirlingCache::new(0.5).unwrap();
        assert!(log_stirling(&mut s, 2, 1, 0.3).is_err());
        assert!(close(log_stirling(&mut s, 2, 1, 0.5).unwrap(), 0.5f64.ln()));
        assert!(log_stirling_ratio(&mut s, 1, 1, 1, 0, 0.7).is_err());
    }

    #[test]
    fn rejects_bad_discount() {
        assert!(StirlingCache::new(1.0).is_err());
        assert!(StirlingCache::new(-0.1).is_err());
    }

    #[test]
    fn growth_is_append_only() {
        let mut grown = StirlingCache::new(0.7).unwrap();
        let before: Vec<f64> = (0..17).map(|m| grown.log_stirling(16, m).unwrap()).collect();
        grown.ensure(700, 300).unwrap();
        let after: Vec<f64> = (0..17).map(|m| grown.log_stirling(16, m).unwrap()).collect();
        assert_eq!(before, after);

        // building straight to a large size gives identical bits
        let mut direct = StirlingCache::new(0.7).unwrap();
        direct.ensure(1000, 1000).unwrap();
        for n in [17, 99, 300, 700] {
            for m in [1, 2, 50, 300] {
                assert_eq!(
                    grown.log_stirling(n, m).unwrap().to_bits(),
                    direct.log_stirling(n, m).unwrap().to_bits()
                );
            }
        }
    }

    #[test]
    fn capacity_limit_is_enforced() {
        let mut s = StirlingCache::with_limit(0.5, 10_000).unwrap();
        assert!(matches!(s.log_stirling(5000, 4000), Err(Error::Capacity(_))));
        // smaller queries still work afterwards
        assert!(s.log_stirling(20, 3).unwrap().is_finite());
    }

    #[test]
    fn dump_round_trip() {
        let mut s = StirlingCache::new(0.3).unwrap();
        s.ensure(200, 80).unwrap();
        let mut buf = Vec::new();
        s.dump(&mut buf).unwrap();
        let mut back = StirlingCache::load(&buf[..]).unwrap();
        assert_eq!(back.discount(), 0.3);
        assert_eq!(back.max_n(), s.max_n());
        for n in [0, 1, 50, 200] {
            for m in [0, 1, 40, 80] {
                assert_eq!(
                    back.log_stirling(n, m).unwrap().to_bits(),
                    s.log_stirling(n, m).unwrap().to_bits()
                );
            }
        }
        assert!(StirlingCache::load(&b"garbage!........"[..]).is_err());
    }
}
