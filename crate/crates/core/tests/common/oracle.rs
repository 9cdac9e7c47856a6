//! Brute-force evaluation of the collapsed joint over every table
//! configuration of a small restaurant hierarchy.
//!
//! Independent of the library's samplers: Stirling numbers come from a plain
//! recurrence here and every configuration is enumerated explicitly.

use std::collections::BTreeMap;

use statrs::function::gamma::ln_gamma;

#[derive(Clone, Debug)]
pub enum Up {
    Gem,
    Uniform(usize),
    Parents(Vec<usize>, Vec<f64>),
}

#[derive(Clone, Debug)]
pub struct ONode {
    pub alpha: f64,
    pub beta: f64,
    pub up: Up,
}

/// How configurations are weighted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Weighting {
    /// The modular product as written, one term per table configuration.
    Literal,
    /// The modular product times the number of removal-indicator
    /// assignments consistent with the table counts (a multinomial in the
    /// per-parent table counts), the law the indicator-based sampler keeps
    /// invariant.
    Indicator,
}

pub fn log_stirling_table(alpha: f64, n_max: usize) -> Vec<Vec<f64>> {
    let mut s = vec![vec![0.0f64; n_max + 1]; n_max + 1];
    s[0][0] = 1.0;
    for n in 0..n_max {
        for m in 0..=n + 1 {
            let left = if m > 0 { s[n][m - 1] } else { 0.0 };
            let stay = if m <= n { (n as f64 - m as f64 * alpha) * s[n][m] } else { 0.0 };
            s[n + 1][m] = left + stay;
        }
    }
    s.iter().map(|r| r.iter().map(|v| v.ln()).collect()).collect()
}

fn ln_poch(x: f64, y: f64, n: u64) -> f64 {
    (0..n).map(|i| (x + i as f64 * y).ln()).sum()
}

fn ln_fact(n: u32) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

struct Enumerator<'a> {
    nodes: &'a [ONode],
    weighting: Weighting,
    stirling: Vec<Vec<Vec<f64>>>,
    customers: Vec<BTreeMap<usize, u32>>,
    tables: Vec<BTreeMap<usize, Vec<u32>>>,
    total: f64,
    count: usize,
}

impl Enumerator<'_> {
    fn slots(&self, i: usize) -> usize {
        match &self.nodes[i].up {
            Up::Parents(p, _) => p.len(),
            _ => 1,
        }
    }

    fn recurse(&mut self, i: isize) {
        if i < 0 {
            let w = self.log_weight();
            self.total = crate_log_add(self.total, w);
            self.count += 1;
            return;
        }
        let i = i as usize;
        let dishes: Vec<(usize, u32)> = self.customers[i].iter().map(|(&k, &c)| (k, c)).filter(|&(_, c)| c > 0).collect();
        self.assign(i, &dishes, 0);
    }

    fn assign(&mut self, i: usize, dishes: &[(usize, u32)], at: usize) {
        if at == dishes.len() {
            self.recurse(i as isize - 1);
            return;
        }
        let (k, c) = dishes[at];
        let slots = self.slots(i);
        let max_t = match self.nodes[i].up {
            Up::Gem => 1,
            _ => c,
        };
        for vector in slot_vectors(slots, max_t) {
            let parents: Vec<usize> = match &self.nodes[i].up {
                Up::Parents(p, _) => p.clone(),
                _ => Vec::new(),
            };
            for (s, &p) in parents.iter().enumerate() {
                *self.customers[p].entry(k).or_insert(0) += vector[s];
            }
            self.tables[i].insert(k, vector.clone());
            self.assign(i, dishes, at + 1);
            self.tables[i].remove(&k);
            for (s, &p) in parents.iter().enumerate() {
                *self.customers[p].get_mut(&k).unwrap() -= vector[s];
            }
        }
    }

    fn log_weight(&self) -> f64 {
        let mut w = 0.0;
        for (i, node) in self.nodes.iter().enumerate() {
            let c_total: u32 = self.customers[i].values().sum();
            let t_total: u32 = self.tables[i].values().map(|v| v.iter().sum::<u32>()).sum();
            w += ln_poch(node.beta, node.alpha, t_total as u64) - ln_poch(node.beta, 1.0, c_total as u64);
            for (&k, &c) in &self.customers[i] {
                if c == 0 {
                    continue;
                }
                let v = &self.tables[i][&k];
                let t: u32 = v.iter().sum();
                w += self.stirling[i][c as usize][t as usize];
                w -= ln_fact(c) - ln_fact(t) - ln_fact(c - t);
                if self.weighting == Weighting::Indicator {
                    w += ln_fact(c) - ln_fact(c - t) - v.iter().map(|&x| ln_fact(x)).sum::<f64>();
                }
            }
            match &node.up {
                Up::Uniform(size) => w -= t_total as f64 * (*size as f64).ln(),
                Up::Parents(p, lambda) if p.len() > 1 => {
                    let mut per_slot = vec![0u32; p.len()];
                    for v in self.tables[i].values() {
                        for (s, &x) in v.iter().enumerate() {
                            per_slot[s] += x;
                        }
                    }
                    let args: Vec<f64> = lambda.iter().zip(&per_slot).map(|(&l, &t)| l + t as f64).collect();
                    w += args.iter().map(|&a| ln_gamma(a)).sum::<f64>() - ln_gamma(args.iter().sum());
                }
                _ => {}
            }
        }
        w
    }
}

fn crate_log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// All per-slot table vectors with total in `1..=max_t`.
fn slot_vectors(slots: usize, max_t: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut current = vec![0u32; slots];
    fn fill(s: usize, left: u32, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if s == current.len() {
            if current.iter().sum::<u32>() > 0 {
                out.push(current.clone());
            }
            return;
        }
        for x in 0..=left {
            current[s] = x;
            fill(s + 1, left - x, current, out);
        }
        current[s] = 0;
    }
    fill(0, max_t, &mut current, &mut out);
    out
}

/// Log of the summed weight over all table configurations, given observed
/// counts `data[i]` (dish → count) at each node. Nodes must be listed with
/// parents before children.
pub fn log_marginal(nodes: &[ONode], data: &[BTreeMap<usize, u32>], weighting: Weighting) -> f64 {
    let n_max: usize = data.iter().flat_map(|m| m.values()).map(|&c| c as usize).sum::<usize>() + 1;
    let mut e = Enumerator {
        nodes,
        weighting,
        stirling: nodes.iter().map(|n| log_stirling_table(n.alpha, n_max)).collect(),
        customers: data.to_vec(),
        tables: vec![BTreeMap::new(); nodes.len()],
        total: f64::NEG_INFINITY,
        count: 0,
    };
    e.recurse(nodes.len() as isize - 1);
    e.total
}

/// Restricted-growth relabelling: topics renumbered by first appearance.
pub fn canonical(z: &[u32]) -> Vec<u32> {
    let mut map: Vec<(u32, u32)> = Vec::new();
    z.iter()
        .map(|&k| match map.iter().find(|e| e.0 == k) {
            Some(e) => e.1,
            None => {
                let id = map.len() as u32;
                map.push((k, id));
                id
            }
        })
        .collect()
}

/// Every restricted-growth string of length `n` using at most `k` labels.
pub fn partitions(n: usize, k: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(n);
    fn go(n: usize, k: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        let next = cur.iter().copied().max().map_or(0, |m| m + 1);
        for label in 0..=next.min(k - 1) {
            cur.push(label);
            go(n, k, cur, out);
            cur.pop();
        }
    }
    go(n, k, &mut cur, &mut out);
    out
}

pub fn total_variation(p: &BTreeMap<Vec<u32>, f64>, q: &BTreeMap<Vec<u32>, f64>) -> f64 {
    let mut keys: Vec<&Vec<u32>> = p.keys().chain(q.keys()).collect();
    keys.sort();
    keys.dedup();
    0.5 * keys
        .into_iter()
        .map(|k| (p.get(k).copied().unwrap_or(0.0) - q.get(k).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

/// Normalises log weights into probabilities.
pub fn normalise(logs: BTreeMap<Vec<u32>, f64>) -> BTreeMap<Vec<u32>, f64> {
    let m = logs.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logs.values().map(|&v| (v - m).exp()).sum();
    logs.into_iter().map(|(k, v)| (k, (v - m).exp() / z)).collect()
}
