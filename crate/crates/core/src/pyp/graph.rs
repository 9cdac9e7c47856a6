use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::concentration::{sample_concentration, HyperPrior};
use super::node::{Base, NodeId, PypNode};
use crate::error::{domain, Error, Result};
use crate::stirling::StirlingCache;

/// Where a new customer sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Seat {
    /// At an existing table for the dish.
    Join,
    /// At a new table served from parent slot `i` (or the base at a root).
    Open(usize),
}

/// Treatment of the extra "new dish" slot in posterior means over a GEM
/// rooted dish space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NewTopicSlot {
    /// Keep the slot as the last entry.
    Keep,
    /// Drop the slot without renormalising.
    Discard,
    /// Drop the slot at the root and renormalise, so every descendant sums
    /// to one over the existing dishes.
    #[default]
    RenormalizeRoot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub node: NodeId,
    pub name: String,
    pub dish: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.dish {
            Some(k) => write!(f, "{} (node {}), dish {}: {}", self.name, self.node, k, self.message),
            None => write!(f, "{} (node {}): {}", self.name, self.node, self.message),
        }
    }
}

/// A directed acyclic hierarchy of restaurants. Parents always have smaller
/// ids than their children.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PypGraph {
    nodes: Vec<PypNode>,
    #[serde(skip)]
    caches: Vec<StirlingCache>,
}

impl PypGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &PypNode {
        &self.nodes[id]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut PypNode {
        &mut self.nodes[id]
    }

    pub fn nodes(&self) -> &[PypNode] {
        &self.nodes
    }

    fn cache_index(&mut self, discount: f64) -> Result<usize> {
        if let Some(i) = self
            .caches
            .iter()
            .position(|c| c.discount().to_bits() == discount.to_bits())
        {
            return Ok(i);
        }
        self.caches.push(StirlingCache::new(discount)?);
        Ok(self.caches.len() - 1)
    }

    pub fn add_root(
        &mut self,
        name: impl Into<String>,
        class: impl Into<String>,
        discount: f64,
        concentration: f64,
        base: Base,
    ) -> Result<NodeId> {
        if let Base::Uniform { size: 0 } = base {
            return domain("uniform base needs a positive size");
        }
        let mut node = PypNode::new(name, class, discount, concentration)?;
        node.base = Some(base);
        self.push(node)
    }

    pub fn add_child(
        &mut self,
        name: impl Into<String>,
        class: impl Into<String>,
        discount: f64,
        concentration: f64,
        parents: &[NodeId],
        lambda: &[f64],
    ) -> Result<NodeId> {
        let mut node = PypNode::new(name, class, discount, concentration)?;
        if parents.is_empty() {
            return domain(format!("{} needs at least one parent", node.name));
        }
        if parents.iter().any(|&p| p >= self.nodes.len()) {
            return domain(format!("{} refers to an unknown parent", node.name));
        }
        for (i, p) in parents.iter().enumerate() {
            if parents[..i].contains(p) {
                return domain(format!("{} lists parent {p} twice", node.name));
            }
        }
        let lambda = if parents.len() == 1 {
            vec![1.0]
        } else if lambda.len() == parents.len() {
            lambda.to_vec()
        } else {
            return domain(format!(
                "{} has {} parents but {} mixing weights",
                node.name,
                parents.len(),
                lambda.len()
            ));
        };
        if lambda.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return domain(format!("{} has a non-positive mixing prior", node.name));
        }
        node.parents = parents.to_vec();
        node.lambda = lambda;
        self.push(node)
    }

    fn push(&mut self, mut node: PypNode) -> Result<NodeId> {
        node.cache = self.cache_index(node.discount)?;
        node.rebuild_totals();
        self.nodes.push(node);
        Ok(self.nodes.len() - 1)
    }

    /// Rebuilds the derived state (totals and Stirling caches) after
    /// deserialisation.
    pub fn relink(&mut self) -> Result<()> {
        self.caches.clear();
        for id in 0..self.nodes.len() {
            let discount = self.nodes[id].discount;
            let slots = self.nodes[id].slots();
            let n = &self.nodes[id];
            let dims = n.customers.len();
            if n.tables.len() != dims || n.direct.len() != dims || n.slot_tables.len() != dims * slots
            {
                return Err(Error::Snapshot(format!("{}: count arrays disagree in length", n.name)));
            }
            if n.parents.iter().any(|&p| p >= id) {
                return Err(Error::Snapshot(format!("{}: parent ids must precede the node", n.name)));
            }
            let cache = self.cache_index(discount)?;
            let n = &mut self.nodes[id];
            n.cache = cache;
            n.rebuild_totals();
        }
        Ok(())
    }

    /// Node and the Stirling cache for its discount, borrowed together.
    #[inline]
    pub(crate) fn split(&mut self, id: NodeId) -> (&PypNode, &mut StirlingCache) {
        let node = &self.nodes[id];
        (node, &mut self.caches[node.cache])
    }

    pub fn set_concentration(&mut self, id: NodeId, concentration: f64) -> Result<()> {
        let n = &mut self.nodes[id];
        if !(concentration > -n.discount) || !concentration.is_finite() {
            return domain(format!("concentration {concentration} invalid for {}", n.name));
        }
        n.concentration = concentration;
        Ok(())
    }

    /// Fixes the node to an explicit probability vector.
    pub fn set_explicit(&mut self, id: NodeId, vector: Vec<f64>) -> Result<()> {
        if vector.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return domain("explicit vector must be finite and nonnegative");
        }
        self.nodes[id].explicit = Some(vector);
        Ok(())
    }

    pub fn clear_explicit(&mut self, id: NodeId) {
        self.nodes[id].explicit = None;
    }

    /// Seats one customer for dish `k` at `id`. Returns the parent that must
    /// receive a customer in turn, if any.
    pub fn add_customer(&mut self, id: NodeId, k: usize, seat: Seat) -> Result<Option<NodeId>> {
        let node = &self.nodes[id];
        if node.explicit.is_some() {
            return Err(Error::InvalidState(format!("{} holds an explicit vector", node.name)));
        }
        match seat {
            Seat::Join => {
                if node.tables(k) == 0 {
                    return Err(Error::InvalidState(format!(
                        "{}: no table to join for dish {k}",
                        node.name
                    )));
                }
                let node = &mut self.nodes[id];
                node.bump_customer(k);
                Ok(None)
            }
            Seat::Open(slot) => {
                if slot >= node.slots() {
                    return domain(format!("{}: no parent slot {slot}", node.name));
                }
                if node.base == Some(Base::Gem) && node.tables(k) > 0 {
                    return Err(Error::InvalidState(format!(
                        "{}: a stick-breaking root holds one table per dish",
                        node.name
                    )));
                }
                if let Some(Base::Uniform { size }) = node.base {
                    if k >= size {
                        return domain(format!("{}: dish {k} outside base of size {size}", node.name));
                    }
                }
                let parent = node.parents.get(slot).copied();
                let node = &mut self.nodes[id];
                node.ensure_dims(k + 1);
                node.bump_customer(k);
                node.bump_table(k, slot);
                Ok(parent.filter(|&p| self.nodes[p].explicit.is_none()))
            }
        }
    }

    /// Adds an observed token of dish `k` at a leaf.
    pub fn add_data(&mut self, id: NodeId, k: usize, seat: Seat) -> Result<Option<NodeId>> {
        let next = self.add_customer(id, k, seat)?;
        let node = &mut self.nodes[id];
        node.direct[k] += 1;
        Ok(next)
    }

    /// Adds an observed token at `id` and follows a list of seats up the
    /// hierarchy, one per node visited.
    pub fn add_along(&mut self, id: NodeId, k: usize, seats: &[Seat]) -> Result<()> {
        let Some((&first, rest)) = seats.split_first() else {
            return domain("empty seat list");
        };
        let mut at = self.add_data(id, k, first)?;
        for &seat in rest {
            let Some(node) = at else {
                return domain("seat list longer than the path it describes");
            };
            at = self.add_customer(node, k, seat)?;
        }
        if at.is_some() {
            return domain("seat list ended before the path did");
        }
        Ok(())
    }

    /// Removes one customer of dish `k` from `id`, sampling whether a table
    /// goes too and recursing into the parent that loses it.
    pub fn remove_customer<R: Rng + ?Sized>(&mut self, id: NodeId, k: usize, rng: &mut R) -> Result<()> {
        let mut pending = Vec::new();
        self.remove_chain(id, k, rng, &mut pending)
    }

    /// Removes an observed token of dish `k` from a leaf.
    pub fn remove_data<R: Rng + ?Sized>(&mut self, id: NodeId, k: usize, rng: &mut R) -> Result<()> {
        if self.nodes[id].direct(k) == 0 {
            return Err(Error::InvalidState(format!(
                "{}: no observed token of dish {k}",
                self.nodes[id].name
            )));
        }
        self.nodes[id].direct[k] -= 1;
        let mut pending = Vec::new();
        self.remove_chain(id, k, rng, &mut pending)
    }

    /// Removal that records every node left with customers but no tables.
    /// Such a node must get a new table before the state is valid again.
    pub(crate) fn remove_chain<R: Rng + ?Sized>(
        &mut self,
        id: NodeId,
        k: usize,
        rng: &mut R,
        pending: &mut Vec<(NodeId, usize)>,
    ) -> Result<()> {
        let mut at = id;
        loop {
            let node = &self.nodes[at];
            let c = node.customers(k);
            if c == 0 {
                return Err(Error::InvalidState(format!(
                    "{}: no customer of dish {k} to remove",
                    node.name
                )));
            }
            // indicator drawn from the counts before the decrement
            let mut u = rng.random_range(0..c);
            let mut chosen = None;
            for slot in 0..node.slots() {
                let t = node.slot_tables(k, slot);
                if u < t {
                    chosen = Some(slot);
                    break;
                }
                u -= t;
            }
            let node = &mut self.nodes[at];
            node.drop_customer(k);
            let Some(slot) = chosen else {
                return Ok(());
            };
            node.drop_table(k, slot);
            if node.customers(k) > 0 && node.tables(k) == 0 {
                pending.push((at, k));
            }
            let parent = node.parents.get(slot).copied();
            match parent {
                Some(p) if self.nodes[p].explicit.is_none() => at = p,
                _ => return Ok(()),
            }
        }
    }

    pub fn log_f(&mut self, id: NodeId) -> Result<f64> {
        let (node, cache) = self.split(id);
        node.log_f(cache)
    }

    pub fn log_f_ratio(&mut self, id: NodeId, k: usize, dc: u32, dt: u32) -> Result<f64> {
        let (node, cache) = self.split(id);
        node.log_f_ratio(cache, k, dc, dt)
    }

    pub fn log_g(&self, id: NodeId) -> Result<f64> {
        self.nodes[id].log_g()
    }

    /// Log of the joint probability of all counts: every node's modular
    /// term, mixing-weight normalisers, and base contributions. Nodes with
    /// explicit vectors contribute through the tables their children send.
    pub fn log_joint(&mut self) -> Result<f64> {
        let mut total = 0.0;
        for id in 0..self.nodes.len() {
            let node = &self.nodes[id];
            if node.explicit.is_some() {
                continue;
            }
            total += self.log_f(id)?;
            let node = &self.nodes[id];
            if node.parents.len() > 1 {
                total += node.log_g()?;
            }
            if let Some(Base::Uniform { size }) = node.base {
                total -= node.total_tables() as f64 * (size as f64).ln();
            }
            for (slot, &p) in node.parents.iter().enumerate() {
                if let Some(vector) = &self.nodes[p].explicit {
                    for k in 0..node.dims() {
                        let t = node.slot_tables(k, slot);
                        if t > 0 {
                            let pk = vector.get(k).copied().unwrap_or(0.0);
                            total += t as f64 * pk.ln();
                        }
                    }
                }
            }
        }
        Ok(total)
    }

    /// Checks every count invariant. Nodes with explicit vectors are exempt
    /// from the conservation check, since their children no longer feed them.
    pub fn audit(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.nodes.len();
        let mut inflow: Vec<Vec<u64>> = self.nodes.iter().map(|x| vec![0; x.dims()]).collect();
        let mut has_child = vec![false; n];
        for (id, node) in self.nodes.iter().enumerate() {
            let mut report = |dish: Option<usize>, message: String| {
                out.push(Violation {
                    node: id,
                    name: node.name.clone(),
                    dish,
                    message,
                })
            };
            if node.parents.is_empty() && node.base.is_none() {
                report(None, "root without a base".into());
            }
            if node.parents.iter().any(|&p| p >= id) {
                report(None, "parent id does not precede the node".into());
                continue;
            }
            if !node.parents.is_empty() && node.lambda.len() != node.parents.len() {
                report(None, "mixing prior length differs from parent count".into());
            }
            let slots = node.slots();
            let dims = node.dims();
            if node.tables.len() != dims || node.direct.len() != dims || node.slot_tables.len() != dims * slots {
                report(None, "count arrays disagree in length".into());
                continue;
            }
            let mut c_sum = 0u64;
            let mut t_sum = 0u64;
            let mut slot_sum = vec![0u64; slots];
            for k in 0..dims {
                let c = node.customers[k];
                let t = node.tables[k];
                c_sum += c as u64;
                t_sum += t as u64;
                let mut s = 0u32;
                for (i, acc) in slot_sum.iter_mut().enumerate() {
                    let ti = node.slot_tables[k * slots + i];
                    s += ti;
                    *acc += ti as u64;
                }
                if s != t {
                    report(Some(k), format!("per-parent tables sum to {s}, total says {t}"));
                }
                if t > c {
                    report(Some(k), format!("{t} tables exceed {c} customers"));
                }
                if (c == 0) != (t == 0) {
                    report(Some(k), format!("{c} customers with {t} tables"));
                }
                if node.direct[k] > c {
                    report(Some(k), format!("{} observed tokens exceed {c} customers", node.direct[k]));
                }
                if node.base == Some(Base::Gem) && t > 1 {
                    report(Some(k), format!("{t} tables at a stick-breaking root"));
                }
                if let Some(Base::Uniform { size }) = node.base {
                    if k >= size && c > 0 {
                        report(Some(k), format!("dish outside base of size {size}"));
                    }
                }
            }
            if c_sum != node.total_customers || t_sum != node.total_tables || slot_sum != node.slot_totals {
                report(None, "cached totals out of date".into());
            }
            for (slot, &p) in node.parents.iter().enumerate() {
                has_child[p] = true;
                let row = &mut inflow[p];
                for k in 0..dims {
                    let t = node.slot_tables[k * slots + slot] as u64;
                    if t > 0 {
                        if k >= row.len() {
                            row.resize(k + 1, 0);
                        }
                        row[k] += t;
                    }
                }
            }
        }
        for (id, node) in self.nodes.iter().enumerate() {
            if node.explicit.is_some() {
                continue;
            }
            let dims = node.dims().max(inflow[id].len());
            for k in 0..dims {
                let expected = node.direct(k) as u64 + inflow[id].get(k).copied().unwrap_or(0);
                let c = node.customers(k) as u64;
                if expected != c {
                    out.push(Violation {
                        node: id,
                        name: node.name.clone(),
                        dish: Some(k),
                        message: format!(
                            "{c} customers but {expected} arrive from data and child tables"
                        ),
                    });
                }
            }
        }
        out
    }

    /// Resamples the concentration of every node accepted by `select`.
    pub fn sample_concentrations<R: Rng + ?Sized>(
        &mut self,
        prior: &HyperPrior,
        rng: &mut R,
        mut select: impl FnMut(NodeId, &PypNode) -> bool,
    ) {
        for id in 0..self.nodes.len() {
            if select(id, &self.nodes[id]) {
                sample_concentration(&mut self.nodes[id], prior, rng);
            }
        }
    }

    /// Posterior means of every node, computed top-down.
    pub fn posterior_means(&self, policy: NewTopicSlot) -> Vec<Vec<f64>> {
        let mut means: Vec<Vec<f64>> = Vec::with_capacity(self.nodes.len());
        // whether the vector's last entry is a new-dish slot
        let mut open: Vec<bool> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let (mean, has_slot) = if let Some(v) = &node.explicit {
                let mut v = v.clone();
                if policy == NewTopicSlot::Keep {
                    v.push(0.0);
                    (v, true)
                } else {
                    (v, false)
                }
            } else {
                match &node.base {
                    Some(Base::Gem) => {
                        let mut v = node.mean_given_base(&vec![0.0; node.dims()]);
                        v.push(node.base_fraction());
                        if policy == NewTopicSlot::RenormalizeRoot {
                            v.pop();
                            let s: f64 = v.iter().sum();
                            if s > 0.0 {
                                v.iter_mut().for_each(|x| *x /= s);
                            }
                            (v, false)
                        } else {
                            (v, true)
                        }
                    }
                    Some(Base::Uniform { size }) => {
                        (node.mean_given_base(&vec![1.0 / *size as f64; *size]), false)
                    }
                    None => {
                        let rho = node.mixing_mean();
                        let len = means[node.parents[0]].len();
                        let mut h = vec![0.0; len];
                        for (&p, &r) in node.parents.iter().zip(&rho) {
                            for (hk, &pk) in h.iter_mut().zip(&means[p]) {
                                *hk += r * pk;
                            }
                        }
                        (node.mean_given_base(&h), open[node.parents[0]])
                    }
                }
            };
            means.push(mean);
            open.push(has_slot);
        }
        if policy == NewTopicSlot::Discard {
            for (mean, has_slot) in means.iter_mut().zip(open) {
                if has_slot {
                    mean.pop();
                }
            }
        }
        means
    }

    /// Mean mass a node assigns to one dish it has never seen, for nodes
    /// below a uniform base.
    pub fn unseen_mass(&self, id: NodeId) -> f64 {
        let node = &self.nodes[id];
        if let Some(v) = &node.explicit {
            let _ = v;
            return 0.0;
        }
        match node.base {
            Some(Base::Uniform { size }) => node.base_fraction() / size as f64,
            Some(Base::Gem) => 0.0,
            None => {
                let rho = node.mixing_mean();
                let h: f64 = node
                    .parents
                    .iter()
                    .zip(&rho)
                    .map(|(&p, &r)| r * self.unseen_mass(p))
                    .sum();
                node.base_fraction() * h
            }
        }
    }

    /// Permutes the dish ids of a node; `old_of_new[j]` is the old id that
    /// becomes `j`. Ids not listed must hold no counts.
    pub(crate) fn remap_dishes(&mut self, id: NodeId, old_of_new: &[usize]) {
        let node = &mut self.nodes[id];
        let slots = node.slots();
        let mut customers = vec![0; old_of_new.len()];
        let mut tables = vec![0; old_of_new.len()];
        let mut direct = vec![0; old_of_new.len()];
        let mut slot_tables = vec![0; old_of_new.len() * slots];
        for (j, &old) in old_of_new.iter().enumerate() {
            customers[j] = node.customers(old);
            tables[j] = node.tables(old);
            direct[j] = node.direct(old);
            for s in 0..slots {
                slot_tables[j * slots + s] = node.slot_tables(old, s);
            }
        }
        node.customers = customers;
        node.tables = tables;
        node.direct = direct;
        node.slot_tables = slot_tables;
        node.rebuild_totals();
        if let Some(v) = &mut node.explicit {
            *v = old_of_new.iter().map(|&old| v.get(old).copied().unwrap_or(0.0)).collect();
        }
    }

    /// Clears every count held by a node.
    pub(crate) fn reset_counts(&mut self, id: NodeId) {
        let node = &mut self.nodes[id];
        node.customers.clear();
        node.tables.clear();
        node.direct.clear();
        node.slot_tables.clear();
        node.rebuild_totals();
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Snapshot(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut graph: PypGraph =
            serde_json::from_str(text).map_err(|e| Error::Snapshot(e.to_string()))?;
        graph.relink()?;
        Ok(graph)
    }
}
