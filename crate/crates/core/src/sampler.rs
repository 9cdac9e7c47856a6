//! Collapsed blocked Gibbs sampling over a restaurant graph.
//!
//! Each token lives in a channel: a topic-side leaf per document and one
//! vocabulary-side node per topic, all vocabulary nodes of a channel sharing
//! a common parent. Resampling a token draws the topic together with the
//! table pattern it induces along both ancestor hierarchies. The two sides
//! share no nodes, so the weight of a topic factorises into a topic-side and
//! a vocabulary-side sum over seat patterns, each computed by a small
//! dynamic program over ancestors.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{log_add_exp, sample_log_weights};
use crate::pyp::{Base, HyperPrior, NodeId, PypGraph, Seat, Violation};

/// One token stream: documents whose topic-side leaves and per-topic
/// vocabulary nodes are given.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Channel {
    pub name: String,
    /// Topic-side leaf for each document.
    pub leaves: Vec<NodeId>,
    pub docs: Vec<Vec<u32>>,
    pub z: Vec<Vec<u32>>,
    /// Shared parent of every vocabulary node in this channel.
    pub vocab_parent: NodeId,
    /// Vocabulary node for each topic id.
    pub vocab_nodes: Vec<NodeId>,
    pub vocab_class: String,
    pub vocab_discount: f64,
    pub vocab_concentration: f64,
}

impl Channel {
    pub fn tokens(&self) -> usize {
        self.docs.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopicState {
    pub graph: PypGraph,
    pub channels: Vec<Channel>,
    /// Nodes whose dishes are topics.
    pub topic_nodes: Vec<NodeId>,
    /// Topic ids in use are `0..num_topics`; some may be empty until the
    /// next compaction.
    pub num_topics: usize,
    /// Tokens currently assigned to each topic, over all channels.
    pub topic_tokens: Vec<u64>,
    /// When set, the topic set is fixed: no new topics and no compaction.
    pub frozen: bool,
    pub max_topics: Option<usize>,
    pub hyper: HyperPrior,
    #[serde(skip)]
    scratch: Scratch,
}

#[derive(Debug, Clone, Default)]
struct Scratch {
    pending: Vec<(NodeId, usize)>,
    topic_pending: Vec<NodeId>,
    vocab_pending: Vec<NodeId>,
    topic_memo: Vec<(NodeId, usize, f64)>,
    vocab_memo: Vec<(NodeId, usize, f64)>,
    consts: Vec<(NodeId, f64, f64)>,
    candidates: Vec<usize>,
    weights: Vec<f64>,
    options: Vec<(Seat, f64)>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Topic,
    Vocab,
}

/// Where a table opened from a node's slot is served.
enum Target {
    Node(NodeId),
    Explicit(f64),
    Gem,
    Uniform(usize),
}

impl TopicState {
    pub fn new(
        graph: PypGraph,
        channels: Vec<Channel>,
        topic_nodes: Vec<NodeId>,
        hyper: HyperPrior,
    ) -> Self {
        TopicState {
            graph,
            channels,
            topic_nodes,
            num_topics: 0,
            topic_tokens: Vec::new(),
            frozen: false,
            max_topics: None,
            hyper,
            scratch: Scratch::default(),
        }
    }

    /// Topics that currently hold at least one token.
    pub fn live_topics(&self) -> usize {
        self.topic_tokens.iter().filter(|&&n| n > 0).count()
    }

    /// Assigns every token a uniformly random topic in `0..k_init` and seats
    /// the induced counts bottom-up with about half as many tables as
    /// customers at every node.
    pub fn initialise<R: Rng + ?Sized>(&mut self, k_init: usize, rng: &mut R) -> Result<()> {
        if k_init == 0 {
            return Err(Error::Domain("initial topic count must be positive".into()));
        }
        for id in 0..self.graph.len() {
            self.graph.reset_counts(id);
        }
        self.num_topics = 0;
        self.topic_tokens.clear();
        for ch in 0..self.channels.len() {
            let channel = &mut self.channels[ch];
            channel.z = channel
                .docs
                .iter()
                .map(|doc| doc.iter().map(|_| rng.random_range(0..k_init) as u32).collect())
                .collect();
        }
        self.ensure_topics(k_init)?;
        self.reseat_from_assignments()
    }

    /// Rebuilds every count from the current assignments, with table counts
    /// set to half the customer counts (rounded up).
    pub fn reseat_from_assignments(&mut self) -> Result<()> {
        for id in 0..self.graph.len() {
            self.graph.reset_counts(id);
        }
        self.topic_tokens = vec![0; self.num_topics];
        for ch in 0..self.channels.len() {
            for d in 0..self.channels[ch].docs.len() {
                for n in 0..self.channels[ch].docs[d].len() {
                    let k = self.channels[ch].z[d][n] as usize;
                    let w = self.channels[ch].docs[d][n] as usize;
                    if k >= self.num_topics {
                        return Err(Error::Domain(format!("topic {k} out of range")));
                    }
                    let leaf = self.channels[ch].leaves[d];
                    let vocab = self.channels[ch].vocab_nodes[k];
                    for (node, dish) in [(leaf, k), (vocab, w)] {
                        let node = self.graph.node_mut(node);
                        node.ensure_dims(dish + 1);
                        node.direct[dish] += 1;
                    }
                    self.topic_tokens[k] += 1;
                }
            }
        }
        half_seat(&mut self.graph);
        Ok(())
    }

    /// Makes sure topic ids `0..k` exist, creating vocabulary nodes as needed.
    pub fn ensure_topics(&mut self, k: usize) -> Result<()> {
        while self.num_topics < k {
            let id = self.num_topics;
            for ch in 0..self.channels.len() {
                if self.channels[ch].vocab_nodes.len() <= id {
                    let c = &self.channels[ch];
                    let name = format!("{}[{id}]", c.vocab_class);
                    let (class, a, b, parent) =
                        (c.vocab_class.clone(), c.vocab_discount, c.vocab_concentration, c.vocab_parent);
                    let node = self.graph.add_child(name, class, a, b, &[parent], &[])?;
                    self.channels[ch].vocab_nodes.push(node);
                }
            }
            self.num_topics += 1;
            self.topic_tokens.push(0);
        }
        Ok(())
    }

    /// Resamples the topic and seating of one token.
    pub fn resample_token<R: Rng + ?Sized>(
        &mut self,
        ch: usize,
        d: usize,
        n: usize,
        rng: &mut R,
    ) -> Result<()> {
        let leaf = self.channels[ch].leaves[d];
        let w = self.channels[ch].docs[d][n] as usize;
        let old = self.channels[ch].z[d][n] as usize;
        let old_vocab = self.channels[ch].vocab_nodes[old];
        let vocab_parent = self.channels[ch].vocab_parent;

        let mut s = std::mem::take(&mut self.scratch);
        s.pending.clear();
        self.graph.node_mut(leaf).direct[old] -= 1;
        self.graph.remove_chain(leaf, old, rng, &mut s.pending)?;
        let split = s.pending.len();
        self.graph.node_mut(old_vocab).direct[w] -= 1;
        self.graph.remove_chain(old_vocab, w, rng, &mut s.pending)?;
        self.topic_tokens[old] -= 1;
        s.topic_pending.clear();
        s.topic_pending.extend(s.pending[..split].iter().map(|&(node, _)| node));
        s.vocab_pending.clear();
        s.vocab_pending.extend(s.pending[split..].iter().map(|&(node, _)| node));
        let forced_old = !s.topic_pending.is_empty() || s.vocab_pending.first() == Some(&old_vocab);

        // candidate topics; the last may be a new one
        s.candidates.clear();
        let mut new_topic = None;
        if forced_old {
            s.candidates.push(old);
        } else if self.frozen {
            s.candidates.extend(0..self.num_topics);
        } else {
            s.candidates.extend((0..self.num_topics).filter(|&k| self.topic_tokens[k] > 0));
            let cap = self.max_topics.unwrap_or(usize::MAX);
            if s.candidates.len() < cap {
                let id = (0..self.num_topics)
                    .find(|&k| self.topic_tokens[k] == 0)
                    .unwrap_or(self.num_topics);
                new_topic = Some(id);
                s.candidates.push(id);
            }
        }

        s.consts.clear();
        s.vocab_memo.clear();
        s.weights.clear();
        let vocab_vpend_offset = usize::from(s.vocab_pending.first() == Some(&old_vocab));
        for i in 0..s.candidates.len() {
            let k = s.candidates[i];
            s.topic_memo.clear();
            let mut wt = self.weight(&mut s, Side::Topic, leaf, k, 0)?;
            if wt > f64::NEG_INFINITY {
                let wv = if Some(k) == new_topic {
                    // empty vocabulary node: its first table has ratio 1
                    self.weight(&mut s, Side::Vocab, vocab_parent, w, vocab_vpend_offset)?
                } else {
                    let node = self.channels[ch].vocab_nodes[k];
                    self.weight(&mut s, Side::Vocab, node, w, 0)?
                };
                wt += wv;
            }
            s.weights.push(wt);
        }
        let Some(pick) = sample_log_weights(rng, &s.weights) else {
            self.scratch = s;
            return Err(Error::Numeric(format!(
                "no valid proposal for token {n} of document {d} in channel {}",
                self.channels[ch].name
            )));
        };
        let k = s.candidates[pick];
        if Some(k) == new_topic && k == self.num_topics {
            self.ensure_topics(k + 1)?;
        }

        s.topic_memo.clear();
        self.seat(&mut s, Side::Topic, leaf, k, true, rng)?;
        let vocab = self.channels[ch].vocab_nodes[k];
        self.seat(&mut s, Side::Vocab, vocab, w, true, rng)?;
        self.channels[ch].z[d][n] = k as u32;
        self.topic_tokens[k] += 1;
        self.scratch = s;
        Ok(())
    }

    fn node_consts(&self, s: &mut Scratch, id: NodeId) -> (f64, f64) {
        if let Some(&(_, c, t)) = s.consts.iter().find(|e| e.0 == id) {
            return (c, t);
        }
        let node = self.graph.node(id);
        let out = (node.ln_customer_term(), node.ln_table_term());
        s.consts.push((id, out.0, out.1));
        out
    }

    fn target(&self, id: NodeId, slot: usize, dish: usize) -> Target {
        let node = self.graph.node(id);
        match node.parents.get(slot) {
            Some(&p) => match &self.graph.node(p).explicit {
                Some(v) => Target::Explicit(v.get(dish).copied().unwrap_or(0.0)),
                None => Target::Node(p),
            },
            None => match node.base {
                Some(Base::Gem) => Target::Gem,
                Some(Base::Uniform { size }) => Target::Uniform(size),
                None => unreachable!("graph roots carry a base"),
            },
        }
    }

    /// Log of the summed weight of every valid seat pattern that starts by
    /// adding a customer of `dish` at `id`, given that the first `j` pending
    /// nodes of this side have been visited.
    fn weight(&mut self, s: &mut Scratch, side: Side, id: NodeId, dish: usize, j: usize) -> Result<f64> {
        let memo = match side {
            Side::Topic => &s.topic_memo,
            Side::Vocab => &s.vocab_memo,
        };
        if let Some(&(_, _, v)) = memo.iter().find(|e| e.0 == id && e.1 == j) {
            return Ok(v);
        }
        let out = self.weight_uncached(s, side, id, dish, j)?;
        match side {
            Side::Topic => s.topic_memo.push((id, j, out)),
            Side::Vocab => s.vocab_memo.push((id, j, out)),
        }
        Ok(out)
    }

    fn weight_uncached(
        &mut self,
        s: &mut Scratch,
        side: Side,
        id: NodeId,
        dish: usize,
        j: usize,
    ) -> Result<f64> {
        let mut total = f64::NEG_INFINITY;
        let Some((must_open, j2)) = pending_step(s, side, id, j) else {
            return Ok(total);
        };
        let m = pending_len(s, side);
        let (lc, lt) = self.node_consts(s, id);
        let slots = self.graph.node(id).slots();
        if !must_open && j2 == m && self.graph.node(id).tables(dish) > 0 {
            let (node, cache) = self.graph.split(id);
            total = node.add_ratio(cache, dish, false, lc, lt)?;
        }
        let open = {
            let (node, cache) = self.graph.split(id);
            node.add_ratio(cache, dish, true, lc, lt)?
        };
        for slot in 0..slots {
            let tail = self.tail_weight(s, side, id, slot, dish, j2, m)?;
            if tail > f64::NEG_INFINITY {
                let g = self.graph.node(id).log_g_ratio(slot);
                total = log_add_exp(total, open + g + tail);
            }
        }
        Ok(total)
    }

    #[allow(clippy::too_many_arguments)]
    fn tail_weight(
        &mut self,
        s: &mut Scratch,
        side: Side,
        id: NodeId,
        slot: usize,
        dish: usize,
        j: usize,
        m: usize,
    ) -> Result<f64> {
        Ok(match self.target(id, slot, dish) {
            Target::Node(p) => return self.weight(s, side, p, dish, j),
            _ if j != m => f64::NEG_INFINITY,
            Target::Explicit(p) => p.ln(),
            Target::Gem if self.graph.node(id).tables(dish) == 0 => 0.0,
            Target::Gem => f64::NEG_INFINITY,
            Target::Uniform(size) if dish < size => -(size as f64).ln(),
            Target::Uniform(_) => f64::NEG_INFINITY,
        })
    }

    /// Draws a seat pattern for `dish` starting at `id` and applies it.
    fn seat<R: Rng + ?Sized>(
        &mut self,
        s: &mut Scratch,
        side: Side,
        start: NodeId,
        dish: usize,
        data: bool,
        rng: &mut R,
    ) -> Result<()> {
        let mut id = start;
        let mut j = 0;
        let mut first = data;
        loop {
            let Some((must_open, j2)) = pending_step(s, side, id, j) else {
                return Err(Error::Numeric("seat pattern left the valid region".into()));
            };
            let m = pending_len(s, side);
            let (lc, lt) = self.node_consts(s, id);
            let mut options = std::mem::take(&mut s.options);
            options.clear();
            if !must_open && j2 == m && self.graph.node(id).tables(dish) > 0 {
                let (node, cache) = self.graph.split(id);
                options.push((Seat::Join, node.add_ratio(cache, dish, false, lc, lt)?));
            }
            let open = {
                let (node, cache) = self.graph.split(id);
                node.add_ratio(cache, dish, true, lc, lt)?
            };
            for slot in 0..self.graph.node(id).slots() {
                let tail = self.tail_weight(s, side, id, slot, dish, j2, m)?;
                let g = self.graph.node(id).log_g_ratio(slot);
                options.push((Seat::Open(slot), open + g + tail));
            }
            let weights: Vec<f64> = options.iter().map(|o| o.1).collect();
            let choice = sample_log_weights(rng, &weights)
                .ok_or_else(|| Error::Numeric("no valid seat for the chosen topic".into()))?;
            let seat = options[choice].0;
            s.options = options;
            let next = if first {
                first = false;
                self.graph.add_data(id, dish, seat)?
            } else {
                self.graph.add_customer(id, dish, seat)?
            };
            j = j2;
            match next {
                Some(p) => id = p,
                None => return Ok(()),
            }
        }
    }

    /// Renumbers live topics densely, in order of their current ids, and
    /// moves vocabulary nodes of empty topics to the end of the pool.
    pub fn compact(&mut self) {
        if self.frozen {
            return;
        }
        let live: Vec<usize> = (0..self.num_topics).filter(|&k| self.topic_tokens[k] > 0).collect();
        if live.len() == self.num_topics {
            return;
        }
        let mut new_of_old = vec![u32::MAX; self.num_topics];
        for (j, &k) in live.iter().enumerate() {
            new_of_old[k] = j as u32;
        }
        for &id in &self.topic_nodes {
            self.graph.remap_dishes(id, &live);
        }
        for ch in 0..self.channels.len() {
            let channel = &mut self.channels[ch];
            let mut order: Vec<NodeId> = live.iter().map(|&k| channel.vocab_nodes[k]).collect();
            for (k, &node) in channel.vocab_nodes.iter().enumerate() {
                if k >= self.num_topics || self.topic_tokens[k] == 0 {
                    order.push(node);
                }
            }
            channel.vocab_nodes = order;
            for z in channel.z.iter_mut().flatten() {
                *z = new_of_old[*z as usize];
            }
            for (k, &node) in channel.vocab_nodes.iter().enumerate() {
                let name = format!("{}[{k}]", channel.vocab_class);
                self.graph.node_mut(node).name = name;
            }
        }
        self.topic_tokens = live.iter().map(|&k| self.topic_tokens[k]).collect();
        self.num_topics = live.len();
    }

    /// One pass over every token: each channel in turn, document by document.
    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        for ch in 0..self.channels.len() {
            for d in 0..self.channels[ch].docs.len() {
                for n in 0..self.channels[ch].docs[d].len() {
                    self.resample_token(ch, d, n, rng)?;
                }
            }
        }
        self.compact();
        Ok(())
    }

    /// Resamples concentrations of all nodes except those with explicit
    /// vectors and those rejected by `skip`.
    pub fn sample_concentrations<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
        skip: impl Fn(NodeId) -> bool,
    ) {
        let hyper = self.hyper;
        self.graph
            .sample_concentrations(&hyper, rng, |id, node| node.explicit.is_none() && !skip(id));
    }

    /// Log joint probability of assignments and counts.
    pub fn log_posterior(&mut self) -> Result<f64> {
        self.graph.log_joint()
    }

    /// Graph audit plus the per-document token checks.
    pub fn audit(&self) -> Vec<Violation> {
        let mut out = self.graph.audit();
        let mut per_topic = vec![0u64; self.num_topics];
        for channel in &self.channels {
            for (d, doc) in channel.docs.iter().enumerate() {
                for &k in &channel.z[d] {
                    if (k as usize) < per_topic.len() {
                        per_topic[k as usize] += 1;
                    }
                }
                if channel.z[d].len() != doc.len() {
                    let leaf = channel.leaves[d];
                    out.push(Violation {
                        node: leaf,
                        name: self.graph.node(leaf).name.clone(),
                        dish: None,
                        message: "assignment count differs from document length".into(),
                    });
                }
            }
        }
        // observed counts at leaves must equal the assignments they hold
        let mut expected: Vec<Vec<u32>> = vec![Vec::new(); self.graph.len()];
        for channel in &self.channels {
            for (d, doc) in channel.docs.iter().enumerate() {
                for (n, &w) in doc.iter().enumerate() {
                    let k = channel.z[d][n] as usize;
                    if k >= self.num_topics {
                        continue;
                    }
                    for (node, dish) in [(channel.leaves[d], k), (channel.vocab_nodes[k], w as usize)] {
                        let row = &mut expected[node];
                        if row.len() <= dish {
                            row.resize(dish + 1, 0);
                        }
                        row[dish] += 1;
                    }
                }
            }
        }
        for (id, row) in expected.iter().enumerate() {
            let node = self.graph.node(id);
            let dims = node.dims().max(row.len());
            for k in 0..dims {
                let want = row.get(k).copied().unwrap_or(0);
                if node.direct(k) != want {
                    out.push(Violation {
                        node: id,
                        name: node.name.clone(),
                        dish: Some(k),
                        message: format!("{} observed tokens recorded, {want} assigned", node.direct(k)),
                    });
                }
            }
        }
        if per_topic != self.topic_tokens {
            out.push(Violation {
                node: 0,
                name: "topics".into(),
                dish: None,
                message: "per-topic token totals out of date".into(),
            });
        }
        out
    }

    /// Serialised snapshot; the Stirling caches are rebuilt on load.
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Snapshot(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut state: TopicState =
            serde_json::from_str(text).map_err(|e| Error::Snapshot(e.to_string()))?;
        state.graph.relink()?;
        Ok(state)
    }
}

fn pending_len(s: &Scratch, side: Side) -> usize {
    match side {
        Side::Topic => s.topic_pending.len(),
        Side::Vocab => s.vocab_pending.len(),
    }
}

/// Whether `id` must open a table, and the pending index after visiting it.
/// `None` when visiting `id` with `j` pending nodes behind is impossible.
fn pending_step(s: &Scratch, side: Side, id: NodeId, j: usize) -> Option<(bool, usize)> {
    let pending = match side {
        Side::Topic => &s.topic_pending,
        Side::Vocab => &s.vocab_pending,
    };
    match pending.iter().position(|&p| p == id) {
        Some(q) if q == j => Some((true, j + 1)),
        Some(_) => None,
        None => Some((false, j)),
    }
}

/// Seats counts bottom-up from the observed (`direct`) counts: every node
/// gets about half as many tables as customers, split evenly over parents.
/// A stick-breaking root keeps a single table per dish.
pub(crate) fn half_seat(graph: &mut PypGraph) {
    for id in (0..graph.len()).rev() {
        let node = graph.node(id);
        if node.explicit.is_some() {
            continue;
        }
        let dims = node.dims();
        let slots = node.slots();
        let gem = node.base == Some(Base::Gem);
        let parents = node.parents.clone();
        let mut seats = Vec::with_capacity(dims);
        for k in 0..dims {
            let c = node.customers(k) + node.direct(k);
            let t = if gem { c.min(1) } else { c.div_ceil(2) };
            seats.push((c, t));
        }
        let mut shares = vec![0u32; slots];
        for (k, &(c, t)) in seats.iter().enumerate() {
            let base = t / slots as u32;
            let extra = t % slots as u32;
            for (i, share) in shares.iter_mut().enumerate() {
                *share = base + u32::from((i as u32) < extra);
            }
            graph.node_mut(id).set_counts(k, c, &shares);
            for (i, &p) in parents.iter().enumerate() {
                if shares[i] > 0 && graph.node(p).explicit.is_none() {
                    let parent = graph.node_mut(p);
                    parent.ensure_dims(k + 1);
                    let pc = parent.customers(k) + shares[i];
                    let pt: Vec<u32> = (0..parent.slots()).map(|s| parent.slot_tables(k, s)).collect();
                    parent.set_counts(k, pc, &pt);
                }
            }
        }
    }
}
