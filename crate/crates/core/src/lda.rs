//! The three-level topic model: a stick-breaking root over topics, a corpus
//! level topic distribution, per-document topic distributions, and per-topic
//! word distributions drawn around a uniform-based word prior.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{domain, Result};
use crate::pyp::{Base, HyperPrior, NewTopicSlot, NodeId, PypGraph};
use crate::sampler::{Channel, TopicState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeParams {
    pub discount: f64,
    pub concentration: f64,
}

impl NodeParams {
    pub const fn new(discount: f64, concentration: f64) -> Self {
        NodeParams {
            discount,
            concentration,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    /// Root over topics.
    pub mu: NodeParams,
    /// Corpus-level topic distribution.
    pub nu: NodeParams,
    /// Per-document topic distributions.
    pub theta: NodeParams,
    /// Per-topic word distributions.
    pub phi: NodeParams,
    /// Shared word prior.
    pub gamma: NodeParams,
    pub k_init: usize,
    pub max_topics: Option<usize>,
    pub hyper: HyperPrior,
    pub sample_concentrations: bool,
    pub new_topic_slot: NewTopicSlot,
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig {
            mu: NodeParams::new(0.1, 0.5),
            nu: NodeParams::new(0.1, 0.5),
            theta: NodeParams::new(0.1, 0.5),
            phi: NodeParams::new(0.7, 0.5),
            gamma: NodeParams::new(0.7, 0.5),
            k_init: 1,
            max_topics: None,
            hyper: HyperPrior::default(),
            sample_concentrations: true,
            new_topic_slot: NewTopicSlot::default(),
        }
    }
}

impl LdaConfig {
    /// The Dirichlet-process special case: every discount is zero.
    pub fn hdp() -> Self {
        let mut c = Self::default();
        c.set_all_discounts(0.0);
        c
    }

    pub fn set_all_discounts(&mut self, discount: f64) {
        for p in [&mut self.mu, &mut self.nu, &mut self.theta, &mut self.phi, &mut self.gamma] {
            p.discount = discount;
        }
    }
}

/// A row of the training trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub log_posterior: f64,
    pub topics: usize,
    /// Mean concentration per node class, in class order of first appearance.
    pub concentrations: Vec<(String, f64)>,
}

impl TraceRow {
    pub fn capture(iteration: usize, state: &mut TopicState) -> Result<Self> {
        Ok(TraceRow {
            iteration,
            log_posterior: state.log_posterior()?,
            topics: state.live_topics(),
            concentrations: class_means(&state.graph),
        })
    }
}

/// Mean concentration per node class.
pub fn class_means(graph: &PypGraph) -> Vec<(String, f64)> {
    let mut out: Vec<(String, f64, usize)> = Vec::new();
    for node in graph.nodes() {
        match out.iter_mut().find(|e| e.0 == node.class) {
            Some(e) => {
                e.1 += node.concentration;
                e.2 += 1;
            }
            None => out.push((node.class.clone(), node.concentration, 1)),
        }
    }
    out.into_iter().map(|(c, s, n)| (c, s / n as f64)).collect()
}

/// Tab-separated trace with a header line.
pub fn trace_to_tsv(rows: &[TraceRow]) -> String {
    let mut out = String::from("iteration\tlog_posterior\ttopics");
    if let Some(first) = rows.first() {
        for (class, _) in &first.concentrations {
            out.push_str(&format!("\tconcentration_{class}"));
        }
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{}\t{}\t{}", r.iteration, r.log_posterior, r.topics));
        for (_, b) in &r.concentrations {
            out.push_str(&format!("\t{b}"));
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HpypLda {
    pub state: TopicState,
    pub config: LdaConfig,
    pub vocab_size: usize,
    pub mu: NodeId,
    pub nu: NodeId,
    pub gamma: NodeId,
}

/// Posterior means of every distribution in the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distributions {
    pub theta: Vec<Vec<f64>>,
    pub phi: Vec<Vec<f64>>,
    pub nu: Vec<f64>,
    pub mu: Vec<f64>,
    pub gamma: Vec<f64>,
}

/// Builds the graph for `corpus` and draws the initial state.
pub fn init_state<R: Rng + ?Sized>(corpus: &Corpus, config: &LdaConfig, rng: &mut R) -> Result<HpypLda> {
    build(&corpus.docs, corpus.vocab.len(), config, rng)
}

pub fn build<R: Rng + ?Sized>(
    docs: &[Vec<u32>],
    vocab_size: usize,
    config: &LdaConfig,
    rng: &mut R,
) -> Result<HpypLda> {
    if docs.is_empty() || vocab_size == 0 {
        return domain("corpus is empty");
    }
    if docs.iter().flatten().any(|&w| w as usize >= vocab_size) {
        return domain("token id outside the vocabulary");
    }
    let mut g = PypGraph::new();
    let gamma = g.add_root(
        "gamma",
        "gamma",
        config.gamma.discount,
        config.gamma.concentration,
        Base::Uniform { size: vocab_size },
    )?;
    let mu = g.add_root("mu", "mu", config.mu.discount, config.mu.concentration, Base::Gem)?;
    let nu = g.add_child("nu", "nu", config.nu.discount, config.nu.concentration, &[mu], &[])?;
    let mut leaves = Vec::with_capacity(docs.len());
    for d in 0..docs.len() {
        leaves.push(g.add_child(
            format!("theta[{d}]"),
            "theta",
            config.theta.discount,
            config.theta.concentration,
            &[nu],
            &[],
        )?);
    }
    let mut topic_nodes = vec![mu, nu];
    topic_nodes.extend(&leaves);
    let channel = Channel {
        name: "words".into(),
        leaves,
        docs: docs.to_vec(),
        z: Vec::new(),
        vocab_parent: gamma,
        vocab_nodes: Vec::new(),
        vocab_class: "phi".into(),
        vocab_discount: config.phi.discount,
        vocab_concentration: config.phi.concentration,
    };
    let mut state = TopicState::new(g, vec![channel], topic_nodes, config.hyper);
    state.max_topics = config.max_topics;
    state.initialise(config.k_init, rng)?;
    Ok(HpypLda {
        state,
        config: config.clone(),
        vocab_size,
        mu,
        nu,
        gamma,
    })
}

impl HpypLda {
    pub fn resample_token<R: Rng + ?Sized>(&mut self, d: usize, n: usize, rng: &mut R) -> Result<()> {
        self.state.resample_token(0, d, n, rng)
    }

    /// One sweep over every token followed by concentration updates.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        self.state.sweep(rng)?;
        if self.config.sample_concentrations {
            self.state.sample_concentrations(rng, |_| false);
        }
        Ok(())
    }

    /// Runs `iterations` sweeps and returns one trace row per sweep.
    pub fn train<R: Rng + ?Sized>(&mut self, iterations: usize, rng: &mut R) -> Result<Vec<TraceRow>> {
        let mut trace = Vec::with_capacity(iterations);
        for it in 1..=iterations {
            self.step(rng)?;
            trace.push(TraceRow::capture(it, &mut self.state)?);
        }
        Ok(trace)
    }

    pub fn num_topics(&self) -> usize {
        self.state.num_topics
    }

    pub fn z(&self) -> &[Vec<u32>] {
        &self.state.channels[0].z
    }

    pub fn recover_distributions(&self) -> Distributions {
        self.recover_with(self.config.new_topic_slot)
    }

    pub fn recover_with(&self, policy: NewTopicSlot) -> Distributions {
        let means = self.state.graph.posterior_means(policy);
        let channel = &self.state.channels[0];
        Distributions {
            theta: channel.leaves.iter().map(|&id| means[id].clone()).collect(),
            phi: channel.vocab_nodes[..self.state.num_topics]
                .iter()
                .map(|&id| means[id].clone())
                .collect(),
            nu: means[self.nu].clone(),
            mu: means[self.mu].clone(),
            gamma: means[self.gamma].clone(),
        }
    }

    /// Mean concentration of the per-document nodes.
    pub fn theta_concentration(&self) -> f64 {
        let leaves = &self.state.channels[0].leaves;
        leaves
            .iter()
            .map(|&id| self.state.graph.node(id).concentration)
            .sum::<f64>()
            / leaves.len() as f64
    }

    /// Mass a topic's word distribution puts on each word id outside the
    /// training vocabulary.
    pub fn unseen_mass(&self, topic: usize) -> f64 {
        self.state.graph.unseen_mass(self.state.channels[0].vocab_nodes[topic])
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| crate::Error::Snapshot(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut model: HpypLda =
            serde_json::from_str(text).map_err(|e| crate::Error::Snapshot(e.to_string()))?;
        model.state.graph.relink()?;
        Ok(model)
    }
}
