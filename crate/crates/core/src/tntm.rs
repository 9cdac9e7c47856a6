//! The tweet network topic model: words and hashtags drawn through an
//! author and tweet hierarchy, with a follower network generated from author
//! topic similarity.
//!
//! Node layout, created parents first:
//!
//! ```text
//! gamma (uniform over the shared vocabulary)
//! mu0 (stick-breaking root) -> mu1, nu[i] per author
//! nu[a_d] -> eta[d]
//! {mu1, eta[d]} -> theta_prime[d]   (hashtag topics)
//! {eta[d], theta_prime[d]} -> theta[d]   (word topics)
//! gamma -> psi[k] (words), psi_prime[k] (hashtags)
//! ```
//!
//! Inference runs in two phases. The first is plain collapsed Gibbs over both
//! channels. In the second, `mu0` and every `nu[i]` are replaced by explicit
//! probability vectors that a Metropolis-Hastings step updates jointly with
//! the latent link strengths, while the text sweeps condition on them.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::TweetCorpus;
use crate::error::{domain, Error, Result};
use crate::gp::{self, GpNetworkState, Kernel};
use crate::lda::{class_means, NodeParams};
use crate::math::{ln_dirichlet_pdf, sample_dirichlet};
use crate::pyp::{Base, HyperPrior, NewTopicSlot, NodeId, PypGraph};
use crate::sampler::{Channel, TopicState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    /// One shared author node; the network is not modelled.
    NoAuthor,
    /// Hashtags are treated as ordinary words.
    NoHashtag,
    /// Hashtag topics draw from the tweet node alone.
    NoMu1,
    /// Word topics draw from the tweet node alone.
    NoHashtagToWord,
    /// Every discount is zero.
    NoPowerLaw,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [
        Ablation::NoAuthor,
        Ablation::NoHashtag,
        Ablation::NoMu1,
        Ablation::NoHashtagToWord,
        Ablation::NoPowerLaw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::NoAuthor => "no-author",
            Ablation::NoHashtag => "no-hashtag",
            Ablation::NoMu1 => "no-mu1",
            Ablation::NoHashtagToWord => "no-hashtag-to-word",
            Ablation::NoPowerLaw => "no-power-law",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TntmConfig {
    pub mu0: NodeParams,
    pub mu1: NodeParams,
    pub nu: NodeParams,
    pub eta: NodeParams,
    pub theta_prime: NodeParams,
    pub theta: NodeParams,
    pub psi: NodeParams,
    pub psi_prime: NodeParams,
    pub gamma: NodeParams,
    /// Beta prior on the mixing weights of two-parent nodes.
    pub lambda: [f64; 2],
    pub kernel: Kernel,
    pub self_links: bool,
    /// Model the follower network (phase two of inference).
    pub network: bool,
    pub ablations: Vec<Ablation>,
    pub k_init: usize,
    pub max_topics: Option<usize>,
    pub hyper: HyperPrior,
    pub sample_concentrations: bool,
    pub new_topic_slot: NewTopicSlot,
    /// Sweeps before the network phase begins.
    pub mh_start: usize,
}

impl Default for TntmConfig {
    fn default() -> Self {
        let topic = NodeParams::new(0.1, 0.5);
        let word = NodeParams::new(0.7, 0.5);
        TntmConfig {
            mu0: topic,
            mu1: topic,
            nu: topic,
            eta: topic,
            theta_prime: topic,
            theta: topic,
            psi: word,
            psi_prime: word,
            gamma: word,
            lambda: [1.0, 1.0],
            kernel: Kernel::default(),
            self_links: false,
            network: true,
            ablations: Vec::new(),
            k_init: 1,
            max_topics: None,
            hyper: HyperPrior::default(),
            sample_concentrations: true,
            new_topic_slot: NewTopicSlot::default(),
            mh_start: 1000,
        }
    }
}

impl TntmConfig {
    pub fn has(&self, a: Ablation) -> bool {
        self.ablations.contains(&a)
    }

    pub fn params_mut(&mut self) -> [&mut NodeParams; 9] {
        [
            &mut self.mu0,
            &mut self.mu1,
            &mut self.nu,
            &mut self.eta,
            &mut self.theta_prime,
            &mut self.theta,
            &mut self.psi,
            &mut self.psi_prime,
            &mut self.gamma,
        ]
    }

    /// Whether the follower network takes part in inference.
    pub fn models_network(&self, authors: usize) -> bool {
        self.network && !self.has(Ablation::NoAuthor) && authors >= 2
    }
}

/// Explicit vectors and link strengths proposed by one network step.
#[derive(Debug, Clone, PartialEq)]
pub struct MhProposal {
    pub mu0: Vec<f64>,
    pub nu: Vec<Vec<f64>>,
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MhOutcome {
    pub accepted: bool,
    pub log_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TntmTraceRow {
    pub iteration: usize,
    pub log_posterior: f64,
    pub network_loglik: Option<f64>,
    pub accepted: Option<bool>,
    pub topics: usize,
    pub concentrations: Vec<(String, f64)>,
}

pub fn trace_to_tsv(rows: &[TntmTraceRow]) -> String {
    let mut out = String::from("iteration\tlog_posterior\tnetwork_loglik\taccepted\ttopics");
    if let Some(first) = rows.first() {
        for (class, _) in &first.concentrations {
            out.push_str(&format!("\tconcentration_{class}"));
        }
    }
    out.push('\n');
    for r in rows {
        let ll = r.network_loglik.map_or_else(|| "NA".to_string(), |v| v.to_string());
        let acc = r.accepted.map_or("NA", |a| if a { "1" } else { "0" });
        out.push_str(&format!("{}\t{}\t{ll}\t{acc}\t{}", r.iteration, r.log_posterior, r.topics));
        for (_, b) in &r.concentrations {
            out.push_str(&format!("\t{b}"));
        }
        out.push('\n');
    }
    out
}

/// Posterior means of every distribution in the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TntmDistributions {
    pub mu0: Vec<f64>,
    pub mu1: Option<Vec<f64>>,
    pub nu: Vec<Vec<f64>>,
    pub eta: Vec<Vec<f64>>,
    pub theta_prime: Option<Vec<Vec<f64>>>,
    pub theta: Vec<Vec<f64>>,
    pub psi: Vec<Vec<f64>>,
    pub psi_prime: Option<Vec<Vec<f64>>>,
    pub gamma: Vec<f64>,
}

/// Top-ranked token ids of one topic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicLabel {
    pub topic: usize,
    pub hashtags: Vec<u32>,
    pub words: Vec<u32>,
}

/// Indices of the `n` largest entries, largest first, lower index on ties.
pub fn rank_top(scores: &[f64], n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(n);
    idx
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TntmModel {
    pub state: TopicState,
    pub config: TntmConfig,
    pub vocab_size: usize,
    /// Author index of every tweet.
    pub authors: Vec<usize>,
    pub gamma: NodeId,
    pub mu0: NodeId,
    pub mu1: Option<NodeId>,
    pub nu: Vec<NodeId>,
    pub eta: Vec<NodeId>,
    pub theta_prime: Option<Vec<NodeId>>,
    pub theta: Vec<NodeId>,
    /// Channel index of words; hashtags, when modelled separately, follow.
    pub words: usize,
    pub hashtags: Option<usize>,
    pub network: Option<GpNetworkState>,
    /// Table counts of each author node when the network phase began.
    pub frozen_nu_tables: Vec<Vec<u32>>,
    pub network_phase: bool,
    /// Sweeps completed so far.
    pub iteration: usize,
    pub mh_accepted: usize,
    pub mh_proposed: usize,
}

/// Builds the model graph for `corpus` and draws the initial state.
pub fn build_graph<R: Rng + ?Sized>(
    corpus: &TweetCorpus,
    config: &TntmConfig,
    rng: &mut R,
) -> Result<TntmModel> {
    let mut config = config.clone();
    if config.has(Ablation::NoPowerLaw) {
        for p in config.params_mut() {
            p.discount = 0.0;
        }
    }
    let vocab_size = corpus.vocab.len();
    if corpus.tweets.is_empty() || vocab_size == 0 {
        return domain("tweet corpus is empty");
    }
    let num_authors = corpus.num_authors();
    for t in &corpus.tweets {
        if t.author >= num_authors {
            return domain(format!("tweet {} has unknown author index {}", t.id, t.author));
        }
        if t.words.iter().chain(&t.hashtags).any(|&w| w as usize >= vocab_size) {
            return domain(format!("tweet {} has a token outside the vocabulary", t.id));
        }
    }
    let separate_hashtags = !config.has(Ablation::NoHashtag);
    let shared_author = config.has(Ablation::NoAuthor);
    let with_mu1 = separate_hashtags && !config.has(Ablation::NoMu1);
    let hashtag_to_word = separate_hashtags && !config.has(Ablation::NoHashtagToWord);
    let lambda = config.lambda;

    let mut g = PypGraph::new();
    let p = |x: NodeParams| (x.discount, x.concentration);
    let (a, b) = p(config.gamma);
    let gamma = g.add_root("gamma", "gamma", a, b, Base::Uniform { size: vocab_size })?;
    let (a, b) = p(config.mu0);
    let mu0 = g.add_root("mu0", "mu0", a, b, Base::Gem)?;
    let mu1 = if with_mu1 {
        let (a, b) = p(config.mu1);
        Some(g.add_child("mu1", "mu1", a, b, &[mu0], &[])?)
    } else {
        None
    };
    let node_authors = if shared_author { 1 } else { num_authors.max(1) };
    let mut nu = Vec::with_capacity(node_authors);
    for i in 0..node_authors {
        let (a, b) = p(config.nu);
        nu.push(g.add_child(format!("nu[{i}]"), "nu", a, b, &[mu0], &[])?);
    }
    let d_count = corpus.tweets.len();
    let mut eta = Vec::with_capacity(d_count);
    let mut theta_prime = Vec::with_capacity(d_count);
    let mut theta = Vec::with_capacity(d_count);
    for (d, tweet) in corpus.tweets.iter().enumerate() {
        let author = if shared_author { 0 } else { tweet.author };
        let (a, b) = p(config.eta);
        let e = g.add_child(format!("eta[{d}]"), "eta", a, b, &[nu[author]], &[])?;
        eta.push(e);
        let tp = if separate_hashtags {
            let (a, b) = p(config.theta_prime);
            let parents: Vec<NodeId> = mu1.into_iter().chain([e]).collect();
            let node = g.add_child(format!("theta_prime[{d}]"), "theta_prime", a, b, &parents, &lambda)?;
            theta_prime.push(node);
            Some(node)
        } else {
            None
        };
        let (a, b) = p(config.theta);
        let parents: Vec<NodeId> = match tp {
            Some(tp) if hashtag_to_word => vec![e, tp],
            _ => vec![e],
        };
        theta.push(g.add_child(format!("theta[{d}]"), "theta", a, b, &parents, &lambda)?);
    }

    let mut topic_nodes = vec![mu0];
    topic_nodes.extend(mu1);
    topic_nodes.extend(&nu);
    topic_nodes.extend(&eta);
    topic_nodes.extend(&theta_prime);
    topic_nodes.extend(&theta);

    let word_docs: Vec<Vec<u32>> = if separate_hashtags {
        corpus.tweets.iter().map(|t| t.words.clone()).collect()
    } else {
        corpus.merged_docs()
    };
    let mut channels = vec![Channel {
        name: "words".into(),
        leaves: theta.clone(),
        docs: word_docs,
        z: Vec::new(),
        vocab_parent: gamma,
        vocab_nodes: Vec::new(),
        vocab_class: "psi".into(),
        vocab_discount: config.psi.discount,
        vocab_concentration: config.psi.concentration,
    }];
    if separate_hashtags {
        channels.push(Channel {
            name: "hashtags".into(),
            leaves: theta_prime.clone(),
            docs: corpus.tweets.iter().map(|t| t.hashtags.clone()).collect(),
            z: Vec::new(),
            vocab_parent: gamma,
            vocab_nodes: Vec::new(),
            vocab_class: "psi_prime".into(),
            vocab_discount: config.psi_prime.discount,
            vocab_concentration: config.psi_prime.concentration,
        });
    }
    let mut state = TopicState::new(g, channels, topic_nodes, config.hyper);
    state.max_topics = config.max_topics;
    state.initialise(config.k_init, rng)?;

    let network = if config.models_network(num_authors) {
        Some(GpNetworkState::new(&corpus.adjacency(), config.self_links, config.kernel)?)
    } else {
        None
    };
    Ok(TntmModel {
        state,
        vocab_size,
        authors: corpus.tweets.iter().map(|t| if shared_author { 0 } else { t.author }).collect(),
        gamma,
        mu0,
        mu1,
        nu,
        eta,
        theta_prime: separate_hashtags.then_some(theta_prime),
        theta,
        words: 0,
        hashtags: separate_hashtags.then_some(1),
        network,
        frozen_nu_tables: Vec::new(),
        network_phase: false,
        iteration: 0,
        mh_accepted: 0,
        mh_proposed: 0,
        config,
    })
}

impl TntmModel {
    pub fn num_topics(&self) -> usize {
        self.state.num_topics
    }

    pub fn resample_word<R: Rng + ?Sized>(&mut self, d: usize, n: usize, rng: &mut R) -> Result<()> {
        self.state.resample_token(self.words, d, n, rng)
    }

    pub fn resample_hashtag<R: Rng + ?Sized>(&mut self, d: usize, m: usize, rng: &mut R) -> Result<()> {
        match self.hashtags {
            Some(ch) => self.state.resample_token(ch, d, m, rng),
            None => domain("hashtags are not modelled separately in this configuration"),
        }
    }

    /// Fixes the topic set and replaces the root and author nodes by their
    /// posterior means, which the network step then updates.
    pub fn begin_network_phase(&mut self) -> Result<()> {
        if self.network_phase {
            return Ok(());
        }
        let Some(network) = &self.network else {
            return domain("the network is not modelled in this configuration");
        };
        self.state.compact();
        self.state.frozen = true;
        let k = self.state.num_topics;
        let means = self.state.graph.posterior_means(NewTopicSlot::RenormalizeRoot);
        let fix = |v: &[f64]| -> Vec<f64> {
            let mut v: Vec<f64> = (0..k).map(|i| v.get(i).copied().unwrap_or(0.0).max(f64::MIN_POSITIVE)).collect();
            let s: f64 = v.iter().sum();
            v.iter_mut().for_each(|x| *x /= s);
            v
        };
        let mu0 = fix(&means[self.mu0]);
        let nu: Vec<Vec<f64>> = self.nu.iter().map(|&id| fix(&means[id])).collect();
        self.frozen_nu_tables = self
            .nu
            .iter()
            .map(|&id| (0..k).map(|j| self.state.graph.node(id).tables(j)).collect())
            .collect();
        let (mean, _) = gp::mean_and_covariance(&nu, &network.pairs, &network.kernel)?;
        self.state.graph.set_explicit(self.mu0, mu0)?;
        for (&id, v) in self.nu.iter().zip(nu) {
            self.state.graph.set_explicit(id, v)?;
        }
        let network = self.network.as_mut().expect("checked above");
        network.mean = mean.iter().copied().collect();
        network.q = network.mean.clone();
        self.network_phase = true;
        Ok(())
    }

    fn explicit(&self, id: NodeId) -> &[f64] {
        self.state.graph.node(id).explicit.as_deref().unwrap_or(&[])
    }

    /// Current explicit root and author vectors.
    pub fn explicit_vectors(&self) -> Option<(Vec<f64>, Vec<Vec<f64>>)> {
        if !self.network_phase {
            return None;
        }
        Some((
            self.explicit(self.mu0).to_vec(),
            self.nu.iter().map(|&id| self.explicit(id).to_vec()).collect(),
        ))
    }

    /// Count exponents of the root vector: hashtag-level tables served by
    /// the root plus the author tables recorded when the phase began.
    pub fn root_exponents(&self) -> Vec<f64> {
        let k = self.state.num_topics;
        let mut out = vec![0.0; k];
        for (j, e) in out.iter_mut().enumerate() {
            if let Some(mu1) = self.mu1 {
                *e += self.state.graph.node(mu1).tables(j) as f64;
            }
            for row in &self.frozen_nu_tables {
                *e += row.get(j).copied().unwrap_or(0) as f64;
            }
        }
        out
    }

    /// Count exponents of each author vector: tables its tweets send up.
    pub fn author_exponents(&self) -> Vec<Vec<f64>> {
        let k = self.state.num_topics;
        let mut out = vec![vec![0.0; k]; self.nu.len()];
        for (d, &e) in self.eta.iter().enumerate() {
            let node = self.state.graph.node(e);
            for (j, x) in out[self.authors[d]].iter_mut().enumerate() {
                *x += node.tables(j) as f64;
            }
        }
        out
    }

    /// Draws fresh root and author vectors from Dirichlet proposals centred
    /// on the current ones, then link strengths by elliptical slice sampling
    /// under the prior they induce.
    pub fn propose<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<MhProposal> {
        let network = self.network_state()?;
        let graph = &self.state.graph;
        let dirichlet = |rng: &mut R, id: NodeId| {
            let beta = graph.node(id).concentration;
            let alpha: Vec<f64> = self.explicit(id).iter().map(|&p| beta * p).collect();
            sample_dirichlet(rng, &alpha)
        };
        let mu0 = dirichlet(rng, self.mu0);
        let nu: Vec<Vec<f64>> = self.nu.iter().map(|&id| dirichlet(rng, id)).collect();
        let (mean, cov) = gp::mean_and_covariance(&nu, &network.pairs, &network.kernel)?;
        let chol = gp::cholesky(&cov)?;
        let current = DVector::from_column_slice(&network.q);
        let links = &network.links;
        let (q, _) = gp::elliptical_slice_sample(
            &current,
            &mean,
            &chol,
            |q| gp::network_loglik(q.as_slice(), links),
            rng,
        )?;
        Ok(MhProposal {
            mu0,
            nu,
            q: q.iter().copied().collect(),
        })
    }

    /// Log acceptance ratio of moving to `p`: network posterior ratio, count
    /// likelihood ratios of the root and author vectors, and the reverse over
    /// forward Dirichlet proposal densities.
    pub fn mh_log_acceptance(&self, p: &MhProposal) -> Result<f64> {
        let network = self.network_state()?;
        let (mu0, nu) = self.explicit_vectors().expect("network phase is active");
        if p.mu0.len() != mu0.len() || p.nu.len() != nu.len() || p.q.len() != network.q.len() {
            return domain("proposal dimensions differ from the current state");
        }
        let mut log_a = network.log_posterior(&p.q, &p.nu)? - network.log_posterior(&network.q, &nu)?;
        let counts = |e: &[f64], new: &[f64], old: &[f64]| -> f64 {
            e.iter()
                .zip(new.iter().zip(old))
                .filter(|(&x, _)| x > 0.0)
                .map(|(&x, (&a, &b))| x * (a.ln() - b.ln()))
                .sum()
        };
        log_a += counts(&self.root_exponents(), &p.mu0, &mu0);
        for (e, (new, old)) in self.author_exponents().iter().zip(p.nu.iter().zip(&nu)) {
            log_a += counts(e, new, old);
        }
        let graph = &self.state.graph;
        let q_ratio = |id: NodeId, new: &[f64], old: &[f64]| -> f64 {
            let beta = graph.node(id).concentration;
            let scaled = |v: &[f64]| v.iter().map(|&x| beta * x).collect::<Vec<f64>>();
            ln_dirichlet_pdf(old, &scaled(new)) - ln_dirichlet_pdf(new, &scaled(old))
        };
        log_a += q_ratio(self.mu0, &p.mu0, &mu0);
        for (i, &id) in self.nu.iter().enumerate() {
            log_a += q_ratio(id, &p.nu[i], &nu[i]);
        }
        if log_a.is_nan() {
            return Err(Error::Numeric("acceptance ratio is not a number".into()));
        }
        Ok(log_a)
    }

    /// One joint Metropolis-Hastings update of the root vector, the author
    /// vectors, and the link strengths. On rejection nothing changes.
    pub fn mh_network_step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<MhOutcome> {
        if !self.network_phase {
            return domain("the network phase has not begun");
        }
        let proposal = self.propose(rng)?;
        let log_ratio = self.mh_log_acceptance(&proposal)?;
        let accepted = log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio;
        self.mh_proposed += 1;
        if accepted {
            self.mh_accepted += 1;
            self.accept(proposal)?;
        }
        Ok(MhOutcome { accepted, log_ratio })
    }

    fn accept(&mut self, p: MhProposal) -> Result<()> {
        let network = self.network.as_ref().expect("network phase is active");
        let (mean, _) = gp::mean_and_covariance(&p.nu, &network.pairs, &network.kernel)?;
        self.state.graph.set_explicit(self.mu0, p.mu0)?;
        for (&id, v) in self.nu.iter().zip(p.nu) {
            self.state.graph.set_explicit(id, v)?;
        }
        let network = self.network.as_mut().expect("network phase is active");
        network.q = p.q;
        network.mean = mean.iter().copied().collect();
        Ok(())
    }

    fn network_state(&self) -> Result<&GpNetworkState> {
        match &self.network {
            Some(n) if self.network_phase => Ok(n),
            Some(_) => domain("the network phase has not begun"),
            None => domain("the network is not modelled in this configuration"),
        }
    }

    /// Log likelihood of the observed links under the current strengths.
    pub fn network_loglik(&self) -> Option<f64> {
        self.network.as_ref().filter(|_| self.network_phase).map(GpNetworkState::loglik)
    }

    /// One iteration of the schedule: the network phase starts after
    /// `mh_start` sweeps; each network iteration runs one network step, then
    /// a text sweep, then concentration updates for every node without an
    /// explicit vector.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<TntmTraceRow> {
        if self.network.is_some() && !self.network_phase && self.iteration >= self.config.mh_start {
            self.begin_network_phase()?;
        }
        let accepted = if self.network_phase {
            Some(self.mh_network_step(rng)?.accepted)
        } else {
            None
        };
        self.state.sweep(rng)?;
        if self.config.sample_concentrations {
            self.state.sample_concentrations(rng, |_| false);
        }
        self.iteration += 1;
        Ok(TntmTraceRow {
            iteration: self.iteration,
            log_posterior: self.state.log_posterior()?,
            network_loglik: self.network_loglik(),
            accepted,
            topics: self.state.live_topics(),
            concentrations: class_means(&self.state.graph),
        })
    }

    /// Runs `iterations` more iterations of the schedule.
    pub fn full_inference<R: Rng + ?Sized>(&mut self, iterations: usize, rng: &mut R) -> Result<Vec<TntmTraceRow>> {
        (0..iterations).map(|_| self.step(rng)).collect()
    }

    pub fn recover_distributions(&self) -> TntmDistributions {
        self.recover_with(self.config.new_topic_slot)
    }

    pub fn recover_with(&self, policy: NewTopicSlot) -> TntmDistributions {
        let means = self.state.graph.posterior_means(policy);
        let pick = |ids: &[NodeId]| ids.iter().map(|&id| means[id].clone()).collect::<Vec<_>>();
        let k = self.state.num_topics;
        let vocab = |ch: usize| pick(&self.state.channels[ch].vocab_nodes[..k]);
        TntmDistributions {
            mu0: means[self.mu0].clone(),
            mu1: self.mu1.map(|id| means[id].clone()),
            nu: pick(&self.nu),
            eta: pick(&self.eta),
            theta_prime: self.theta_prime.as_deref().map(pick),
            theta: pick(&self.theta),
            psi: vocab(self.words),
            psi_prime: self.hashtags.map(vocab),
            gamma: means[self.gamma].clone(),
        }
    }

    /// Per topic, the `top_h` most probable hashtags and `top_w` most
    /// probable words. Hashtags are empty when they are not modelled apart.
    pub fn topic_labels(&self, top_h: usize, top_w: usize) -> Vec<TopicLabel> {
        let dist = self.recover_distributions();
        (0..self.state.num_topics)
            .map(|k| TopicLabel {
                topic: k,
                hashtags: dist
                    .psi_prime
                    .as_ref()
                    .map(|p| rank_top(&p[k], top_h).into_iter().map(|i| i as u32).collect())
                    .unwrap_or_default(),
                words: rank_top(&dist.psi[k], top_w).into_iter().map(|i| i as u32).collect(),
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Snapshot(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut model: TntmModel = serde_json::from_str(text).map_err(|e| Error::Snapshot(e.to_string()))?;
        model.state.graph.relink()?;
        Ok(model)
    }
}
