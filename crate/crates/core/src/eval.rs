//! Held-out evaluation by document completion, and clustering metrics.
//!
//! A test document is split into an observed part and a held-out part. Its
//! topic distribution is estimated from the observed part by sequentially
//! assigning topics under the trained model (with half as many tables as
//! customers per topic) and averaging over replicate runs. The held-out
//! tokens are then scored under the estimate.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{split_alternating, Tweet};
use crate::error::{domain, Result};
use crate::lda::HpypLda;
use crate::math::{argmax, sample_log_weights};
use crate::pyp::{NewTopicSlot, NodeId, PypGraph};
use crate::tntm::TntmModel;

pub const DEFAULT_REPLICATES: usize = 20;

/// Everything needed to complete one document against fixed topics.
#[derive(Debug, Clone, Copy)]
pub struct Completion<'a> {
    /// Expected parent distribution of the document's topic node.
    pub base: &'a [f64],
    pub discount: f64,
    pub concentration: f64,
    /// Per-topic token distributions over the training vocabulary.
    pub phi: &'a [Vec<f64>],
    /// Per-topic mass on each token id outside the training vocabulary.
    pub unseen: &'a [f64],
}

impl Completion<'_> {
    fn mean(&self, customers: &[u32], tables: &[u32], total_c: u32, total_t: u32) -> Vec<f64> {
        let a = self.discount;
        let b = self.concentration;
        let new_mass = a * total_t as f64 + b;
        let denom = b + total_c as f64;
        self.base
            .iter()
            .enumerate()
            .map(|(k, &h)| (new_mass * h + customers[k] as f64 - a * tables[k] as f64) / denom)
            .collect()
    }

    pub fn token_probability(&self, k: usize, w: u32) -> f64 {
        self.phi[k].get(w as usize).copied().unwrap_or(self.unseen[k])
    }

    /// One sequential pass over `observed`; returns the resulting topic
    /// distribution.
    pub fn replicate<R: Rng + ?Sized>(&self, observed: &[u32], rng: &mut R) -> Vec<f64> {
        let k_len = self.base.len();
        let mut customers = vec![0u32; k_len];
        let mut tables = vec![0u32; k_len];
        let (mut total_c, mut total_t) = (0u32, 0u32);
        let mut weights = vec![0.0; k_len];
        for &w in observed {
            let theta = self.mean(&customers, &tables, total_c, total_t);
            for k in 0..k_len {
                weights[k] = (theta[k] * self.token_probability(k, w)).ln();
            }
            let Some(k) = sample_log_weights(rng, &weights) else {
                continue;
            };
            customers[k] += 1;
            total_c += 1;
            let t = customers[k].div_ceil(2);
            total_t += t - tables[k];
            tables[k] = t;
        }
        self.mean(&customers, &tables, total_c, total_t)
    }

    /// Monte Carlo mean of `replicates` completions.
    pub fn estimate<R: Rng + ?Sized>(&self, observed: &[u32], replicates: usize, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.base.len()];
        for _ in 0..replicates.max(1) {
            for (o, v) in out.iter_mut().zip(self.replicate(observed, rng)) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|x| *x /= replicates.max(1) as f64);
        out
    }

    /// `Σ_k θ_k φ_{k,w}`.
    pub fn predictive(&self, theta: &[f64], w: u32) -> f64 {
        theta.iter().enumerate().map(|(k, &t)| t * self.token_probability(k, w)).sum()
    }
}

/// `exp(-Σ log p / N)`.
pub fn perplexity(log_likelihood: f64, tokens: usize) -> Result<f64> {
    if tokens == 0 {
        return domain("perplexity of zero tokens");
    }
    Ok((-log_likelihood / tokens as f64).exp())
}

/// Perplexity of tokens with the given probabilities.
pub fn perplexity_of(probabilities: &[f64]) -> Result<f64> {
    perplexity(probabilities.iter().map(|p| p.ln()).sum(), probabilities.len())
}

/// Topic with the largest proportion; lowest id on ties.
pub fn dominant_topic(theta: &[f64]) -> usize {
    argmax(theta).unwrap_or(0)
}

fn check_labels(classes: &[usize], clusters: &[usize]) -> Result<()> {
    if classes.len() != clusters.len() {
        return domain(format!(
            "{} class labels but {} cluster labels",
            classes.len(),
            clusters.len()
        ));
    }
    if classes.is_empty() {
        return domain("no documents to score");
    }
    Ok(())
}

fn contingency(classes: &[usize], clusters: &[usize]) -> BTreeMap<(usize, usize), usize> {
    let mut out = BTreeMap::new();
    for (&s, &r) in classes.iter().zip(clusters) {
        *out.entry((r, s)).or_insert(0) += 1;
    }
    out
}

fn sizes(labels: &[usize]) -> BTreeMap<usize, usize> {
    let mut out = BTreeMap::new();
    for &l in labels {
        *out.entry(l).or_insert(0) += 1;
    }
    out
}

/// Fraction of documents whose cluster's majority class is their own.
/// `classes[d]` and `clusters[d]` label document `d`.
pub fn purity(classes: &[usize], clusters: &[usize]) -> Result<f64> {
    check_labels(classes, clusters)?;
    let mut best: BTreeMap<usize, usize> = BTreeMap::new();
    for ((r, _), n) in contingency(classes, clusters) {
        let e = best.entry(r).or_insert(0);
        *e = (*e).max(n);
    }
    Ok(best.values().sum::<usize>() as f64 / classes.len() as f64)
}

fn entropy(labels: &[usize]) -> f64 {
    let d = labels.len() as f64;
    sizes(labels)
        .values()
        .map(|&n| {
            let p = n as f64 / d;
            -p * p.log2()
        })
        .sum()
}

fn same_partition(a: &[usize], b: &[usize]) -> bool {
    let mut ab = BTreeMap::new();
    let mut ba = BTreeMap::new();
    a.iter()
        .zip(b)
        .all(|(&x, &y)| *ab.entry(x).or_insert(y) == y && *ba.entry(y).or_insert(x) == x)
}

/// Normalised mutual information in bits, `2 I(S;R) / (H(S) + H(R))`.
/// When either entropy is zero the result is 1 for identical partitions
/// and 0 otherwise.
pub fn nmi(classes: &[usize], clusters: &[usize]) -> Result<f64> {
    check_labels(classes, clusters)?;
    let h_s = entropy(classes);
    let h_r = entropy(clusters);
    if h_s == 0.0 || h_r == 0.0 {
        return Ok(if same_partition(classes, clusters) { 1.0 } else { 0.0 });
    }
    let d = classes.len() as f64;
    let cs = sizes(classes);
    let rs = sizes(clusters);
    let mi: f64 = contingency(classes, clusters)
        .into_iter()
        .map(|((r, s), n)| {
            let n = n as f64;
            n / d * (d * n / (rs[&r] as f64 * cs[&s] as f64)).log2()
        })
        .sum();
    Ok(2.0 * mi / (h_s + h_r))
}

/// Held-out scores of a set of test documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldOut {
    pub log_likelihood: f64,
    pub tokens: usize,
    pub perplexity: f64,
    /// Estimated topic distribution of each test document.
    pub theta: Vec<Vec<f64>>,
}

/// Splits every tweet channel by position and concatenates words before
/// hashtags, giving (observed, held-out) documents for single-channel models.
pub fn split_tweets(tweets: &[Tweet]) -> (Vec<Vec<u32>>, Vec<Vec<u32>>) {
    tweets
        .iter()
        .map(|t| {
            let (mut ow, mut hw) = split_alternating(&t.words);
            let (oh, hh) = split_alternating(&t.hashtags);
            ow.extend(oh);
            hw.extend(hh);
            (ow, hw)
        })
        .unzip()
}

pub fn split_docs(docs: &[Vec<u32>]) -> (Vec<Vec<u32>>, Vec<Vec<u32>>) {
    docs.iter().map(|d| split_alternating(d)).unzip()
}

/// Mean concentration over a set of nodes.
fn mean_concentration(graph: &PypGraph, ids: &[NodeId]) -> f64 {
    ids.iter().map(|&id| graph.node(id).concentration).sum::<f64>() / ids.len().max(1) as f64
}

fn renormalised(v: &[f64], k: usize) -> Vec<f64> {
    let mut v: Vec<f64> = v[..k].to_vec();
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
    v
}

/// Held-out perplexity of a three-level model. Test documents use the mean
/// trained per-document concentration.
pub fn lda_held_out<R: Rng + ?Sized>(
    model: &HpypLda,
    observed: &[Vec<u32>],
    held_out: &[Vec<u32>],
    replicates: usize,
    rng: &mut R,
) -> Result<HeldOut> {
    if observed.len() != held_out.len() {
        return domain("observed and held-out document counts differ");
    }
    let k = model.num_topics();
    let dist = model.recover_with(NewTopicSlot::RenormalizeRoot);
    let base = renormalised(&dist.nu, k);
    let unseen: Vec<f64> = (0..k).map(|j| model.unseen_mass(j)).collect();
    let completion = Completion {
        base: &base,
        discount: model.config.theta.discount,
        concentration: model.theta_concentration(),
        phi: &dist.phi,
        unseen: &unseen,
    };
    let mut log_likelihood = 0.0;
    let mut tokens = 0;
    let mut thetas = Vec::with_capacity(observed.len());
    for (obs, held) in observed.iter().zip(held_out) {
        let theta = completion.estimate(obs, replicates, rng);
        for &w in held {
            log_likelihood += completion.predictive(&theta, w).ln();
        }
        tokens += held.len();
        thetas.push(theta);
    }
    Ok(HeldOut {
        log_likelihood,
        tokens,
        perplexity: perplexity(log_likelihood, tokens)?,
        theta: thetas,
    })
}

fn mix(a: &[f64], wa: f64, b: &[f64], wb: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| wa * x + wb * y).collect()
}

/// Joint held-out perplexity of words and hashtags for test tweets, each
/// channel split by position. The denominator counts held-out words and
/// hashtags together. When hashtags are modelled apart, hashtag topics are
/// completed first and each replicate feeds the word-topic completion.
/// Returned topic distributions are the word-level ones.
pub fn tntm_held_out<R: Rng + ?Sized>(
    model: &TntmModel,
    tweets: &[Tweet],
    replicates: usize,
    rng: &mut R,
) -> Result<HeldOut> {
    let k = model.num_topics();
    let dist = model.recover_with(NewTopicSlot::RenormalizeRoot);
    let graph = &model.state.graph;
    let words = &model.state.channels[model.words];
    let unseen_of = |ids: &[NodeId]| -> Vec<f64> { ids[..k].iter().map(|&id| graph.unseen_mass(id)).collect() };
    let word_unseen = unseen_of(&words.vocab_nodes);
    let shared_author = model.nu.len() == 1;
    let lambda = model.config.lambda;
    let first_share = lambda[0] / (lambda[0] + lambda[1]);
    let nu_hat: Vec<Vec<f64>> = dist.nu.iter().map(|v| renormalised(v, k)).collect();
    let mu1_hat = dist.mu1.as_ref().map(|v| renormalised(v, k));
    let theta_params = (model.config.theta.discount, mean_concentration(graph, &model.theta));
    let word_parents = graph.node(model.theta[0]).parents.len();

    let mut log_likelihood = 0.0;
    let mut tokens = 0;
    let mut thetas = Vec::with_capacity(tweets.len());
    for tweet in tweets {
        let author = if shared_author { 0 } else { tweet.author };
        let Some(eta) = nu_hat.get(author) else {
            return domain(format!("tweet {} has unknown author index {}", tweet.id, tweet.author));
        };
        match (model.hashtags, &model.theta_prime) {
            (Some(ch), Some(tp_ids)) => {
                let tags = &model.state.channels[ch];
                let tag_unseen = unseen_of(&tags.vocab_nodes);
                let psi_prime = dist.psi_prime.as_ref().expect("hashtag channel present");
                let tp_base = match &mu1_hat {
                    Some(mu1) => mix(mu1, first_share, eta, 1.0 - first_share),
                    None => eta.clone(),
                };
                let tp = Completion {
                    base: &tp_base,
                    discount: model.config.theta_prime.discount,
                    concentration: mean_concentration(graph, tp_ids),
                    phi: psi_prime,
                    unseen: &tag_unseen,
                };
                let (obs_w, held_w) = split_alternating(&tweet.words);
                let (obs_h, held_h) = split_alternating(&tweet.hashtags);
                let mut theta_prime = vec![0.0; k];
                let mut theta = vec![0.0; k];
                let reps = replicates.max(1);
                for _ in 0..reps {
                    let tp_r = tp.replicate(&obs_h, rng);
                    let base = if word_parents == 2 {
                        mix(eta, first_share, &tp_r, 1.0 - first_share)
                    } else {
                        eta.clone()
                    };
                    let c = Completion {
                        base: &base,
                        discount: theta_params.0,
                        concentration: theta_params.1,
                        phi: &dist.psi,
                        unseen: &word_unseen,
                    };
                    let th_r = c.replicate(&obs_w, rng);
                    for j in 0..k {
                        theta_prime[j] += tp_r[j] / reps as f64;
                        theta[j] += th_r[j] / reps as f64;
                    }
                }
                let word_scorer = Completion {
                    base: eta,
                    discount: 0.0,
                    concentration: 1.0,
                    phi: &dist.psi,
                    unseen: &word_unseen,
                };
                for &w in &held_w {
                    log_likelihood += word_scorer.predictive(&theta, w).ln();
                }
                for &h in &held_h {
                    log_likelihood += tp.predictive(&theta_prime, h).ln();
                }
                tokens += held_w.len() + held_h.len();
                thetas.push(theta);
            }
            _ => {
                let (obs, held) = split_tweets(std::slice::from_ref(tweet));
                let c = Completion {
                    base: eta,
                    discount: theta_params.0,
                    concentration: theta_params.1,
                    phi: &dist.psi,
                    unseen: &word_unseen,
                };
                let theta = c.estimate(&obs[0], replicates, rng);
                for &w in &held[0] {
                    log_likelihood += c.predictive(&theta, w).ln();
                }
                tokens += held[0].len();
                thetas.push(theta);
            }
        }
    }
    Ok(HeldOut {
        log_likelihood,
        tokens,
        perplexity: perplexity(log_likelihood, tokens)?,
        theta: thetas,
    })
}
