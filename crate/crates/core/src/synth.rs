//! Forward simulation of corpora from the generative models, with the true
//! distributions kept for comparison.
//!
//! Every Pitman-Yor draw over a discrete base uses truncated stick-breaking:
//! the sticks carry atoms drawn from the base, and the mass left after the
//! last stick is spread over the base itself.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Beta, Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Tweet, TweetCorpus, Vocabulary};
use crate::error::{domain, Result};
use crate::gp::{self, Kernel};
use crate::lda::NodeParams;
use crate::math::{argmax, sigmoid};
use crate::pyp::sample_stick_breaking;

/// Sticks used per Pitman-Yor draw.
pub const DEFAULT_STICKS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Topics kept from the stick-breaking root.
    pub topics: usize,
    pub docs: usize,
    pub vocab_size: usize,
    /// Mean word count per document; counts are `1 + Poisson(mean - 1)`.
    pub words_per_doc: f64,
    /// Topic-side levels, root first.
    pub root: NodeParams,
    pub corpus: NodeParams,
    pub doc: NodeParams,
    /// Per-topic word distributions and their shared prior.
    pub word: NodeParams,
    pub word_prior: NodeParams,
    pub sticks: usize,
    pub tweets: Option<TweetSynth>,
}

/// Extra settings for tweet corpora.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TweetSynth {
    pub authors: usize,
    /// Mean hashtag count per tweet (Poisson).
    pub hashtags_per_tweet: f64,
    pub lambda: [f64; 2],
    pub kernel: Kernel,
    pub self_links: bool,
    /// Added to every latent link strength.
    pub link_offset: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            topics: 10,
            docs: 200,
            vocab_size: 500,
            words_per_doc: 30.0,
            root: NodeParams::new(0.1, 5.0),
            corpus: NodeParams::new(0.1, 5.0),
            doc: NodeParams::new(0.1, 1.0),
            word: NodeParams::new(0.7, 5.0),
            word_prior: NodeParams::new(0.7, 50.0),
            sticks: DEFAULT_STICKS,
            tweets: None,
        }
    }
}

impl Default for TweetSynth {
    fn default() -> Self {
        TweetSynth {
            authors: 20,
            hashtags_per_tweet: 1.5,
            lambda: [1.0, 1.0],
            kernel: Kernel::default(),
            self_links: false,
            link_offset: 0.0,
        }
    }
}

/// True distributions behind a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub root: Vec<f64>,
    /// Corpus-level topics (LDA) or one row per author (tweets).
    pub nu: Vec<Vec<f64>>,
    /// Word-level topic distribution of each document.
    pub theta: Vec<Vec<f64>>,
    pub phi: Vec<Vec<f64>>,
    pub word_prior: Vec<f64>,
    /// Hashtag-level topic distributions and hashtag distributions.
    pub theta_prime: Option<Vec<Vec<f64>>>,
    pub psi_prime: Option<Vec<Vec<f64>>>,
    /// Latent link strengths over ordered author pairs.
    pub q: Option<Vec<f64>>,
    pub pairs: Option<Vec<(usize, usize)>>,
    /// Topic of each token, per document (words only).
    pub z: Vec<Vec<u32>>,
    /// Dominant true topic of each document.
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SynthCorpus {
    Plain(Corpus),
    Tweets(TweetCorpus),
}

fn params_ok(name: &str, p: NodeParams) -> Result<()> {
    if !(0.0..1.0).contains(&p.discount) || !(p.concentration > -p.discount) || !p.concentration.is_finite() {
        return domain(format!(
            "{name}: discount {} and concentration {} are not a valid pair",
            p.discount, p.concentration
        ));
    }
    Ok(())
}

/// Pitman-Yor draw over a finite base distribution.
pub fn sample_pyp<R: Rng + ?Sized>(p: NodeParams, base: &[f64], sticks: usize, rng: &mut R) -> Result<Vec<f64>> {
    let weights = sample_stick_breaking(p.discount, p.concentration, sticks, rng)?;
    let atoms = WeightedIndex::new(base).map_err(|e| crate::Error::Domain(format!("base distribution: {e}")))?;
    let rest = 1.0 - weights.iter().sum::<f64>();
    let mut out: Vec<f64> = base.iter().map(|&h| rest.max(0.0) * h).collect();
    for w in weights {
        out[atoms.sample(rng)] += w;
    }
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= s);
    Ok(out)
}

fn categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    WeightedIndex::new(p).expect("probability vector has positive mass").sample(rng)
}

fn length<R: Rng + ?Sized>(mean: f64, at_least_one: bool, rng: &mut R) -> usize {
    let shift = if at_least_one { 1.0 } else { 0.0 };
    let lam = mean - shift;
    if lam <= 0.0 {
        return shift as usize;
    }
    shift as usize + Poisson::new(lam).expect("positive mean").sample(rng) as usize
}

fn mix(a: &[f64], wa: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| wa * x + (1.0 - wa) * y).collect()
}

/// Draws a corpus, plain or tweets, with its ground truth.
pub fn synthesize<R: Rng + ?Sized>(config: &SynthConfig, rng: &mut R) -> Result<(SynthCorpus, GroundTruth)> {
    for (name, p) in [
        ("root", config.root),
        ("corpus", config.corpus),
        ("doc", config.doc),
        ("word", config.word),
        ("word_prior", config.word_prior),
    ] {
        params_ok(name, p)?;
    }
    if config.topics == 0 || config.docs == 0 || config.vocab_size == 0 || config.sticks == 0 {
        return domain("topics, docs, vocabulary size and sticks must be positive");
    }
    if !(config.words_per_doc >= 1.0) {
        return domain("documents need at least one word on average");
    }
    let k = config.topics;
    let v = config.vocab_size;
    let sticks = config.sticks;

    let mut root = sample_stick_breaking(config.root.discount, config.root.concentration, k, rng)?;
    let rest = 1.0 - root.iter().sum::<f64>();
    root[k - 1] += rest;
    let uniform = vec![1.0 / v as f64; v];
    let word_prior = sample_pyp(config.word_prior, &uniform, sticks, rng)?;
    let phi: Vec<Vec<f64>> = (0..k)
        .map(|_| sample_pyp(config.word, &word_prior, sticks, rng))
        .collect::<Result<_>>()?;
    let vocab = Vocabulary::from_tokens((0..v).map(|i| format!("w{i}")).collect());

    let Some(tw) = &config.tweets else {
        let nu = sample_pyp(config.corpus, &root, sticks, rng)?;
        let mut docs = Vec::with_capacity(config.docs);
        let mut theta = Vec::with_capacity(config.docs);
        let mut z_all = Vec::with_capacity(config.docs);
        for _ in 0..config.docs {
            let th = sample_pyp(config.doc, &nu, sticks, rng)?;
            let n = length(config.words_per_doc, true, rng);
            let z: Vec<u32> = (0..n).map(|_| categorical(&th, rng) as u32).collect();
            docs.push(z.iter().map(|&t| categorical(&phi[t as usize], rng) as u32).collect());
            z_all.push(z);
            theta.push(th);
        }
        let labels = theta.iter().map(|t| argmax(t).unwrap_or(0)).collect();
        let truth = GroundTruth {
            root,
            nu: vec![nu],
            theta,
            phi,
            word_prior,
            theta_prime: None,
            psi_prime: None,
            q: None,
            pairs: None,
            z: z_all,
            labels,
        };
        return Ok((SynthCorpus::Plain(Corpus { vocab, docs }), truth));
    };

    if tw.authors == 0 {
        return domain("tweet corpora need at least one author");
    }
    tw.kernel.validate()?;
    if !(tw.lambda[0] > 0.0 && tw.lambda[1] > 0.0) {
        return domain("mixing prior must be positive");
    }
    let mu1 = sample_pyp(config.corpus, &root, sticks, rng)?;
    let nu: Vec<Vec<f64>> = (0..tw.authors)
        .map(|_| sample_pyp(config.corpus, &root, sticks, rng))
        .collect::<Result<_>>()?;
    let psi_prime: Vec<Vec<f64>> = (0..k)
        .map(|_| sample_pyp(config.word, &word_prior, sticks, rng))
        .collect::<Result<_>>()?;
    let mix_prior = Beta::new(tw.lambda[0], tw.lambda[1]).expect("checked positive");
    let mut tweets = Vec::with_capacity(config.docs);
    let mut theta = Vec::with_capacity(config.docs);
    let mut theta_prime = Vec::with_capacity(config.docs);
    let mut z_all = Vec::with_capacity(config.docs);
    for d in 0..config.docs {
        let author = d % tw.authors;
        let eta = sample_pyp(config.doc, &nu[author], sticks, rng)?;
        let rho_prime = mix_prior.sample(rng);
        let tp = sample_pyp(config.doc, &mix(&mu1, rho_prime, &eta), sticks, rng)?;
        let rho = mix_prior.sample(rng);
        let th = sample_pyp(config.doc, &mix(&eta, rho, &tp), sticks, rng)?;
        let m = length(tw.hashtags_per_tweet, false, rng);
        let hashtags = (0..m)
            .map(|_| categorical(&psi_prime[categorical(&tp, rng)], rng) as u32)
            .collect();
        let n = length(config.words_per_doc, true, rng);
        let z: Vec<u32> = (0..n).map(|_| categorical(&th, rng) as u32).collect();
        let words = z.iter().map(|&t| categorical(&phi[t as usize], rng) as u32).collect();
        tweets.push(Tweet {
            id: format!("t{d}"),
            author,
            hashtags,
            words,
        });
        z_all.push(z);
        theta.push(th);
        theta_prime.push(tp);
    }

    let pairs = gp::author_pairs(tw.authors, tw.self_links);
    let (mean, cov) = gp::mean_and_covariance(&nu, &pairs, &tw.kernel)?;
    let chol = gp::cholesky(&cov)?;
    let z = DVector::from_iterator(pairs.len(), (0..pairs.len()).map(|_| StandardNormal.sample(rng)));
    let q: Vec<f64> = (mean + chol.l() * z).iter().map(|x| x + tw.link_offset).collect();
    let edges = pairs
        .iter()
        .zip(&q)
        .filter(|(_, &qv)| rng.random::<f64>() < sigmoid(qv))
        .map(|(&p, _)| p)
        .collect();
    let labels = theta.iter().map(|t| argmax(t).unwrap_or(0)).collect();
    let corpus = TweetCorpus {
        vocab,
        authors: (0..tw.authors).map(|i| format!("u{i}")).collect(),
        tweets,
        edges,
    };
    let truth = GroundTruth {
        root,
        nu,
        theta,
        phi,
        word_prior,
        theta_prime: Some(theta_prime),
        psi_prime: Some(psi_prime),
        q: Some(q),
        pairs: Some(pairs),
        z: z_all,
        labels,
    };
    Ok((SynthCorpus::Tweets(corpus), truth))
}
