use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use hpyp_core::corpus::{self, Corpus, TweetCorpus};
use hpyp_core::eval::{self, split_docs, split_tweets};
use hpyp_core::lda::{self, HpypLda};
use hpyp_core::synth::{self, SynthConfig, SynthCorpus, TweetSynth};
use hpyp_core::tntm::{self, TntmModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Format, ModelKind, Overrides, RunConfig};
use crate::SynthArgs;

/// Why a command stopped; each kind has its own exit status.
pub enum Failure {
    Config(Vec<String>),
    Audit(Vec<String>),
    Numeric(String),
    Other(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Other(_) => 1,
            Failure::Config(_) => 2,
            Failure::Audit(_) => 3,
            Failure::Numeric(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(errors) => {
                writeln!(f, "configuration has {} problem(s):", errors.len())?;
                errors.iter().try_for_each(|e| writeln!(f, "  {e}"))
            }
            Failure::Audit(violations) => {
                writeln!(f, "audit failed with {} violation(s):", violations.len())?;
                violations.iter().try_for_each(|v| writeln!(f, "  {v}"))
            }
            Failure::Numeric(msg) => writeln!(f, "error: {msg}"),
            Failure::Other(e) => writeln!(f, "error: {e:#}"),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<hpyp_core::Error>() {
            Some(hpyp_core::Error::Numeric(_)) => Failure::Numeric(format!("{e:#}")),
            _ => Failure::Other(e),
        }
    }
}

impl From<hpyp_core::Error> for Failure {
    fn from(e: hpyp_core::Error) -> Self {
        Failure::from(anyhow::Error::from(e))
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.into())
    }
}

type CmdResult<T = ()> = Result<T, Failure>;

/// A trained chain together with everything needed to evaluate it.
#[derive(Serialize, Deserialize)]
struct RunSnapshot {
    config: RunConfig,
    config_digest: String,
    chain: usize,
    vocab: Vec<String>,
    authors: Vec<String>,
    train: Vec<usize>,
    test: Vec<usize>,
    model: serde_json::Value,
}

enum Data {
    Plain(Corpus),
    Tweets(TweetCorpus),
}

impl Data {
    fn load(config: &RunConfig) -> anyhow::Result<Data> {
        let path = &config.corpus;
        Ok(match config.format {
            Format::Plain => Data::Plain(
                corpus::parse_plain(path).with_context(|| format!("reading corpus {}", path.display()))?,
            ),
            Format::Tweets => {
                let mut c = corpus::parse_tweets(path)
                    .with_context(|| format!("reading tweets {}", path.display()))?;
                if let Some(edges) = &config.edges {
                    corpus::parse_edges(edges, &mut c)
                        .with_context(|| format!("reading edges {}", edges.display()))?;
                }
                Data::Tweets(c)
            }
        })
    }

    fn len(&self) -> usize {
        match self {
            Data::Plain(c) => c.docs.len(),
            Data::Tweets(c) => c.tweets.len(),
        }
    }

    fn vocab(&self) -> &[String] {
        match self {
            Data::Plain(c) => c.vocab.tokens(),
            Data::Tweets(c) => c.vocab.tokens(),
        }
    }

    fn authors(&self) -> Vec<String> {
        match self {
            Data::Plain(_) => Vec::new(),
            Data::Tweets(c) => c.authors.clone(),
        }
    }

    /// Token sequences for the three-level model; tweets are merged.
    fn docs(&self, indices: &[usize]) -> Vec<Vec<u32>> {
        match self {
            Data::Plain(c) => c.subset(indices).docs,
            Data::Tweets(c) => c.subset(indices).merged_docs(),
        }
    }
}

enum Model {
    Lda(HpypLda),
    Tntm(TntmModel),
}

impl Model {
    fn from_snapshot(s: &RunSnapshot) -> anyhow::Result<Model> {
        let text = serde_json::to_string(&s.model)?;
        Ok(match s.config.model {
            ModelKind::Tntm => Model::Tntm(TntmModel::from_json(&text)?),
            _ => Model::Lda(HpypLda::from_json(&text)?),
        })
    }

    fn audit(&self) -> Vec<String> {
        let graph = match self {
            Model::Lda(m) => &m.state.graph,
            Model::Tntm(m) => &m.state.graph,
        };
        graph.audit().iter().map(ToString::to_string).collect()
    }
}

fn chain_rng(seed: u64, chain: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(chain as u64));
    rng.set_stream(stream);
    rng
}

const TRAIN_STREAM: u64 = 0;
const SPLIT_STREAM: u64 = 1;
const EVAL_STREAM: u64 = 2;

fn chain_dir(out: &Path, chain: usize) -> PathBuf {
    out.join(format!("chain-{chain}"))
}

fn chain_dirs(run: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for chain in 0.. {
        let dir = chain_dir(run, chain);
        if !dir.join("snapshot.json").is_file() {
            break;
        }
        dirs.push(dir);
    }
    if dirs.is_empty() {
        anyhow::bail!("{} holds no trained chains", run.display());
    }
    Ok(dirs)
}

fn read_snapshot(dir: &Path) -> anyhow::Result<RunSnapshot> {
    let path = dir.join("snapshot.json");
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn train(config_path: Option<&Path>, overrides: &Overrides, out: &Path) -> CmdResult {
    let text = match config_path {
        Some(p) => fs::read_to_string(p)
            .map_err(|e| Failure::Config(vec![format!("cannot read {}: {e}", p.display())]))?,
        None => String::new(),
    };
    let config = RunConfig::load(&text, overrides).map_err(Failure::Config)?;
    let data = Data::load(&config)?;
    let (train_idx, test_idx) =
        corpus::split_documents(data.len(), config.test_fraction, &mut chain_rng(config.seed, 0, SPLIT_STREAM))?;
    if train_idx.is_empty() {
        return Err(Failure::Config(vec![format!(
            "test_fraction {} leaves no training documents",
            config.test_fraction
        )]));
    }
    let digest = config.digest();
    let results: Vec<CmdResult<(RunSnapshot, String)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..config.chains)
            .map(|chain| {
                let (config, data, train_idx, test_idx, digest) = (&config, &data, &train_idx, &test_idx, &digest);
                scope.spawn(move || -> CmdResult<(RunSnapshot, String)> {
                    let mut rng = chain_rng(config.seed, chain, TRAIN_STREAM);
                    let (model, trace) = match (config.model, data) {
                        (ModelKind::Tntm, Data::Tweets(c)) => {
                            let sub = c.subset(train_idx);
                            let mut m = tntm::build_graph(&sub, &config.tntm_config(), &mut rng)?;
                            let rows = m.full_inference(config.iterations, &mut rng)?;
                            (m.to_json()?, tntm::trace_to_tsv(&rows))
                        }
                        (ModelKind::Tntm, Data::Plain(_)) => unreachable!("validated: tntm reads tweets"),
                        (_, data) => {
                            let docs = data.docs(train_idx);
                            let mut m = lda::build(&docs, data.vocab().len(), &config.lda_config(), &mut rng)?;
                            let rows = m.train(config.iterations, &mut rng)?;
                            (m.to_json()?, lda::trace_to_tsv(&rows))
                        }
                    };
                    let model = serde_json::from_str(&model).map_err(anyhow::Error::from)?;
                    Ok((
                        RunSnapshot {
                            config: config.clone(),
                            config_digest: digest.clone(),
                            chain,
                            vocab: data.vocab().to_vec(),
                            authors: data.authors(),
                            train: train_idx.clone(),
                            test: test_idx.clone(),
                            model,
                        },
                        trace,
                    ))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("chain thread panicked")).collect()
    });
    let mut violations = Vec::new();
    for result in results {
        let (snapshot, trace) = result?;
        let dir = chain_dir(out, snapshot.chain);
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("trace.tsv"), trace)?;
        let text = serde_json::to_string(&snapshot).map_err(anyhow::Error::from)?;
        fs::write(dir.join("snapshot.json"), text)?;
        let model = Model::from_snapshot(&snapshot)?;
        let found = model.audit();
        let topics = match &model {
            Model::Lda(m) => m.num_topics(),
            Model::Tntm(m) => m.num_topics(),
        };
        println!(
            "chain {} ({}): {} topics, snapshot {}",
            snapshot.chain,
            snapshot.config.model.name(),
            topics,
            dir.display()
        );
        violations.extend(found.into_iter().map(|v| format!("chain {}: {v}", snapshot.chain)));
    }
    if !violations.is_empty() {
        return Err(Failure::Audit(violations));
    }
    Ok(())
}

fn read_labels(path: &Path, documents: usize) -> anyhow::Result<Vec<usize>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading labels {}", path.display()))?;
    let mut ids: BTreeMap<String, usize> = BTreeMap::new();
    let mut labels = Vec::new();
    for line in text.lines() {
        let next = ids.len();
        labels.push(*ids.entry(line.trim().to_string()).or_insert(next));
    }
    if labels.len() != documents {
        anyhow::bail!("{} labels for {documents} documents", labels.len());
    }
    Ok(labels)
}

fn chain_metrics(snapshot: &RunSnapshot) -> CmdResult<Vec<(String, f64)>> {
    let config = &snapshot.config;
    let data = Data::load(config)?;
    if data.vocab() != snapshot.vocab.as_slice() {
        return Err(Failure::Other(anyhow::anyhow!(
            "corpus {} no longer matches the vocabulary it was trained on",
            config.corpus.display()
        )));
    }
    let mut rng = chain_rng(config.seed, snapshot.chain, EVAL_STREAM);
    let model = Model::from_snapshot(snapshot)?;
    let held = match (&model, &data) {
        (Model::Tntm(m), Data::Tweets(c)) => {
            eval::tntm_held_out(m, &c.subset(&snapshot.test).tweets, config.replicates, &mut rng)?
        }
        (Model::Lda(m), Data::Tweets(c)) => {
            let (observed, held) = split_tweets(&c.subset(&snapshot.test).tweets);
            eval::lda_held_out(m, &observed, &held, config.replicates, &mut rng)?
        }
        (Model::Lda(m), Data::Plain(_)) => {
            let (observed, held) = split_docs(&data.docs(&snapshot.test));
            eval::lda_held_out(m, &observed, &held, config.replicates, &mut rng)?
        }
        (Model::Tntm(_), Data::Plain(_)) => unreachable!("validated: tntm reads tweets"),
    };
    let mut metrics = vec![
        ("perplexity".to_string(), held.perplexity),
        ("held_out_tokens".to_string(), held.tokens as f64),
    ];
    let (topics, theta) = match &model {
        Model::Lda(m) => (m.num_topics(), m.recover_distributions().theta),
        Model::Tntm(m) => {
            if let Some(ll) = m.network_loglik() {
                metrics.push(("network_loglik".into(), ll));
            }
            (m.num_topics(), m.recover_distributions().theta)
        }
    };
    metrics.push(("topics".into(), topics as f64));
    if let Some(path) = &config.labels {
        let labels = read_labels(path, data.len())?;
        let classes: Vec<usize> = snapshot.train.iter().map(|&d| labels[d]).collect();
        let clusters: Vec<usize> = theta.iter().map(|t| eval::dominant_topic(t)).collect();
        metrics.push(("purity".into(), eval::purity(&classes, &clusters)?));
        metrics.push(("nmi".into(), eval::nmi(&classes, &clusters)?));
    }
    Ok(metrics)
}

#[derive(Serialize)]
struct MetricRecord<'a> {
    chain: &'a str,
    metric: &'a str,
    value: f64,
    config_digest: &'a str,
}

pub fn eval(run: &Path) -> CmdResult {
    let mut rows: Vec<(String, String, f64)> = Vec::new();
    let mut pooled: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut digest = String::new();
    let mut order = Vec::new();
    for dir in chain_dirs(run)? {
        let snapshot = read_snapshot(&dir)?;
        digest = snapshot.config_digest.clone();
        for (metric, value) in chain_metrics(&snapshot)? {
            if !pooled.contains_key(&metric) {
                order.push(metric.clone());
            }
            pooled.entry(metric.clone()).or_default().push(value);
            rows.push((snapshot.chain.to_string(), metric, value));
        }
    }
    for metric in order {
        let values = &pooled[&metric];
        rows.push(("pooled".into(), metric, values.iter().sum::<f64>() / values.len() as f64));
    }
    let mut tsv = String::from("chain\tmetric\tvalue\n");
    let mut jsonl = String::new();
    for (chain, metric, value) in &rows {
        tsv.push_str(&format!("{chain}\t{metric}\t{value}\n"));
        let record = MetricRecord {
            chain,
            metric,
            value: *value,
            config_digest: &digest,
        };
        jsonl.push_str(&serde_json::to_string(&record).map_err(anyhow::Error::from)?);
        jsonl.push('\n');
    }
    fs::write(run.join("eval.tsv"), &tsv)?;
    fs::write(run.join("eval.jsonl"), &jsonl)?;
    print!("{tsv}");
    Ok(())
}

pub fn label(run: &Path, top_hashtags: usize, top_words: usize) -> CmdResult {
    let mut out = String::from("chain\ttopic\thashtags\twords\n");
    for dir in chain_dirs(run)? {
        let snapshot = read_snapshot(&dir)?;
        let token = |id: &u32| snapshot.vocab.get(*id as usize).map_or("?", String::as_str);
        let join = |ids: &[u32], sep: &str| ids.iter().map(token).collect::<Vec<_>>().join(sep);
        let labels: Vec<(usize, String, String)> = match Model::from_snapshot(&snapshot)? {
            Model::Tntm(m) => m
                .topic_labels(top_hashtags, top_words)
                .iter()
                .map(|l| (l.topic, join(&l.hashtags, ","), join(&l.words, " ")))
                .collect(),
            Model::Lda(m) => m
                .recover_distributions()
                .phi
                .iter()
                .enumerate()
                .map(|(k, row)| {
                    let top: Vec<u32> = tntm::rank_top(row, top_words).into_iter().map(|w| w as u32).collect();
                    (k, String::new(), join(&top, " "))
                })
                .collect(),
        };
        for (topic, hashtags, words) in labels {
            out.push_str(&format!("{}\t{topic}\t{hashtags}\t{words}\n", snapshot.chain));
        }
    }
    fs::write(run.join("labels.tsv"), &out)?;
    print!("{out}");
    Ok(())
}

pub fn audit(run: &Path) -> CmdResult {
    let mut violations = Vec::new();
    for dir in chain_dirs(run)? {
        let snapshot = read_snapshot(&dir)?;
        let found = Model::from_snapshot(&snapshot)?.audit();
        println!("chain {}: {} violation(s)", snapshot.chain, found.len());
        violations.extend(found.into_iter().map(|v| format!("chain {}: {v}", snapshot.chain)));
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Failure::Audit(violations))
    }
}

pub fn synth(args: &SynthArgs) -> CmdResult {
    let config = SynthConfig {
        topics: args.topics,
        docs: args.docs,
        vocab_size: args.vocab,
        words_per_doc: args.words_per_doc,
        tweets: args.authors.map(|authors| TweetSynth {
            authors,
            hashtags_per_tweet: args.hashtags_per_tweet,
            ..TweetSynth::default()
        }),
        ..SynthConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let (corpus, truth) = synth::synthesize(&config, &mut rng)?;
    fs::create_dir_all(&args.out)?;
    match corpus {
        SynthCorpus::Plain(c) => fs::write(args.out.join("corpus.txt"), c.to_text())?,
        SynthCorpus::Tweets(c) => {
            fs::write(args.out.join("tweets.tsv"), c.to_text())?;
            fs::write(args.out.join("edges.tsv"), c.edges_to_text())?;
        }
    }
    let labels: String = truth.labels.iter().map(|l| format!("{l}\n")).collect();
    fs::write(args.out.join("labels.txt"), labels)?;
    let truth = serde_json::to_string(&truth).map_err(anyhow::Error::from)?;
    fs::write(args.out.join("truth.json"), truth)?;
    println!("wrote synthetic corpus to {}", args.out.display());
    Ok(())
}
