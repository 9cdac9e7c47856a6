//! Corpus ingestion, serialisation and splitting.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Token strings mapped to dense ids in first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        Vocabulary::from_tokens(tokens)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(vocab: Vocabulary) -> Self {
        vocab.tokens
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Vocabulary { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn intern(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len() as u32;
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), id);
        id
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub vocab: Vocabulary,
    pub docs: Vec<Vec<u32>>,
}

impl Corpus {
    pub fn tokens(&self) -> usize {
        self.docs.iter().map(Vec::len).sum()
    }

    /// Documents at the given indices, sharing this corpus's vocabulary.
    pub fn subset(&self, indices: &[usize]) -> Corpus {
        Corpus {
            vocab: self.vocab.clone(),
            docs: indices.iter().map(|&i| self.docs[i].clone()).collect(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for doc in &self.docs {
            let line: Vec<&str> = doc.iter().map(|&w| self.vocab.tokens[w as usize].as_str()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

/// One document per line, whitespace tokenised. Blank lines are kept as
/// empty documents.
pub fn parse_plain_str(text: &str) -> Result<Corpus> {
    let mut vocab = Vocabulary::new();
    let docs = parse_plain_lines(text, &mut vocab);
    if vocab.is_empty() {
        return domain("corpus has no tokens");
    }
    Ok(Corpus { vocab, docs })
}

/// Parses documents against an existing vocabulary, adding any new tokens
/// after the existing ids.
pub fn parse_plain_with(text: &str, vocab: &mut Vocabulary) -> Vec<Vec<u32>> {
    parse_plain_lines(text, vocab)
}

fn parse_plain_lines(text: &str, vocab: &mut Vocabulary) -> Vec<Vec<u32>> {
    text.lines()
        .map(|line| line.split_whitespace().map(|t| vocab.intern(t)).collect())
        .collect()
}

pub fn parse_plain(path: impl AsRef<Path>) -> Result<Corpus> {
    parse_plain_str(&fs::read_to_string(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tweet {
    pub id: String,
    pub author: usize,
    pub hashtags: Vec<u32>,
    pub words: Vec<u32>,
}

/// Tweets over a vocabulary shared by words and hashtags, with an author
/// index and directed follower edges between authors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TweetCorpus {
    pub vocab: Vocabulary,
    pub authors: Vec<String>,
    pub tweets: Vec<Tweet>,
    /// Directed `(follower, followed)` pairs over author indices.
    pub edges: Vec<(usize, usize)>,
}

impl TweetCorpus {
    pub fn num_authors(&self) -> usize {
        self.authors.len()
    }

    pub fn author_index(&self, name: &str) -> Option<usize> {
        self.authors.iter().position(|a| a == name)
    }

    /// Dense directed adjacency; `x[i][j]` is true when `i` follows `j`.
    pub fn adjacency(&self) -> Vec<Vec<bool>> {
        let a = self.authors.len();
        let mut x = vec![vec![false; a]; a];
        for &(i, j) in &self.edges {
            x[i][j] = true;
        }
        x
    }

    pub fn subset(&self, indices: &[usize]) -> TweetCorpus {
        TweetCorpus {
            vocab: self.vocab.clone(),
            authors: self.authors.clone(),
            tweets: indices.iter().map(|&i| self.tweets[i].clone()).collect(),
            edges: self.edges.clone(),
        }
    }

    /// Every tweet as one document with hashtags appended after the words.
    pub fn merged_docs(&self) -> Vec<Vec<u32>> {
        self.tweets
            .iter()
            .map(|t| t.words.iter().chain(&t.hashtags).copied().collect())
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.tweets {
            let tags: Vec<String> = t
                .hashtags
                .iter()
                .map(|&h| format!("#{}", self.vocab.tokens[h as usize]))
                .collect();
            let words: Vec<&str> = t.words.iter().map(|&w| self.vocab.tokens[w as usize].as_str()).collect();
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}",
                t.id,
                self.authors[t.author],
                tags.join(","),
                words.join(" ")
            );
        }
        out
    }

    pub fn edges_to_text(&self) -> String {
        let mut out = String::new();
        for &(i, j) in &self.edges {
            let _ = writeln!(out, "{}\t{}", self.authors[i], self.authors[j]);
        }
        out
    }
}

/// Records are `doc id <TAB> author <TAB> hashtags <TAB> words`, hashtags
/// comma separated (a leading `#` is dropped), words space separated.
pub fn parse_tweets_str(text: &str) -> Result<TweetCorpus> {
    let mut vocab = Vocabulary::new();
    let mut authors: Vec<String> = Vec::new();
    let mut author_ids: HashMap<String, usize> = HashMap::new();
    let mut tweets = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected 4 tab-separated fields, found {}", fields.len()),
            });
        }
        let id = fields[0].trim();
        let author = fields[1].trim();
        if id.is_empty() || author.is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                message: "empty document id or author".into(),
            });
        }
        let author = *author_ids.entry(author.to_string()).or_insert_with(|| {
            authors.push(author.to_string());
            authors.len() - 1
        });
        let mut hashtags = Vec::new();
        for tag in fields[2].split(',') {
            let tag = tag.trim();
            let tag = tag.strip_prefix('#').unwrap_or(tag);
            if tag.is_empty() {
                continue;
            }
            if tag.contains(char::is_whitespace) {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("hashtag {tag:?} contains whitespace"),
                });
            }
            hashtags.push(vocab.intern(tag));
        }
        let words = fields[3].split_whitespace().map(|w| vocab.intern(w)).collect();
        tweets.push(Tweet {
            id: id.to_string(),
            author,
            hashtags,
            words,
        });
    }
    if tweets.is_empty() {
        return domain("tweet corpus is empty");
    }
    Ok(TweetCorpus {
        vocab,
        authors,
        tweets,
        edges: Vec::new(),
    })
}

pub fn parse_tweets(path: impl AsRef<Path>) -> Result<TweetCorpus> {
    parse_tweets_str(&fs::read_to_string(path)?)
}

/// Reads `follower <TAB> followed` lines. Both ends must be known authors.
pub fn parse_edges_str(text: &str, corpus: &mut TweetCorpus) -> Result<()> {
    let mut edges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(Error::Parse {
                line: i + 1,
                message: "expected two tab-separated author ids".into(),
            });
        }
        let mut ends = [0usize; 2];
        for (end, name) in ends.iter_mut().zip(&fields) {
            *end = corpus.author_index(name).ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("unknown author {name:?}"),
            })?;
        }
        if !edges.contains(&(ends[0], ends[1])) {
            edges.push((ends[0], ends[1]));
        }
    }
    corpus.edges = edges;
    Ok(())
}

pub fn parse_edges(path: impl AsRef<Path>, corpus: &mut TweetCorpus) -> Result<()> {
    parse_edges_str(&fs::read_to_string(path)?, corpus)
}

/// Disjoint document-level split. Returns sorted `(train, test)` indices,
/// with `round(n * test_fraction)` test documents.
pub fn split_documents<R: Rng + ?Sized>(
    n: usize,
    test_fraction: f64,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return domain(format!("test fraction {test_fraction} outside (0, 1)"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let n_test = (n as f64 * test_fraction).round() as usize;
    let mut test = order[..n_test].to_vec();
    let mut train = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

/// Splits a document's tokens by position: even positions are observed,
/// odd positions held out.
pub fn split_alternating(tokens: &[u32]) -> (Vec<u32>, Vec<u32>) {
    let observed = tokens.iter().step_by(2).copied().collect();
    let held_out = tokens.iter().skip(1).step_by(2).copied().collect();
    (observed, held_out)
}
