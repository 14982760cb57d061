//! Posts with like counts to a binary word-indicator design.
//!
//! Tokens are whitespace-separated and lowercased; punctuation inside a token
//! is kept, so `#lgbt`, `lgbt+` and `it's` are distinct words. Vocabulary
//! ranking uses the number of posts containing a word, then its total count,
//! then the word itself.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::Deserialize;

use crate::data::{Dataset, Design, SparseBinary};
use crate::error::{Error, Result};

/// The shipped stopword file.
pub const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords.txt");

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct Post {
    pub id: String,
    pub text: String,
    pub likes: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub posts: Vec<Post>,
}

impl Corpus {
    pub fn new(posts: Vec<Post>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (i, p) in posts.iter().enumerate() {
            if !seen.insert(p.id.as_str()) {
                return Err(Error::Parse { line: i + 2, message: format!("duplicate post id '{}'", p.id) });
            }
        }
        Ok(Self { posts })
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }
}

/// Reads a CSV with columns `id,text,likes`.
pub fn read_corpus<R: Read>(reader: R) -> Result<Corpus> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut posts = Vec::new();
    for rec in rdr.deserialize() {
        posts.push(rec?);
    }
    Corpus::new(posts)
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WordStats {
    pub count: u64,
    pub doc_count: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WordBank {
    pub entries: BTreeMap<String, WordStats>,
}

fn merge(mut a: BTreeMap<String, WordStats>, b: BTreeMap<String, WordStats>) -> BTreeMap<String, WordStats> {
    for (w, s) in b {
        let e = a.entry(w).or_insert(WordStats { count: 0, doc_count: 0 });
        e.count += s.count;
        e.doc_count += s.doc_count;
    }
    a
}

impl WordBank {
    /// Counts are sums over posts, so the sharded build is order independent.
    pub fn build(corpus: &Corpus) -> Self {
        let entries = corpus
            .posts
            .par_iter()
            .map(|post| {
                let mut local: BTreeMap<String, WordStats> = BTreeMap::new();
                for tok in tokenize(&post.text) {
                    local.entry(tok).or_insert(WordStats { count: 0, doc_count: 1 }).count += 1;
                }
                local
            })
            .reduce(BTreeMap::new, merge);
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<WordStats> {
        self.entries.get(word).copied()
    }

    /// Words in ranking order.
    pub fn ranked(&self) -> Vec<(&str, WordStats)> {
        let mut v: Vec<(&str, WordStats)> = self.entries.iter().map(|(w, s)| (w.as_str(), *s)).collect();
        v.sort_by(|a, b| b.1.doc_count.cmp(&a.1.doc_count).then(b.1.count.cmp(&a.1.count)).then(a.0.cmp(b.0)));
        v
    }

    /// CSV `word,count,doc_count` in ranking order.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["word", "count", "doc_count"])?;
        for (word, s) in self.ranked() {
            wtr.write_record([word.to_string(), s.count.to_string(), s.doc_count.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub fn parse_stopwords(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

pub fn default_stopwords() -> BTreeSet<String> {
    parse_stopwords(DEFAULT_STOPWORDS)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSpec {
    pub vocabulary: Vec<String>,
    pub stopwords: BTreeSet<String>,
}

pub fn select_vocabulary(bank: &WordBank, p: usize, stopwords: &BTreeSet<String>) -> Result<FeatureSpec> {
    if p == 0 {
        return Err(Error::InvalidInput("vocabulary size must be at least 1".into()));
    }
    let vocabulary = bank
        .ranked()
        .into_iter()
        .filter(|(w, _)| !stopwords.contains(*w))
        .take(p)
        .map(|(w, _)| w.to_string())
        .collect();
    Ok(FeatureSpec { vocabulary, stopwords: stopwords.clone() })
}

/// Row `i` has a one in column `j` when post `i` contains vocabulary word `j`.
pub fn build_design(corpus: &Corpus, spec: &FeatureSpec) -> Result<Dataset> {
    if spec.vocabulary.is_empty() {
        return Err(Error::InvalidInput("empty vocabulary".into()));
    }
    let index: BTreeMap<&str, usize> = spec.vocabulary.iter().enumerate().map(|(j, w)| (w.as_str(), j)).collect();
    let rows: Vec<Vec<usize>> = corpus
        .posts
        .par_iter()
        .map(|post| {
            let cols: BTreeSet<usize> = tokenize(&post.text).iter().filter_map(|t| index.get(t.as_str()).copied()).collect();
            cols.into_iter().collect()
        })
        .collect();
    let x = SparseBinary::from_rows(spec.vocabulary.len(), rows)?;
    let y = corpus.posts.iter().map(|p| p.likes as f64).collect();
    Dataset::new(y, Design::SparseBinary(x), Some(spec.vocabulary.clone()))
}

pub fn write_vocabulary<W: Write>(vocabulary: &[String], mut w: W) -> Result<()> {
    for word in vocabulary {
        writeln!(w, "{word}")?;
    }
    Ok(())
}
