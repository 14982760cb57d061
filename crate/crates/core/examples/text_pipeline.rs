//! Turns a post corpus into a binary word-indicator design and fits it:
//! `cargo run --example text_pipeline -- [corpus.csv] [p]`.
//!
//! The corpus needs columns `id,text,likes`. Without arguments the small
//! corpus shipped with the tests is used.
use std::fs::File;
use std::path::PathBuf;

use tailreg::data::{extract_tail, loglog_points, select_threshold};
use tailreg::lasso::{fit_lasso, LassoConfig, Penalty};
use tailreg::text::{build_design, default_stopwords, read_corpus, select_vocabulary, WordBank};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let path = args.first().map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden/corpus.csv")
    });
    let p: usize = args.get(1).map_or(Ok(12), |s| s.parse())?;

    let corpus = read_corpus(File::open(&path)?)?;
    let bank = WordBank::build(&corpus);
    println!("{} posts, {} distinct words", corpus.len(), bank.len());
    for (word, s) in bank.ranked().into_iter().take(5) {
        println!("  {word:12} in {} posts ({} uses)", s.doc_count, s.count);
    }

    let spec = select_vocabulary(&bank, p, &default_stopwords())?;
    let data = build_design(&corpus, &spec)?;
    println!("vocabulary: {}", spec.vocabulary.join(" "));

    let plot = loglog_points(&data.y)?;
    println!("log-log slope over the top half of likes: {:.2}", plot.slope(0.5)?);

    let tail = extract_tail(&data, select_threshold(&data.y, 0.5)?)?;
    let fit = fit_lasso(&tail, &LassoConfig::with_penalty(Penalty::Rule(0.5)))?;
    for &j in &fit.support {
        println!("  {:12} {:+.3}", data.feature_name(j), fit.theta_hat[j]);
    }
    Ok(())
}
