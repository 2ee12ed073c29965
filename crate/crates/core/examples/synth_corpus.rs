//! Writes the synthetic Zipf-Markov corpus used by the degeneration
//! experiment.
//!
//! ```text
//! cargo run --release -p embgeo --example synth_corpus -- corpus.txt [tokens] [types] [zipf] [seed]
//! ```

use embgeo::corpus::{synthetic_corpus, SyntheticCorpusSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(path) = args.first() else {
        eprintln!("usage: synth_corpus <out.txt> [tokens] [types] [zipf_exponent] [seed]");
        std::process::exit(2);
    };
    let mut spec = SyntheticCorpusSpec::default();
    if let Some(v) = args.get(1) {
        spec.tokens = v.parse()?;
    }
    if let Some(v) = args.get(2) {
        spec.types = v.parse()?;
    }
    if let Some(v) = args.get(3) {
        spec.zipf_exponent = v.parse()?;
    }
    if let Some(v) = args.get(4) {
        spec.seed = v.parse()?;
    }
    let text = synthetic_corpus(&spec)?;
    std::fs::write(path, &text)?;
    println!("wrote {} sentences to {path}", text.lines().count());
    Ok(())
}
