//! Writes a synthetic dialogue corpus in the loader's JSON Lines format.
//!
//! `cargo run -p music-intent --example synthetic_corpus -- 300 7 > corpus.jsonl`

use std::io::{self, BufWriter};

use music_intent::corpus::write_dialogues;
use music_intent::synthetic::generate_corpus;

fn main() -> io::Result<()> {
    let mut args = std::env::args().skip(1);
    let n = args.next().and_then(|a| a.parse().ok()).unwrap_or(300);
    let seed = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);
    let dialogues = generate_corpus(n, seed);
    write_dialogues(BufWriter::new(io::stdout().lock()), &dialogues)
}
