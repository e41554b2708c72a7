//! Leak ingestion, cleaning, alphabets and fixed-width encoding.

mod alphabet;
mod leak;
pub mod synthetic;

pub use alphabet::{Alphabet, EncodedPassword, MASK_GLYPH};
pub use leak::{
    build_alphabet, clean_and_split, load_corpus, parse_corpus, top_symbols, write_count_prefixed,
    CorpusFormat, LeakCorpus, LoadStats, SplitConfig, TopSymbols,
};
