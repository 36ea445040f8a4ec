//! Shared text resources: tokenization, subword vocabulary, idf table,
//! skip-gram embeddings and embedding-based similarities.

mod bpe;
mod idf;
mod skipgram;
mod similarity;
mod wmd;

pub use bpe::{train_bpe, SubwordVocab, CLS, PAD, SEP, UNK};
pub use idf::{build_idf, IdfTable};
pub use skipgram::{train_skipgram, SkipGramConfig, StaticEmbeddings};
pub use similarity::{avg_embedding, cosine};
pub use wmd::{wmd, WmdResult, EXACT_WMD_MAX_DISTINCT};

/// Casefolds, splits on whitespace and strips leading/trailing
/// non-alphanumeric characters from each piece; empty pieces are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|piece| {
            let t = piece
                .trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase();
            (!t.is_empty()).then_some(t)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("56 years"), vec!["56", "years"]);
        assert!(tokenize("").is_empty());
        let t = tokenize("Which inhabitants are not happy with Ethiopia's plans of the Nile?");
        assert_eq!(t.len(), 11);
        assert_eq!(t[6], "ethiopia's");
        assert_eq!(t[10], "nile");
    }

    #[test]
    fn punctuation_only_pieces_vanish() {
        assert_eq!(tokenize(" -- ... ok!"), vec!["ok"]);
    }

    proptest! {
        #[test]
        fn tokenize_is_idempotent(s in "\\PC{0,40}") {
            let once = tokenize(&s);
            let twice = tokenize(&once.join(" "));
            prop_assert_eq!(once, twice);
        }
    }
}
