//! Fixtures shared by the benchmarks.

use labelforge_core::synthetic::{two_class_corpus, CorpusSpec};
use labelforge_core::{LabelId, SparseVector, Vocabulary};

pub struct Fixture {
    pub texts: Vec<String>,
    pub ys: Vec<usize>,
    pub vocabulary: Vocabulary,
    pub xs: Vec<SparseVector>,
    pub classes: Vec<LabelId>,
}

/// A vectorized synthetic corpus of `docs` documents.
pub fn fixture(docs: usize) -> Fixture {
    let spec = CorpusSpec {
        docs,
        ..CorpusSpec::default()
    };
    let corpus = two_class_corpus(&spec, 7);
    let texts: Vec<String> = corpus.iter().map(|d| d.text.clone()).collect();
    let ys = corpus.iter().map(|d| d.class).collect();
    let vocabulary = Vocabulary::fit(&texts, 50_000).expect("synthetic corpus has tokens");
    let xs = texts.iter().map(|t| vocabulary.transform(t)).collect();
    Fixture {
        texts,
        ys,
        vocabulary,
        xs,
        classes: vec![LabelId::new(), LabelId::new()],
    }
}
