//! Corpus generation, logits dataset construction, and persistence.

mod corpus;
mod dataset;
mod external;
mod format;
mod vocab;

pub use corpus::{
    gen_corpus, load_corpus, response_matches_grammar, save_corpus, teacher_generate_corpus,
    Corpus, CorpusPair, TaskKind,
};
pub use dataset::{
    generate_logits_dataset, materialize_targets, verify_dataset, DatasetVerifyReport,
    LogitsDataset, LogitsRecord, Provenance, VerifyViolation,
};
pub use external::{export_external_logits, import_external_logits};
pub use format::{read_dataset, read_dataset_from_slice, write_dataset, write_dataset_to_vec};
pub use vocab::Vocabulary;
