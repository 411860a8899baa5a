//! Reading, generating, and splitting news and click data.

mod behaviors;
mod dataset;
mod embedding;
mod news;
mod split;
mod synthetic;
mod tokenize;
mod vocab;

pub use behaviors::{
    parse_behaviors_str, parse_behaviors_tsv, write_behaviors_str, write_behaviors_tsv,
    ImpressionRecord,
};
pub use dataset::{ClickEvent, Dataset, EvalCase, EvalSplit, NewsCatalog, Timeline};
pub use embedding::{load_embedding_file, parse_embeddings_str, EmbeddingTable, EMBEDDING_INIT};
pub use news::{parse_news_str, parse_news_tsv, write_news_str, write_news_tsv, NewsItem};
pub use split::{
    reader_histories, split_leave_one_out, train_prefix_len, Click, HeldOut, LeaveOneOut,
    ReaderHistory, MIN_HELD_OUT_CLICKS,
};
pub use synthetic::{generate_synthetic, SyntheticConfig, SyntheticData};
pub use tokenize::tokenize;
pub use vocab::{build_vocabulary, Vocabulary, PAD, UNK};
