#![no_main]

use d2nn::data::{parse_embeddings_str, Vocabulary};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let vocab = Vocabulary::from_ordered(["city", "wins", "cup", "team"]);
    if let Ok(table) = parse_embeddings_str(text, &vocab, 4, 1) {
        assert!(table.matrix.is_finite());
        assert!(table.matrix.row(0).iter().all(|v| *v == 0.0));
    }
});
