#![no_main]

use d2nn::data::{parse_news_str, write_news_str};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(items) = parse_news_str(text) {
        // Whatever parses must survive a write and re-read.
        let again = parse_news_str(&write_news_str(&items)).expect("written rows parse");
        assert_eq!(again.len(), items.len());
    }
});
