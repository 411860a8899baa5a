#![no_main]

use d2nn::data::{parse_behaviors_str, reader_histories, split_leave_one_out};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(records) = parse_behaviors_str(text) {
        let split = split_leave_one_out(&reader_histories(&records));
        assert_eq!(split.validation.len(), split.test.len());
    }
});
