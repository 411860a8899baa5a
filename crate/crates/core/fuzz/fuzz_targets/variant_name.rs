#![no_main]

use d2nn::variant::Variant;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(v) = text.parse::<Variant>() {
        assert_eq!(v.to_string().parse::<Variant>().expect("canonical name parses"), v);
    }
});
