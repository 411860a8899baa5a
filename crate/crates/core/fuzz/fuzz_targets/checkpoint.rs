#![no_main]

use d2nn::training::Checkpoint;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ckpt) = Checkpoint::decode(data) {
        // Accepted bytes are canonical.
        assert_eq!(ckpt.encode().expect("decoded checkpoint encodes"), data);
    }
});
