#![no_main]

use libfuzzer_sys::fuzz_target;
use rhodrift::classifier::LogisticClassifier;
use rhodrift::pipeline::Engine;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let _ = Engine::<LogisticClassifier>::from_checkpoint_json(text);
});
