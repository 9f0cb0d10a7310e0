#![no_main]

use libfuzzer_sys::fuzz_target;
use rhodrift::generator::{generate_one, StreamLayout, StreamSpec};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(spec) = StreamSpec::from_toml(text) else {
        return;
    };
    // keep generation cheap; validation already bounds the shape
    if spec.dimension > 64 {
        return;
    }
    let layout = StreamLayout::new(&spec);
    for i in 0..spec.length.min(16) {
        let (record, _, _) = generate_one(&spec, &layout, i);
        assert_eq!(record.dim(), spec.dimension);
    }
});
