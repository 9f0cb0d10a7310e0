#![no_main]

use libfuzzer_sys::fuzz_target;
use rhodrift::io::{format_record_line, parse_record_line};

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else {
        return;
    };
    for dim in [1, 3, 8] {
        if let Ok((record, truth)) = parse_record_line(line, dim) {
            assert_eq!(record.dim(), dim);
            assert!(record.vector.iter().all(|v| v.is_finite()));
            let again = format_record_line(&record, truth).unwrap();
            let (back, back_truth) = parse_record_line(&again, dim).unwrap();
            assert_eq!(back, record);
            assert_eq!(back_truth, truth);
        }
    }
});
