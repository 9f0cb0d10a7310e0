#![no_main]

use libfuzzer_sys::fuzz_target;
use rhodrift::report::{
    read_rows, BatchRow, EventRow, WindowRow, BATCH_HEADER, EVENT_HEADER, WINDOW_HEADER,
};

fuzz_target!(|data: &[u8]| {
    let _ = read_rows::<_, BatchRow>(data, BATCH_HEADER);
    let _ = read_rows::<_, WindowRow>(data, WINDOW_HEADER);
    let _ = read_rows::<_, EventRow>(data, EVENT_HEADER);
});
