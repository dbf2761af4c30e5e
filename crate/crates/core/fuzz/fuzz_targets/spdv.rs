#![no_main]

use libfuzzer_sys::fuzz_target;
use vidspeed::media::{read_spdv, write_spdv};

fuzz_target!(|data: &[u8]| {
    if let Ok(clip) = read_spdv(data) {
        let bytes = write_spdv(&clip).expect("accepted clip encodes");
        assert_eq!(read_spdv(&bytes).expect("re-encoded file parses"), clip);
    }
});
