#![no_main]

use libfuzzer_sys::fuzz_target;
use vidspeed::media::{read_y4m, write_y4m};

fuzz_target!(|data: &[u8]| {
    if let Ok(clip) = read_y4m(data) {
        // anything accepted must survive a round trip
        let again = read_y4m(&write_y4m(&clip)).expect("re-encoded stream parses");
        assert_eq!(again.len(), clip.len());
        assert_eq!((again.width(), again.height()), (clip.width(), clip.height()));
    }
});
