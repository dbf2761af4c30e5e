#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use vidspeed::sampler::parse_manifest;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let paths = parse_manifest(text, Path::new("base"));
    assert!(paths.len() <= text.lines().count());
});
