#![no_main]

use libfuzzer_sys::fuzz_target;
use vidspeed::model::Checkpoint;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(ckpt) = Checkpoint::from_json(text, None) {
        let json = ckpt.to_json().expect("accepted checkpoint serializes");
        let _ = Checkpoint::from_json(&json, Some(ckpt.params.input_len));
        let x = vec![0.5; ckpt.params.input_len.min(1 << 16)];
        if x.len() == ckpt.params.input_len {
            let _ = ckpt.params.predict(&x);
        }
    }
});
