#![no_main]

use libfuzzer_sys::fuzz_target;
use tvdesign::io::{parse_scaling, read_pgm_image};

// first byte splits the input into image bytes and sidecar text
fuzz_target!(|data: &[u8]| {
    let Some((&split, rest)) = data.split_first() else { return };
    let cut = (split as usize * rest.len()) / 255;
    let (pgm, text) = rest.split_at(cut);
    let Ok(text) = std::str::from_utf8(text) else { return };
    if let Ok(s) = parse_scaling(text) {
        assert!(s.min.is_finite() && s.max.is_finite());
    }
    if let Ok(img) = read_pgm_image(pgm, text) {
        assert!(img.values().iter().all(|v| v.is_finite()));
    }
});
