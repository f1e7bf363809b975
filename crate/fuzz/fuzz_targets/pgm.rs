#![no_main]

use libfuzzer_sys::fuzz_target;
use tvdesign::io::parse_pgm;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = parse_pgm(data) {
        assert_eq!(img.pixels.len(), img.width * img.height);
        assert!(img.pixels.iter().all(|&p| p <= img.maxval));
    }
});
