#![no_main]

use libfuzzer_sys::fuzz_target;
use tvdesign::io::{parse_raw, write_raw};

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = parse_raw(data) {
        let mut buf = Vec::new();
        write_raw(&img, &mut buf).unwrap();
        let back = parse_raw(&buf).unwrap();
        assert_eq!(back.grid(), img.grid());
        assert!(back.values().iter().zip(img.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
});
