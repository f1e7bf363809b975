#![no_main]

use libfuzzer_sys::fuzz_target;
use tvdesign::io::parse_triplets;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = parse_triplets(text) {
        for (i, j, v) in m.triplets() {
            assert!(i < m.nrows() && j < m.ncols() && v.is_finite());
        }
    }
});
