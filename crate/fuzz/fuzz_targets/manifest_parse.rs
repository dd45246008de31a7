#![no_main]

use dgan_core::config::DEFAULT_LABELS;
use dgan_core::datapipe::{parse_manifest, write_manifest};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let vocab: Vec<String> = DEFAULT_LABELS.iter().map(|s| s.to_string()).collect();
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(records) = parse_manifest(text, &vocab) {
            let mut buf = Vec::new();
            write_manifest(&records, &mut buf).expect("write");
            let again = parse_manifest(std::str::from_utf8(&buf).expect("utf8"), &vocab).expect("reparse");
            assert_eq!(again, records);
        }
    }
});
