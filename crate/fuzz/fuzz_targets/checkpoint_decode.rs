#![no_main]

use dgan_core::checkpoint::{decode, encode, from_bytes};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(file) = decode(data) {
        let bytes = encode(&file).expect("re-encode");
        assert_eq!(decode(&bytes).expect("decode re-encoded"), file);
        let _ = from_bytes(data);
    }
});
