#![no_main]

use dgan_core::config::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = RunConfig::parse(text) {
            let again = RunConfig::parse(&cfg.to_text()).expect("canonical text must parse");
            assert_eq!(again, cfg);
        }
    }
});
