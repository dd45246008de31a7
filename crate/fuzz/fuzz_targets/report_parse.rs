#![no_main]

use dgan_core::eval::{parse_report, REPORT_HEADER};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_report(text);
        if let Ok(report) = parse_report(&format!("{REPORT_HEADER}\n{text}")) {
            let csv = report.to_csv().expect("csv");
            assert_eq!(parse_report(&csv).expect("reparse"), report);
        }
    }
});
