#![no_main]

use libfuzzer_sys::fuzz_target;
use lrac_core::codec::ModeSchedule;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(s) = text.parse::<ModeSchedule>() {
        assert_eq!(s.to_string().parse::<ModeSchedule>().expect("reparse"), s);
    }
});
