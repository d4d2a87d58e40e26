#![no_main]

use libfuzzer_sys::fuzz_target;
use lrac_core::scoring::Battery;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(b) = Battery::from_toml(text) {
        let text = b.to_toml();
        assert_eq!(Battery::from_toml(&text).expect("reparse").to_toml(), text);
    }
});
