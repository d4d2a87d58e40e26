#![no_main]

use libfuzzer_sys::fuzz_target;
use lrac_core::scoring::{evaluate, read_ratings, Battery};

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = read_ratings(data) {
        for battery in [Battery::track1(), Battery::track2()] {
            let _ = evaluate(&records, &battery);
        }
    }
});
