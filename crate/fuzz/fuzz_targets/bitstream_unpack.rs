#![no_main]

use libfuzzer_sys::fuzz_target;
use lrac_core::bitstream::{pack, unpack};

fuzz_target!(|data: &[u8]| {
    if let Ok(stream) = unpack(data) {
        let bytes = pack(&stream);
        assert_eq!(unpack(&bytes).expect("repack"), stream);
    }
});
