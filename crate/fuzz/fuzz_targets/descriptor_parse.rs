#![no_main]

use libfuzzer_sys::fuzz_target;
use lrac_core::compliance::{analyze, Budget};
use lrac_core::descriptor::ModelDescriptor;

fuzz_target!(|data: &[u8]| {
    if let Ok(d) = ModelDescriptor::from_bytes(data) {
        let _ = d.tensor_inventory();
        let _ = analyze(&d, &Budget::track(2).unwrap());
        assert_eq!(ModelDescriptor::from_toml(&d.to_toml()).expect("reparse"), d);
    }
});
