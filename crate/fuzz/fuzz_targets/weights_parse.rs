#![no_main]

use libfuzzer_sys::fuzz_target;
use lrac_core::weights::WeightStore;

fuzz_target!(|data: &[u8]| {
    if let Ok(store) = WeightStore::from_bytes(data) {
        let bytes = store.to_bytes();
        assert_eq!(WeightStore::from_bytes(&bytes).expect("reparse").to_bytes(), bytes);
    }
});
