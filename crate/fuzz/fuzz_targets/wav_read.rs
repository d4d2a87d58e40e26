#![no_main]

use libfuzzer_sys::fuzz_target;
use lrac_core::audio::{read_wav, write_wav, SampleEncoding};

fuzz_target!(|data: &[u8]| {
    if let Ok(buf) = read_wav(data) {
        // Anything accepted must survive a float re-encode unchanged.
        let again = read_wav(&write_wav(&buf, SampleEncoding::Float32)).expect("re-read");
        assert_eq!(again.sample_rate(), buf.sample_rate());
        let bits = |b: &lrac_core::audio::AudioBuffer| b.samples().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&again), bits(&buf));
    }
});
