//! Config parser on arbitrary input.
//!
//! ```bash
//! cargo +nightly fuzz run config fuzz/corpus/config
//! ```

#![no_main]

use dpsched::config::Config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(config) = Config::parse(text) {
        // validation must reject or accept, never panic; skip systems too big to touch
        if config.capacity <= 64 && config.arrival.len() <= 16 && config.eta.len() <= 16 {
            let _ = config.spec();
        }
    }
});
