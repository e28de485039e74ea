//! Policy-table parser on arbitrary input; accepted tables must survive a
//! write/read round trip.
//!
//! ```bash
//! cargo +nightly fuzz run table fuzz/corpus/table
//! ```

#![no_main]

use dpsched::heuristic::PolicyTable;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if text.len() > 1 << 16 {
        return;
    }
    if let Ok(table) = PolicyTable::parse(text) {
        let again = PolicyTable::parse(&table.to_text()).expect("written table parses");
        assert_eq!(again.entries.len(), table.entries.len());
        for (a, b) in again.entries.iter().zip(&table.entries) {
            assert_eq!(a.key, b.key);
            assert!(a.delay.to_bits() == b.delay.to_bits() || (a.delay.is_nan() && b.delay.is_nan()));
            assert!(a.power.to_bits() == b.power.to_bits() || (a.power.is_nan() && b.power.is_nan()));
        }
    }
});
