//! Fuzz the snapshot binary decoder: arbitrary bytes must either be rejected
//! or decode into a snapshot whose re-encoding round-trips byte for byte.

#![no_main]

use libfuzzer_sys::fuzz_target;
use nhym_core::snapshot::Snapshot;

fuzz_target!(|data: &[u8]| {
    if let Ok(snap) = Snapshot::decode(data) {
        let bytes = snap.encode();
        let again = Snapshot::decode(&bytes).expect("re-encoded snapshot must decode");
        assert_eq!(bytes, again.encode(), "snapshot round trip is not stable");
    }
});
