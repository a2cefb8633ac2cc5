#![no_main]

use libfuzzer_sys::fuzz_target;
use ppdfl::topology::{generate_topology, TopologyKind};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(kind) = text.parse::<TopologyKind>() {
        let _ = generate_topology(kind, 12, 0);
    }
});
