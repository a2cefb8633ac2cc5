#![no_main]

use libfuzzer_sys::fuzz_target;
use ppdfl::topology::TopologySchedule;

// first byte picks the node count
fuzz_target!(|data: &[u8]| {
    let Some((&n, rest)) = data.split_first() else { return };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    let _ = TopologySchedule::from_json(text, usize::from(n % 64) + 1);
});
