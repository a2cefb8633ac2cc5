#![no_main]

use libfuzzer_sys::fuzz_target;
use ppdfl::topology::parse_edge_list;

fuzz_target!(|data: &[u8]| {
    let Some((&n, rest)) = data.split_first() else { return };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    let hint = (n != 0).then(|| usize::from(n % 64));
    let _ = parse_edge_list(text, hint);
});
