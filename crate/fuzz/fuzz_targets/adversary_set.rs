#![no_main]

use libfuzzer_sys::fuzz_target;
use ppdfl::privacy::AdversarySet;

fuzz_target!(|data: &[u8]| {
    let Some((&n, rest)) = data.split_first() else { return };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    let n = usize::from(n % 64) + 1;
    if let Ok(adv) = AdversarySet::parse(n, text) {
        assert!(adv.adversaries().iter().all(|&a| a >= 1 && a <= n));
    }
});
