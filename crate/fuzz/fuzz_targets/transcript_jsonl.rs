#![no_main]

use libfuzzer_sys::fuzz_target;
use ppdfl::transcript::Transcript;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(t) = Transcript::parse_jsonl(text) {
        let mut first = Vec::new();
        t.write_jsonl(&mut first).expect("write");
        let again = Transcript::parse_jsonl(std::str::from_utf8(&first).unwrap()).expect("re-parse");
        let mut second = Vec::new();
        again.write_jsonl(&mut second).expect("write");
        assert_eq!(first, second);
    }
});
