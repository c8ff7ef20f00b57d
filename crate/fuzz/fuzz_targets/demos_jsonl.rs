#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = profile_irl::io::parse_demos_jsonl(text);
        if let Some(line) = text.lines().next() {
            let _ = profile_irl::io::parse_trajectory_line(line);
        }
    }
});
