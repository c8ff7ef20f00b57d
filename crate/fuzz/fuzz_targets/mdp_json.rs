#![no_main]

use libfuzzer_sys::fuzz_target;

// Tabular MDP documents come from user-editable files; parsing and
// validation must never panic.
fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = profile_irl::io::parse_mdp_json(text);
    }
});
