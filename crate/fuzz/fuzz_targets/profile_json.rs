#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(profile) = profile_irl::io::parse_profile_json(text) {
            // Valid profiles must survive the transport fast path.
            let _ = profile_irl::ot::exact_plan(&profile, &profile, 2.0);
        }
    }
});
