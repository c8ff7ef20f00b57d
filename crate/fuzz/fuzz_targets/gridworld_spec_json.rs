#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(spec) = profile_irl::io::parse_gridworld_spec_json(text) {
            // A spec that validates must also build, within a size guard.
            if spec.n_states() <= 4096 {
                let _ = profile_irl::mdp::build_gridworld(&spec);
            }
        }
    }
});
