#![no_main]

use libfuzzer_sys::fuzz_target;
use profile_irl::reward::FeatureMap;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = profile_irl::io::parse_checkpoint_json(text, None);
        // Same bytes against an environment feature map (mlp decode path).
        let features = FeatureMap::new(
            ndarray::Array2::from_shape_fn((12, 4), |(s, i)| (s * 4 + i) as f64 * 0.1),
        )
        .expect("fixed feature map is valid");
        let _ = profile_irl::io::parse_checkpoint_json(text, Some(&features));
    }
});
