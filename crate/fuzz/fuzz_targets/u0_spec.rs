#![no_main]

use degenctl_core::experiment::U0Spec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = text.parse::<U0Spec>() {
        assert_eq!(spec.to_string().parse::<U0Spec>().unwrap(), spec);
    }
});
