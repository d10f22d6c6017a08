#![no_main]

use degenctl_core::experiment::Samples;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = Samples::from_reader(data) {
        let x = s.x();
        assert!(x.len() >= 2 && x.windows(2).all(|w| w[0] < w[1]));
        for &p in x {
            assert!(s.eval(p).is_finite());
        }
    }
});
