#![no_main]

use adaptive_reach::config::parse_config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = parse_config(text) {
        // whatever parses must survive its own echo
        let again = parse_config(&cfg.to_json()).expect("echoed config parses");
        assert_eq!(again.hash(), cfg.hash());
    }
});
