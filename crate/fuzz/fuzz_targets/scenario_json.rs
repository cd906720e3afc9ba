#![no_main]
use libfuzzer_sys::fuzz_target;
use netgraph::scenario::{parse, to_json};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    // errors are fine; accepted input must survive a round trip
    if let Ok(s) = parse(text) {
        let echoed = to_json(&s);
        assert_eq!(parse(&echoed).expect("echo reparses"), s);
    }
});
