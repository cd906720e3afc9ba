#![no_main]
use libfuzzer_sys::fuzz_target;
use netgraph::scenario::{parse, validate};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(mut s) = parse(text) else { return };
    // keep accidental huge grids out of the way
    if s.solver.cells.is_some_and(|c| c > 512) {
        s.solver.cells = Some(512);
    }
    if let Ok(r) = validate(&s) {
        let _ = r.transport_boundary();
        if r.graph.is_some() {
            let _ = r.diffusion_boundary();
        }
    }
});
