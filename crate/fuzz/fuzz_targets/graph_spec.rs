#![no_main]
use libfuzzer_sys::fuzz_target;
use netgraph::graph::{analyze_structure, GraphSpec};

fuzz_target!(|data: &[u8]| {
    let Ok(spec) = serde_json::from_slice::<GraphSpec>(data) else { return };
    if spec.vertices > 64 || spec.edges.len() > 64 {
        return;
    }
    if let Ok(g) = spec.build() {
        assert_eq!(g.to_spec().build().as_ref(), Ok(&g));
        let _ = analyze_structure(&g, 1000);
    }
});
