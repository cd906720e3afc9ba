//! Replays the checked-in fuzz seeds through the fuzz target bodies.

use std::fs;
use std::path::{Path, PathBuf};

use netgraph::graph::{analyze_structure, GraphSpec};
use netgraph::scenario::{parse, to_json, validate};

fn seeds(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .map(|p| {
            let bytes = fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn scenario_json_seeds() {
    let mut accepted = 0;
    for (path, data) in seeds("scenario_json") {
        let Ok(text) = std::str::from_utf8(&data) else { continue };
        if let Ok(s) = parse(text) {
            assert_eq!(parse(&to_json(&s)).unwrap(), s, "{}", path.display());
            accepted += 1;
        }
    }
    assert!(accepted >= 6);
}

#[test]
fn scenario_validate_seeds() {
    for (_, data) in seeds("scenario_validate") {
        let Ok(s) = parse(std::str::from_utf8(&data).unwrap()) else { continue };
        if let Ok(r) = validate(&s) {
            let _ = r.transport_boundary();
            if r.graph.is_some() {
                let _ = r.diffusion_boundary();
            }
        }
    }
}

#[test]
fn graph_spec_seeds() {
    let mut built = 0;
    for (_, data) in seeds("graph_spec") {
        let Ok(spec) = serde_json::from_slice::<GraphSpec>(&data) else { continue };
        if let Ok(g) = spec.build() {
            assert_eq!(g.to_spec().build().as_ref(), Ok(&g));
            analyze_structure(&g, 1000).unwrap();
            built += 1;
        }
    }
    assert_eq!(built, 2);
}
