mod common;

use nalgebra::DVector;
use netgraph::coefficient::CoefficientKind;
use netgraph::diffusion::{assemble, DiffusionState, Scheme, Stepper};
use netgraph::generation::{diffusion_boundary_standard, transport_boundary};
use netgraph::graph::{analyze_structure, line_matrices, EdgeClass, DEFAULT_CYCLE_CAP};
use netgraph::scenario::{parse, to_json, validate};
use netgraph::transport::init_state;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{constant_field, draw_graph, random_weights};

/// Reachability in the edge relation by repeated squaring of the boolean matrix.
fn closure(succ: &[Vec<usize>]) -> Vec<Vec<bool>> {
    let m = succ.len();
    let mut r = vec![vec![false; m]; m];
    for (j, s) in succ.iter().enumerate() {
        for &k in s {
            r[j][k] = true;
        }
    }
    for k in 0..m {
        for i in 0..m {
            if r[i][k] {
                for j in 0..m {
                    if r[k][j] {
                        r[i][j] = true;
                    }
                }
            }
        }
    }
    r
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn edge_classes_match_reachability(seed in any::<u64>(), sink_free in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = draw_graph(&mut rng, 5, 6, sink_free);
        let report = analyze_structure(&g, DEFAULT_CYCLE_CAP).unwrap();
        let reach = closure(&report.successors);
        let m = g.n_edges();
        for j in 0..m {
            let on_cycle = reach[j][j];
            let fed_by_cycle = (0..m).any(|k| reach[k][k] && (k == j || reach[k][j]));
            let closed = (0..m).all(|l| !reach[j][l] || reach[l][j]);
            let expected = if !fed_by_cycle {
                "acyclic"
            } else if on_cycle && closed {
                "terminal"
            } else {
                "transient"
            };
            let got = match report.edge_class[j] {
                EdgeClass::Acyclic => "acyclic",
                EdgeClass::Transient => "transient",
                EdgeClass::Terminal(_) => "terminal",
            };
            prop_assert_eq!(got, expected, "edge {} of {:?}", j, g.edges());
        }
    }

    #[test]
    fn line_adjacency_columns_are_stochastic(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = draw_graph(&mut rng, 6, 10, true);
        let g = g.clone().with_weights(random_weights(&mut rng, &g)).unwrap();
        let b = line_matrices(&g).unwrap().b_w;
        for (k, col) in b.column_iter().enumerate() {
            prop_assert!((col.sum() - 1.0).abs() < 1e-12, "column {} sums to {}", k, col.sum());
            for (j, &x) in col.iter().enumerate() {
                prop_assert_eq!(x != 0.0, g.edge(j).head == g.edge(k).tail);
            }
        }
    }

    #[test]
    fn transport_conserves_mass_and_sign(seed in any::<u64>(), steps in 1usize..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = draw_graph(&mut rng, 5, 8, true);
        let g = g.clone().with_weights(random_weights(&mut rng, &g)).unwrap();
        let speeds: Vec<f64> = (0..g.n_edges()).map(|j| [1.0, 2.0, 0.5][(seed as usize + j) % 3]).collect();
        let c = constant_field(CoefficientKind::Velocity, &speeds);
        let b = transport_boundary(&g, &c).unwrap();
        let mut st = init_state(&g, &b, &c, |j, s| (j as f64 + 1.0) * s * (1.0 - s), 1.0 / 16.0, true).unwrap();
        let m0 = st.mass();
        for _ in 0..steps {
            st.step();
        }
        prop_assert!((st.mass() - m0).abs() <= 1e-12 * m0.max(1.0));
        prop_assert!(st.min_value() >= 0.0);
    }

    #[test]
    fn backward_euler_keeps_sign_and_mass(seed in any::<u64>(), dt in 1e-4f64..0.1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = draw_graph(&mut rng, 5, 7, false);
        let a = constant_field(CoefficientKind::Diffusivity, &vec![1.0; g.n_edges()]);
        let gen = assemble(&g, &a, &diffusion_boundary_standard(&g, &a).unwrap(), 8).unwrap();
        let u0 = DVector::from_fn(gen.dim(), |i, _| if (seed >> (i % 64)) & 1 == 1 { 1.0 } else { 0.0 });
        let mut st = DiffusionState::new(u0);
        let m0 = gen.mass(&st.u);
        let stepper = Stepper::new(&gen, dt, Scheme::BackwardEuler).unwrap();
        for _ in 0..5 {
            stepper.step(&mut st).unwrap();
            prop_assert!(st.u.min() >= 0.0, "min {}", st.u.min());
        }
        prop_assert!((gen.mass(&st.u) - m0).abs() <= 1e-12 * m0.max(1.0));
    }

    #[test]
    fn scenario_json_round_trips(seed in any::<u64>(), t_final in 0.1f64..10.0, cells in 4usize..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = draw_graph(&mut rng, 5, 8, true);
        let text = format!(
            r#"{{"graph": {}, "initial": {{"constant": 1.5}}, "solver": {{"t_final": {t_final}, "cells": {cells}}}}}"#,
            serde_json::to_string(&g.to_spec()).unwrap()
        );
        let s = parse(&text).unwrap();
        let echoed = to_json(&s);
        prop_assert_eq!(parse(&echoed).unwrap(), s.clone());
        prop_assert_eq!(to_json(&parse(&echoed).unwrap()), echoed);
        let r = validate(&s).unwrap();
        prop_assert_eq!(r.graph.unwrap(), g);
    }
}
