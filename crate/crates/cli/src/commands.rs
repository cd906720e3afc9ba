use std::fs;

use nalgebra::DVector;
use netgraph::aggregation::{
    aggregated_diffusion_ode, aggregated_flow_ode, diffusion_convergence_study, exchange_gap,
    flow_convergence_study, Trajectory,
};
use netgraph::diffusion::{assemble, equilibrium, evolve_diffusion_with, residuals, DiffusionState};
use netgraph::generation::{vertex_cluster_det, BoundaryKind};
use netgraph::graph::{analyze_adjacency, analyze_structure, EdgeClass, StructureReport, DEFAULT_CYCLE_CAP};
use netgraph::linalg::DeterminantCheck;
use netgraph::scenario::{self, ConditionMode, Resolved, Scenario};
use netgraph::spectral::{classify_adjacency, classify_long_term};
use netgraph::coefficient::travel_time;
use netgraph::transport::{init_abstract_state, init_state, GraphState};
use serde_json::{json, Map, Value};

use crate::emit::{float, sha256_hex, Sink, Table};
use crate::{AggregateMode, Common, Failure};

/// Largest discrete system for which `diffuse` computes the equilibrium.
const EQUILIBRIUM_MAX_DIM: usize = 1500;
/// Resolution of the edge averages `𝒫x0`.
const AVERAGE_POINTS: usize = 4096;

struct Loaded {
    scenario: Scenario,
    resolved: Resolved,
    digest: String,
}

fn load(c: &Common) -> Result<Loaded, Failure> {
    let bytes = fs::read(&c.scenario).map_err(|e| Failure::Io(format!("{}: {e}", c.scenario.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| Failure::Io(format!("{}: not valid UTF-8", c.scenario.display())))?;
    let mut scenario = scenario::parse(&text)?;
    c.apply(&mut scenario.solver);
    let resolved = scenario::validate(&scenario)?;
    Ok(Loaded { scenario, resolved, digest: sha256_hex(&bytes) })
}

fn header(command: &str, l: &Loaded) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("command".into(), json!(command));
    m.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    m.insert("scenario_sha256".into(), json!(l.digest));
    m.insert("name".into(), json!(l.resolved.name));
    m
}

fn det_json(d: &DeterminantCheck) -> Value {
    json!({"det": d.det, "hadamard_bound": d.hadamard_bound, "nonzero": d.nonzero})
}

fn mode_name(m: ConditionMode) -> Value {
    serde_json::to_value(m).expect("enum serializes")
}

fn class_name(c: EdgeClass) -> String {
    match c {
        EdgeClass::Terminal(i) => format!("terminal:{i}"),
        EdgeClass::Transient => "transient".into(),
        EdgeClass::Acyclic => "acyclic".into(),
    }
}

fn structure_json(s: &StructureReport) -> Value {
    json!({
        "sinks": s.sinks,
        "sources": s.sources,
        "components": s.components,
        "terminal": s.terminal,
        "cyclic": s.cyclic,
        "cycle_count": s.cycles.len(),
        "edge_class": s.edge_class.iter().map(|&c| class_name(c)).collect::<Vec<_>>(),
    })
}

fn error_json(e: &netgraph::Error) -> Value {
    json!({"error": e.to_string()})
}

fn finish(c: &Common, summary: Map<String, Value>, tables: &[(&str, &Table)]) -> Result<(), Failure> {
    let sink = Sink::new(c.out.as_deref())?;
    for (name, t) in tables {
        sink.table(name, t)?;
    }
    sink.summary(&Value::Object(summary))
}

pub fn check(c: &Common) -> Result<(), Failure> {
    let l = load(c)?;
    let r = &l.resolved;
    let mut out = header("check", &l);
    out.insert("edges".into(), json!(r.n_edges));
    out.insert("mode".into(), mode_name(r.mode));

    let transport = match r.transport_boundary() {
        Ok(tb) => json!({"semigroup": tb.is_semigroup, "group": tb.is_group, "det": det_json(&tb.det)}),
        Err(e) => error_json(&e),
    };
    out.insert("transport".into(), transport);

    let diffusion = match &r.graph {
        None => Value::Null,
        Some(g) => match r.diffusion_boundary() {
            Ok(b) => {
                let expected = match b.kind {
                    BoundaryKind::Standard => {
                        json!((0..g.n_vertices()).map(|v| vertex_cluster_det(g, v, &r.diffusivity)).product::<f64>())
                    }
                    BoundaryKind::Robin => Value::Null,
                };
                json!({
                    "kind": match b.kind { BoundaryKind::Standard => "standard", BoundaryKind::Robin => "robin" },
                    "det": det_json(&b.det),
                    "expected_abs_det": expected,
                    "nonzero": b.det.nonzero,
                })
            }
            Err(e) => error_json(&e),
        },
    };
    out.insert("diffusion".into(), diffusion);

    let structure = match (&r.graph, r.mutation.is_some() || r.flow.is_some()) {
        (Some(g), false) => analyze_structure(g, DEFAULT_CYCLE_CAP),
        _ => r.transport_boundary().and_then(|tb| analyze_adjacency(&tb.b_c, DEFAULT_CYCLE_CAP)),
    };
    out.insert("structure".into(), structure.as_ref().map_or_else(error_json, structure_json));
    out.insert("warnings".into(), json!(r.warnings));
    finish(c, out, &[])
}

fn transport_state(r: &Resolved) -> Result<GraphState, Failure> {
    let f = |j: usize, s: f64| r.initial.value(j, s);
    let (h, strict) = (r.solver.h, r.solver.strict);
    let (tb, c) = r.transport_setup()?;
    Ok(match &r.graph {
        Some(g) => init_state(g, &tb, &c, f, h, strict)?,
        None => init_abstract_state(&tb.b_c, &c, f, h, strict)?,
    })
}

/// Indices in `0..=steps` at which to write profiles.
fn snapshot_steps(steps: usize, snapshots: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (1..=snapshots).map(|k| k * steps / (snapshots + 1)).collect();
    v.push(steps);
    v.dedup();
    v
}

fn push_transport_profile(t: &mut Table, st: &GraphState) {
    for (j, cells) in st.samples().iter().enumerate() {
        for (i, u) in cells.iter().enumerate() {
            t.push(vec![float(st.time()), j.to_string(), float(st.cell_position(j, i)), float(*u)]);
        }
    }
}

pub fn transport(c: &Common) -> Result<(), Failure> {
    let l = load(c)?;
    let r = &l.resolved;
    let mut st = transport_state(r)?;
    let steps = st.steps_for(r.solver.t_final)? as usize;
    let snaps = snapshot_steps(steps, r.solver.snapshots);

    let mut series = Table::new(&["step", "t", "mass", "kirchhoff_residual", "min_value"]);
    let mut profile = Table::new(&["t", "edge", "s", "value"]);
    let mass0 = st.mass();
    let mut max_kirchhoff = 0.0f64;
    let mut min_value = st.min_value();
    let row = |series: &mut Table, st: &GraphState| {
        let d = st.diagnostics();
        series.push(vec![
            st.steps().to_string(),
            float(st.time()),
            float(d.mass),
            d.kirchhoff_residual.map_or_else(String::new, float),
            float(d.min_value),
        ]);
        d
    };
    row(&mut series, &st);
    push_transport_profile(&mut profile, &st);
    for n in 1..=steps {
        st.step();
        let d = row(&mut series, &st);
        max_kirchhoff = max_kirchhoff.max(d.kirchhoff_residual.unwrap_or(0.0));
        min_value = min_value.min(d.min_value);
        if snaps.binary_search(&n).is_ok() {
            push_transport_profile(&mut profile, &st);
        }
    }

    let mut out = header("transport", &l);
    out.insert("edges".into(), json!(r.n_edges));
    out.insert("steps".into(), json!(steps));
    out.insert("h".into(), json!(st.h()));
    out.insert("t_final".into(), json!(st.time()));
    out.insert("cells".into(), json!(st.grid().cells));
    out.insert("commensurable".into(), json!(st.grid().commensurable));
    out.insert("max_snap_error".into(), json!(st.grid().max_snap_error()));
    out.insert("initial_mass".into(), json!(mass0));
    out.insert("final_mass".into(), json!(st.mass()));
    out.insert("edge_masses".into(), json!(st.edge_masses()));
    out.insert(
        "max_kirchhoff_residual".into(),
        if st.graph().is_some() { json!(max_kirchhoff) } else { Value::Null },
    );
    out.insert("min_value".into(), json!(min_value));
    out.insert("warnings".into(), json!(r.warnings));
    finish(c, out, &[("series", &series), ("profile", &profile)])
}

pub fn diffuse(c: &Common) -> Result<(), Failure> {
    let l = load(c)?;
    let r = &l.resolved;
    let g = r.graph.as_ref().ok_or_else(|| netgraph::Error::Schema("diffusion needs a graph".into()))?;
    let boundary = r.diffusion_boundary()?;
    let gen = assemble(g, &r.diffusivity, &boundary, r.solver.cells)?;
    let u0 = gen.sample(|j, s| r.initial.value(j, s));
    let steps = netgraph::diffusion::step_count(r.solver.t_final, r.solver.dt)?;
    let snaps = snapshot_steps(steps, r.solver.snapshots);
    let nodes = gen.nodes();

    let mut series = Table::new(&["t", "mass", "continuity_res", "flux_res", "min_value"]);
    let mut profile = Table::new(&["t", "edge", "s", "value"]);
    let push_profile = |profile: &mut Table, st: &DiffusionState| {
        for j in 0..g.n_edges() {
            for (s, v) in nodes.iter().zip(gen.edge_values(&st.u, j)) {
                profile.push(vec![float(st.t), j.to_string(), float(*s), float(v)]);
            }
        }
    };
    // continuity is not a vertex condition under Robin coupling
    let robin = boundary.kind == BoundaryKind::Robin;
    // maxima skip the initial data, which need not satisfy the conditions
    let mut max_cont = 0.0f64;
    let mut max_flux = 0.0f64;
    let mut row = |series: &mut Table, st: &DiffusionState| {
        let res = residuals(&gen, &st.u);
        if st.t > 0.0 {
            max_cont = max_cont.max(res.continuity_res);
            max_flux = max_flux.max(res.flux_res);
        }
        series.push(vec![
            float(st.t),
            float(res.mass),
            if robin { String::new() } else { float(res.continuity_res) },
            float(res.flux_res),
            float(st.u.min()),
        ]);
    };
    let s0 = DiffusionState::new(u0.clone());
    row(&mut series, &s0);
    push_profile(&mut profile, &s0);
    let mut n = 0;
    let last = evolve_diffusion_with(&gen, &s0, r.solver.t_final, r.solver.dt, r.solver.scheme, |st| {
        n += 1;
        row(&mut series, st);
        if snaps.binary_search(&n).is_ok() {
            push_profile(&mut profile, st);
        }
    })?;

    let mut out = header("diffuse", &l);
    out.insert("edges".into(), json!(r.n_edges));
    out.insert("mode".into(), mode_name(r.mode));
    out.insert("cells".into(), json!(gen.cells()));
    out.insert("unknowns".into(), json!(gen.dim()));
    out.insert("dt".into(), json!(r.solver.dt));
    out.insert("scheme".into(), json!(r.solver.scheme));
    out.insert("steps".into(), json!(steps));
    out.insert("initial_mass".into(), json!(gen.mass(&u0)));
    out.insert("final_mass".into(), json!(gen.mass(&last.u)));
    out.insert("edge_masses".into(), json!(gen.edge_masses(&last.u).as_slice()));
    out.insert("min_value".into(), json!(last.u.min()));
    out.insert("max_continuity_res".into(), if robin { Value::Null } else { json!(max_cont) });
    out.insert("max_flux_res".into(), json!(max_flux));
    let eq = if gen.dim() <= EQUILIBRIUM_MAX_DIM {
        match equilibrium(&gen) {
            Ok(e) => {
                let target = e.project(&u0);
                json!({
                    "lambda": e.lambda,
                    "edge_masses": gen.edge_masses(&target).as_slice(),
                    "distance": gen.mass(&(&last.u - &target).abs()),
                })
            }
            Err(e) => error_json(&e),
        }
    } else {
        Value::Null
    };
    out.insert("equilibrium".into(), eq);
    out.insert("warnings".into(), json!(r.warnings));
    finish(c, out, &[("series", &series), ("profile", &profile)])
}

pub fn analyze(c: &Common) -> Result<(), Failure> {
    let l = load(c)?;
    let r = &l.resolved;
    let report = match (&r.graph, r.mutation.is_some() || r.flow.is_some()) {
        (Some(g), false) => classify_long_term(g, &r.velocity, DEFAULT_CYCLE_CAP)?,
        _ => {
            let (tb, c) = r.transport_setup()?;
            classify_adjacency(&tb.b_c, &travel_time(&c)?.lengths(), DEFAULT_CYCLE_CAP)?
        }
    };
    let mut out = header("analyze", &l);
    out.insert("edges".into(), json!(r.n_edges));
    out.insert("asymptotics".into(), serde_json::to_value(&report).expect("report serializes"));
    if let Some(mm) = &r.mutation {
        out.insert(
            "mutation".into(),
            json!({"distance_to_one": mm.distance_to_one().map_or_else(|e| json!(e.to_string()), |d| json!(d))}),
        );
    }
    if let Some(sm) = &r.synaptic {
        let rows: Vec<Vec<f64>> = sm.k_minus.row_iter().map(|row| row.iter().copied().collect()).collect();
        out.insert(
            "synaptic".into(),
            json!({
                "pools": sm.names,
                "k_minus": rows,
                "markov": sm.markov,
                "mass_flux_defect": sm.mass_flux_defect(),
                "exchange_gap": exchange_gap(&sm.k_minus).map_or_else(|e| json!(e.to_string()), |g| json!(g)),
            }),
        );
    }
    out.insert("warnings".into(), json!(r.warnings));
    finish(c, out, &[])
}

fn edge_averages(r: &Resolved) -> DVector<f64> {
    DVector::from_fn(r.n_edges, |j, _| {
        (0..AVERAGE_POINTS).map(|i| r.initial.value(j, (i as f64 + 0.5) / AVERAGE_POINTS as f64)).sum::<f64>()
            / AVERAGE_POINTS as f64
    })
}

fn trajectory_table(tr: &Trajectory) -> Table {
    let m = tr.states.first().map_or(0, Vec::len);
    let mut header = vec!["t".to_string()];
    header.extend((0..m).map(|j| format!("x{j}")));
    let mut t = Table::with_header(header);
    for (time, x) in tr.times.iter().zip(&tr.states) {
        let mut row = vec![float(*time)];
        row.extend(x.iter().map(|v| float(*v)));
        t.push(row);
    }
    t
}

pub fn aggregate(c: &Common, mode: Option<AggregateMode>) -> Result<(), Failure> {
    let l = load(c)?;
    let r = &l.resolved;
    let p = &r.solver;
    let mode = match (mode, r.mutation.is_some() || r.flow.is_some(), &r.synaptic) {
        (Some(m), _, _) => m,
        (None, true, _) => AggregateMode::Flow,
        (None, false, Some(_)) => AggregateMode::Diffusion,
        (None, false, None) => {
            return Err(netgraph::Error::Schema("aggregate needs a mutation or synaptic model".into()).into())
        }
    };
    let x0 = |j: usize, s: f64| r.initial.value(j, s);
    let px0 = edge_averages(r);
    let mut out = header("aggregate", &l);
    let trajectory = match mode {
        AggregateMode::Flow => {
            let (k, q) = match (&r.flow, &r.mutation) {
                (Some(f), _) => (&f.k, &f.q),
                (None, Some(mm)) => (&mm.k, &mm.q),
                (None, None) => {
                    return Err(netgraph::Error::Schema("flow aggregation needs a perturbed-flow model".into()).into())
                }
            };
            let study = flow_convergence_study(r.graph.as_ref(), k, q, &x0, &p.eps, p.t_final, p.t_min, p.cells)?;
            out.insert("mode".into(), json!("flow"));
            out.insert("study".into(), serde_json::to_value(&study).expect("study serializes"));
            aggregated_flow_ode(k, q, &px0, p.t_final, p.dt)?
        }
        AggregateMode::Diffusion => {
            let sm = r
                .synaptic
                .as_ref()
                .ok_or_else(|| netgraph::Error::Schema("diffusion aggregation needs a synaptic model".into()))?;
            let study = diffusion_convergence_study(
                &sm.graph, &sm.k_fick, &sm.k_minus, &x0, &p.eps, p.t_final, p.t_min, p.cells, p.dt,
            )?;
            out.insert("mode".into(), json!("diffusion"));
            out.insert("study".into(), serde_json::to_value(&study).expect("study serializes"));
            out.insert("exchange_gap".into(), json!(exchange_gap(&sm.k_minus)?));
            aggregated_diffusion_ode(&sm.k_minus, &px0, p.t_final, p.dt)?
        }
    };
    out.insert("initial_averages".into(), json!(px0.as_slice()));
    out.insert("limit_final".into(), json!(trajectory.last().as_slice()));
    out.insert("warnings".into(), json!(r.warnings));
    let series = trajectory_table(&trajectory);
    finish(c, out, &[("series", &series)])
}

pub fn report(c: &Common, echo_config: bool) -> Result<(), Failure> {
    let l = load(c)?;
    if echo_config {
        print!("{}", scenario::to_json(&l.scenario));
        return Ok(());
    }
    let r = &l.resolved;
    let mut out = header("report", &l);
    out.insert("edges".into(), json!(r.n_edges));
    out.insert("vertices".into(), json!(r.graph.as_ref().map(|g| g.n_vertices())));
    out.insert("mode".into(), mode_name(r.mode));
    let model = if r.mutation.is_some() {
        json!("mutation")
    } else if r.flow.is_some() {
        json!("perturbed-flow")
    } else if r.synaptic.is_some() {
        json!("synaptic")
    } else {
        Value::Null
    };
    out.insert("model".into(), model);
    out.insert("solver".into(), serde_json::to_value(&r.solver).expect("params serialize"));
    out.insert("warnings".into(), json!(r.warnings));
    finish(c, out, &[])
}
