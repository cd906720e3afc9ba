//! JSON scenarios: graph, coefficients, vertex conditions, an optional
//! application model, initial data and solver parameters.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coefficient::{CoefficientField, CoefficientKind, EdgeCoefficient};
use crate::diffusion::Scheme;
use crate::error::{Error, Result};
use crate::generation::{diffusion_boundary_standard, robin_boundary, transport_boundary, DiffusionBoundary, TransportBoundary};
use crate::graph::{GraphSpec, MetricGraph};
use crate::models::{
    build_mutation_model, build_perturbed_flow, build_synaptic_model, MutationModel, PerturbedFlow, Preset, Rates,
    SynapticModel,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionMode {
    TransportStandard,
    DiffusionStandard,
    DiffusionRobin,
}

/// A coefficient given as one number for every edge or edge by edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Uniform(f64),
    PerEdge(Vec<EdgeCoefficient>),
}

impl FieldSpec {
    fn build(&self, kind: CoefficientKind, m: usize) -> Result<CoefficientField> {
        match self {
            FieldSpec::Uniform(v) => CoefficientField::uniform(kind, m, *v),
            FieldSpec::PerEdge(list) => CoefficientField::new(kind, list.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    Mutation {
        #[serde(rename = "K")]
        k: Vec<Vec<f64>>,
        #[serde(rename = "Q")]
        q: Vec<Vec<f64>>,
    },
    /// Stochastic `K` with a signed perturbation `Q`, for ε-studies.
    PerturbedFlow {
        #[serde(rename = "K")]
        k: Vec<Vec<f64>>,
        #[serde(rename = "Q")]
        q: Vec<Vec<f64>>,
    },
    Synaptic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rates: Option<Rates<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        preset: Option<Preset>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CosineSpec {
    #[serde(default)]
    pub mean: f64,
    pub amplitude: f64,
    pub mode: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSpec {
    pub low: f64,
    pub high: f64,
    /// Samples per edge, linearly interpolated.
    pub samples: usize,
}

/// Initial data `u(0, s)` on every edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialSpec {
    Constant(f64),
    /// One constant per edge.
    Piecewise(Vec<f64>),
    /// `mean + amplitude cos(mode π s)` on every edge.
    Cosine(CosineSpec),
    /// Equispaced samples on `[0, 1]` per edge, linearly interpolated.
    Samples(Vec<Vec<f64>>),
    /// Uniform random samples drawn from the solver seed.
    Random(RandomSpec),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<Scheme>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshots: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strict: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<FieldSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diffusivity: Option<FieldSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditions: Option<ConditionMode>,
    /// `2m x 2m` matrix for `diffusion-robin` without a synaptic model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robin: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialSpec>,
    #[serde(default)]
    pub solver: SolverSpec,
}

/// Parses scenario JSON; syntax and type errors carry line and column.
pub fn parse(text: &str) -> Result<Scenario> {
    serde_json::from_str(text).map_err(|e| Error::Parse { line: e.line(), column: e.column(), message: e.to_string() })
}

/// Pretty JSON with a trailing newline.
pub fn to_json(s: &Scenario) -> String {
    let mut out = serde_json::to_string_pretty(s).expect("scenarios serialize");
    out.push('\n');
    out
}

/// Solver parameters with defaults filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverParams {
    pub h: f64,
    pub cells: usize,
    pub dt: f64,
    pub t_final: f64,
    pub t_min: f64,
    pub scheme: Scheme,
    pub eps: Vec<f64>,
    pub snapshots: usize,
    pub seed: u64,
    pub strict: bool,
}

impl SolverParams {
    fn resolve(s: &SolverSpec) -> Result<Self> {
        let p = SolverParams {
            h: s.h.unwrap_or(0.01),
            cells: s.cells.unwrap_or(64),
            dt: s.dt.unwrap_or(1e-3),
            t_final: s.t_final.unwrap_or(1.0),
            t_min: s.t_min.unwrap_or(0.5),
            scheme: s.scheme.unwrap_or_default(),
            eps: s.eps.clone().unwrap_or_else(|| vec![0.1, 0.05, 0.025]),
            snapshots: s.snapshots.unwrap_or(0),
            seed: s.seed.unwrap_or(0),
            strict: s.strict.unwrap_or(false),
        };
        for (name, v) in [("h", p.h), ("dt", p.dt)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Schema(format!("solver.{name} must be positive, got {v}")));
            }
        }
        if !(p.t_final.is_finite() && p.t_final >= 0.0) || !(p.t_min.is_finite() && p.t_min >= 0.0) {
            return Err(Error::Schema("solver.t_final and solver.t_min must be nonnegative".into()));
        }
        if p.cells == 0 {
            return Err(Error::Schema("solver.cells must be positive".into()));
        }
        if p.eps.is_empty() || p.eps.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(Error::Schema("solver.eps must list positive values".into()));
        }
        Ok(p)
    }
}

/// A validated scenario with every derived object built.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub name: String,
    /// `None` only for a mutation or perturbed-flow model given without a graph.
    pub graph: Option<MetricGraph>,
    pub n_edges: usize,
    pub mode: ConditionMode,
    pub velocity: CoefficientField,
    pub diffusivity: CoefficientField,
    pub mutation: Option<MutationModel>,
    pub flow: Option<PerturbedFlow>,
    pub synaptic: Option<SynapticModel>,
    pub robin: Option<DMatrix<f64>>,
    pub initial: Profile,
    pub solver: SolverParams,
    pub warnings: Vec<String>,
}

fn matrix(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(Error::Schema(format!("{name} must be a non-empty rectangular matrix")));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

/// Builds and checks everything the scenario refers to.
pub fn validate(s: &Scenario) -> Result<Resolved> {
    let solver = SolverParams::resolve(&s.solver)?;
    let mut warnings = Vec::new();
    let mut graph = s.graph.as_ref().map(GraphSpec::build).transpose()?;
    let mut mutation = None;
    let mut flow = None;
    let mut synaptic = None;
    match &s.model {
        Some(ModelSpec::Mutation { k, q }) => {
            mutation = Some(build_mutation_model(&matrix(k, "K")?, &matrix(q, "Q")?, graph.as_ref())?);
        }
        Some(ModelSpec::PerturbedFlow { k, q }) => {
            flow = Some(build_perturbed_flow(&matrix(k, "K")?, &matrix(q, "Q")?, graph.as_ref())?);
        }
        Some(ModelSpec::Synaptic { rates, preset }) => {
            let model = match (rates, preset, &graph) {
                (Some(_), Some(_), _) => return Err(Error::Schema("give either rates or preset, not both".into())),
                (None, Some(p), None) => p.build(),
                (None, Some(p), Some(g)) => {
                    if *g != p.graph() {
                        return Err(Error::Schema("preset models come with their own graph; drop the graph field".into()));
                    }
                    p.build()
                }
                (Some(r), None, Some(g)) => {
                    let (model, w) = build_synaptic_model(g, r, solver.strict)?;
                    warnings.extend(w);
                    model
                }
                (Some(_), None, None) => return Err(Error::Schema("synaptic rates need a graph".into())),
                (None, None, _) => return Err(Error::Schema("synaptic model needs rates or a preset".into())),
            };
            graph.get_or_insert_with(|| model.graph.clone());
            synaptic = Some(model);
        }
        None => {}
    }
    let n_edges = match (&graph, &mutation, &flow) {
        (Some(g), _, _) => g.n_edges(),
        (None, Some(mm), _) => mm.n_edges(),
        (None, None, Some(f)) => f.n_edges(),
        (None, None, None) => return Err(Error::Schema("scenario needs a graph".into())),
    };
    let mode = s.conditions.unwrap_or(if synaptic.is_some() {
        ConditionMode::DiffusionRobin
    } else {
        ConditionMode::TransportStandard
    });
    let velocity = s
        .velocity
        .as_ref()
        .map_or(Ok(FieldSpec::Uniform(1.0)), |f| Ok::<_, Error>(f.clone()))?
        .build(CoefficientKind::Velocity, n_edges)?;
    velocity.check_len(n_edges)?;
    let diffusivity = match (&s.diffusivity, &synaptic) {
        (Some(_), Some(_)) => return Err(Error::Schema("the synaptic model fixes the diffusivity to 1".into())),
        (Some(f), None) => f.build(CoefficientKind::Diffusivity, n_edges)?,
        (None, _) => CoefficientField::uniform(CoefficientKind::Diffusivity, n_edges, 1.0)?,
    };
    diffusivity.check_len(n_edges)?;
    if (mutation.is_some() || flow.is_some()) && s.velocity.is_some() {
        return Err(Error::Schema("the flow models fix the velocity".into()));
    }
    let robin = match (&s.robin, &synaptic) {
        (Some(_), Some(_)) => return Err(Error::Schema("robin matrix and synaptic model are exclusive".into())),
        (Some(rows), None) => {
            let k = matrix(rows, "robin")?;
            if k.shape() != (2 * n_edges, 2 * n_edges) {
                return Err(Error::Schema(format!("robin matrix must be {0} x {0}", 2 * n_edges)));
            }
            Some(k)
        }
        (None, Some(model)) => Some(model.k_fick.clone()),
        (None, None) => None,
    };
    if mode == ConditionMode::DiffusionRobin && robin.is_none() {
        return Err(Error::Schema("diffusion-robin needs a robin matrix or a synaptic model".into()));
    }
    if mode != ConditionMode::TransportStandard && graph.is_none() {
        return Err(Error::Schema("diffusion needs a graph".into()));
    }
    let initial = Profile::new(s.initial.as_ref().unwrap_or(&InitialSpec::Constant(1.0)), n_edges, solver.seed)?;
    Ok(Resolved {
        name: s.name.clone().unwrap_or_else(|| "scenario".into()),
        graph,
        n_edges,
        mode,
        velocity,
        diffusivity,
        mutation,
        flow,
        synaptic,
        robin,
        initial,
        solver,
        warnings,
    })
}

impl Resolved {
    /// Transport boundary and speeds: `B_w` of the mutation model, the
    /// `ε = 1` member of a perturbed flow, otherwise built from the graph weights.
    pub fn transport_setup(&self) -> Result<(TransportBoundary, CoefficientField)> {
        match (&self.mutation, &self.flow, &self.graph) {
            (Some(m), _, _) => Ok((m.transport_boundary(), m.velocity())),
            (None, Some(f), _) => f.member(1.0),
            (None, None, Some(g)) => Ok((transport_boundary(g, &self.velocity)?, self.velocity.clone())),
            (None, None, None) => Err(Error::Schema("transport needs a graph".into())),
        }
    }

    pub fn transport_boundary(&self) -> Result<TransportBoundary> {
        Ok(self.transport_setup()?.0)
    }

    pub fn diffusion_boundary(&self) -> Result<DiffusionBoundary> {
        let g = self.graph.as_ref().ok_or_else(|| Error::Schema("diffusion needs a graph".into()))?;
        match self.mode {
            ConditionMode::DiffusionRobin => {
                robin_boundary(self.robin.as_ref().expect("checked in validate"))
            }
            _ => diffusion_boundary_standard(g, &self.diffusivity),
        }
    }
}

/// Evaluable initial data.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Constant(f64),
    Piecewise(Vec<f64>),
    Cosine { mean: f64, amplitude: f64, mode: u32 },
    Tables(Vec<Vec<f64>>),
}

impl Profile {
    pub fn new(spec: &InitialSpec, m: usize, seed: u64) -> Result<Self> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        Ok(match spec {
            InitialSpec::Constant(c) if c.is_finite() => Profile::Constant(*c),
            InitialSpec::Constant(_) => return Err(Error::Schema("initial constant must be finite".into())),
            InitialSpec::Piecewise(v) => {
                if v.len() != m || !finite(v) {
                    return Err(Error::Schema(format!("piecewise initial data needs {m} finite values")));
                }
                Profile::Piecewise(v.clone())
            }
            InitialSpec::Cosine(c) => {
                if !(c.mean.is_finite() && c.amplitude.is_finite()) {
                    return Err(Error::Schema("cosine parameters must be finite".into()));
                }
                Profile::Cosine { mean: c.mean, amplitude: c.amplitude, mode: c.mode }
            }
            InitialSpec::Samples(t) => {
                if t.len() != m || t.iter().any(|r| r.len() < 2 || !finite(r)) {
                    return Err(Error::Schema(format!("sample tables needed for all {m} edges, at least 2 finite values each")));
                }
                Profile::Tables(t.clone())
            }
            InitialSpec::Random(r) => {
                if !(r.low.is_finite() && r.high.is_finite() && r.low <= r.high) || r.samples < 2 {
                    return Err(Error::Schema("random initial data needs low <= high and at least 2 samples".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let tables = (0..m)
                    .map(|_| (0..r.samples).map(|_| if r.low == r.high { r.low } else { rng.gen_range(r.low..r.high) }).collect())
                    .collect();
                Profile::Tables(tables)
            }
        })
    }

    pub fn value(&self, j: usize, s: f64) -> f64 {
        match self {
            Profile::Constant(c) => *c,
            Profile::Piecewise(v) => v[j],
            Profile::Cosine { mean, amplitude, mode } => mean + amplitude * (*mode as f64 * std::f64::consts::PI * s).cos(),
            Profile::Tables(t) => EdgeCoefficient::Tabulated { samples: t[j].clone() }.value(s),
        }
    }

    /// Edgewise-constant data lies in the finite-dimensional subspace.
    pub fn is_edgewise_constant(&self) -> bool {
        match self {
            Profile::Constant(_) | Profile::Piecewise(_) => true,
            Profile::Cosine { amplitude, mode, .. } => *amplitude == 0.0 || *mode == 0,
            Profile::Tables(t) => t.iter().all(|r| r.iter().all(|&x| x == r[0])),
        }
    }
}
