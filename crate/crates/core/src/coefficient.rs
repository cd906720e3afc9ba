//! Per-edge coefficient functions and the travel-time change of variables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible tabulated sample.
pub const SAMPLE_FLOOR: f64 = 1e-12;

/// Coefficient on one edge: a constant, or samples on a uniform grid of
/// `[0, 1]` joined linearly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EdgeCoefficient {
    Constant(f64),
    Tabulated { samples: Vec<f64> },
}

impl EdgeCoefficient {
    pub fn value(&self, s: f64) -> f64 {
        match self {
            EdgeCoefficient::Constant(c) => *c,
            EdgeCoefficient::Tabulated { samples } => {
                let k = samples.len() - 1;
                let x = s.clamp(0.0, 1.0) * k as f64;
                let i = (x.floor() as usize).min(k - 1);
                let t = x - i as f64;
                samples[i] * (1.0 - t) + samples[i + 1] * t
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoefficientKind {
    /// Transport velocity `c`.
    Velocity,
    /// Diffusivity `a`.
    Diffusivity,
}

/// Strictly positive coefficient, one entry per edge.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    kind: CoefficientKind,
    edges: Vec<EdgeCoefficient>,
}

impl CoefficientField {
    pub fn new(kind: CoefficientKind, edges: Vec<EdgeCoefficient>) -> Result<Self> {
        for (j, e) in edges.iter().enumerate() {
            match e {
                EdgeCoefficient::Constant(c) => {
                    if !(c.is_finite() && *c > 0.0) {
                        return Err(Error::NonPositiveCoefficient { edge: j, value: *c });
                    }
                }
                EdgeCoefficient::Tabulated { samples } => {
                    if samples.len() < 2 {
                        return Err(Error::InvalidParameter(format!(
                            "edge {j}: a tabulated coefficient needs at least 2 samples"
                        )));
                    }
                    if let Some(&bad) =
                        samples.iter().find(|v| !(v.is_finite() && **v >= SAMPLE_FLOOR))
                    {
                        return Err(Error::NonPositiveCoefficient { edge: j, value: bad });
                    }
                }
            }
        }
        Ok(CoefficientField { kind, edges })
    }

    pub fn uniform(kind: CoefficientKind, m: usize, value: f64) -> Result<Self> {
        Self::new(kind, vec![EdgeCoefficient::Constant(value); m])
    }

    pub fn constants(kind: CoefficientKind, values: &[f64]) -> Result<Self> {
        Self::new(kind, values.iter().map(|&v| EdgeCoefficient::Constant(v)).collect())
    }

    pub fn kind(&self) -> CoefficientKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn edge(&self, j: usize) -> &EdgeCoefficient {
        &self.edges[j]
    }

    pub fn edges(&self) -> &[EdgeCoefficient] {
        &self.edges
    }

    pub fn value(&self, j: usize, s: f64) -> f64 {
        self.edges[j].value(s)
    }

    pub fn is_edgewise_constant(&self) -> bool {
        self.edges.iter().all(|e| matches!(e, EdgeCoefficient::Constant(_)))
    }

    pub(crate) fn check_len(&self, m: usize) -> Result<()> {
        if self.edges.len() != m {
            return Err(Error::ShapeMismatch(format!(
                "coefficient has {} edges, graph has {m}",
                self.edges.len()
            )));
        }
        Ok(())
    }
}

/// `φ_j(s) = ∫_0^s dr / c_j(r)` for one edge.
#[derive(Debug, Clone, PartialEq)]
enum EdgeTravelTime {
    Linear { speed: f64 },
    /// Cumulative trapezoid values at the sample nodes, plus the reciprocal
    /// samples for partial cells.
    Table { cumulative: Vec<f64>, reciprocal: Vec<f64> },
}

/// Travel-time coordinates of every edge.
#[derive(Debug, Clone, PartialEq)]
pub struct TravelTimeMap {
    edges: Vec<EdgeTravelTime>,
}

const INVERSE_TOL: f64 = 1e-12;

impl TravelTimeMap {
    pub fn phi(&self, j: usize, s: f64) -> f64 {
        let s = s.clamp(0.0, 1.0);
        match &self.edges[j] {
            EdgeTravelTime::Linear { speed } => s / speed,
            EdgeTravelTime::Table { cumulative, reciprocal } => {
                let k = cumulative.len() - 1;
                let x = s * k as f64;
                let i = (x.floor() as usize).min(k - 1);
                let t = x - i as f64;
                let ds = 1.0 / k as f64;
                let r_end = reciprocal[i] * (1.0 - t) + reciprocal[i + 1] * t;
                cumulative[i] + 0.5 * (reciprocal[i] + r_end) * t * ds
            }
        }
    }

    /// Edge travel time `ℓ_j = φ_j(1)`.
    pub fn length(&self, j: usize) -> f64 {
        match &self.edges[j] {
            EdgeTravelTime::Linear { speed } => 1.0 / speed,
            EdgeTravelTime::Table { cumulative, .. } => *cumulative.last().expect("non-empty"),
        }
    }

    pub fn lengths(&self) -> Vec<f64> {
        (0..self.edges.len()).map(|j| self.length(j)).collect()
    }

    /// `φ_j^{-1}(y)` by bisection.
    pub fn inverse(&self, j: usize, y: f64) -> f64 {
        match &self.edges[j] {
            EdgeTravelTime::Linear { speed } => (y * speed).clamp(0.0, 1.0),
            EdgeTravelTime::Table { .. } => {
                let (mut lo, mut hi) = (0.0f64, 1.0f64);
                if y <= 0.0 {
                    return 0.0;
                }
                if y >= self.length(j) {
                    return 1.0;
                }
                while hi - lo > INVERSE_TOL {
                    let mid = 0.5 * (lo + hi);
                    if self.phi(j, mid) < y {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

/// Builds the travel-time map: exact for constants, composite trapezoid on
/// the tabulated reciprocal otherwise.
pub fn travel_time(c: &CoefficientField) -> Result<TravelTimeMap> {
    let edges = c
        .edges()
        .iter()
        .enumerate()
        .map(|(j, e)| match e {
            EdgeCoefficient::Constant(speed) => {
                if !(speed.is_finite() && *speed > 0.0) {
                    return Err(Error::NonPositiveCoefficient { edge: j, value: *speed });
                }
                Ok(EdgeTravelTime::Linear { speed: *speed })
            }
            EdgeCoefficient::Tabulated { samples } => {
                if let Some(&bad) = samples.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                    return Err(Error::NonPositiveCoefficient { edge: j, value: bad });
                }
                let reciprocal: Vec<f64> = samples.iter().map(|v| 1.0 / v).collect();
                let ds = 1.0 / (samples.len() - 1) as f64;
                let mut cumulative = Vec::with_capacity(samples.len());
                let mut acc = 0.0;
                cumulative.push(0.0);
                for w in reciprocal.windows(2) {
                    acc += 0.5 * (w[0] + w[1]) * ds;
                    cumulative.push(acc);
                }
                Ok(EdgeTravelTime::Table { cumulative, reciprocal })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TravelTimeMap { edges })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_speeds() {
        let c = CoefficientField::constants(CoefficientKind::Velocity, &[1.0, 2.0]).unwrap();
        let tt = travel_time(&c).unwrap();
        assert_eq!(tt.length(0), 1.0);
        assert_eq!(tt.length(1), 0.5);
        assert_eq!(tt.phi(1, 0.3), 0.15);
        assert_eq!(tt.inverse(1, 0.15), 0.3);
    }

    #[test]
    fn tabulated_travel_time() {
        // c(s) = 1/(1+s), so ℓ = ∫ (1+s) ds = 3/2
        let samples: Vec<f64> = (0..1025).map(|i| 1.0 / (1.0 + i as f64 / 1024.0)).collect();
        let c = CoefficientField::new(CoefficientKind::Velocity, vec![EdgeCoefficient::Tabulated {
            samples,
        }])
        .unwrap();
        let tt = travel_time(&c).unwrap();
        assert!((tt.length(0) - 1.5).abs() < 1e-6);
        // φ(s) = s + s²/2 and its inverse
        for &s in &[0.0, 0.1, 0.37, 0.5, 0.99, 1.0] {
            assert!((tt.phi(0, s) - (s + 0.5 * s * s)).abs() < 1e-6);
            assert!((tt.inverse(0, tt.phi(0, s)) - s).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_nonpositive() {
        assert!(matches!(
            CoefficientField::constants(CoefficientKind::Velocity, &[1.0, 0.0]),
            Err(Error::NonPositiveCoefficient { edge: 1, .. })
        ));
        let bad = EdgeCoefficient::Tabulated { samples: vec![1.0, f64::NAN] };
        assert!(CoefficientField::new(CoefficientKind::Diffusivity, vec![bad]).is_err());
    }

    #[test]
    fn tabulated_value_interpolates() {
        let e = EdgeCoefficient::Tabulated { samples: vec![1.0, 3.0] };
        assert_eq!(e.value(0.5), 2.0);
        assert_eq!(e.value(1.0), 3.0);
    }
}
