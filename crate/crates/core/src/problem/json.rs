use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Components, CompositeProblem, FeasibleSet, Optimum, ProxTerm, SmoothFiniteSum};
use crate::error::{Error, Result};

/// On-disk form of a [`CompositeProblem`]. Matrices are row-major nested arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDocument {
    pub kind: String,
    pub dim: usize,
    pub components: ComponentsDocument,
    pub h: ProxTerm,
    pub set: FeasibleSet,
    pub x0: Vec<f64>,
    #[serde(default)]
    pub optimum: Option<Optimum>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ComponentsDocument {
    LeastSquares {
        rows: Vec<Vec<f64>>,
        targets: Vec<f64>,
    },
    Logistic {
        features: Vec<Vec<f64>>,
        labels: Vec<f64>,
    },
    Quadratic {
        curvature: Vec<Vec<f64>>,
        scales: Vec<f64>,
        linear: Vec<Vec<f64>>,
    },
}

fn to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn from_rows(rows: &[Vec<f64>], cols: usize, what: &str) -> Result<Array2<f64>> {
    let mut flat = Vec::with_capacity(rows.len() * cols);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != cols {
            return Err(Error::InvalidProblem(format!(
                "{what} row {i} has {} entries, expected {cols}",
                r.len()
            )));
        }
        flat.extend_from_slice(r);
    }
    Array2::from_shape_vec((rows.len(), cols), flat).map_err(|e| Error::InvalidProblem(e.to_string()))
}

impl CompositeProblem {
    pub fn to_document(&self) -> ProblemDocument {
        let (kind, components) = match self.f.components() {
            Components::LeastSquares { rows, targets } => (
                "least_squares",
                ComponentsDocument::LeastSquares {
                    rows: to_rows(rows),
                    targets: targets.to_vec(),
                },
            ),
            Components::Logistic { features, labels } => (
                "logistic",
                ComponentsDocument::Logistic {
                    features: to_rows(features),
                    labels: labels.to_vec(),
                },
            ),
            Components::Quadratic {
                curvature,
                scales,
                linear,
            } => (
                "quadratic",
                ComponentsDocument::Quadratic {
                    curvature: to_rows(curvature),
                    scales: scales.to_vec(),
                    linear: to_rows(linear),
                },
            ),
        };
        ProblemDocument {
            kind: kind.to_string(),
            dim: self.dim(),
            components,
            h: self.h.clone(),
            set: self.set.clone(),
            x0: self.x0.to_vec(),
            optimum: self.optimum.clone(),
        }
    }

    pub fn from_document(doc: &ProblemDocument) -> Result<Self> {
        let d = doc.dim;
        let components = match (&doc.components, doc.kind.as_str()) {
            (ComponentsDocument::LeastSquares { rows, targets }, "least_squares") => Components::LeastSquares {
                rows: from_rows(rows, d, "rows")?,
                targets: Array1::from(targets.clone()),
            },
            (ComponentsDocument::Logistic { features, labels }, "logistic") => Components::Logistic {
                features: from_rows(features, d, "features")?,
                labels: Array1::from(labels.clone()),
            },
            (
                ComponentsDocument::Quadratic {
                    curvature,
                    scales,
                    linear,
                },
                "quadratic",
            ) => Components::Quadratic {
                curvature: from_rows(curvature, d, "curvature")?,
                scales: Array1::from(scales.clone()),
                linear: from_rows(linear, d, "linear")?,
            },
            (_, kind) => {
                return Err(Error::InvalidProblem(format!(
                    "kind {kind:?} does not match the component fields"
                )))
            }
        };
        let f = SmoothFiniteSum::new(components)?;
        Self::new(
            f,
            doc.h.clone(),
            doc.set.clone(),
            Array1::from(doc.x0.clone()),
            doc.optimum.clone(),
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ProblemDocument = serde_json::from_str(s)?;
        Self::from_document(&doc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut s = self.to_json()?;
        s.push('\n');
        std::fs::write(path, s)?;
        Ok(())
    }
}
