//! System documents (`swlp-sys-v1` JSON) and trajectory CSV export.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SwlpError};
use crate::field::{Field, Scalars};
use crate::generator::GeneratorRealization;
use crate::heat::{build_heat_system, HeatModel};
use crate::schrodinger::{build_schrodinger_system, SchrodingerModel};
use crate::spaces::{DiscreteSpace, LinearMap};
use crate::stochastics::TimeGrid;
use crate::system::{Coefficient, StochasticSystemRealization, Trajectory};

pub const SYSTEM_SCHEMA: &str = "swlp-sys-v1";

/// Dense matrix, row-major. `im` is omitted for real matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixDoc {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<f64>>,
}

impl MatrixDoc {
    pub fn from_matrix<T: Field>(m: &DMatrix<T>) -> Self {
        let entries: Vec<T> = m.transpose().iter().copied().collect();
        let im = match T::SCALARS {
            Scalars::Real => None,
            Scalars::Complex => Some(entries.iter().map(|v| v.im()).collect()),
        };
        Self { rows: m.nrows(), cols: m.ncols(), re: entries.iter().map(|v| v.re()).collect(), im }
    }

    pub fn to_matrix<T: Field>(&self) -> Result<DMatrix<T>> {
        let n = self.rows * self.cols;
        if self.re.len() != n || self.im.as_ref().is_some_and(|v| v.len() != n) {
            return Err(SwlpError::Schema(format!("matrix entries do not match {}×{}", self.rows, self.cols)));
        }
        if T::SCALARS == Scalars::Real && self.im.as_ref().is_some_and(|v| v.iter().any(|x| *x != 0.0)) {
            return Err(SwlpError::Schema("complex entries in a real system".into()));
        }
        Ok(DMatrix::from_fn(self.rows, self.cols, |i, j| {
            let k = i * self.cols + j;
            T::from_parts(self.re[k], self.im.as_ref().map_or(0.0, |v| v[k]))
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceDoc {
    pub label: String,
    pub gram: MatrixDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientDoc {
    pub span: f64,
    pub pieces: Vec<MatrixDoc>,
}

/// Model the matrices were built from. Imports rebuild the system from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Extension {
    #[serde(rename = "heat-v1")]
    Heat(HeatModel),
    #[serde(rename = "schrodinger-v1")]
    Schrodinger(SchrodingerModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemDocument {
    pub schema: String,
    pub scalars: Scalars,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<TimeGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub h: SpaceDoc,
    pub u: SpaceDoc,
    pub utilde: SpaceDoc,
    pub a: MatrixDoc,
    pub b: MatrixDoc,
    pub c: MatrixDoc,
    pub f1: CoefficientDoc,
    pub f2: CoefficientDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extension: Option<Extension>,
}

fn space_doc(s: &DiscreteSpace) -> SpaceDoc {
    SpaceDoc { label: s.label().to_string(), gram: MatrixDoc::from_matrix(s.gram()) }
}

fn coefficient_doc<T: Field>(c: &Coefficient<T>) -> Result<CoefficientDoc> {
    if c.modulation().is_some() {
        return Err(SwlpError::Unsupported("adapted coefficient modulations cannot be exported".into()));
    }
    Ok(CoefficientDoc { span: c.span(), pieces: c.pieces().iter().map(MatrixDoc::from_matrix).collect() })
}

pub fn export_system<T: Field>(
    sys: &StochasticSystemRealization<T>,
    grid: Option<TimeGrid>,
    seed: Option<u64>,
    extension: Option<Extension>,
) -> Result<SystemDocument> {
    Ok(SystemDocument {
        schema: SYSTEM_SCHEMA.to_string(),
        scalars: T::SCALARS,
        grid,
        seed,
        h: space_doc(sys.h()),
        u: space_doc(sys.u()),
        utilde: space_doc(sys.utilde()),
        a: MatrixDoc::from_matrix(sys.generator().matrix()),
        b: MatrixDoc::from_matrix(sys.b().matrix()),
        c: MatrixDoc::from_matrix(sys.c().matrix()),
        f1: coefficient_doc(sys.f1())?,
        f2: coefficient_doc(sys.f2())?,
        extension,
    })
}

fn import_space(doc: &SpaceDoc, scalars: Scalars) -> Result<DiscreteSpace> {
    DiscreteSpace::new(doc.label.clone(), doc.gram.to_matrix::<f64>()?, scalars)
}

fn import_coefficient<T: Field>(doc: &CoefficientDoc) -> Result<Coefficient<T>> {
    let pieces = doc.pieces.iter().map(|m| m.to_matrix::<T>()).collect::<Result<Vec<_>>>()?;
    Coefficient::piecewise(doc.span, pieces)
}

/// Rebuilds the system. Heat and Schrödinger documents are rebuilt from their model block.
pub fn import_system<T: Field>(doc: &SystemDocument) -> Result<StochasticSystemRealization<T>> {
    if doc.schema != SYSTEM_SCHEMA {
        return Err(SwlpError::Schema(format!("expected schema {SYSTEM_SCHEMA}, found {}", doc.schema)));
    }
    if doc.scalars != T::SCALARS {
        return Err(SwlpError::Schema(format!("document holds {:?} scalars", doc.scalars)));
    }
    if let Some(ext) = &doc.extension {
        let rebuilt: Box<dyn std::any::Any> = match ext {
            Extension::Heat(m) => Box::new(build_heat_system(m)?),
            Extension::Schrodinger(m) => Box::new(build_schrodinger_system(m)?),
        };
        return rebuilt
            .downcast::<StochasticSystemRealization<T>>()
            .map(|b| *b)
            .map_err(|_| SwlpError::Schema("model block does not match the scalar field".into()));
    }
    let h = import_space(&doc.h, doc.scalars)?;
    let u = import_space(&doc.u, doc.scalars)?;
    let ut = import_space(&doc.utilde, doc.scalars)?;
    let a = doc.a.to_matrix::<T>()?;
    let ga = h.apply_gram(&a);
    let gen = if (&ga - ga.adjoint()).norm() <= 1e-12 * ga.norm().max(1.0) {
        GeneratorRealization::self_adjoint(h.clone(), a)?
    } else {
        GeneratorRealization::new(h.clone(), a)?
    };
    StochasticSystemRealization::new(
        gen,
        LinearMap::new(u, h.clone(), doc.b.to_matrix()?)?,
        LinearMap::new(h, ut, doc.c.to_matrix()?)?,
        import_coefficient(&doc.f1)?,
        import_coefficient(&doc.f2)?,
    )
}

pub fn system_to_json(doc: &SystemDocument) -> Result<String> {
    serde_json::to_string_pretty(doc).map_err(|e| SwlpError::Schema(e.to_string()))
}

pub fn system_from_json(text: &str) -> Result<SystemDocument> {
    serde_json::from_str(text).map_err(|e| SwlpError::Schema(e.to_string()))
}

/// Writes `path,node,time,component,value` rows; complex trajectories get `re,im` instead of `value`.
pub fn write_trajectory_csv<T: Field, W: Write>(traj: &Trajectory<T>, mut out: W) -> std::io::Result<()> {
    let complex = T::SCALARS == Scalars::Complex;
    if complex {
        writeln!(out, "path,node,time,component,re,im")?;
    } else {
        writeln!(out, "path,node,time,component,value")?;
    }
    let grid = traj.grid();
    for p in 0..traj.paths() {
        for n in 0..=grid.steps() {
            let t = grid.time(n);
            for (c, v) in traj.state(p, n).iter().enumerate() {
                if complex {
                    writeln!(out, "{p},{n},{t},{c},{},{}", v.re(), v.im())?;
                } else {
                    writeln!(out, "{p},{n},{t},{c},{}", v.re())?;
                }
            }
        }
    }
    Ok(())
}
