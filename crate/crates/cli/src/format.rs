//! JSON wire types.

use std::fmt;
use std::path::Path;

use etrs::nalgebra::{DMatrix, DVector};
use etrs::ProblemInstance;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub n: usize,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    #[serde(rename = "A", default)]
    pub a: Vec<Vec<f64>>,
    #[serde(default)]
    pub b: Vec<f64>,
    /// Additive constant in the objective.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub constant: f64,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

impl InstanceFile {
    pub fn to_instance(&self) -> Result<ProblemInstance, InputError> {
        if self.q.len() != self.n || self.c.len() != self.n {
            return Err(InputError::Invalid(format!(
                "n = {} but Q has {} rows and c has {} entries",
                self.n,
                self.q.len(),
                self.c.len()
            )));
        }
        let inst = ProblemInstance::from_rows(&self.q, &self.c, &self.a, &self.b)
            .map_err(|e| InputError::Invalid(e.to_string()))?;
        Ok(inst.with_constant(self.constant))
    }

    pub fn from_instance(inst: &ProblemInstance) -> Self {
        Self {
            n: inst.n(),
            q: rows(&inst.q),
            c: inst.c.iter().copied().collect(),
            a: rows(&inst.a),
            b: inst.b.iter().copied().collect(),
            constant: inst.constant,
        }
    }
}

pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Entries with negative zero folded to zero.
pub fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().map(|x| x + 0.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub status: String,
    pub value: Option<f64>,
    pub x: Vec<f64>,
    pub multiplier: Option<f64>,
    pub active_set: Vec<usize>,
    pub trs0_solves: usize,
    pub dc: bool,
    pub newdc: bool,
    pub surrogate_value: Option<f64>,
}

#[derive(Debug)]
pub enum InputError {
    Io(String),
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    Invalid(String),
}

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputError::Io(m) | InputError::Invalid(m) => f.write_str(m),
            InputError::Parse {
                line,
                column,
                message,
            } => write!(f, "line {line}, column {column}: {message}"),
        }
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, InputError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| InputError::Io(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        let full = e.to_string();
        let suffix = format!(" at line {} column {}", e.line(), e.column());
        InputError::Parse {
            line: e.line(),
            column: e.column(),
            message: full.strip_suffix(&suffix).unwrap_or(&full).to_string(),
        }
    })
}

pub fn read_instance(path: &Path) -> Result<ProblemInstance, InputError> {
    read_json::<InstanceFile>(path)?.to_instance()
}
