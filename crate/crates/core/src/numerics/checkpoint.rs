use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Param, ParamStore};
use crate::Scalar;

const FORMAT: &str = "sc-gan-params";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("checkpoint format: {0}")]
    Format(String),
}

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: [usize; 2],
    value: Vec<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Container {
    format: String,
    version: u32,
    step: u64,
    tensors: Vec<TensorRecord>,
}

fn flat<T: Scalar>(a: &Array2<T>) -> Vec<f64> {
    a.iter().map(|x| x.to_f64_lossy()).collect()
}

fn unflat<T: Scalar>(name: &str, shape: [usize; 2], data: &[f64]) -> Result<Array2<T>, CheckpointError> {
    let values: Vec<T> = data.iter().map(|&x| T::lit(x)).collect();
    Array2::from_shape_vec((shape[0], shape[1]), values)
        .map_err(|_| CheckpointError::Format(format!("tensor {name}: {} values for shape {shape:?}", data.len())))
}

/// Writes values, Adam moments and the step counter as JSON. `f64` values
/// round-trip exactly; `f32` widens losslessly.
pub fn write_params<T: Scalar, W: Write>(store: &ParamStore<T>, mut w: W) -> Result<(), CheckpointError> {
    let container = Container {
        format: FORMAT.into(),
        version: VERSION,
        step: store.step,
        tensors: store
            .iter()
            .map(|p| TensorRecord {
                name: p.name.clone(),
                shape: [p.value.nrows(), p.value.ncols()],
                value: flat(&p.value),
                m: flat(&p.m),
                v: flat(&p.v),
            })
            .collect(),
    };
    serde_json::to_writer(&mut w, &container)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn read_params<T: Scalar, R: Read>(r: R) -> Result<ParamStore<T>, CheckpointError> {
    let c: Container = serde_json::from_reader(r)?;
    if c.format != FORMAT || c.version != VERSION {
        return Err(CheckpointError::Format(format!(
            "unsupported container {} v{}",
            c.format, c.version
        )));
    }
    let mut params = Vec::with_capacity(c.tensors.len());
    for t in c.tensors {
        let value = unflat(&t.name, t.shape, &t.value)?;
        let m = unflat(&t.name, t.shape, &t.m)?;
        let v = unflat(&t.name, t.shape, &t.v)?;
        let grad = Array2::zeros(value.raw_dim());
        params.push(Param {
            name: t.name,
            value,
            grad,
            m,
            v,
        });
    }
    Ok(ParamStore::from_params(params, c.step))
}

pub fn save_params<T: Scalar>(store: &ParamStore<T>, path: &Path) -> Result<(), CheckpointError> {
    let mut buf = Vec::new();
    write_params(store, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_params<T: Scalar>(path: &Path) -> Result<ParamStore<T>, CheckpointError> {
    read_params(fs::File::open(path)?)
}

impl<T: Scalar> ParamStore<T> {
    /// Replaces values and moments with those of `other`, matching blocks by
    /// name. Fails if the layouts differ.
    pub fn restore_from(&mut self, other: &ParamStore<T>) -> Result<(), CheckpointError> {
        if self.len() != other.len() {
            return Err(CheckpointError::Format(format!(
                "expected {} tensors, checkpoint has {}",
                self.len(),
                other.len()
            )));
        }
        for (mine, theirs) in self.iter_mut().zip(other.iter()) {
            if mine.name != theirs.name || mine.value.dim() != theirs.value.dim() {
                return Err(CheckpointError::Format(format!(
                    "tensor {} {:?} does not match checkpoint {} {:?}",
                    mine.name,
                    mine.value.dim(),
                    theirs.name,
                    theirs.value.dim()
                )));
            }
            mine.value.assign(&theirs.value);
            mine.m.assign(&theirs.m);
            mine.v.assign(&theirs.v);
            mine.grad.fill(T::zero());
        }
        self.step = other.step;
        Ok(())
    }
}
