use std::path::Path;

use crate::autodiff::{AdamConfig, AdamState, ParamStore};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

use super::record::{read_records, write_records, TensorRecord};

const STEP_RECORD: &str = "adam.step";
const SEED_RECORD: &str = "init.seed";
const CONFIG_RECORD: &str = "adam.config";

/// Parameters plus optional optimizer moments.
#[derive(Clone, Debug)]
pub struct Checkpoint<T: Real> {
    pub params: ParamStore<T>,
    pub optimizer: Option<AdamState<T>>,
}

/// Writes every parameter as a record of its own name, followed by the Adam
/// moments (`adam.m.<name>`, `adam.v.<name>`) and step counter.
pub fn save_checkpoint<T: Real>(path: &Path, params: &ParamStore<T>, optimizer: Option<&AdamState<T>>) -> Result<()> {
    let mut records = Vec::new();
    for (name, p) in params.iter() {
        records.push(TensorRecord::from_tensor(name, &p.value)?);
    }
    records.push(TensorRecord::from_tensor(SEED_RECORD, &Tensor::new(vec![1], vec![params.rng_seed() as f64])?)?);
    if let Some(opt) = optimizer {
        for (kind, moments) in [("m", &opt.m), ("v", &opt.v)] {
            for (name, values) in moments {
                let shape = params
                    .get(name)
                    .ok_or_else(|| Error::config(format!("optimizer moment for unknown parameter {name}")))?
                    .shape()
                    .to_vec();
                records.push(TensorRecord::from_tensor(format!("adam.{kind}.{name}"), &Tensor::new(shape, values.clone())?)?);
            }
        }
        let c = opt.config;
        records.push(TensorRecord::from_tensor(CONFIG_RECORD, &Tensor::new(vec![4], vec![c.lr, c.beta1, c.beta2, c.eps])?)?);
        records.push(TensorRecord::from_tensor(STEP_RECORD, &Tensor::new(vec![1], vec![opt.step as f64])?)?);
    }
    write_records(path, &records)
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<Checkpoint<T>> {
    let records = read_records(path)?;
    let seed = records
        .iter()
        .find(|r| r.name() == SEED_RECORD)
        .map(|r| r.to_tensor::<f64>().map(|t| t.data()[0] as u64))
        .transpose()?
        .unwrap_or(0);
    let mut params = ParamStore::new(seed);
    let mut opt = AdamState::<T>::new(AdamConfig::default());
    let mut has_opt = false;
    for r in &records {
        let name = r.name();
        if name == SEED_RECORD {
            continue;
        }
        if name == CONFIG_RECORD {
            let c = r.to_tensor::<f64>()?;
            let c = c.data();
            if c.len() != 4 {
                return Err(Error::config(format!("{}: malformed optimizer config", path.display())));
            }
            opt.config = AdamConfig { lr: c[0], beta1: c[1], beta2: c[2], eps: c[3] };
        } else if name == STEP_RECORD {
            opt.step = r.to_tensor::<f64>()?.data()[0] as u64;
            has_opt = true;
        } else if let Some(n) = name.strip_prefix("adam.m.") {
            opt.m.insert(n.to_string(), r.to_tensor()?.into_data());
        } else if let Some(n) = name.strip_prefix("adam.v.") {
            opt.v.insert(n.to_string(), r.to_tensor()?.into_data());
        } else {
            params.insert(name, r.to_tensor()?)?;
        }
    }
    if has_opt && (opt.m.len() != params.len() || opt.v.len() != params.len()) {
        return Err(Error::config(format!("{}: optimizer moments do not cover every parameter", path.display())));
    }
    Ok(Checkpoint { params, optimizer: has_opt.then_some(opt) })
}
