use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::{parse_ratio, parse_value, Configurable, KeyValues};
use crate::error::{Error, Result};
use crate::kspace::{forward_model, make_cartesian_mask, ComplexImage, KSpace, SamplingMask};
use crate::scalar::Real;
use crate::tensor::Tensor;

use super::phantom::{gen_phantom, PhantomSpec};
use super::record::{load_record, save_record, TensorRecord};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const MANIFEST_VERSION: &str = "rfk-dataset-1";

/// Parameters of a synthetic dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub samples: usize,
    pub height: usize,
    pub width: usize,
    pub acceleration: f64,
    pub center_fraction: f64,
    pub noise_sigma: f64,
    pub master_seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self { samples: 8, height: 64, width: 64, acceleration: 4.0, center_fraction: 0.08, noise_sigma: 0.0, master_seed: 0 }
    }
}

impl Configurable for DatasetSpec {
    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "samples" => self.samples = parse_value(key, value)?,
            "height" => self.height = parse_value(key, value)?,
            "width" => self.width = parse_value(key, value)?,
            "acceleration" => self.acceleration = parse_ratio(key, value)?,
            "center_fraction" => self.center_fraction = parse_ratio(key, value)?,
            "noise_sigma" => self.noise_sigma = parse_value(key, value)?,
            "master_seed" => self.master_seed = parse_value(key, value)?,
            _ => return Err(Error::config(format!("unknown dataset key {key:?}"))),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(String, String)> {
        vec![
            ("samples".to_string(), self.samples.to_string()),
            ("height".to_string(), self.height.to_string()),
            ("width".to_string(), self.width.to_string()),
            ("acceleration".to_string(), self.acceleration.to_string()),
            ("center_fraction".to_string(), self.center_fraction.to_string()),
            ("noise_sigma".to_string(), self.noise_sigma.to_string()),
            ("master_seed".to_string(), self.master_seed.to_string()),
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleEntry {
    pub id: usize,
    pub seed: u64,
    pub ground_truth: String,
    pub kspace: String,
    pub mask: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub spec: DatasetSpec,
    pub samples: Vec<SampleEntry>,
}

/// A loaded, fully materialized sample.
#[derive(Clone, Debug)]
pub struct Sample<T: Real> {
    pub id: usize,
    pub seed: u64,
    pub ground_truth: ComplexImage<T>,
    pub kspace: KSpace<T>,
    pub mask: SamplingMask,
}

#[derive(Clone, Debug)]
pub struct Dataset<T: Real> {
    pub manifest: DatasetManifest,
    pub samples: Vec<Sample<T>>,
}

const HEADER: &str = "id\tseed\tground_truth\tkspace\tmask";

impl DatasetManifest {
    pub fn render(&self) -> String {
        let s = &self.spec;
        let mut out = String::new();
        let _ = writeln!(out, "version = {MANIFEST_VERSION}");
        let _ = writeln!(out, "samples = {}", s.samples);
        let _ = writeln!(out, "height = {}", s.height);
        let _ = writeln!(out, "width = {}", s.width);
        let _ = writeln!(out, "acceleration = {}", s.acceleration);
        let _ = writeln!(out, "center_fraction = {}", s.center_fraction);
        let _ = writeln!(out, "noise_sigma = {}", s.noise_sigma);
        let _ = writeln!(out, "master_seed = {}", s.master_seed);
        let _ = writeln!(out, "\n{HEADER}");
        for e in &self.samples {
            let _ = writeln!(out, "{}\t{}\t{}\t{}\t{}", e.id, e.seed, e.ground_truth, e.kspace, e.mask);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let (head, table) = text
            .split_once(HEADER)
            .ok_or_else(|| Error::config("manifest has no sample table"))?;
        let kv = KeyValues::parse(head)?;
        let mut spec = DatasetSpec::default();
        let mut version = None;
        for (k, v) in kv.entries() {
            match k.as_str() {
                "version" => version = Some(v.clone()),
                _ => spec.set(k, v)?,
            }
        }
        if version.as_deref() != Some(MANIFEST_VERSION) {
            return Err(Error::config(format!("unsupported manifest version {version:?}")));
        }
        let mut samples = Vec::new();
        for line in table.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 5 {
                return Err(Error::config(format!("malformed manifest row {line:?}")));
            }
            samples.push(SampleEntry {
                id: parse_value("id", f[0])?,
                seed: parse_value("seed", f[1])?,
                ground_truth: f[2].to_string(),
                kspace: f[3].to_string(),
                mask: f[4].to_string(),
            });
        }
        if samples.len() != spec.samples {
            return Err(Error::config(format!("manifest lists {} samples, header says {}", samples.len(), spec.samples)));
        }
        Ok(Self { spec, samples })
    }
}

fn image_tensor(data: &[f64], h: usize, w: usize) -> Result<Tensor<f64>> {
    Tensor::new(vec![h, w, 2], data.to_vec())
}

/// Generates `spec.samples` phantoms with fresh masks and measurements under
/// `out_dir`. Sample `i` uses seed `master_seed + i` for its phantom, mask
/// and noise.
pub fn build_dataset(spec: &DatasetSpec, out_dir: &Path) -> Result<DatasetManifest> {
    if spec.samples == 0 {
        return Err(Error::config("dataset needs at least one sample"));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let (h, w) = (spec.height, spec.width);
    let mut samples = Vec::with_capacity(spec.samples);
    for i in 0..spec.samples {
        let seed = spec.master_seed.wrapping_add(i as u64);
        let y = gen_phantom(&PhantomSpec::new(h, w, seed))?;
        let mask = make_cartesian_mask(w, spec.acceleration, spec.center_fraction, seed)?;
        let x = forward_model(&y, &mask, spec.noise_sigma, seed)?;
        let entry = SampleEntry {
            id: i,
            seed,
            ground_truth: format!("sample_{i:04}.gt.rfk"),
            kspace: format!("sample_{i:04}.ksp.rfk"),
            mask: format!("sample_{i:04}.mask.rfk"),
        };
        save_record(&out_dir.join(&entry.ground_truth), &TensorRecord::from_tensor("ground_truth", &image_tensor(y.data(), h, w)?)?)?;
        save_record(&out_dir.join(&entry.kspace), &TensorRecord::from_tensor("kspace", &image_tensor(x.data(), h, w)?)?)?;
        let cols: Vec<f64> = mask.columns().iter().map(|&c| if c { 1.0 } else { 0.0 }).collect();
        save_record(&out_dir.join(&entry.mask), &TensorRecord::from_tensor("mask", &Tensor::new(vec![w], cols)?)?)?;
        samples.push(entry);
    }
    let manifest = DatasetManifest { spec: spec.clone(), samples };
    let path = out_dir.join(MANIFEST_FILE);
    std::fs::write(&path, manifest.render()).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

fn load_image(path: &PathBuf, name: &str, h: usize, w: usize) -> Result<Vec<f64>> {
    let t = load_record(path, name)?.to_tensor::<f64>()?;
    if t.shape() != [h, w, 2] {
        return Err(Error::shape("load_dataset", format!("{}: shape {:?}, expected [{h}, {w}, 2]", path.display(), t.shape())));
    }
    Ok(t.into_data())
}

/// Reads a dataset written by [`build_dataset`], casting values to `T`.
///
/// Stored masks are checked against the generator for the recorded seed.
pub fn load_dataset<T: Real>(dir: &Path) -> Result<Dataset<T>> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest = DatasetManifest::parse(&text)?;
    let s = &manifest.spec;
    let (h, w) = (s.height, s.width);
    let mut samples = Vec::with_capacity(manifest.samples.len());
    for e in &manifest.samples {
        let y = ComplexImage::new(h, w, load_image(&dir.join(&e.ground_truth), "ground_truth", h, w)?)?;
        let x = KSpace::new(h, w, load_image(&dir.join(&e.kspace), "kspace", h, w)?)?;
        let mask_path = dir.join(&e.mask);
        let cols = load_record(&mask_path, "mask")?.to_tensor::<f64>()?;
        let mask = make_cartesian_mask(w, s.acceleration, s.center_fraction, e.seed)?;
        let stored: Vec<bool> = cols.data().iter().map(|&v| v != 0.0).collect();
        if stored != mask.columns() {
            return Err(Error::config(format!("{}: mask does not match seed {}", mask_path.display(), e.seed)));
        }
        samples.push(Sample { id: e.id, seed: e.seed, ground_truth: y.cast(), kspace: x.cast(), mask });
    }
    Ok(Dataset { manifest, samples })
}
