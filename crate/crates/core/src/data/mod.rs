//! Synthetic phantoms, the `RFK1` tensor container, datasets and checkpoints.

mod checkpoint;
mod dataset;
mod phantom;
mod record;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use dataset::{build_dataset, load_dataset, Dataset, DatasetManifest, DatasetSpec, Sample, SampleEntry};
pub use phantom::{gen_phantom, PhantomSpec};
pub use record::{decode_records, encode_records, load_record, read_records, save_record, write_records, TensorRecord};
