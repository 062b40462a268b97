//! Samples, label schemas, file loading and the digit-stripping preprocessor.

mod distribution;
mod io;
mod preprocess;
mod schema;
mod split;

pub use distribution::{label_distribution, LabelDistribution};
pub use io::{load_split, load_split_with, read_split, write_split, write_split_to, DataFormat, LoadOptions};
pub use preprocess::{is_bangla_digit, preprocess, BANGLA_DIGITS};
pub use schema::{LabelSchema, PerTask, SchemaSet, TaskId, SEVERITY_LABELS, TARGET_LABELS, TYPE_LABELS};
pub use split::{DatasetSplit, Sample, SplitName};
