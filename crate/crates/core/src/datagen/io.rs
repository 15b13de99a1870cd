//! JSON container: a header `{num_classes, num_groups, dim, n, split_tag, image}`, then
//! the row-major sample matrix, then the label / group / known-mask arrays.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GroupedDataset, ImageShape, Split};
use crate::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct Header {
    pub num_classes: usize,
    pub num_groups: usize,
    pub dim: usize,
    pub n: usize,
    pub split_tag: Split,
    #[serde(default)]
    pub image: Option<ImageShape>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct Container {
    pub header: Header,
    pub samples: Vec<f64>,
    pub labels: Vec<usize>,
    pub groups: Vec<usize>,
    pub group_known: Vec<bool>,
}

impl From<&GroupedDataset> for Container {
    fn from(ds: &GroupedDataset) -> Self {
        Container {
            header: Header {
                num_classes: ds.num_classes,
                num_groups: ds.num_groups,
                dim: ds.dim,
                n: ds.len(),
                split_tag: ds.split,
                image: ds.image,
            },
            samples: ds.samples.clone(),
            labels: ds.labels.clone(),
            groups: ds.groups.clone(),
            group_known: ds.group_known.clone(),
        }
    }
}

impl Container {
    pub(crate) fn into_dataset(self, path: &Path) -> Result<GroupedDataset> {
        let h = self.header;
        if self.labels.len() != h.n || self.samples.len() != h.n * h.dim {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!(
                    "header declares n={} dim={} but found {} labels and {} values",
                    h.n,
                    h.dim,
                    self.labels.len(),
                    self.samples.len()
                ),
            });
        }
        let ds = GroupedDataset {
            num_classes: h.num_classes,
            num_groups: h.num_groups,
            dim: h.dim,
            split: h.split_tag,
            image: h.image,
            samples: self.samples,
            labels: self.labels,
            groups: self.groups,
            group_known: self.group_known,
        };
        ds.validate().map_err(|e| Error::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Ok(ds)
    }
}

pub fn save_dataset(ds: &GroupedDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = serde_json::to_vec(&Container::from(ds)).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<GroupedDataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let container: Container = serde_json::from_slice(&bytes).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    container.into_dataset(path)
}
