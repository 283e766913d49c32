use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::jsonl;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Query,
    Video,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureRecord {
    pub id: String,
    pub kind: FeatureKind,
    pub vector: Vec<f64>,
}

/// Dense query and video vectors of one shared dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStore {
    dim: usize,
    queries: BTreeMap<String, Vec<f64>>,
    videos: BTreeMap<String, Vec<f64>>,
}

impl FeatureStore {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("feature dimension must be positive".into()));
        }
        Ok(FeatureStore { dim, queries: BTreeMap::new(), videos: BTreeMap::new() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn insert(&mut self, kind: FeatureKind, id: &str, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: vector.len() });
        }
        if let Some(i) = vector.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("component {i} of `{id}`")));
        }
        let map = match kind {
            FeatureKind::Query => &mut self.queries,
            FeatureKind::Video => &mut self.videos,
        };
        if map.insert(id.to_string(), vector).is_some() {
            return Err(Error::Validation(format!("duplicate feature id `{id}`")));
        }
        Ok(())
    }

    pub fn query(&self, id: &str) -> Result<&[f64]> {
        self.queries
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingFeature { kind: "query", id: id.to_string() })
    }

    pub fn video(&self, id: &str) -> Result<&[f64]> {
        self.videos
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingFeature { kind: "video", id: id.to_string() })
    }

    pub fn num_queries(&self) -> usize {
        self.queries.len()
    }

    pub fn num_videos(&self) -> usize {
        self.videos.len()
    }

    pub fn records(&self) -> Vec<FeatureRecord> {
        let q = self.queries.iter().map(|(id, v)| FeatureRecord {
            id: id.clone(),
            kind: FeatureKind::Query,
            vector: v.clone(),
        });
        let v = self.videos.iter().map(|(id, v)| FeatureRecord {
            id: id.clone(),
            kind: FeatureKind::Video,
            vector: v.clone(),
        });
        q.chain(v).collect()
    }
}

pub fn parse_features(text: &str, source_name: &str) -> Result<FeatureStore> {
    build_store(jsonl::parse_lines(text, source_name)?, source_name)
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureStore> {
    let path = path.as_ref();
    build_store(jsonl::read_lines(path)?, &path.display().to_string())
}

fn build_store(records: Vec<(usize, FeatureRecord)>, source_name: &str) -> Result<FeatureStore> {
    let Some((_, first)) = records.first() else {
        return Err(Error::Validation(format!("{source_name}: no feature records")));
    };
    let dim = first.vector.len();
    if dim == 0 {
        return Err(Error::parse(source_name, records[0].0, "empty vector"));
    }
    let mut store = FeatureStore::new(dim)?;
    for (line, r) in records {
        store.insert(r.kind, &r.id, r.vector).map_err(|e| Error::parse(source_name, line, e.to_string()))?;
    }
    Ok(store)
}

pub fn write_features(store: &FeatureStore, path: impl AsRef<Path>) -> Result<()> {
    jsonl::write_lines(path.as_ref(), &store.records())
}
