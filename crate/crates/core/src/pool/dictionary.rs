use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use super::PoolError;

/// `(image_id, layer_index)` → reference sequence.
///
/// Persisted as a JSON object `{"<image_id>/<layer>": "<nt sequence>"}`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReferenceDictionary {
    entries: BTreeMap<(String, usize), Vec<u8>>,
}

impl ReferenceDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn register(
        &mut self,
        image_id: &str,
        layer: usize,
        reference: Vec<u8>,
    ) -> Result<(), PoolError> {
        let key = (image_id.to_string(), layer);
        if self.entries.contains_key(&key) {
            return Err(PoolError::DuplicateEntry {
                image_id: key.0,
                layer,
            });
        }
        if self.entries.values().any(|r| *r == reference) {
            return Err(PoolError::ReferenceReused(
                String::from_utf8_lossy(&reference).into_owned(),
            ));
        }
        self.entries.insert(key, reference);
        Ok(())
    }

    pub fn lookup(&self, image_id: &str, layer: usize) -> Result<&[u8], PoolError> {
        self.entries
            .get(&(image_id.to_string(), layer))
            .map(Vec::as_slice)
            .ok_or_else(|| PoolError::NotFound {
                image_id: image_id.to_string(),
                layer,
            })
    }

    pub fn references(&self) -> impl Iterator<Item = &[u8]> {
        self.entries.values().map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize, &[u8])> {
        self.entries
            .iter()
            .map(|((id, k), r)| (id.as_str(), *k, r.as_slice()))
    }

    /// Registered image ids with their layer counts.
    pub fn images(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for (id, _) in self.entries.keys() {
            *out.entry(id.clone()).or_insert(0) += 1;
        }
        out
    }

    pub fn layers_of(&self, image_id: &str) -> BTreeSet<usize> {
        self.entries
            .keys()
            .filter(|(id, _)| id == image_id)
            .map(|(_, k)| *k)
            .collect()
    }

    pub fn to_json(&self) -> String {
        let map: BTreeMap<String, String> = self
            .entries
            .iter()
            .map(|((id, k), r)| (format!("{id}/{k}"), String::from_utf8_lossy(r).into_owned()))
            .collect();
        serde_json::to_string_pretty(&map).expect("string map serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PoolError> {
        let map: BTreeMap<String, String> =
            serde_json::from_str(text).map_err(|e| PoolError::Malformed(e.to_string()))?;
        let mut dict = Self::new();
        for (key, seq) in map {
            let (id, layer) = key
                .rsplit_once('/')
                .and_then(|(id, k)| k.parse::<usize>().ok().map(|k| (id, k)))
                .ok_or_else(|| PoolError::Malformed(format!("bad dictionary key {key:?}")))?;
            if seq.is_empty() || !seq.bytes().all(|c| b"ACGT".contains(&c)) {
                return Err(PoolError::Alphabet(key));
            }
            dict.register(id, layer, seq.into_bytes())?;
        }
        Ok(dict)
    }

    pub fn save(&self, path: &Path) -> Result<(), PoolError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PoolError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn register_lookup_and_errors() {
        let mut d = ReferenceDictionary::new();
        d.register("kodim01", 0, b"ACGTACGT".to_vec()).unwrap();
        assert_eq!(d.lookup("kodim01", 0).unwrap(), b"ACGTACGT");
        assert!(matches!(
            d.lookup("kodim01", 1),
            Err(PoolError::NotFound { layer: 1, .. })
        ));
        assert!(matches!(
            d.register("kodim01", 0, b"TTTT".to_vec()),
            Err(PoolError::DuplicateEntry { .. })
        ));
        assert!(matches!(
            d.register("kodim02", 0, b"ACGTACGT".to_vec()),
            Err(PoolError::ReferenceReused(_))
        ));
    }

    #[test]
    fn json_layout() {
        let mut d = ReferenceDictionary::new();
        d.register("a/b", 2, b"ACG".to_vec()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&d.to_json()).unwrap();
        assert_eq!(v, serde_json::json!({"a/b/2": "ACG"}));
        assert_eq!(ReferenceDictionary::from_json(&d.to_json()).unwrap(), d);
        assert!(ReferenceDictionary::from_json(r#"{"x": "ACG"}"#).is_err());
        assert!(matches!(
            ReferenceDictionary::from_json(r#"{"x/0": "ACXG"}"#),
            Err(PoolError::Alphabet(_))
        ));
    }
}
