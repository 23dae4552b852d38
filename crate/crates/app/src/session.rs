//! In-memory annotation state for the HTTP service.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use anyhow::Context;
use lvdisc::cardiac::{Seed, SliceResult};
use lvdisc::imaging::{CineStudy, Phase};
use serde::{Deserialize, Serialize};

pub const SESSION_SCHEMA: &str = "lvdisc.session/v1";

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SlotKey {
    pub study: String,
    pub z: usize,
    pub phase: Phase,
}

#[derive(Default)]
struct Slot {
    accepted: Option<(u64, SliceResult)>,
    pending: Option<(u64, Seed)>,
}

/// Loaded studies plus the latest accepted result per `(study, z, phase)`.
///
/// Every request takes a sequence number when it starts; a finished result
/// replaces the stored one only if its number is higher, so the last request
/// to arrive wins no matter which computation finishes first.
pub struct SessionState {
    studies: BTreeMap<String, Arc<CineStudy>>,
    sources: BTreeMap<String, PathBuf>,
    slots: Mutex<HashMap<SlotKey, Slot>>,
    next_seq: AtomicU64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SavedResult {
    pub seq: u64,
    pub result: SliceResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendingSeed {
    pub seq: u64,
    pub z: usize,
    pub phase: Phase,
    pub seed: Seed,
}

/// Saved form of one study's annotations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionDocument {
    pub schema: String,
    pub study_id: String,
    pub results: Vec<SavedResult>,
    pub pending: Vec<PendingSeed>,
}

/// Outcome of [`SessionState::commit`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Commit {
    pub accepted: bool,
    /// Sequence number of the stored result after the commit.
    pub current_seq: u64,
}

impl SessionState {
    /// Ids must be unique; repeated ids get a `-2`, `-3`, … suffix.
    pub fn new(studies: impl IntoIterator<Item = (CineStudy, PathBuf)>) -> Self {
        let mut map = BTreeMap::new();
        let mut sources = BTreeMap::new();
        for (mut s, src) in studies {
            let base = s.id.clone();
            let mut k = 2;
            while map.contains_key(&s.id) {
                s.id = format!("{base}-{k}");
                k += 1;
            }
            sources.insert(s.id.clone(), src);
            map.insert(s.id.clone(), Arc::new(s));
        }
        Self {
            studies: map,
            sources,
            slots: Mutex::new(HashMap::new()),
            next_seq: AtomicU64::new(0),
        }
    }

    pub fn studies(&self) -> impl Iterator<Item = &Arc<CineStudy>> {
        self.studies.values()
    }

    pub fn study(&self, id: &str) -> Option<&Arc<CineStudy>> {
        self.studies.get(id)
    }

    pub fn source(&self, id: &str) -> Option<&Path> {
        self.sources.get(id).map(PathBuf::as_path)
    }

    /// Registers a request for `key` and returns its sequence number.
    pub fn begin(&self, key: &SlotKey, seed: Option<Seed>) -> u64 {
        let seq = self.next_seq.fetch_add(1, Ordering::SeqCst) + 1;
        let mut slots = self.slots.lock().expect("session lock");
        let slot = slots.entry(key.clone()).or_default();
        if let Some(s) = seed {
            slot.pending = Some((seq, s));
        }
        seq
    }

    pub fn commit(&self, key: &SlotKey, seq: u64, result: SliceResult) -> Commit {
        let mut slots = self.slots.lock().expect("session lock");
        let slot = slots.entry(key.clone()).or_default();
        if slot.pending.as_ref().is_some_and(|(s, _)| *s <= seq) {
            slot.pending = None;
        }
        let current = slot.accepted.as_ref().map_or(0, |(s, _)| *s);
        if seq > current {
            slot.accepted = Some((seq, result));
            Commit {
                accepted: true,
                current_seq: seq,
            }
        } else {
            Commit {
                accepted: false,
                current_seq: current,
            }
        }
    }

    pub fn result(&self, key: &SlotKey) -> Option<(u64, SliceResult)> {
        self.slots
            .lock()
            .expect("session lock")
            .get(key)
            .and_then(|s| s.accepted.clone())
    }

    /// Accepted results of one study, ordered by `(phase, z)`.
    pub fn results(&self, study: &str) -> Vec<SliceResult> {
        self.document(study)
            .results
            .into_iter()
            .map(|r| r.result)
            .collect()
    }

    pub fn document(&self, study: &str) -> SessionDocument {
        let slots = self.slots.lock().expect("session lock");
        let mut keys: Vec<&SlotKey> = slots.keys().filter(|k| k.study == study).collect();
        keys.sort_by_key(|k| (k.phase, k.z));
        let mut results = Vec::new();
        let mut pending = Vec::new();
        for k in keys {
            let slot = &slots[k];
            if let Some((seq, r)) = &slot.accepted {
                results.push(SavedResult {
                    seq: *seq,
                    result: r.clone(),
                });
            }
            if let Some((seq, seed)) = &slot.pending {
                pending.push(PendingSeed {
                    seq: *seq,
                    z: k.z,
                    phase: k.phase,
                    seed: *seed,
                });
            }
        }
        SessionDocument {
            schema: SESSION_SCHEMA.to_string(),
            study_id: study.to_string(),
            results,
            pending,
        }
    }

    /// Loads a saved document back. Sequence numbers continue above the
    /// highest restored one.
    pub fn restore(&self, doc: SessionDocument) -> anyhow::Result<usize> {
        anyhow::ensure!(
            doc.schema == SESSION_SCHEMA,
            "unknown session schema {:?}",
            doc.schema
        );
        let study = self
            .study(&doc.study_id)
            .with_context(|| format!("session refers to unknown study {:?}", doc.study_id))?
            .clone();
        let n = doc.results.len();
        let max_seq = doc
            .results
            .iter()
            .map(|r| r.seq)
            .chain(doc.pending.iter().map(|p| p.seq))
            .max()
            .unwrap_or(0);
        self.next_seq.fetch_max(max_seq, Ordering::SeqCst);
        for r in doc.results {
            let res = r.result;
            anyhow::ensure!(res.z < study.n_z(), "saved result z={} out of range", res.z);
            let key = SlotKey {
                study: doc.study_id.clone(),
                z: res.z,
                phase: res.phase,
            };
            self.commit(&key, r.seq, res);
        }
        let mut slots = self.slots.lock().expect("session lock");
        for p in doc.pending {
            let key = SlotKey {
                study: doc.study_id.clone(),
                z: p.z,
                phase: p.phase,
            };
            slots.entry(key).or_default().pending = Some((p.seq, p.seed));
        }
        Ok(n)
    }

    pub fn session_path(out_dir: &Path, study: &str) -> PathBuf {
        out_dir.join(format!("session_{study}.json"))
    }

    pub fn save(&self, study: &str, out_dir: &Path) -> anyhow::Result<(PathBuf, SessionDocument)> {
        let doc = self.document(study);
        std::fs::create_dir_all(out_dir)
            .with_context(|| format!("creating {}", out_dir.display()))?;
        let path = Self::session_path(out_dir, study);
        let text = serde_json::to_string_pretty(&doc)?;
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok((path, doc))
    }
}
