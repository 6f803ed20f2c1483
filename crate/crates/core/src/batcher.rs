//! Question records, family grouping and hybrid batch assembly.
//!
//! A family is a set of questions about the same image and argument whose
//! semantic tasks are pairwise distinct, at most [`MAX_FAMILY`] of them. A
//! hybrid batch starts with one family and is filled up with random draws
//! from a pool of other records.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fol::Vocabulary;

pub const MAX_FAMILY: usize = 6;
pub const DEFAULT_BATCH_SIZE: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: String,
    #[serde(rename = "imageId")]
    pub image_id: String,
    pub argument: String,
    /// Semantic task name.
    #[serde(rename = "semantic")]
    pub task: String,
    pub answer: String,
    #[serde(rename = "entailed", default)]
    pub entailed_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Family {
    pub image_id: String,
    pub argument: String,
    /// Indices into the record list, in input order.
    pub members: Vec<usize>,
}

impl Family {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HybridBatch {
    /// Index of the family in the family list.
    pub family: usize,
    pub family_part: Vec<usize>,
    pub filler_part: Vec<usize>,
}

impl HybridBatch {
    /// Family members first, then fillers.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.family_part.iter().chain(&self.filler_part).copied()
    }

    pub fn len(&self) -> usize {
        self.family_part.len() + self.filler_part.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BatchError {
    #[error("invalid records ({reason}): {}", ids.join(", "))]
    Validation { reason: String, ids: Vec<String> },
    #[error("pool too small: need {needed} fillers, only {available} available")]
    PoolTooSmall { needed: usize, available: usize },
    #[error("batch size {0} is below the maximum family size {MAX_FAMILY}")]
    BatchSizeTooSmall(usize),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Checks id uniqueness, task names and entailment links.
pub fn validate_records<V: Vocabulary + ?Sized>(records: &[QuestionRecord], vocab: &V) -> Result<(), BatchError> {
    let mut seen = HashSet::new();
    let dups: Vec<String> = records
        .iter()
        .filter(|r| !seen.insert(r.id.as_str()))
        .map(|r| r.id.clone())
        .collect();
    if !dups.is_empty() {
        return Err(BatchError::Validation {
            reason: "duplicate id".into(),
            ids: dups,
        });
    }
    let bad_task: Vec<String> = records
        .iter()
        .filter(|r| !vocab.contains_task(&r.task))
        .map(|r| r.id.clone())
        .collect();
    if !bad_task.is_empty() {
        return Err(BatchError::Validation {
            reason: "unknown semantic task".into(),
            ids: bad_task,
        });
    }
    let dangling: Vec<String> = records
        .iter()
        .filter(|r| r.entailed_ids.iter().any(|e| !seen.contains(e.as_str())))
        .map(|r| r.id.clone())
        .collect();
    if !dangling.is_empty() {
        return Err(BatchError::Validation {
            reason: "entailed id not in dataset".into(),
            ids: dangling,
        });
    }
    Ok(())
}

/// Partition records by `(image_id, argument)` and split each group
/// first-fit into families of distinct tasks, at most six each.
pub fn group_families(records: &[QuestionRecord]) -> Vec<Family> {
    let mut group_of: HashMap<(&str, &str), usize> = HashMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let g = *group_of
            .entry((r.image_id.as_str(), r.argument.as_str()))
            .or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
        groups[g].push(i);
    }
    let mut families = Vec::new();
    for group in groups {
        let mut open: Vec<Family> = Vec::new();
        for i in group {
            let task = &records[i].task;
            let slot = open
                .iter()
                .position(|f| f.len() < MAX_FAMILY && f.members.iter().all(|&m| &records[m].task != task));
            match slot {
                Some(s) => open[s].members.push(i),
                None => open.push(Family {
                    image_id: records[i].image_id.clone(),
                    argument: records[i].argument.clone(),
                    members: vec![i],
                }),
            }
        }
        families.extend(open);
    }
    families
}

/// One batch per family, filled to `batch_size` with draws from `pool`
/// (record indices) that are distinct within the batch and disjoint from the
/// family.
pub fn build_hybrid_batches(
    families: &[Family],
    pool: &[usize],
    batch_size: usize,
    seed: u64,
) -> Result<Vec<HybridBatch>, BatchError> {
    if batch_size < MAX_FAMILY {
        return Err(BatchError::BatchSizeTooSmall(batch_size));
    }
    let unique_pool: Vec<usize> = {
        let mut seen = HashSet::new();
        pool.iter().copied().filter(|i| seen.insert(*i)).collect()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(families.len());
    for (fi, fam) in families.iter().enumerate() {
        let needed = batch_size.saturating_sub(fam.len());
        let in_family = |i: &usize| fam.members.contains(i);
        let overlap = unique_pool.iter().filter(|i| in_family(i)).count();
        let available = unique_pool.len() - overlap;
        if available < needed {
            return Err(BatchError::PoolTooSmall { needed, available });
        }
        // drawing needed + |family| positions leaves enough after dropping members
        let draw = (needed + overlap).min(unique_pool.len());
        let filler_part: Vec<usize> = rand::seq::index::sample(&mut rng, unique_pool.len(), draw)
            .into_iter()
            .map(|k| unique_pool[k])
            .filter(|i| !in_family(i))
            .take(needed)
            .collect();
        out.push(HybridBatch {
            family: fi,
            family_part: fam.members.clone(),
            filler_part,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct BatchStats {
    pub batches: usize,
    pub records: usize,
    /// Family size to number of batches.
    pub family_size_histogram: BTreeMap<usize, usize>,
    /// Task name to number of family slots it fills.
    pub task_coverage: BTreeMap<String, usize>,
    /// Share of filler slots taken by a record already used as a filler in an
    /// earlier batch.
    pub filler_overlap_rate: f64,
}

pub fn batch_stats(batches: &[HybridBatch], records: &[QuestionRecord]) -> BatchStats {
    let mut stats = BatchStats {
        batches: batches.len(),
        ..BatchStats::default()
    };
    let mut fillers_seen = HashSet::new();
    let (mut filler_slots, mut repeats) = (0usize, 0usize);
    for b in batches {
        stats.records += b.len();
        *stats.family_size_histogram.entry(b.family_part.len()).or_default() += 1;
        for &m in &b.family_part {
            *stats.task_coverage.entry(records[m].task.clone()).or_default() += 1;
        }
        for &f in &b.filler_part {
            filler_slots += 1;
            if !fillers_seen.insert(f) {
                repeats += 1;
            }
        }
    }
    if filler_slots > 0 {
        stats.filler_overlap_rate = repeats as f64 / filler_slots as f64;
    }
    stats
}

pub fn read_records(reader: impl BufRead) -> Result<Vec<QuestionRecord>, BatchError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| BatchError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_records(mut w: impl Write, records: &[QuestionRecord]) -> Result<(), BatchError> {
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// One JSON array of record ids per batch, family members first.
pub fn write_batches(mut w: impl Write, batches: &[HybridBatch], records: &[QuestionRecord]) -> Result<(), BatchError> {
    for b in batches {
        let ids: Vec<&str> = b.indices().map(|i| records[i].id.as_str()).collect();
        serde_json::to_writer(&mut w, &ids).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, image: &str, arg: &str, task: &str) -> QuestionRecord {
        QuestionRecord {
            id: id.into(),
            image_id: image.into(),
            argument: arg.into(),
            task: task.into(),
            answer: "yes".into(),
            entailed_ids: vec![],
            features: None,
        }
    }

    #[test]
    fn beach_group_is_one_family() {
        let records = vec![
            rec("q1", "img1", "scene", "verifyGlobalTrue"),
            rec("q2", "img1", "scene", "verifyGlobalFalse"),
            rec("q3", "img1", "scene", "queryGlobal"),
            rec("q4", "img1", "scene", "chooseGlobal"),
        ];
        let fams = group_families(&records);
        assert_eq!(fams.len(), 1);
        assert_eq!(fams[0].members, vec![0, 1, 2, 3]);
        assert!(group_families(&[]).is_empty());
    }

    #[test]
    fn seven_distinct_tasks_split_six_plus_one() {
        let records: Vec<_> = (0..7).map(|i| rec(&format!("q{i}"), "img", "obj", &format!("t{i}"))).collect();
        let sizes: Vec<usize> = group_families(&records).iter().map(Family::len).collect();
        assert_eq!(sizes, vec![6, 1]);
    }

    #[test]
    fn duplicate_tasks_start_new_family() {
        let records = vec![
            rec("a", "img", "obj", "t1"),
            rec("b", "img", "obj", "t1"),
            rec("c", "img", "obj", "t2"),
            rec("d", "img", "other", "t1"),
        ];
        let fams = group_families(&records);
        let members: Vec<_> = fams.iter().map(|f| f.members.clone()).collect();
        assert_eq!(members, vec![vec![0, 2], vec![1], vec![3]]);
    }

    #[test]
    fn hybrid_batches_fill_and_exclude_family() {
        let records: Vec<_> = (0..40)
            .map(|i| rec(&format!("q{i}"), &format!("img{}", i / 4), "scene", &format!("t{}", i % 4)))
            .collect();
        let fams = group_families(&records);
        let pool: Vec<usize> = (0..records.len()).collect();
        let batches = build_hybrid_batches(&fams, &pool, 16, 7).unwrap();
        assert_eq!(batches.len(), fams.len());
        for b in &batches {
            assert_eq!(b.len(), 16);
            assert_eq!(b.filler_part.len(), 12);
            let all: HashSet<usize> = b.indices().collect();
            assert_eq!(all.len(), 16);
        }
        assert_eq!(batches, build_hybrid_batches(&fams, &pool, 16, 7).unwrap());
        assert_ne!(batches, build_hybrid_batches(&fams, &pool, 16, 8).unwrap());
        assert!(matches!(
            build_hybrid_batches(&fams, &pool[..10], 16, 7),
            Err(BatchError::PoolTooSmall { .. })
        ));
        assert!(matches!(
            build_hybrid_batches(&fams, &pool, 4, 7),
            Err(BatchError::BatchSizeTooSmall(4))
        ));
    }

    #[test]
    fn stats() {
        let records: Vec<_> = (0..20).map(|i| rec(&format!("q{i}"), &format!("i{}", i / 4), "a", &format!("t{}", i % 4))).collect();
        let fams = group_families(&records);
        let pool: Vec<usize> = (0..20).collect();
        let batches = build_hybrid_batches(&fams[..1], &pool, 16, 1).unwrap();
        let s = batch_stats(&batches, &records);
        assert_eq!(s.family_size_histogram, BTreeMap::from([(4, 1)]));
        assert_eq!(s.records, 16);
        assert_eq!(s.filler_overlap_rate, 0.0);
        assert_eq!(batch_stats(&[], &records), BatchStats::default());
    }

    #[test]
    fn validation_reports_ids() {
        let vocab = ["t1"];
        let mut records = vec![rec("a", "i", "x", "t1"), rec("a", "i", "x", "t1")];
        match validate_records(&records, &vocab[..]) {
            Err(BatchError::Validation { ids, .. }) => assert_eq!(ids, vec!["a"]),
            other => panic!("{other:?}"),
        }
        records[1].id = "b".into();
        records[1].task = "nope".into();
        assert!(validate_records(&records, &vocab[..]).is_err());
        records[1].task = "t1".into();
        records[0].entailed_ids = vec!["zzz".into()];
        assert!(validate_records(&records, &vocab[..]).is_err());
        records[0].entailed_ids = vec!["b".into()];
        validate_records(&records, &vocab[..]).unwrap();
    }

    #[test]
    fn jsonl_round_trip() {
        let mut r = rec("q1", "img", "scene", "queryGlobal");
        r.entailed_ids = vec!["q2".into()];
        r.features = Some(vec![0.5, -1.0]);
        let mut buf = Vec::new();
        write_records(&mut buf, &[r.clone()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"imageId\":\"img\"") && text.contains("\"semantic\":\"queryGlobal\""));
        assert_eq!(read_records(&buf[..]).unwrap(), vec![r]);
        assert!(matches!(read_records(&b"{}\n"[..]), Err(BatchError::Parse { line: 1, .. })));
    }
}
