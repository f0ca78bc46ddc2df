//! Item domains, genuine-user datasets, frequency vectors and the seeding
//! contract shared by every randomized operation.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::ops::Index;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A finite input domain `{0, .., size-1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct ItemDomain {
    size: usize,
}

impl ItemDomain {
    pub fn new(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::DomainTooSmall(size));
        }
        Ok(Self { size })
    }

    pub fn size(self) -> usize {
        self.size
    }

    pub fn contains(self, item: usize) -> bool {
        item < self.size
    }

    pub fn check(self, item: usize) -> Result<usize> {
        if self.contains(item) {
            Ok(item)
        } else {
            Err(Error::ItemOutOfDomain {
                item,
                size: self.size,
            })
        }
    }

    pub fn items(self) -> std::ops::Range<usize> {
        0..self.size
    }
}

impl TryFrom<usize> for ItemDomain {
    type Error = Error;

    fn try_from(size: usize) -> Result<Self> {
        Self::new(size)
    }
}

impl From<ItemDomain> for usize {
    fn from(domain: ItemDomain) -> usize {
        domain.size
    }
}

/// Seed of a deterministic experiment.
///
/// Streams are ChaCha8 instances: [`RngSeed::substream`] selects one of the
/// 2^64 independent ChaCha streams for a given key, so per-user draws do not
/// depend on the order users are processed in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    pub fn substream(self, key: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(key);
        rng
    }

    /// Child seed for a named purpose ("genuine", "attack", ...).
    pub fn derive(self, label: &str) -> RngSeed {
        let mut state = splitmix64(self.0 ^ 0x6c64_7072_6563_6f76);
        for byte in label.bytes() {
            state = splitmix64(state ^ u64::from(byte));
        }
        RngSeed(state)
    }

    /// The seed of trial `k`: `seed + k`.
    pub fn offset(self, k: u64) -> RngSeed {
        RngSeed(self.0.wrapping_add(k))
    }
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// The items held by `n >= 1` genuine users.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    domain: ItemDomain,
    values: Vec<usize>,
    labels: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(domain: ItemDomain, values: Vec<usize>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for &v in &values {
            domain.check(v)?;
        }
        Ok(Self {
            domain,
            values,
            labels: None,
        })
    }

    /// Attach the label of every item index (first-appearance order).
    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.domain.size() {
            return Err(Error::DomainMismatch {
                expected: self.domain.size(),
                found: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn domain(&self) -> ItemDomain {
        self.domain
    }

    pub fn values(&self) -> &[usize] {
        &self.values
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn histogram(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.domain.size()];
        for &v in &self.values {
            counts[v] += 1;
        }
        counts
    }
}

/// Per-item frequencies over a domain. Estimated vectors may hold negative
/// entries; only refined and true vectors are guaranteed to be distributions.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyVector<T> {
    domain: ItemDomain,
    entries: Vec<T>,
}

impl<T: Scalar> FrequencyVector<T> {
    pub fn new(domain: ItemDomain, entries: Vec<T>) -> Result<Self> {
        if entries.len() != domain.size() {
            return Err(Error::DomainMismatch {
                expected: domain.size(),
                found: entries.len(),
            });
        }
        Ok(Self { domain, entries })
    }

    pub fn from_vec(entries: Vec<T>) -> Result<Self> {
        let domain = ItemDomain::new(entries.len())?;
        Ok(Self { domain, entries })
    }

    pub fn zeros(domain: ItemDomain) -> Self {
        Self {
            domain,
            entries: vec![T::zero(); domain.size()],
        }
    }

    pub fn domain(&self) -> ItemDomain {
        self.domain
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.entries
    }

    pub fn into_vec(self) -> Vec<T> {
        self.entries
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.entries.iter()
    }

    pub fn sum(&self) -> T {
        self.entries.iter().copied().sum()
    }

    pub fn min(&self) -> T {
        self.entries.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn same_domain(&self, other: &Self) -> Result<()> {
        if self.domain != other.domain {
            return Err(Error::DomainMismatch {
                expected: self.domain.size(),
                found: other.domain.size(),
            });
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(usize, T) -> T) -> Self {
        Self {
            domain: self.domain,
            entries: self
                .entries
                .iter()
                .enumerate()
                .map(|(v, &x)| f(v, x))
                .collect(),
        }
    }

    pub fn to_f64(&self) -> FrequencyVector<f64> {
        FrequencyVector {
            domain: self.domain,
            entries: self.entries.iter().map(|x| x.as_f64()).collect(),
        }
    }
}

impl<T> Index<usize> for FrequencyVector<T> {
    type Output = T;

    fn index(&self, item: usize) -> &T {
        &self.entries[item]
    }
}

impl<T: Serialize> Serialize for FrequencyVector<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.entries.serialize(serializer)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for FrequencyVector<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let entries = Vec::<T>::deserialize(deserializer)?;
        FrequencyVector::from_vec(entries).map_err(serde::de::Error::custom)
    }
}

/// Fraction of users holding each item.
pub fn true_frequencies<T: Scalar>(data: &Dataset) -> FrequencyVector<T> {
    let n = T::of_count(data.len());
    let entries = data
        .histogram()
        .into_iter()
        .map(|c| T::of(c as f64) / n)
        .collect();
    FrequencyVector {
        domain: data.domain(),
        entries,
    }
}

/// `n` i.i.d. draws from Zipf(`s`) truncated to the domain; item 0 is the
/// most popular.
pub fn synthesize_zipf(domain: ItemDomain, n: usize, s: f64, seed: RngSeed) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::invalid(format!("zipf exponent must be positive, got {s}")));
    }
    let zipf = Zipf::new(domain.size() as f64, s)
        .map_err(|e| Error::invalid(format!("zipf: {e}")))?;
    let mut rng = seed.rng();
    let values = (0..n)
        .map(|_| zipf.sample(&mut rng) as usize - 1)
        .collect();
    Dataset::new(domain, values)
}

/// Parse a dataset from text: one item per line, or a CSV with header
/// `item,count`. Lines starting with `#` are comments.
///
/// If any item token is not an unsigned integer, every token is treated as
/// a label and labels are numbered by first appearance.
pub fn parse_dataset(text: &str, domain_hint: Option<usize>) -> Result<Dataset> {
    let mut rows: Vec<(usize, &str, u64)> = Vec::new();
    let mut counted = false;
    let mut saw_content = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_content {
            saw_content = true;
            let header: Vec<_> = line.split(',').map(str::trim).collect();
            if header == ["item", "count"] {
                counted = true;
                continue;
            }
        }
        if counted {
            let fields: Vec<_> = line.split(',').map(str::trim).collect();
            if fields.len() != 2 || fields[0].is_empty() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected `item,count`, got {line:?}"),
                });
            }
            let count = fields[1].parse::<u64>().map_err(|e| Error::Parse {
                line: line_no,
                message: format!("bad count {:?}: {e}", fields[1]),
            })?;
            rows.push((line_no, fields[0], count));
        } else {
            if line.contains(',') {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected a single item, got {line:?}"),
                });
            }
            rows.push((line_no, line, 1));
        }
    }
    if rows.iter().all(|&(_, _, c)| c == 0) {
        return Err(Error::EmptyDataset);
    }

    let numeric = rows.iter().all(|(_, tok, _)| tok.parse::<usize>().is_ok());
    let mut labels: Vec<String> = Vec::new();
    let mut indices = Vec::with_capacity(rows.len());
    if numeric {
        for &(_, tok, count) in &rows {
            indices.push((tok.parse::<usize>().expect("checked numeric"), count));
        }
    } else {
        let mut lookup: HashMap<&str, usize> = HashMap::new();
        for &(_, tok, count) in &rows {
            let next = lookup.len();
            let idx = *lookup.entry(tok).or_insert_with(|| {
                labels.push(tok.to_string());
                next
            });
            indices.push((idx, count));
        }
    }

    let max_index = indices.iter().map(|&(i, _)| i).max().unwrap_or(0);
    let size = match domain_hint {
        Some(hint) => {
            if let Some(&(item, _)) = indices.iter().find(|&&(i, _)| i >= hint) {
                return Err(Error::ItemOutOfDomain { item, size: hint });
            }
            hint.max(max_index + 1)
        }
        None => max_index + 1,
    };
    let domain = ItemDomain::new(size)?;
    let mut values = Vec::new();
    for (idx, count) in indices {
        values.extend(std::iter::repeat_n(idx, count as usize));
    }
    let dataset = Dataset::new(domain, values)?;
    if numeric {
        Ok(dataset)
    } else {
        labels.resize(size, String::new());
        dataset.with_labels(labels)
    }
}

pub fn load_dataset(path: impl AsRef<Path>, domain_hint: Option<usize>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, domain_hint)
}

/// One item index per line.
pub fn format_dataset(data: &Dataset) -> String {
    let mut out = String::with_capacity(data.len() * 4);
    for &v in data.values() {
        let _ = writeln!(out, "{v}");
    }
    out
}

/// Write a dataset atomically (temp file in the same directory, then rename).
pub fn save_dataset(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    write_atomic(path.as_ref(), format_dataset(data).as_bytes())
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = file_name.to_os_string();
    tmp_name.push(".partial");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(d: usize, values: &[usize]) -> Dataset {
        Dataset::new(ItemDomain::new(d).unwrap(), values.to_vec()).unwrap()
    }

    #[test]
    fn domain_needs_two_items() {
        assert!(matches!(ItemDomain::new(1), Err(Error::DomainTooSmall(1))));
        assert!(ItemDomain::new(2).is_ok());
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let err = Dataset::new(ItemDomain::new(3).unwrap(), vec![]).unwrap_err();
        assert_eq!(err.to_string(), "empty dataset");
    }

    #[test]
    fn out_of_domain_value_is_rejected() {
        let err = Dataset::new(ItemDomain::new(3).unwrap(), vec![0, 3]).unwrap_err();
        assert!(matches!(err, Error::ItemOutOfDomain { item: 3, size: 3 }));
    }

    #[test]
    fn true_frequencies_by_counting() {
        let f = true_frequencies::<f64>(&dataset(2, &[0, 0, 1, 1]));
        assert_eq!(f.as_slice(), &[0.5, 0.5]);
        let f = true_frequencies::<f64>(&dataset(3, &[2]));
        assert_eq!(f.as_slice(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn true_frequencies_f32() {
        let f = true_frequencies::<f32>(&dataset(4, &[0, 1, 1, 3]));
        assert_eq!(f.as_slice(), &[0.25f32, 0.5, 0.0, 0.25]);
    }

    #[test]
    fn parse_line_form() {
        let ds = parse_dataset("0\n0\n1\n", None).unwrap();
        assert_eq!(ds.values(), &[0, 0, 1]);
        assert_eq!(ds.domain().size(), 2);
    }

    #[test]
    fn parse_counted_form() {
        let ds = parse_dataset("item,count\n0,3\n1,1\n", None).unwrap();
        assert_eq!(ds.values(), &[0, 0, 0, 1]);
    }

    #[test]
    fn parse_skips_comments_and_honors_hint() {
        let ds = parse_dataset("# header\n1\n# mid\n0\n", Some(5)).unwrap();
        assert_eq!(ds.domain().size(), 5);
        assert_eq!(ds.values(), &[1, 0]);
    }

    #[test]
    fn parse_rejects_empty_input() {
        assert!(matches!(parse_dataset("", None), Err(Error::EmptyDataset)));
        assert!(matches!(parse_dataset("# only\n", None), Err(Error::EmptyDataset)));
    }

    #[test]
    fn parse_reports_line_numbers() {
        let err = parse_dataset("item,count\n0,3\n1,x\n", None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse_dataset("0\n1,2\n", None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn parse_rejects_items_beyond_hint() {
        let err = parse_dataset("0\n4\n", Some(3)).unwrap_err();
        assert!(err.to_string().starts_with("item out of domain"), "{err}");
    }

    #[test]
    fn labels_map_by_first_appearance() {
        let ds = parse_dataset("item,count\nparis,2\nrome,1\nparis,1\n", None).unwrap();
        assert_eq!(ds.values(), &[0, 0, 1, 0]);
        assert_eq!(ds.labels().unwrap(), &["paris".to_string(), "rome".to_string()]);
    }

    #[test]
    fn zipf_is_deterministic_and_heavy_headed() {
        let domain = ItemDomain::new(10).unwrap();
        let a = synthesize_zipf(domain, 1000, 1.1, RngSeed(42)).unwrap();
        let b = synthesize_zipf(domain, 1000, 1.1, RngSeed(42)).unwrap();
        assert_eq!(a, b);
        let h = a.histogram();
        assert!(h[0] > h[9]);
    }

    #[test]
    fn zipf_large_exponent_concentrates_on_first_item() {
        // P(item 0) = 1 / sum_k k^-50 which is 1 - 2^-50 to double precision.
        let domain = ItemDomain::new(20).unwrap();
        let ds = synthesize_zipf(domain, 10_000, 50.0, RngSeed(3)).unwrap();
        let zeros = ds.values().iter().filter(|&&v| v == 0).count();
        assert!(zeros as f64 >= 0.99 * 10_000.0);
    }

    #[test]
    fn substreams_are_independent_of_order() {
        use rand::Rng;
        let seed = RngSeed(9);
        let a: u64 = seed.substream(5).random();
        let _ = seed.substream(4).random::<u64>();
        let b: u64 = seed.substream(5).random();
        assert_eq!(a, b);
        assert_ne!(a, seed.substream(6).random::<u64>());
        assert_ne!(seed.derive("genuine"), seed.derive("attack"));
    }

    #[test]
    fn frequency_vector_json_is_a_plain_array() {
        let f = FrequencyVector::from_vec(vec![0.25, 0.75]).unwrap();
        assert_eq!(serde_json::to_string(&f).unwrap(), "[0.25,0.75]");
        let back: FrequencyVector<f64> = serde_json::from_str("[0.25,0.75]").unwrap();
        assert_eq!(back, f);
    }
}
