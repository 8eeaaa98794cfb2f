//! Tags, tag similarity, regulated module selection and the match cache.

use std::collections::HashMap;
use std::fmt;
use std::hash::{BuildHasherDefault, Hasher};
use std::str::FromStr;

use crate::error::ParseTagError;
use crate::rng::Rng;

/// Number of bits in every tag.
pub const TAG_WIDTH: u32 = 64;

/// Fixed-width bit string labelling modules, signals and jump anchors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tag(pub u64);

impl Tag {
    pub const ZERO: Tag = Tag(0);

    pub fn random(rng: &mut Rng) -> Tag {
        Tag(rng.next_u64())
    }

    pub fn complement(self) -> Tag {
        Tag(!self.0)
    }

    pub fn hamming_distance(self, other: Tag) -> u32 {
        (self.0 ^ other.0).count_ones()
    }

    pub fn flip_bit(self, bit: u32) -> Tag {
        Tag(self.0 ^ (1u64 << bit))
    }

    /// Normalized Hamming similarity: `1 - hamming / 64`.
    #[inline]
    pub fn match_score(self, other: Tag) -> f64 {
        match_score(self, other)
    }
}

#[inline]
pub fn match_score(a: Tag, b: Tag) -> f64 {
    1.0 - f64::from(a.hamming_distance(b)) / f64::from(TAG_WIDTH)
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl FromStr for Tag {
    type Err = ParseTagError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let well_formed = s.len() == 16
            && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
        if !well_formed {
            return Err(ParseTagError(s.to_string()));
        }
        u64::from_str_radix(s, 16)
            .map(Tag)
            .map_err(|_| ParseTagError(s.to_string()))
    }
}

impl serde::Serialize for Tag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for Tag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-module additive offsets applied to raw match scores.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RegulationState {
    values: Vec<f64>,
}

impl RegulationState {
    pub fn new(modules: usize) -> Self {
        RegulationState {
            values: vec![0.0; modules],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, module: usize) -> f64 {
        self.values[module]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Picks the module whose regulated score `raw + regulator` is highest
/// among modules whose raw score is at least `min_raw`. Ties go to the
/// lowest index.
///
/// Panics if `module_tags` and `reg` disagree in length.
pub fn best_match(
    query: Tag,
    module_tags: &[Tag],
    reg: &RegulationState,
    min_raw: f64,
) -> Option<usize> {
    assert_eq!(
        module_tags.len(),
        reg.len(),
        "module tag list and regulation state disagree in length"
    );
    let mut best: Option<(usize, f64)> = None;
    for (i, &tag) in module_tags.iter().enumerate() {
        let raw = match_score(query, tag);
        if raw < min_raw {
            continue;
        }
        let effective = raw + reg.values[i];
        match best {
            Some((_, score)) if effective <= score => {}
            _ => best = Some((i, effective)),
        }
    }
    best.map(|(i, _)| i)
}

/// Best raw (unregulated) match with lowest-index tie-break.
pub fn best_raw_match(query: Tag, tags: &[Tag]) -> Option<usize> {
    let mut best: Option<(usize, u32)> = None;
    for (i, &tag) in tags.iter().enumerate() {
        let d = query.hamming_distance(tag);
        match best {
            Some((_, bd)) if d >= bd => {}
            _ => best = Some((i, d)),
        }
    }
    best.map(|(i, _)| i)
}

/// Tags are uniformly random bit strings, so the low word is already a
/// good hash.
#[derive(Default)]
pub struct TagHasher(u64);

impl Hasher for TagHasher {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = self.0.rotate_left(8) ^ u64::from(b);
        }
    }

    fn write_u64(&mut self, v: u64) {
        self.0 = v;
    }
}

/// Memoized query -> module selections, valid for one regulation state.
#[derive(Clone, Debug, Default)]
pub struct MatchCache {
    entries: HashMap<Tag, Option<usize>, BuildHasherDefault<TagHasher>>,
    generation: u64,
    hits: u64,
    misses: u64,
}

impl MatchCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Incremented on every invalidation.
    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn invalidate(&mut self) {
        self.entries.clear();
        self.generation += 1;
    }

    pub fn get(&self, query: Tag) -> Option<Option<usize>> {
        self.entries.get(&query).copied()
    }
}

/// Cached form of [`best_match`]: returns the cached entry for `query`
/// when present, otherwise computes and inserts it.
pub fn cached_best_match(
    query: Tag,
    cache: &mut MatchCache,
    module_tags: &[Tag],
    reg: &RegulationState,
    min_raw: f64,
) -> Option<usize> {
    if let Some(hit) = cache.entries.get(&query) {
        cache.hits += 1;
        return *hit;
    }
    cache.misses += 1;
    let result = best_match(query, module_tags, reg, min_raw);
    cache.entries.insert(query, result);
    result
}

/// Module tags, their regulators and the match cache bundled so that
/// every regulator write invalidates the cache.
#[derive(Clone, Debug)]
pub struct ModuleSelector {
    tags: Vec<Tag>,
    regulation: RegulationState,
    cache: MatchCache,
    min_raw: f64,
}

impl ModuleSelector {
    pub fn new(tags: Vec<Tag>, min_raw: f64) -> Self {
        let regulation = RegulationState::new(tags.len());
        ModuleSelector {
            tags,
            regulation,
            cache: MatchCache::new(),
            min_raw,
        }
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    pub fn regulation(&self) -> &RegulationState {
        &self.regulation
    }

    pub fn cache(&self) -> &MatchCache {
        &self.cache
    }

    pub fn min_raw(&self) -> f64 {
        self.min_raw
    }

    #[inline]
    pub fn select(&mut self, query: Tag) -> Option<usize> {
        cached_best_match(
            query,
            &mut self.cache,
            &self.tags,
            &self.regulation,
            self.min_raw,
        )
    }

    /// Module whose tag best raw-matches `tag`; regulation is ignored.
    pub fn target(&self, tag: Tag) -> Option<usize> {
        best_raw_match(tag, &self.tags)
    }

    pub fn set_regulator(&mut self, module: usize, value: f64) {
        self.regulation.values[module] = value;
        self.cache.invalidate();
    }

    pub fn adjust_regulator(&mut self, module: usize, delta: f64) {
        self.regulation.values[module] += delta;
        self.cache.invalidate();
    }

    pub fn clear_regulator(&mut self, module: usize) {
        self.set_regulator(module, 0.0);
    }
}
