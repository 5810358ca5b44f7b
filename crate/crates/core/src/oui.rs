//! IEEE OUI registry ingestion, vendor lookup, and the seed/guess generation
//! that drives the global sweep.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use thiserror::Error;
use tracing::warn;

use crate::mac::{MacAddress, Oui};

/// Size of the per-organization suffix space.
pub const SUFFIX_SPACE: u32 = 1 << 24;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed alias file: {0}")]
    Alias(#[from] csv::Error),
    #[error("no OUI entries could be parsed from {0}")]
    Empty(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SeedError {
    #[error("registry is empty; no seed prefixes to sweep")]
    EmptyRegistry,
    #[error("requested {0} suffixes but a prefix only has {SUFFIX_SPACE}")]
    TooMany(u64),
    #[error("requested zero suffixes")]
    Zero,
}

/// Result of a vendor lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Vendor<'a> {
    Listed(&'a str),
    Unlisted,
}

impl Vendor<'_> {
    pub fn name(&self) -> &str {
        match self {
            Vendor::Listed(name) => name,
            Vendor::Unlisted => "Unlisted",
        }
    }
}

/// Bookkeeping from a registry load.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub entries: usize,
    /// Lines whose prefix was already present (first one wins).
    pub duplicates: usize,
    /// Prefixes with the U/L or multicast bit set, which the IEEE never assigns.
    pub rejected: usize,
}

#[derive(Debug, Clone, Default)]
pub struct OuiRegistry {
    entries: BTreeMap<Oui, String>,
    aliases: HashMap<String, String>,
}

impl OuiRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a registered prefix. Returns `false` if the prefix was already
    /// present or is not a universally administered unicast prefix.
    pub fn insert(&mut self, oui: Oui, vendor: impl Into<String>) -> bool {
        if oui.is_locally_administered() || oui.is_multicast() || self.entries.contains_key(&oui) {
            return false;
        }
        self.entries.insert(oui, vendor.into());
        true
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Oui, &str)> {
        self.entries.iter().map(|(k, v)| (*k, v.as_str()))
    }

    pub fn get(&self, oui: Oui) -> Option<&str> {
        self.entries.get(&oui.normalized()).map(|name| self.normalize_name(name))
    }

    pub fn vendor_of(&self, mac: MacAddress) -> Vendor<'_> {
        match self.get(mac.normalized_oui()) {
            Some(name) => Vendor::Listed(name),
            None => Vendor::Unlisted,
        }
    }

    /// Applies the alias table, if any, to a raw vendor name.
    pub fn normalize_name<'a>(&'a self, raw: &'a str) -> &'a str {
        self.aliases.get(raw).map(String::as_str).unwrap_or(raw)
    }

    pub fn set_aliases(&mut self, aliases: HashMap<String, String>) {
        self.aliases = aliases;
    }

    /// Loads an alias CSV of `raw_name,normalized_name` rows (header optional).
    pub fn load_aliases(&mut self, path: impl AsRef<Path>) -> Result<usize, RegistryError> {
        let text = read(path.as_ref())?;
        let aliases = parse_aliases(&text)?;
        let n = aliases.len();
        self.aliases = aliases;
        Ok(n)
    }

    /// Parses either the IEEE `oui.txt` layout or a simple `oui,vendor` CSV.
    pub fn parse(text: &str) -> (Self, LoadStats) {
        let mut registry = OuiRegistry::new();
        let mut stats = LoadStats::default();
        let ieee_layout = text.lines().any(|l| l.contains("(hex)"));
        let mut add = |registry: &mut OuiRegistry, oui: Oui, name: &str| {
            if oui.is_locally_administered() || oui.is_multicast() {
                stats.rejected += 1;
            } else if !registry.insert(oui, name.trim()) {
                stats.duplicates += 1;
            }
        };
        if ieee_layout {
            for line in text.lines() {
                let Some((prefix, name)) = line.split_once("(hex)") else {
                    continue;
                };
                if let Ok(oui) = prefix.trim().parse::<Oui>() {
                    add(&mut registry, oui, name);
                }
            }
        } else {
            let mut reader = csv::ReaderBuilder::new()
                .has_headers(false)
                .flexible(true)
                .trim(csv::Trim::All)
                .from_reader(text.as_bytes());
            for record in reader.records().flatten() {
                let (Some(prefix), Some(name)) = (record.get(0), record.get(1)) else {
                    continue;
                };
                if let Ok(oui) = prefix.parse::<Oui>() {
                    add(&mut registry, oui, name);
                }
            }
        }
        stats.entries = registry.len();
        (registry, stats)
    }
}

/// Loads a registry file, warning about duplicates and rejected prefixes.
pub fn load_oui_registry(path: impl AsRef<Path>) -> Result<(OuiRegistry, LoadStats), RegistryError> {
    let path = path.as_ref();
    let text = read(path)?;
    let (registry, stats) = OuiRegistry::parse(&text);
    if registry.is_empty() {
        return Err(RegistryError::Empty(path.display().to_string()));
    }
    if stats.duplicates > 0 || stats.rejected > 0 {
        warn!(
            duplicates = stats.duplicates,
            rejected = stats.rejected,
            "ignored registry lines in {}",
            path.display()
        );
    }
    Ok((registry, stats))
}

fn read(path: &Path) -> Result<String, RegistryError> {
    let bytes = fs::read(path).map_err(|source| RegistryError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

fn parse_aliases(text: &str) -> Result<HashMap<String, String>, csv::Error> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = HashMap::new();
    for record in reader.records() {
        let record = record?;
        let (Some(raw), Some(norm)) = (record.get(0), record.get(1)) else {
            continue;
        };
        if raw == "raw_name" && norm == "normalized_name" {
            continue;
        }
        out.insert(raw.to_string(), norm.to_string());
    }
    Ok(out)
}

/// Prefixes to sweep: every registered OUI plus its locally administered twin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedSet {
    ouis: Vec<Oui>,
}

impl SeedSet {
    pub fn len(&self) -> usize {
        self.ouis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ouis.is_empty()
    }

    pub fn as_slice(&self) -> &[Oui] {
        &self.ouis
    }

    pub fn iter(&self) -> impl Iterator<Item = Oui> + '_ {
        self.ouis.iter().copied()
    }
}

impl FromIterator<Oui> for SeedSet {
    fn from_iter<I: IntoIterator<Item = Oui>>(iter: I) -> Self {
        let set: BTreeSet<Oui> = iter.into_iter().collect();
        SeedSet { ouis: set.into_iter().collect() }
    }
}

pub fn build_seed_set(registry: &OuiRegistry) -> Result<SeedSet, SeedError> {
    if registry.is_empty() {
        return Err(SeedError::EmptyRegistry);
    }
    Ok(registry
        .iter()
        .flat_map(|(oui, _)| [oui.with_local_bit(false), oui.with_local_bit(true)])
        .collect())
}

/// A keyed bijection on 24-bit integers: a balanced Feistel network over two
/// 12-bit halves.
#[derive(Debug, Clone, Copy)]
pub struct SuffixPermutation {
    round_keys: [u64; 6],
}

impl SuffixPermutation {
    pub fn new(key: u64) -> Self {
        let mut state = key;
        let mut round_keys = [0u64; 6];
        for k in &mut round_keys {
            *k = splitmix64(&mut state);
        }
        SuffixPermutation { round_keys }
    }

    pub fn apply(&self, index: u32) -> u32 {
        debug_assert!(index < SUFFIX_SPACE);
        let mut left = (index >> 12) & 0xfff;
        let mut right = index & 0xfff;
        for &k in &self.round_keys {
            let mut s = k ^ u64::from(right);
            let f = (splitmix64(&mut s) & 0xfff) as u32;
            (left, right) = (right, left ^ f);
        }
        (left << 12) | right
    }
}

pub(crate) fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `n` distinct addresses under `oui`, suffixes drawn without replacement.
/// The same `(oui, n, rng_seed)` always yields the same list, and a shorter
/// list is a prefix of a longer one.
pub fn random_bssids(oui: Oui, n: u64, rng_seed: u64) -> Result<Vec<MacAddress>, SeedError> {
    if n == 0 {
        return Err(SeedError::Zero);
    }
    if n > u64::from(SUFFIX_SPACE) {
        return Err(SeedError::TooMany(n));
    }
    let mut key_state = rng_seed ^ (u64::from(oui.to_u32()) << 32);
    let perm = SuffixPermutation::new(splitmix64(&mut key_state));
    Ok((0..n as u32)
        .map(|i| MacAddress::from_parts(oui, perm.apply(i)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    const SAMPLE: &str = "OUI/MA-L\t\tOrganization\r\n\
company_id\t\tOrganization\r\n\
\r\n\
74-24-9F   (hex)\t\tTIBRO Corp.\r\n\
74249F     (base 16)\t\tTIBRO Corp.\r\n\
\t\t\t\tSomewhere\r\n\
\r\n\
08-4A-93   (hex)\t\tExample Networks\r\n\
084A93     (base 16)\t\tExample Networks\r\n\
\r\n\
94-83-C4   (hex)\t\tGL Technologies (Hong Kong) Limited\r\n";

    fn mac(s: &str) -> MacAddress {
        s.parse().unwrap()
    }

    #[test]
    fn parses_ieee_layout() {
        let (reg, stats) = OuiRegistry::parse(SAMPLE);
        assert_eq!(reg.len(), 3);
        assert_eq!(stats, LoadStats { entries: 3, duplicates: 0, rejected: 0 });
        assert_eq!(reg.get("74:24:9f".parse().unwrap()), Some("TIBRO Corp."));
    }

    #[test]
    fn parses_csv_layout_and_duplicates() {
        let text = "oui,vendor\n74:24:9f,TIBRO Corp.\n74-24-9F,Someone Else\n0a:00:00,Local\n\"94:83:c4\",\"GL, Inc.\"\n";
        let (reg, stats) = OuiRegistry::parse(text);
        assert_eq!(reg.len(), 2);
        assert_eq!(stats.duplicates, 1);
        assert_eq!(stats.rejected, 1);
        assert_eq!(reg.get("74:24:9f".parse().unwrap()), Some("TIBRO Corp."));
        assert_eq!(reg.get("94:83:c4".parse().unwrap()), Some("GL, Inc."));
    }

    #[test]
    fn empty_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("oui.txt");
        fs::write(&path, "nothing useful\n").unwrap();
        assert!(matches!(load_oui_registry(&path), Err(RegistryError::Empty(_))));
        assert!(matches!(
            load_oui_registry(dir.path().join("missing.txt")),
            Err(RegistryError::Io { .. })
        ));
    }

    #[test]
    fn vendor_lookup_normalizes_local_bit() {
        let (reg, _) = OuiRegistry::parse(SAMPLE);
        assert_eq!(reg.vendor_of(mac("74:24:9f:01:02:03")), Vendor::Listed("TIBRO Corp."));
        assert_eq!(reg.vendor_of(mac("76:24:9f:01:02:03")), Vendor::Listed("TIBRO Corp."));
        assert_eq!(OuiRegistry::new().vendor_of(mac("aa:bb:cc:dd:ee:ff")), Vendor::Unlisted);
    }

    #[test]
    fn aliases_apply_to_lookups() {
        let (mut reg, _) = OuiRegistry::parse(SAMPLE);
        let aliases = parse_aliases("raw_name,normalized_name\nGL Technologies (Hong Kong) Limited,GL.iNet\n").unwrap();
        reg.set_aliases(aliases);
        assert_eq!(reg.vendor_of(mac("94:83:c4:00:00:01")), Vendor::Listed("GL.iNet"));
        assert_eq!(reg.vendor_of(mac("74:24:9f:00:00:01")), Vendor::Listed("TIBRO Corp."));
    }

    #[test]
    fn seed_set_doubles_registry() {
        let (reg, _) = OuiRegistry::parse(SAMPLE);
        let seeds = build_seed_set(&reg).unwrap();
        assert_eq!(seeds.len(), 6);
        assert!(seeds.iter().all(|o| !o.is_multicast()));
        assert_eq!(seeds.iter().filter(|o| o.is_locally_administered()).count(), 3);

        let mut one = OuiRegistry::new();
        one.insert("74:24:9f".parse().unwrap(), "TIBRO Corp.");
        assert_eq!(build_seed_set(&one).unwrap().len(), 2);
        assert_eq!(build_seed_set(&OuiRegistry::new()), Err(SeedError::EmptyRegistry));
    }

    #[test]
    fn guesses_are_distinct_and_prefixed() {
        let oui: Oui = "74:24:9f".parse().unwrap();
        let guesses = random_bssids(oui, 1 << 14, 7).unwrap();
        assert_eq!(guesses.len(), 16_384);
        assert!(guesses.iter().all(|m| m.oui() == oui));
        assert_eq!(guesses.iter().collect::<HashSet<_>>().len(), 16_384);
        assert_eq!(guesses, random_bssids(oui, 1 << 14, 7).unwrap());
        assert_ne!(guesses, random_bssids(oui, 1 << 14, 8).unwrap());
    }

    #[test]
    fn full_suffix_space_is_exhausted() {
        let oui: Oui = "08:4a:93".parse().unwrap();
        let all = random_bssids(oui, u64::from(SUFFIX_SPACE), 3).unwrap();
        let mut seen = vec![false; SUFFIX_SPACE as usize];
        for m in &all {
            assert!(!std::mem::replace(&mut seen[m.suffix() as usize], true));
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn guess_count_bounds() {
        let oui = Oui::new([0, 0, 0]);
        assert_eq!(random_bssids(oui, 0, 1), Err(SeedError::Zero));
        assert_eq!(
            random_bssids(oui, u64::from(SUFFIX_SPACE) + 1, 1),
            Err(SeedError::TooMany(u64::from(SUFFIX_SPACE) + 1))
        );
    }

    proptest! {
        #[test]
        fn shorter_lists_are_prefixes(seed in any::<u64>(), a in 1u64..500, b in 1u64..500) {
            let oui = Oui::new([0x74, 0x24, 0x9f]);
            let (short, long) = (a.min(b), a.max(b));
            let s = random_bssids(oui, short, seed).unwrap();
            let l = random_bssids(oui, long, seed).unwrap();
            prop_assert_eq!(&l[..short as usize], &s[..]);
        }
    }
}
