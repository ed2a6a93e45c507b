//! Named sets of caprice numbers used to select training material.
//!
//! Four splits are built in; more can be loaded from a flat text file with
//! one `name: n1,n2,...` line per split.

use super::CorpusError;
use std::collections::{BTreeMap, BTreeSet};

const BUILTIN: [(&str, &[u8]); 4] = [
    ("Paganini", &[
        1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22, 23, 24,
    ]),
    ("Melodics", &[20, 21, 22, 23, 24]),
    ("Moderato", &[2, 3, 4, 7, 9, 11, 14, 17, 18, 21, 23, 24]),
    ("Presto", &[1, 5, 6, 8, 10, 12, 13, 15, 16, 19, 20, 22]),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitRegistry {
    splits: BTreeMap<String, BTreeSet<u8>>,
}

impl Default for SplitRegistry {
    fn default() -> Self {
        Self::new()
    }
}

impl SplitRegistry {
    /// Registry holding only the built-in splits.
    pub fn new() -> Self {
        let splits = BUILTIN
            .iter()
            .map(|(name, numbers)| (name.to_string(), numbers.iter().copied().collect()))
            .collect();
        SplitRegistry { splits }
    }

    /// Caprice numbers for a registered split.
    pub fn resolve(&self, name: &str) -> Result<&BTreeSet<u8>, CorpusError> {
        self.splits
            .get(name)
            .ok_or_else(|| CorpusError::UnknownSplit(name.to_string()))
    }

    /// Registered split names in sorted order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.splits.keys().map(String::as_str)
    }

    /// Add a user split. Built-in names cannot be redefined.
    pub fn register(&mut self, name: &str, numbers: BTreeSet<u8>) -> Result<(), CorpusError> {
        if name.is_empty() {
            return Err(CorpusError::InvalidSplit("empty split name".into()));
        }
        if self.splits.contains_key(name) {
            return Err(CorpusError::InvalidSplit(format!("split {name:?} already defined")));
        }
        if numbers.is_empty() {
            return Err(CorpusError::InvalidSplit(format!("split {name:?} has no numbers")));
        }
        if let Some(&n) = numbers.iter().find(|&&n| !(1..=24).contains(&n)) {
            return Err(CorpusError::InvalidSplit(format!(
                "split {name:?} contains {n}, outside 1..=24"
            )));
        }
        self.splits.insert(name.to_string(), numbers);
        Ok(())
    }

    /// Merge split definitions from text: one `name: n1,n2,...` per line,
    /// with blank lines and `#` comments ignored.
    pub fn load_definitions(&mut self, text: &str) -> Result<(), CorpusError> {
        for raw in text.lines() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, rest) = line.split_once(':').ok_or_else(|| {
                CorpusError::InvalidSplit(format!("line {raw:?} is not name: n1,n2,..."))
            })?;
            let numbers = rest
                .split(',')
                .map(|n| {
                    n.trim().parse::<u8>().map_err(|_| {
                        CorpusError::InvalidSplit(format!("bad caprice number {:?}", n.trim()))
                    })
                })
                .collect::<Result<BTreeSet<u8>, _>>()?;
            self.register(name.trim(), numbers)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_splits_match_their_definitions() {
        let reg = SplitRegistry::new();
        let set = |ns: &[u8]| ns.iter().copied().collect::<BTreeSet<u8>>();
        assert_eq!(*reg.resolve("Paganini").unwrap(), set(&(1..=24).collect::<Vec<_>>()));
        assert_eq!(*reg.resolve("Melodics").unwrap(), set(&[20, 21, 22, 23, 24]));
        assert_eq!(
            *reg.resolve("Moderato").unwrap(),
            set(&[2, 3, 4, 7, 9, 11, 14, 17, 18, 21, 23, 24])
        );
        assert_eq!(
            *reg.resolve("Presto").unwrap(),
            set(&[1, 5, 6, 8, 10, 12, 13, 15, 16, 19, 20, 22])
        );
    }

    #[test]
    fn moderato_and_presto_partition_the_full_set() {
        let reg = SplitRegistry::new();
        let moderato = reg.resolve("Moderato").unwrap();
        let presto = reg.resolve("Presto").unwrap();
        assert!(moderato.is_disjoint(presto));
        let union: BTreeSet<u8> = moderato.union(presto).copied().collect();
        assert_eq!(union, *reg.resolve("Paganini").unwrap());
        // Melodics straddles the other two sub-splits.
        let melodics = reg.resolve("Melodics").unwrap();
        assert!(!melodics.is_disjoint(moderato));
        assert!(!melodics.is_disjoint(presto));
    }

    #[test]
    fn unknown_split_is_an_error() {
        let reg = SplitRegistry::new();
        assert_eq!(
            reg.resolve("Allegro").unwrap_err(),
            CorpusError::UnknownSplit("Allegro".into())
        );
    }

    #[test]
    fn loads_definitions_from_text() {
        let mut reg = SplitRegistry::new();
        reg.load_definitions("# custom splits\n\nOdd: 1,3,5\nPair: 2, 4\n").unwrap();
        assert_eq!(*reg.resolve("Odd").unwrap(), [1, 3, 5].into_iter().collect());
        assert_eq!(*reg.resolve("Pair").unwrap(), [2, 4].into_iter().collect());
    }

    #[test]
    fn rejects_bad_definitions() {
        let mut reg = SplitRegistry::new();
        assert!(reg.load_definitions("nocolon").is_err());
        assert!(reg.load_definitions("X: 0").is_err());
        assert!(reg.load_definitions("X: 25").is_err());
        assert!(reg.load_definitions("X: a,b").is_err());
        assert!(reg.load_definitions("Melodics: 1").is_err());
        assert!(reg.load_definitions("X: 1\nX: 2").is_err());
    }
}
