use std::collections::BTreeMap;
use std::path::Path;

use super::TermTableError;

/// Surface term → canonical term, applied to prose by longest match.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TermTable {
    /// Keys grouped by first character, longest first.
    by_first: BTreeMap<char, Vec<(String, String)>>,
    len: usize,
}

impl TermTable {
    pub fn new<I, K, V>(entries: I) -> Result<Self, TermTableError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        let mut by_first: BTreeMap<char, Vec<(String, String)>> = BTreeMap::new();
        let mut len = 0;
        for (k, v) in entries {
            let (k, v) = (k.into(), v.into());
            let Some(first) = k.chars().next() else {
                return Err(TermTableError::EmptyTerm);
            };
            if v.contains(['$', '<', '>', '\\']) {
                return Err(TermTableError::MarkupInCanonical(v));
            }
            let bucket = by_first.entry(first).or_default();
            if let Some(existing) = bucket.iter_mut().find(|(ek, _)| *ek == k) {
                existing.1 = v;
            } else {
                bucket.push((k, v));
                len += 1;
            }
        }
        for bucket in by_first.values_mut() {
            bucket.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        }
        let table = TermTable { by_first, len };
        // canonical terms must not themselves be rewritten
        for bucket in table.by_first.values() {
            for (_, v) in bucket {
                let again = table.apply(v);
                if again != *v {
                    return Err(TermTableError::NotIdempotent {
                        term: v.clone(),
                        rewritten: again,
                    });
                }
            }
        }
        Ok(table)
    }

    /// Parses a two-column UTF-8 TSV. Blank lines and `#` comments are skipped.
    pub fn parse_tsv(src: &str) -> Result<Self, TermTableError> {
        let mut entries = Vec::new();
        for (i, line) in src.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            match (cols.next(), cols.next(), cols.next()) {
                (Some(k), Some(v), None) if !k.is_empty() => {
                    entries.push((k.to_string(), v.to_string()))
                }
                _ => return Err(TermTableError::Malformed { line: i + 1 }),
            }
        }
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self, TermTableError> {
        let src = std::fs::read_to_string(path).map_err(|e| TermTableError::Io(path.display().to_string(), e))?;
        Self::parse_tsv(&src)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Replaces terms left to right, taking the longest key at each position.
    pub fn apply(&self, s: &str) -> String {
        if self.is_empty() {
            return s.to_string();
        }
        let mut out = String::with_capacity(s.len());
        let mut i = 0;
        while i < s.len() {
            let rest = &s[i..];
            let c = rest.chars().next().unwrap();
            let hit = self
                .by_first
                .get(&c)
                .and_then(|bucket| bucket.iter().find(|(k, _)| rest.starts_with(k.as_str())));
            match hit {
                Some((k, v)) => {
                    out.push_str(v);
                    i += k.len();
                }
                None => {
                    out.push(c);
                    i += c.len_utf8();
                }
            }
        }
        out
    }

    /// Entries as (surface, canonical), sorted by surface term.
    pub fn entries(&self) -> Vec<(&str, &str)> {
        let mut all: Vec<(&str, &str)> = self
            .by_first
            .values()
            .flatten()
            .map(|(k, v)| (k.as_str(), v.as_str()))
            .collect();
        all.sort();
        all
    }

    pub fn to_tsv(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k}\t{v}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn longest_match_wins() {
        let t = TermTable::new([("quadratic surd", "quadratic radical"), ("surd", "radical")]).unwrap();
        assert_eq!(t.apply("a quadratic surd and a surd"), "a quadratic radical and a radical");
    }

    #[test]
    fn case_sensitive() {
        let t = TermTable::new([("surd", "radical")]).unwrap();
        assert_eq!(t.apply("Surd surd"), "Surd radical");
    }

    #[test]
    fn rejects_non_idempotent_tables() {
        let err = TermTable::new([("a", "b"), ("b", "c")]).unwrap_err();
        assert!(matches!(err, TermTableError::NotIdempotent { .. }));
    }

    #[test]
    fn tsv_parsing() {
        let t = TermTable::parse_tsv("# comment\n二次根式\tquadratic radical\n\nsurd\tradical\n").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.apply("二次根式"), "quadratic radical");
        assert!(matches!(
            TermTable::parse_tsv("only-one-column\n"),
            Err(TermTableError::Malformed { line: 1 })
        ));
    }

    #[test]
    fn tsv_round_trip() {
        let t = TermTable::new([("b", "x"), ("a", "y")]).unwrap();
        assert_eq!(TermTable::parse_tsv(&t.to_tsv()).unwrap(), t);
    }
}
