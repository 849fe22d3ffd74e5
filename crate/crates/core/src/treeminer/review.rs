use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{MiningError, MiningRun};
use crate::hashing::sha256_lines;

pub const REVIEW_HEADER: &str = "token\tview\titeration\tz\tcategory\tnote";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Spurious,
    Genuine,
    Unreviewed,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::Spurious => "spurious",
            Category::Genuine => "genuine",
            Category::Unreviewed => "unreviewed",
        })
    }
}

impl FromStr for Category {
    type Err = String;

    /// An empty cell means the expert has not looked at the token yet.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "spurious" => Ok(Category::Spurious),
            "genuine" => Ok(Category::Genuine),
            "unreviewed" | "" => Ok(Category::Unreviewed),
            other => Err(format!("invalid category {other:?} (expected spurious, genuine or unreviewed)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub view: String,
    pub iteration: usize,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub category: Category,
    pub note: String,
    pub provenance: Provenance,
}

/// Expert-reviewed mined tokens, one entry per token.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SpuriousLexicon {
    pub entries: BTreeMap<String, LexiconEntry>,
}

impl SpuriousLexicon {
    /// Tokens the expert marked spurious, in lexicon (sorted) order. This is
    /// the target order of the vocabulary discriminator.
    pub fn spurious_tokens(&self) -> Vec<String> {
        self.entries
            .iter()
            .filter(|(_, e)| e.category == Category::Spurious)
            .map(|(t, _)| t.clone())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!("{REVIEW_HEADER}\n");
        for (t, e) in &self.entries {
            out.push_str(&row(t, &e.provenance, &e.category.to_string(), &e.note));
        }
        out
    }

    pub fn content_hash(&self) -> String {
        sha256_lines(self.to_tsv().lines())
    }
}

fn row(token: &str, p: &Provenance, category: &str, note: &str) -> String {
    format!("{token}\t{}\t{}\t{}\t{category}\t{note}\n", p.view, p.iteration, p.z)
}

/// Writes every extracted token with its provenance and an empty category
/// column for the expert to fill in. A token extracted under several views
/// keeps its first occurrence.
pub fn export_review(runs: &[MiningRun], path: &Path) -> Result<usize, MiningError> {
    let mut seen = std::collections::BTreeSet::new();
    let mut out = format!("{REVIEW_HEADER}\n");
    for run in runs {
        for (token, iteration) in run.extracted() {
            if !seen.insert(token.to_string()) {
                continue;
            }
            let z = run.z.get(token).copied().unwrap_or(f64::NAN);
            let p = Provenance { view: run.view_name.clone(), iteration, z };
            out.push_str(&row(token, &p, "", ""));
        }
    }
    if seen.is_empty() {
        return Err(MiningError::EmptyRun);
    }
    let io = |source| MiningError::Io { path: path.to_path_buf(), source };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(out.as_bytes()).map_err(io)?;
    Ok(seen.len())
}

/// Parses review TSV text. Line numbers in errors are 1-based physical lines.
pub fn parse_review(text: &str, path: &Path) -> Result<SpuriousLexicon, MiningError> {
    let err = |line: usize, message: String| MiningError::Review { path: path.to_path_buf(), line, message };
    let mut lex = SpuriousLexicon::default();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() || line.starts_with("token\t") {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 5 || cols.len() > 6 {
            return Err(err(line_no, format!("expected 6 tab-separated columns, found {}", cols.len())));
        }
        let token = cols[0].trim();
        if token.is_empty() {
            return Err(err(line_no, "empty token".into()));
        }
        let iteration = cols[2]
            .trim()
            .parse::<usize>()
            .map_err(|e| err(line_no, format!("bad iteration {:?}: {e}", cols[2])))?;
        let z = match cols[3].trim() {
            "" => f64::NAN,
            s => s.parse::<f64>().map_err(|e| err(line_no, format!("bad z {s:?}: {e}")))?,
        };
        let category: Category = cols[4].parse().map_err(|m| err(line_no, m))?;
        let note = cols.get(5).map_or("", |s| s.trim()).to_string();
        let entry = LexiconEntry {
            category,
            note,
            provenance: Provenance { view: cols[1].trim().to_string(), iteration, z },
        };
        match lex.entries.get(token) {
            Some(prev) if prev.category != entry.category => {
                return Err(err(
                    line_no,
                    format!("token {token:?} already categorized as {}, now {}", prev.category, entry.category),
                ));
            }
            Some(_) => {}
            None => {
                lex.entries.insert(token.to_string(), entry);
            }
        }
    }
    Ok(lex)
}

pub fn import_review(path: &Path) -> Result<SpuriousLexicon, MiningError> {
    let text = fs::read_to_string(path).map_err(|source| MiningError::Io { path: path.to_path_buf(), source })?;
    parse_review(&text, path)
}
