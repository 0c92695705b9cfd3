//! Closed character-level token table.
//!
//! Ids are dense and assigned in a fixed order: special markers first, then
//! the first vocabulary (`a`..`j`), then the second (`k`..`t`).

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::error::TaskError;

/// Dense token identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TokenId(pub u16);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Reserved marker ids.
pub mod special {
    use super::TokenId;

    pub const PAD: TokenId = TokenId(0);
    pub const BOS: TokenId = TokenId(1);
    pub const EOS: TokenId = TokenId(2);
    /// Pair separator, rendered like the sequence-pair example input.
    pub const SEP: TokenId = TokenId(3);
    pub const COPY: TokenId = TokenId(4);
    pub const REVERSE: TokenId = TokenId(5);
    /// Denoising sentinel used by the pretraining corpus.
    pub const MASK: TokenId = TokenId(6);
    pub const ZERO: TokenId = TokenId(7);
    pub const ONE: TokenId = TokenId(8);
}

const SPECIAL_SURFACES: [&str; 9] = [
    "<pad>", "<s>", "<eos>", "</s>", "copy:", "reverse:", "<mask>", "0", "1",
];
const V1_LETTERS: &str = "abcdefghij";
const V2_LETTERS: &str = "klmnopqrst";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenKind {
    Special,
    V1,
    V2,
}

impl TokenKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TokenKind::Special => "special",
            TokenKind::V1 => "v1",
            TokenKind::V2 => "v2",
        }
    }
}

impl FromStr for TokenKind {
    type Err = TaskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "special" => Ok(TokenKind::Special),
            "v1" => Ok(TokenKind::V1),
            "v2" => Ok(TokenKind::V2),
            other => Err(TaskError::UnknownName {
                what: "token kind",
                name: other.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub id: TokenId,
    pub surface: String,
    pub kind: TokenKind,
}

/// The two disjoint content vocabularies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VocabName {
    V1,
    V2,
}

impl VocabName {
    pub fn flipped(self) -> Self {
        match self {
            VocabName::V1 => VocabName::V2,
            VocabName::V2 => VocabName::V1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VocabName::V1 => "V1",
            VocabName::V2 => "V2",
        }
    }
}

impl fmt::Display for VocabName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VocabName {
    type Err = TaskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "V1" | "v1" => Ok(VocabName::V1),
            "V2" | "v2" => Ok(VocabName::V2),
            other => Err(TaskError::UnknownName {
                what: "vocabulary",
                name: other.to_string(),
            }),
        }
    }
}

#[derive(Debug)]
pub struct TokenTable {
    tokens: Vec<Token>,
    by_surface: HashMap<String, TokenId>,
}

static STANDARD: LazyLock<TokenTable> = LazyLock::new(|| {
    let mut tokens = Vec::new();
    let mut push = |surface: String, kind: TokenKind| {
        let id = TokenId(tokens.len() as u16);
        tokens.push(Token { id, surface, kind });
    };
    for s in SPECIAL_SURFACES {
        push(s.to_string(), TokenKind::Special);
    }
    for c in V1_LETTERS.chars() {
        push(c.to_string(), TokenKind::V1);
    }
    for c in V2_LETTERS.chars() {
        push(c.to_string(), TokenKind::V2);
    }
    TokenTable::from_tokens(tokens).expect("standard token table is well formed")
});

impl TokenTable {
    /// The table used everywhere in this workspace.
    pub fn standard() -> &'static TokenTable {
        &STANDARD
    }

    fn from_tokens(tokens: Vec<Token>) -> Result<Self, TaskError> {
        let mut by_surface = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.id.index() != i {
                return Err(TaskError::TokenTable(format!(
                    "token {:?} has id {} at position {i}",
                    t.surface, t.id.0
                )));
            }
            if t.surface.is_empty()
                || t.surface.contains(char::is_whitespace)
                || !t.surface.is_ascii()
            {
                return Err(TaskError::TokenTable(format!(
                    "surface {:?} is not a printable ascii word",
                    t.surface
                )));
            }
            if by_surface.insert(t.surface.clone(), t.id).is_some() {
                return Err(TaskError::TokenTable(format!(
                    "duplicate surface {:?}",
                    t.surface
                )));
            }
        }
        Ok(TokenTable { tokens, by_surface })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn get(&self, id: TokenId) -> Option<&Token> {
        self.tokens.get(id.index())
    }

    pub fn surface(&self, id: TokenId) -> &str {
        &self.tokens[id.index()].surface
    }

    pub fn kind(&self, id: TokenId) -> Option<TokenKind> {
        self.get(id).map(|t| t.kind)
    }

    pub fn id_of(&self, surface: &str) -> Result<TokenId, TaskError> {
        self.by_surface
            .get(surface)
            .copied()
            .ok_or_else(|| TaskError::UnknownSurface(surface.to_string()))
    }

    /// Parses space-separated surfaces.
    pub fn parse(&self, text: &str) -> Result<Vec<TokenId>, TaskError> {
        text.split_whitespace().map(|s| self.id_of(s)).collect()
    }

    pub fn render(&self, ids: &[TokenId]) -> String {
        let mut out = String::new();
        for (i, id) in ids.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(self.surface(*id));
        }
        out
    }

    pub fn vocabulary(&self, name: VocabName) -> Vocabulary {
        let kind = match name {
            VocabName::V1 => TokenKind::V1,
            VocabName::V2 => TokenKind::V2,
        };
        Vocabulary {
            name,
            tokens: self
                .tokens
                .iter()
                .filter(|t| t.kind == kind)
                .map(|t| t.id)
                .collect(),
        }
    }

    /// `id<TAB>surface<TAB>kind` per line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(&format!("{}\t{}\t{}\n", t.id.0, t.surface, t.kind.as_str()));
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self, TaskError> {
        let mut tokens = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let bad = || TaskError::TokenTable(format!("line {}: malformed entry {line:?}", n + 1));
            if fields.len() != 3 {
                return Err(bad());
            }
            let id: u16 = fields[0].parse().map_err(|_| bad())?;
            tokens.push(Token {
                id: TokenId(id),
                surface: fields[1].to_string(),
                kind: fields[2].parse()?,
            });
        }
        Self::from_tokens(tokens)
    }
}

/// An ordered set of content tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub name: VocabName,
    pub tokens: Vec<TokenId>,
}

impl Vocabulary {
    pub fn new(name: VocabName, tokens: Vec<TokenId>) -> Result<Self, TaskError> {
        if tokens.is_empty() {
            return Err(TaskError::EmptyVocabulary);
        }
        let mut seen = std::collections::HashSet::new();
        for t in &tokens {
            if !seen.insert(*t) {
                return Err(TaskError::TokenTable(format!(
                    "token id {} repeated in vocabulary",
                    t.0
                )));
            }
        }
        Ok(Vocabulary { name, tokens })
    }

    /// Builds a vocabulary from a string of single-character surfaces, e.g. `"abcde"`.
    pub fn from_letters(name: VocabName, letters: &str) -> Result<Self, TaskError> {
        let table = TokenTable::standard();
        let tokens = letters
            .chars()
            .map(|c| table.id_of(&c.to_string()))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(name, tokens)
    }

    pub fn v1() -> Self {
        TokenTable::standard().vocabulary(VocabName::V1)
    }

    pub fn v2() -> Self {
        TokenTable::standard().vocabulary(VocabName::V2)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn contains(&self, id: TokenId) -> bool {
        self.tokens.contains(&id)
    }

    pub fn letters(&self) -> String {
        let table = TokenTable::standard();
        self.tokens.iter().map(|t| table.surface(*t)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_follow_documented_order() {
        let t = TokenTable::standard();
        assert_eq!(t.len(), 29);
        assert_eq!(t.surface(special::SEP), "</s>");
        assert_eq!(t.surface(special::ONE), "1");
        assert_eq!(t.id_of("a").unwrap(), TokenId(9));
        assert_eq!(t.id_of("k").unwrap(), TokenId(19));
        assert_eq!(t.id_of("t").unwrap(), TokenId(28));
    }

    #[test]
    fn vocabularies_are_disjoint_and_sized() {
        let (v1, v2) = (Vocabulary::v1(), Vocabulary::v2());
        assert_eq!(v1.len(), 10);
        assert_eq!(v2.len(), 10);
        assert!(v1.tokens.iter().all(|t| !v2.contains(*t)));
        assert_eq!(v1.letters(), "abcdefghij");
        assert_eq!(v2.letters(), "klmnopqrst");
    }

    #[test]
    fn specials_do_not_collide_with_letters() {
        let t = TokenTable::standard();
        for tok in t.tokens().iter().filter(|t| t.kind == TokenKind::Special) {
            assert!(!V1_LETTERS.contains(tok.surface.as_str()) || tok.surface.len() > 1);
            assert!(!V2_LETTERS.contains(tok.surface.as_str()) || tok.surface.len() > 1);
        }
    }

    #[test]
    fn tsv_round_trip() {
        let t = TokenTable::standard();
        let text = t.to_tsv();
        assert!(text.starts_with("0\t<pad>\tspecial\n"));
        let back = TokenTable::from_tsv(&text).unwrap();
        assert_eq!(back.tokens(), t.tokens());
    }

    #[test]
    fn tsv_rejects_duplicates() {
        let err = TokenTable::from_tsv("0\ta\tv1\n1\ta\tv1\n").unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn parse_and_render() {
        let t = TokenTable::standard();
        let ids = t.parse("a b </s> a b").unwrap();
        assert_eq!(ids.len(), 5);
        assert_eq!(t.render(&ids), "a b </s> a b");
        assert!(t.parse("a z").is_err());
    }
}
