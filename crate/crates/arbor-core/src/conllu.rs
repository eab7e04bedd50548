//! CoNLL-U reading, writing, and tree validation.
//!
//! This module owns the canonical in-memory sentence representation used by
//! every other component: a [`Sentence`] is an ordered list of [`Token`]s
//! whose `head` fields encode a dependency tree rooted at the virtual ROOT
//! node 0.
//!
//! The parser is strict about structure (column counts, integer ids and
//! heads, consecutive numbering) because downstream permutation and scoring
//! code indexes tokens positionally. Multiword-token range lines (`3-4`) and
//! empty nodes (`3.1`) are outside the model of "one token, one tree node"
//! and are dropped with counted warnings rather than errors.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

/// One syntactic word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// 1-based position in the sentence.
    pub id: usize,
    /// Surface form.
    pub form: String,
    /// Lemma, or `_` when absent.
    pub lemma: String,
    /// Universal POS tag, or `_` when absent.
    pub upos: String,
    /// Morphological features, kept verbatim and never parsed.
    pub feats: String,
    /// Head position in `[0, n]`; 0 is the virtual ROOT.
    pub head: usize,
    /// Dependency label of the arc from `head` to this token.
    pub deprel: String,
}

impl Token {
    /// A token with only the fields the parser models; the rest default
    /// to the CoNLL-U absent marker `_`.
    pub fn new(id: usize, form: &str, head: usize, deprel: &str) -> Self {
        Token {
            id,
            form: form.to_string(),
            lemma: "_".to_string(),
            upos: "_".to_string(),
            feats: "_".to_string(),
            head,
            deprel: deprel.to_string(),
        }
    }
}

/// An ordered sequence of tokens plus its surrounding comment lines.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Sentence {
    pub tokens: Vec<Token>,
    /// Value of a `# sent_id = ...` comment if one was present.
    pub sent_id: Option<String>,
    /// Raw comment lines (including the leading `#`), in input order.
    pub comments: Vec<String>,
}

impl Sentence {
    pub fn new(tokens: Vec<Token>) -> Self {
        Sentence {
            tokens,
            sent_id: None,
            comments: Vec::new(),
        }
    }

    /// Number of syntactic words (ROOT excluded).
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Gold head positions indexed by token order: `heads()[i]` is the head
    /// of the token with id `i + 1`.
    pub fn heads(&self) -> Vec<usize> {
        self.tokens.iter().map(|t| t.head).collect()
    }

    /// Gold dependency labels in token order.
    pub fn deprels(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.deprel.as_str()).collect()
    }
}

/// A list of sentences from one source.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Treebank {
    pub sentences: Vec<Sentence>,
    /// Where the data came from; empty for programmatically built treebanks.
    pub source_path: String,
}

impl Treebank {
    pub fn new(sentences: Vec<Sentence>) -> Self {
        Treebank {
            sentences,
            source_path: String::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

/// Why a CoNLL-U input was rejected. Every variant names the offending
/// 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConlluError {
    #[error("line {line}: expected 10 tab-separated columns, found {found}")]
    ColumnCount { line: usize, found: usize },
    #[error("line {line}: token id `{text}` is not a positive integer")]
    InvalidId { line: usize, text: String },
    #[error("line {line}: head `{text}` is not a non-negative integer")]
    InvalidHead { line: usize, text: String },
    #[error("line {line}: head {head} out of range for a {len}-token sentence")]
    HeadOutOfRange {
        line: usize,
        head: usize,
        len: usize,
    },
    #[error("line {line}: token id {found} out of order (expected {expected})")]
    NonConsecutiveId {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: sentence block has comments but no tokens")]
    EmptySentence { line: usize },
    #[error("input contains no sentences")]
    NoSentences,
}

/// A recoverable oddity observed while parsing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseWarning {
    /// A multiword-token range line such as `3-4\tdel\t...` was skipped.
    MultiwordTokenDropped { line: usize },
    /// An empty-node line such as `3.1\t...` was skipped.
    EmptyNodeDropped { line: usize },
}

impl core::fmt::Display for ParseWarning {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ParseWarning::MultiwordTokenDropped { line } => {
                write!(f, "line {line}: dropped multiword token range")
            }
            ParseWarning::EmptyNodeDropped { line } => {
                write!(f, "line {line}: dropped empty node")
            }
        }
    }
}

/// A parsed treebank together with the warnings produced while reading it.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseOutcome {
    pub treebank: Treebank,
    pub warnings: Vec<ParseWarning>,
}

/// Parse CoNLL-U text into a treebank.
///
/// Accepts Unix or Windows line endings. Multiword-token ranges and empty
/// nodes are dropped with a warning each; structural problems are errors.
pub fn parse_conllu(text: &str, source_path: &str) -> Result<ParseOutcome, ConlluError> {
    let mut sentences = Vec::new();
    let mut warnings = Vec::new();

    // Accumulator for the sentence block currently being read.
    let mut comments: Vec<String> = Vec::new();
    let mut tokens: Vec<Token> = Vec::new();
    // (line number, head) per token, for range checks once n is known.
    let mut head_lines: Vec<(usize, usize)> = Vec::new();
    let mut block_start_line = 0usize;

    let flush = |comments: &mut Vec<String>,
                 tokens: &mut Vec<Token>,
                 head_lines: &mut Vec<(usize, usize)>,
                 block_start_line: usize,
                 sentences: &mut Vec<Sentence>|
     -> Result<(), ConlluError> {
        if tokens.is_empty() {
            if comments.is_empty() {
                return Ok(());
            }
            return Err(ConlluError::EmptySentence {
                line: block_start_line,
            });
        }
        let n = tokens.len();
        for &(line, head) in head_lines.iter() {
            if head > n {
                return Err(ConlluError::HeadOutOfRange { line, head, len: n });
            }
        }
        let sent_id = comments.iter().find_map(|c| {
            c.strip_prefix("# sent_id")
                .and_then(|rest| rest.trim_start().strip_prefix('='))
                .map(|v| v.trim().to_string())
        });
        sentences.push(Sentence {
            tokens: core::mem::take(tokens),
            sent_id,
            comments: core::mem::take(comments),
        });
        head_lines.clear();
        Ok(())
    };

    for (idx, raw_line) in text.split('\n').enumerate() {
        let line_no = idx + 1;
        let line = raw_line.strip_suffix('\r').unwrap_or(raw_line);

        if line.is_empty() {
            flush(
                &mut comments,
                &mut tokens,
                &mut head_lines,
                block_start_line,
                &mut sentences,
            )?;
            continue;
        }
        if comments.is_empty() && tokens.is_empty() {
            block_start_line = line_no;
        }
        if line.starts_with('#') {
            comments.push(line.to_string());
            continue;
        }

        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(ConlluError::ColumnCount {
                line: line_no,
                found: cols.len(),
            });
        }

        let id_text = cols[0];
        if is_mwt_range(id_text) {
            warnings.push(ParseWarning::MultiwordTokenDropped { line: line_no });
            continue;
        }
        if is_empty_node_id(id_text) {
            warnings.push(ParseWarning::EmptyNodeDropped { line: line_no });
            continue;
        }
        let id: usize =
            id_text
                .parse()
                .ok()
                .filter(|&v| v >= 1)
                .ok_or_else(|| ConlluError::InvalidId {
                    line: line_no,
                    text: id_text.to_string(),
                })?;
        let expected = tokens.len() + 1;
        if id != expected {
            return Err(ConlluError::NonConsecutiveId {
                line: line_no,
                expected,
                found: id,
            });
        }
        let head: usize = cols[6].parse().map_err(|_| ConlluError::InvalidHead {
            line: line_no,
            text: cols[6].to_string(),
        })?;
        head_lines.push((line_no, head));
        tokens.push(Token {
            id,
            form: cols[1].to_string(),
            lemma: cols[2].to_string(),
            upos: cols[3].to_string(),
            feats: cols[5].to_string(),
            head,
            deprel: cols[7].to_string(),
        });
    }
    flush(
        &mut comments,
        &mut tokens,
        &mut head_lines,
        block_start_line,
        &mut sentences,
    )?;

    if sentences.is_empty() {
        return Err(ConlluError::NoSentences);
    }
    Ok(ParseOutcome {
        treebank: Treebank {
            sentences,
            source_path: source_path.to_string(),
        },
        warnings,
    })
}

/// `A-B` with both sides positive integers.
fn is_mwt_range(id: &str) -> bool {
    match id.split_once('-') {
        Some((a, b)) => a.parse::<usize>().is_ok() && b.parse::<usize>().is_ok(),
        None => false,
    }
}

/// `A.B` with both sides non-negative integers.
fn is_empty_node_id(id: &str) -> bool {
    match id.split_once('.') {
        Some((a, b)) => a.parse::<usize>().is_ok() && b.parse::<usize>().is_ok(),
        None => false,
    }
}

/// Serialize a treebank back to CoNLL-U text with Unix line endings and a
/// blank line after every sentence.
pub fn serialize_conllu(tb: &Treebank) -> String {
    let mut out = String::new();
    for sentence in &tb.sentences {
        // A programmatically attached sent_id gets a header line unless the
        // raw comments already carry one.
        if let Some(id) = &sentence.sent_id {
            let already = sentence.comments.iter().any(|c| c.starts_with("# sent_id"));
            if !already {
                out.push_str(&format!("# sent_id = {id}\n"));
            }
        }
        for comment in &sentence.comments {
            out.push_str(comment);
            out.push('\n');
        }
        for token in &sentence.tokens {
            let feats = if token.feats.is_empty() {
                "_"
            } else {
                token.feats.as_str()
            };
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t_\t{}\t{}\t{}\t_\t_\n",
                token.id, token.form, token.lemma, token.upos, feats, token.head, token.deprel
            ));
        }
        out.push('\n');
    }
    out
}

/// A structural problem that makes a sentence unusable as a dependency tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// No token has head 0.
    NoRoot,
    /// More than one token has head 0; lists their ids.
    MultipleRoots { ids: Vec<usize> },
    /// A token is its own head.
    SelfLoop { id: usize },
    /// A head index exceeds the sentence length.
    HeadOutOfRange { id: usize, head: usize },
    /// Head links form a cycle among these ids (sorted).
    Cycle { ids: Vec<usize> },
    /// A token with a head has no dependency label.
    EmptyDeprel { id: usize },
}

impl core::fmt::Display for Violation {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Violation::NoRoot => write!(f, "no token attaches to ROOT"),
            Violation::MultipleRoots { ids } => {
                write!(f, "multiple tokens attach to ROOT: {ids:?}")
            }
            Violation::SelfLoop { id } => write!(f, "token {id} is its own head"),
            Violation::HeadOutOfRange { id, head } => {
                write!(f, "token {id} has out-of-range head {head}")
            }
            Violation::Cycle { ids } => write!(f, "head links form a cycle: {ids:?}"),
            Violation::EmptyDeprel { id } => {
                write!(f, "token {id} has an empty dependency label")
            }
        }
    }
}

/// Check that a sentence's head links form a single-rooted arborescence and
/// that every attached token carries a label. An empty report means valid.
pub fn validate_tree(sentence: &Sentence) -> Vec<Violation> {
    let n = sentence.len();
    let mut violations = Vec::new();

    let mut roots = Vec::new();
    for token in &sentence.tokens {
        if token.head == token.id {
            violations.push(Violation::SelfLoop { id: token.id });
        } else if token.head > n {
            violations.push(Violation::HeadOutOfRange {
                id: token.id,
                head: token.head,
            });
        }
        if token.head == 0 {
            roots.push(token.id);
        }
        if token.deprel.is_empty() {
            violations.push(Violation::EmptyDeprel { id: token.id });
        }
    }
    match roots.len() {
        0 if n > 0 => violations.push(Violation::NoRoot),
        0 | 1 => {}
        _ => violations.push(Violation::MultipleRoots { ids: roots }),
    }

    // Cycle detection by path-following with tricoloring. Out-of-range and
    // self-loop arcs were already reported; self-loops are 1-cycles, so only
    // longer cycles are searched for here.
    const WHITE: u8 = 0;
    const GRAY: u8 = 1;
    const BLACK: u8 = 2;
    let mut color = alloc::vec![WHITE; n + 1];
    color[0] = BLACK;
    for start in 1..=n {
        if color[start] != WHITE {
            continue;
        }
        let mut path = Vec::new();
        let mut node = start;
        loop {
            color[node] = GRAY;
            path.push(node);
            let head = sentence.tokens[node - 1].head;
            if head > n || head == node {
                break; // already reported; treat as a dead end
            }
            match color[head] {
                WHITE => node = head,
                GRAY => {
                    let cycle_start = path.iter().position(|&p| p == head).unwrap();
                    let mut ids: Vec<usize> = path[cycle_start..].to_vec();
                    ids.sort_unstable();
                    violations.push(Violation::Cycle { ids });
                    break;
                }
                _ => break,
            }
        }
        for p in path {
            color[p] = BLACK;
        }
    }

    violations
}

/// True when [`validate_tree`] reports nothing.
pub fn is_valid(sentence: &Sentence) -> bool {
    validate_tree(sentence).is_empty()
}
