//! File handling shared by the subcommands: treebanks in CoNLL-U, models as
//! binary checkpoints. All failures here are data errors (exit code 2).

use std::path::Path;

use arbor_core::conllu::{parse_conllu, serialize_conllu, validate_tree, Treebank};
use arbor_core::model::ParserModel;

use crate::CliError;

/// Read and parse a treebank; parse warnings (dropped multiword-token and
/// empty-node lines) go to stderr.
pub fn read_treebank(path: &Path) -> Result<Treebank, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let outcome = parse_conllu(&text, &path.display().to_string())
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    for warning in &outcome.warnings {
        eprintln!("{}: warning: {warning}", path.display());
    }
    Ok(outcome.treebank)
}

/// Read a treebank whose sentences must all be valid dependency trees
/// (training and gold-standard inputs).
pub fn read_tree_treebank(path: &Path) -> Result<Treebank, CliError> {
    let tb = read_treebank(path)?;
    for (idx, sentence) in tb.sentences.iter().enumerate() {
        let violations = validate_tree(sentence);
        if let Some(first) = violations.first() {
            let name = sentence
                .sent_id
                .clone()
                .unwrap_or_else(|| format!("#{}", idx + 1));
            return Err(CliError::Data(format!(
                "{}: sentence {name}: {first:?}",
                path.display()
            )));
        }
    }
    Ok(tb)
}

pub fn write_treebank(path: &Path, tb: &Treebank) -> Result<(), CliError> {
    std::fs::write(path, serialize_conllu(tb))
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

pub fn read_model(path: &Path) -> Result<ParserModel, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Data(format!("cannot read model {}: {e}", path.display())))?;
    ParserModel::load_bytes(&bytes)
        .map_err(|e| CliError::Data(format!("{}: invalid checkpoint: {e}", path.display())))
}

pub fn write_model_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes)
        .map_err(|e| CliError::Data(format!("cannot write model {}: {e}", path.display())))
}
