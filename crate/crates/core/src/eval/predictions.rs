use std::fs;
use std::path::Path;

use super::EvalError;
use crate::decoders::Prediction;

/// One line of a tagger output file: words with their predictions.
pub type PredictedSentence = Vec<(String, Prediction)>;

/// Output corpus text: the input format with predicted categories in place
/// of gold ones.
pub fn format_predictions<'a>(sentences: impl IntoIterator<Item = (Vec<&'a str>, &'a [Prediction])>) -> String {
    let mut out = String::new();
    for (words, preds) in sentences {
        let fields: Vec<String> = words
            .iter()
            .zip(preds)
            .map(|(w, p)| format!("{w}|{}", p.to_field()))
            .collect();
        out.push_str(&fields.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_predictions(text: &str) -> Result<Vec<PredictedSentence>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| EvalError::Format { line: i + 1, message };
        let mut sentence = Vec::new();
        for token in line.split(' ') {
            let bar = token.rfind('|').ok_or_else(|| err(format!("token {token:?} has no '|'")))?;
            let prediction = Prediction::parse_field(&token[bar + 1..]).map_err(err)?;
            sentence.push((token[..bar].to_string(), prediction));
        }
        out.push(sentence);
    }
    Ok(out)
}

pub fn load_predictions(path: &Path) -> Result<Vec<PredictedSentence>, EvalError> {
    let text = fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_predictions(&text)
}

/// Checks a prediction file lines up with `gold` word for word and returns
/// the bare predictions.
pub fn align_predictions(pred: Vec<PredictedSentence>, gold: &crate::corpus::Corpus) -> Result<Vec<Vec<Prediction>>, EvalError> {
    if pred.len() != gold.len() {
        return Err(EvalError::Alignment(format!(
            "{} predicted sentences, {} gold sentences",
            pred.len(),
            gold.len()
        )));
    }
    let mut out = Vec::with_capacity(pred.len());
    for (s, (p, g)) in pred.into_iter().zip(&gold.sentences).enumerate() {
        if p.len() != g.len() {
            return Err(EvalError::Alignment(format!(
                "sentence {s}: {} predicted tokens, {} gold tokens",
                p.len(),
                g.len()
            )));
        }
        for (t, ((w, _), gw)) in p.iter().zip(g.words()).enumerate() {
            if w != gw {
                return Err(EvalError::Alignment(format!("sentence {s}, token {t}: word {w:?} but gold has {gw:?}")));
            }
        }
        out.push(p.into_iter().map(|(_, pr)| pr).collect());
    }
    Ok(out)
}
