use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::corpus::PreferenceExample;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    prompt: String,
    chosen: String,
    rejected: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gold_margin: Option<f64>,
}

pub fn load_preference_jsonl(path: impl AsRef<Path>) -> Result<Vec<PreferenceExample>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| {
            let detail = e.to_string();
            if e.is_data() {
                Error::Schema {
                    path: path.to_path_buf(),
                    line: lineno,
                    detail,
                }
            } else {
                Error::MalformedLine {
                    path: path.to_path_buf(),
                    line: lineno,
                    detail,
                }
            }
        })?;
        let ex = PreferenceExample {
            question: rec.prompt,
            chosen: rec.chosen,
            rejected: rec.rejected,
            gold_margin: rec.gold_margin,
        };
        ex.validate().map_err(|e| Error::Schema {
            path: path.to_path_buf(),
            line: lineno,
            detail: e.to_string(),
        })?;
        out.push(ex);
    }
    Ok(out)
}

pub fn save_preference_jsonl(path: impl AsRef<Path>, examples: &[PreferenceExample]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for ex in examples {
        let rec = Record {
            prompt: ex.question.clone(),
            chosen: ex.chosen.clone(),
            rejected: ex.rejected.clone(),
            gold_margin: ex.gold_margin,
        };
        serde_json::to_writer(&mut w, &rec).expect("record serialises");
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
