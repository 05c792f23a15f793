//! Template-representation export: `K\td` header, then `id\tv1\t...\tvd`.

use std::path::Path;

use super::EvalError;
use crate::model::MhnModel;
use crate::numkernel::Mat;

/// Stored patterns of the first Hopfield layer, one row per template.
pub fn embeddings_text(model: &MhnModel) -> Result<String, EvalError> {
    let x = &model.memory()?[0];
    let mut out = format!("{}\t{}\n", x.rows, x.cols);
    for r in 0..x.rows {
        out.push_str(&r.to_string());
        for v in x.row(r) {
            // `{}` prints the shortest string that parses back to the same f64.
            out.push_str(&format!("\t{v}"));
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn export_embeddings(model: &MhnModel, path: &Path) -> Result<(), EvalError> {
    let text = embeddings_text(model)?;
    std::fs::write(path, text).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))
}

/// Parses an export back into template ids and the matrix.
pub fn parse_embeddings(text: &str) -> Result<(Vec<usize>, Mat), EvalError> {
    let bad = |m: String| EvalError::Parse(m);
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let dims: Vec<usize> = header
        .split('\t')
        .map(|f| f.parse().map_err(|_| bad(format!("bad header {header:?}"))))
        .collect::<Result<_, _>>()?;
    let [k, d] = dims[..] else { return Err(bad(format!("bad header {header:?}"))) };
    let mut ids = Vec::with_capacity(k);
    let mut data = Vec::with_capacity(k * d);
    for (i, line) in lines.enumerate() {
        let mut fields = line.split('\t');
        let id = fields.next().and_then(|f| f.parse().ok()).ok_or_else(|| bad(format!("row {}: bad id", i + 1)))?;
        let values: Vec<f64> =
            fields.map(|f| f.parse().map_err(|_| bad(format!("row {}: bad value {f:?}", i + 1)))).collect::<Result<_, _>>()?;
        if values.len() != d {
            return Err(bad(format!("row {}: {} values, expected {d}", i + 1, values.len())));
        }
        ids.push(id);
        data.extend(values);
    }
    if ids.len() != k {
        return Err(bad(format!("{} rows, expected {k}", ids.len())));
    }
    Ok((ids, Mat::from_vec(k, d, data)))
}
