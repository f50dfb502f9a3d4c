//! Every output carries the resolved configuration, so a run can be
//! replayed from its own output.

use std::io::Write;
use std::path::Path;

use serde_json::{json, Value};

use crate::CliError;

pub fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, bytes)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
        }
    }
    Ok(())
}

/// `{"command", "config", ...body}` as pretty JSON.
pub fn json_document(command: &str, config: &Value, body: Value) -> Result<Vec<u8>, CliError> {
    let mut doc = json!({ "command": command, "config": config });
    if let (Value::Object(d), Value::Object(b)) = (&mut doc, body) {
        d.extend(b);
    }
    let mut bytes = serde_json::to_vec_pretty(&doc)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// `# proxyfair <command>` followed by one `# key=value` line per config key.
pub fn csv_preamble(command: &str, config: &Value) -> Vec<u8> {
    let mut s = format!("# proxyfair {command}\n");
    if let Value::Object(map) = config {
        for (k, v) in map {
            s.push_str(&format!("# {k}={v}\n"));
        }
    }
    s.into_bytes()
}
