use ambientlab::Error;
use serde_json::{json, Value};
use std::path::PathBuf;
use std::process::ExitCode;

use crate::quantities::flatten;
use crate::Format;

pub const SCHEMA: &str = "ambientlab/1";

pub struct Failure {
    pub code: u8,
    pub kind: &'static str,
    pub reason: String,
}

impl Failure {
    pub fn usage(reason: &str) -> Failure {
        Failure {
            code: 2,
            kind: "input",
            reason: reason.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        let (code, kind, reason) = match e {
            Error::Usage(m) | Error::Input(m) => (2, "input", m),
            Error::SingularInput(m) => (2, "input", format!("singular input: {m}")),
            Error::Capability(m) => (3, "capability", m),
            Error::InsufficientOrder(m) => (3, "capability", format!("insufficient order: {m}")),
            Error::InternalConsistency(m) => (1, "internal", m),
        };
        Failure { code, kind, reason }
    }
}

pub struct Report {
    pub command: &'static str,
    pub body: Value,
    pub failure: Option<Failure>,
    pub verification_failed: bool,
    pub wall_time: f64,
}

impl Report {
    pub fn new(command: &'static str) -> Report {
        Report {
            command,
            body: json!({}),
            failure: None,
            verification_failed: false,
            wall_time: 0.0,
        }
    }

    pub fn fail(command: &'static str, f: Failure) -> Report {
        let mut r = Report::new(command);
        r.failure = Some(f);
        r
    }

    pub fn error(mut self, e: Error) -> Report {
        self.failure = Some(e.into());
        self
    }

    pub fn with_time(mut self, t: f64) -> Report {
        self.wall_time = t;
        self
    }

    fn document(&self) -> Value {
        let mut doc = json!({
            "schema": SCHEMA,
            "tool_version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
        });
        if let Value::Object(m) = &self.body {
            for (k, v) in m {
                doc[k] = v.clone();
            }
        }
        if let Some(f) = &self.failure {
            doc["error"] = json!({ "kind": f.kind, "reason": f.reason });
        }
        doc["ok"] =
            json!(self.failure.is_none() && !self.verification_failed && all_finite(&self.body));
        doc["wall_time_s"] = json!(self.wall_time);
        doc
    }

    fn exit_code(&self) -> u8 {
        match &self.failure {
            Some(f) => f.code,
            None if self.verification_failed || !all_finite(&self.body) => 1,
            None => 0,
        }
    }

    /// Print the JSON document and optionally write it (or a CSV form) to a file.
    pub fn emit(self, out: Option<(PathBuf, Format)>) -> ExitCode {
        let doc = self.document();
        let text = serde_json::to_string_pretty(&doc).expect("serializable report");
        {
            use std::io::Write;
            // a closed pipe on stdout is not an error for the caller
            let _ = writeln!(std::io::stdout().lock(), "{text}");
        }
        let mut code = self.exit_code();
        if let Some(f) = &self.failure {
            eprintln!("error[{}]: {}", f.kind, f.reason);
        }
        if let Some((path, fmt)) = out {
            let written = match fmt {
                Format::Json => {
                    std::fs::write(&path, format!("{text}\n")).map_err(|e| e.to_string())
                }
                Format::Csv => write_csv(&path, &doc),
            };
            if let Err(e) = written {
                eprintln!("error[input]: cannot write '{}': {e}", path.display());
                code = 2;
            }
        }
        ExitCode::from(code)
    }
}

fn all_finite(v: &Value) -> bool {
    match v {
        Value::Null => false,
        Value::Array(a) => a.iter().all(all_finite),
        Value::Object(m) => m.iter().all(|(k, x)| {
            // optional fields legitimately hold null
            matches!(k.as_str(), "grid" | "error" | "y" | "report") || all_finite(x)
        }),
        Value::Number(n) => n.as_f64().is_some_and(f64::is_finite),
        _ => true,
    }
}

fn write_csv(path: &PathBuf, doc: &Value) -> Result<(), String> {
    let mut w = csv::Writer::from_path(path).map_err(|e| e.to_string())?;
    let err = |e: csv::Error| e.to_string();
    if let Some(checks) = doc["checks"].as_array() {
        w.write_record(["suite", "name", "pass", "rel_err", "tolerance", "seconds"])
            .map_err(err)?;
        for c in checks {
            let rel = c["report"]["rel_err"]
                .as_f64()
                .map_or("".into(), |v| format!("{v:e}"));
            w.write_record([
                c["suite"].as_str().unwrap_or(""),
                c["name"].as_str().unwrap_or(""),
                &c["pass"].to_string(),
                &rel,
                &format!("{:e}", c["tolerance"].as_f64().unwrap_or(f64::NAN)),
                &format!("{:.3}", c["seconds"].as_f64().unwrap_or(0.0)),
            ])
            .map_err(err)?;
        }
    } else if let Some(res) = doc["results"].as_object() {
        w.write_record(["quantity", "index", "value"])
            .map_err(err)?;
        for (q, v) in res {
            let mut rows = Vec::new();
            flatten(v, &mut vec![], &mut rows);
            for (idx, x) in rows {
                let idx: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
                w.write_record([q.as_str(), &idx.join(" "), &format!("{x:.17e}")])
                    .map_err(err)?;
            }
        }
    }
    w.flush().map_err(|e| e.to_string())
}
