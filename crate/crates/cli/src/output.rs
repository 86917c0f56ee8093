//! Output files, each stamped with the library version and config digest.

use std::fs;
use std::path::{Path, PathBuf};

use jumpflow::analysis::{write_json_lines, write_summary_csv, CheckReport};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone)]
pub struct Header {
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
}

impl Header {
    pub fn new(command: &str, config_json: &str, seed: u64) -> Self {
        let bytes = Sha256::digest(config_json.as_bytes());
        Header {
            command: command.to_string(),
            config_sha256: bytes.iter().map(|b| format!("{b:02x}")).collect(),
            seed,
        }
    }

    pub fn json(&self) -> Value {
        json!({
            "tool": "jumpflow",
            "version": jumpflow::VERSION,
            "command": self.command,
            "config_sha256": self.config_sha256,
            "seed": self.seed,
        })
    }

    /// `#`-prefixed lines placed above CSV data.
    pub fn comment_block(&self) -> String {
        format!(
            "# tool jumpflow\n# version {}\n# command {}\n# config_sha256 {}\n# seed {}\n",
            jumpflow::VERSION,
            self.command,
            self.config_sha256,
            self.seed
        )
    }
}

pub struct Outputs {
    dir: PathBuf,
    header: Header,
    written: Vec<PathBuf>,
}

impl Outputs {
    pub fn new(dir: &Path, header: Header) -> Result<Self, String> {
        fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            header,
            written: Vec::new(),
        })
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<(), String> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| format!("{}: {e}", path.display()))?;
        self.written.push(path);
        Ok(())
    }

    /// Writes `body` with the header under the key `"header"`.
    pub fn json(&mut self, name: &str, mut body: Value) -> Result<(), String> {
        if let Value::Object(map) = &mut body {
            map.insert("header".into(), self.header.json());
        }
        let mut text = serde_json::to_string_pretty(&body).map_err(|e| e.to_string())?;
        text.push('\n');
        self.put(name, text.as_bytes())
    }

    pub fn csv(&mut self, name: &str, fill: impl FnOnce(&mut Vec<u8>) -> Result<(), String>) -> Result<(), String> {
        let mut buf = self.header.comment_block().into_bytes();
        fill(&mut buf)?;
        self.put(name, &buf)
    }

    /// `<stem>_reports.jsonl` (header object on the first line) and
    /// `<stem>_summary.csv`.
    pub fn reports(&mut self, stem: &str, reports: &[CheckReport]) -> Result<(), String> {
        let mut buf = serde_json::to_string(&json!({"header": self.header.json()})).map_err(|e| e.to_string())?;
        buf.push('\n');
        let mut bytes = buf.into_bytes();
        write_json_lines(reports, &mut bytes).map_err(|e| e.to_string())?;
        self.put(&format!("{stem}_reports.jsonl"), &bytes)?;
        self.csv(&format!("{stem}_summary.csv"), |b| {
            write_summary_csv(reports, b).map_err(|e| e.to_string())
        })
    }
}
