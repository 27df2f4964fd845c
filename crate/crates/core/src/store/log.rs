use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{Stored, StoreError};

/// Appends one JSON line per record and flushes before returning.
pub(crate) struct LogWriter {
    file: File,
}

impl LogWriter {
    /// Opens for append, first cutting off a torn trailing line if there is one.
    pub(crate) fn open(path: &Path) -> Result<Self, StoreError> {
        let file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(path)?;
        let valid = valid_prefix_len(path)?;
        if file.metadata()?.len() != valid {
            file.set_len(valid)?;
        }
        Ok(Self { file })
    }

    pub(crate) fn append<T: Serialize>(&mut self, line: &Stored<T>) -> Result<(), StoreError> {
        let mut buf = serde_json::to_vec(line)?;
        buf.push(b'\n');
        self.file.write_all(&buf)?;
        self.file.flush()?;
        Ok(())
    }
}

/// Byte length of the newline-terminated prefix.
fn valid_prefix_len(path: &Path) -> Result<u64, StoreError> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(0),
        Err(e) => return Err(e.into()),
    };
    Ok(bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i as u64 + 1))
}

/// Reads every complete line of a log. A final line without its newline is
/// treated as an interrupted write and skipped; a malformed complete line is
/// an error.
pub fn read_log<T: DeserializeOwned>(path: &Path) -> Result<Vec<Stored<T>>, StoreError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut reader = BufReader::new(file);
    let mut out = Vec::new();
    let mut line = String::new();
    let mut n = 0;
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        n += 1;
        if !line.ends_with('\n') {
            tracing::warn!(path = %path.display(), line = n, "ignoring torn trailing line");
            break;
        }
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
            file: path.to_path_buf(),
            line: n,
            reason: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Exclusive claim on a run directory, released on drop.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(dir: &Path) -> Result<Self, StoreError> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(StoreError::Locked(dir.to_path_buf()))
            }
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_lock_fails_until_first_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let first = RunLock::acquire(dir.path()).unwrap();
        assert!(matches!(RunLock::acquire(dir.path()), Err(StoreError::Locked(_))));
        drop(first);
        RunLock::acquire(dir.path()).unwrap();
    }

    #[test]
    fn malformed_complete_line_is_reported_with_its_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.jsonl");
        std::fs::write(&path, "{\"id\":1,\"record\":3}\nnot json\n").unwrap();
        match read_log::<u32>(&path) {
            Err(StoreError::Corrupt { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
