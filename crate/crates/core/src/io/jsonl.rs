//! JSON Lines helpers. Errors carry the 1-based line number.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Streaming reader; blank lines are skipped.
pub struct JsonlReader<T> {
    path: PathBuf,
    reader: Box<dyn BufRead>,
    line: usize,
    buf: Vec<u8>,
    _marker: PhantomData<T>,
}

impl<T: DeserializeOwned> JsonlReader<T> {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_reader(path, BufReader::new(file)))
    }

    pub fn from_reader(path: &Path, reader: impl BufRead + 'static) -> Self {
        JsonlReader {
            path: path.to_path_buf(),
            reader: Box::new(reader),
            line: 0,
            buf: Vec::new(),
            _marker: PhantomData,
        }
    }

    fn parse_error(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line: self.line,
            message: message.into(),
        }
    }
}

impl<T: DeserializeOwned> Iterator for JsonlReader<T> {
    type Item = Result<(usize, T)>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.reader.read_until(b'\n', &mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            }
            self.line += 1;
            if self.buf.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            return Some(
                serde_json::from_slice(&self.buf)
                    .map(|v| (self.line, v))
                    .map_err(|e| self.parse_error(e.to_string())),
            );
        }
    }
}

pub fn read_all<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    read_validated(path, |_| Ok(()))
}

/// Reads every row, running `check` on each; failures are reported at the
/// row's line.
pub fn read_validated<T, F>(path: &Path, check: F) -> Result<Vec<T>>
where
    T: DeserializeOwned,
    F: Fn(&T) -> Result<()>,
{
    let mut out = Vec::new();
    for item in JsonlReader::<T>::open(path)? {
        let (line, value) = item?;
        check(&value).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

pub fn write_line<W: Write, T: Serialize>(w: &mut W, value: &T) -> io::Result<()> {
    serde_json::to_writer(&mut *w, value)?;
    w.write_all(b"\n")
}

pub fn write_all<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        write_line(&mut w, row).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
