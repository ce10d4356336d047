//! Params file: a text header, one shape line per tensor, then the values as
//! little-endian `f32`.
//!
//! ```text
//! HEAD v1 <d> <h> <k> <pooled|tokens> <max_len>
//! forward.w_input <rows> <cols>
//! ...
//! DATA <count>
//! <count * 4 bytes>
//! ```

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{HeadDims, HeadError, HeadParams, InputMode, TENSOR_NAMES};

/// Parameters together with the input settings they were trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedHead {
    pub params: HeadParams,
    pub input: InputMode,
    pub max_len: usize,
}

fn shapes(dims: HeadDims) -> [(usize, usize); 8] {
    let (d, h, k) = (dims.input, dims.hidden, dims.classes);
    let lstm = [(d, 4 * h), (h, 4 * h), (1, 4 * h)];
    [lstm[0], lstm[1], lstm[2], lstm[0], lstm[1], lstm[2], (2 * h, k), (1, k)]
}

pub fn write_params<W: Write>(w: &mut W, head: &SavedHead) -> io::Result<()> {
    let dims = head.params.dims();
    writeln!(w, "HEAD v1 {} {} {} {} {}", dims.input, dims.hidden, dims.classes, head.input, head.max_len)?;
    for (name, (rows, cols)) in TENSOR_NAMES.iter().zip(shapes(dims)) {
        writeln!(w, "{name} {rows} {cols}")?;
    }
    let flat = head.params.to_flat();
    writeln!(w, "DATA {}", flat.len())?;
    for x in flat {
        w.write_all(&(x as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn save_params(path: &Path, head: &SavedHead) -> Result<(), HeadError> {
    let io_err = |source| HeadError::Io { path: path.display().to_string(), source };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    write_params(&mut w, head).map_err(io_err)?;
    w.flush().map_err(io_err)
}

fn next_line<R: BufRead>(r: &mut R) -> Result<String, HeadError> {
    let mut line = String::new();
    let n = r.read_line(&mut line).map_err(|e| HeadError::Format(e.to_string()))?;
    if n == 0 {
        return Err(HeadError::Format("unexpected end of file".into()));
    }
    Ok(line.trim_end_matches(['\n', '\r']).to_string())
}

fn number(field: &str, what: &str) -> Result<usize, HeadError> {
    field.parse().map_err(|_| HeadError::Format(format!("bad {what} {field:?}")))
}

pub fn read_params<R: BufRead>(r: &mut R) -> Result<SavedHead, HeadError> {
    let header = next_line(r)?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 7 || fields[0] != "HEAD" {
        return Err(HeadError::Format(format!("bad header {header:?}")));
    }
    if fields[1] != "v1" {
        return Err(HeadError::Format(format!("unsupported version {}", fields[1])));
    }
    let dims = HeadDims {
        input: number(fields[2], "input dimension")?,
        hidden: number(fields[3], "hidden size")?,
        classes: number(fields[4], "class count")?,
    };
    if dims.input == 0 || dims.hidden == 0 || dims.classes == 0 {
        return Err(HeadError::Format("zero dimension in header".into()));
    }
    let input: InputMode = fields[5].parse().map_err(|_| HeadError::Format(format!("bad input mode {}", fields[5])))?;
    let max_len = number(fields[6], "max length")?;
    for (name, (rows, cols)) in TENSOR_NAMES.iter().zip(shapes(dims)) {
        let line = next_line(r)?;
        if line != format!("{name} {rows} {cols}") {
            return Err(HeadError::Format(format!("expected shape of {name} as {rows}x{cols}, got {line:?}")));
        }
    }
    let mut params = HeadParams::zeros(dims);
    let count = params.num_params();
    if next_line(r)? != format!("DATA {count}") {
        return Err(HeadError::Format(format!("expected DATA {count}")));
    }
    let mut bytes = vec![0u8; count * 4];
    r.read_exact(&mut bytes).map_err(|e| HeadError::Format(format!("truncated data: {e}")))?;
    if r.read(&mut [0u8; 1]).map_err(|e| HeadError::Format(e.to_string()))? != 0 {
        return Err(HeadError::Format("trailing bytes after data".into()));
    }
    let flat: Vec<f64> = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
    if flat.iter().any(|x| !x.is_finite()) {
        return Err(HeadError::Format("non-finite parameter".into()));
    }
    params.set_flat(&flat)?;
    Ok(SavedHead { params, input, max_len })
}

pub fn load_params(path: &Path) -> Result<SavedHead, HeadError> {
    let file = File::open(path).map_err(|source| HeadError::Io { path: path.display().to_string(), source })?;
    read_params(&mut BufReader::new(file))
}
