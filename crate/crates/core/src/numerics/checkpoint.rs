//! Binary parameter checkpoints.
//!
//! ```text
//! topicfuse-checkpoint 1\n
//! <param count>\n
//! <name>\t<rows>\t<cols>\n      (one line per parameter)
//! <f64 little-endian values, manifest order, row-major>
//! ```

use std::io::{BufRead, BufReader, Read, Write};

use super::{NumericsError, ParamStore};

pub const MAGIC: &str = "topicfuse-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(store: &ParamStore, mut w: W) -> Result<(), NumericsError> {
    writeln!(w, "{MAGIC} {FORMAT_VERSION}")?;
    writeln!(w, "{}", store.len())?;
    for p in store.iter() {
        if p.name.contains(['\t', '\n']) {
            return Err(NumericsError::Checkpoint(format!(
                "bad param name {:?}",
                p.name
            )));
        }
        writeln!(w, "{}\t{}\t{}", p.name, p.value.rows(), p.value.cols())?;
    }
    for p in store.iter() {
        for v in p.value.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn checkpoint_bytes(store: &ParamStore) -> Vec<u8> {
    let mut buf = Vec::new();
    write_checkpoint(store, &mut buf).expect("writing to memory");
    buf
}

/// Loads values into an existing store whose manifest must match exactly.
pub fn read_checkpoint_into<R: Read>(store: &mut ParamStore, r: R) -> Result<(), NumericsError> {
    let mut reader = BufReader::new(r);
    let mut line = String::new();
    let mut next_line = |reader: &mut BufReader<R>| -> Result<String, NumericsError> {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Err(NumericsError::Checkpoint("unexpected end of header".into()));
        }
        Ok(line.trim_end_matches('\n').to_string())
    };
    let header = next_line(&mut reader)?;
    if header != format!("{MAGIC} {FORMAT_VERSION}") {
        return Err(NumericsError::Checkpoint(format!(
            "unrecognised header {header:?}"
        )));
    }
    let count: usize = next_line(&mut reader)?
        .parse()
        .map_err(|_| NumericsError::Checkpoint("bad parameter count".into()))?;
    if count != store.len() {
        return Err(NumericsError::Checkpoint(format!(
            "checkpoint has {count} params, model has {}",
            store.len()
        )));
    }
    let mut manifest = Vec::with_capacity(count);
    for _ in 0..count {
        let l = next_line(&mut reader)?;
        let fields: Vec<&str> = l.split('\t').collect();
        if fields.len() != 3 {
            return Err(NumericsError::Checkpoint(format!(
                "bad manifest line {l:?}"
            )));
        }
        let rows: usize = fields[1]
            .parse()
            .map_err(|_| NumericsError::Checkpoint(format!("bad rows in {l:?}")))?;
        let cols: usize = fields[2]
            .parse()
            .map_err(|_| NumericsError::Checkpoint(format!("bad cols in {l:?}")))?;
        manifest.push((fields[0].to_string(), rows, cols));
    }
    for ((name, rows, cols), p) in manifest.iter().zip(store.iter()) {
        if *name != p.name || (*rows, *cols) != p.value.shape() {
            return Err(NumericsError::Checkpoint(format!(
                "manifest entry {name} {rows}x{cols} does not match {} {:?}",
                p.name,
                p.value.shape()
            )));
        }
    }
    let mut buf = [0u8; 8];
    for p in store.iter_mut() {
        for v in p.value.data_mut() {
            reader.read_exact(&mut buf)?;
            *v = f64::from_le_bytes(buf);
        }
    }
    if reader.read(&mut buf)? != 0 {
        return Err(NumericsError::Checkpoint(
            "trailing bytes after payload".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor2;

    fn sample() -> ParamStore {
        let mut s = ParamStore::new();
        s.add(
            "a.weight",
            Tensor2::from_vec(2, 2, vec![1.0, -2.5, 3.25, 1e-300]).unwrap(),
        );
        s.add("a.bias", Tensor2::row_vector(vec![f64::MIN_POSITIVE, 7.0]));
        s
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let s = sample();
        let bytes = checkpoint_bytes(&s);
        let mut t = sample();
        t.iter_mut().for_each(|p| p.value.fill(0.0));
        read_checkpoint_into(&mut t, bytes.as_slice()).unwrap();
        assert_eq!(checkpoint_bytes(&t), bytes);
        assert_eq!(s, t);
    }

    #[test]
    fn header_layout() {
        let bytes = checkpoint_bytes(&sample());
        let text = String::from_utf8_lossy(&bytes[..50]);
        assert!(text.starts_with("topicfuse-checkpoint 1\n2\na.weight\t2\t2\na.bias\t1\t2\n"));
        assert_eq!(
            bytes.len(),
            "topicfuse-checkpoint 1\n2\na.weight\t2\t2\na.bias\t1\t2\n".len() + 6 * 8
        );
    }

    #[test]
    fn mismatched_manifest_is_rejected() {
        let bytes = checkpoint_bytes(&sample());
        let mut other = ParamStore::new();
        other.add("a.weight", Tensor2::zeros(2, 2));
        other.add("a.bias", Tensor2::zeros(1, 3));
        assert!(read_checkpoint_into(&mut other, bytes.as_slice()).is_err());
    }
}
