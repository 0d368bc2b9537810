//! Binary parameter container.
//!
//! Layout (little-endian): 8-byte magic `HCKPT\0\0\0`, `u32` format version,
//! `u64` manifest length and UTF-8 JSON manifest, `u32` tensor count, then per
//! tensor: `u32` name length, name bytes, `u32` rank, `u64` dims, `f64` data.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{AutodiffError, ParamStore, Tensor};

const MAGIC: &[u8; 8] = b"HCKPT\0\0\0";
pub const CHECKPOINT_VERSION: u32 = 1;

fn io(path: &Path) -> impl Fn(std::io::Error) -> AutodiffError + '_ {
    move |source| AutodiffError::Io { path: path.to_path_buf(), source }
}

pub fn write_checkpoint(
    path: impl AsRef<Path>,
    store: &ParamStore,
    manifest: &serde_json::Value,
) -> Result<(), AutodiffError> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(io(path))?);
    let json = serde_json::to_vec(manifest).map_err(|e| AutodiffError::Format(e.to_string()))?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    buf.extend_from_slice(&(store.len() as u32).to_le_bytes());
    w.write_all(&buf).map_err(io(path))?;
    for id in store.ids() {
        let t = store.get(id);
        let name = store.name(id).as_bytes();
        let mut buf = Vec::with_capacity(16 + name.len() + 8 * t.len());
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name);
        buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf).map_err(io(path))?;
    }
    w.flush().map_err(io(path))
}

struct Reader<'a, R: Read> {
    r: R,
    path: &'a Path,
}

impl<R: Read> Reader<'_, R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>, AutodiffError> {
        let mut b = vec![0; n];
        self.r.read_exact(&mut b).map_err(io(self.path))?;
        Ok(b)
    }

    fn u32(&mut self) -> Result<u32, AutodiffError> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, AutodiffError> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
}

/// Reads a checkpoint into a fresh store (parameters marked dense; use
/// [`ParamStore::load_from`] to copy into a model-built store).
pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<(ParamStore, serde_json::Value), AutodiffError> {
    let path = path.as_ref();
    let mut r = Reader { r: BufReader::new(File::open(path).map_err(io(path))?), path };
    if r.bytes(8)? != MAGIC {
        return Err(AutodiffError::Format(format!("{}: not a checkpoint (bad magic)", path.display())));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(AutodiffError::Format(format!("unsupported checkpoint version {version}")));
    }
    let mlen = r.u64()? as usize;
    let manifest = serde_json::from_slice(&r.bytes(mlen)?).map_err(|e| AutodiffError::Format(e.to_string()))?;
    let count = r.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let nlen = r.u32()? as usize;
        let name = String::from_utf8(r.bytes(nlen)?).map_err(|e| AutodiffError::Format(e.to_string()))?;
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let n: usize = shape.iter().product();
        let raw = r.bytes(8 * n)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        if store.id(&name).is_some() {
            return Err(AutodiffError::Format(format!("duplicate tensor `{name}`")));
        }
        store.add(&name, Tensor::new(shape, data)?);
    }
    Ok((store, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = ParamStore::new();
        s.add_weight("enc.w", 5, 3, &mut rng);
        s.add_embedding("emb", 7, 2, &mut rng);
        s.add("v", Tensor::new(vec![4], vec![1.0, f64::MIN_POSITIVE, -0.0, 1e300]).unwrap());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        let manifest = serde_json::json!({"hidden": 5, "kind": "treelstm"});
        write_checkpoint(&p, &s, &manifest).unwrap();
        let (back, m) = read_checkpoint(&p).unwrap();
        assert_eq!(m, manifest);
        assert_eq!(back.len(), 3);
        for id in s.ids() {
            let b = back.id(s.name(id)).unwrap();
            assert_eq!(back.get(b), s.get(id));
        }
        let mut fresh = s.clone();
        fresh.get_mut(fresh.id("emb").unwrap()).data_mut()[0] = 9.0;
        fresh.load_from(&back).unwrap();
        assert_eq!(fresh.get(fresh.id("emb").unwrap()), s.get(s.id("emb").unwrap()));
    }

    #[test]
    fn rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad");
        std::fs::write(&p, b"not a checkpoint at all").unwrap();
        assert!(matches!(read_checkpoint(&p), Err(AutodiffError::Format(_))));
        assert!(matches!(read_checkpoint(dir.path().join("missing")), Err(AutodiffError::Io { .. })));
    }
}
