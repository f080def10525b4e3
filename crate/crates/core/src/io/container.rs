//! `CRAT` tensor container: a flat list of named, typed n-d arrays.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "CRAT" | u32 version (1) | u32 count
//! per tensor: u16 name_len | name (UTF-8) | u8 dtype | u8 ndim | u32 dims[ndim] | payload
//! ```
//!
//! dtype 0 = f32, 1 = i32, 2 = u8; payload is row-major.

use std::collections::{BTreeSet, HashMap};
use std::sync::Mutex;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CRAT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    I32(Vec<i32>),
    U8(Vec<u8>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::I32(v) => v.len(),
            TensorData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn dtype(&self) -> u8 {
        match self {
            TensorData::F32(_) => 0,
            TensorData::I32(_) => 1,
            TensorData::U8(_) => 2,
        }
    }

    fn type_name(&self) -> &'static str {
        match self {
            TensorData::F32(_) => "f32",
            TensorData::I32(_) => "i32",
            TensorData::U8(_) => "u8",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: TensorData,
}

/// Names looked up through [`Container::get`]; ignored by equality.
#[derive(Debug, Default)]
struct ReadLog(Mutex<BTreeSet<String>>);

impl Clone for ReadLog {
    fn clone(&self) -> Self {
        ReadLog(Mutex::new(self.0.lock().expect("read log").clone()))
    }
}

impl PartialEq for ReadLog {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

/// Ordered set of uniquely named tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Container {
    tensors: Vec<NamedTensor>,
    index: HashMap<String, usize>,
    reads: ReadLog,
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn tensors(&self) -> &[NamedTensor] {
        &self.tensors
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|t| t.name.as_str())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: &[usize], data: TensorData) -> Result<()> {
        let name = name.into();
        if name.len() > u16::MAX as usize {
            return Err(Error::Container(format!("tensor name of {} bytes is too long", name.len())));
        }
        if shape.len() > u8::MAX as usize || shape.iter().any(|&d| d > u32::MAX as usize) {
            return Err(Error::Container(format!("`{}`: unsupported shape {:?}", name, shape)));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Container(format!(
                "`{}`: shape {:?} needs {} elements, got {}",
                name,
                shape,
                n,
                data.len()
            )));
        }
        if self.index.contains_key(&name) {
            return Err(Error::Container(format!("duplicate tensor name `{}`", name)));
        }
        self.index.insert(name.clone(), self.tensors.len());
        self.tensors.push(NamedTensor {
            name,
            shape: shape.to_vec(),
            data,
        });
        Ok(())
    }

    pub fn insert_f32(&mut self, name: impl Into<String>, shape: &[usize], data: Vec<f32>) -> Result<()> {
        self.insert(name, shape, TensorData::F32(data))
    }

    /// Stores `f64` values rounded to `f32`.
    pub fn insert_f64(&mut self, name: impl Into<String>, shape: &[usize], data: &[f64]) -> Result<()> {
        self.insert(name, shape, TensorData::F32(data.iter().map(|&x| x as f32).collect()))
    }

    pub fn insert_i32(&mut self, name: impl Into<String>, shape: &[usize], data: Vec<i32>) -> Result<()> {
        self.insert(name, shape, TensorData::I32(data))
    }

    pub fn insert_u8(&mut self, name: impl Into<String>, shape: &[usize], data: Vec<u8>) -> Result<()> {
        self.insert(name, shape, TensorData::U8(data))
    }

    pub fn insert_text(&mut self, name: impl Into<String>, text: &str) -> Result<()> {
        let bytes = text.as_bytes().to_vec();
        self.insert(name, &[bytes.len()], TensorData::U8(bytes))
    }

    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.reads.0.lock().expect("read log").insert(name.to_string());
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    /// Every name requested through the typed accessors since creation or
    /// the last [`Container::clear_reads`].
    pub fn reads(&self) -> Vec<String> {
        self.reads.0.lock().expect("read log").iter().cloned().collect()
    }

    pub fn clear_reads(&self) {
        self.reads.0.lock().expect("read log").clear();
    }

    /// Copies every tensor of `other` in under `prefix/`.
    pub fn insert_prefixed(&mut self, prefix: &str, other: &Container) -> Result<()> {
        for t in &other.tensors {
            self.insert(format!("{prefix}/{}", t.name), &t.shape, t.data.clone())?;
        }
        Ok(())
    }

    /// The tensors under `prefix/`, with the prefix stripped.
    pub fn sub_container(&self, prefix: &str) -> Result<Container> {
        let head = format!("{prefix}/");
        let mut c = Container::new();
        for t in self.tensors.iter().filter(|t| t.name.starts_with(&head)) {
            self.reads.0.lock().expect("read log").insert(t.name.clone());
            c.insert(&t.name[head.len()..], &t.shape, t.data.clone())?;
        }
        if c.is_empty() {
            return Err(Error::MissingTensor(format!("{prefix}/*")));
        }
        Ok(c)
    }

    fn require(&self, name: &str) -> Result<&NamedTensor> {
        self.get(name).ok_or_else(|| Error::MissingTensor(name.to_string()))
    }

    pub fn f32(&self, name: &str) -> Result<(&[usize], &[f32])> {
        let t = self.require(name)?;
        match &t.data {
            TensorData::F32(v) => Ok((&t.shape, v)),
            other => Err(type_error(name, "f32", other)),
        }
    }

    pub fn i32(&self, name: &str) -> Result<(&[usize], &[i32])> {
        let t = self.require(name)?;
        match &t.data {
            TensorData::I32(v) => Ok((&t.shape, v)),
            other => Err(type_error(name, "i32", other)),
        }
    }

    pub fn u8(&self, name: &str) -> Result<(&[usize], &[u8])> {
        let t = self.require(name)?;
        match &t.data {
            TensorData::U8(v) => Ok((&t.shape, v)),
            other => Err(type_error(name, "u8", other)),
        }
    }

    /// `f32` tensor widened to `f64`, with its shape checked.
    pub fn f64_checked(&self, name: &str, shape: &[usize]) -> Result<Vec<f64>> {
        let (s, d) = self.f32(name)?;
        if s != shape {
            return Err(Error::Container(format!("`{}`: expected shape {:?}, found {:?}", name, shape, s)));
        }
        Ok(d.iter().map(|&x| x as f64).collect())
    }

    pub fn text(&self, name: &str) -> Result<String> {
        let (_, bytes) = self.u8(name)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::Container(format!("`{}` is not valid UTF-8", name)))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(t.data.dtype());
            out.push(t.shape.len() as u8);
            for &d in &t.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            match &t.data {
                TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                TensorData::I32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                TensorData::U8(v) => out.extend_from_slice(v),
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(Error::Container("bad magic".into()));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::Container(format!("unsupported version {}", version)));
        }
        let count = r.u32("tensor count")?;
        let mut c = Container::new();
        for i in 0..count {
            let len = u16::from_le_bytes(r.take(2, "name length")?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(r.take(len, "name")?)
                .map_err(|_| Error::Container(format!("tensor {} name is not UTF-8", i)))?
                .to_string();
            let dtype = r.take(1, "dtype")?[0];
            let ndim = r.take(1, "ndim")?[0] as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u32("dims")? as usize);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::Container(format!("`{}`: shape overflow", name)))?;
            let width = match dtype {
                0 | 1 => 4,
                2 => 1,
                d => return Err(Error::Container(format!("`{}`: unknown dtype {}", name, d))),
            };
            let nbytes = n
                .checked_mul(width)
                .ok_or_else(|| Error::Container(format!("`{}`: shape overflow", name)))?;
            let payload = r.take(nbytes, "payload")?;
            let data = match dtype {
                0 => TensorData::F32(
                    payload.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect(),
                ),
                1 => TensorData::I32(
                    payload.chunks_exact(4).map(|b| i32::from_le_bytes(b.try_into().unwrap())).collect(),
                ),
                _ => TensorData::U8(payload.to_vec()),
            };
            c.insert(name, &shape, data)?;
        }
        if r.pos != bytes.len() {
            return Err(Error::Container(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(c)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn type_error(name: &str, want: &str, got: &TensorData) -> Error {
    Error::Container(format!("`{}`: expected {}, found {}", name, want, got.type_name()))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Container(format!("truncated file while reading {}", what)));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_roundtrip() {
        let c = Container::new();
        let bytes = c.to_bytes();
        assert_eq!(bytes.len(), 12);
        assert_eq!(Container::from_bytes(&bytes).unwrap(), c);
    }

    #[test]
    fn header_layout() {
        let mut c = Container::new();
        c.insert_i32("ab", &[2], vec![1, -1]).unwrap();
        let b = c.to_bytes();
        assert_eq!(&b[..4], b"CRAT");
        assert_eq!(&b[4..12], &[1, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(&b[12..14], &[2, 0]);
        assert_eq!(&b[14..16], b"ab");
        assert_eq!(b[16], 1);
        assert_eq!(b[17], 1);
        assert_eq!(&b[18..22], &[2, 0, 0, 0]);
        assert_eq!(&b[22..], &[1, 0, 0, 0, 0xff, 0xff, 0xff, 0xff]);
    }

    #[test]
    fn bad_magic() {
        let mut b = Container::new().to_bytes();
        b[0] = b'X';
        match Container::from_bytes(&b) {
            Err(Error::Container(m)) => assert_eq!(m, "bad magic"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn truncated_and_unknown_dtype() {
        let mut c = Container::new();
        c.insert_f32("x", &[3], vec![1.0, 2.0, 3.0]).unwrap();
        let b = c.to_bytes();
        let err = Container::from_bytes(&b[..b.len() - 1]).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
        let mut bad = b.clone();
        bad[12 + 2 + 1] = 9;
        assert!(Container::from_bytes(&bad).unwrap_err().to_string().contains("unknown dtype"));
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut c = Container::new();
        c.insert_u8("a", &[0], vec![]).unwrap();
        assert!(c.insert_u8("a", &[0], vec![]).is_err());
        // also when decoding a hand-built file with two equal names
        let mut one = Container::new();
        one.insert_u8("a", &[1], vec![7]).unwrap();
        let b = one.to_bytes();
        let mut dup = b[..12].to_vec();
        dup[8] = 2;
        dup.extend_from_slice(&b[12..]);
        dup.extend_from_slice(&b[12..]);
        assert!(Container::from_bytes(&dup).unwrap_err().to_string().contains("duplicate"));
    }

    #[test]
    fn typed_access() {
        let mut c = Container::new();
        c.insert_text("meta", "a=1\n").unwrap();
        assert_eq!(c.text("meta").unwrap(), "a=1\n");
        assert!(c.f32("meta").is_err());
        assert!(matches!(c.f32("nope"), Err(Error::MissingTensor(_))));
    }
}
