//! Little-endian binary helpers shared by the artifact formats.
//!
//! Every artifact starts with a four-byte magic followed by a `u32` version.
//! Readers map a short read to a [`Error::Format`] naming the format so a
//! truncated file is reported as such rather than as a bare I/O error.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

pub(crate) struct BinReader<R> {
    inner: R,
    format: &'static str,
}

impl BinReader<BufReader<File>> {
    pub(crate) fn open(path: &Path, format: &'static str) -> Result<Self> {
        Ok(Self::new(BufReader::new(File::open(path)?), format))
    }
}

impl<R: Read> BinReader<R> {
    pub(crate) fn new(inner: R, format: &'static str) -> Self {
        Self { inner, format }
    }

    fn map(&self, err: std::io::Error) -> Error {
        if err.kind() == ErrorKind::UnexpectedEof {
            Error::format(self.format, "truncated file")
        } else {
            Error::Io(err)
        }
    }

    /// Checks the magic and version and returns the version.
    pub(crate) fn header(&mut self, magic: &[u8; 4]) -> Result<u32> {
        let mut found = [0u8; 4];
        self.inner.read_exact(&mut found).map_err(|e| self.map(e))?;
        if &found != magic {
            return Err(Error::format(
                self.format,
                format!(
                    "expected magic {:?}, found {:?}",
                    String::from_utf8_lossy(magic),
                    String::from_utf8_lossy(&found)
                ),
            ));
        }
        let version = self.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::format(
                self.format,
                format!("unsupported version {version}, expected {FORMAT_VERSION}"),
            ));
        }
        Ok(version)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        self.inner.read_u8().map_err(|e| self.map(e))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        self.inner
            .read_u32::<LittleEndian>()
            .map_err(|e| self.map(e))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        self.inner
            .read_u64::<LittleEndian>()
            .map_err(|e| self.map(e))
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        self.inner
            .read_f32::<LittleEndian>()
            .map_err(|e| self.map(e))
    }

    pub(crate) fn u32_into(&mut self, dst: &mut [u32]) -> Result<()> {
        self.inner
            .read_u32_into::<LittleEndian>(dst)
            .map_err(|e| self.map(e))
    }

    pub(crate) fn f32_into(&mut self, dst: &mut [f32]) -> Result<()> {
        self.inner
            .read_f32_into::<LittleEndian>(dst)
            .map_err(|e| self.map(e))
    }

    pub(crate) fn bytes_into(&mut self, dst: &mut [u8]) -> Result<()> {
        self.inner.read_exact(dst).map_err(|e| self.map(e))
    }

    /// Errors unless the stream is exhausted.
    pub(crate) fn finish(mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe)? {
            0 => Ok(()),
            _ => Err(Error::format(self.format, "trailing bytes after payload")),
        }
    }

    /// Converts a header count to `usize`, rejecting values that cannot be
    /// allocated on this platform.
    pub(crate) fn count(&self, value: u64, what: &str) -> Result<usize> {
        usize::try_from(value)
            .ok()
            .filter(|v| v.checked_mul(4).is_some())
            .ok_or_else(|| Error::format(self.format, format!("{what} {value} overflows")))
    }
}

pub(crate) struct BinWriter<W: Write> {
    inner: W,
}

impl BinWriter<BufWriter<File>> {
    pub(crate) fn create(path: &Path) -> Result<Self> {
        Ok(Self {
            inner: BufWriter::new(File::create(path)?),
        })
    }
}

impl<W: Write> BinWriter<W> {
    pub(crate) fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        self.inner.write_all(magic)?;
        self.u32(FORMAT_VERSION)
    }

    pub(crate) fn u8(&mut self, v: u8) -> Result<()> {
        Ok(self.inner.write_u8(v)?)
    }

    pub(crate) fn u32(&mut self, v: u32) -> Result<()> {
        Ok(self.inner.write_u32::<LittleEndian>(v)?)
    }

    pub(crate) fn u64(&mut self, v: u64) -> Result<()> {
        Ok(self.inner.write_u64::<LittleEndian>(v)?)
    }

    pub(crate) fn f32(&mut self, v: f32) -> Result<()> {
        Ok(self.inner.write_f32::<LittleEndian>(v)?)
    }

    pub(crate) fn u32s(&mut self, vs: &[u32]) -> Result<()> {
        vs.iter().try_for_each(|&v| self.u32(v))
    }

    pub(crate) fn f32s(&mut self, vs: &[f32]) -> Result<()> {
        vs.iter().try_for_each(|&v| self.f32(v))
    }

    pub(crate) fn bytes(&mut self, bytes: &[u8]) -> Result<()> {
        Ok(self.inner.write_all(bytes)?)
    }

    pub(crate) fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}
