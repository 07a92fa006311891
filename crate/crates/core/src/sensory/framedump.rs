//! Raw frame-dump file format.
//!
//! Layout: magic `MMFR`, version u32, height u32, width u32, channels u32,
//! frame_count u64, then `frame_count` records of (timestamp_ms u64,
//! row-major pixel bytes). All integers little-endian.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::sensory::Frame;

pub const MAGIC: &[u8; 4] = b"MMFR";
pub const VERSION: u32 = 1;

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::Parse(format!("frame dump truncated at {what}: {e}")))
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read, what: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, what)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_frame_dump(path: &Path) -> Result<Vec<Frame>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io_at(path, e))?;
    let mut r = std::io::BufReader::new(file);

    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::Parse(format!(
            "{}: bad magic {magic:?}, expected \"MMFR\"",
            path.display()
        )));
    }
    let version = read_u32(&mut r, "version")?;
    if version != VERSION {
        return Err(Error::Parse(format!(
            "{}: unsupported frame dump version {version}",
            path.display()
        )));
    }
    let height = read_u32(&mut r, "height")? as usize;
    let width = read_u32(&mut r, "width")? as usize;
    let channels = read_u32(&mut r, "channels")? as usize;
    let count = read_u64(&mut r, "frame_count")?;
    let frame_bytes = height * width * channels;
    if frame_bytes == 0 {
        return Err(Error::Parse(format!(
            "{}: zero frame dimensions",
            path.display()
        )));
    }

    let mut frames = Vec::with_capacity(count as usize);
    let mut last_ts: Option<u64> = None;
    for i in 0..count {
        let ts = read_u64(&mut r, &format!("frame {i} timestamp"))?;
        if let Some(prev) = last_ts {
            if ts <= prev {
                return Err(Error::Parse(format!(
                    "{}: timestamps must be strictly increasing at frame {i}",
                    path.display()
                )));
            }
        }
        last_ts = Some(ts);
        let mut pixels = vec![0u8; frame_bytes];
        read_exact(&mut r, &mut pixels, &format!("frame {i} pixels"))?;
        frames.push(Frame::new(i as usize, ts, height, width, channels, pixels)?);
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(Error::Io)? != 0 {
        return Err(Error::Parse(format!(
            "{}: trailing bytes after {count} frames",
            path.display()
        )));
    }
    Ok(frames)
}

pub fn write_frame_dump(path: &Path, frames: &[Frame]) -> Result<()> {
    if frames.is_empty() {
        return Err(Error::Shape("cannot write an empty frame dump".to_string()));
    }
    let f0 = &frames[0];
    let file = std::fs::File::create(path).map_err(|e| Error::io_at(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(f0.height as u32).to_le_bytes())?;
    w.write_all(&(f0.width as u32).to_le_bytes())?;
    w.write_all(&(f0.channels as u32).to_le_bytes())?;
    w.write_all(&(frames.len() as u64).to_le_bytes())?;
    for frame in frames {
        w.write_all(&frame.timestamp_ms.to_le_bytes())?;
        w.write_all(&frame.pixels)?;
    }
    w.flush()?;
    Ok(())
}
