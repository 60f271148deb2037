use std::path::Path;

use crate::error::{Error, Result};
use crate::flowmap::FlowMap;

/// Little-endian float tag that opens every `.flo` file.
pub const FLO_MAGIC: f32 = 202021.25;

/// Guard against absurd headers before allocating.
const MAX_SIDE: i32 = 1 << 15;

/// Dense two-channel flow field, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub u: Vec<f32>,
    pub v: Vec<f32>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, u: Vec<f32>, v: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "flow field must be at least 1x1, got {width}x{height}"
            )));
        }
        if u.len() != width * height || v.len() != width * height {
            return Err(Error::Dimension(format!(
                "flow field {width}x{height} needs {} values per channel, got {} and {}",
                width * height,
                u.len(),
                v.len()
            )));
        }
        Ok(Self {
            width,
            height,
            u,
            v,
        })
    }

    /// Per-pixel magnitude `sqrt(u^2 + v^2)`.
    pub fn magnitude(&self) -> Result<FlowMap> {
        FlowMap::from_uv(self.height, self.width, &self.u, &self.v)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 8 * self.u.len());
        out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
        out.extend_from_slice(&(self.width as i32).to_le_bytes());
        out.extend_from_slice(&(self.height as i32).to_le_bytes());
        for (u, v) in self.u.iter().zip(&self.v) {
            out.extend_from_slice(&u.to_le_bytes());
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses a `.flo` byte stream; `what` names the source in error messages.
    pub fn from_bytes(bytes: &[u8], what: &Path) -> Result<Self> {
        let word = |at: usize| -> Result<[u8; 4]> {
            bytes
                .get(at..at + 4)
                .map(|b| [b[0], b[1], b[2], b[3]])
                .ok_or_else(|| Error::format(what, format!("truncated at byte {at}")))
        };
        let magic = f32::from_le_bytes(word(0)?);
        if magic != FLO_MAGIC {
            return Err(Error::format(
                what,
                format!("bad magic {magic}, expected {FLO_MAGIC}"),
            ));
        }
        let width = i32::from_le_bytes(word(4)?);
        let height = i32::from_le_bytes(word(8)?);
        if !(1..=MAX_SIDE).contains(&width) || !(1..=MAX_SIDE).contains(&height) {
            return Err(Error::format(
                what,
                format!("implausible size {width}x{height}"),
            ));
        }
        let (width, height) = (width as usize, height as usize);
        let n = width * height;
        let expected = 12 + 8 * n;
        if bytes.len() != expected {
            return Err(Error::format(
                what,
                format!(
                    "expected {expected} bytes for {width}x{height}, found {}",
                    bytes.len()
                ),
            ));
        }
        let mut u = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        for px in bytes[12..].chunks_exact(8) {
            u.push(f32::from_le_bytes([px[0], px[1], px[2], px[3]]));
            v.push(f32::from_le_bytes([px[4], px[5], px[6], px[7]]));
        }
        Self::new(width, height, u, v)
    }
}

pub fn read_flo(path: &Path) -> Result<FlowField> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    FlowField::from_bytes(&bytes, path)
}

pub fn write_flo(path: &Path, field: &FlowField) -> Result<()> {
    super::write_atomic(path, &field.to_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field() -> FlowField {
        FlowField::new(
            3,
            2,
            vec![0.0, 1.5, -2.0, 3.0, f32::MIN_POSITIVE, 1e-30],
            vec![4.0, -0.0, 0.1, 7.0, 8.0, 9.0],
        )
        .unwrap()
    }

    #[test]
    fn bytes_round_trip_exactly() {
        let f = field();
        let back = FlowField::from_bytes(&f.to_bytes(), Path::new("mem")).unwrap();
        assert_eq!(back.width, 3);
        assert_eq!(back.height, 2);
        let bits = |xs: &[f32]| xs.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.u), bits(&f.u));
        assert_eq!(bits(&back.v), bits(&f.v));
    }

    #[test]
    fn header_layout() {
        let b = field().to_bytes();
        assert_eq!(b.len(), 12 + 8 * 6);
        assert_eq!(&b[0..4], &202021.25f32.to_le_bytes());
        assert_eq!(&b[4..8], &3i32.to_le_bytes());
        assert_eq!(&b[8..12], &2i32.to_le_bytes());
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let mut b = field().to_bytes();
        let p = Path::new("x.flo");
        assert!(FlowField::from_bytes(&b[..b.len() - 1], p).is_err());
        assert!(FlowField::from_bytes(&b[..6], p).is_err());
        assert!(FlowField::from_bytes(&[], p).is_err());
        b[0] ^= 0xff;
        let err = FlowField::from_bytes(&b, p).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");
    }

    #[test]
    fn magnitude_is_row_major() {
        let f = FlowField::new(2, 1, vec![3.0, 0.0], vec![4.0, 1.0]).unwrap();
        let m = f.magnitude().unwrap();
        assert_eq!((m.rows(), m.cols()), (1, 2));
        assert_eq!(m.values(), &[5.0, 1.0]);
    }
}
