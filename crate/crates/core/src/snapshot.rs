//! Binary snapshot format for endomorphism-valued fields.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//!   magic     8 bytes  "NHYMFLD\0"
//!   version   u32
//!   n         u32      complex dimension; 2n real axes follow
//!   sizes     u32 * 2n
//!   periods   f64 * 2n
//!   rank      u32
//!   count     u32      number of components
//!   component repeated `count` times:
//!     name_len u32, name bytes (utf-8),
//!     nodes * rank * rank (re, im) f64 pairs in row-major node order
//! ```
//!
//! Decoding is fully bounds-checked and never trusts length fields: every
//! size is validated against hard caps and the remaining buffer before any
//! allocation.

use num_complex::Complex64;

use crate::error::NhymError;
use crate::fields::{EndField, MetricField};
use crate::geometry::TorusGeometry;
use crate::Result;

const MAGIC: &[u8; 8] = b"NHYMFLD\0";
const VERSION: u32 = 1;

/// Hard caps keep crafted headers from requesting absurd allocations.
const MAX_N: u32 = 8;
const MAX_AXIS_SIZE: u32 = 1 << 16;
const MAX_RANK: u32 = 64;
const MAX_COMPONENTS: u32 = 64;
const MAX_NAME_LEN: u32 = 128;
const MAX_TOTAL_VALUES: u64 = 1 << 28;

/// One named field block.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotComponent {
    pub name: String,
    /// `nodes * rank * rank` entries, node-major.
    pub data: Vec<Complex64>,
}

/// A self-describing container for endomorphism fields on a torus grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub n: usize,
    pub sizes: Vec<usize>,
    pub periods: Vec<f64>,
    pub rank: usize,
    pub components: Vec<SnapshotComponent>,
}

impl Snapshot {
    pub fn new(geo: &TorusGeometry, rank: usize) -> Self {
        Self {
            n: geo.n(),
            sizes: geo.sizes().to_vec(),
            periods: geo.periods().to_vec(),
            rank,
            components: Vec::new(),
        }
    }

    pub fn nodes(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn push_end_field(&mut self, name: &str, field: &EndField) -> Result<()> {
        if field.rank() != self.rank || field.nodes() != self.nodes() {
            return Err(NhymError::Shape(format!(
                "component {name} has rank {} on {} nodes, snapshot wants rank {} on {}",
                field.rank(),
                field.nodes(),
                self.rank,
                self.nodes()
            )));
        }
        self.components
            .push(SnapshotComponent { name: name.to_string(), data: field.data().to_vec() });
        Ok(())
    }

    pub fn push_metric(&mut self, name: &str, h: &MetricField) -> Result<()> {
        self.push_end_field(name, &h.end)
    }

    pub fn component(&self, name: &str) -> Option<&SnapshotComponent> {
        self.components.iter().find(|c| c.name == name)
    }

    /// Rebuild a field from a stored component.
    pub fn end_field(&self, name: &str) -> Result<EndField> {
        let comp = self
            .component(name)
            .ok_or_else(|| NhymError::Snapshot(format!("no component named {name}")))?;
        EndField::from_data(self.nodes(), self.rank, comp.data.clone())
    }

    /// Check that the snapshot grid matches a live geometry.
    pub fn matches_geometry(&self, geo: &TorusGeometry) -> bool {
        self.n == geo.n()
            && self.sizes == geo.sizes()
            && self
                .periods
                .iter()
                .zip(geo.periods())
                .all(|(a, b)| (a - b).abs() <= 1e-12 * b.abs())
    }

    pub fn encode(&self) -> Vec<u8> {
        let nodes = self.nodes();
        let block = nodes * self.rank * self.rank;
        let mut out = Vec::with_capacity(64 + self.components.len() * (16 + block * 16));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n as u32).to_le_bytes());
        for &s in &self.sizes {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
        for &p in &self.periods {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out.extend_from_slice(&(self.rank as u32).to_le_bytes());
        out.extend_from_slice(&(self.components.len() as u32).to_le_bytes());
        for comp in &self.components {
            let name = comp.name.as_bytes();
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name);
            debug_assert_eq!(comp.data.len(), block);
            for v in &comp.data {
                out.extend_from_slice(&v.re.to_le_bytes());
                out.extend_from_slice(&v.im.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(8)?;
        if magic != MAGIC {
            return Err(NhymError::Snapshot("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(NhymError::Snapshot(format!("unsupported version {version}")));
        }
        let n = r.u32()?;
        if n == 0 || n > MAX_N {
            return Err(NhymError::Snapshot(format!("complex dimension {n} out of range")));
        }
        let axes = 2 * n as usize;
        let mut sizes = Vec::with_capacity(axes);
        let mut nodes: u64 = 1;
        for _ in 0..axes {
            let s = r.u32()?;
            if s < 2 || s > MAX_AXIS_SIZE {
                return Err(NhymError::Snapshot(format!("axis size {s} out of range")));
            }
            nodes = nodes.saturating_mul(s as u64);
            sizes.push(s as usize);
        }
        let mut periods = Vec::with_capacity(axes);
        for _ in 0..axes {
            let p = r.f64()?;
            if !p.is_finite() || p <= 0.0 {
                return Err(NhymError::Snapshot(format!("period {p} out of range")));
            }
            periods.push(p);
        }
        let rank = r.u32()?;
        if rank == 0 || rank > MAX_RANK {
            return Err(NhymError::Snapshot(format!("rank {rank} out of range")));
        }
        let count = r.u32()?;
        if count > MAX_COMPONENTS {
            return Err(NhymError::Snapshot(format!("component count {count} out of range")));
        }
        let block = nodes.saturating_mul((rank as u64) * (rank as u64));
        if block.saturating_mul(count as u64) > MAX_TOTAL_VALUES {
            return Err(NhymError::Snapshot("snapshot exceeds the size cap".into()));
        }
        let mut components = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let name_len = r.u32()?;
            if name_len > MAX_NAME_LEN {
                return Err(NhymError::Snapshot(format!("name length {name_len} out of range")));
            }
            let raw = r.take(name_len as usize)?;
            let name = std::str::from_utf8(raw)
                .map_err(|_| NhymError::Snapshot("component name is not utf-8".into()))?
                .to_string();
            // block fits the buffer or `take` fails before allocating
            let payload = r.take((block as usize).saturating_mul(16))?;
            let mut data = Vec::with_capacity(block as usize);
            for chunk in payload.chunks_exact(16) {
                let re = f64::from_le_bytes(chunk[0..8].try_into().expect("8-byte chunk"));
                let im = f64::from_le_bytes(chunk[8..16].try_into().expect("8-byte chunk"));
                data.push(Complex64::new(re, im));
            }
            components.push(SnapshotComponent { name, data });
        }
        if r.pos != bytes.len() {
            return Err(NhymError::Snapshot(format!(
                "{} trailing bytes after the last component",
                bytes.len() - r.pos
            )));
        }
        Ok(Self { n: n as usize, sizes, periods, rank: rank as usize, components })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| NhymError::Snapshot("truncated input".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4-byte slice")))
    }

    fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8-byte slice")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::MetricField;

    fn sample() -> Snapshot {
        let geo = TorusGeometry::square(1, 4, 1.0).unwrap();
        let mut snap = Snapshot::new(&geo, 2);
        let mut field = EndField::zeros(geo.nodes(), 2);
        for node in 0..geo.nodes() {
            let m = field.node_mut(node);
            m[0] = Complex64::new(1.0 + node as f64, 0.0);
            m[1] = Complex64::new(0.25, -0.5);
            m[2] = Complex64::new(0.25, 0.5);
            m[3] = Complex64::new(2.0, 0.0);
        }
        snap.push_end_field("metric", &field).unwrap();
        snap.push_end_field("driver", &EndField::identity(geo.nodes(), 2)).unwrap();
        snap
    }

    #[test]
    fn round_trip_preserves_everything() {
        let snap = sample();
        let bytes = snap.encode();
        let back = Snapshot::decode(&bytes).unwrap();
        assert_eq!(back, snap);
        assert_eq!(back.encode(), bytes);
    }

    #[test]
    fn truncation_at_every_length_is_rejected_without_panic() {
        let bytes = sample().encode();
        for len in 0..bytes.len() {
            assert!(Snapshot::decode(&bytes[..len]).is_err(), "decoded a prefix of {len}");
        }
    }

    #[test]
    fn trailing_garbage_is_rejected() {
        let mut bytes = sample().encode();
        bytes.push(0);
        assert!(Snapshot::decode(&bytes).is_err());
    }

    #[test]
    fn oversized_headers_are_rejected_cheaply() {
        let mut bytes = sample().encode();
        // blow up the component count field: magic(8) + version(4) + n(4)
        // + sizes(8) + periods(16) + rank(4) = 44
        bytes[44..48].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(Snapshot::decode(&bytes).is_err());
    }

    #[test]
    fn metric_survives_a_disk_round_trip() {
        let geo = TorusGeometry::square(1, 4, 1.0).unwrap();
        let u: Vec<f64> = (0..geo.nodes()).map(|k| 0.1 * (k as f64).sin()).collect();
        let h = MetricField::identity(geo.nodes(), 1).conformal_scale(&u);
        let mut snap = Snapshot::new(&geo, 1);
        snap.push_metric("h", &h).unwrap();
        let back = Snapshot::decode(&snap.encode()).unwrap();
        assert!(back.matches_geometry(&geo));
        let field = back.end_field("h").unwrap();
        for node in 0..geo.nodes() {
            assert_eq!(field.node(node)[0], h.end.node(node)[0]);
        }
    }

    #[test]
    fn shape_mismatch_is_rejected_on_push() {
        let geo = TorusGeometry::square(1, 4, 1.0).unwrap();
        let mut snap = Snapshot::new(&geo, 2);
        let wrong = EndField::identity(geo.nodes(), 3);
        assert!(snap.push_end_field("bad", &wrong).is_err());
    }
}
