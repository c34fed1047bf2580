//! The `DPNQ` compressed-model container.
//!
//! Byte layout (all integers little-endian, all bit streams LSB-first):
//!
//! ```text
//! magic "DPNQ" | version u16 | tensor_count u32
//! per tensor:
//!   name_len u16 | name utf-8
//!   rank u8 | dims u32 * rank
//!   mode u8            0 per-row, 1 per-filter, 2 whole-tensor, 3 dense-raw
//!   m u32              group count (0 for dense-raw)
//!   k u16              requested clusters (0 for dense-raw; else 2..=256)
//!   coding u8          0 fixed-width, 1 huffman (0 for dense-raw)
//!   mask_flag u8       1 if a prune mask follows
//!   [mask_cols u32 | ceil(mask_cols/8) bytes, bit c = column c kept]
//!   codebooks          m * k f32 (absent for dense-raw)
//!   payload_len u64 | payload
//! ```
//!
//! Codebooks occupy exactly `k` entries per group on disk; a collapsed
//! codebook (fewer than `k` distinct centers) is padded by repeating its
//! last entry, which deserialization strips again — in-memory codebooks are
//! strictly ascending, so trailing repeats are unambiguous.
//!
//! Payloads: fixed-width coding packs all indices of the tensor at
//! `ceil(log2 k)` bits each; huffman coding stores `symbol_count u16`,
//! `symbol_count` code lengths (u8), then the bitstream. Dense-raw tensors
//! (e.g. biases excluded from quantization) store their elements as f32.

use std::fs;
use std::path::Path;

use super::bitpack::{pack_indices, packed_len, unpack_indices};
use super::huffman::{huffman_decode, huffman_encode, HuffmanTable};
use super::prune::PruneMask;
use super::FormatError;
use crate::quant::{
    index_bit_width, GroupingMode, GroupingScheme, QuantizedTensor, Tensor, TensorMeta,
};

pub const DPNQ_MAGIC: &[u8; 4] = b"DPNQ";
pub const DPNQ_VERSION: u16 = 1;

/// How a tensor's index payload is entropy-coded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coding {
    FixedWidth,
    Huffman,
}

/// One quantized tensor plus its storage options.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedRecord {
    pub tensor: QuantizedTensor,
    pub coding: Coding,
    pub prune_mask: Option<PruneMask>,
}

/// A tensor record in the container: quantized, or passed through dense
/// (used for tensors excluded from quantization, biases by default).
#[derive(Debug, Clone, PartialEq)]
pub enum ModelTensor {
    Quantized(QuantizedRecord),
    Dense { meta: TensorMeta, data: Tensor },
}

impl ModelTensor {
    pub fn meta(&self) -> &TensorMeta {
        match self {
            ModelTensor::Quantized(record) => &record.tensor.meta,
            ModelTensor::Dense { meta, .. } => meta,
        }
    }
}

/// An ordered collection of tensor records, the in-memory image of a
/// `.dpnq` file. Serialization and deserialization are exact inverses.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CompressedModel {
    pub tensors: Vec<ModelTensor>,
}

impl CompressedModel {
    pub fn format_version(&self) -> u16 {
        DPNQ_VERSION
    }
}

fn mode_byte(mode: GroupingMode) -> u8 {
    match mode {
        GroupingMode::PerRow => 0,
        GroupingMode::PerFilter => 1,
        GroupingMode::WholeTensor => 2,
    }
}

const MODE_DENSE: u8 = 3;

fn coding_byte(coding: Coding) -> u8 {
    match coding {
        Coding::FixedWidth => 0,
        Coding::Huffman => 1,
    }
}

fn push_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn serialize_header(
    out: &mut Vec<u8>,
    meta: &TensorMeta,
    mode: u8,
    m: u32,
    k: u16,
    coding: u8,
    mask: Option<&PruneMask>,
) -> Result<(), FormatError> {
    let name = meta.name.as_bytes();
    if name.len() > u16::MAX as usize {
        return Err(FormatError::Malformed(format!("tensor name of {} bytes", name.len())));
    }
    if meta.shape.len() > u8::MAX as usize {
        return Err(FormatError::Malformed(format!("rank {} too large", meta.shape.len())));
    }
    push_u16(out, name.len() as u16);
    out.extend_from_slice(name);
    out.push(meta.shape.len() as u8);
    for &dim in &meta.shape {
        if dim > u32::MAX as usize {
            return Err(FormatError::Malformed(format!("dimension {dim} too large")));
        }
        push_u32(out, dim as u32);
    }
    out.push(mode);
    push_u32(out, m);
    push_u16(out, k);
    out.push(coding);
    match mask {
        None => out.push(0),
        Some(mask) => {
            out.push(1);
            push_u32(out, mask.kept.len() as u32);
            let bits: Vec<u32> = mask.kept.iter().map(|&kept| kept as u32).collect();
            out.extend_from_slice(&pack_indices(&bits, 1)?);
        }
    }
    Ok(())
}

fn serialize_quantized(out: &mut Vec<u8>, record: &QuantizedRecord) -> Result<(), FormatError> {
    let qt = &record.tensor;
    qt.validate()?;
    if !(2..=256).contains(&qt.k) {
        return Err(FormatError::UnsupportedK { k: qt.k });
    }
    serialize_header(
        out,
        &qt.meta,
        mode_byte(qt.scheme.mode),
        qt.scheme.group_count() as u32,
        qt.k as u16,
        coding_byte(record.coding),
        record.prune_mask.as_ref(),
    )?;
    // Codebooks, padded to exactly k entries each by repeating the last one.
    for codebook in &qt.codebooks {
        for &center in codebook {
            out.extend_from_slice(&center.to_le_bytes());
        }
        let last = *codebook.last().expect("validated non-empty");
        for _ in codebook.len()..qt.k {
            out.extend_from_slice(&last.to_le_bytes());
        }
    }
    let payload = match record.coding {
        Coding::FixedWidth => {
            let bits = index_bit_width(qt.k) as u8;
            pack_indices(&qt.indices, bits)?
        }
        Coding::Huffman => {
            let (table, stream) = huffman_encode(&qt.indices)?;
            if table.symbol_count() > u16::MAX as usize {
                return Err(FormatError::Malformed("huffman alphabet too large".into()));
            }
            let mut payload = Vec::with_capacity(2 + table.symbol_count() + stream.len());
            push_u16(&mut payload, table.symbol_count() as u16);
            payload.extend_from_slice(table.lengths());
            payload.extend_from_slice(&stream);
            payload
        }
    };
    push_u64(out, payload.len() as u64);
    out.extend_from_slice(&payload);
    Ok(())
}

fn serialize_dense(out: &mut Vec<u8>, meta: &TensorMeta, data: &Tensor) -> Result<(), FormatError> {
    if meta.shape != data.shape {
        return Err(FormatError::Malformed(format!(
            "tensor {}: meta shape {:?} != data shape {:?}",
            meta.name, meta.shape, data.shape
        )));
    }
    serialize_header(out, meta, MODE_DENSE, 0, 0, 0, None)?;
    push_u64(out, (data.data.len() * 4) as u64);
    for &v in &data.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

/// Serialize a model to the DPNQ byte layout.
pub fn serialize_model(model: &CompressedModel) -> Result<Vec<u8>, FormatError> {
    let mut out = Vec::new();
    out.extend_from_slice(DPNQ_MAGIC);
    push_u16(&mut out, DPNQ_VERSION);
    if model.tensors.len() > u32::MAX as usize {
        return Err(FormatError::Malformed("too many tensors".into()));
    }
    push_u32(&mut out, model.tensors.len() as u32);
    for tensor in &model.tensors {
        match tensor {
            ModelTensor::Quantized(record) => serialize_quantized(&mut out, record)?,
            ModelTensor::Dense { meta, data } => serialize_dense(&mut out, meta, data)?,
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        if self.offset + n > self.bytes.len() {
            return Err(FormatError::Truncated {
                offset: self.offset,
                needed: self.offset + n - self.bytes.len(),
            });
        }
        let slice = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, FormatError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64, FormatError> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn f32(&mut self) -> Result<f32, FormatError> {
        let b = self.take(4)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

fn deserialize_tensor(reader: &mut Reader) -> Result<ModelTensor, FormatError> {
    let name_len = reader.u16()? as usize;
    let name = std::str::from_utf8(reader.take(name_len)?)
        .map_err(|e| FormatError::Malformed(format!("tensor name is not UTF-8: {e}")))?
        .to_owned();
    let rank = reader.u8()? as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(reader.u32()? as usize);
    }
    let mode = reader.u8()?;
    let m = reader.u32()? as usize;
    let k = reader.u16()? as usize;
    let coding = reader.u8()?;
    let mask_flag = reader.u8()?;
    let prune_mask = match mask_flag {
        0 => None,
        1 => {
            let cols = reader.u32()? as usize;
            let bytes = reader.take(packed_len(cols, 1))?;
            let bits = unpack_indices(bytes, 1, cols)?;
            Some(PruneMask { kept: bits.iter().map(|&b| b == 1).collect() })
        }
        other => {
            return Err(FormatError::Malformed(format!("tensor {name}: bad mask flag {other}")))
        }
    };
    let meta = TensorMeta::new(name, shape);

    if mode == MODE_DENSE {
        let payload_len = reader.u64()? as usize;
        let payload = reader.take(payload_len)?;
        if payload_len != meta.element_count() * 4 {
            return Err(FormatError::Malformed(format!(
                "tensor {}: dense payload of {payload_len} bytes for {} elements",
                meta.name,
                meta.element_count()
            )));
        }
        let data: Vec<f32> = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let tensor = Tensor::new(meta.shape.clone(), data)?;
        return Ok(ModelTensor::Dense { meta, data: tensor });
    }

    let grouping = match mode {
        0 => GroupingMode::PerRow,
        1 => GroupingMode::PerFilter,
        2 => GroupingMode::WholeTensor,
        other => {
            return Err(FormatError::Malformed(format!(
                "tensor {}: unknown grouping mode {other}",
                meta.name
            )))
        }
    };
    let coding = match coding {
        0 => Coding::FixedWidth,
        1 => Coding::Huffman,
        other => {
            return Err(FormatError::Malformed(format!(
                "tensor {}: unknown coding {other}",
                meta.name
            )))
        }
    };
    if !(2..=256).contains(&k) {
        return Err(FormatError::UnsupportedK { k });
    }
    let scheme = GroupingScheme::for_shape(&meta.shape, grouping)?;
    if scheme.group_count() != m {
        return Err(FormatError::Malformed(format!(
            "tensor {}: header claims {m} groups, shape implies {}",
            meta.name,
            scheme.group_count()
        )));
    }

    let mut codebooks = Vec::with_capacity(m);
    for _ in 0..m {
        let mut codebook = Vec::with_capacity(k);
        for _ in 0..k {
            codebook.push(reader.f32()?);
        }
        // Strip the padding: trailing repeats of the last entry.
        while codebook.len() > 1 && codebook[codebook.len() - 1] == codebook[codebook.len() - 2] {
            codebook.pop();
        }
        codebooks.push(codebook);
    }

    let payload_len = reader.u64()? as usize;
    let payload = reader.take(payload_len)?;
    let n = meta.element_count();
    let indices = match coding {
        Coding::FixedWidth => {
            let bits = index_bit_width(k) as u8;
            unpack_indices(payload, bits, n)?
        }
        Coding::Huffman => {
            let mut sub = Reader { bytes: payload, offset: 0 };
            let symbol_count = sub.u16()? as usize;
            let lengths = sub.take(symbol_count)?.to_vec();
            let table = HuffmanTable::from_lengths(lengths)?;
            huffman_decode(&table, &payload[sub.offset..], n)?
        }
    };

    let tensor = QuantizedTensor { meta, scheme, k, codebooks, indices };
    tensor.validate()?;
    Ok(ModelTensor::Quantized(QuantizedRecord { tensor, coding, prune_mask }))
}

/// Parse a DPNQ byte stream back into a model. Exact inverse of
/// [`serialize_model`].
pub fn deserialize_model(bytes: &[u8]) -> Result<CompressedModel, FormatError> {
    let mut reader = Reader { bytes, offset: 0 };
    if reader.take(4)? != DPNQ_MAGIC {
        return Err(FormatError::BadMagic);
    }
    let version = reader.u16()?;
    if version != DPNQ_VERSION {
        return Err(FormatError::UnsupportedVersion { version });
    }
    let count = reader.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        tensors.push(deserialize_tensor(&mut reader)?);
    }
    if reader.offset != bytes.len() {
        return Err(FormatError::Malformed(format!(
            "{} trailing bytes after the last tensor",
            bytes.len() - reader.offset
        )));
    }
    Ok(CompressedModel { tensors })
}

/// Exact byte length [`serialize_model`] will produce, computed from the
/// documented layout without serializing.
pub fn serialized_len(model: &CompressedModel) -> usize {
    let mut len = 4 + 2 + 4;
    for tensor in &model.tensors {
        let meta = tensor.meta();
        len += 2 + meta.name.len() + 1 + 4 * meta.shape.len();
        len += 1 + 4 + 2 + 1 + 1; // mode, m, k, coding, mask flag
        match tensor {
            ModelTensor::Quantized(record) => {
                if let Some(mask) = &record.prune_mask {
                    len += 4 + packed_len(mask.kept.len(), 1);
                }
                let qt = &record.tensor;
                len += 4 * qt.scheme.group_count() * qt.k;
                len += 8;
                len += match record.coding {
                    Coding::FixedWidth => {
                        packed_len(qt.indices.len(), index_bit_width(qt.k) as u8)
                    }
                    Coding::Huffman => {
                        let (table, stream) =
                            huffman_encode(&qt.indices).expect("sizing a valid tensor");
                        2 + table.symbol_count() + stream.len()
                    }
                };
            }
            ModelTensor::Dense { data, .. } => {
                len += 8 + 4 * data.data.len();
            }
        }
    }
    len
}

/// Write a model to disk as a `.dpnq` file.
pub fn write_model(path: &Path, model: &CompressedModel) -> Result<(), FormatError> {
    Ok(fs::write(path, serialize_model(model)?)?)
}

/// Read a `.dpnq` file.
pub fn read_model(path: &Path) -> Result<CompressedModel, FormatError> {
    deserialize_model(&fs::read(path)?)
}
